#pragma once

// Independent reference evaluations used as test oracles. Written straight
// from the physics, without touching the library's kernels.

#include <cmath>
#include <complex>

namespace oracle {

inline double lorentz(double delta, double gamma) { return 1.0 / (delta * delta + gamma * gamma / 4.0); }

// Detected intensity, term by term.
inline double intensity(double nu, double nu21, double gamma, double gamma0, double alpha, double c, double psi,
                        double ie, double sat = 0.0) {
  const double d = nu - nu21;
  const double l = 1.0 / (d * d + gamma * gamma / 4.0 + sat);
  return ie * (1.0 + (c * c / alpha) * (gamma / gamma0) * l - 2.0 * c * l * (d * std::cos(psi) + gamma / 2.0 * std::sin(psi)));
}

// Extinction term through the complex coherence route.
inline double extinction_via_coherence(double delta, double gamma, double c, double psi, double ie) {
  const std::complex<double> a(-delta, gamma / 2.0);
  return 2.0 * c * lorentz(delta, gamma) * ie * std::real(std::polar(1.0, psi) * a);
}

} // namespace oracle
