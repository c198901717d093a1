#pragma once

// Closed-form resonance model of a single emitter probed through the
// interference of its coherently scattered field with the excitation field.
// Units: frequencies and rates in MHz, intensities in counts per second.

#include "molext/kernels.hpp"
#include "molext/spectrum.hpp"

#include <complex>
#include <span>

namespace molext {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Spectroscopic constants of one emitter.
struct EmitterParams {
  double nu21 = 0.0;    // zero-phonon transition frequency
  double gamma = 35.0;  // homogeneous FWHM
  double gamma0 = 8.0;  // radiative FWHM
  double alpha = 0.25;  // Debye-Waller factor
  double omega = 0.0;   // Rabi frequency
  double k_ratio = 1.0; // K = 1 + k23 / (2 k31)
  // Set when gamma0 was unknown and gamma0 = gamma was substituted.
  bool gamma0_assumed = false;

  // Throws DomainError when an invariant is violated.
  void validate() const;

  // Substitutes gamma0 = gamma and records the substitution.
  static EmitterParams with_unknown_gamma0(EmitterParams p);
};

// Interference parameters at the detector. c_amp folds the Debye-Waller
// factor, the squared dipole moment and the modal ratio |f/g| into one
// coupling in MHz; psi is the phase of the molecular field relative to the
// excitation field.
struct ModalCoupling {
  double c_amp = 0.0;
  double psi = 0.0; // [0, 2 pi)
  double i_e = 1.0; // off-resonant intensity, cps

  void validate() const;
};

enum class LineshapeForm { WeakField, Saturation };

// Maps any angle into [0, 2 pi).
double canonical_phase(double psi);

// FWHM of a lifetime-limited line: 1 / (2 pi tau). tau in ns, result in MHz.
double linewidth_from_lifetime(double tau_ns);

double weak_field_lorentzian(double delta, double gamma);

// 1 / (Delta^2 + gamma^2/4 + Omega^2 (gamma / 2 gamma0) K).
double saturation_lorentzian(const EmitterParams& p, double delta);

// Saturation term Omega^2 (gamma / 2 gamma0) K added to the denominator.
double saturation_term(const EmitterParams& p);

// Steady-state coherence rho21 = Omega (-Delta + i gamma/2) / 2 * L.
std::complex<double> rho21(const EmitterParams& p, double delta);

// Detected intensity on a scan grid (absolute frequencies, Delta = f - nu21):
//   I_d = I_e [1 + (C^2/alpha)(gamma/gamma0) L - 2 C L (Delta cos psi + gamma/2 sin psi)]
Spectrum detected_spectrum(const EmitterParams& p, const ModalCoupling& m, std::span<const double> grid,
                           LineshapeForm form = LineshapeForm::WeakField);

// Pointwise (I_d - I_e) / I_e. Sigma, if present, is scaled by 1/I_e.
Spectrum visibility(const Spectrum& spec, double i_e);

// Visibility at Delta = 0 in the weak-field limit:
//   4 C^2 / (alpha gamma gamma0) - (4 C / gamma) sin psi.
double resonance_visibility(const EmitterParams& p, const ModalCoupling& m);

// Deepest resonance dip reachable by tuning C at fixed phase: for sin psi > 0
// the minimum of resonance_visibility sits at C* = alpha gamma0 sin psi / 2
// and equals -alpha gamma0 sin^2 psi / gamma. Returns the dip magnitude
// (0 when sin psi <= 0).
double max_resonance_dip(const EmitterParams& p, double psi);
double optimal_dip_coupling(const EmitterParams& p, double psi);

// 3 lambda^2 / (2 pi); lambda in nm, result in m^2.
double absorption_cross_section(double lambda_nm);

// gamma / (alpha gamma0): gain in resonant visibility an ideal, lifetime
// limited two-level emitter would give over this one.
double enhancement_factor(const EmitterParams& p);

// amp * L(nu) + background, the fluorescence excitation lineshape.
Spectrum fluorescence_spectrum(const EmitterParams& p, double amp, std::span<const double> grid,
                               double background = 0.0, LineshapeForm form = LineshapeForm::WeakField);

// Kernel coefficients for detected_spectrum.
kernels::LineTerms transmission_terms(const EmitterParams& p, const ModalCoupling& m,
                                      LineshapeForm form = LineshapeForm::WeakField);

} // namespace molext
