#include "molext/lineshape.hpp"

#include "molext/errors.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace molext {

void EmitterParams::validate() const {
  if (!std::isfinite(nu21)) throw DomainError("emitter: nu21 must be finite");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw DomainError("emitter: gamma must be > 0");
  if (!(gamma0 > 0.0) || !std::isfinite(gamma0)) throw DomainError("emitter: gamma0 must be > 0");
  if (gamma < gamma0)
    throw DomainError("emitter: gamma (" + std::to_string(gamma) + ") below radiative width gamma0 (" +
                      std::to_string(gamma0) + ")");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("emitter: alpha must lie in (0, 1]");
  if (!(omega >= 0.0)) throw DomainError("emitter: omega must be >= 0");
  if (!(k_ratio >= 1.0)) throw DomainError("emitter: k_ratio must be >= 1");
}

EmitterParams EmitterParams::with_unknown_gamma0(EmitterParams p) {
  p.gamma0 = p.gamma;
  p.gamma0_assumed = true;
  return p;
}

void ModalCoupling::validate() const {
  if (!(c_amp >= 0.0) || !std::isfinite(c_amp)) throw DomainError("coupling: c_amp must be >= 0");
  if (!std::isfinite(psi)) throw DomainError("coupling: psi must be finite");
  if (!(i_e > 0.0) || !std::isfinite(i_e)) throw DomainError("coupling: i_e must be > 0");
}

double canonical_phase(double psi) {
  double r = std::fmod(psi, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

double linewidth_from_lifetime(double tau_ns) {
  if (!(tau_ns > 0.0)) throw DomainError("lifetime must be > 0");
  if (std::isinf(tau_ns)) return 0.0;
  // 1 / (2 pi tau[s]) in Hz -> MHz: 1e9 / (2 pi tau_ns) / 1e6
  return 1.0e3 / (kTwoPi * tau_ns);
}

double weak_field_lorentzian(double delta, double gamma) {
  if (!(gamma > 0.0)) throw DomainError("weak_field_lorentzian: gamma must be > 0");
  return 1.0 / (delta * delta + 0.25 * gamma * gamma);
}

double saturation_term(const EmitterParams& p) {
  return p.omega * p.omega * (p.gamma / (2.0 * p.gamma0)) * p.k_ratio;
}

double saturation_lorentzian(const EmitterParams& p, double delta) {
  p.validate();
  return 1.0 / (delta * delta + 0.25 * p.gamma * p.gamma + saturation_term(p));
}

std::complex<double> rho21(const EmitterParams& p, double delta) {
  const double L = saturation_lorentzian(p, delta);
  return 0.5 * p.omega * std::complex<double>(-delta, 0.5 * p.gamma) * L;
}

kernels::LineTerms transmission_terms(const EmitterParams& p, const ModalCoupling& m, LineshapeForm form) {
  kernels::LineTerms t;
  t.nu21 = p.nu21;
  t.gamma = p.gamma;
  if (form == LineshapeForm::Saturation) {
    t.sat = saturation_term(p);
    t.sat_slope = p.omega * p.omega * p.k_ratio / (2.0 * p.gamma0);
  }
  t.incoherent_scale = p.gamma / (p.alpha * p.gamma0);
  t.incoherent_slope = 1.0 / (p.alpha * p.gamma0);
  t.baseline = m.i_e;
  t.incoherent = m.i_e * m.c_amp * m.c_amp;
  t.ext_re = m.i_e * m.c_amp * std::cos(m.psi);
  t.ext_im = m.i_e * m.c_amp * std::sin(m.psi);
  return t;
}

Spectrum detected_spectrum(const EmitterParams& p, const ModalCoupling& m, std::span<const double> grid,
                           LineshapeForm form) {
  p.validate();
  m.validate();
  require_increasing(grid, "detected_spectrum");
  Spectrum s;
  s.detunings.assign(grid.begin(), grid.end());
  s.values.resize(grid.size());
  kernels::transmission(transmission_terms(p, m, form), grid, s.values);
  return s;
}

Spectrum visibility(const Spectrum& spec, double i_e) {
  if (!(i_e > 0.0)) throw DomainError("visibility: i_e must be > 0");
  Spectrum v;
  v.detunings = spec.detunings;
  v.values.resize(spec.values.size());
  for (std::size_t i = 0; i < spec.values.size(); ++i) v.values[i] = (spec.values[i] - i_e) / i_e;
  if (spec.sigma) {
    v.sigma.emplace(spec.sigma->size());
    for (std::size_t i = 0; i < spec.sigma->size(); ++i) (*v.sigma)[i] = (*spec.sigma)[i] / i_e;
  }
  v.metadata = spec.metadata;
  return v;
}

double resonance_visibility(const EmitterParams& p, const ModalCoupling& m) {
  p.validate();
  m.validate();
  const double c = m.c_amp;
  return 4.0 * c * c / (p.alpha * p.gamma * p.gamma0) - 4.0 * c / p.gamma * std::sin(m.psi);
}

double optimal_dip_coupling(const EmitterParams& p, double psi) {
  p.validate();
  const double s = std::sin(psi);
  return s > 0.0 ? 0.5 * p.alpha * p.gamma0 * s : 0.0;
}

double max_resonance_dip(const EmitterParams& p, double psi) {
  p.validate();
  const double s = std::sin(psi);
  return s > 0.0 ? p.alpha * p.gamma0 * s * s / p.gamma : 0.0;
}

double absorption_cross_section(double lambda_nm) {
  if (!(lambda_nm > 0.0)) throw DomainError("wavelength must be > 0");
  const double lambda_m = lambda_nm * 1e-9;
  return 3.0 * lambda_m * lambda_m / kTwoPi;
}

double enhancement_factor(const EmitterParams& p) {
  p.validate();
  return p.gamma / (p.alpha * p.gamma0);
}

Spectrum fluorescence_spectrum(const EmitterParams& p, double amp, std::span<const double> grid,
                               double background, LineshapeForm form) {
  p.validate();
  if (!(amp >= 0.0)) throw DomainError("fluorescence_spectrum: amplitude must be >= 0");
  require_increasing(grid, "fluorescence_spectrum");
  kernels::LorentzTerms t;
  t.nu21 = p.nu21;
  t.gamma = p.gamma;
  if (form == LineshapeForm::Saturation) t.sat = saturation_term(p);
  t.amplitude = amp;
  t.background = background;
  Spectrum s;
  s.detunings.assign(grid.begin(), grid.end());
  s.values.resize(grid.size());
  kernels::lorentzian(t, grid, s.values);
  return s;
}

} // namespace molext
