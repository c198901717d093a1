#include "molext/polarization.hpp"

#include "molext/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>

#include <cmath>
#include <limits>

namespace molext {

void JonesField::validate() const {
  if (!std::isfinite(power()) || !(power() > 0.0)) throw DomainError("jones field: zero or non-finite power");
}

JonesField JonesField::from_ellipse(double axis_angle, double ellipticity, double amplitude, double phase) {
  const double c = std::cos(axis_angle), s = std::sin(axis_angle);
  const std::complex<double> major(std::cos(ellipticity), 0.0);
  const std::complex<double> minor(0.0, std::sin(ellipticity));
  const std::complex<double> g = std::polar(amplitude, phase);
  return {g * (c * major - s * minor), g * (s * major + c * minor)};
}

Ellipse ellipse_of(const JonesField& f) {
  const double s0 = f.power();
  const double s1 = std::norm(f.ex) - std::norm(f.ey);
  const double s2 = 2.0 * std::real(f.ex * std::conj(f.ey));
  const double s3 = 2.0 * std::imag(std::conj(f.ex) * f.ey);
  Ellipse e;
  e.amplitude = std::sqrt(s0);
  e.axis_angle = fold_angle(0.5 * std::atan2(s2, s1));
  e.ellipticity = s0 > 0.0 ? 0.5 * std::asin(std::clamp(s3 / s0, -1.0, 1.0)) : 0.0;
  return e;
}

double extinction_ratio(const JonesField& f) {
  const double s0 = f.power();
  const double s1 = std::norm(f.ex) - std::norm(f.ey);
  const double s2 = 2.0 * std::real(f.ex * std::conj(f.ey));
  const double lin = std::hypot(s1, s2);
  const double lo = s0 - lin;
  if (lo <= s0 * 1e-15) return std::numeric_limits<double>::infinity();
  return (s0 + lin) / lo;
}

double ellipticity_for_extinction_ratio(double ratio) {
  if (!(ratio >= 1.0)) throw DomainError("extinction ratio must be >= 1");
  return std::atan(1.0 / std::sqrt(ratio));
}

double max_intensity_angle(const JonesField& f) { return ellipse_of(f).axis_angle; }

double fold_angle(double theta) {
  double r = std::fmod(theta, kPi);
  if (r < 0.0) r += kPi;
  if (r >= kPi) r = 0.0;
  return r;
}

std::complex<double> project(const JonesField& f, double theta) {
  return f.ex * std::cos(theta) + f.ey * std::sin(theta);
}

std::vector<double> malus_curve(const JonesField& f, std::span<const double> thetas) {
  if (thetas.empty()) throw ArgumentError("malus_curve: no angles");
  std::vector<double> out(thetas.size());
  for (std::size_t i = 0; i < thetas.size(); ++i) out[i] = std::norm(project(f, thetas[i]));
  return out;
}

MalusFit fit_malus(std::span<const double> thetas, std::span<const double> intensities) {
  if (thetas.size() != intensities.size()) throw ArgumentError("fit_malus: length mismatch");
  if (thetas.size() < 3) throw ArgumentError("fit_malus: need at least 3 angles");
  const auto n = static_cast<Eigen::Index>(thetas.size());
  Eigen::MatrixXd A(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = thetas[static_cast<std::size_t>(i)];
    A(i, 0) = 1.0;
    A(i, 1) = std::cos(2.0 * t);
    A(i, 2) = std::sin(2.0 * t);
    y(i) = intensities[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd x = A.colPivHouseholderQr().solve(y);
  MalusFit fit;
  fit.mean = x(0);
  fit.modulation = std::hypot(x(1), x(2));
  fit.axis_angle = fold_angle(0.5 * std::atan2(x(2), x(1)));
  const double lo = fit.mean - fit.modulation;
  fit.extinction_ratio = lo > 0.0 ? (fit.mean + fit.modulation) / lo : std::numeric_limits<double>::infinity();
  fit.rms_residual = std::sqrt((A * x - y).squaredNorm() / static_cast<double>(n));
  return fit;
}

EffectiveCoupling effective_coupling(const JonesField& e_tip, const JonesField& e_mol, double theta,
                                     const ModalCoupling& base, std::optional<double> theta_ref) {
  e_tip.validate();
  e_mol.validate();
  base.validate();
  const double ref = theta_ref ? *theta_ref : max_intensity_angle(e_tip);
  const auto t_ref = project(e_tip, ref);
  const auto m_ref = project(e_mol, ref);
  if (std::norm(t_ref) < kCrossedThreshold * e_tip.power() || std::norm(m_ref) == 0.0)
    throw DomainError("effective_coupling: reference angle extinguishes a field");

  // C(theta) = rho |m/t|, psi(theta) = phi0 + arg m - arg t
  const double rho = base.c_amp * std::abs(t_ref) / std::abs(m_ref);
  const double phi0 = base.psi - std::arg(m_ref) + std::arg(t_ref);

  const auto t = project(e_tip, theta);
  const auto m = project(e_mol, theta);
  const double scale = base.i_e / e_tip.power();

  EffectiveCoupling eff;
  eff.tip_fraction = std::norm(t) / e_tip.power();
  eff.direct_emission = eff.tip_fraction < kCrossedThreshold;
  eff.incoherent_rate = scale * rho * rho * std::norm(m);
  eff.extinction_rate = scale * rho * std::polar(1.0, phi0) * m * std::conj(t);

  eff.coupling.i_e = base.i_e * eff.tip_fraction;
  if (std::abs(t) > 0.0) {
    eff.coupling.c_amp = rho * std::abs(m) / std::abs(t);
    eff.coupling.psi = canonical_phase(phi0 + std::arg(m) - std::arg(t));
  } else {
    eff.coupling.c_amp = std::numeric_limits<double>::infinity();
    eff.coupling.psi = canonical_phase(phi0 + std::arg(m));
  }
  return eff;
}

kernels::LineTerms analyzer_terms(const EmitterParams& p, const EffectiveCoupling& eff, LineshapeForm form) {
  kernels::LineTerms t = transmission_terms(p, ModalCoupling{0.0, 0.0, 1.0}, form);
  t.baseline = eff.coupling.i_e;
  t.incoherent = eff.incoherent_rate;
  t.ext_re = eff.extinction_rate.real();
  t.ext_im = eff.extinction_rate.imag();
  return t;
}

void AnalyzerScan::validate() const {
  const auto n = thetas.size();
  if (spectra.size() != n || i_e_vs_theta.size() != n)
    throw ArgumentError("analyzer scan: per-angle lists differ in length");
  for (double t : thetas)
    if (!(t >= 0.0 && t < kPi)) throw ArgumentError("analyzer scan: angle outside [0, pi)");
}

AnalyzerScan analyzer_scan(const EmitterParams& p, const ModalCoupling& base, const JonesField& e_tip,
                           const JonesField& e_mol, std::span<const double> thetas,
                           std::span<const double> grid, std::optional<double> theta_ref,
                           LineshapeForm form) {
  p.validate();
  if (thetas.empty()) throw ArgumentError("analyzer_scan: no angles");
  require_increasing(grid, "analyzer_scan");
  AnalyzerScan scan;
  for (double theta : thetas) {
    const auto eff = effective_coupling(e_tip, e_mol, theta, base, theta_ref);
    Spectrum s;
    s.detunings.assign(grid.begin(), grid.end());
    s.values.resize(grid.size());
    kernels::transmission(analyzer_terms(p, eff, form), grid, s.values);
    scan.thetas.push_back(fold_angle(theta));
    scan.spectra.push_back(std::move(s));
    scan.i_e_vs_theta.push_back(eff.coupling.i_e);
    scan.couplings.push_back(eff.coupling);
    scan.direct_emission.push_back(eff.direct_emission);
  }
  return scan;
}

} // namespace molext
