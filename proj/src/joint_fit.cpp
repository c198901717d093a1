#include "molext/errors.hpp"
#include "molext/fitting.hpp"
#include "molext/kernels.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

namespace molext {

using cd = std::complex<double>;

namespace residuals {

JonesField JointPolar::field(double chi, double delta) {
  return {cd(std::cos(chi), 0.0), std::sin(chi) * std::polar(1.0, delta)};
}

JointPolar::JointPolar(const AnalyzerScan& scan, const TransmissionFixed& fixed, Weighting w)
    : scan_(scan), fixed_(fixed) {
  scan.validate();
  for (const auto& s : scan.spectra) {
    inv_sigma_.push_back(weights_for(s, w));
    total_ += s.size();
  }
}

void JointPolar::evaluate(std::span<const double> x, std::span<double> r, Eigen::MatrixXd* jac) const {
  const double nu21 = x[0], ie = x[1], rho = x[2], phi0 = x[3];
  const double ct = std::cos(x[4]), st = std::sin(x[4]);
  const double cm = std::cos(x[6]), sm = std::sin(x[6]);
  const cd et = std::polar(1.0, x[5]);
  const cd em = std::polar(1.0, x[7]);
  const cd e0 = std::polar(1.0, phi0);
  const cd I(0.0, 1.0);

  kernels::LineTerms terms;
  terms.nu21 = nu21;
  terms.gamma = fixed_.gamma;
  terms.incoherent_scale = fixed_.gamma / (fixed_.alpha * fixed_.gamma0);
  terms.incoherent_slope = 1.0 / (fixed_.alpha * fixed_.gamma0);

  std::size_t offset = 0;
  for (std::size_t k = 0; k < scan_.size(); ++k) {
    const auto& spec = scan_.spectra[k];
    const auto& w = inv_sigma_[k];
    const std::size_t n = spec.size();
    const double c = std::cos(scan_.thetas[k]), s = std::sin(scan_.thetas[k]);

    const cd t = ct * c + st * et * s;
    const cd m = cm * c + sm * em * s;
    terms.baseline = ie * std::norm(t);
    terms.incoherent = ie * rho * rho * std::norm(m);
    const cd X = ie * rho * e0 * m * std::conj(t);
    terms.ext_re = X.real();
    terms.ext_im = X.imag();

    std::vector<double> model(n);
    kernels::transmission(terms, spec.detunings, model);
    for (std::size_t i = 0; i < n; ++i) r[offset + i] = (model[i] - spec.values[i]) * w[i];

    if (jac) {
      std::vector<double> inc(n), er(n), ei(n), dnu(n);
      kernels::transmission_basis(terms, spec.detunings, {inc, er, ei, dnu, {}});

      const cd dt_chi = -st * c + ct * et * s;
      const cd dt_delta = I * st * et * s;
      const cd dm_chi = -sm * c + cm * em * s;
      const cd dm_delta = I * sm * em * s;

      struct Coef {
        double dB, dW;
        cd dX;
      };
      const Coef coefs[6] = {
          {0.0, 2.0 * ie * rho * std::norm(m), ie * e0 * m * std::conj(t)}, // rho
          {0.0, 0.0, I * X},                                               // phi0
          {2.0 * ie * std::real(std::conj(t) * dt_chi), 0.0, ie * rho * e0 * m * std::conj(dt_chi)},
          {2.0 * ie * std::real(std::conj(t) * dt_delta), 0.0, ie * rho * e0 * m * std::conj(dt_delta)},
          {0.0, 2.0 * ie * rho * rho * std::real(std::conj(m) * dm_chi), ie * rho * e0 * dm_chi * std::conj(t)},
          {0.0, 2.0 * ie * rho * rho * std::real(std::conj(m) * dm_delta), ie * rho * e0 * dm_delta * std::conj(t)},
      };
      for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(offset + i);
        (*jac)(row, 0) = dnu[i] * w[i];
        (*jac)(row, 1) = (model[i] / ie) * w[i];
        for (int j = 0; j < 6; ++j) {
          const auto& cf = coefs[j];
          (*jac)(row, 2 + j) = (cf.dB + cf.dW * inc[i] + cf.dX.real() * er[i] + cf.dX.imag() * ei[i]) * w[i];
        }
      }
    }
    offset += n;
  }
}

} // namespace residuals

namespace {

std::pair<double, double> jones_angles(const JonesField& f) {
  f.validate();
  return {std::atan2(std::abs(f.ey), std::abs(f.ex)), std::arg(f.ey) - std::arg(f.ex)};
}

// Removes the global phase so that ex is real and non-negative.
JonesField gauge_fixed(const JonesField& f) {
  const double n = std::sqrt(f.power());
  const cd rot = std::abs(f.ex) > 0.0 ? std::conj(f.ex) / std::abs(f.ex) : std::conj(f.ey) / std::abs(f.ey);
  return {f.ex * rot / n, f.ey * rot / n};
}

std::size_t distinct_angles(const std::vector<double>& thetas) {
  std::vector<double> seen;
  for (double t : thetas) {
    bool dup = false;
    for (double s : seen) {
      const double d = std::abs(t - s);
      if (std::min(d, kPi - d) < 1e-9) dup = true;
    }
    if (!dup) seen.push_back(t);
  }
  return seen.size();
}

} // namespace

JointFitResult joint_fit_polar(const AnalyzerScan& scan, const JonesField& e_tip_guess,
                               const JonesField& e_mol_guess, const TransmissionFixed& fixed,
                               const FitConfig& cfg) {
  cfg.validate();
  scan.validate();
  if (scan.size() < 4 || distinct_angles(scan.thetas) < 4)
    throw DegenerateError("joint_fit_polar: need at least 4 distinct analyzer angles");
  for (const auto& s : scan.spectra) s.validate();

  auto [chi_t, delta_t] = jones_angles(e_tip_guess);
  auto [chi_m, delta_m] = jones_angles(e_mol_guess);
  const auto t_of = [&](double theta) {
    return std::cos(chi_t) * std::cos(theta) + std::sin(chi_t) * std::polar(1.0, delta_t) * std::sin(theta);
  };
  const auto m_of = [&](double theta) {
    return std::cos(chi_m) * std::cos(theta) + std::sin(chi_m) * std::polar(1.0, delta_m) * std::sin(theta);
  };

  // I_e from per-angle baselines against the guessed tip projection.
  std::vector<double> baselines;
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < scan.size(); ++k) {
    const double b = estimate_baseline(scan.spectra[k], 0.2).i_e;
    baselines.push_back(b);
    const double f = std::norm(t_of(scan.thetas[k]));
    num += b * f;
    den += f * f;
  }
  const double ie0 = den > 0.0 && num > 0.0 ? num / den : *std::max_element(baselines.begin(), baselines.end());

  // nu21, rho, phi0: for a trial nu21 the extinction term is linear in
  // rho e^{i phi0}; the incoherent term is neglected for the guess.
  std::size_t widest = 0;
  for (std::size_t k = 1; k < scan.size(); ++k)
    if (scan.spectra[k].size() > scan.spectra[widest].size()) widest = k;
  const auto& cand = scan.spectra[widest].detunings;
  double best_sse = std::numeric_limits<double>::infinity();
  double best_nu = cand.front();
  cd best_u(0.0, 0.0);
  for (double nu : cand) {
    Eigen::Matrix2d A = Eigen::Matrix2d::Zero();
    Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
    double yy = 0.0;
    for (std::size_t k = 0; k < scan.size(); ++k) {
      const auto& s = scan.spectra[k];
      const cd t = t_of(scan.thetas[k]);
      const cd Z = ie0 * m_of(scan.thetas[k]) * std::conj(t);
      const double bk = ie0 * std::norm(t);
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double d = s.detunings[i] - nu;
        const double L = 1.0 / (d * d + 0.25 * fixed.gamma * fixed.gamma);
        const double er = -2.0 * d * L, ei = -fixed.gamma * L;
        const Eigen::Vector2d col(Z.real() * er + Z.imag() * ei, -Z.imag() * er + Z.real() * ei);
        const double y = s.values[i] - bk;
        A += col * col.transpose();
        rhs += col * y;
        yy += y * y;
      }
    }
    const Eigen::Vector2d u = A.ldlt().solve(rhs);
    const double sse = yy - 2.0 * u.dot(rhs) + u.dot(A * u);
    if (std::isfinite(sse) && sse < best_sse) {
      best_sse = sse;
      best_nu = nu;
      best_u = cd(u(0), u(1));
    }
  }
  double rho0 = std::abs(best_u);
  if (!(rho0 > 0.0)) rho0 = 1e-3 * fixed.gamma;

  Eigen::VectorXd x0(8);
  x0 << best_nu, ie0, rho0, canonical_phase(std::arg(best_u)), chi_t, canonical_phase(delta_t), chi_m,
      canonical_phase(delta_m);

  const std::vector<std::string> names{"nu21",    "i_e",       "rho",     "phi0",
                                       "tip_chi", "tip_delta", "mol_chi", "mol_delta"};
  std::vector<ParameterBounds> bounds{ParameterBounds{},
                                      ParameterBounds::at_least(1e-12),
                                      ParameterBounds::at_least(0.0),
                                      ParameterBounds::phase(0.0, kTwoPi),
                                      ParameterBounds{},
                                      ParameterBounds::phase(0.0, kTwoPi),
                                      ParameterBounds{},
                                      ParameterBounds::phase(0.0, kTwoPi)};
  for (std::size_t i = 0; i < names.size(); ++i)
    if (auto it = cfg.bounds.find(names[i]); it != cfg.bounds.end()) bounds[i] = it->second;

  const residuals::JointPolar model(scan, fixed, cfg.weighting);
  const auto rep = levenberg_marquardt(model, x0, bounds, cfg.solver());

  JointFitResult out;
  const JonesField tip = residuals::JointPolar::field(rep.x(4), rep.x(5));
  const JonesField mol = residuals::JointPolar::field(rep.x(6), rep.x(7));
  out.theta_ref = max_intensity_angle(tip);
  const cd t_ref = project(tip, out.theta_ref);
  const cd m_ref = project(mol, out.theta_ref);
  out.base.i_e = rep.x(1);
  out.base.c_amp = std::abs(m_ref) > 0.0 ? rep.x(2) * std::abs(m_ref) / std::abs(t_ref) : 0.0;
  out.base.psi = canonical_phase(rep.x(3) + std::arg(m_ref) - std::arg(t_ref));
  out.e_tip = gauge_fixed(tip);
  out.e_mol = gauge_fixed(mol);

  auto& fr = out.fit;
  fr.model = FitModel::JointPolar;
  for (std::size_t i = 0; i < names.size(); ++i)
    fr.params.push_back({names[i], i == 0 ? "MHz" : i == 1 ? "cps" : i == 2 ? "MHz" : "rad",
                         rep.x(static_cast<Eigen::Index>(i)), 0.0, true});

  // covariance over the free parameters
  const auto n = static_cast<Eigen::Index>(model.residual_count());
  Eigen::VectorXd r(n);
  Eigen::MatrixXd jac(n, 8);
  model.evaluate(std::span<const double>(rep.x.data(), 8), std::span<double>(r.data(), static_cast<std::size_t>(n)),
                 &jac);
  const auto cov = covariance_from_jacobian(jac, r.squaredNorm());
  fr.covariance = cov.matrix;
  fr.reduced_chi2 = cov.reduced_chi2;
  fr.covariance_singular = cov.singular;
  for (std::size_t i = 0; i < 8; ++i)
    fr.params[i].sigma = std::sqrt(std::max(0.0, cov.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i))));
  if (cov.singular) fr.warnings.push_back("singular normal matrix: covariance from pseudo-inverse");

  double ss = 0.0;
  std::size_t row = 0;
  for (std::size_t k = 0; k < scan.size(); ++k) {
    const auto w = residuals::weights_for(scan.spectra[k], cfg.weighting);
    for (std::size_t i = 0; i < scan.spectra[k].size(); ++i, ++row) {
      const double resid = r(static_cast<Eigen::Index>(row)) / w[i];
      ss += resid * resid;
    }
  }
  fr.residual_rms = std::sqrt(ss / static_cast<double>(n));
  fr.iterations = rep.iterations;
  fr.converged = rep.converged;
  fr.status = rep.status;
  fr.cost_history = rep.cost_history;
  if (!rep.converged) fr.warnings.push_back("solver did not converge: " + rep.status);

  const auto tip_e = ellipse_of(out.e_tip);
  const auto mol_e = ellipse_of(out.e_mol);
  fr.params.push_back({"c_amp_ref", "MHz", out.base.c_amp, 0.0, false});
  fr.params.push_back({"psi_ref", "rad", out.base.psi, 0.0, false});
  fr.params.push_back({"theta_ref", "rad", out.theta_ref, 0.0, false});
  fr.params.push_back({"tip_axis", "rad", tip_e.axis_angle, 0.0, false});
  fr.params.push_back({"tip_ellipticity", "rad", tip_e.ellipticity, 0.0, false});
  fr.params.push_back({"mol_axis", "rad", mol_e.axis_angle, 0.0, false});
  fr.params.push_back({"mol_ellipticity", "rad", mol_e.ellipticity, 0.0, false});
  fr.params.push_back({"mol_extinction_ratio", "", extinction_ratio(out.e_mol), 0.0, false});
  fr.params.push_back({"gamma", "MHz", fixed.gamma, 0.0, false});
  fr.params.push_back({"alpha", "", fixed.alpha, 0.0, false});
  fr.params.push_back({"gamma0", "MHz", fixed.gamma0, 0.0, false});
  return out;
}

} // namespace molext
