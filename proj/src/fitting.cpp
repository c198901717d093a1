#include "molext/fitting.hpp"

#include "molext/csv.hpp"
#include "molext/errors.hpp"
#include "molext/kernels.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <complex>
#include <memory>
#include <numeric>

namespace molext {

void FitConfig::validate() const {
  if (max_iters < 1) throw ArgumentError("fit config: max_iters must be >= 1");
  if (!(ftol > 0.0) || !(xtol > 0.0)) throw ArgumentError("fit config: tolerances must be > 0");
  if (!(damping_init > 0.0)) throw ArgumentError("fit config: damping_init must be > 0");
  for (const auto& [name, b] : bounds) {
    if (b.periodic ? !(b.period > 0.0) : !(b.lower <= b.upper))
      throw ArgumentError("fit config: inconsistent bounds for '" + name + "'");
  }
}

std::string_view fit_model_name(FitModel m) {
  switch (m) {
  case FitModel::Fluorescence: return "fluorescence";
  case FitModel::Transmission: return "transmission";
  case FitModel::JointPolar: return "joint_polar";
  }
  return "unknown";
}

const FitParameter& FitResult::param(std::string_view name) const {
  for (const auto& p : params)
    if (p.name == name) return p;
  throw ArgumentError("fit result has no parameter '" + std::string(name) + "'");
}

std::vector<std::string> FitResult::free_names() const {
  std::vector<std::string> out;
  for (const auto& p : params)
    if (p.free) out.push_back(p.name);
  return out;
}

namespace residuals {

std::vector<double> weights_for(const Spectrum& spec, Weighting w) {
  std::vector<double> inv(spec.size(), 1.0);
  const bool have = spec.sigma.has_value() && spec.sigma->size() == spec.size();
  if (w == Weighting::Sigma && !have) throw ArgumentError("sigma weighting requested but spectrum has no sigma");
  if (w == Weighting::None || !have) return inv;
  double floor = std::numeric_limits<double>::infinity();
  for (double s : *spec.sigma)
    if (s > 0.0 && std::isfinite(s)) floor = std::min(floor, s);
  if (!std::isfinite(floor)) return inv; // all zero: noiseless data
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const double s = (*spec.sigma)[i];
    inv[i] = 1.0 / ((s > 0.0 && std::isfinite(s)) ? s : floor);
  }
  return inv;
}

Fluorescence::Fluorescence(const Spectrum& spec, Weighting w) : spec_(spec), inv_sigma_(weights_for(spec, w)) {}

void Fluorescence::evaluate(std::span<const double> x, std::span<double> r, Eigen::MatrixXd* jac) const {
  const std::size_t n = spec_.size();
  kernels::LorentzTerms t;
  t.nu21 = x[0];
  t.gamma = x[1];
  t.amplitude = x[2];
  t.background = x[3];
  std::vector<double> model(n);
  kernels::lorentzian(t, spec_.detunings, model);
  for (std::size_t i = 0; i < n; ++i) r[i] = (model[i] - spec_.values[i]) * inv_sigma_[i];
  if (!jac) return;
  std::vector<double> d_amp(n), d_nu(n), d_g(n);
  kernels::lorentzian_jacobian(t, spec_.detunings, {d_amp, d_nu, d_g});
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const double w = inv_sigma_[i];
    (*jac)(row, 0) = d_nu[i] * w;
    (*jac)(row, 1) = d_g[i] * w;
    (*jac)(row, 2) = d_amp[i] * w;
    (*jac)(row, 3) = w;
  }
}

Transmission::Transmission(const Spectrum& spec, const TransmissionFixed& fixed, Weighting w, bool free_gamma)
    : spec_(spec), fixed_(fixed), free_gamma_(free_gamma), inv_sigma_(weights_for(spec, w)) {}

void Transmission::evaluate(std::span<const double> x, std::span<double> r, Eigen::MatrixXd* jac) const {
  const std::size_t n = spec_.size();
  const double nu21 = x[0], c = x[1], psi = x[2], ie = x[3];
  const double gamma = free_gamma_ ? x[4] : fixed_.gamma;
  const double cs = std::cos(psi), sn = std::sin(psi);

  kernels::LineTerms t;
  t.nu21 = nu21;
  t.gamma = gamma;
  t.incoherent_scale = gamma / (fixed_.alpha * fixed_.gamma0);
  t.incoherent_slope = 1.0 / (fixed_.alpha * fixed_.gamma0);
  t.baseline = ie;
  t.incoherent = ie * c * c;
  t.ext_re = ie * c * cs;
  t.ext_im = ie * c * sn;

  std::vector<double> model(n);
  kernels::transmission(t, spec_.detunings, model);
  for (std::size_t i = 0; i < n; ++i) r[i] = (model[i] - spec_.values[i]) * inv_sigma_[i];
  if (!jac) return;

  std::vector<double> inc(n), er(n), ei(n), dnu(n), dg;
  if (free_gamma_) dg.resize(n);
  kernels::transmission_basis(t, spec_.detunings, {inc, er, ei, dnu, dg});
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const double w = inv_sigma_[i];
    (*jac)(row, 0) = dnu[i] * w;
    (*jac)(row, 1) = (2.0 * ie * c * inc[i] + ie * cs * er[i] + ie * sn * ei[i]) * w;
    (*jac)(row, 2) = (-ie * c * sn * er[i] + ie * c * cs * ei[i]) * w;
    (*jac)(row, 3) = (model[i] / ie) * w;
    if (free_gamma_) (*jac)(row, 4) = dg[i] * w;
  }
}

} // namespace residuals

BaselineEstimate estimate_baseline(const Spectrum& spec, double wing_fraction) {
  if (spec.size() < 10) throw ArgumentError("estimate_baseline: need at least 10 points");
  if (spec.values.size() != spec.size()) throw ArgumentError("estimate_baseline: values length mismatch");
  if (!(wing_fraction > 0.0 && wing_fraction <= 0.5))
    throw ArgumentError("estimate_baseline: wing_fraction must lie in (0, 0.5]");
  const std::size_t n = spec.size();
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(wing_fraction * static_cast<double>(n))));
  std::vector<double> wing;
  wing.reserve(2 * k);
  for (std::size_t i = 0; i < k; ++i) {
    wing.push_back(spec.values[i]);
    wing.push_back(spec.values[n - 1 - i]);
  }
  BaselineEstimate est;
  est.points_used = wing.size();
  est.i_e = std::accumulate(wing.begin(), wing.end(), 0.0) / static_cast<double>(wing.size());
  double ss = 0.0;
  for (double v : wing) ss += (v - est.i_e) * (v - est.i_e);
  est.wing_std = wing.size() > 1 ? std::sqrt(ss / static_cast<double>(wing.size() - 1)) : 0.0;
  return est;
}

namespace {

std::vector<double> smooth3(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = std::min(v.size() - 1, i + 1);
    double s = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) s += v[j];
    out[i] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

std::vector<ParameterBounds> resolve_bounds(const std::vector<std::string>& names,
                                            std::vector<ParameterBounds> defaults, const FitConfig& cfg) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (auto it = cfg.bounds.find(names[i]); it != cfg.bounds.end()) defaults[i] = it->second;
  return defaults;
}

void check_finite(const Spectrum& spec) {
  for (double v : spec.values)
    if (!std::isfinite(v)) throw ArgumentError("spectrum contains non-finite values");
}

// Fills covariance, sigmas and diagnostics for the free parameters, which
// occupy the first x.size() entries of result.params.
void finish(FitResult& result, const ResidualModel& model, const SolverReport& rep,
            std::span<const double> data, std::span<const double> inv_sigma) {
  const auto n = static_cast<Eigen::Index>(model.residual_count());
  const auto p = static_cast<Eigen::Index>(model.parameter_count());
  Eigen::VectorXd r(n);
  Eigen::MatrixXd jac(n, p);
  model.evaluate(std::span<const double>(rep.x.data(), static_cast<std::size_t>(p)),
                 std::span<double>(r.data(), static_cast<std::size_t>(n)), &jac);
  const auto cov = covariance_from_jacobian(jac, r.squaredNorm());
  result.covariance = cov.matrix;
  result.reduced_chi2 = cov.reduced_chi2;
  result.covariance_singular = cov.singular;
  if (cov.singular) result.warnings.push_back("singular normal matrix: covariance from pseudo-inverse");
  for (Eigen::Index i = 0; i < p; ++i)
    result.params[static_cast<std::size_t>(i)].sigma = std::sqrt(std::max(0.0, cov.matrix(i, i)));
  double ss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double resid = r(i) / inv_sigma[static_cast<std::size_t>(i)];
    ss += resid * resid;
  }
  (void)data;
  result.residual_rms = std::sqrt(ss / static_cast<double>(n));
  result.iterations = rep.iterations;
  result.converged = rep.converged;
  result.status = rep.status;
  result.cost_history = rep.cost_history;
  if (!rep.converged) result.warnings.push_back("solver did not converge: " + rep.status);
}

// Linear least squares of y on the columns of A with row weights w.
// Returns coefficients and weighted sum of squared residuals.
std::pair<Eigen::VectorXd, double> weighted_lls(const Eigen::MatrixXd& A, const Eigen::VectorXd& y,
                                                const Eigen::VectorXd& w) {
  const Eigen::MatrixXd Aw = w.asDiagonal() * A;
  const Eigen::VectorXd yw = w.cwiseProduct(y);
  const Eigen::VectorXd x = Aw.colPivHouseholderQr().solve(yw);
  return {x, (Aw * x - yw).squaredNorm()};
}

} // namespace

FitResult fit_fluorescence(const Spectrum& spec, const FitConfig& cfg) {
  cfg.validate();
  spec.validate();
  check_finite(spec);
  const auto base = estimate_baseline(spec, 0.2);
  const auto sm = smooth3(spec.values);
  const auto peak_it = std::max_element(sm.begin(), sm.end());
  const auto peak_idx = static_cast<std::size_t>(peak_it - sm.begin());
  const double height = *peak_it - base.i_e;
  const double floor = std::max(3.0 * base.wing_std, 1e-12 * std::max(1.0, std::abs(base.i_e)));
  if (!(height > floor)) throw NoPeakError("fit_fluorescence: no peak above 3x wing noise");

  // half-maximum crossings for the width guess
  const double half = base.i_e + 0.5 * height;
  auto crossing = [&](int dir) {
    std::size_t i = peak_idx;
    while (true) {
      const std::size_t j = dir < 0 ? (i == 0 ? i : i - 1) : std::min(sm.size() - 1, i + 1);
      if (j == i) return spec.detunings[i];
      if (sm[j] <= half) {
        const double f = (sm[i] - half) / (sm[i] - sm[j]);
        return spec.detunings[i] + f * (spec.detunings[j] - spec.detunings[i]);
      }
      i = j;
    }
  };
  const double span = spec.detunings.back() - spec.detunings.front();
  double gamma0 = crossing(+1) - crossing(-1);
  if (!(gamma0 > 0.0)) gamma0 = span / 20.0;

  Eigen::VectorXd x0(4);
  x0 << spec.detunings[peak_idx], gamma0, height * gamma0 * gamma0 / 4.0, base.i_e;

  const std::vector<std::string> names{"nu21", "gamma", "amplitude", "background"};
  const auto bounds = resolve_bounds(
      names,
      {ParameterBounds{}, ParameterBounds::at_least(1e-9 * span), ParameterBounds::at_least(0.0), ParameterBounds{}},
      cfg);
  const residuals::Fluorescence model(spec, cfg.weighting);
  const auto rep = levenberg_marquardt(model, x0, bounds, cfg.solver());

  FitResult result;
  result.model = FitModel::Fluorescence;
  result.params = {{"nu21", "MHz", rep.x(0), 0.0, true},
                   {"gamma", "MHz", rep.x(1), 0.0, true},
                   {"amplitude", "cps*MHz^2", rep.x(2), 0.0, true},
                   {"background", "cps", rep.x(3), 0.0, true}};
  finish(result, model, rep, spec.values, residuals::weights_for(spec, cfg.weighting));
  return result;
}

std::pair<double, double> mirror_coupling(const TransmissionFixed& fixed, double c_amp, double psi) {
  const double u = fixed.alpha * fixed.gamma0 - c_amp * std::sin(psi);
  const double v = c_amp * std::cos(psi);
  return {std::hypot(u, v), canonical_phase(std::atan2(u, v))};
}

FitResult fit_transmission(const Spectrum& spec, const TransmissionFixed& fixed, const FitConfig& cfg) {
  cfg.validate();
  spec.validate();
  check_finite(spec);
  if (!(fixed.gamma > 0.0) || !(fixed.gamma0 > 0.0) || !(fixed.alpha > 0.0 && fixed.alpha <= 1.0))
    throw DomainError("fit_transmission: invalid fixed gamma/alpha/gamma0");

  const auto base = estimate_baseline(spec, 0.2);
  if (!(base.i_e > 0.0)) throw LowContrastError("fit_transmission: non-positive baseline");
  std::vector<double> v(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) v[i] = std::abs(spec.values[i] - base.i_e) / base.i_e;
  const auto vs = smooth3(v);
  const double contrast = *std::max_element(vs.begin(), vs.end());
  const double noise = base.wing_std / base.i_e;
  if (!(contrast > std::max(3.0 * noise, 1e-9)))
    throw LowContrastError("fit_transmission: resonant contrast below 3x wing noise");

  // Initial guess: for a trial nu21 the model is linear in
  // (I_e, I_e C^2, I_e C cos psi, I_e C sin psi); scan nu21 over the grid.
  const auto n = static_cast<Eigen::Index>(spec.size());
  const auto inv_sigma = residuals::weights_for(spec, cfg.weighting);
  const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(inv_sigma.data(), n);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(spec.values.data(), n);
  const double a = fixed.gamma / (fixed.alpha * fixed.gamma0);
  double best_sse = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_coef;
  double best_nu = spec.detunings[0];
  Eigen::MatrixXd A(n, 4);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double nu = spec.detunings[k];
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = spec.detunings[static_cast<std::size_t>(i)] - nu;
      const double L = 1.0 / (d * d + 0.25 * fixed.gamma * fixed.gamma);
      A(i, 0) = 1.0;
      A(i, 1) = a * L;
      A(i, 2) = -2.0 * d * L;
      A(i, 3) = -fixed.gamma * L;
    }
    auto [coef, sse] = weighted_lls(A, y, w);
    if (sse < best_sse) {
      best_sse = sse;
      best_coef = coef;
      best_nu = nu;
    }
  }
  const double ie0 = best_coef(0) > 0.0 ? best_coef(0) : base.i_e;
  const std::complex<double> ext(best_coef(2), best_coef(3));
  double c0 = std::abs(ext) / ie0;
  if (!(c0 > 0.0)) c0 = 1e-3 * fixed.gamma;

  Eigen::VectorXd x0(4);
  x0 << best_nu, c0, canonical_phase(std::arg(ext)), ie0;

  const std::vector<std::string> names{"nu21", "c_amp", "psi", "i_e"};
  const auto bounds = resolve_bounds(names,
                                     {ParameterBounds{}, ParameterBounds::at_least(0.0),
                                      ParameterBounds::phase(0.0, kTwoPi), ParameterBounds::at_least(1e-12)},
                                     cfg);
  const residuals::Transmission model(spec, fixed, cfg.weighting);
  auto rep = levenberg_marquardt(model, x0, bounds, cfg.solver());
  auto mirror = mirror_coupling(fixed, rep.x(1), rep.x(2));
  if (rep.x(1) * std::sin(rep.x(2)) > 0.5 * fixed.alpha * fixed.gamma0) {
    std::swap(mirror.first, rep.x(1));
    std::swap(mirror.second, rep.x(2));
  }

  FitResult result;
  result.model = FitModel::Transmission;
  result.params = {{"nu21", "MHz", rep.x(0), 0.0, true},
                   {"c_amp", "MHz", rep.x(1), 0.0, true},
                   {"psi", "rad", canonical_phase(rep.x(2)), 0.0, true},
                   {"i_e", "cps", rep.x(3), 0.0, true},
                   {"gamma", "MHz", fixed.gamma, 0.0, false},
                   {"alpha", "", fixed.alpha, 0.0, false},
                   {"gamma0", "MHz", fixed.gamma0, 0.0, false}};
  finish(result, model, rep, spec.values, inv_sigma);
  if (rep.x(1) == 0.0) result.warnings.push_back("coupling at lower bound C = 0: phase undetermined");
  else
    result.warnings.push_back("mirror solution C = " + csv::format_number(mirror.first) +
                              ", psi = " + csv::format_number(mirror.second) + " gives the same spectrum");
  return result;
}

EmitterParams fitted_emitter(const FitResult& r) {
  EmitterParams p;
  p.nu21 = r.value("nu21");
  p.gamma = r.value("gamma");
  if (r.model == FitModel::Fluorescence) {
    p.gamma0 = p.gamma;
    p.gamma0_assumed = true;
    return p;
  }
  p.alpha = r.value("alpha");
  p.gamma0 = r.value("gamma0");
  return p;
}

ModalCoupling fitted_coupling(const FitResult& r) {
  if (r.model == FitModel::Fluorescence) throw ArgumentError("fluorescence fit carries no coupling");
  return {r.value("c_amp"), r.value("psi"), r.value("i_e")};
}

CovarianceEstimate covariance_estimate(const FitResult& result, const Spectrum& spec, const FitConfig& cfg) {
  if (spec.values.size() != spec.size()) throw ArgumentError("covariance_estimate: values length mismatch");
  if (!result.converged) throw FitError("covariance_estimate: fit did not converge");
  std::vector<double> x;
  std::unique_ptr<ResidualModel> model;
  if (result.model == FitModel::Fluorescence) {
    x = {result.value("nu21"), result.value("gamma"), result.value("amplitude"), result.value("background")};
    model = std::make_unique<residuals::Fluorescence>(spec, cfg.weighting);
  } else if (result.model == FitModel::Transmission) {
    x = {result.value("nu21"), result.value("c_amp"), result.value("psi"), result.value("i_e")};
    const TransmissionFixed fixed{result.value("gamma"), result.value("alpha"), result.value("gamma0")};
    model = std::make_unique<residuals::Transmission>(spec, fixed, cfg.weighting);
  } else {
    throw ArgumentError("covariance_estimate: joint fits carry their covariance in the result");
  }
  const auto n = static_cast<Eigen::Index>(model->residual_count());
  Eigen::VectorXd r(n);
  Eigen::MatrixXd jac(n, static_cast<Eigen::Index>(x.size()));
  model->evaluate(x, std::span<double>(r.data(), static_cast<std::size_t>(n)), &jac);
  return covariance_from_jacobian(jac, r.squaredNorm());
}

} // namespace molext
