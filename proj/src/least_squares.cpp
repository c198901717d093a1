#include "molext/least_squares.hpp"

#include "molext/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace molext {

double ParameterBounds::project(double x) const {
  if (periodic && period > 0.0) {
    double r = std::fmod(x - lower, period);
    if (r < 0.0) r += period;
    if (r >= period) r = 0.0;
    return lower + r;
  }
  return std::clamp(x, lower, upper);
}

namespace {

double half_norm2(const Eigen::VectorXd& r) { return 0.5 * r.squaredNorm(); }

struct Evaluator {
  const ResidualModel& model;
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;

  explicit Evaluator(const ResidualModel& m)
      : model(m), r(static_cast<Eigen::Index>(m.residual_count())),
        jac(static_cast<Eigen::Index>(m.residual_count()), static_cast<Eigen::Index>(m.parameter_count())) {}

  double cost(const Eigen::VectorXd& x, bool with_jac) {
    model.evaluate(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                   std::span<double>(r.data(), static_cast<std::size_t>(r.size())), with_jac ? &jac : nullptr);
    return half_norm2(r);
  }
};

} // namespace

SolverReport levenberg_marquardt(const ResidualModel& model, Eigen::VectorXd x0,
                                 std::span<const ParameterBounds> bounds, const SolverConfig& cfg) {
  const auto p = static_cast<Eigen::Index>(model.parameter_count());
  if (x0.size() != p) throw ArgumentError("levenberg_marquardt: initial point has wrong size");
  if (!bounds.empty() && static_cast<Eigen::Index>(bounds.size()) != p)
    throw ArgumentError("levenberg_marquardt: bounds have wrong size");
  if (model.residual_count() < model.parameter_count())
    throw ArgumentError("levenberg_marquardt: fewer residuals than parameters");
  if (!(cfg.ftol > 0.0) || !(cfg.xtol > 0.0) || !(cfg.damping_init > 0.0) || cfg.max_iters < 1)
    throw ArgumentError("levenberg_marquardt: tolerances and damping must be > 0");

  auto project = [&](Eigen::VectorXd x) {
    for (Eigen::Index i = 0; i < x.size() && !bounds.empty(); ++i)
      x(i) = bounds[static_cast<std::size_t>(i)].project(x(i));
    return x;
  };

  SolverReport rep;
  Evaluator ev(model);
  Evaluator trial(model);
  Eigen::VectorXd x = project(std::move(x0));
  double cost = ev.cost(x, true);
  if (!std::isfinite(cost)) throw FitError("levenberg_marquardt: non-finite cost at initial point");
  rep.cost_history.push_back(cost);

  Eigen::VectorXd diag_scale = Eigen::VectorXd::Zero(p);
  double lambda = cfg.damping_init;
  double nu = 2.0;
  rep.status = "iteration limit reached";

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    rep.iterations = iter + 1;
    const Eigen::MatrixXd A = ev.jac.transpose() * ev.jac;
    const Eigen::VectorXd g = ev.jac.transpose() * ev.r;
    if (cost == 0.0 || g.lpNorm<Eigen::Infinity>() <= 1e-300) {
      rep.converged = true;
      rep.status = "zero gradient";
      break;
    }
    for (Eigen::Index i = 0; i < p; ++i) diag_scale(i) = std::max(diag_scale(i), A(i, i));
    for (Eigen::Index i = 0; i < p; ++i)
      if (diag_scale(i) <= 0.0) diag_scale(i) = 1.0;

    // Step size measured in the Marquardt metric, so parameters of very
    // different magnitude (MHz against cps) are judged on equal terms.
    const Eigen::VectorXd metric = diag_scale.cwiseSqrt();
    auto step_is_small = [&](const Eigen::VectorXd& dx, const Eigen::VectorXd& at) {
      return metric.cwiseProduct(dx).norm() <= cfg.xtol * (metric.cwiseProduct(at).norm() + cfg.xtol);
    };
    bool accepted = false;
    bool small_step = false;
    for (int inner = 0; inner < 60 && !accepted; ++inner) {
      Eigen::MatrixXd M = A;
      M.diagonal() += lambda * diag_scale;
      const Eigen::VectorXd step = M.ldlt().solve(-g);
      const Eigen::VectorXd x_new = project(x + step);
      Eigen::VectorXd dx = x_new - x;
      for (Eigen::Index i = 0; i < p && !bounds.empty(); ++i)
        if (bounds[static_cast<std::size_t>(i)].periodic) dx(i) = step(i);
      if (step_is_small(dx, x)) {
        small_step = true;
        break;
      }
      const double cost_new = trial.cost(x_new, true);
      const double predicted = -(g.dot(dx) + 0.5 * dx.dot(A * dx));
      if (std::isfinite(cost_new) && cost_new < cost) {
        const double rho = predicted > 0.0 ? (cost - cost_new) / predicted : 0.0;
        const double decrease = cost - cost_new;
        x = x_new;
        std::swap(ev.r, trial.r);
        std::swap(ev.jac, trial.jac);
        const double old_cost = cost;
        cost = cost_new;
        rep.cost_history.push_back(cost);
        lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
        accepted = true;
        if (decrease <= cfg.ftol * old_cost) {
          rep.converged = true;
          rep.status = "relative cost reduction below ftol";
        } else if (step_is_small(dx, x)) {
          rep.converged = true;
          rep.status = "relative step below xtol";
        }
      } else {
        lambda *= nu;
        nu *= 2.0;
      }
    }
    if (small_step) {
      rep.converged = true;
      rep.status = "relative step below xtol";
      break;
    }
    if (!accepted) {
      // Damping exhausted without progress: at numerical floor of the cost.
      rep.converged = true;
      rep.status = "no further decrease possible";
      break;
    }
    if (rep.converged) break;
  }
  rep.x = x;
  rep.cost = cost;
  return rep;
}

CovarianceEstimate covariance_from_jacobian(const Eigen::MatrixXd& jac, double chi2) {
  const auto n = jac.rows();
  const auto p = jac.cols();
  CovarianceEstimate est;
  est.reduced_chi2 = n > p ? chi2 / static_cast<double>(n - p) : 0.0;
  const Eigen::MatrixXd A = jac.transpose() * jac;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
  const Eigen::VectorXd ev = eig.eigenvalues();
  const double vmax = ev.cwiseAbs().maxCoeff();
  const double cutoff = vmax * 1e-13 * static_cast<double>(p);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    if (ev(i) > cutoff)
      inv(i) = 1.0 / ev(i);
    else
      est.singular = true;
  }
  est.matrix = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  est.matrix = 0.5 * (est.matrix + est.matrix.transpose()).eval();
  est.matrix *= est.reduced_chi2;
  return est;
}

} // namespace molext
