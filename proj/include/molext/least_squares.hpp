#pragma once

// Damped Gauss-Newton (Levenberg-Marquardt) with box projection for small,
// dense problems.

#include <Eigen/Core>

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace molext {

struct ParameterBounds {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  // Periodic parameters are wrapped into [lower, lower + period) instead of
  // clamped.
  bool periodic = false;
  double period = 0.0;

  static ParameterBounds at_least(double lo) { return {lo, std::numeric_limits<double>::infinity()}; }
  static ParameterBounds phase(double lo, double period) { return {lo, lo + period, true, period}; }
  double project(double x) const;
};

struct SolverConfig {
  int max_iters = 200;
  double ftol = 1e-10;
  double xtol = 1e-10;
  double damping_init = 1e-3;
};

// Residual vector r(x) (already weighted) with optional Jacobian dr/dx.
class ResidualModel {
public:
  virtual ~ResidualModel() = default;
  virtual std::size_t residual_count() const = 0;
  virtual std::size_t parameter_count() const = 0;
  virtual void evaluate(std::span<const double> x, std::span<double> r, Eigen::MatrixXd* jac) const = 0;
};

struct SolverReport {
  Eigen::VectorXd x;
  double cost = 0.0; // 0.5 |r|^2
  std::vector<double> cost_history; // initial cost, then one entry per accepted step
  int iterations = 0;
  bool converged = false;
  std::string status;
};

SolverReport levenberg_marquardt(const ResidualModel& model, Eigen::VectorXd x0,
                                 std::span<const ParameterBounds> bounds, const SolverConfig& cfg);

struct CovarianceEstimate {
  Eigen::MatrixXd matrix;
  double reduced_chi2 = 0.0;
  bool singular = false; // pseudo-inverse used
};

// (J^T J)^-1 * chi2 / (n - p) for a weighted Jacobian J and chi2 = |r|^2.
// Falls back to the Moore-Penrose pseudo-inverse when J^T J is singular.
CovarianceEstimate covariance_from_jacobian(const Eigen::MatrixXd& jac, double chi2);

} // namespace molext
