#pragma once

// Nonlinear least-squares extraction of resonance parameters from
// fluorescence-excitation and transmission spectra, single scan or jointly
// across analyzer angles.

#include "molext/least_squares.hpp"
#include "molext/lineshape.hpp"
#include "molext/polarization.hpp"
#include "molext/spectrum.hpp"

#include <Eigen/Core>

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace molext {

enum class Weighting {
  Auto,  // per-point sigma when the spectrum carries it, unweighted otherwise
  None,
  Sigma, // requires sigma
};

struct FitConfig {
  int max_iters = 200;
  double ftol = 1e-10;
  double xtol = 1e-10;
  double damping_init = 1e-3;
  Weighting weighting = Weighting::Auto;
  // Overrides of the default box for a named parameter.
  std::map<std::string, ParameterBounds> bounds;

  void validate() const;
  SolverConfig solver() const { return {max_iters, ftol, xtol, damping_init}; }
};

struct FitParameter {
  std::string name;
  std::string unit;
  double value = 0.0;
  double sigma = 0.0; // 1-sigma from the covariance; 0 for fixed parameters
  bool free = true;
};

enum class FitModel { Fluorescence, Transmission, JointPolar };

std::string_view fit_model_name(FitModel m);

struct FitResult {
  FitModel model = FitModel::Transmission;
  std::vector<FitParameter> params;
  Eigen::MatrixXd covariance; // over free parameters, in params order
  double residual_rms = 0.0;  // unweighted, in data units (cps)
  double reduced_chi2 = 0.0;
  int iterations = 0;
  bool converged = false;
  bool covariance_singular = false;
  std::string status;
  std::vector<double> cost_history;
  std::vector<std::string> warnings;

  const FitParameter& param(std::string_view name) const;
  double value(std::string_view name) const { return param(name).value; }
  std::vector<std::string> free_names() const;
};

struct BaselineEstimate {
  double i_e = 0.0;
  double wing_std = 0.0;
  std::size_t points_used = 0;
};

// Mean (and standard deviation) of the outermost wing_fraction of points on
// each side of the scan.
BaselineEstimate estimate_baseline(const Spectrum& spec, double wing_fraction = 0.2);

// Lorentzian fit (nu21, gamma, amplitude, background) of a fluorescence
// excitation spectrum. gamma is the FWHM. Throws NoPeakError when no maximum
// stands 3 wing-sigma above the background.
FitResult fit_fluorescence(const Spectrum& spec, const FitConfig& cfg = {});

// Lineshape constants held fixed in a transmission fit; gamma typically comes
// from fit_fluorescence on the simultaneously recorded channel.
struct TransmissionFixed {
  double gamma = 35.0;
  double alpha = 0.25;
  double gamma0 = 8.0;
};

// Coupling that yields the same transmission spectrum as (c_amp, psi) for
// the fixed lineshape constants. The spectrum depends on C sin psi only
// through a parabola centred on alpha gamma0 / 2, so the mirror reflects
// C sin psi about that value and keeps C cos psi.
std::pair<double, double> mirror_coupling(const TransmissionFixed& fixed, double c_amp, double psi);

// Fit of (nu21, C, psi, I_e) to a transmission scan. C >= 0, psi in
// [0, 2 pi) and C sin psi <= alpha gamma0 / 2; the mirror solution is named
// in the warnings. Throws LowContrastError when the resonant signature is
// within 3 wing-sigma of the baseline.
FitResult fit_transmission(const Spectrum& spec, const TransmissionFixed& fixed, const FitConfig& cfg = {});

// Emitter and coupling described by a transmission fit result.
EmitterParams fitted_emitter(const FitResult& r);
ModalCoupling fitted_coupling(const FitResult& r);

// Recomputes the covariance of a fluorescence or transmission fit on `spec`.
CovarianceEstimate covariance_estimate(const FitResult& result, const Spectrum& spec, const FitConfig& cfg = {});

struct JointFitResult {
  FitResult fit;
  JonesField e_tip; // unit power, real non-negative x component
  JonesField e_mol; // same gauge
  double theta_ref = 0.0;
  ModalCoupling base; // C, psi at theta_ref; unpolarized I_e
};

// Simultaneous fit of every analyzer angle in `scan`. Free parameters:
// nu21, I_e, a coupling strength and phase, and both Jones vectors up to the
// gauge (unit power, zero global phase). Needs at least four distinct angles.
JointFitResult joint_fit_polar(const AnalyzerScan& scan, const JonesField& e_tip_guess,
                               const JonesField& e_mol_guess, const TransmissionFixed& fixed,
                               const FitConfig& cfg = {});

// Residual models behind the fits. Exposed for derivative checks.
namespace residuals {

std::vector<double> weights_for(const Spectrum& spec, Weighting w);

// x = [nu21, gamma, amplitude, background]
class Fluorescence : public ResidualModel {
public:
  Fluorescence(const Spectrum& spec, Weighting w);
  std::size_t residual_count() const override { return spec_.size(); }
  std::size_t parameter_count() const override { return 4; }
  void evaluate(std::span<const double> x, std::span<double> r, Eigen::MatrixXd* jac) const override;

private:
  const Spectrum& spec_;
  std::vector<double> inv_sigma_;
};

// x = [nu21, c_amp, psi, i_e] or, with free_gamma, [nu21, c_amp, psi, i_e, gamma]
class Transmission : public ResidualModel {
public:
  Transmission(const Spectrum& spec, const TransmissionFixed& fixed, Weighting w, bool free_gamma = false);
  std::size_t residual_count() const override { return spec_.size(); }
  std::size_t parameter_count() const override { return free_gamma_ ? 5 : 4; }
  void evaluate(std::span<const double> x, std::span<double> r, Eigen::MatrixXd* jac) const override;

private:
  const Spectrum& spec_;
  TransmissionFixed fixed_;
  bool free_gamma_;
  std::vector<double> inv_sigma_;
};

// x = [nu21, i_e, rho, phi0, tip_chi, tip_delta, mol_chi, mol_delta]
// with e = (cos chi, sin chi e^{i delta}) and, per angle,
//   I_e(theta) = I_e |t|^2,  I_e C^2 = I_e rho^2 |m|^2,  I_e C e^{i psi} = I_e rho e^{i phi0} m conj(t).
class JointPolar : public ResidualModel {
public:
  JointPolar(const AnalyzerScan& scan, const TransmissionFixed& fixed, Weighting w);
  std::size_t residual_count() const override { return total_; }
  std::size_t parameter_count() const override { return 8; }
  void evaluate(std::span<const double> x, std::span<double> r, Eigen::MatrixXd* jac) const override;

  static JonesField field(double chi, double delta);

private:
  const AnalyzerScan& scan_;
  TransmissionFixed fixed_;
  std::vector<std::vector<double>> inv_sigma_;
  std::size_t total_ = 0;
};

} // namespace residuals

} // namespace molext
