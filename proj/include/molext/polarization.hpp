#pragma once

// Jones-calculus model of a linear analyzer in the detection path. The tip
// (excitation) field and the molecular field are each a Jones vector; the
// analyzer at angle theta projects both onto u_d = (cos theta, sin theta),
// which changes the modal factors g and f and therefore (I_e, C, psi).

#include "molext/lineshape.hpp"
#include "molext/spectrum.hpp"

#include <complex>
#include <optional>
#include <span>
#include <vector>

namespace molext {

struct JonesField {
  std::complex<double> ex{1.0, 0.0};
  std::complex<double> ey{0.0, 0.0};

  double power() const { return std::norm(ex) + std::norm(ey); }
  void validate() const;

  // Field whose polarization ellipse has its major axis at `axis_angle` and
  // ellipticity angle `ellipticity` (tan = minor/major, sign = handedness),
  // with total power amplitude^2 and a global phase.
  static JonesField from_ellipse(double axis_angle, double ellipticity, double amplitude = 1.0,
                                 double phase = 0.0);
};

struct Ellipse {
  double axis_angle = 0.0;  // [0, pi)
  double ellipticity = 0.0; // [-pi/4, pi/4]
  double amplitude = 0.0;
};

Ellipse ellipse_of(const JonesField& f);

// Max-to-min ratio of the Malus curve; +inf for linear polarization.
double extinction_ratio(const JonesField& f);

// Ellipticity angle giving a max:min intensity ratio of `ratio` (>= 1).
double ellipticity_for_extinction_ratio(double ratio);

// Analyzer angle of maximum transmitted intensity, in [0, pi).
double max_intensity_angle(const JonesField& f);

// ex cos(theta) + ey sin(theta).
std::complex<double> project(const JonesField& f, double theta);

// |project(f, theta)|^2 for each angle.
std::vector<double> malus_curve(const JonesField& f, std::span<const double> thetas);

// Least-squares fit of I(theta) = mean + modulation cos(2 (theta - axis)).
struct MalusFit {
  double axis_angle = 0.0; // [0, pi)
  double mean = 0.0;
  double modulation = 0.0;
  double extinction_ratio = 0.0; // (mean + modulation) / (mean - modulation)
  double rms_residual = 0.0;
};

MalusFit fit_malus(std::span<const double> thetas, std::span<const double> intensities);

// Fraction of total tip power below which the analyzer counts as crossed.
inline constexpr double kCrossedThreshold = 1e-6;

struct EffectiveCoupling {
  ModalCoupling coupling;      // c_amp is +inf when the tip projection vanishes exactly
  double tip_fraction = 0.0;   // |project(e_tip)|^2 / |e_tip|^2
  bool direct_emission = false;
  // Field-product coefficients, finite for every angle: I_e C^2 and
  // I_e C e^{i psi} at this analyzer angle.
  double incoherent_rate = 0.0;
  std::complex<double> extinction_rate{0.0, 0.0};
};

// Coupling seen behind an analyzer at theta. `base` holds C and psi as
// measured at theta_ref (default: angle of maximum tip intensity) and the
// unpolarized off-resonant intensity I_e.
EffectiveCoupling effective_coupling(const JonesField& e_tip, const JonesField& e_mol, double theta,
                                     const ModalCoupling& base,
                                     std::optional<double> theta_ref = std::nullopt);

// Kernel coefficients for the detected intensity behind the analyzer.
kernels::LineTerms analyzer_terms(const EmitterParams& p, const EffectiveCoupling& eff,
                                  LineshapeForm form = LineshapeForm::WeakField);

// Folds an analyzer angle into [0, pi).
double fold_angle(double theta);

struct AnalyzerScan {
  std::vector<double> thetas; // folded into [0, pi)
  std::vector<Spectrum> spectra;
  std::vector<double> i_e_vs_theta;
  std::vector<ModalCoupling> couplings;
  std::vector<bool> direct_emission;

  std::size_t size() const { return thetas.size(); }
  void validate() const;
};

AnalyzerScan analyzer_scan(const EmitterParams& p, const ModalCoupling& base, const JonesField& e_tip,
                           const JonesField& e_mol, std::span<const double> thetas,
                           std::span<const double> grid, std::optional<double> theta_ref = std::nullopt,
                           LineshapeForm form = LineshapeForm::WeakField);

} // namespace molext
