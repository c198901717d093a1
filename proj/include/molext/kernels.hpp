#pragma once

// Grid kernels for the resonance lineshapes. Every kernel has a scalar
// reference implementation; an AVX2 variant is selected at runtime when the
// CPU supports it. Both produce identical results (same operation order,
// no FMA contraction) and are checked against each other in the tests.

#include <cstddef>
#include <span>
#include <string_view>

namespace molext::kernels {

// Intensity model on a frequency grid, with Delta = f - nu21 and
//   L(Delta) = 1 / (Delta^2 + gamma^2/4 + sat)
//   I = baseline + incoherent * a * L - 2 L (ext_re * Delta + ext_im * gamma/2)
// where a = incoherent_scale. Covers both the single-scan form
// (baseline = I_e, incoherent = I_e C^2, ext = I_e C e^{i psi}) and the
// field-product form used behind a polarizer.
struct LineTerms {
  double nu21 = 0.0;
  double gamma = 1.0;
  double sat = 0.0;              // Omega^2 (gamma / 2 gamma0) K; 0 for the weak-field form
  double sat_slope = 0.0;        // d sat / d gamma
  double incoherent_scale = 0.0; // gamma / (alpha gamma0)
  double incoherent_slope = 0.0; // d incoherent_scale / d gamma
  double baseline = 0.0;
  double incoherent = 0.0;
  double ext_re = 0.0;
  double ext_im = 0.0;
};

// Partial derivatives of I with respect to the linear coefficients and to the
// two nonlinear lineshape parameters. Any span may be empty to skip it.
struct LineBasis {
  std::span<double> incoherent; // dI/d incoherent = a L
  std::span<double> ext_re;     // dI/d ext_re     = -2 Delta L
  std::span<double> ext_im;     // dI/d ext_im     = -gamma L
  std::span<double> d_nu21;
  std::span<double> d_gamma;
};

// F = amplitude * L + background.
struct LorentzTerms {
  double nu21 = 0.0;
  double gamma = 1.0;
  double sat = 0.0;
  double sat_slope = 0.0;
  double amplitude = 0.0;
  double background = 0.0;
};

struct LorentzJacobian {
  std::span<double> d_amplitude; // = L
  std::span<double> d_nu21;
  std::span<double> d_gamma;
};

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

// Whether the variant is compiled in and supported by the running CPU.
bool isa_available(Isa isa);

// Variant used by the un-suffixed entry points. Defaults to the best
// available one; MOLEXT_FORCE_SCALAR=1 in the environment pins Scalar.
Isa active_isa();

// Pins the dispatch target (tests, benchmarking). Throws ArgumentError if the
// requested variant is unavailable.
void set_active_isa(Isa isa);

void transmission(const LineTerms& t, std::span<const double> freq, std::span<double> out);
void transmission_basis(const LineTerms& t, std::span<const double> freq, const LineBasis& basis);
void lorentzian(const LorentzTerms& t, std::span<const double> freq, std::span<double> out);
void lorentzian_jacobian(const LorentzTerms& t, std::span<const double> freq, const LorentzJacobian& jac);

// Explicit variants, used for equivalence testing.
void transmission(Isa isa, const LineTerms& t, std::span<const double> freq, std::span<double> out);
void transmission_basis(Isa isa, const LineTerms& t, std::span<const double> freq,
                        const LineBasis& basis);
void lorentzian(Isa isa, const LorentzTerms& t, std::span<const double> freq, std::span<double> out);
void lorentzian_jacobian(Isa isa, const LorentzTerms& t, std::span<const double> freq,
                         const LorentzJacobian& jac);

} // namespace molext::kernels
