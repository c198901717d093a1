#pragma once

#include "molext/kernels.hpp"

#include <cstddef>

namespace molext::kernels::detail {

// Raw-pointer form handed to the per-ISA implementations. Null column
// pointers are skipped.
struct BasisPtrs {
  double* incoherent;
  double* ext_re;
  double* ext_im;
  double* d_nu21;
  double* d_gamma;
};

struct LorentzJacPtrs {
  double* d_amplitude;
  double* d_nu21;
  double* d_gamma;
};

struct KernelTable {
  void (*transmission)(const LineTerms&, const double*, double*, std::size_t);
  void (*transmission_basis)(const LineTerms&, const double*, const BasisPtrs&, std::size_t);
  void (*lorentzian)(const LorentzTerms&, const double*, double*, std::size_t);
  void (*lorentzian_jacobian)(const LorentzTerms&, const double*, const LorentzJacPtrs&, std::size_t);
};

namespace scalar {
void transmission(const LineTerms& t, const double* freq, double* out, std::size_t n);
void transmission_basis(const LineTerms& t, const double* freq, const BasisPtrs& b, std::size_t n);
void lorentzian(const LorentzTerms& t, const double* freq, double* out, std::size_t n);
void lorentzian_jacobian(const LorentzTerms& t, const double* freq, const LorentzJacPtrs& j, std::size_t n);
} // namespace scalar

#ifdef MOLEXT_HAVE_AVX2
namespace avx2 {
void transmission(const LineTerms& t, const double* freq, double* out, std::size_t n);
void transmission_basis(const LineTerms& t, const double* freq, const BasisPtrs& b, std::size_t n);
void lorentzian(const LorentzTerms& t, const double* freq, double* out, std::size_t n);
void lorentzian_jacobian(const LorentzTerms& t, const double* freq, const LorentzJacPtrs& j, std::size_t n);
} // namespace avx2
#endif

} // namespace molext::kernels::detail
