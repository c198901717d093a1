#include "internal.hpp"

#include "molext/errors.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace molext::kernels {
namespace {

using detail::KernelTable;

constexpr KernelTable kScalarTable{detail::scalar::transmission, detail::scalar::transmission_basis,
                                   detail::scalar::lorentzian, detail::scalar::lorentzian_jacobian};
#ifdef MOLEXT_HAVE_AVX2
constexpr KernelTable kAvx2Table{detail::avx2::transmission, detail::avx2::transmission_basis,
                                 detail::avx2::lorentzian, detail::avx2::lorentzian_jacobian};
#endif

bool cpu_has_avx2() {
#if defined(MOLEXT_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Isa detect_default() {
  if (const char* env = std::getenv("MOLEXT_FORCE_SCALAR"); env && std::string(env) == "1")
    return Isa::Scalar;
  return cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detect_default()};
  return isa;
}

const KernelTable& table(Isa isa) {
#ifdef MOLEXT_HAVE_AVX2
  if (isa == Isa::Avx2) return kAvx2Table;
#endif
  (void)isa;
  return kScalarTable;
}

void check_size(std::size_t n, std::span<double> col, const char* what) {
  if (!col.empty() && col.size() != n)
    throw ArgumentError(std::string("kernel output '") + what + "' has wrong length");
}

} // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) { return isa == Isa::Scalar || cpu_has_avx2(); }

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_available(isa))
    throw ArgumentError("kernel variant '" + std::string(isa_name(isa)) + "' not available");
  active().store(isa, std::memory_order_relaxed);
}

void transmission(Isa isa, const LineTerms& t, std::span<const double> freq, std::span<double> out) {
  if (out.size() != freq.size()) throw ArgumentError("transmission: output length mismatch");
  table(isa).transmission(t, freq.data(), out.data(), freq.size());
}

void transmission_basis(Isa isa, const LineTerms& t, std::span<const double> freq,
                        const LineBasis& basis) {
  const std::size_t n = freq.size();
  check_size(n, basis.incoherent, "incoherent");
  check_size(n, basis.ext_re, "ext_re");
  check_size(n, basis.ext_im, "ext_im");
  check_size(n, basis.d_nu21, "d_nu21");
  check_size(n, basis.d_gamma, "d_gamma");
  auto ptr = [](std::span<double> s) { return s.empty() ? nullptr : s.data(); };
  const detail::BasisPtrs p{ptr(basis.incoherent), ptr(basis.ext_re), ptr(basis.ext_im),
                            ptr(basis.d_nu21), ptr(basis.d_gamma)};
  table(isa).transmission_basis(t, freq.data(), p, n);
}

void lorentzian(Isa isa, const LorentzTerms& t, std::span<const double> freq, std::span<double> out) {
  if (out.size() != freq.size()) throw ArgumentError("lorentzian: output length mismatch");
  table(isa).lorentzian(t, freq.data(), out.data(), freq.size());
}

void lorentzian_jacobian(Isa isa, const LorentzTerms& t, std::span<const double> freq,
                         const LorentzJacobian& jac) {
  const std::size_t n = freq.size();
  check_size(n, jac.d_amplitude, "d_amplitude");
  check_size(n, jac.d_nu21, "d_nu21");
  check_size(n, jac.d_gamma, "d_gamma");
  auto ptr = [](std::span<double> s) { return s.empty() ? nullptr : s.data(); };
  const detail::LorentzJacPtrs p{ptr(jac.d_amplitude), ptr(jac.d_nu21), ptr(jac.d_gamma)};
  table(isa).lorentzian_jacobian(t, freq.data(), p, n);
}

void transmission(const LineTerms& t, std::span<const double> freq, std::span<double> out) {
  transmission(active_isa(), t, freq, out);
}
void transmission_basis(const LineTerms& t, std::span<const double> freq, const LineBasis& basis) {
  transmission_basis(active_isa(), t, freq, basis);
}
void lorentzian(const LorentzTerms& t, std::span<const double> freq, std::span<double> out) {
  lorentzian(active_isa(), t, freq, out);
}
void lorentzian_jacobian(const LorentzTerms& t, std::span<const double> freq,
                         const LorentzJacobian& jac) {
  lorentzian_jacobian(active_isa(), t, freq, jac);
}

} // namespace molext::kernels
