#include "internal.hpp"

#include <immintrin.h>

namespace molext::kernels::detail::avx2 {
namespace {

constexpr std::size_t kWidth = 4;

inline __m256d neg(__m256d x) { return _mm256_xor_pd(x, _mm256_set1_pd(-0.0)); }

} // namespace

void transmission(const LineTerms& t, const double* freq, double* out, std::size_t n) {
  const double hg_s = 0.5 * t.gamma;
  const double q_s = 0.25 * t.gamma * t.gamma + t.sat;
  const double wa_s = t.incoherent * t.incoherent_scale;
  const double lin0_s = t.ext_im * hg_s;

  const __m256d nu = _mm256_set1_pd(t.nu21);
  const __m256d q = _mm256_set1_pd(q_s);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d wa = _mm256_set1_pd(wa_s);
  const __m256d base = _mm256_set1_pd(t.baseline);
  const __m256d er = _mm256_set1_pd(t.ext_re);
  const __m256d lin0 = _mm256_set1_pd(lin0_s);

  std::size_t i = 0;
  for (; i + kWidth <= n; i += kWidth) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(freq + i), nu);
    const __m256d L = _mm256_div_pd(one, _mm256_add_pd(_mm256_mul_pd(d, d), q));
    const __m256d lin = _mm256_add_pd(_mm256_mul_pd(er, d), lin0);
    const __m256d head = _mm256_add_pd(base, _mm256_mul_pd(wa, L));
    const __m256d tail = _mm256_mul_pd(_mm256_add_pd(L, L), lin);
    _mm256_storeu_pd(out + i, _mm256_sub_pd(head, tail));
  }
  if (i < n) scalar::transmission(t, freq + i, out + i, n - i);
}

void transmission_basis(const LineTerms& t, const double* freq, const BasisPtrs& b, std::size_t n) {
  const double hg_s = 0.5 * t.gamma;
  const double q_s = 0.25 * t.gamma * t.gamma + t.sat;

  const __m256d nu = _mm256_set1_pd(t.nu21);
  const __m256d q = _mm256_set1_pd(q_s);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d a = _mm256_set1_pd(t.incoherent_scale);
  const __m256d a_slope = _mm256_set1_pd(t.incoherent_slope);
  const __m256d w = _mm256_set1_pd(t.incoherent);
  const __m256d wa = _mm256_set1_pd(t.incoherent * t.incoherent_scale);
  const __m256d xr = _mm256_set1_pd(t.ext_re);
  const __m256d xi = _mm256_set1_pd(t.ext_im);
  const __m256d gam = _mm256_set1_pd(t.gamma);
  const __m256d lin0 = _mm256_set1_pd(t.ext_im * hg_s);
  const __m256d g_slope = _mm256_set1_pd(hg_s + t.sat_slope);

  std::size_t i = 0;
  for (; i + kWidth <= n; i += kWidth) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(freq + i), nu);
    const __m256d L = _mm256_div_pd(one, _mm256_add_pd(_mm256_mul_pd(d, d), q));
    const __m256d twoL = _mm256_add_pd(L, L);
    const __m256d er = neg(_mm256_mul_pd(d, twoL));
    if (b.incoherent) _mm256_storeu_pd(b.incoherent + i, _mm256_mul_pd(a, L));
    if (b.ext_re) _mm256_storeu_pd(b.ext_re + i, er);
    if (b.ext_im) _mm256_storeu_pd(b.ext_im + i, neg(_mm256_mul_pd(gam, L)));
    if (b.d_nu21) {
      const __m256d lin = _mm256_add_pd(_mm256_mul_pd(xr, d), lin0);
      const __m256d Ld = _mm256_mul_pd(er, L);
      const __m256d dI = _mm256_sub_pd(
          _mm256_sub_pd(_mm256_mul_pd(wa, Ld), _mm256_mul_pd(_mm256_add_pd(Ld, Ld), lin)),
          _mm256_mul_pd(twoL, xr));
      _mm256_storeu_pd(b.d_nu21 + i, neg(dI));
    }
    if (b.d_gamma) {
      const __m256d Lg = neg(_mm256_mul_pd(_mm256_mul_pd(L, L), g_slope));
      const __m256d inc =
          _mm256_mul_pd(w, _mm256_add_pd(_mm256_mul_pd(a_slope, L), _mm256_mul_pd(a, Lg)));
      const __m256d mid = _mm256_sub_pd(inc, _mm256_mul_pd(_mm256_add_pd(Lg, Lg), _mm256_mul_pd(xr, d)));
      const __m256d last = _mm256_mul_pd(xi, _mm256_add_pd(L, _mm256_mul_pd(gam, Lg)));
      _mm256_storeu_pd(b.d_gamma + i, _mm256_sub_pd(mid, last));
    }
  }
  if (i < n) {
    BasisPtrs rest{b.incoherent ? b.incoherent + i : nullptr, b.ext_re ? b.ext_re + i : nullptr,
                   b.ext_im ? b.ext_im + i : nullptr, b.d_nu21 ? b.d_nu21 + i : nullptr,
                   b.d_gamma ? b.d_gamma + i : nullptr};
    scalar::transmission_basis(t, freq + i, rest, n - i);
  }
}

void lorentzian(const LorentzTerms& t, const double* freq, double* out, std::size_t n) {
  const __m256d nu = _mm256_set1_pd(t.nu21);
  const __m256d q = _mm256_set1_pd(0.25 * t.gamma * t.gamma + t.sat);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d amp = _mm256_set1_pd(t.amplitude);
  const __m256d bg = _mm256_set1_pd(t.background);
  std::size_t i = 0;
  for (; i + kWidth <= n; i += kWidth) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(freq + i), nu);
    const __m256d L = _mm256_div_pd(one, _mm256_add_pd(_mm256_mul_pd(d, d), q));
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_mul_pd(amp, L), bg));
  }
  if (i < n) scalar::lorentzian(t, freq + i, out + i, n - i);
}

void lorentzian_jacobian(const LorentzTerms& t, const double* freq, const LorentzJacPtrs& j,
                         std::size_t n) {
  const __m256d nu = _mm256_set1_pd(t.nu21);
  const __m256d q = _mm256_set1_pd(0.25 * t.gamma * t.gamma + t.sat);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d amp = _mm256_set1_pd(t.amplitude);
  const __m256d g_slope = _mm256_set1_pd(0.5 * t.gamma + t.sat_slope);
  std::size_t i = 0;
  for (; i + kWidth <= n; i += kWidth) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(freq + i), nu);
    const __m256d L = _mm256_div_pd(one, _mm256_add_pd(_mm256_mul_pd(d, d), q));
    if (j.d_amplitude) _mm256_storeu_pd(j.d_amplitude + i, L);
    if (j.d_nu21)
      _mm256_storeu_pd(j.d_nu21 + i,
                       _mm256_mul_pd(amp, _mm256_mul_pd(_mm256_mul_pd(d, _mm256_add_pd(L, L)), L)));
    if (j.d_gamma)
      _mm256_storeu_pd(j.d_gamma + i,
                       _mm256_mul_pd(amp, neg(_mm256_mul_pd(_mm256_mul_pd(L, L), g_slope))));
  }
  if (i < n) {
    LorentzJacPtrs rest{j.d_amplitude ? j.d_amplitude + i : nullptr, j.d_nu21 ? j.d_nu21 + i : nullptr,
                        j.d_gamma ? j.d_gamma + i : nullptr};
    scalar::lorentzian_jacobian(t, freq + i, rest, n - i);
  }
}

} // namespace molext::kernels::detail::avx2
