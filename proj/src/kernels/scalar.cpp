#include "internal.hpp"

namespace molext::kernels::detail::scalar {

void transmission(const LineTerms& t, const double* freq, double* out, std::size_t n) {
  const double hg = 0.5 * t.gamma;
  const double q = 0.25 * t.gamma * t.gamma + t.sat;
  const double wa = t.incoherent * t.incoherent_scale;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = freq[i] - t.nu21;
    const double L = 1.0 / (d * d + q);
    const double lin = t.ext_re * d + t.ext_im * hg;
    out[i] = (t.baseline + wa * L) - (L + L) * lin;
  }
}

void transmission_basis(const LineTerms& t, const double* freq, const BasisPtrs& b, std::size_t n) {
  const double hg = 0.5 * t.gamma;
  const double q = 0.25 * t.gamma * t.gamma + t.sat;
  const double a = t.incoherent_scale;
  const double wa = t.incoherent * a;
  const double g_slope = hg + t.sat_slope;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = freq[i] - t.nu21;
    const double L = 1.0 / (d * d + q);
    const double twoL = L + L;
    const double er = -(d * twoL);
    if (b.incoherent) b.incoherent[i] = a * L;
    if (b.ext_re) b.ext_re[i] = er;
    if (b.ext_im) b.ext_im[i] = -(t.gamma * L);
    if (b.d_nu21) {
      const double lin = t.ext_re * d + t.ext_im * hg;
      const double Ld = er * L;
      const double dI = (wa * Ld - (Ld + Ld) * lin) - twoL * t.ext_re;
      b.d_nu21[i] = -dI;
    }
    if (b.d_gamma) {
      const double Lg = -((L * L) * g_slope);
      const double inc = t.incoherent * (t.incoherent_slope * L + a * Lg);
      b.d_gamma[i] = (inc - (Lg + Lg) * (t.ext_re * d)) - t.ext_im * (L + t.gamma * Lg);
    }
  }
}

void lorentzian(const LorentzTerms& t, const double* freq, double* out, std::size_t n) {
  const double q = 0.25 * t.gamma * t.gamma + t.sat;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = freq[i] - t.nu21;
    const double L = 1.0 / (d * d + q);
    out[i] = t.amplitude * L + t.background;
  }
}

void lorentzian_jacobian(const LorentzTerms& t, const double* freq, const LorentzJacPtrs& j,
                         std::size_t n) {
  const double q = 0.25 * t.gamma * t.gamma + t.sat;
  const double g_slope = 0.5 * t.gamma + t.sat_slope;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = freq[i] - t.nu21;
    const double L = 1.0 / (d * d + q);
    if (j.d_amplitude) j.d_amplitude[i] = L;
    if (j.d_nu21) j.d_nu21[i] = t.amplitude * ((d * (L + L)) * L);
    if (j.d_gamma) j.d_gamma[i] = t.amplitude * (-((L * L) * g_slope));
  }
}

} // namespace molext::kernels::detail::scalar
