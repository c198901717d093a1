#include <doctest.h>

#include "molext/errors.hpp"
#include "molext/lineshape.hpp"
#include "oracles.hpp"

#include <limits>
#include <random>

using namespace molext;
using doctest::Approx;

namespace {

EmitterParams nominal() {
  EmitterParams p;
  p.gamma = 35.0;
  p.gamma0 = 8.0;
  p.alpha = 0.25;
  return p;
}

} // namespace

TEST_CASE("linewidth from lifetime") {
  CHECK(linewidth_from_lifetime(20.0) == Approx(7.9577471545947667).epsilon(1e-14));
  CHECK(linewidth_from_lifetime(1.0) == Approx(159.15494309189535).epsilon(1e-14));
  CHECK(linewidth_from_lifetime(std::numeric_limits<double>::infinity()) == 0.0);
  CHECK_THROWS_AS(linewidth_from_lifetime(0.0), DomainError);
  CHECK_THROWS_AS(linewidth_from_lifetime(-3.0), DomainError);
}

TEST_CASE("weak-field Lorentzian") {
  CHECK(weak_field_lorentzian(0.0, 35.0) == Approx(4.0 / (35.0 * 35.0)).epsilon(1e-15));
  CHECK(weak_field_lorentzian(17.5, 35.0) == Approx(0.5 * weak_field_lorentzian(0.0, 35.0)).epsilon(1e-15));
  CHECK(weak_field_lorentzian(100.0, 35.0) == Approx(1.0 / 10306.25).epsilon(1e-15));
  CHECK(weak_field_lorentzian(100.0, 35.0) == Approx(9.703e-5).epsilon(1e-4));
  CHECK_THROWS_AS(weak_field_lorentzian(0.0, 0.0), DomainError);
  CHECK_THROWS_AS(weak_field_lorentzian(0.0, -1.0), DomainError);
}

TEST_CASE("saturation Lorentzian") {
  EmitterParams p = nominal();
  for (double d : {-80.0, -3.0, 0.0, 12.0, 400.0})
    CHECK(saturation_lorentzian(p, d) == weak_field_lorentzian(d, p.gamma));

  p.gamma0 = p.gamma;
  p.omega = p.gamma;
  p.k_ratio = 1.0;
  CHECK(saturation_lorentzian(p, 0.0) == Approx(4.0 / (3.0 * p.gamma * p.gamma)).epsilon(1e-14));

  // weak-drive limit
  p.omega = 0.01 * p.gamma;
  const double rel = saturation_lorentzian(p, 0.0) / weak_field_lorentzian(0.0, p.gamma) - 1.0;
  CHECK(std::abs(rel) <= 2e-4);
}

TEST_CASE("coherence rho21") {
  EmitterParams p = nominal();
  p.omega = 2.0;
  const auto on = rho21(p, 0.0);
  CHECK(on.real() == 0.0);
  CHECK(on.imag() == Approx(p.omega * p.gamma * saturation_lorentzian(p, 0.0) / 4.0).epsilon(1e-14));
  CHECK(std::abs(rho21(p, 1e9)) == Approx(p.omega / 2e9).epsilon(1e-6));
  for (double d : {0.3, 7.0, 41.0}) CHECK(std::abs(rho21(p, d)) == Approx(std::abs(rho21(p, -d))).epsilon(1e-15));
}

TEST_CASE("detected spectrum follows the closed form") {
  const EmitterParams p = nominal();
  const auto grid = linear_grid(-350.0, 350.0, 201);

  SUBCASE("zero coupling is flat") {
    const Spectrum s = detected_spectrum(p, {0.0, 1.0, 2.5e5}, grid);
    for (double v : s.values) CHECK(v == 2.5e5);
  }
  SUBCASE("dip and surplus at resonance") {
    const double g[1] = {0.0};
    const double dip = detected_spectrum(p, {1.0, kPi / 2, 2.5e5}, g).values[0] / 2.5e5 - 1.0;
    CHECK(dip == Approx(4.0 / 70.0 - 4.0 / 35.0).epsilon(1e-12));
    CHECK(dip == Approx(-0.05714).epsilon(1e-4));
    const double peak = detected_spectrum(p, {1.0, 3 * kPi / 2, 2.5e5}, g).values[0] / 2.5e5 - 1.0;
    CHECK(peak == Approx(4.0 / 70.0 + 4.0 / 35.0).epsilon(1e-12));
    CHECK(peak == Approx(0.17143).epsilon(1e-4));
  }
  SUBCASE("random draws agree with the term-by-term oracle") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 50; ++k) {
      EmitterParams q;
      q.gamma0 = 2.0 + 10.0 * u(rng);
      q.gamma = q.gamma0 * (1.0 + 4.0 * u(rng));
      q.alpha = 0.05 + 0.95 * u(rng);
      q.nu21 = 30.0 * u(rng) - 15.0;
      const ModalCoupling m{3.0 * u(rng), kTwoPi * u(rng), 1e3 + 1e6 * u(rng)};
      const Spectrum s = detected_spectrum(q, m, grid);
      for (std::size_t i = 0; i < grid.size(); i += 20)
        CHECK(s.values[i] ==
              Approx(oracle::intensity(grid[i], q.nu21, q.gamma, q.gamma0, q.alpha, m.c_amp, m.psi, m.i_e)).epsilon(1e-12));
    }
  }
  SUBCASE("saturation flag switches the Lorentzian") {
    EmitterParams q = p;
    q.omega = 10.0;
    q.k_ratio = 1.2;
    const ModalCoupling m{0.8, 1.0, 1e5};
    const Spectrum s = detected_spectrum(q, m, grid, LineshapeForm::Saturation);
    const double sat = q.omega * q.omega * (q.gamma / (2 * q.gamma0)) * q.k_ratio;
    for (std::size_t i = 0; i < grid.size(); i += 25)
      CHECK(s.values[i] == Approx(oracle::intensity(grid[i], 0, q.gamma, q.gamma0, q.alpha, 0.8, 1.0, 1e5, sat)).epsilon(1e-12));
  }
  SUBCASE("empty grid") {
    std::vector<double> none;
    CHECK_THROWS_AS(detected_spectrum(p, {1.0, 1.0, 1.0}, none), ArgumentError);
  }
}

TEST_CASE("symmetry of the terms") {
  const EmitterParams p = nominal();
  const auto grid = linear_grid(-200.0, 200.0, 401);
  const Spectrum s = detected_spectrum(p, {0.9, kPi / 2, 1e5}, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK(s.values[i] == Approx(s.values[grid.size() - 1 - i]).epsilon(1e-14));

  // odd dispersive part at psi = 0
  const Spectrum a = detected_spectrum(p, {0.9, 0.0, 1e5}, grid);
  const Spectrum b = detected_spectrum(p, {0.0, 0.0, 1e5}, grid);
  const double inc0 = (0.81 / p.alpha) * (p.gamma / p.gamma0) * 1e5;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const std::size_t j = grid.size() - 1 - i;
    const double oi = a.values[i] - b.values[i] - inc0 * weak_field_lorentzian(grid[i], p.gamma);
    const double oj = a.values[j] - b.values[j] - inc0 * weak_field_lorentzian(grid[j], p.gamma);
    CHECK(oi == Approx(-oj).epsilon(1e-9).scale(1.0));
  }
}

TEST_CASE("extinction term agrees with the coherence formulation") {
  const EmitterParams p = nominal();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 40; ++k) {
    const ModalCoupling m{2.0 * u(rng), kTwoPi * u(rng), 1e5};
    const double d = 200.0 * u(rng) - 100.0;
    const double g[1] = {d};
    const double total = detected_spectrum(p, m, g).values[0];
    const double incoherent = m.i_e * (m.c_amp * m.c_amp / p.alpha) * (p.gamma / p.gamma0) * oracle::lorentz(d, p.gamma);
    const double ext = total - m.i_e - incoherent;
    CHECK(ext == Approx(oracle::extinction_via_coherence(d, p.gamma, m.c_amp, m.psi, m.i_e)).epsilon(1e-9).scale(1e-3));
  }
}

TEST_CASE("visibility") {
  Spectrum s;
  s.detunings = {-1.0, 0.0, 1.0};
  s.values = {2.5e5, 0.94 * 2.5e5, 1.10 * 2.5e5};
  const Spectrum v = visibility(s, 2.5e5);
  CHECK(v.values[0] == 0.0);
  CHECK(v.values[1] == Approx(-0.06).epsilon(1e-12));
  CHECK(v.values[2] == Approx(0.10).epsilon(1e-12));
  CHECK_THROWS_AS(visibility(s, 0.0), DomainError);
}

TEST_CASE("resonance visibility") {
  const EmitterParams p = nominal();
  CHECK(resonance_visibility(p, {1.0, kPi / 2, 1.0}) == Approx(-0.0571428571428571).epsilon(1e-13));
  CHECK(resonance_visibility(p, {0.6, 0.0, 1.0}) == Approx(4 * 0.36 / (0.25 * 35 * 8)).epsilon(1e-13));

  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 30; ++k) {
    EmitterParams q = p;
    q.nu21 = 10.0 * u(rng);
    const ModalCoupling m{3.0 * u(rng), kTwoPi * u(rng), 1e4 + 1e5 * u(rng)};
    const double g[1] = {q.nu21};
    const double one_point = detected_spectrum(q, m, g).values[0] / m.i_e - 1.0;
    CHECK(resonance_visibility(q, m) == Approx(one_point).epsilon(1e-12).scale(1e-3));
  }

  SUBCASE("negative whenever C is below alpha gamma0 sin(psi)") {
    for (double psi : {0.3, 1.0, kPi / 2, 2.5})
      for (double f : {0.01, 0.3, 0.7, 0.999}) {
        const double c = f * p.alpha * p.gamma0 * std::sin(psi);
        CHECK(resonance_visibility(p, {c, psi, 1.0}) < 0.0);
      }
  }
  SUBCASE("monotone approach to the direct-emission limit as psi goes to zero") {
    const double c = 0.8;
    double prev = -1.0;
    for (int i = 0; i <= 100; ++i) {
      const double psi = kPi / 2 * (1.0 - i / 100.0);
      const double v = resonance_visibility(p, {c, psi, 1.0});
      CHECK(v > prev);
      prev = v;
    }
    CHECK(prev == Approx(4 * c * c / (p.alpha * p.gamma * p.gamma0)).epsilon(1e-14));
  }
}

TEST_CASE("deepest dip") {
  const EmitterParams p = nominal();
  CHECK(optimal_dip_coupling(p, kPi / 2) == Approx(1.0).epsilon(1e-15));
  CHECK(max_resonance_dip(p, kPi / 2) == Approx(0.25 * 8.0 / 35.0).epsilon(1e-14));
  // oracle: scan C
  double best = 0.0;
  for (int i = 1; i < 100000; ++i) best = std::min(best, resonance_visibility(p, {3.0 * i / 100000.0, 1.1, 1.0}));
  CHECK(max_resonance_dip(p, 1.1) == Approx(-best).epsilon(1e-8));
}

TEST_CASE("scalar quantities") {
  CHECK(absorption_cross_section(615.0) == Approx(3 * 615e-9 * 615e-9 / (2 * kPi)).epsilon(1e-14));
  CHECK(absorption_cross_section(615.0) == Approx(1.806e-13).epsilon(5e-4));
  CHECK(absorption_cross_section(1000.0) == Approx(4.775e-13).epsilon(5e-4));
  CHECK(absorption_cross_section(1230.0) == Approx(4 * absorption_cross_section(615.0)).epsilon(1e-14));
  CHECK_THROWS_AS(absorption_cross_section(0.0), DomainError);

  EmitterParams p = nominal();
  CHECK(enhancement_factor(p) == Approx(17.5).epsilon(1e-14));
  p.gamma = p.gamma0 = 10.0;
  p.alpha = 1.0;
  CHECK(enhancement_factor(p) == Approx(1.0).epsilon(1e-15));
  p.gamma = 20.0;
  p.alpha = 0.5;
  CHECK(enhancement_factor(p) == Approx(4.0).epsilon(1e-15));
}

TEST_CASE("fluorescence spectrum") {
  EmitterParams p = nominal();
  const auto grid = linear_grid(-175.0, 175.0, 3501);
  const Spectrum flat = fluorescence_spectrum(p, 0.0, grid, 12.0);
  for (double v : flat.values) CHECK(v == 12.0);

  auto fwhm = [&](const Spectrum& s) {
    std::size_t imax = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s.values[i] > s.values[imax]) imax = i;
    const double half = 0.5 * s.values[imax];
    std::size_t l = imax, r = imax;
    while (s.values[l] > half) --l;
    while (s.values[r] > half) ++r;
    auto cross = [&](std::size_t a, std::size_t b) {
      return grid[a] + (half - s.values[a]) * (grid[b] - grid[a]) / (s.values[b] - s.values[a]);
    };
    return cross(r - 1, r) - cross(l, l + 1);
  };
  const Spectrum weak = fluorescence_spectrum(p, 1e6, grid);
  CHECK(fwhm(weak) == Approx(p.gamma).epsilon(1e-3));
  CHECK(weak.values[1750] == Approx(1e6 * 4 / (p.gamma * p.gamma)).epsilon(1e-14));

  p.omega = p.gamma0;
  const Spectrum broad = fluorescence_spectrum(p, 1e6, grid, 0.0, LineshapeForm::Saturation);
  CHECK(fwhm(broad) > p.gamma * 1.01);
  CHECK_THROWS_AS(fluorescence_spectrum(p, -1.0, grid), DomainError);
}

TEST_CASE("parameter validation") {
  EmitterParams p = nominal();
  p.gamma = 5.0; // below gamma0
  CHECK_THROWS_AS(p.validate(), DomainError);
  p = nominal();
  p.alpha = 1.5;
  CHECK_THROWS_AS(p.validate(), DomainError);
  p = nominal();
  p.k_ratio = 0.5;
  CHECK_THROWS_AS(p.validate(), DomainError);

  EmitterParams u = EmitterParams::with_unknown_gamma0(nominal());
  CHECK(u.gamma0 == u.gamma);
  CHECK(u.gamma0_assumed);

  CHECK_THROWS_AS((ModalCoupling{-0.1, 0.0, 1.0}.validate()), DomainError);
  CHECK_THROWS_AS((ModalCoupling{0.1, 0.0, 0.0}.validate()), DomainError);
  CHECK(canonical_phase(-kPi / 2) == Approx(3 * kPi / 2).epsilon(1e-15));
  CHECK(canonical_phase(kTwoPi) == 0.0);
}
