#include <doctest.h>

#include "molext/errors.hpp"
#include "molext/kernels.hpp"
#include "molext/polarization.hpp"

#include <random>

using namespace molext;
using doctest::Approx;

namespace {

constexpr double kDeg = kPi / 180.0;

EmitterParams nominal() {
  EmitterParams p;
  p.gamma = 35.0;
  p.gamma0 = 8.0;
  p.alpha = 0.25;
  return p;
}

JonesField random_field(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return {{u(rng), u(rng)}, {u(rng), u(rng)}};
}

} // namespace

TEST_CASE("projection onto the analyzer") {
  const JonesField x{{1.0, 0.0}, {0.0, 0.0}};
  CHECK(std::abs(project(x, 0.0)) == 1.0);
  CHECK(std::abs(project(x, kPi / 2)) < 1e-16);
  const JonesField circ{{1.0, 0.0}, {0.0, 1.0}};
  for (double th : {0.0, 0.4, 1.3, 2.9}) CHECK(std::abs(project(circ, th)) == Approx(1.0).epsilon(1e-15));
}

TEST_CASE("ellipse construction round-trips through Stokes parameters") {
  for (double axis : {0.0, 0.35, 1.2, 2.8})
    for (double eps : {-0.6, -0.1, 0.0, 0.25, 0.7}) {
      const JonesField f = JonesField::from_ellipse(axis, eps, 2.0, 0.9);
      const Ellipse e = ellipse_of(f);
      CHECK(f.power() == Approx(4.0).epsilon(1e-14));
      CHECK(e.ellipticity == Approx(eps).epsilon(1e-12).scale(1.0));
      if (std::abs(eps) < kPi / 4 - 1e-9) {
        const double d = std::remainder(e.axis_angle - axis, kPi);
        CHECK(d == Approx(0.0).scale(1.0).epsilon(1e-12));
      }
    }
}

TEST_CASE("Malus curves") {
  std::vector<double> th(360);
  for (int i = 0; i < 360; ++i) th[i] = kPi * i / 360.0;

  SUBCASE("linear field follows cos^2 with zero minimum") {
    const auto f = JonesField::from_ellipse(0.3, 0.0);
    const auto I = malus_curve(f, th);
    for (std::size_t i = 0; i < th.size(); ++i) CHECK(I[i] == Approx(std::pow(std::cos(th[i] - 0.3), 2)).epsilon(1e-13).scale(1.0));
  }
  SUBCASE("2:1 extinction ratio") {
    const auto f = JonesField::from_ellipse(20 * kDeg, ellipticity_for_extinction_ratio(2.0));
    CHECK(extinction_ratio(f) == Approx(2.0).epsilon(1e-12));
    const auto I = malus_curve(f, th);
    const double hi = *std::max_element(I.begin(), I.end());
    const double lo = *std::min_element(I.begin(), I.end());
    CHECK(hi / lo == Approx(2.0).epsilon(1e-4));
    const auto fit = fit_malus(th, I);
    CHECK(fit.extinction_ratio == Approx(2.0).epsilon(1e-10));
    CHECK(fit.axis_angle == Approx(20 * kDeg).epsilon(1e-10));
    CHECK(fit.rms_residual < 1e-12);
  }
  SUBCASE("20 degree axis offset") {
    const auto tip = JonesField::from_ellipse(0.0, 0.2);
    const auto mol = JonesField::from_ellipse(20 * kDeg, 0.5);
    const double d = std::remainder(max_intensity_angle(mol) - max_intensity_angle(tip), kPi);
    CHECK(d == Approx(20 * kDeg).epsilon(1e-12));
  }
  SUBCASE("min/max ratio equals squared axis ratio, checked by brute force") {
    std::mt19937_64 rng(9);
    for (int k = 0; k < 20; ++k) {
      const JonesField f = random_field(rng);
      const Ellipse e = ellipse_of(f);
      double hi = 0.0, lo = 1e300, arg_hi = 0.0;
      for (int i = 0; i < 200000; ++i) {
        const double t = kPi * i / 200000.0;
        const double v = std::norm(project(f, t));
        if (v > hi) hi = v, arg_hi = t;
        lo = std::min(lo, v);
      }
      CHECK(lo / hi == Approx(std::pow(std::tan(e.ellipticity), 2)).epsilon(1e-6).scale(1.0));
      CHECK(std::remainder(arg_hi - max_intensity_angle(f), kPi) == Approx(0.0).scale(1.0).epsilon(1e-4));
    }
  }
}

TEST_CASE("effective coupling") {
  const ModalCoupling base{0.9, 1.4, 2e5};

  SUBCASE("parallel linear fields keep psi") {
    const auto tip = JonesField::from_ellipse(0.2, 0.0);
    const auto mol = JonesField::from_ellipse(0.2, 0.0, 0.5);
    for (double th : {0.0, 0.3, 1.0, 1.5, 2.5}) {
      const auto e = effective_coupling(tip, mol, th, base);
      if (e.direct_emission) continue;
      CHECK(e.coupling.psi == Approx(base.psi).epsilon(1e-12));
      CHECK(e.coupling.c_amp == Approx(base.c_amp).epsilon(1e-12));
    }
  }
  SUBCASE("baseline follows the tip projection") {
    const auto tip = JonesField::from_ellipse(0.0, 0.15);
    const auto mol = JonesField::from_ellipse(0.35, 0.4);
    for (double th : {0.0, 0.7, 1.2}) {
      const auto e = effective_coupling(tip, mol, th, base);
      CHECK(e.coupling.i_e == Approx(base.i_e * std::norm(project(tip, th)) / tip.power()).epsilon(1e-12));
      CHECK(e.tip_fraction == Approx(std::norm(project(tip, th)) / tip.power()).epsilon(1e-12));
    }
  }
  SUBCASE("ratio form relative to the reference angle") {
    const auto tip = JonesField::from_ellipse(0.0, 0.15);
    const auto mol = JonesField::from_ellipse(0.35, 0.4, 1.0, 0.6);
    const double ref = max_intensity_angle(tip);
    const auto at_ref = effective_coupling(tip, mol, ref, base);
    CHECK(at_ref.coupling.c_amp == Approx(base.c_amp).epsilon(1e-12));
    CHECK(at_ref.coupling.psi == Approx(base.psi).epsilon(1e-12));
    const double th = 1.0;
    const auto e = effective_coupling(tip, mol, th, base);
    const auto r = [&](double t) { return project(mol, t) / project(tip, t); };
    CHECK(e.coupling.c_amp == Approx(base.c_amp * std::abs(r(th)) / std::abs(r(ref))).epsilon(1e-12));
    const double dpsi = std::arg(r(th)) - std::arg(r(ref));
    CHECK(std::remainder(e.coupling.psi - base.psi - dpsi, kTwoPi) == Approx(0.0).scale(1.0).epsilon(1e-12));
  }
  SUBCASE("crossed analyzer is flagged") {
    const auto tip = JonesField::from_ellipse(0.0, 0.0);
    const auto mol = JonesField::from_ellipse(0.35, 0.3);
    const auto e = effective_coupling(tip, mol, kPi / 2, base, 0.0);
    CHECK(e.direct_emission);
    CHECK(std::isfinite(e.incoherent_rate));
    const auto near = effective_coupling(tip, mol, kPi / 2 - 1e-2, base, 0.0);
    CHECK_FALSE(near.direct_emission);
  }
  SUBCASE("residual tip ellipticity gives a positive cross-polarized surplus") {
    const auto tip = JonesField::from_ellipse(0.0, 0.22);
    const auto mol = JonesField::from_ellipse(20 * kDeg, ellipticity_for_extinction_ratio(2.0), 1.0, 0.0);
    const ModalCoupling b{1.0, kPi / 2, 2.5e5};
    const auto e90 = effective_coupling(tip, mol, kPi / 2, b);
    CHECK(resonance_visibility(nominal(), e90.coupling) > 0.0);
    const auto e0 = effective_coupling(tip, mol, 0.0, b);
    CHECK(resonance_visibility(nominal(), e0.coupling) < 0.0);
  }
}

TEST_CASE("analyzer scan invariants") {
  const EmitterParams p = nominal();
  const ModalCoupling base{0.8, 1.7, 2.5e5};
  const auto grid = linear_grid(-175.0, 175.0, 201);
  std::mt19937_64 rng(31);

  SUBCASE("30 angles over 180 degrees") {
    std::vector<double> th(30);
    for (int i = 0; i < 30; ++i) th[i] = kPi * i / 30.0;
    const auto tip = JonesField::from_ellipse(0.0, 0.2);
    const auto mol = JonesField::from_ellipse(20 * kDeg, 0.6);
    const AnalyzerScan s = analyzer_scan(p, base, tip, mol, th, grid);
    CHECK(s.size() == 30);
    CHECK(s.spectra.size() == 30);
    CHECK(s.i_e_vs_theta.size() == 30);
    for (const auto& sp : s.spectra) CHECK(sp.size() == grid.size());
  }
  SUBCASE("single angle reduces to one detected spectrum") {
    const auto tip = JonesField::from_ellipse(0.0, 0.2);
    const auto mol = JonesField::from_ellipse(20 * kDeg, 0.6);
    const double th[1] = {0.4};
    const AnalyzerScan s = analyzer_scan(p, base, tip, mol, th, grid);
    const auto e = effective_coupling(tip, mol, 0.4, base);
    const Spectrum d = detected_spectrum(p, e.coupling, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) CHECK(s.spectra[0].values[i] == Approx(d.values[i]).epsilon(1e-12));
  }
  SUBCASE("crossed-pair sum is constant, absorptive and pi-periodic") {
    for (int k = 0; k < 10; ++k) {
      const JonesField tip = random_field(rng), mol = random_field(rng);
      std::vector<double> th, th2, thp;
      for (int i = 0; i < 12; ++i) {
        th.push_back(kPi * i / 12.0);
        th2.push_back(kPi * i / 12.0 + kPi / 2);
        thp.push_back(kPi * i / 12.0 + kPi);
      }
      const auto a = analyzer_scan(p, base, tip, mol, th, grid);
      const auto b = analyzer_scan(p, base, tip, mol, th2, grid);
      const auto c = analyzer_scan(p, base, tip, mol, thp, grid);
      for (std::size_t j = 0; j < th.size(); ++j) {
        CHECK(a.thetas[j] == Approx(c.thetas[j]).epsilon(1e-12).scale(1.0));
        CHECK(a.i_e_vs_theta[j] + b.i_e_vs_theta[j] == Approx(base.i_e).epsilon(1e-12));
        for (std::size_t i = 0; i < grid.size(); i += 10) {
          CHECK(a.spectra[j].values[i] == Approx(c.spectra[j].values[i]).epsilon(1e-12));
          const double s0 = a.spectra[0].values[i] + b.spectra[0].values[i];
          CHECK(a.spectra[j].values[i] + b.spectra[j].values[i] == Approx(s0).epsilon(1e-12));
        }
      }
    }
  }
  SUBCASE("summed spectrum of the cross-polarized configuration is a dip") {
    const auto tip = JonesField::from_ellipse(0.0, 0.22);
    const auto mol = JonesField::from_ellipse(20 * kDeg, ellipticity_for_extinction_ratio(2.0));
    const ModalCoupling b{1.0, kPi / 2, 2.5e5};
    const double th[2] = {0.3, 0.3 + kPi / 2};
    const auto s = analyzer_scan(p, b, tip, mol, th, grid);
    std::vector<double> sum(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) sum[i] = s.spectra[0].values[i] + s.spectra[1].values[i];
    CHECK(sum[100] < b.i_e);
  }
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(JonesField({0.0, 0.0}, {0.0, 0.0}).validate(), DomainError);
  CHECK_THROWS_AS(ellipticity_for_extinction_ratio(0.5), DomainError);
  CHECK(fold_angle(-0.1) == Approx(kPi - 0.1).epsilon(1e-15));
  CHECK(fold_angle(kPi + 0.2) == Approx(0.2).epsilon(1e-12));
  const EmitterParams p = nominal();
  std::vector<double> none, grid{0.0};
  CHECK_THROWS(analyzer_scan(p, {1.0, 0.0, 1.0}, JonesField{}, JonesField{}, none, grid));
}
