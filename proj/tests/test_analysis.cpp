#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "cavsqz/analysis.hpp"
#include "cavsqz/constants.hpp"
#include "cavsqz/dynamics.hpp"
#include "cavsqz/error.hpp"

using namespace cavsqz;

namespace {

std::vector<double> grid(int n, double lo, double hi) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = lo + (hi - lo) * i / n;
  return g;
}

TrialRecord final_record(double w1, double w2) {
  TrialRecord r;
  r.omega1f = w1;
  r.omega2f = w2;
  return r;
}

}  // namespace

TEST_CASE("fringe fit") {
  const auto phases = grid(12, 0.0, kTwoPi);
  SUBCASE("exact data") {
    for (double phi0 : {0.0, 0.4, 3.5, 6.0}) {
      std::vector<double> y;
      for (double p : phases) y.push_back(1.5 + 2.5 * std::sin(p - phi0));
      const auto f = fit_fringe(phases, y);
      CHECK(f.y0 == doctest::Approx(1.5).epsilon(1e-9));
      CHECK(f.amplitude == doctest::Approx(2.5).epsilon(1e-9));
      const double d = std::remainder(f.phi0 - phi0, kTwoPi);
      CHECK(std::abs(d) < 1e-9);
      CHECK(f.residual_rms < 1e-9);
    }
  }
  SUBCASE("noisy data: standard errors are honest") {
    std::mt19937_64 gen(17);
    std::normal_distribution<double> noise(0.0, 0.2);
    const auto ph = grid(40, 0.0, kTwoPi);
    int inside = 0;
    const int reps = 400;
    for (int r = 0; r < reps; ++r) {
      std::vector<double> y;
      for (double p : ph) y.push_back(3.0 * std::sin(p - 1.0) + noise(gen));
      const auto f = fit_fringe(ph, y);
      if (std::abs(f.amplitude - 3.0) < f.se_amplitude) ++inside;
    }
    // One-sigma coverage 68 % +- 3 standard deviations of a binomial.
    CHECK(inside > reps * 0.6);
    CHECK(inside < reps * 0.76);
  }
  SUBCASE("constant data has no fringe") {
    CHECK_THROWS_AS(fit_fringe(phases, std::vector<double>(phases.size(), 2.0)), FitError);
  }
  SUBCASE("too few points or too short a span") {
    CHECK_THROWS_AS(fit_fringe({0.0, 1.0, 2.0, 3.0}, {0, 1, 0, 1}), InsufficientData);
    CHECK_THROWS_AS(fit_fringe(grid(8, 0.0, 1.0), std::vector<double>(8, 0.0)), InsufficientData);
  }
}

TEST_CASE("jz from shifts") {
  DispersiveShifts s;
  s.chi0 = hz(335.0);
  s.chi_down = hz(-12.3);
  s.chi2 = hz(665.0);
  s.epsilon = 0.0;
  TrialRecord r;
  r.omega1p = 2.0 * 10.0 * (s.chi0 - s.chi_down);
  r.omega2p = 0.0;
  CHECK(jz_from_shifts(r, s, ShiftMode::QndPre) == doctest::Approx(10.0));
  CHECK(fringe_observable(r, ShiftMode::QndPre) == doctest::Approx(10.0 * (s.chi0 - s.chi_down)));

  const auto f = final_record(2.0 * s.chi2 * 7.0, 0.0);
  CHECK(jz_from_shifts(f, s, ShiftMode::PumpedFinal) == doctest::Approx(7.0));
  CHECK(fringe_observable(f, ShiftMode::PumpedFinal) == doctest::Approx(14.0 * s.chi2));
  s.epsilon = 0.01;
  const auto g = final_record(1000.0, 200.0);
  CHECK(jz_from_shifts(g, s, ShiftMode::PumpedFinal) ==
        doctest::Approx(800.0 / (2.0 * s.chi2) - 0.01 / s.chi2 * 200.0));

  TrialRecord missing;
  CHECK_THROWS_AS(jz_from_shifts(missing, s, ShiftMode::QndPre), MissingOutcome);
  CHECK_THROWS_AS(fringe_observable(missing, ShiftMode::PumpedFinal), MissingOutcome);
}

TEST_CASE("theta from record") {
  FringeFit fringe;
  fringe.amplitude = 250.0;
  const auto r = final_record(60.0, 10.0);
  SUBCASE("zero epsilon is the plain ratio") {
    CHECK(theta_from_record(r, fringe, ShiftMode::PumpedFinal, 0.0) == doctest::Approx(50.0 / 250.0));
  }
  SUBCASE("homogeneous of degree zero in the shifts") {
    FringeFit f3 = fringe;
    f3.amplitude *= 3.0;
    const auto r3 = final_record(180.0, 30.0);
    for (double eps : {0.0, 0.01, -0.02}) {
      CHECK(theta_from_record(r3, f3, ShiftMode::PumpedFinal, eps) ==
            doctest::Approx(theta_from_record(r, fringe, ShiftMode::PumpedFinal, eps)));
    }
  }
  SUBCASE("epsilon correction") {
    const double eps = 0.01;
    CHECK(theta_from_record(r, fringe, ShiftMode::PumpedFinal, eps) ==
          doctest::Approx((50.0 - eps * 70.0 + 2.0 * eps * eps * 10.0) / 250.0));
  }
  fringe.amplitude = 0.0;
  CHECK_THROWS_AS(theta_from_record(r, fringe, ShiftMode::PumpedFinal, 0.0), InvalidArgument);
}

TEST_CASE("Wineland estimator") {
  const double j_c = 300.0;
  SUBCASE("planted W = 0.5") {
    std::mt19937_64 gen(23);
    std::normal_distribution<double> theta(0.0, std::sqrt(0.5 / (2.0 * j_c)));
    std::vector<double> t(4000);
    for (auto& v : t) v = theta(gen);
    const auto r = wineland(t, j_c, BootstrapOptions{500, 1, 30});
    CHECK(r.w == doctest::Approx(0.5).epsilon(0.05));
    CHECK(r.w_db == doctest::Approx(-10.0 * std::log10(r.w)));
    CHECK(r.ci68.lo <= r.w);
    CHECK(r.ci68.hi >= r.w);
    CHECK(r.ci95.lo <= r.ci68.lo);
    CHECK(r.ci95.hi >= r.ci68.hi);
    CHECK(r.ci95.lo < 0.5);
    CHECK(r.ci95.hi > 0.5);
    // Bootstrap width against the Gaussian variance-of-variance: sd(W) = W sqrt(2 / (n - 1)).
    const double sd = r.w * std::sqrt(2.0 / 3999.0);
    CHECK((r.ci68.hi - r.ci68.lo) == doctest::Approx(2.0 * sd).epsilon(0.25));
  }
  SUBCASE("deterministic for a seed") {
    std::vector<double> t;
    for (int i = 0; i < 50; ++i) t.push_back(std::sin(1.3 * i) * 0.01);
    const auto a = wineland(t, j_c, BootstrapOptions{200, 7, 30});
    const auto b = wineland(t, j_c, BootstrapOptions{200, 7, 30});
    CHECK(a.ci95.lo == b.ci95.lo);
    CHECK(a.ci95.hi == b.ci95.hi);
  }
  SUBCASE("insufficient data") {
    CHECK_THROWS_AS(wineland(std::vector<double>(10, 0.1), j_c), InsufficientData);
    CHECK_THROWS_AS(wineland(std::vector<double>(40, 0.1), 0.0), InvalidArgument);
  }
  SUBCASE("record overload subtracts the pre estimate") {
    DispersiveShifts s;
    s.chi0 = 1.0;
    s.chi_down = 0.0;
    s.chi2 = 1.0;
    FringeFit with;
    with.amplitude = 100.0;
    FringeFit pre;
    pre.amplitude = 50.0;
    std::vector<TrialRecord> recs;
    for (int i = 0; i < 40; ++i) {
      TrialRecord r;
      const double th = 0.01 * std::sin(i);
      r.omega1f = 100.0 * th;
      r.omega2f = 0.0;
      r.omega1p = 2.0 * 50.0 * th;
      r.omega2p = 0.0;
      recs.push_back(r);
    }
    const auto th = thetas_for(recs, with, s, SignalSpec{ShiftMode::PumpedFinal, true}, pre);
    for (double v : th) CHECK(std::abs(v) < 1e-15);
    CHECK_THROWS_AS(thetas_for(recs, with, s, SignalSpec{ShiftMode::PumpedFinal, true}, std::nullopt),
                    InvalidArgument);
    const auto w = wineland(recs, with, with, ShiftMode::PumpedFinal, s, SignalSpec{}, std::nullopt,
                            BootstrapOptions{50, 1, 30});
    CHECK(w.j_s == doctest::Approx(50.0));
    CHECK(w.j_c == doctest::Approx(50.0));
  }
}

TEST_CASE("variance ellipse") {
  SUBCASE("exact sinusoid") {
    std::map<double, double> v;
    for (double a : grid(9, -0.5 * kPi, 0.5 * kPi)) v[a] = 2.0 - 1.5 * std::cos(2.0 * (a - 0.3));
    const auto e = variance_vs_alpha(v);
    CHECK(e.a == doctest::Approx(2.0));
    CHECK(e.c == doctest::Approx(1.5));
    CHECK(e.alpha_min == doctest::Approx(0.3));
    CHECK(e.v_min == doctest::Approx(0.5));
    CHECK(ellipse_curve(e, 0.3) == doctest::Approx(0.5));
  }
  SUBCASE("mu = 0 is flat") {
    const auto css = new_css(50, 0.5 * kPi, 0.0);
    std::map<double, double> v;
    for (double a : grid(10, -0.5 * kPi, 0.5 * kPi)) v[a] = expect(rotate(css, a, SpinAxis::x()), SpinAxis::z()).variance / 12.5;
    const auto e = variance_vs_alpha(v);
    CHECK(e.c < 1e-10);
    CHECK(e.v_min == doctest::Approx(1.0).epsilon(1e-10));
  }
  SUBCASE("twisted state against the exact optimum") {
    const auto s = twist(new_css(50, 0.5 * kPi, 0.0), TwistSpec{0.05, hz(10.0), false, 0.0});
    std::map<double, double> v;
    for (double a : grid(10, -0.5 * kPi, 0.5 * kPi)) v[a] = expect(rotate(s, a, SpinAxis::x()), SpinAxis::z()).variance / 12.5;
    const auto e = variance_vs_alpha(v);
    const auto opt = optimal_twist_analysis(50, 0.05);
    CHECK(e.v_min == doctest::Approx(opt.v_min).epsilon(1e-9));
    CHECK(std::abs(std::remainder(e.alpha_min - opt.alpha0, kPi)) < 1e-9);
  }
  CHECK_THROWS_AS(variance_vs_alpha({{0.0, 1.0}, {0.1, 1.0}}), InsufficientData);
}

TEST_CASE("tomography") {
  const auto alphas = grid(12, -0.5 * kPi, 0.5 * kPi);
  SUBCASE("coherent state is isotropic") {
    const auto t = tomography(new_css(100, 0.5 * kPi, 0.0), alphas, 21, 4000, 3);
    CHECK(t.anisotropy() < 1.25);
    for (const auto& row : t.counts) {
      double sum = 0.0;
      for (double c : row) sum += c;
      CHECK(sum == doctest::Approx(1.0));
    }
  }
  SUBCASE("QND-conditioned state is squeezed along z") {
    Philox4x32 rng(5, 0, 0);
    const auto q = qnd_measure(new_css(100, 0.5 * kPi, 0.0), 1.5, rng).state;
    const auto t = tomography(q, alphas, 21, 4000, 3);
    CHECK(t.anisotropy() > 2.0);
    CHECK(std::abs(std::remainder(t.alpha_of_min(), kPi)) < 0.3);
  }
  SUBCASE("one-axis twisted state has its minimum at alpha0") {
    const auto s = twist(new_css(100, 0.5 * kPi, 0.0), TwistSpec{0.03, hz(10.0), false, 0.0});
    const auto fine = grid(36, -0.5 * kPi, 0.5 * kPi);
    const auto t = tomography(s, fine, 31, 4000, 9);
    const double a0 = optimal_twist_analysis(100, 0.03).alpha0;
    CHECK(std::abs(std::remainder(t.alpha_of_min() - a0, kPi)) < 0.15);
    CHECK(t.anisotropy() > 3.0);
  }
  CHECK_THROWS_AS(tomography(new_css(4, 0.5 * kPi, 0.0), {0.0, 0.1}, 5, 10, 1), InvalidArgument);
}
