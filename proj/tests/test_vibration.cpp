#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "cavsqz/constants.hpp"
#include "cavsqz/error.hpp"
#include "cavsqz/vibration.hpp"

using namespace cavsqz;

TEST_CASE("transfer function") {
  const PhysicsParams p;
  const double k = p.k();
  const double t = 0.5e-3;
  CHECK(transfer_function(1e-9, t, p) == doctest::Approx(4.0 * k * k * std::pow(t, 4)).epsilon(1e-9));
  CHECK(transfer_function(0.0, t, p) == doctest::Approx(4.0 * k * k * std::pow(t, 4)));
  for (int n = 1; n <= 4; ++n) CHECK(transfer_function(kTwoPi * n / t, t, p) < 1e-20 * transfer_function(0.0, t, p));
  const double w = kPi / t;
  CHECK(transfer_function(w, t, p) == doctest::Approx(64.0 * k * k / std::pow(w, 4)).epsilon(1e-12));
}

TEST_CASE("sin^4 integral constant") {
  // int_0^inf sin^4 x / x^4 dx = pi / 3, checked by quadrature before relying on it.
  boost::math::quadrature::tanh_sinh<double> q;
  double total = 0.0;
  for (int i = 0; i < 2000; ++i) {
    total += q.integrate([](double x) { return x < 1e-4 ? 1.0 - 2.0 * x * x / 3.0 : std::pow(std::sin(x) / x, 4); },
                         kPi * i, kPi * (i + 1));
  }
  // Tail beyond 2000 pi with sin^4 averaged to 3/8.
  total += 3.0 / 8.0 / (3.0 * std::pow(2000.0 * kPi, 3));
  CHECK(total == doctest::Approx(kPi / 3.0).epsilon(1e-9));
}

TEST_CASE("white-noise phase variance") {
  const PhysicsParams p;
  const double s0 = 1e-12;
  for (double t : {0.1e-3, 0.5e-3, 2e-3}) {
    const auto psd = PsdTable::white(s0, 1e-2 / t, 1e4 / t);
    const double phi = integrate_phase_noise(psd, t, p);
    CHECK(phi * phi == doctest::Approx(white_noise_phase_variance(s0, t, p)).epsilon(1e-3));
  }
  const auto zero = PsdTable::white(0.0, 1.0, 1e7);
  CHECK(integrate_phase_noise(zero, 1e-3, p) == 0.0);
}

TEST_CASE("coverage and parsing") {
  const PhysicsParams p;
  const auto narrow = PsdTable::white(1e-12, 1e3, 1e4);
  CHECK_THROWS_AS(integrate_phase_noise(narrow, 1e-3, p), CoverageError);
  PhaseNoiseOptions ext;
  ext.extrapolate = true;
  CHECK(integrate_phase_noise(narrow, 1e-3, p, ext) > 0.0);

  const auto table = parse_psd("# f S\n1 2e-10\n10 2e-10\n100 1e-11\n");
  REQUIRE(table.omega.size() == 3);
  CHECK(table.omega[1] == doctest::Approx(kTwoPi * 10.0));
  CHECK(table.density[0] == doctest::Approx(2e-10 / kTwoPi));
  CHECK_THROWS_AS(parse_psd("1 2\n0.5 3\n"), InvalidArgument);
  CHECK_THROWS_AS(parse_psd("1 -2\n2 3\n"), InvalidArgument);
  CHECK_THROWS_AS(read_psd_file("/nonexistent/psd.txt"), InvalidArgument);
}

TEST_CASE("budget against the SQL") {
  const PhysicsParams p;
  const double t = 1e-3;
  const int n = 1000;
  const double sql2 = 1.0 / n;
  // Choose S0 so that phi is 20 dB below the SQL.
  const double s0 = sql2 / 100.0 / white_noise_phase_variance(1.0, t, p);
  const auto b = vibration_budget(PsdTable::white(s0, 1e-2 / t, 1e4 / t), t, n, p);
  CHECK(b.sql == doctest::Approx(0.0316).epsilon(1e-3));
  CHECK(b.db_below_sql == doctest::Approx(20.0).epsilon(1e-3));
}
