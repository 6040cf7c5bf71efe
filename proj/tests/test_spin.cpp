#include <doctest.h>

#include <cmath>
#include <random>

#include "cavsqz/constants.hpp"
#include "cavsqz/error.hpp"
#include "cavsqz/rng.hpp"
#include "cavsqz/spin.hpp"
#include "dense_oracle.hpp"

using namespace cavsqz;

namespace {

CollectiveSpinState random_state(int n, std::mt19937_64& gen) {
  std::normal_distribution<double> normal;
  std::vector<Complex> a(n + 1);
  for (auto& c : a) c = {normal(gen), normal(gen)};
  auto s = CollectiveSpinState::from_amplitudes(n, std::move(a));
  s.normalize();
  return s;
}

}  // namespace

TEST_CASE("philox known-answer vectors") {
  using C = Philox4x32::Counter;
  using K = Philox4x32::Key;
  CHECK(Philox4x32::block(C{0, 0, 0, 0}, K{0, 0}) == C{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(Philox4x32::block(C{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, K{0xffffffffu, 0xffffffffu}) ==
        C{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(Philox4x32::block(C{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, K{0xa4093822u, 0x299f31d0u}) ==
        C{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("philox streams are addressable and distinct") {
  Philox4x32 a(7, 3, 2), b(7, 3, 2), c(7, 4, 2), d(7, 3, 5);
  for (int i = 0; i < 10; ++i) {
    const auto x = a();
    CHECK(x == b());
    const auto y = c();
    const auto z = d();
    (void)y;
    (void)z;
  }
  Philox4x32 e(7, 3, 2), f(7, 4, 2);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += e() == f() ? 1 : 0;
  CHECK(same < 3);
  Philox4x32 u(1, 0, 0);
  double mean = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double v = u.uniform();
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
    mean += v;
  }
  CHECK(mean / 100000 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("new_css") {
  SUBCASE("polar 0 is the top Dicke level") {
    const auto s = new_css(10, 0.0, 0.0);
    CHECK(std::abs(s.amplitude_at_two_m(10)) == doctest::Approx(1.0));
    for (std::size_t k = 0; k + 1 < s.dim(); ++k) CHECK(std::abs(s.amplitudes()[k]) < 1e-14);
  }
  SUBCASE("equatorial state has N/4 projection noise") {
    const auto s = new_css(10, 0.5 * kPi, 0.0);
    CHECK(expect(s, SpinAxis::x()).mean == doctest::Approx(5.0));
    CHECK(std::abs(expect(s, SpinAxis::z()).mean) < 1e-12);
    CHECK(expect(s, SpinAxis::z()).variance == doctest::Approx(2.5));
  }
  SUBCASE("binomial populations match the dense rotation") {
    const auto s = new_css(4, 0.5 * kPi, 0.0);
    const double expected[] = {1, 4, 6, 4, 1};
    const auto ops = oracle::spin_ops(4);
    oracle::Vec top = oracle::Vec::Zero(5);
    top(4) = 1.0;
    const oracle::Vec dense = oracle::rotation(ops, 0.5 * kPi, 0, 1, 0) * top;
    for (int k = 0; k < 5; ++k) {
      CHECK(std::norm(s.amplitudes()[k]) == doctest::Approx(expected[k] / 16.0).epsilon(1e-12));
      CHECK(std::norm(dense(k)) == doctest::Approx(expected[k] / 16.0).epsilon(1e-12));
    }
  }
  SUBCASE("invalid input") {
    CHECK_THROWS_AS(new_css(0, 0.0, 0.0), InvalidArgument);
    CHECK_THROWS_AS(new_css(4, NAN, 0.0), InvalidArgument);
  }
}

TEST_CASE("rotations") {
  std::mt19937_64 gen(11);
  SUBCASE("zero angle is the identity") {
    const auto s = random_state(9, gen);
    CHECK(overlap_abs(s, rotate(s, 0.0, SpinAxis::equatorial(0.3))) == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("pi/2 about y takes +z to +x") {
    const auto s = rotate(new_css(20, 0.0, 0.0), 0.5 * kPi, SpinAxis::y());
    CHECK(expect(s, SpinAxis::x()).mean == doctest::Approx(10.0).epsilon(1e-12));
  }
  SUBCASE("pi/2 about x takes +y to +z") {
    const auto s = rotate(new_css(20, 0.5 * kPi, 0.5 * kPi), 0.5 * kPi, SpinAxis::x());
    CHECK(expect(s, SpinAxis::z()).mean == doctest::Approx(10.0).epsilon(1e-12));
  }
  SUBCASE("composition about y") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto s = random_state(15, gen);
      std::uniform_real_distribution<double> ang(-4.0, 4.0);
      const double a = ang(gen), b = ang(gen);
      const auto two = rotate(rotate(s, a, SpinAxis::y()), b, SpinAxis::y());
      const auto one = rotate(s, a + b, SpinAxis::y());
      CHECK(std::abs(inner(two, one) - Complex(1.0, 0.0)) < 1e-10);
    }
  }
  SUBCASE("matches the dense matrix exponential, including pi") {
    for (int n : {1, 2, 5, 12}) {
      const auto ops = oracle::spin_ops(n);
      for (double angle : {0.37, kPi, -1.9, 2.0 * kPi}) {
        for (double az : {0.0, 0.5 * kPi, 1.1, 4.0}) {
          const auto s = random_state(n, gen);
          const auto out = rotate_equatorial(s, angle, az);
          const oracle::Vec ref = oracle::rotation(ops, angle, std::cos(az), std::sin(az), 0.0) * oracle::to_vec(s);
          CHECK(oracle::max_abs_diff(ref, out) < 1e-11);
        }
        const auto s = random_state(n, gen);
        const oracle::Vec ref = oracle::rotation(ops, angle, 0, 0, 1) * oracle::to_vec(s);
        CHECK(oracle::max_abs_diff(ref, rotate_z(s, angle)) < 1e-11);
      }
    }
  }
  SUBCASE("large N keeps the norm") {
    auto s = new_css(1200, 0.5 * kPi, 0.0);
    for (int i = 0; i < 5; ++i) s = rotate_equatorial(s, 0.3 + i, 0.2 * i);
    CHECK(s.norm() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("rotation cache evicts under a small limit") {
  set_rotation_cache_limit(8 * 21 * 21 + 1);
  (void)rotate(new_css(20, 0.3, 0.0), 0.4, SpinAxis::x());
  (void)rotate(new_css(10, 0.3, 0.0), 0.4, SpinAxis::x());
  CHECK(rotation_cache_entries() <= 2);
  set_rotation_cache_limit(std::size_t{1} << 30);
}

TEST_CASE("expect") {
  const auto x = new_css(100, 0.5 * kPi, 0.0);
  CHECK(std::abs(expect(x, SpinAxis::z()).mean) < 1e-10);
  CHECK(expect(x, SpinAxis::z()).variance == doctest::Approx(25.0));
  const auto z = new_css(100, 0.0, 0.0);
  CHECK(expect(z, SpinAxis::z()).mean == doctest::Approx(50.0));
  CHECK(expect(z, SpinAxis::z()).variance == doctest::Approx(0.0).epsilon(1e-9));

  // Arbitrary direction against the dense operators.
  std::mt19937_64 gen(5);
  const auto s = random_state(8, gen);
  const auto ops = oracle::spin_ops(8);
  const Vec3 n{0.48, -0.6, 0.64};
  const oracle::Mat op = n.x * ops.jx + n.y * ops.jy + n.z * ops.jz;
  const auto psi = oracle::to_vec(s);
  const double mean = oracle::expect(psi, op);
  const double var = oracle::expect(psi, op * op) - mean * mean;
  const AxisStats st = expect(s, n);
  CHECK(st.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(st.variance == doctest::Approx(var).epsilon(1e-12));
}

TEST_CASE("sample_jz") {
  Philox4x32 rng(3, 0, 0);
  const auto top = new_css(10, 0.0, 0.0);
  for (int i = 0; i < 100; ++i) CHECK(sample_jz(top, rng) == 5.0);

  const auto x = new_css(10, 0.5 * kPi, 0.0);
  std::vector<int> counts(11, 0);
  const int draws = 100000;
  double sum = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double m = sample_jz(x, rng);
    sum += m;
    ++counts[static_cast<int>(m + 5.0)];
  }
  // Chi-square against binomial(10, 1/2); 10 degrees of freedom, p = 0.01 at 23.21.
  double chi2 = 0.0;
  for (int k = 0; k <= 10; ++k) {
    const double p = std::exp(std::lgamma(11.0) - std::lgamma(k + 1.0) - std::lgamma(11.0 - k)) / 1024.0;
    const double e = p * draws;
    chi2 += (counts[k] - e) * (counts[k] - e) / e;
  }
  CHECK(chi2 < 23.21);
  const double se = std::sqrt(2.5 / draws);
  CHECK(std::abs(sum / draws) < 4.0 * se);
}

TEST_CASE("husimi_q") {
  const int n = 20;
  const auto s = new_css(n, 0.5 * kPi, 0.0);
  const int np = 121, na = 240;
  std::vector<double> polar(np), az(na);
  for (int i = 0; i < np; ++i) polar[i] = kPi * i / (np - 1);
  for (int j = 0; j < na; ++j) az[j] = kTwoPi * j / na;
  const auto q = husimi_q(s, polar, az);
  std::size_t best = 0;
  for (std::size_t i = 1; i < q.values.size(); ++i) {
    CHECK(q.values[i] >= 0.0);
    if (q.values[i] > q.values[best]) best = i;
  }
  CHECK(polar[best / na] == doctest::Approx(0.5 * kPi));
  CHECK(az[best % na] == doctest::Approx(0.0));

  // Trapezoid in polar, rectangle in azimuth (periodic).
  double integral = 0.0;
  for (int i = 0; i < np; ++i) {
    const double w = (i == 0 || i == np - 1) ? 0.5 : 1.0;
    for (int j = 0; j < na; ++j) integral += w * q.at(i, j) * std::sin(polar[i]);
  }
  integral *= (kPi / (np - 1)) * (kTwoPi / na) * (n + 1) / (4.0 * kPi);
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("norm is preserved and dimension fixed") {
  std::mt19937_64 gen(2);
  auto s = random_state(30, gen);
  s = rotate(s, 1.3, SpinAxis::x());
  s = rotate(s, -0.4, SpinAxis::z());
  CHECK(s.dim() == 31u);
  CHECK(s.norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(CollectiveSpinState::from_amplitudes(3, std::vector<Complex>(3)), InvalidArgument);
}
