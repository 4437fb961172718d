// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include "crs/scoring.hpp"
#include "test_support.hpp"

using namespace crs;
using Catch::Matchers::WithinAbs;

namespace {
constexpr double kTol = 1e-12;
const Duration W = minutes(240);
}  // namespace

TEST_CASE("accuracy ratio", "[scoring]") {
  REQUIRE_THAT(accuracy_ratio(3, 1), WithinAbs(0.75, kTol));
  REQUIRE_THAT(accuracy_ratio(0, 0), WithinAbs(1.0, kTol));
  REQUIRE_THAT(accuracy_ratio(5, 0), WithinAbs(1.0, kTol));
  REQUIRE_THAT(accuracy_ratio(0, 4), WithinAbs(0.0, kTol));
}

TEST_CASE("accuracy multiplier", "[scoring]") {
  REQUIRE_THAT(accuracy_multiplier(1.0), WithinAbs(1.0, kTol));
  REQUIRE_THAT(accuracy_multiplier(0.0), WithinAbs(0.75, kTol));
  REQUIRE_THAT(accuracy_multiplier(0.75), WithinAbs(0.9375, kTol));
  REQUIRE_THROWS_AS(accuracy_multiplier(1.5), InvariantError);
  REQUIRE_THROWS_AS(accuracy_multiplier(-0.1), InvariantError);
}

TEST_CASE("time multiplier", "[scoring]") {
  REQUIRE_THAT(time_multiplier(Duration{0}, W), WithinAbs(0.5, kTol));
  REQUIRE_THAT(time_multiplier(W, W), WithinAbs(1.0, kTol));
  REQUIRE_THAT(time_multiplier(W / 2, W), WithinAbs(0.75, kTol));
  REQUIRE_THROWS_AS(time_multiplier(W + Duration{1}, W), InvariantError);
  REQUIRE_THROWS_AS(time_multiplier(Duration{-1}, W), InvariantError);
  REQUIRE_THROWS_AS(time_multiplier(Duration{0}, Duration{0}), InvariantError);
}

TEST_CASE("component points", "[scoring]") {
  REQUIRE_THAT(component_points(ScoreKind::Patch, true, 1.0), WithinAbs(6.0, kTol));
  REQUIRE_THAT(component_points(ScoreKind::POV, false, 0.9), WithinAbs(0.0, kTol));
  REQUIRE_THAT(component_points(ScoreKind::Sarif, true, 0.5), WithinAbs(0.5, kTol));
  REQUIRE_THAT(component_points(ScoreKind::POV, true, 0.75), WithinAbs(1.5, kTol));
  REQUIRE_THAT(component_points(ScoreKind::Bundle, true, 0.8), WithinAbs(0.8, kTol));
}

TEST_CASE("challenge score", "[scoring]") {
  ScoreInputs perfect{4, 0, W, W};
  auto s = challenge_score({2, 6, 1, 1, 1.0, 0}, perfect);
  REQUIRE_THAT(s.total, WithinAbs(10.0, kTol));
  REQUIRE_THAT(s.am, WithinAbs(1.0, kTol));

  auto zero = challenge_score({}, ScoreInputs{0, 0, Duration{0}, W});
  REQUIRE_THAT(zero.total, WithinAbs(0.0, kTol));

  auto half = challenge_score({2, 0, 0, 0, 1.0, 0}, ScoreInputs{1, 1, Duration{0}, W});
  REQUIRE_THAT(half.am, WithinAbs(0.875, kTol));
  REQUIRE_THAT(half.total, WithinAbs(1.75, kTol));
}

TEST_CASE("leaderboard score", "[scoring]") {
  REQUIRE(leaderboard_score(1, 1) == 8);
  REQUIRE(leaderboard_score(0, 0) == 0);
  REQUIRE(leaderboard_score(3, 2) == 18);
}

TEST_CASE("multipliers stay in range and are monotone", "[scoring][property]") {
  test::Gen g(11);
  for (int i = 0; i < 2000; ++i) {
    Duration window{g.range(1, 1 << 28)};
    Duration a{g.range(0, static_cast<int>(window.count()))};
    Duration b{g.range(0, static_cast<int>(window.count()))};
    double ta = time_multiplier(a, window), tb = time_multiplier(b, window);
    REQUIRE(ta >= 0.5);
    REQUIRE(ta <= 1.0);
    if (a <= b) REQUIRE(ta <= tb);

    auto acc = static_cast<std::uint64_t>(g.range(0, 100));
    auto inacc = static_cast<std::uint64_t>(g.range(0, 100));
    double am = accuracy_multiplier(accuracy_ratio(acc, inacc));
    REQUIRE(am >= 0.75);
    REQUIRE(am <= 1.0);
    REQUIRE(accuracy_multiplier(accuracy_ratio(acc + 1, inacc)) >= am);

    ScoreComponents c{g.range(0, 20) * 0.1, g.range(0, 60) * 0.1, g.range(0, 10) * 0.1, g.range(0, 10) * 0.1,
                      1.0, 0};
    ScoreInputs in{acc, inacc, a, window};
    auto s = challenge_score(c, in);
    REQUIRE(s.total >= 0);
    // Linear in each component at fixed AM.
    ScoreComponents doubled = c;
    doubled.prs *= 2;
    auto s2 = challenge_score(doubled, in);
    REQUIRE_THAT(s2.total - s.total, WithinAbs(am * c.prs, 1e-9));
  }
}
