#include <cmath>
#include <random>

#include "artic/recap_abr.hpp"
#include "doctest.h"

using namespace artic;
using namespace artic::abr;

namespace {

std::optional<ConfidenceSample> fresh(double c, Millis now = 0.0) {
  return ConfidenceSample{c, now - 1300.0, now};
}

}  // namespace

TEST_CASE("confidence gap") {
  const ControllerConfig cfg;
  CHECK(confidence_gap(cfg, 0.8) == 0.0);
  CHECK(confidence_gap(cfg, 0.4) == doctest::Approx(0.5));
  CHECK(confidence_gap(cfg, 1.0) == doctest::Approx(-0.25));
  CHECK_THROWS_AS(confidence_gap(cfg, 1.01), InputError);
  CHECK_THROWS_AS(confidence_gap(cfg, -0.01), InputError);
  CHECK_THROWS_AS(confidence_gap(cfg, NAN), InputError);
}

TEST_CASE("weight keeps the sign and raises the magnitude to gamma") {
  const ControllerConfig cfg;
  CHECK(weight(cfg, 0.0) == 0.0);
  CHECK(weight(cfg, 0.5) == doctest::Approx(0.25));
  CHECK(weight(cfg, -0.25) == doctest::Approx(-0.0625));
  ControllerConfig cubic = cfg;
  cubic.gamma = 3.0;
  CHECK(weight(cubic, -0.5) == doctest::Approx(-0.125));
}

TEST_CASE("next_bitrate examples") {
  const ControllerConfig cfg;
  CHECK(next_bitrate(cfg, 1000, 3000, fresh(0.4), 0).rate_kbps == doctest::Approx(1500).epsilon(1e-12));
  CHECK(next_bitrate(cfg, 1000, 3000, fresh(1.0), 0).rate_kbps == doctest::Approx(875).epsilon(1e-12));
  CHECK(next_bitrate(cfg, 1000, 3000, fresh(0.8), 0).rate_kbps == 1000);
  for (double c : {0.0, 0.3, 0.8, 1.0}) {
    const auto d = next_bitrate(cfg, 1000, 800, fresh(c), 0);
    CHECK(d.rate_kbps == 800);
    CHECK(d.capped_by_cc);
  }
}

TEST_CASE("decision carries gap and weight") {
  const ControllerConfig cfg;
  const auto d = next_bitrate(cfg, 1000, 3000, fresh(0.4), 0);
  CHECK(d.gap == doctest::Approx(0.5));
  CHECK(d.weight == doctest::Approx(0.25));
  CHECK_FALSE(d.capped_by_cc);
}

TEST_CASE("missing or stale confidence falls back to the estimate") {
  const ControllerConfig cfg;
  auto d = next_bitrate(cfg, 1000, 3000, std::nullopt, 0);
  CHECK(d.rate_kbps == 3000);
  CHECK(d.capped_by_cc);
  d = next_bitrate(cfg, 1000, 9000, std::nullopt, 0);
  CHECK(d.rate_kbps == 4000);  // ceiling
  const auto old = ConfidenceSample{1.0, 0.0, 1000.0};
  CHECK(next_bitrate(cfg, 1000, 3000, old, 4000.0).rate_kbps == 875);
  CHECK(next_bitrate(cfg, 1000, 3000, old, 4000.1).rate_kbps == 3000);
  CHECK(is_stale(cfg, old, 4000.1));
  CHECK_FALSE(is_stale(cfg, old, 4000.0));
}

TEST_CASE("non-positive estimate returns the floor and flags a fault") {
  const ControllerConfig cfg;
  for (double b : {0.0, -5.0}) {
    const auto d = next_bitrate(cfg, 1000, b, fresh(0.5), 0);
    CHECK(d.rate_kbps == cfg.floor_kbps);
    CHECK(d.estimator_fault);
  }
}

TEST_CASE("config validation") {
  ControllerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.tau = 1.2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.gamma = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.floor_kbps = 5000;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("fuzzed decisions never exceed the estimate or leave the bounds") {
  const ControllerConfig cfg;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> rate(cfg.floor_kbps, 6000.0);
  std::uniform_real_distribution<double> est(1.0, 8000.0);
  std::uniform_real_distribution<double> conf(0.0, 1.0);
  std::bernoulli_distribution has_conf(0.9);
  for (int i = 0; i < 100000; ++i) {
    const double r = rate(rng);
    const double b = est(rng);
    const auto latest = has_conf(rng) ? fresh(conf(rng)) : std::nullopt;
    const auto d = next_bitrate(cfg, r, b, latest, 0);
    REQUIRE(d.rate_kbps <= b);
    REQUIRE(d.rate_kbps <= cfg.ceiling_kbps);
    if (b >= cfg.floor_kbps) REQUIRE(d.rate_kbps >= cfg.floor_kbps);
    const auto tick = cap_bitrate(cfg, r, b, latest, 0);
    REQUIRE(tick.rate_kbps <= b);
  }
}

TEST_CASE("fixed point at c = tau") {
  const ControllerConfig cfg;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> rate(cfg.floor_kbps, cfg.ceiling_kbps);
  for (int i = 0; i < 1000; ++i) {
    const double r = rate(rng);
    const double b = r + std::uniform_real_distribution<double>(0.0, 3000.0)(rng);
    REQUIRE(next_bitrate(cfg, r, b, fresh(cfg.tau), 0).rate_kbps == r);
  }
}

TEST_CASE("rate is nonincreasing in confidence") {
  const ControllerConfig cfg;
  double prev = INFINITY;
  for (int k = 0; k <= 1000; ++k) {
    const double c = k / 1000.0;
    const double rate = next_bitrate(cfg, 1500, 3500, fresh(c), 0).rate_kbps;
    REQUIRE(rate <= prev);
    prev = rate;
  }
}

TEST_CASE("opposite gaps move the rate symmetrically for gamma 2") {
  const ControllerConfig cfg;
  // delta = +-0.25 at c = 0.6 and c = 1.0.
  const double up = next_bitrate(cfg, 2000, 3000, fresh(0.6), 0).rate_kbps - 2000;
  const double down = 2000 - next_bitrate(cfg, 2000, 3000, fresh(1.0), 0).rate_kbps;
  CHECK(up == doctest::Approx(down));
  CHECK(up == doctest::Approx(62.5));
}

TEST_CASE("iterating under constant low confidence converges toward the estimate") {
  const ControllerConfig cfg;
  double r = 500;
  double gap = 3000 - r;
  for (int i = 0; i < 200; ++i) {
    r = next_bitrate(cfg, r, 3000, fresh(0.3), 0).rate_kbps;
    REQUIRE(3000 - r <= gap);
    gap = 3000 - r;
  }
  CHECK(r == doctest::Approx(3000).epsilon(1e-6));
}

TEST_CASE("floor yields to the estimate to keep headroom") {
  const ControllerConfig cfg;
  CHECK(next_bitrate(cfg, 100, 60, fresh(1.0), 0).rate_kbps == 60);
  CHECK(next_bitrate(cfg, 150, 3000, fresh(1.0), 0).rate_kbps == cfg.floor_kbps);
}

TEST_CASE("controller holds the last confidence and caps between feedback") {
  RecapController ctl(ControllerConfig{});
  CHECK(ctl.sending_rate(2500, 0) == 2500);  // no confidence yet
  ctl.on_confidence({1.0, 0, 1300}, 1000, 3000, 1300);
  CHECK(ctl.target_kbps() == doctest::Approx(875));
  CHECK(ctl.sending_rate(3000, 1400) == doctest::Approx(875));
  CHECK(ctl.sending_rate(600, 1400) == 600);
  ctl.on_tick(700, 2000);
  CHECK(ctl.target_kbps() == 700);
  CHECK(ctl.last_decision().capped_by_cc);
  // Stale: tracks the estimate again.
  CHECK(ctl.sending_rate(3200, 1300 + 3001) == 3200);
}
