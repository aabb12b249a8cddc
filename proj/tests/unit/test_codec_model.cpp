#include <cmath>
#include <random>

#include "artic/codec_model.hpp"
#include "doctest.h"

using namespace artic;
using namespace artic::codec;

TEST_CASE("bits halve every 6 QP") {
  CHECK(bits_for_qp(32, 1000, 32) == 1000);
  CHECK(bits_for_qp(26, 1000, 32) == doctest::Approx(2000));
  CHECK(bits_for_qp(44, 1000, 32) == doctest::Approx(250));
}

TEST_CASE("frame budgets") {
  const FrameSpec spec;
  CHECK(budget_bytes(spec, 968) == 4033);
  CHECK(budget_bytes(spec, 290) == 1208);
  CHECK(encode_uniform(spec, RateModel{}, 968).total_bytes == 4033);
}

TEST_CASE("reference calibration: QP 32 at 1000 kbps") {
  const FrameSpec spec;
  const auto f = encode_uniform(spec, RateModel{}, 1000);
  CHECK(f.mean_qp() == 32);
  CHECK(encode_uniform(spec, RateModel{}, 2000).mean_qp() == 26);
  CHECK(encode_uniform(spec, RateModel{}, 250).mean_qp() == 44);
}

TEST_CASE("uniform encoding splits bits by area and clamps QP") {
  FrameSpec spec;
  spec.width = 1000;
  spec.height = 700;
  const auto f = encode_uniform(spec, RateModel{}, 500);
  CHECK(f.total_patch_bits() == doctest::Approx(f.total_bytes * 8.0));
  const auto& g = f.grid;
  CHECK(f.patches[g.index(15, 10)].bits / f.patches[g.index(0, 0)].bits ==
        doctest::Approx(40.0 * 60.0 / (64.0 * 64.0)));
  CHECK(encode_uniform(FrameSpec{}, RateModel{}, 1e6).mean_qp() == 0);
}

TEST_CASE("tiny budgets floor at one byte per patch") {
  const FrameSpec spec;
  const auto f = encode_uniform(spec, RateModel{}, 10);
  CHECK(f.budget_floored);
  CHECK(f.total_bytes == 240);
  CHECK(f.mean_qp() == 51);
  CHECK_FALSE(encode_uniform(spec, RateModel{}, 968).budget_floored);
}

TEST_CASE("invalid encodes") {
  FrameSpec spec;
  CHECK_THROWS_AS(encode_uniform(spec, RateModel{}, 0), InputError);
  spec.width = 0;
  CHECK_THROWS_AS(encode_uniform(spec, RateModel{}, 500), ConfigError);
  const FrameSpec ok;
  const auto wrong = zeco::QpMap::uniform(zeco::PatchGrid::make(640, 360, 64), 30);
  CHECK_THROWS_AS(encode_with_map(ok, RateModel{}, 500, wrong), InputError);
}

TEST_CASE("a flat map reproduces the uniform allocation") {
  const FrameSpec spec;
  const auto grid = spec.grid();
  const auto shaped = encode_with_map(spec, RateModel{}, 1000, zeco::QpMap::uniform(grid, 20));
  const auto uniform = encode_uniform(spec, RateModel{}, 1000);
  CHECK(shaped.total_bytes == uniform.total_bytes);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    CHECK(shaped.patches[k].bits == doctest::Approx(uniform.patches[k].bits));
    CHECK(shaped.patches[k].qp == doctest::Approx(32.0).epsilon(1e-3));
  }
}

TEST_CASE("two-patch frame splits bits 4:1 for QPs 20 and 32") {
  FrameSpec spec;
  spec.width = 128;
  spec.height = 64;
  zeco::QpMap map = zeco::QpMap::uniform(spec.grid(), 20);
  map.qp[1] = 32;
  const auto f = encode_with_map(spec, RateModel{}, 100, map);
  CHECK(f.patches[0].bits / f.patches[1].bits == doctest::Approx(4.0));
  CHECK(f.patches[1].qp - f.patches[0].qp == doctest::Approx(12.0));
}

TEST_CASE("map encoding conserves the budget and the map shape") {
  const FrameSpec spec;
  const auto grid = spec.grid();
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> q(20, 51);
  std::uniform_real_distribution<double> rate(100.0, 5000.0);
  for (int trial = 0; trial < 500; ++trial) {
    zeco::QpMap map = zeco::QpMap::uniform(grid, 30);
    for (auto& v : map.qp) v = q(rng);
    const Kbps r = rate(rng);
    const auto f = encode_with_map(spec, RateModel{}, r, map);
    const auto u = encode_uniform(spec, RateModel{}, r);
    REQUIRE(f.total_bytes == u.total_bytes);
    REQUIRE(std::abs(f.total_patch_bits() - f.total_bytes * 8.0) < 1e-6 * f.total_bytes);
    bool clamped = false;
    for (const auto& p : f.patches) clamped |= p.qp == 0.0 || p.qp == 51.0;
    if (!clamped) {
      for (std::size_t k = 1; k < grid.size(); ++k)
        REQUIRE(f.patches[k].qp - f.patches[0].qp ==
                doctest::Approx(map.qp[k] - map.qp[0]).epsilon(1e-9));
    }
    for (const auto& p : f.patches) {
      REQUIRE(p.qp >= 0.0);
      REQUIRE(p.qp <= 51.0);
    }
  }
}

TEST_CASE("raising the target never raises any achieved QP") {
  const FrameSpec spec;
  const auto grid = spec.grid();
  zeco::QpMap map = zeco::QpMap::uniform(grid, 20);
  for (std::size_t k = 0; k < grid.size(); ++k) map.qp[k] = 20 + static_cast<int>(k % 32);
  double prev_uniform = 52;
  std::vector<double> prev(grid.size(), 52);
  for (Kbps r = 50; r <= 8000; r += 37) {
    const double u = encode_uniform(spec, RateModel{}, r).mean_qp();
    REQUIRE(u <= prev_uniform);
    prev_uniform = u;
    const auto f = encode_with_map(spec, RateModel{}, r, map);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      REQUIRE(f.patches[k].qp <= prev[k] + 1e-12);
      prev[k] = f.patches[k].qp;
    }
  }
}

TEST_CASE("region mean QP") {
  const FrameSpec spec;
  auto f = encode_uniform(spec, RateModel{}, 1000);
  f.patches[f.grid.index(0, 0)].qp = 10;
  CHECK(f.region_mean_qp({0, 0, 64, 64, 0}) == 10);
  CHECK(f.region_mean_qp({0, 0, 100, 10, 0}) == doctest::Approx(21));
  CHECK(std::isnan(f.region_mean_qp({2000, 2000, 10, 10, 0})));
}
