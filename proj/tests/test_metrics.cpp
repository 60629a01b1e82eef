#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "lfbit/error.hpp"
#include "lfbit/metrics.hpp"
#include "oracles.hpp"

using namespace lfbit;

namespace {

PlaneView plane(const std::vector<std::uint8_t>& s, int w, int h) { return {s, w, h}; }

}  // namespace

TEST_CASE("frame_mse") {
  const std::vector<std::uint8_t> z{0, 0}, a{3, 4}, one{255}, zero{0};
  CHECK(frame_mse(plane(a, 2, 1), plane(a, 2, 1)) == 0.0);
  CHECK(frame_mse(plane(z, 2, 1), plane(a, 2, 1)) == 12.5);
  CHECK(frame_mse(plane(one, 1, 1), plane(zero, 1, 1)) == 65025.0);
  CHECK_THROWS_AS(frame_mse(plane(z, 2, 1), plane(z, 1, 2)), Error);
}

TEST_CASE("combine_channels") {
  CHECK(combine_channels(8, 8, 8) == 8.0);
  CHECK(combine_channels(8, 0, 0) == 6.0);
  CHECK(combine_channels(0, 4, 4) == 1.0);
  CHECK_THROWS_AS(combine_channels(-1, 0, 0), Error);
  CHECK(frame_distortion({8, 0, 0}, MseMode::luma) == 8.0);
  CHECK(frame_distortion({8, 0, 0}, MseMode::combined) == 6.0);
}

TEST_CASE("phi, delta and adjacency weight") {
  CHECK(phi(1) == 1);
  CHECK(phi(0) == 0);
  CHECK(phi(0.5) == 0.25);
  CHECK_THROWS_AS(phi(1.5), Error);
  CHECK_THROWS_AS(phi(-0.1), Error);
  CHECK(delta({0, 0}, {0, 1}) == 2);
  CHECK(delta({0, 0}, {1, 1}) == 1);
  CHECK(delta({0, 0}, {0, 2}) == 0);
  CHECK(delta({2, 2}, {2, 2}) == 0);
  CHECK(adjacency_weight(1, 1) == 1);
  CHECK(adjacency_weight(0.5, 1) == 0.25);
  CHECK(adjacency_weight(0.8, 0) == 0);
}

TEST_CASE("weighted_mse") {
  const AngularGrid g{2, 2};
  CHECK(weighted_mse(MseGrid(g, {5, 5, 5, 5}), ConfidenceGrid::uniform(g)) == 5.0);
  CHECK(weighted_mse(MseGrid(g, {1, 2, 3, 4}), ConfidenceGrid::uniform(g, 0.0)) == 0.0);
  CHECK(weighted_mse(MseGrid(g, {4, 4, 4, 4}), ConfidenceGrid(g, {1, 0.5, 0.5, 0})) == 1.5);
  CHECK_THROWS_AS(weighted_mse(MseGrid({1, 4}, {1, 1, 1, 1}), ConfidenceGrid::uniform(g)),
                  Error);
}

TEST_CASE("weighted_mse is linear and monotone") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const AngularGrid g{3, 4};
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(12), b(12), w(12);
    for (int i = 0; i < 12; ++i) a[i] = 100 * u(rng), b[i] = 100 * u(rng), w[i] = u(rng);
    const ConfidenceGrid cg(g, w);
    std::vector<double> sum(12);
    for (int i = 0; i < 12; ++i) sum[i] = 2 * a[i] + 3 * b[i];
    CHECK(weighted_mse(MseGrid(g, sum), cg) ==
          doctest::Approx(2 * weighted_mse(MseGrid(g, a), cg) + 3 * weighted_mse(MseGrid(g, b), cg))
              .epsilon(1e-12));
    const int k = t % 12;
    auto bumped = a;
    bumped[k] += 1.0;
    CHECK(weighted_mse(MseGrid(g, bumped), cg) >= weighted_mse(MseGrid(g, a), cg));
    auto w2 = w;
    w2[k] = std::min(1.0, w2[k] + 0.1);
    CHECK(weighted_mse(MseGrid(g, a), ConfidenceGrid(g, w2)) >= weighted_mse(MseGrid(g, a), cg));
  }
}

TEST_CASE("smoothness_penalty examples") {
  const AngularGrid g{3, 3};
  CHECK(smoothness_penalty(MseGrid(g, std::vector<double>(9, 7.0)), ConfidenceGrid::uniform(g)) ==
        0.0);
  CHECK(smoothness_penalty(MseGrid({1, 2}, {1, 3}), ConfidenceGrid::uniform({1, 2})) == 16.0);
  CHECK(smoothness_penalty(MseGrid({1, 3}, {1, 1, 5}), ConfidenceGrid::uniform({1, 3})) == 64.0);
}

TEST_CASE("smoothness_penalty matches an independent loop and its invariants") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 60; ++t) {
    const int rows = 1 + t % 6, cols = 1 + (t / 6) % 6;
    const AngularGrid g{rows, cols};
    std::vector<double> m(g.cells()), w(g.cells());
    for (auto& x : m) x = 50 * u(rng);
    for (auto& x : w) x = u(rng);
    const ConfidenceGrid cg(g, w);
    const double sp = smoothness_penalty(MseGrid(g, m), cg);
    CHECK(sp >= 0.0);
    CHECK(sp == doctest::Approx(oracle::loop_sp(m, w, rows, cols)).epsilon(1e-12));
    CHECK(smoothness_penalty_neighbors(MseGrid(g, m), cg) == sp);
    auto shifted = m, scaled = m;
    for (auto& x : shifted) x += 13.0;
    for (auto& x : scaled) x *= 3.0;
    CHECK(smoothness_penalty(MseGrid(g, shifted), cg) == doctest::Approx(sp).epsilon(1e-9));
    CHECK(smoothness_penalty(MseGrid(g, scaled), cg) == doctest::Approx(9 * sp).epsilon(1e-12));
  }
}

TEST_CASE("target_T and t_prime") {
  CHECK(target_T(3, 100, 0, {2, 2}) == 3);
  CHECK(target_T(2, 16, 2, {2, 2}) == 4);
  CHECK(target_T(2, 0, 7, {2, 2}) == 2);
  CHECK_THROWS_AS(target_T(-1, 0, 0, {1, 1}), Error);
  CHECK(t_prime(65025) == 0.0);
  CHECK(t_prime(650.25) == doctest::Approx(20.0).epsilon(1e-14));
  CHECK_THROWS_AS(t_prime(0), Error);
  double prev = 0;
  for (double l : {0.0, 0.5, 2.0, 4.0}) {
    const double T = target_T(5, 30, l, {3, 3});
    CHECK(T >= prev);
    prev = T;
  }
  CHECK(target_T(5, 31, 1, {3, 3}) >= target_T(5, 30, 1, {3, 3}));
  CHECK(target_T(6, 30, 1, {3, 3}) >= target_T(5, 30, 1, {3, 3}));
}

TEST_CASE("interp_sq_error_expectation") {
  CHECK(interp_sq_error_expectation(1, 1, 1, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(interp_sq_error_expectation(1, -1, -1, 1) == doctest::Approx(1.0 / 9).epsilon(1e-15));
  CHECK(interp_sq_error_expectation(0, 0, 0, 0) == 0.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int t = 0; t < 20; ++t) {
    const double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    CHECK(interp_sq_error_expectation(a, b, c, d) ==
          doctest::Approx(oracle::simpson_bilinear_sq(a, b, c, d, 8)).epsilon(1e-12));
  }
}

TEST_CASE("bd_rate") {
  const std::vector<RdCurvePoint> a{{1e6, 30}, {2e6, 33}, {4e6, 36.5}, {8e6, 39}};
  CHECK(bd_rate(a, a) == 0.0);
  auto t = a;
  for (auto& p : t) p.bits *= 0.9;
  CHECK(bd_rate(a, t) == doctest::Approx(-10.0).epsilon(1e-9));
  const double fwd = bd_rate(a, t), back = bd_rate(t, a);
  CHECK((1 + fwd / 100) * (1 + back / 100) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(bd_rate({a.begin(), a.begin() + 3}, a), Error);
  auto far = a;
  for (auto& p : far) p.quality += 100;
  CHECK_THROWS_AS(bd_rate(a, far), Error);
  auto bent = a;
  bent[2].quality = 31;
  CHECK_THROWS_AS(bd_rate(bent, a), Error);
}

TEST_CASE("bd_rate sign flips on smooth curves") {
  std::vector<RdCurvePoint> a, b;
  for (int i = 0; i < 5; ++i) {
    const double r = 1e6 * std::pow(2.0, i);
    a.push_back({r, 10 * std::log10(r) - 30});
    b.push_back({r, 10 * std::log10(r) - 29.4 + 0.05 * i});
  }
  const double fwd = bd_rate(a, b), back = bd_rate(b, a);
  CHECK((1 + fwd / 100) * (1 + back / 100) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(bd_rate(a, b) < 0);
  CHECK(bd_rate(b, a) > 0);
}

TEST_CASE("yuv reader and per-SAI grid") {
  const int w = 3, h = 3;
  const int frame_bytes = w * h + 2 * 2 * 2;
  std::string ref(frame_bytes * 4, '\0'), rec(frame_bytes * 4, '\0');
  for (int f = 0; f < 4; ++f) rec[f * frame_bytes] = static_cast<char>(f + 1);
  std::istringstream ri(ref), di(rec);
  const auto order = build_scan_order(ScanKind::snake, {2, 2}, 4);
  const auto grid = compute_mse_grid(ri, di, SaiGridDims(2, 2, h, w), order, MseMode::luma);
  CHECK(grid.at({0, 0}) == doctest::Approx(1.0 / 9));
  CHECK(grid.at({0, 1}) == doctest::Approx(4.0 / 9));
  CHECK(grid.at({1, 1}) == doctest::Approx(9.0 / 9));
  CHECK(grid.at({1, 0}) == doctest::Approx(16.0 / 9));

  std::istringstream shortref(ref.substr(0, frame_bytes * 2 + 5)), rec2(rec);
  CHECK_THROWS_AS(compute_mse_grid(shortref, rec2, SaiGridDims(2, 2, h, w), order, MseMode::luma),
                  Error);
}

TEST_CASE("partial grids mask unmapped cells") {
  const auto order = build_scan_order(ScanKind::raster, {2, 2}, 3);
  const auto grid = MseGrid::from_frames(order, {1, 2, 3});
  CHECK(grid.valid({1, 0}));
  CHECK_FALSE(grid.valid({1, 1}));
  CHECK(grid.at({1, 1}) == 0.0);
}

TEST_CASE("evaluate_quality") {
  const AngularGrid g{2, 2};
  const auto q = evaluate_quality(MseGrid(g, {2, 2, 2, 2}), ConfidenceGrid::uniform(g), 4);
  CHECK(q.wmse == 2.0);
  CHECK(q.sp == 0.0);
  CHECK(q.T == 2.0);
  REQUIRE(q.T_prime);
  CHECK(*q.T_prime == doctest::Approx(10 * std::log10(65025.0 / 2)));
  const auto z = evaluate_quality(MseGrid(g, {0, 0, 0, 0}), ConfidenceGrid::uniform(g), 1);
  CHECK_FALSE(z.T_prime);
  const auto r = evaluate_quality(MseGrid(g, {1, 5, 2, 8}), ConfidenceGrid(g, {1, .5, .7, .2}), 2);
  CHECK(r.T >= r.wmse);
  CHECK(r.T == doctest::Approx(target_T(r.wmse, r.sp, 2, g)));
}
