#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "lfbit/error.hpp"
#include "lfbit/metrics.hpp"
#include "lfbit/optimizer.hpp"
#include "oracles.hpp"

using namespace lfbit;

namespace {

AllocationProblem two_frame_problem(std::vector<double> w, double budget, double lambda = 0.0,
                                    double psi = 0.0) {
  AllocationProblem p;
  p.variable_count = 2;
  p.budget = budget;
  p.lambda = lambda;
  p.grid_cells = 2;
  for (int i = 0; i < 2; ++i) p.terms.push_back({i, i, w[i], 1.0, -1.0});
  p.sp.frames = 2;
  if (psi > 0) p.sp.rows = {{0, 1, psi}, {1, 0, psi}};
  return p;
}

double sum(const std::vector<double>& x) { return std::accumulate(x.begin(), x.end(), 0.0); }

}  // namespace

TEST_CASE("difference matrix rows") {
  const DifferenceMatrix z(2);
  CHECK(z.rows() == 4);
  CHECK(z.at(0, 0) == 0);
  CHECK(z.at(0, 1) == 0);
  CHECK(z.at(1, 0) == 1);
  CHECK(z.at(1, 1) == -1);
  CHECK(z.at(2, 0) == -1);
  CHECK(z.at(2, 1) == 1);
  CHECK(z.at(3, 0) == 0);
  CHECK(z.at(3, 1) == 0);
  const DifferenceMatrix z5(5);
  for (int k = 0; k < z5.rows(); ++k) {
    const int i = k / 5, j = k % 5;
    for (int c = 0; c < 5; ++c) {
      const int expected = i == j ? 0 : (c == i ? 1 : (c == j ? -1 : 0));
      CHECK(z5.at(k, c) == expected);
    }
  }
}

TEST_CASE("psi examples") {
  const auto order = build_scan_order(ScanKind::raster, {2, 2}, 4);
  const auto psi1 = build_psi(order, ConfidenceGrid::uniform({2, 2}), 4);
  CHECK(psi1[0 * 4 + 1] == 2.0);  // (1,1)-(1,2)
  const auto psi2 = build_psi(order, ConfidenceGrid({2, 2}, {1, 1, 1, 0.5}), 4);
  CHECK(psi2[0 * 4 + 3] == 0.25);  // (1,1)-(2,2), w = (1, 0.5)
  const auto line = build_scan_order(ScanKind::raster, {1, 3}, 3);
  CHECK(build_psi(line, ConfidenceGrid::uniform({1, 3}), 3)[0 * 3 + 2] == 0.0);
  for (int k = 0; k < 4; ++k) CHECK(psi1[k * 4 + k] == 0.0);
  CHECK_THROWS_AS(build_psi(order, ConfidenceGrid::uniform({2, 2}), 5), Error);
}

TEST_CASE("matrix SP equals the definitional loop") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    const AngularGrid g{1 + t % 6, 1 + (t / 3) % 6};
    const int n = g.cells();
    const auto order = build_scan_order(t % 2 ? ScanKind::snake : ScanKind::spiral, g, n);
    std::vector<double> w(n), d(n);
    for (auto& x : w) x = u(rng);
    for (auto& x : d) x = 80 * u(rng);
    const ConfidenceGrid conf(g, w);
    const double ref = smoothness_penalty(MseGrid::from_frames(order, d), conf);
    const DifferenceMatrix z(n);
    const double dense = sp_quadratic_dense(z, build_psi(order, conf, n), d);
    const double sparse = sp_quadratic(build_sp_structure(order, conf, n), d);
    CHECK(std::abs(dense - ref) <= 1e-12 * std::max(1.0, ref));
    CHECK(std::abs(sparse - ref) <= 1e-12 * std::max(1.0, ref));
  }
}

TEST_CASE("tangent examples") {
  const auto a = tangent(2, -1, 1);
  CHECK(a.slope == -2);
  CHECK(a.intercept == 4);
  CHECK(a.intercept + a.slope * 1 == 2);
  const auto b = tangent(1, -1, 2);
  CHECK(b.slope == -0.25);
  CHECK(b.intercept == 1);
  CHECK(b.intercept + b.slope * 2 == 0.5);
  CHECK_THROWS_AS(tangent(1, -1, 0), Error);
}

TEST_CASE("tangent touches the model to machine precision") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const double alpha = 1 + 100 * u(rng), beta = -0.1 - 2 * u(rng), at = 10 + 1e5 * u(rng);
    const auto tg = tangent(alpha, beta, at);
    CHECK(tg.slope < 0);
    CHECK(tg.intercept > 0);
    const double model = alpha * std::pow(at, beta);
    CHECK(tg.intercept + tg.slope * at == doctest::Approx(model).epsilon(1e-14));
    const double h = at * 1e-5;
    const double fd =
        (alpha * std::pow(at + h, beta) - alpha * std::pow(at - h, beta)) / (2 * h);
    CHECK(tg.slope == doctest::Approx(fd).epsilon(1e-8));
  }
}

TEST_CASE("step a examples") {
  const auto sym = solve_step_a(two_frame_problem({1, 1}, 10));
  CHECK(sym.bits[0] == doctest::Approx(5).epsilon(1e-12));
  CHECK(sym.bits[1] == doctest::Approx(5).epsilon(1e-12));

  const auto hand = solve_step_a(two_frame_problem({1, 4}, 3));
  CHECK(hand.bits[0] == doctest::Approx(1).epsilon(1e-9));
  CHECK(hand.bits[1] == doctest::Approx(2).epsilon(1e-9));
  CHECK(hand.objective == doctest::Approx(3).epsilon(1e-9));

  AllocationProblem zero = two_frame_problem({0, 1}, 1e6);
  const auto z = solve_step_a(zero);
  CHECK(z.bits[0] == doctest::Approx(zero.floor_bits()));
  CHECK(sum(z.bits) == doctest::Approx(1e6).epsilon(1e-12));
}

TEST_CASE("oracle reproduces the hand example") {
  const auto p = two_frame_problem({1, 4}, 3);
  const auto r = brute_force_oracle(
      [&](std::span<const double> x) { return step_a_objective(p, x); }, 3.0, 2, 300);
  CHECK(std::abs(r.allocation[0] - 1.0) <= 3.0 / 300 + 1e-12);
  CHECK(std::abs(r.allocation[1] - 2.0) <= 3.0 / 300 + 1e-12);
  CHECK_THROWS_AS(brute_force_oracle([](std::span<const double>) { return 0.0; }, 1, 5, 10),
                  Error);
  CHECK_THROWS_AS(brute_force_oracle([](std::span<const double>) { return 0.0; }, 1, 2, 401),
                  Error);
}

TEST_CASE("infeasible floors are reported") {
  AllocationProblem p = two_frame_problem({1, 1}, 1.5);
  try {
    solve_step_a(p);
    FAIL("expected infeasible");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::infeasible);
  }
  AllocationProblem bad = two_frame_problem({1, 1}, 10);
  bad.terms[0].beta = 0.5;
  CHECK_THROWS_AS(solve_step_a(bad), Error);
}

TEST_CASE("step a satisfies KKT and the budget on random problems") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 200; ++t) {
    const int n = 1 + t % 4;
    const auto p = oracle::random_problem(rng, n, 0.0);
    const auto s = solve_step_a(p);
    CHECK(std::abs(sum(s.bits) - p.budget) <= 1e-9 * p.budget);
    for (double x : s.bits) CHECK(x >= p.floor_bits());
    const auto g = oracle::composite_gradient(p, s.bits, s.bits);
    CHECK(oracle::kkt_spread(g, s.bits, p.floor_bits()) <= 1e-8);
  }
}

TEST_CASE("large step a problems") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AllocationProblem p;
  p.variable_count = 500;
  p.budget = 2e7;
  p.grid_cells = 500;
  for (int i = 0; i < 500; ++i) {
    const double w = u(rng) < 0.1 ? 0.0 : u(rng);
    p.terms.push_back({i, i, w * w, std::exp(20 * u(rng)), -0.2 - 1.8 * u(rng)});
  }
  p.sp.frames = 500;
  const auto s = solve_step_a(p);
  CHECK(std::abs(sum(s.bits) - p.budget) <= 1e-9 * p.budget);
  const auto g = oracle::composite_gradient(p, s.bits, s.bits);
  CHECK(oracle::kkt_spread(g, s.bits, p.floor_bits()) <= 1e-8);
}

TEST_CASE("step b with lambda 0 returns step a") {
  std::mt19937_64 rng(51);
  for (int t = 0; t < 20; ++t) {
    const auto p = oracle::random_problem(rng, 2 + t % 3, 0.0);
    const auto r = solve_two_step(p);
    for (int v = 0; v < p.variable_count; ++v)
      CHECK(r.step_b.bits[v] == doctest::Approx(r.step_a.bits[v]).epsilon(1e-9));
  }
}

TEST_CASE("step b never does worse than its starting point") {
  std::mt19937_64 rng(61);
  for (int t = 0; t < 100; ++t) {
    const auto p = oracle::random_problem(rng, 2 + t % 3, t % 2 ? 2.0 : 4.0);
    const auto r = solve_two_step(p);
    const double start = oracle::composite_objective(p, r.step_a.bits, r.step_a.bits);
    const double end = oracle::composite_objective(p, r.step_a.bits, r.step_b.bits);
    CHECK(end <= start * (1 + 1e-12));
    CHECK(std::abs(sum(r.step_b.bits) - p.budget) <= 1e-9 * p.budget);
  }
}

TEST_CASE("step b solution against the exhaustive oracle") {
  std::mt19937_64 rng(71);
  for (int t = 0; t < 30; ++t) {
    const int n = 2 + t % 3;
    const auto p = oracle::random_problem(rng, n, 1.0 + t % 4);
    const auto r = solve_two_step(p);
    const int steps = n == 4 ? 100 : 200;
    const auto o = brute_force_oracle(
        [&](std::span<const double> x) {
          return oracle::composite_objective(p, r.step_a.bits, {x.begin(), x.end()});
        },
        p.budget, n, steps);
    const double solver = oracle::composite_objective(p, r.step_a.bits, r.step_b.bits);
    CHECK(solver <= o.objective * (1 + 1e-9));
  }
}

TEST_CASE("large lambda moves toward equal linearized distortion") {
  // Frame 1 is far more trusted; at lambda 0 it takes most bits.
  AllocationProblem p = two_frame_problem({1.0, 0.05}, 100.0, 0.0, 2.0);
  const auto base = solve_two_step(p);
  p.lambda = 50.0;
  const auto r = solve_two_step(p);
  const auto& lin = r.linearization;
  auto gap = [&](const std::vector<double>& x) {
    return std::abs((lin.intercept[0] + lin.slope[0] * x[0]) -
                    (lin.intercept[1] + lin.slope[1] * x[1]));
  };
  CHECK(gap(r.step_b.bits) < gap(base.step_b.bits));
  // Two-variable oracle on a fine grid.
  double best = INFINITY, best_x = 0;
  for (int k = 1; k < 2000; ++k) {
    const double x0 = 100.0 * k / 2000;
    const double f = oracle::composite_objective(p, r.step_a.bits, {x0, 100.0 - x0});
    if (f < best) best = f, best_x = x0;
  }
  CHECK(std::abs(r.step_b.bits[0] - best_x) <= 2 * 100.0 / 2000);
}

TEST_CASE("linearized SP does not grow with lambda") {
  std::mt19937_64 rng(81);
  for (int t = 0; t < 60; ++t) {
    auto p = oracle::random_problem(rng, 2 + t % 3, 0.0);
    double prev = INFINITY;
    for (double lambda : {0.0, 2.0, 4.0}) {
      p.lambda = lambda;
      const auto r = solve_two_step(p);
      const auto& lin = r.linearization;
      std::vector<double> d(p.terms.size());
      for (std::size_t i = 0; i < d.size(); ++i)
        d[i] = lin.intercept[i] + lin.slope[i] * r.step_b.bits[lin.variable[i]];
      const double sp = sp_quadratic(p.sp, d);
      CHECK(sp <= prev * (1 + 1e-6) + 1e-12);
      prev = sp;
    }
  }
}

TEST_CASE("objective is midpoint convex along feasible segments") {
  std::mt19937_64 rng(91);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + t % 3;
    const auto p = oracle::random_problem(rng, n, 3.0);
    const auto a = solve_step_a(p).bits;
    auto draw = [&] {
      std::vector<double> x(n);
      double s = 0;
      for (auto& v : x) s += (v = 0.05 + u(rng));
      for (auto& v : x) v *= p.budget / s;
      return x;
    };
    const auto x = draw(), y = draw();
    std::vector<double> mid(n);
    for (int i = 0; i < n; ++i) mid[i] = 0.5 * (x[i] + y[i]);
    const Linearization lin = linearize(p, a);
    const double fx = step_b_objective(p, lin, x), fy = step_b_objective(p, lin, y);
    CHECK(step_b_objective(p, lin, mid) <= 0.5 * (fx + fy) + 1e-12 * std::max(1.0, fx + fy));
  }
}

TEST_CASE("capped simplex projection") {
  const std::vector<double> z{3, 1, -2};
  const auto p = project_capped_simplex(z, 3.0, 0.0);
  CHECK(sum(p) == doctest::Approx(3.0));
  // Euclidean projection: shift by tau on the active set.
  CHECK(p[0] == doctest::Approx(2.5));
  CHECK(p[1] == doctest::Approx(0.5));
  CHECK(p[2] == 0.0);
  const std::vector<double> metric{1, 4, 1};
  const auto q = project_capped_simplex(z, 3.0, 0.0, metric);
  // KKT in the metric: metric_v (q_v - z_v) equal on the active set.
  CHECK(1 * (q[0] - 3) == doctest::Approx(4 * (q[1] - 1)));
  CHECK(sum(q) == doctest::Approx(3.0));
  CHECK_THROWS_AS(project_capped_simplex(z, 1.0, 1.0), Error);
}

TEST_CASE("projection matches a brute-force minimizer") {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(-2.0, 3.0);
  for (int t = 0; t < 40; ++t) {
    const std::vector<double> z{u(rng), u(rng)}, m{0.5 + u(rng) + 2, 0.5 + u(rng) + 2};
    const auto p = project_capped_simplex(z, 2.0, 0.1, m);
    double best = INFINITY, bx = 0;
    for (int k = 0; k <= 180000; ++k) {
      const double a = 0.1 + 1.8 * k / 180000.0;
      const double f = m[0] * (a - z[0]) * (a - z[0]) + m[1] * (2 - a - z[1]) * (2 - a - z[1]);
      if (f < best) best = f, bx = a;
    }
    CHECK(p[0] == doctest::Approx(bx).epsilon(1e-4));
  }
}

TEST_CASE("predict_T") {
  AllocationProblem p = two_frame_problem({1, 1}, 10);
  CHECK(predict_T(p, std::vector<double>{5, 5}) == doctest::Approx((0.2 + 0.2) / 2));
  p.lambda = 3;
  p.sp.rows = {{0, 1, 2}, {1, 0, 2}};
  CHECK(predict_T(p, std::vector<double>{5, 5}) == doctest::Approx(0.2));
  // Against metrics.target_T on the implied grid.
  const auto order = build_scan_order(ScanKind::raster, {1, 2}, 2);
  const ConfidenceGrid conf({1, 2}, {1, 0.5});
  AllocationProblem q;
  q.variable_count = 2;
  q.budget = 10;
  q.lambda = 2;
  q.grid_cells = 2;
  q.terms = {{0, 0, 1.0, 3.0, -1.0}, {1, 1, 0.25, 5.0, -0.5}};
  q.sp = build_sp_structure(order, conf, 2);
  const std::vector<double> x{4, 6};
  const MseGrid mse = MseGrid::from_frames(order, {3.0 / 4, 5.0 / std::sqrt(6.0)});
  const double expected = target_T(weighted_mse(mse, conf), smoothness_penalty(mse, conf), 2,
                                   {1, 2});
  CHECK(predict_T(q, x) == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(predict_T(q, std::vector<double>{6, 6}), Error);
}

TEST_CASE("single-cell grid has no SP rows") {
  const auto order = build_scan_order(ScanKind::raster, {1, 1}, 1);
  CHECK(build_sp_structure(order, ConfidenceGrid::uniform({1, 1}), 1).rows.empty());
}
