// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lfbit/pipeline.hpp"
#include "lfbit/serialization.hpp"
#include "oracles.hpp"

using namespace lfbit;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const std::vector<ProfileKind> kProfiles{ProfileKind::all_intra, ProfileKind::random_access,
                                         ProfileKind::low_delay};

// ---------------------------------------------------------------------------

Outcome bilinear_identity() {
  Outcome o;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    const double closed = interp_sq_error_expectation(a, b, c, d);
    const double numeric = oracle::simpson_bilinear_sq(a, b, c, d, 1000);
    worst = std::max(worst, std::abs(closed - numeric) / std::max(1.0, std::abs(numeric)));
  }
  o.require(worst <= 1e-9, fmt("closed form vs Simpson: max rel diff %.2e", worst));
  o.note(fmt("closed form vs Simpson max rel diff %.2e", worst));

  // Sign-symmetric, uncorrelated corners with sum of squares fixed at D.
  const double D = 7.0;
  const int draws = 100000;
  std::normal_distribution<double> z(0.0, 1.0);
  double mean = 0.0, m2 = 0.0;
  for (int k = 0; k < draws; ++k) {
    double v[4], norm = 0.0;
    for (double& x : v) norm += (x = z(rng)) * x;
    const double s = std::sqrt(D / norm);
    const double e = interp_sq_error_expectation(v[0] * s, v[1] * s, v[2] * s, v[3] * s);
    const double delta = e - mean;
    mean += delta / (k + 1);
    m2 += delta * (e - mean);
  }
  const double se = std::sqrt(m2 / (draws - 1) / draws);
  const double dev = std::abs(mean - D / 9.0);
  o.require(dev <= 3.0 * se, fmt("D/9 mean %.6f vs %.6f (3 sigma %.2e)", mean, D / 9, 3 * se));
  o.note(fmt("Monte-Carlo mean %.6f vs D/9 = %.6f, |dev| = %.1f sigma", mean, D / 9, dev / se));
  return o;
}

Outcome sp_equivalence() {
  Outcome o;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const AngularGrid g{1 + static_cast<int>(u(rng) * 6), 1 + static_cast<int>(u(rng) * 6)};
    const int n = g.cells();
    std::vector<Cell> cells;
    for (int r = 0; r < g.rows; ++r)
      for (int c = 0; c < g.cols; ++c) cells.push_back({r, c});
    std::shuffle(cells.begin(), cells.end(), rng);
    const ScanOrder order = ScanOrder::from_cells(ScanKind::custom, g, cells);
    std::vector<double> w(n), d(n);
    for (auto& x : w) x = u(rng);
    for (auto& x : d) x = 100.0 * u(rng);
    const ConfidenceGrid conf(g, w);
    const double loop = smoothness_penalty(MseGrid::from_frames(order, d), conf);
    const double matrix = sp_quadratic_dense(DifferenceMatrix(n), build_psi(order, conf, n), d);
    const double sparse = sp_quadratic(build_sp_structure(order, conf, n), d);
    const double scale = std::max(std::abs(loop), 1e-300);
    worst = std::max({worst, std::abs(matrix - loop) / scale, std::abs(sparse - loop) / scale});
  }
  o.require(worst <= 1e-12, fmt("max rel diff %.2e", worst));
  o.note(fmt("200 grids up to 6x6, max rel diff %.2e", worst));
  return o;
}

PassOneStats sweep(const MockScene& scene, ProfileKind kind) {
  MockBackend backend(scene);
  return first_pass(backend, profile_defaults(kind), "acceptance", 4);
}

Outcome regression_fidelity() {
  Outcome o;
  for (ProfileKind kind : kProfiles) {
    const EncoderProfile prof = profile_defaults(kind);
    MockSceneSpec spec = mock_spec_preset(kind);
    spec.sigma = 0.0;
    const MockScene scene = generate_mock_scene(spec);
    const auto stats = sweep(scene, kind);
    const auto set = stats.samples(MseMode::combined);
    std::optional<GopGrouping> grouping;
    if (prof.uses_gops()) grouping.emplace(spec.frame_count, prof.gop_size);
    const auto models = fit_all_models(set, grouping, 4);
    double worst_alpha = 0.0, worst_beta = 0.0, worst_eps = 0.0;
    for (int f = 0; f < spec.frame_count; ++f) {
      const auto& truth = scene.frames[f];
      worst_alpha = std::max(worst_alpha, std::abs(models[f].alpha / truth.alpha - 1));
      worst_beta = std::max(worst_beta, std::abs(models[f].beta / truth.beta - 1));
      worst_eps = std::max(worst_eps, 1 - models[f].r_squared);
    }
    const std::string name = short_name(kind);
    o.require(worst_alpha <= 1e-9 && worst_beta <= 1e-9,
              fmt("%s recovery alpha %.1e beta %.1e", name.c_str(), worst_alpha, worst_beta));
    o.require(worst_eps < 1e-12, fmt("%s 1-r2 %.1e", name.c_str(), worst_eps));

    double r2_sum = 0.0;
    int r2_count = 0;
    for (int trial = 0; trial < 100; ++trial) {
      MockSceneSpec noisy = spec;
      noisy.sigma = 0.01;
      noisy.seed = 1000 + trial;
      const auto p = sweep(generate_mock_scene(noisy), kind);
      const double budget = profile_budgets(kind)[trial % 4];
      const FitWindow w = select_fit_window(p.totals, budget);
      const auto fitted = fit_all_models(p.samples(MseMode::combined).restricted_to(w.qp_lo, w.qp_hi),
                                         grouping, 4);
      for (const auto& m : fitted) r2_sum += m.r_squared, ++r2_count;
    }
    const double mean_r2 = r2_sum / r2_count;
    o.require(mean_r2 >= 0.99, fmt("%s noisy mean r2 %.5f", name.c_str(), mean_r2));
    o.note(fmt("%s: exact rel err alpha %.1e beta %.1e, 1-r2 %.1e; sigma 1%% mean r2 %.4f",
               name.c_str(), worst_alpha, worst_beta, worst_eps, mean_r2));
  }
  return o;
}

Outcome optimizer_correctness() {
  Outcome o;
  std::mt19937_64 rng(4);
  const double lambdas[] = {0.0, 2.0, 4.0};
  double worst_gap = -INFINITY, worst_kkt = 0.0;
  int worst_cells = 0, kinks = 0;
  for (int t = 0; t < 50; ++t) {
    const int n = 2 + t % 3;
    const AllocationProblem p = oracle::random_problem(rng, n, lambdas[t % 3]);
    const TwoStepResult r = solve_two_step(p);
    const std::vector<double>& at = r.step_a.bits;
    auto objective = [&](std::span<const double> x) {
      return oracle::composite_objective(p, at, {x.begin(), x.end()});
    };
    const int steps = 200;
    const OracleResult best = brute_force_oracle(objective, p.budget, n, steps);
    const double h = p.budget / steps;
    // Objective change across one grid cell at the oracle point.
    const auto g = oracle::composite_gradient(p, at, best.allocation);
    double bound = 0.0;
    for (double gv : g) bound += std::abs(gv) * h;
    const double solver = objective(r.step_b.bits);
    worst_gap = std::max(worst_gap, (solver - best.objective) / bound);
    o.require(solver <= best.objective + bound,
              fmt("problem %d: solver %.10g oracle %.10g bound %.3g", t, solver, best.objective,
                  bound));
    // On the kink (tangent distortions all equal) the gradient does not exist
    // and the subdifferential condition applies instead.
    const bool kink = oracle::relative_linear_sp(p, at, r.step_b.bits) <= 1e-5;
    const double kkt =
        kink ? oracle::kink_kkt_spread(p, at, r.step_b.bits, p.floor_bits())
             : oracle::kkt_spread(oracle::composite_gradient(p, at, r.step_b.bits),
                                  r.step_b.bits, p.floor_bits());
    worst_kkt = std::max(worst_kkt, kkt);
    kinks += kink;
    for (int v = 0; v < n; ++v)
      worst_cells = std::max(
          worst_cells, static_cast<int>(std::ceil(std::abs(r.step_b.bits[v] - best.allocation[v]) / h)));
  }
  o.require(worst_kkt <= 1e-6, fmt("KKT residual %.2e", worst_kkt));

  AllocationProblem hand;
  hand.variable_count = 2;
  hand.budget = 3;
  hand.grid_cells = 2;
  hand.terms = {{0, 0, 1.0, 1.0, -1.0}, {1, 1, 4.0, 1.0, -1.0}};
  hand.sp.frames = 2;
  const auto s = solve_two_step(hand);
  const double err = std::max(std::abs(s.step_b.bits[0] - 1), std::abs(s.step_b.bits[1] - 2));
  o.require(err <= 1e-6, fmt("hand instance off by %.2e", err));
  o.note(fmt("50 problems (%d on the SP kink): (solver - oracle)/bound max %.3f, KKT max %.2e, "
             "max %d grid cells from the oracle; hand instance err %.1e",
             kinks, worst_gap, worst_kkt, worst_cells, err));
  return o;
}

// Scene with parameters that vary smoothly over the angular grid.
struct AngularSetup {
  ProfileKind kind;
  EncoderProfile profile;
  LightFieldLayout layout;
  MockBackend backend;

  explicit AngularSetup(ProfileKind k)
      : kind(k),
        profile(profile_defaults(k)),
        layout{build_scan_order(ScanKind::spiral, {15, 15}, 192),
               central_plateau_confidence({15, 15})},
        backend(generate_angular_mock_scene(mock_spec_preset(k), layout.order, 0.05)) {}

  TwoPassReport run(double budget, double lambda, AllocationMode mode, PassOneCache& cache) {
    RunSettings s;
    s.profile = profile;
    s.budget = budget;
    s.lambda = lambda;
    s.allocation = mode;
    s.parallelism = 4;
    return run_two_pass(s, layout, backend, &cache);
  }
};

/// T' of a curve at `bits`, linear in log(bits) between neighbouring points.
std::optional<double> interpolate(const std::vector<std::pair<double, double>>& curve,
                                  double bits) {
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const auto [b0, q0] = curve[i - 1];
    const auto [b1, q1] = curve[i];
    if (bits >= b0 && bits <= b1) {
      const double t = std::log(bits / b0) / std::log(b1 / b0);
      return q0 + t * (q1 - q0);
    }
  }
  return std::nullopt;
}

Outcome lambda_behaviour() {
  Outcome o;
  const std::pair<ProfileKind, double> configs[] = {{ProfileKind::all_intra, 20e6},
                                                    {ProfileKind::random_access, 2e6},
                                                    {ProfileKind::low_delay, 0.5e6}};
  for (auto [kind, budget] : configs) {
    AngularSetup setup(kind);
    PassOneCache cache;
    double sp[3];
    const double lambdas[] = {0.0, 2.0, 4.0};
    double t_opt = 0.0, bits_opt = 0.0;
    for (int i = 0; i < 3; ++i) {
      const auto r = setup.run(budget, lambdas[i], AllocationMode::two_step, cache);
      sp[i] = r.evaluation.quality.sp;
      if (i == 0) t_opt = *r.evaluation.quality.T_prime, bits_opt = r.evaluation.achieved_bits;
    }
    const std::string name = short_name(kind);
    o.require(sp[2] <= sp[1] && sp[1] <= sp[0],
              fmt("%s SP not monotone %.4g %.4g %.4g", name.c_str(), sp[0], sp[1], sp[2]));

    std::vector<std::pair<double, double>> baseline;
    for (int k = -6; k <= 6; ++k) {
      const auto r = setup.run(budget * std::pow(2.0, k / 8.0), 0.0, AllocationMode::uniform, cache);
      baseline.emplace_back(r.evaluation.achieved_bits, *r.evaluation.quality.T_prime);
    }
    std::sort(baseline.begin(), baseline.end());
    const auto t_base = interpolate(baseline, bits_opt);
    o.require(t_base.has_value(), name + " baseline does not bracket the optimizer's bits");
    if (t_base)
      o.require(t_opt >= *t_base, fmt("%s T' %.3f below baseline %.3f", name.c_str(), t_opt,
                                      *t_base));
    o.note(fmt("%s %.3g Mb: SP %.4g >= %.4g >= %.4g; T' %.3f dB vs baseline %.3f dB", name.c_str(),
               budget / 1e6, sp[0], sp[1], sp[2], t_opt, t_base.value_or(NAN)));
  }
  return o;
}

Outcome bit_accuracy() {
  Outcome o;
  for (ProfileKind kind : kProfiles) {
    const EncoderProfile prof = profile_defaults(kind);
    MockBackend backend(generate_mock_scene(mock_spec_preset(kind)));
    const LightFieldLayout layout{build_scan_order(ScanKind::snake, {15, 15}, 192),
                                  ConfidenceGrid::uniform({15, 15})};
    PassOneCache cache;
    double worst = 0.0;
    for (double lambda : lambda_presets())
      for (double budget : profile_budgets(kind)) {
        RunSettings s;
        s.profile = prof;
        s.budget = budget;
        s.lambda = lambda;
        s.parallelism = 4;
        worst = std::max(worst, run_two_pass(s, layout, backend, &cache).evaluation.bit_error);
      }
    const double limit = kind == ProfileKind::all_intra ? 0.01 : 0.03;
    const std::string name = short_name(kind);
    o.require(worst <= limit, fmt("%s bit error %.3f%%", name.c_str(), 100 * worst));
    // Informational: the same sweep with the plateau confidence map.
    const LightFieldLayout plateau{layout.order, central_plateau_confidence({15, 15})};
    double worst_plateau = 0.0;
    for (double lambda : lambda_presets())
      for (double budget : profile_budgets(kind)) {
        RunSettings s;
        s.profile = prof;
        s.budget = budget;
        s.lambda = lambda;
        s.parallelism = 4;
        worst_plateau = std::max(worst_plateau,
                                 run_two_pass(s, plateau, backend, &cache).evaluation.bit_error);
      }
    o.note(fmt("%s max bit error %.3f%% (limit %.0f%%), plateau confidence %.3f%% (info)",
               name.c_str(), 100 * worst, 100 * limit, 100 * worst_plateau));
  }
  return o;
}

Outcome bd_rate_utility() {
  Outcome o;
  std::vector<RdCurvePoint> anchor, shifted;
  for (int i = 0; i < 5; ++i) {
    const double bits = 1e6 * std::pow(2.0, i);
    const double q = 28 + 4.2 * i - 0.15 * i * i;
    anchor.push_back({bits, q});
    shifted.push_back({0.9 * bits, q});
  }
  const double ten = bd_rate(anchor, shifted);
  o.require(std::abs(ten + 10.0) <= 0.1, fmt("shifted curve %.4f%%", ten));
  const double zero = bd_rate(anchor, anchor);
  o.require(zero == 0.0, fmt("identical curves %.3g%%", zero));

  AngularSetup setup(ProfileKind::all_intra);
  PassOneCache cache;
  std::vector<TwoPassReport> opt, uni;
  for (double budget : profile_budgets(ProfileKind::all_intra)) {
    opt.push_back(setup.run(budget, 0.0, AllocationMode::two_step, cache));
    uni.push_back(setup.run(budget, 0.0, AllocationMode::uniform, cache));
  }
  const double mock = compare_runs(opt, uni).bd_rate;
  o.require(mock < 0.0, fmt("optimizer vs uniform %.3f%%", mock));
  o.note(fmt("10%% shift -> %.4f%%, identical -> %g%%, optimizer vs uniform on the angular AI "
             "scene -> %.2f%%",
             ten, zero, mock));
  return o;
}

Outcome determinism_and_cache() {
  Outcome o;
  auto batch = [](bool shared_cache) {
    AngularSetup setup(ProfileKind::random_access);
    MockSceneSpec spec = mock_spec_preset(ProfileKind::random_access);
    spec.sigma = 0.02;
    MockBackend noisy(generate_angular_mock_scene(spec, setup.layout.order, 0.05));
    PassOneCache shared;
    std::string out;
    for (double lambda : lambda_presets())
      for (double budget : profile_budgets(ProfileKind::random_access)) {
        PassOneCache fresh;
        RunSettings s;
        s.profile = setup.profile;
        s.budget = budget;
        s.lambda = lambda;
        s.parallelism = 4;
        auto j = to_json(run_two_pass(s, setup.layout, noisy, shared_cache ? &shared : &fresh),
                         false);
        out += j.dump() + "\n";
      }
    return out;
  };
  const std::string a = batch(true), b = batch(true), cold = batch(false);
  o.require(a == b, "repeated runs differ");
  o.require(a == cold, "warm-cache run differs from cold runs");
  o.note(fmt("12 random-access reports, %zu bytes, identical across repeat and cold-cache runs",
             a.size()));
  return o;
}

Outcome profile_constants() {
  Outcome o;
  const auto ai = profile_defaults(ProfileKind::all_intra);
  const auto ra = profile_defaults(ProfileKind::random_access);
  const auto ld = profile_defaults(ProfileKind::low_delay);
  o.require(ai.gop_size == 1 && ai.qp_offsets.empty(), "all-intra constants");
  o.require(ra.gop_size == 8 && ra.qp_offsets == std::vector<int>{1, 2, 3, 4, 4, 3, 4, 4},
            "random-access constants");
  o.require(ld.gop_size == 12 &&
                ld.qp_offsets == std::vector<int>{5, 4, 5, 1, 5, 4, 5, 1, 5, 4, 5, 1},
            "low-delay constants");
  for (const auto& p : {ai, ra, ld}) {
    const auto qps = p.sweep_qps();
    o.require(p.sweep_min_qp == 16 && p.sweep_max_qp == 45 && qps.size() == 30 &&
                  qps.front() == 16 && qps.back() == 45,
              "sweep range");
  }
  o.require(kFitWindowHalfWidth == 7, "window half width");
  std::vector<std::pair<int, double>> totals;
  for (int q = 16; q <= 45; ++q) totals.emplace_back(q, std::pow(2.0, (45 - q) / 6.0));
  auto window = [&](int qc) { return select_fit_window(totals, totals[qc - 16].second); };
  const auto mid = window(30), lo = window(18), hi = window(45);
  o.require(mid.qp_lo == 23 && mid.qp_hi == 37, "window at 30");
  o.require(lo.qp_lo == 16 && lo.qp_hi == 25, "window at 18");
  o.require(hi.qp_lo == 38 && hi.qp_hi == 45, "window at 45");
  o.require(profile_budgets(ProfileKind::all_intra) == std::vector<double>{5e6, 10e6, 20e6, 40e6} &&
                profile_budgets(ProfileKind::random_access) ==
                    std::vector<double>{1e6, 2e6, 4e6, 8e6} &&
                profile_budgets(ProfileKind::low_delay) ==
                    std::vector<double>{0.5e6, 1e6, 2e6, 4e6},
            "budget presets");
  o.require(lambda_presets() == std::vector<double>{0, 2, 4}, "lambda presets");
  o.note("offsets, GOP sizes, sweep [16,45], window +-7 with clamps, budgets and lambdas frozen");
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double max_seconds;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {1, "bilinear expectation identity", 5, bilinear_identity},
      {2, "SP matrix form equivalence", 5, sp_equivalence},
      {3, "regression fidelity", 10, regression_fidelity},
      {4, "optimizer correctness", 60, optimizer_correctness},
      {5, "lambda behaviour", 60, lambda_behaviour},
      {6, "bit accuracy on mock", 120, bit_accuracy},
      {7, "BD-rate utility", 5, bd_rate_utility},
      {8, "determinism and cache", 60, determinism_and_cache},
      {9, "profile constants", 1, profile_constants},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.require(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.require(secs < c.max_seconds, fmt("runtime %.2f s over %.0f s", secs, c.max_seconds));
    failures += !out.pass;
    std::printf("criterion %d %s: %s (%.2f s) %s\n", c.id, c.name, out.pass ? "PASS" : "FAIL",
                secs, out.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
