#include "lfbit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "parallel.hpp"

namespace lfbit {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename F>
auto in_stage(const char* stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const FirstPassError&) {
    throw;
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(stage) + ": " + e.what());
  }
}

std::vector<int> sweep_schedule(const EncoderProfile& profile, int base_qp, int frames) {
  std::vector<int> qps(frames);
  for (int f = 0; f < frames; ++f) {
    const int pos = profile.uses_gops() ? f % profile.gop_size : 0;
    qps[f] = std::clamp(base_qp + profile.offset_at(pos), 0, 51);
  }
  return qps;
}

}  // namespace

RdSampleSet PassOneStats::samples(MseMode mode) const {
  return RdSampleSet::from_stats(frame_count, stats, mode);
}

PassOneStats first_pass(EncoderBackend& backend, const EncoderProfile& profile,
                        const std::string& sequence_id, int parallelism) {
  const auto start = Clock::now();
  const int n = backend.frame_count();
  const auto qps = profile.sweep_qps();
  require(!qps.empty(), "empty QP sweep");

  std::vector<std::optional<EncodeResult>> results(qps.size());
  std::vector<std::string> errors(qps.size());
  std::vector<std::optional<ErrorKind>> kinds(qps.size());
  detail::parallel_for(static_cast<int>(qps.size()), parallelism, [&](int i) {
    EncodeRequest req{sequence_id, sweep_schedule(profile, qps[i], n), profile};
    try {
      results[i] = backend.encode(req);
    } catch (const Error& e) {
      kinds[i] = e.kind();
      errors[i] = e.what();
    } catch (const std::exception& e) {
      kinds[i] = ErrorKind::backend_process;
      errors[i] = e.what();
    }
  });

  PassOneStats out;
  out.profile = profile.kind;
  out.sweep_min_qp = profile.sweep_min_qp;
  out.sweep_max_qp = profile.sweep_max_qp;
  out.frame_count = n;
  std::vector<int> failed;
  std::string message;
  std::optional<ErrorKind> first_kind;
  for (std::size_t i = 0; i < qps.size(); ++i) {
    if (!results[i]) {
      failed.push_back(qps[i]);
      message += "\n  QP " + std::to_string(qps[i]) + ": " + errors[i];
      if (!first_kind) first_kind = kinds[i];
      continue;
    }
    double total = 0.0;
    for (const auto& fs : results[i]->frames) {
      FrameStat s = fs;
      s.qp = qps[i];
      out.stats.push_back(s);
      total += s.bits;
    }
    out.totals.emplace_back(qps[i], total);
  }
  out.seconds = seconds_since(start);
  if (!failed.empty()) {
    std::string list;
    for (int q : failed) list += (list.empty() ? "" : ", ") + std::to_string(q);
    throw FirstPassError(*first_kind, "first pass failed at QP " + list + message,
                         std::move(out), std::move(failed));
  }
  return out;
}

std::string to_string(AllocationMode mode) {
  return mode == AllocationMode::two_step ? "two_step" : "uniform";
}

AllocationMode parse_allocation_mode(std::string_view name) {
  if (name == "two_step") return AllocationMode::two_step;
  if (name == "uniform") return AllocationMode::uniform;
  fail(ErrorKind::invalid_argument, "unknown allocation mode '" + std::string(name) + "'");
}

RunEvaluation evaluate_run(const EncodeResult& result, const LightFieldLayout& layout,
                           double lambda, double budget, MseMode mode) {
  require(budget > 0.0, "budget must be > 0");
  const int n = static_cast<int>(result.frames.size());
  if (layout.order.frame_count() != n)
    fail(ErrorKind::invalid_argument, "scan order maps " +
                                          std::to_string(layout.order.frame_count()) +
                                          " frames but the encode produced " + std::to_string(n));
  std::vector<double> per_frame(n);
  double bits = 0.0;
  for (int f = 0; f < n; ++f) {
    require(result.frames[f].frame == f, "encode result frames out of order");
    per_frame[f] = frame_distortion(result.frames[f].mse, mode);
    bits += result.frames[f].bits;
  }
  RunEvaluation ev{bits, std::abs(bits - budget) / budget,
                   evaluate_quality(MseGrid::from_frames(layout.order, per_frame),
                                    layout.confidence, lambda)};
  return ev;
}

std::string PassOneCache::key(const std::string& sequence_id, const EncoderProfile& profile,
                              const EncoderBackend& backend) {
  std::string k = sequence_id + "|" + short_name(profile.kind) + "|" + backend.identity() + "|" +
                  std::to_string(profile.sweep_min_qp) + "-" +
                  std::to_string(profile.sweep_max_qp) + "|";
  for (int o : profile.qp_offsets) k += std::to_string(o) + ",";
  return k;
}

std::shared_ptr<const PassOneStats> PassOneCache::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : it->second;
}

void PassOneCache::store(const std::string& key, std::shared_ptr<const PassOneStats> stats) {
  std::lock_guard lock(mutex_);
  entries_[key] = std::move(stats);
}

std::size_t PassOneCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

TwoPassReport run_two_pass(const RunSettings& settings, const LightFieldLayout& layout,
                           EncoderBackend& backend, PassOneCache* cache) {
  const auto start = Clock::now();
  require(settings.budget > 0.0, "budget must be > 0");
  require(settings.lambda >= 0.0, "lambda must be >= 0");
  const int n = backend.frame_count();
  if (layout.order.frame_count() != n)
    fail(ErrorKind::invalid_argument, "scan order maps " +
                                          std::to_string(layout.order.frame_count()) +
                                          " frames but the sequence has " + std::to_string(n));

  TwoPassReport report;
  report.profile = settings.profile.kind;
  report.allocation_mode = settings.allocation;
  report.backend = backend.identity();
  report.sequence_id = settings.sequence_id;
  report.budget = settings.budget;
  report.lambda = settings.lambda;
  report.mse_mode = settings.mse_mode;

  std::shared_ptr<const PassOneStats> pass_one;
  const std::string key = PassOneCache::key(settings.sequence_id, settings.profile, backend);
  if (cache) pass_one = cache->find(key);
  report.pass_one_cached = pass_one != nullptr;
  if (!pass_one) {
    pass_one = std::make_shared<const PassOneStats>(in_stage("first pass", [&] {
      return first_pass(backend, settings.profile, settings.sequence_id, settings.parallelism);
    }));
    if (cache) cache->store(key, pass_one);
  }
  const auto t_pass1 = Clock::now();
  report.timing.pass1 = std::chrono::duration<double>(t_pass1 - start).count();

  const RdSampleSet samples = in_stage("fit", [&] { return pass_one->samples(settings.mse_mode); });
  report.fit_window = in_stage("fit", [&] {
    return select_fit_window(pass_one->totals, settings.budget, settings.profile.sweep_min_qp,
                             settings.profile.sweep_max_qp);
  });
  report.models = in_stage("fit", [&] {
    std::optional<GopGrouping> grouping;
    if (settings.profile.uses_gops()) grouping.emplace(n, settings.profile.gop_size);
    return fit_all_models(samples.restricted_to(report.fit_window.qp_lo, report.fit_window.qp_hi),
                          grouping, settings.parallelism);
  });

  const AllocationProblem problem = in_stage("optimize", [&] {
    return assemble_problem(settings.profile, report.models, layout.confidence, layout.order,
                            settings.lambda, settings.budget);
  });
  in_stage("optimize", [&] {
    if (settings.allocation == AllocationMode::uniform) {
      report.allocation = uniform_allocation(settings.profile, n, settings.budget);
    } else {
      const TwoStepResult r = solve_two_step(problem, settings.solver);
      report.allocation = r.step_b.bits;
      report.solver = {r.step_a.iterations, r.step_a.kkt_residual, r.step_b.iterations,
                       r.step_b.kkt_residual, r.step_b.converged};
    }
    report.predicted_T = predict_T(problem, report.allocation);
  });
  report.schedule = in_stage("plan", [&] {
    QpSchedule s = plan_schedule(settings.profile, samples, report.allocation);
    fill_expected_T(s, layout.order, layout.confidence, settings.lambda);
    return s;
  });
  const auto t_opt = Clock::now();
  report.timing.optimize = std::chrono::duration<double>(t_opt - t_pass1).count();

  const EncodeResult second = in_stage("second pass", [&] {
    return backend.encode({settings.sequence_id, report.schedule.frame_qps, settings.profile});
  });
  report.evaluation = in_stage("evaluate", [&] {
    return evaluate_run(second, layout, settings.lambda, settings.budget, settings.mse_mode);
  });
  const auto t_end = Clock::now();
  report.timing.pass2 = std::chrono::duration<double>(t_end - t_opt).count();
  report.timing.total = std::chrono::duration<double>(t_end - start).count();
  return report;
}

Comparison compare_runs(const std::vector<TwoPassReport>& reports,
                        const std::vector<TwoPassReport>& anchor_reports) {
  if (reports.size() < 4 || anchor_reports.size() < 4)
    fail(ErrorKind::invalid_argument, "compare_runs needs at least 4 budgets per side");
  auto curve = [](const std::vector<TwoPassReport>& rs) {
    std::vector<RdCurvePoint> pts;
    for (const auto& r : rs) {
      if (!r.evaluation.quality.T_prime)
        fail(ErrorKind::numerical, "report at budget " + std::to_string(r.budget) +
                                       " has zero distortion; T' is unbounded");
      pts.push_back({r.evaluation.achieved_bits, *r.evaluation.quality.T_prime});
    }
    return pts;
  };
  Comparison c;
  c.bd_rate = bd_rate(curve(anchor_reports), curve(reports));
  for (const auto& r : reports) {
    ComparisonRow row;
    row.budget = r.budget;
    row.test_bits = r.evaluation.achieved_bits;
    row.test_quality = *r.evaluation.quality.T_prime;
    auto it = std::find_if(anchor_reports.begin(), anchor_reports.end(),
                           [&](const TwoPassReport& a) { return a.budget == r.budget; });
    if (it != anchor_reports.end()) {
      row.anchor_bits = it->evaluation.achieved_bits;
      row.anchor_quality = *it->evaluation.quality.T_prime;
    }
    c.rows.push_back(row);
  }
  return c;
}

}  // namespace lfbit
