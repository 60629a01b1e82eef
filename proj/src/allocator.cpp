#include "lfbit/allocator.hpp"

#include <algorithm>
#include <cmath>

#include "lfbit/error.hpp"
#include "lfbit/metrics.hpp"

namespace lfbit {

ProfileKind parse_profile_kind(std::string_view name) {
  if (name == "ai" || name == "all_intra" || name == "all-intra") return ProfileKind::all_intra;
  if (name == "ra" || name == "random_access" || name == "random-access")
    return ProfileKind::random_access;
  if (name == "ld" || name == "low_delay" || name == "low-delay") return ProfileKind::low_delay;
  fail(ErrorKind::invalid_argument, "unknown profile '" + std::string(name) + "'");
}

std::string to_string(ProfileKind kind) {
  switch (kind) {
    case ProfileKind::all_intra: return "all_intra";
    case ProfileKind::random_access: return "random_access";
    case ProfileKind::low_delay: return "low_delay";
  }
  return "unknown";
}

std::string short_name(ProfileKind kind) {
  switch (kind) {
    case ProfileKind::all_intra: return "ai";
    case ProfileKind::random_access: return "ra";
    case ProfileKind::low_delay: return "ld";
  }
  return "unknown";
}

int EncoderProfile::offset_at(int position) const {
  if (qp_offsets.empty()) return 0;
  return qp_offsets.at(position);
}

std::vector<int> EncoderProfile::sweep_qps() const {
  std::vector<int> qps;
  for (int q = sweep_min_qp; q <= sweep_max_qp; ++q) qps.push_back(q);
  return qps;
}

EncoderProfile profile_defaults(ProfileKind kind) {
  EncoderProfile p;
  p.kind = kind;
  switch (kind) {
    case ProfileKind::all_intra:
      p.gop_size = 1;
      break;
    case ProfileKind::random_access:
      p.gop_size = 8;
      p.qp_offsets = {1, 2, 3, 4, 4, 3, 4, 4};
      break;
    case ProfileKind::low_delay:
      p.gop_size = 12;
      p.qp_offsets = {5, 4, 5, 1, 5, 4, 5, 1, 5, 4, 5, 1};
      break;
  }
  return p;
}

std::vector<double> profile_budgets(ProfileKind kind) {
  constexpr double Mb = 1e6;
  switch (kind) {
    case ProfileKind::all_intra: return {5 * Mb, 10 * Mb, 20 * Mb, 40 * Mb};
    case ProfileKind::random_access: return {1 * Mb, 2 * Mb, 4 * Mb, 8 * Mb};
    case ProfileKind::low_delay: return {0.5 * Mb, 1 * Mb, 2 * Mb, 4 * Mb};
  }
  return {};
}

std::vector<double> lambda_presets() { return {0.0, 2.0, 4.0}; }

int variable_count(const EncoderProfile& profile, int frame_count) {
  require(frame_count >= 1, "frame count must be >= 1");
  if (!profile.uses_gops()) return frame_count;
  return (frame_count + profile.gop_size - 1) / profile.gop_size;
}

std::vector<double> uniform_allocation(const EncoderProfile& profile, int frame_count,
                                       double budget) {
  require(budget > 0.0, "budget must be > 0");
  const int m = variable_count(profile, frame_count);
  return std::vector<double>(m, budget / m);
}

namespace {

struct Candidate {
  int qp;
  double bits;
};

/// Index of the candidate nearest to target; candidates are in increasing QP
/// order so strict comparison keeps the lower QP on ties.
std::size_t nearest(const std::vector<Candidate>& cands, double target) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < cands.size(); ++i)
    if (std::abs(cands[i].bits - target) < std::abs(cands[best].bits - target)) best = i;
  return best;
}

std::vector<Candidate> frame_candidates(const RdSampleSet& samples, int f) {
  std::vector<Candidate> c;
  for (const auto& s : samples.frame(f)) c.push_back({s.qp, s.bits});
  if (c.empty()) fail(ErrorKind::invalid_argument, "frame " + std::to_string(f + 1) + " has no samples");
  return c;
}

std::vector<Candidate> gop_candidates(const RdSampleSet& samples, const FrameRange& range,
                                      int g) {
  std::vector<Candidate> c;
  for (const auto& s : samples.frame(range.begin)) {
    double total = 0.0;
    for (int f = range.begin; f < range.end; ++f) {
      const RdSample* sibling = samples.find(f, s.qp);
      if (!sibling)
        fail(ErrorKind::invalid_argument, "GOP " + std::to_string(g + 1) +
                                              ": incomplete sweep data at QP " +
                                              std::to_string(s.qp));
      total += sibling->bits;
    }
    c.push_back({s.qp, total});
  }
  for (int f = range.begin + 1; f < range.end; ++f)
    if (samples.frame(f).size() != c.size())
      fail(ErrorKind::invalid_argument,
           "GOP " + std::to_string(g + 1) + ": incomplete sweep data");
  if (c.empty()) fail(ErrorKind::invalid_argument, "GOP " + std::to_string(g + 1) + " has no samples");
  return c;
}

double candidate_bound(const std::vector<Candidate>& c, std::size_t i, double target) {
  double gap = 0.0;
  if (i > 0) gap = std::max(gap, std::abs(c[i - 1].bits - c[i].bits));
  if (i + 1 < c.size()) gap = std::max(gap, std::abs(c[i + 1].bits - c[i].bits));
  double bound = 0.5 * gap;
  const double hi = c.front().bits;  // lowest QP, most bits
  const double lo = c.back().bits;
  if (target > hi) bound = std::max(bound, target - hi);
  if (target < lo) bound = std::max(bound, lo - target);
  return bound;
}

}  // namespace

QpSchedule plan_all_intra(const RdSampleSet& samples, const std::vector<double>& allocation) {
  const int n = samples.frame_count();
  if (static_cast<int>(allocation.size()) != n)
    fail(ErrorKind::invalid_argument, "allocation has " + std::to_string(allocation.size()) +
                                          " entries for " + std::to_string(n) + " frames");
  QpSchedule s;
  s.target_bits = allocation;
  s.frame_qps.resize(n);
  s.variable_qps.resize(n);
  s.variable_bits.resize(n);
  s.clamped.assign(n, false);
  s.expected_mse.resize(n);
  for (int f = 0; f < n; ++f) {
    const auto cands = frame_candidates(samples, f);
    const Candidate& c = cands[nearest(cands, allocation[f])];
    s.frame_qps[f] = s.variable_qps[f] = c.qp;
    s.variable_bits[f] = c.bits;
    s.expected_mse[f] = samples.find(f, c.qp)->mse;
    s.expected_bits += c.bits;
  }
  return s;
}

QpSchedule plan_gop(const RdSampleSet& samples, const GopGrouping& grouping,
                    const std::vector<double>& allocation, const EncoderProfile& profile) {
  require(grouping.frame_count() == samples.frame_count(),
          "GOP grouping and sample set disagree on frame count");
  require(profile.uses_gops() && grouping.gop_size() == profile.gop_size,
          "grouping does not match the profile GOP size");
  const int m = grouping.group_count();
  if (static_cast<int>(allocation.size()) != m)
    fail(ErrorKind::invalid_argument, "allocation has " + std::to_string(allocation.size()) +
                                          " entries for " + std::to_string(m) + " GOPs");
  const int n = samples.frame_count();
  QpSchedule s;
  s.target_bits = allocation;
  s.frame_qps.resize(n);
  s.variable_qps.resize(m);
  s.variable_bits.resize(m);
  s.clamped.assign(n, false);
  s.expected_mse.resize(n);
  for (int g = 0; g < m; ++g) {
    const FrameRange range = grouping.group(g);
    const auto cands = gop_candidates(samples, range, g);
    const Candidate& c = cands[nearest(cands, allocation[g])];
    s.variable_qps[g] = c.qp;
    s.variable_bits[g] = c.bits;
    s.expected_bits += c.bits;
    for (int f = range.begin; f < range.end; ++f) {
      const int raw = c.qp + profile.offset_at(f - range.begin);
      s.frame_qps[f] = std::clamp(raw, 0, 51);
      s.clamped[f] = raw != s.frame_qps[f];
      s.expected_mse[f] = samples.find(f, c.qp)->mse;
    }
  }
  return s;
}

QpSchedule plan_schedule(const EncoderProfile& profile, const RdSampleSet& samples,
                         const std::vector<double>& allocation) {
  if (!profile.uses_gops()) return plan_all_intra(samples, allocation);
  return plan_gop(samples, GopGrouping(samples.frame_count(), profile.gop_size), allocation,
                  profile);
}

double quantization_bound(const EncoderProfile& profile, const RdSampleSet& samples,
                          const QpSchedule& schedule) {
  double bound = 0.0;
  if (!profile.uses_gops()) {
    for (int f = 0; f < samples.frame_count(); ++f) {
      const auto cands = frame_candidates(samples, f);
      const auto it = std::find_if(cands.begin(), cands.end(), [&](const Candidate& c) {
        return c.qp == schedule.variable_qps.at(f);
      });
      bound += candidate_bound(cands, it - cands.begin(), schedule.target_bits.at(f));
    }
    return bound;
  }
  const GopGrouping grouping(samples.frame_count(), profile.gop_size);
  for (int g = 0; g < grouping.group_count(); ++g) {
    const auto cands = gop_candidates(samples, grouping.group(g), g);
    const auto it = std::find_if(cands.begin(), cands.end(), [&](const Candidate& c) {
      return c.qp == schedule.variable_qps.at(g);
    });
    bound += candidate_bound(cands, it - cands.begin(), schedule.target_bits.at(g));
  }
  return bound;
}

void fill_expected_T(QpSchedule& schedule, const ScanOrder& order,
                     const ConfidenceGrid& confidence, double lambda) {
  const int n = static_cast<int>(schedule.expected_mse.size());
  if (order.frame_count() < n)
    fail(ErrorKind::invalid_argument, "scan order maps fewer frames than the schedule");
  std::vector<Cell> cells(order.cells().begin(), order.cells().begin() + n);
  const ScanOrder used = ScanOrder::from_cells(order.kind(), order.grid(), std::move(cells));
  const MseGrid grid = MseGrid::from_frames(used, schedule.expected_mse);
  schedule.expected_T = evaluate_quality(grid, confidence, lambda).T;
}

AllocationProblem assemble_problem(const EncoderProfile& profile,
                                   const std::vector<HyperbolicModel>& models,
                                   const ConfidenceGrid& confidence, const ScanOrder& order,
                                   double lambda, double budget) {
  const int n = static_cast<int>(models.size());
  require(n >= 1, "no models to allocate over");
  require(budget > 0.0, "budget must be > 0");
  require(lambda >= 0.0, "lambda must be >= 0");
  if (!(order.grid() == confidence.grid()))
    fail(ErrorKind::invalid_argument, "confidence grid does not cover the scan-order grid");
  if (order.frame_count() < n)
    fail(ErrorKind::invalid_argument, "scan order maps " + std::to_string(order.frame_count()) +
                                          " frames but there are " + std::to_string(n) +
                                          " models");

  const ModelKind expected = profile.uses_gops() ? ModelKind::gop_bits : ModelKind::frame_bits;
  std::optional<GopGrouping> grouping;
  if (profile.uses_gops()) grouping.emplace(n, profile.gop_size);

  AllocationProblem p;
  p.variable_kind = profile.uses_gops() ? VariableKind::per_gop : VariableKind::per_frame;
  p.variable_count = variable_count(profile, n);
  p.lambda = lambda;
  p.budget = budget;
  p.grid_cells = confidence.grid().cells();

  std::vector<int> term_of_frame(n, -1);
  std::vector<int> frames_in_variable(p.variable_count, 0);
  std::vector<int> usable_in_variable(p.variable_count, 0);
  for (int f = 0; f < n; ++f) {
    const auto& m = models[f];
    if (m.kind != expected)
      fail(ErrorKind::invalid_argument, "frame " + std::to_string(f + 1) +
                                            ": model kind does not match the profile");
    const int v = grouping ? grouping->group_of(f) : f;
    if (grouping && m.gop_index && *m.gop_index != v)
      fail(ErrorKind::invalid_argument,
           "frame " + std::to_string(f + 1) + ": model GOP index does not match the grouping");
    ++frames_in_variable[v];
    if (!m.monotone) continue;
    ++usable_in_variable[v];
    term_of_frame[f] = static_cast<int>(p.terms.size());
    p.terms.push_back({f, v, phi(confidence.at(order.cell(f))), m.alpha, m.beta});
  }

  p.pinned.assign(p.variable_count, std::nullopt);
  for (int v = 0; v < p.variable_count; ++v)
    if (usable_in_variable[v] == 0) p.pinned[v] = budget * frames_in_variable[v] / n;

  const SpStructure full = build_sp_structure(order, confidence, n);
  p.sp.frames = static_cast<int>(p.terms.size());
  for (const auto& row : full.rows) {
    const int ti = term_of_frame[row.i];
    const int tj = term_of_frame[row.j];
    if (ti >= 0 && tj >= 0) p.sp.rows.push_back({ti, tj, row.psi});
  }
  return p;
}

}  // namespace lfbit
