#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "lfbit/allocator.hpp"
#include "lfbit/encoder_backend.hpp"
#include "lfbit/error.hpp"
#include "lfbit/metrics.hpp"
#include "lfbit/optimizer.hpp"
#include "lfbit/rd_model.hpp"

namespace lfbit {

/// First-pass sweep: every frame coded at every sweep QP. In GOP profiles the
/// recorded QP is the GOP base QP of the run.
struct PassOneStats {
  ProfileKind profile = ProfileKind::all_intra;
  int sweep_min_qp = kSweepMinQp;
  int sweep_max_qp = kSweepMaxQp;
  int frame_count = 0;
  /// Ordered by sweep QP, then frame.
  std::vector<FrameStat> stats;
  /// Total bits per sweep QP.
  std::vector<std::pair<int, double>> totals;
  double seconds = 0.0;

  RdSampleSet samples(MseMode mode) const;
};

/// A first pass in which some sweep runs failed; the successful runs are kept.
class FirstPassError : public Error {
 public:
  FirstPassError(ErrorKind kind, const std::string& what, PassOneStats partial,
                 std::vector<int> failed_qps)
      : Error(kind, what), partial_(std::move(partial)), failed_qps_(std::move(failed_qps)) {}

  const PassOneStats& partial() const { return partial_; }
  const std::vector<int>& failed_qps() const { return failed_qps_; }

 private:
  PassOneStats partial_;
  std::vector<int> failed_qps_;
};

/// Runs the sweep with up to `parallelism` concurrent encodes. The result does
/// not depend on `parallelism`.
PassOneStats first_pass(EncoderBackend& backend, const EncoderProfile& profile,
                        const std::string& sequence_id, int parallelism);

struct LightFieldLayout {
  ScanOrder order;
  ConfidenceGrid confidence;
};

enum class AllocationMode { two_step, uniform };

std::string to_string(AllocationMode mode);
AllocationMode parse_allocation_mode(std::string_view name);

struct RunSettings {
  EncoderProfile profile;
  double budget = 0.0;
  double lambda = 0.0;
  MseMode mse_mode = MseMode::combined;
  AllocationMode allocation = AllocationMode::two_step;
  int parallelism = 1;
  std::string sequence_id = "sequence";
  SolverOptions solver;
};

struct Timing {
  double pass1 = 0.0;
  double optimize = 0.0;
  double pass2 = 0.0;
  double total = 0.0;
};

struct RunEvaluation {
  double achieved_bits = 0.0;
  /// |achieved - budget| / budget.
  double bit_error = 0.0;
  QualityReport quality;
};

struct SolverSummary {
  int step_a_iterations = 0;
  double step_a_kkt_residual = 0.0;
  int step_b_iterations = 0;
  double step_b_kkt_residual = 0.0;
  bool step_b_converged = true;
};

struct TwoPassReport {
  ProfileKind profile = ProfileKind::all_intra;
  AllocationMode allocation_mode = AllocationMode::two_step;
  std::string backend;
  std::string sequence_id;
  double budget = 0.0;
  double lambda = 0.0;
  MseMode mse_mode = MseMode::combined;
  FitWindow fit_window;
  std::vector<HyperbolicModel> models;
  /// Continuous bit targets per variable.
  std::vector<double> allocation;
  double predicted_T = 0.0;
  SolverSummary solver;
  QpSchedule schedule;
  RunEvaluation evaluation;
  bool pass_one_cached = false;
  Timing timing;
};

/// Second-pass quality and bit error.
RunEvaluation evaluate_run(const EncodeResult& result, const LightFieldLayout& layout,
                           double lambda, double budget, MseMode mode);

/// Thread-safe store of first-pass results keyed by sequence, profile,
/// backend identity and sweep range.
class PassOneCache {
 public:
  static std::string key(const std::string& sequence_id, const EncoderProfile& profile,
                         const EncoderBackend& backend);

  std::shared_ptr<const PassOneStats> find(const std::string& key) const;
  void store(const std::string& key, std::shared_ptr<const PassOneStats> stats);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const PassOneStats>> entries_;
};

/// First pass (or cache hit), fit, optimize, plan, second pass, evaluate.
/// Errors carry the name of the failing stage.
TwoPassReport run_two_pass(const RunSettings& settings, const LightFieldLayout& layout,
                           EncoderBackend& backend, PassOneCache* cache = nullptr);

struct ComparisonRow {
  double budget = 0.0;
  double anchor_bits = 0.0;
  double anchor_quality = 0.0;
  double test_bits = 0.0;
  double test_quality = 0.0;
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  /// BD-rate of `reports` against `anchor_reports` on (bits, T') curves.
  double bd_rate = 0.0;
};

/// Needs at least four reports per side; rows pair reports by budget.
Comparison compare_runs(const std::vector<TwoPassReport>& reports,
                        const std::vector<TwoPassReport>& anchor_reports);

}  // namespace lfbit
