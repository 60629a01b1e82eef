#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "lfbit/core_model.hpp"
#include "lfbit/metrics.hpp"

namespace lfbit {

inline constexpr int kSweepMinQp = 16;
inline constexpr int kSweepMaxQp = 45;
inline constexpr int kFitWindowHalfWidth = 7;
inline constexpr double kMinFitMse = 1e-6;
inline constexpr double kBetaMin = -10.0;
inline constexpr double kBetaMax = -1e-3;

/// One row of an encoder statistics file. `frame` is zero-based here and
/// one-based on disk.
struct FrameStat {
  int frame = 0;
  int qp = 0;
  double bits = 0.0;
  ChannelMse mse;
};

/// CSV `frame_index,qp,bits,mse_y,mse_u,mse_v`; an optional header line
/// starting with `frame_index` is skipped.
std::vector<FrameStat> read_stats_csv(std::istream& in);
void write_stats_csv(std::ostream& out, std::span<const FrameStat> stats);

struct RdSample {
  int frame = 0;
  int qp = 0;
  double bits = 0.0;
  double mse = 0.0;
};

/// First-pass observations grouped per frame and sorted by sweep QP (the GOP
/// base QP in GOP modes).
class RdSampleSet {
 public:
  /// Throws unless QPs are unique per frame, bits > 0, mse >= 0, QP in
  /// [0,51] and bits strictly decrease as QP increases.
  RdSampleSet(int frame_count, std::vector<RdSample> samples);

  static RdSampleSet from_stats(int frame_count, std::span<const FrameStat> stats,
                                MseMode mode);

  int frame_count() const { return static_cast<int>(per_frame_.size()); }
  std::span<const RdSample> frame(int f) const { return per_frame_.at(f); }
  const RdSample* find(int frame, int qp) const;

  /// Sorted union of QPs observed for any frame.
  const std::vector<int>& qps() const { return qps_; }

  /// Sum of frame bits at `qp`; throws if any frame lacks that QP.
  double total_bits(int qp) const;

  RdSampleSet restricted_to(int qp_lo, int qp_hi) const;

  /// Number of mse values that fitting will clamp to kMinFitMse.
  int count_below_min_mse() const;

 private:
  std::vector<std::vector<RdSample>> per_frame_;
  std::vector<int> qps_;
};

struct FitWindow {
  int center_qp = 0;
  int qp_lo = 0;
  int qp_hi = 0;
};

/// Picks the QP whose total output is closest to `budget` (ties go to the
/// lower QP) and returns [max(sweep_min, qc-7), min(sweep_max, qc+7)].
FitWindow select_fit_window(std::span<const std::pair<int, double>> totals_by_qp, double budget,
                            int sweep_min = kSweepMinQp, int sweep_max = kSweepMaxQp,
                            int half_width = kFitWindowHalfWidth);
FitWindow select_fit_window(const RdSampleSet& samples, double budget,
                            int sweep_min = kSweepMinQp, int sweep_max = kSweepMaxQp,
                            int half_width = kFitWindowHalfWidth);

struct LogLogFit {
  double a = 0.0;
  double b = 0.0;
  double r_squared = 0.0;
  /// Set when every y is identical: the slope is 0 and r^2 is reported as 0.
  bool zero_slope = false;
};

/// Ordinary least squares of ln(y) on ln(x).
LogLogFit fit_loglog(std::span<const std::pair<double, double>> points);

enum class ModelKind { frame_bits, gop_bits };

/// d = alpha * x^beta with x the frame bits or the containing GOP's bits.
struct HyperbolicModel {
  double alpha = 1.0;
  double beta = -1.0;
  double r_squared = 0.0;
  ModelKind kind = ModelKind::frame_bits;
  std::optional<int> gop_index;
  /// False when the fitted slope was >= 0; such frames are left out of the
  /// optimization.
  bool monotone = true;
  /// Slope before clamping into [kBetaMin, kBetaMax].
  double raw_beta = -1.0;
  int clamped_mse = 0;

  double distortion(double bits) const;
};

HyperbolicModel fit_frame_model_intra(std::span<const RdSample> samples);

/// Regresses the frame's mse against the total bits of its GOP at each sweep
/// QP present for the frame.
HyperbolicModel fit_frame_model_gop(int frame, const GopGrouping& grouping,
                                    const RdSampleSet& samples);

/// Fits every frame. `grouping` selects the GOP model; `threads` <= 1 runs
/// serially. Output is independent of the thread count.
std::vector<HyperbolicModel> fit_all_models(const RdSampleSet& samples,
                                            const std::optional<GopGrouping>& grouping,
                                            int threads = 1);

}  // namespace lfbit
