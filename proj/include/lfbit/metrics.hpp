#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "lfbit/core_model.hpp"

namespace lfbit {

/// Read-only view of one 8-bit sample plane.
struct PlaneView {
  std::span<const std::uint8_t> samples;
  int width = 0;
  int height = 0;
};

/// Mean squared sample difference between two planes of equal size.
double frame_mse(PlaneView reference, PlaneView distorted);

struct ChannelMse {
  double y = 0.0;
  double u = 0.0;
  double v = 0.0;
};

/// 6:1:1 channel weighting, (6*y + u + v) / 8.
double combine_channels(double mse_y, double mse_u, double mse_v);
inline double combine_channels(const ChannelMse& m) { return combine_channels(m.y, m.u, m.v); }

enum class MseMode { combined, luma };

/// Scalar frame distortion used by fitting and reporting.
double frame_distortion(const ChannelMse& m, MseMode mode);

/// One planar 8-bit 4:2:0 frame (chroma planes are ceil(w/2) x ceil(h/2)).
struct Yuv420Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> y, u, v;

  PlaneView luma() const { return {y, width, height}; }
  PlaneView cb() const { return {u, (width + 1) / 2, (height + 1) / 2}; }
  PlaneView cr() const { return {v, (width + 1) / 2, (height + 1) / 2}; }
};

/// Returns nullopt at a clean end of stream; throws on a truncated frame.
std::optional<Yuv420Frame> read_yuv420_frame(std::istream& in, int width, int height);

ChannelMse yuv420_mse(const Yuv420Frame& reference, const Yuv420Frame& distorted);

/// Per-SAI distortion over the angular grid. Cells without a frame (when the
/// sequence is shorter than K*L) are marked invalid and carry zero.
class MseGrid {
 public:
  /// A single unmapped cell.
  MseGrid() : MseGrid(AngularGrid{}, {0.0}, {false}) {}
  MseGrid(AngularGrid grid, std::vector<double> mse);
  MseGrid(AngularGrid grid, std::vector<double> mse, std::vector<bool> valid);

  /// Scatter per-frame distortions onto the grid through a scan order.
  static MseGrid from_frames(const ScanOrder& order, const std::vector<double>& frame_mse);

  AngularGrid grid() const { return grid_; }
  double at(Cell c) const { return mse_[index(c)]; }
  bool valid(Cell c) const { return valid_[index(c)]; }
  const std::vector<double>& values() const { return mse_; }

 private:
  std::size_t index(Cell c) const;

  AngularGrid grid_;
  std::vector<double> mse_;
  std::vector<bool> valid_;
};

/// Read `order.frame_count()` frames from each stream and compute the
/// per-SAI distortion grid.
MseGrid compute_mse_grid(std::istream& reference, std::istream& reconstructed,
                         const SaiGridDims& dims, const ScanOrder& order, MseMode mode);

/// Confidence weight, w^2.
double phi(double w);

/// Angular adjacency: 2 for 4-neighbours, 1 for diagonal neighbours, else 0.
int delta(Cell a, Cell b);

/// phi(min(wa, wb)): a pair counts only if both views are trustworthy.
double adjacency_weight(double wa, double wb);

double weighted_mse(const MseGrid& mse, const ConfidenceGrid& confidence);

/// Sum over all ordered pairs of distinct cells of
/// delta * adjacency_weight * (MSE_a - MSE_b)^2. Each unordered pair is
/// therefore counted twice. This is the definitional O((KL)^2) loop.
double smoothness_penalty(const MseGrid& mse, const ConfidenceGrid& confidence);

/// Same sum restricted to 8-neighbourhoods, visiting pairs in the same order
/// as the definitional loop so results agree bit for bit.
double smoothness_penalty_neighbors(const MseGrid& mse, const ConfidenceGrid& confidence);

/// T = wmse + lambda * sqrt(sp) / (K*L).
double target_T(double wmse, double sp, double lambda, AngularGrid grid);

/// 10*log10(255^2 / T). Throws for T <= 0.
double t_prime(double T);

/// Closed-form mean over the unit square of the squared bilinear
/// interpolation of the four corner distortions.
double interp_sq_error_expectation(double d00, double d01, double d10, double d11);

struct RdCurvePoint {
  double bits = 0.0;
  double quality = 0.0;
};

/// Bjontegaard delta rate in percent: cubic fit of log10(bits) against
/// quality, averaged over the shared quality interval. Negative means the
/// test curve needs fewer bits.
double bd_rate(const std::vector<RdCurvePoint>& anchor, const std::vector<RdCurvePoint>& test);

struct QualityReport {
  double wmse = 0.0;
  double sp = 0.0;
  double T = 0.0;
  /// Empty when T == 0 (reported as "inf").
  std::optional<double> T_prime;
  double lambda = 0.0;
  MseGrid per_sai_mse;
};

QualityReport evaluate_quality(const MseGrid& mse, const ConfidenceGrid& confidence,
                               double lambda);

}  // namespace lfbit
