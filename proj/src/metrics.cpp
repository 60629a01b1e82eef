#include "lfbit/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <istream>

#include "lfbit/error.hpp"

namespace lfbit {

double frame_mse(PlaneView reference, PlaneView distorted) {
  if (reference.width != distorted.width || reference.height != distorted.height)
    fail(ErrorKind::invalid_argument, "frame_mse: plane dimensions differ");
  const std::size_t count = static_cast<std::size_t>(reference.width) * reference.height;
  require(count > 0, "frame_mse: empty plane");
  require(reference.samples.size() >= count && distorted.samples.size() >= count,
          "frame_mse: plane buffer smaller than its dimensions");
  // Integer accumulation per row keeps the sum exact.
  double sum = 0.0;
  for (int r = 0; r < reference.height; ++r) {
    std::uint64_t row_sum = 0;
    const std::size_t base = static_cast<std::size_t>(r) * reference.width;
    for (int c = 0; c < reference.width; ++c) {
      const int diff = int(reference.samples[base + c]) - int(distorted.samples[base + c]);
      row_sum += static_cast<std::uint64_t>(diff * diff);
    }
    sum += static_cast<double>(row_sum);
  }
  return sum / static_cast<double>(count);
}

double combine_channels(double mse_y, double mse_u, double mse_v) {
  require(mse_y >= 0.0 && mse_u >= 0.0 && mse_v >= 0.0,
          "combine_channels: MSE values must be nonnegative");
  return (6.0 * mse_y + mse_u + mse_v) / 8.0;
}

double frame_distortion(const ChannelMse& m, MseMode mode) {
  if (mode == MseMode::luma) {
    require(m.y >= 0.0, "luma MSE must be nonnegative");
    return m.y;
  }
  return combine_channels(m);
}

std::optional<Yuv420Frame> read_yuv420_frame(std::istream& in, int width, int height) {
  require(width >= 1 && height >= 1, "frame dimensions must be >= 1");
  Yuv420Frame frame;
  frame.width = width;
  frame.height = height;
  const std::size_t luma = static_cast<std::size_t>(width) * height;
  const std::size_t chroma = static_cast<std::size_t>((width + 1) / 2) * ((height + 1) / 2);
  frame.y.resize(luma);
  frame.u.resize(chroma);
  frame.v.resize(chroma);

  in.read(reinterpret_cast<char*>(frame.y.data()), static_cast<std::streamsize>(luma));
  if (in.gcount() == 0 && in.eof()) return std::nullopt;
  if (static_cast<std::size_t>(in.gcount()) != luma)
    fail(ErrorKind::parse, "truncated 4:2:0 frame (luma)");
  for (auto* plane : {&frame.u, &frame.v}) {
    in.read(reinterpret_cast<char*>(plane->data()), static_cast<std::streamsize>(chroma));
    if (static_cast<std::size_t>(in.gcount()) != chroma)
      fail(ErrorKind::parse, "truncated 4:2:0 frame (chroma)");
  }
  return frame;
}

ChannelMse yuv420_mse(const Yuv420Frame& reference, const Yuv420Frame& distorted) {
  return {frame_mse(reference.luma(), distorted.luma()), frame_mse(reference.cb(), distorted.cb()),
          frame_mse(reference.cr(), distorted.cr())};
}

MseGrid::MseGrid(AngularGrid grid, std::vector<double> mse)
    : MseGrid(grid, std::move(mse), std::vector<bool>(grid.cells(), true)) {}

MseGrid::MseGrid(AngularGrid grid, std::vector<double> mse, std::vector<bool> valid)
    : grid_(grid), mse_(std::move(mse)), valid_(std::move(valid)) {
  require(grid.rows >= 1 && grid.cols >= 1, "angular grid dimensions must be >= 1");
  require(mse_.size() == static_cast<std::size_t>(grid.cells()) &&
              valid_.size() == mse_.size(),
          "MSE grid size does not match its shape");
  for (std::size_t i = 0; i < mse_.size(); ++i) {
    require(std::isfinite(mse_[i]) && mse_[i] >= 0.0, "MSE values must be finite and >= 0");
    if (!valid_[i]) mse_[i] = 0.0;
  }
}

MseGrid MseGrid::from_frames(const ScanOrder& order, const std::vector<double>& frame_mse) {
  require(static_cast<int>(frame_mse.size()) == order.frame_count(),
          "per-frame MSE count does not match the scan order");
  const AngularGrid grid = order.grid();
  std::vector<double> values(grid.cells(), 0.0);
  std::vector<bool> valid(grid.cells(), false);
  for (int f = 0; f < order.frame_count(); ++f) {
    const Cell c = order.cell(f);
    const std::size_t i = static_cast<std::size_t>(c.row) * grid.cols + c.col;
    values[i] = frame_mse[f];
    valid[i] = true;
  }
  return MseGrid(grid, std::move(values), std::move(valid));
}

std::size_t MseGrid::index(Cell c) const {
  require(c.row >= 0 && c.row < grid_.rows && c.col >= 0 && c.col < grid_.cols,
          "cell outside MSE grid");
  return static_cast<std::size_t>(c.row) * grid_.cols + c.col;
}

MseGrid compute_mse_grid(std::istream& reference, std::istream& reconstructed,
                         const SaiGridDims& dims, const ScanOrder& order, MseMode mode) {
  require(order.grid() == dims.angular(), "scan order grid does not match SAI grid");
  std::vector<double> per_frame;
  per_frame.reserve(order.frame_count());
  for (int f = 0; f < order.frame_count(); ++f) {
    auto ref = read_yuv420_frame(reference, dims.width(), dims.height());
    auto rec = read_yuv420_frame(reconstructed, dims.width(), dims.height());
    if (!ref || !rec)
      fail(ErrorKind::parse, "sequence ended after " + std::to_string(f) + " of " +
                                 std::to_string(order.frame_count()) + " frames");
    per_frame.push_back(frame_distortion(yuv420_mse(*ref, *rec), mode));
  }
  return MseGrid::from_frames(order, per_frame);
}

double phi(double w) {
  require(w >= 0.0 && w <= 1.0, "confidence must lie in [0,1]");
  return w * w;
}

int delta(Cell a, Cell b) {
  const int dr = std::abs(a.row - b.row);
  const int dc = std::abs(a.col - b.col);
  if (dr + dc == 1) return 2;
  if (dr == 1 && dc == 1) return 1;
  return 0;
}

double adjacency_weight(double wa, double wb) { return phi(std::min(wa, wb)); }

namespace {

void check_shapes(const MseGrid& mse, const ConfidenceGrid& confidence) {
  if (!(mse.grid() == confidence.grid()))
    fail(ErrorKind::invalid_argument, "MSE grid and confidence grid shapes differ");
}

double pair_term(const MseGrid& mse, const ConfidenceGrid& conf, Cell a, Cell b) {
  const double diff = mse.at(a) - mse.at(b);
  const double psi = delta(a, b) * adjacency_weight(conf.at(a), conf.at(b));
  return psi * (diff * diff);
}

}  // namespace

double weighted_mse(const MseGrid& mse, const ConfidenceGrid& confidence) {
  check_shapes(mse, confidence);
  const AngularGrid g = mse.grid();
  double sum = 0.0;
  for (int k = 0; k < g.rows; ++k)
    for (int l = 0; l < g.cols; ++l)
      if (mse.valid({k, l})) sum += phi(confidence.at({k, l})) * mse.at({k, l});
  return sum / g.cells();
}

double smoothness_penalty(const MseGrid& mse, const ConfidenceGrid& confidence) {
  check_shapes(mse, confidence);
  const AngularGrid g = mse.grid();
  double sum = 0.0;
  for (int k = 0; k < g.rows; ++k)
    for (int l = 0; l < g.cols; ++l)
      for (int m = 0; m < g.rows; ++m)
        for (int n = 0; n < g.cols; ++n) {
          const Cell a{k, l}, b{m, n};
          if (a == b || !mse.valid(a) || !mse.valid(b)) continue;
          sum += pair_term(mse, confidence, a, b);
        }
  return sum;
}

double smoothness_penalty_neighbors(const MseGrid& mse, const ConfidenceGrid& confidence) {
  check_shapes(mse, confidence);
  const AngularGrid g = mse.grid();
  double sum = 0.0;
  for (int k = 0; k < g.rows; ++k)
    for (int l = 0; l < g.cols; ++l) {
      const Cell a{k, l};
      if (!mse.valid(a)) continue;
      for (int m = std::max(0, k - 1); m <= std::min(g.rows - 1, k + 1); ++m)
        for (int n = std::max(0, l - 1); n <= std::min(g.cols - 1, l + 1); ++n) {
          const Cell b{m, n};
          if (a == b || !mse.valid(b)) continue;
          sum += pair_term(mse, confidence, a, b);
        }
    }
  return sum;
}

double target_T(double wmse, double sp, double lambda, AngularGrid grid) {
  require(wmse >= 0.0 && sp >= 0.0 && lambda >= 0.0, "target_T: inputs must be nonnegative");
  require(grid.cells() >= 1, "target_T: empty grid");
  return wmse + lambda * std::sqrt(sp) / grid.cells();
}

double t_prime(double T) {
  if (!(T > 0.0))
    fail(ErrorKind::numerical, "T' is undefined for T <= 0 (lossless reconstruction)");
  return 10.0 * std::log10(255.0 * 255.0 / T);
}

double interp_sq_error_expectation(double d00, double d01, double d10, double d11) {
  const double squares = d00 * d00 + d01 * d01 + d10 * d10 + d11 * d11;
  const double diagonal = d00 * d11 + d01 * d10;
  const double adjacent = d00 * d01 + d00 * d10 + d01 * d11 + d10 * d11;
  return squares / 9.0 + diagonal / 18.0 + adjacent / 9.0;
}

namespace {

struct CubicFit {
  // log10(bits) = c0 + c1 t + c2 t^2 + c3 t^3, t = (q - center) / scale
  Eigen::Vector4d coef;
  double center;
  double scale;

  double integral(double q_lo, double q_hi) const {
    auto antideriv = [&](double q) {
      const double t = (q - center) / scale;
      return scale * (coef[0] * t + coef[1] * t * t / 2 + coef[2] * t * t * t / 3 +
                      coef[3] * t * t * t * t / 4);
    };
    return antideriv(q_hi) - antideriv(q_lo);
  }
};

std::vector<RdCurvePoint> validated_curve(std::vector<RdCurvePoint> pts, const char* name) {
  if (pts.size() < 4)
    fail(ErrorKind::invalid_argument,
         std::string("bd_rate: ") + name + " curve needs at least 4 points");
  for (const auto& p : pts)
    if (!(p.bits > 0.0) || !std::isfinite(p.quality))
      fail(ErrorKind::invalid_argument,
           std::string("bd_rate: ") + name + " curve has nonpositive bits or bad quality");
  std::sort(pts.begin(), pts.end(),
            [](const RdCurvePoint& a, const RdCurvePoint& b) { return a.bits < b.bits; });
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (!(pts[i].quality > pts[i - 1].quality) || !(pts[i].bits > pts[i - 1].bits))
      fail(ErrorKind::invalid_argument,
           std::string("bd_rate: ") + name + " curve is not strictly increasing");
  return pts;
}

CubicFit fit_cubic(const std::vector<RdCurvePoint>& pts) {
  const double lo = pts.front().quality;
  const double hi = pts.back().quality;
  CubicFit fit{Eigen::Vector4d::Zero(), 0.5 * (lo + hi), std::max(0.5 * (hi - lo), 1e-12)};
  Eigen::MatrixXd A(pts.size(), 4);
  Eigen::VectorXd b(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double t = (pts[i].quality - fit.center) / fit.scale;
    A(i, 0) = 1.0;
    A(i, 1) = t;
    A(i, 2) = t * t;
    A(i, 3) = t * t * t;
    b(i) = std::log10(pts[i].bits);
  }
  fit.coef = A.colPivHouseholderQr().solve(b);
  return fit;
}

}  // namespace

double bd_rate(const std::vector<RdCurvePoint>& anchor, const std::vector<RdCurvePoint>& test) {
  const auto a = validated_curve(anchor, "anchor");
  const auto t = validated_curve(test, "test");
  const double q_lo = std::max(a.front().quality, t.front().quality);
  const double q_hi = std::min(a.back().quality, t.back().quality);
  if (!(q_hi > q_lo)) fail(ErrorKind::invalid_argument, "bd_rate: curves share no quality range");
  const double avg_anchor = fit_cubic(a).integral(q_lo, q_hi) / (q_hi - q_lo);
  const double avg_test = fit_cubic(t).integral(q_lo, q_hi) / (q_hi - q_lo);
  return (std::pow(10.0, avg_test - avg_anchor) - 1.0) * 100.0;
}

QualityReport evaluate_quality(const MseGrid& mse, const ConfidenceGrid& confidence,
                               double lambda) {
  require(lambda >= 0.0, "lambda must be nonnegative");
  const double wmse = weighted_mse(mse, confidence);
  const double sp = smoothness_penalty_neighbors(mse, confidence);
  const double T = target_T(wmse, sp, lambda, mse.grid());
  std::optional<double> tp;
  if (T > 0.0) tp = t_prime(T);
  return QualityReport{wmse, sp, T, tp, lambda, mse};
}

}  // namespace lfbit
