#include "lfbit/rd_model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "csv_util.hpp"
#include "lfbit/error.hpp"
#include "parallel.hpp"

namespace lfbit {

std::vector<FrameStat> read_stats_csv(std::istream& in) {
  std::vector<FrameStat> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    auto fields = detail::split_fields(line);
    const auto where = detail::line_ref("stats", line_no);
    if (rows.empty() && !fields.empty() && fields[0] == "frame_index") continue;
    if (fields.size() != 6)
      fail(ErrorKind::parse, where + ": expected frame_index,qp,bits,mse_y,mse_u,mse_v");
    FrameStat s;
    const auto frame = detail::parse_int(fields[0], where);
    if (frame < 1) fail(ErrorKind::parse, where + ": frame_index must be >= 1");
    s.frame = static_cast<int>(frame - 1);
    s.qp = static_cast<int>(detail::parse_int(fields[1], where));
    s.bits = detail::parse_double(fields[2], where);
    s.mse = {detail::parse_double(fields[3], where), detail::parse_double(fields[4], where),
             detail::parse_double(fields[5], where)};
    if (!(s.bits > 0.0)) fail(ErrorKind::parse, where + ": bits must be > 0");
    if (!(s.mse.y >= 0.0 && s.mse.u >= 0.0 && s.mse.v >= 0.0))
      fail(ErrorKind::parse, where + ": mse must be >= 0");
    rows.push_back(s);
  }
  return rows;
}

void write_stats_csv(std::ostream& out, std::span<const FrameStat> stats) {
  std::ostringstream os;
  os.precision(17);
  os << "frame_index,qp,bits,mse_y,mse_u,mse_v\n";
  for (const auto& s : stats)
    os << s.frame + 1 << ',' << s.qp << ',' << s.bits << ',' << s.mse.y << ',' << s.mse.u
       << ',' << s.mse.v << '\n';
  out << os.str();
}

RdSampleSet::RdSampleSet(int frame_count, std::vector<RdSample> samples) {
  require(frame_count >= 1, "sample set needs at least one frame");
  per_frame_.resize(frame_count);
  for (const auto& s : samples) {
    if (s.frame < 0 || s.frame >= frame_count)
      fail(ErrorKind::invalid_argument, "sample frame index " + std::to_string(s.frame + 1) +
                                            " outside 1.." + std::to_string(frame_count));
    if (s.qp < 0 || s.qp > 51)
      fail(ErrorKind::invalid_argument, "sample QP outside [0,51]");
    if (!(s.bits > 0.0)) fail(ErrorKind::invalid_argument, "sample bits must be > 0");
    if (!(s.mse >= 0.0)) fail(ErrorKind::invalid_argument, "sample mse must be >= 0");
    per_frame_[s.frame].push_back(s);
  }
  for (auto& list : per_frame_) {
    std::sort(list.begin(), list.end(),
              [](const RdSample& a, const RdSample& b) { return a.qp < b.qp; });
    for (std::size_t i = 1; i < list.size(); ++i) {
      const auto& prev = list[i - 1];
      const auto& cur = list[i];
      const std::string who = "frame " + std::to_string(cur.frame + 1);
      if (cur.qp == prev.qp) fail(ErrorKind::invalid_argument, who + ": duplicate QP");
      if (!(cur.bits < prev.bits))
        fail(ErrorKind::invalid_argument,
             who + ": bits do not decrease from QP " + std::to_string(prev.qp) + " to " +
                 std::to_string(cur.qp));
    }
    for (const auto& s : list) qps_.push_back(s.qp);
  }
  std::sort(qps_.begin(), qps_.end());
  qps_.erase(std::unique(qps_.begin(), qps_.end()), qps_.end());
}

RdSampleSet RdSampleSet::from_stats(int frame_count, std::span<const FrameStat> stats,
                                    MseMode mode) {
  std::vector<RdSample> samples;
  samples.reserve(stats.size());
  for (const auto& s : stats)
    samples.push_back({s.frame, s.qp, s.bits, frame_distortion(s.mse, mode)});
  return RdSampleSet(frame_count, std::move(samples));
}

const RdSample* RdSampleSet::find(int frame, int qp) const {
  const auto& list = per_frame_.at(frame);
  auto it = std::lower_bound(list.begin(), list.end(), qp,
                             [](const RdSample& s, int q) { return s.qp < q; });
  if (it == list.end() || it->qp != qp) return nullptr;
  return &*it;
}

double RdSampleSet::total_bits(int qp) const {
  double total = 0.0;
  for (int f = 0; f < frame_count(); ++f) {
    const RdSample* s = find(f, qp);
    if (!s)
      fail(ErrorKind::invalid_argument, "frame " + std::to_string(f + 1) +
                                            " has no sample at QP " + std::to_string(qp));
    total += s->bits;
  }
  return total;
}

RdSampleSet RdSampleSet::restricted_to(int qp_lo, int qp_hi) const {
  std::vector<RdSample> kept;
  for (const auto& list : per_frame_)
    for (const auto& s : list)
      if (s.qp >= qp_lo && s.qp <= qp_hi) kept.push_back(s);
  return RdSampleSet(frame_count(), std::move(kept));
}

int RdSampleSet::count_below_min_mse() const {
  int n = 0;
  for (const auto& list : per_frame_)
    for (const auto& s : list)
      if (s.mse < kMinFitMse) ++n;
  return n;
}

FitWindow select_fit_window(std::span<const std::pair<int, double>> totals_by_qp, double budget,
                            int sweep_min, int sweep_max, int half_width) {
  if (totals_by_qp.empty()) fail(ErrorKind::invalid_argument, "select_fit_window: no samples");
  require(budget > 0.0, "select_fit_window: budget must be > 0");
  std::optional<std::pair<int, double>> best;
  for (const auto& [qp, total] : totals_by_qp) {
    const double dev = std::abs(total - budget);
    if (!best || dev < best->second || (dev == best->second && qp < best->first))
      best = std::pair{qp, dev};
  }
  const int qc = best->first;
  return {qc, std::max(sweep_min, qc - half_width), std::min(sweep_max, qc + half_width)};
}

FitWindow select_fit_window(const RdSampleSet& samples, double budget, int sweep_min,
                            int sweep_max, int half_width) {
  std::vector<std::pair<int, double>> totals;
  for (int qp : samples.qps()) totals.emplace_back(qp, samples.total_bits(qp));
  return select_fit_window(totals, budget, sweep_min, sweep_max, half_width);
}

LogLogFit fit_loglog(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) fail(ErrorKind::invalid_argument, "fit_loglog: need at least 2 points");
  const double n = static_cast<double>(points.size());
  std::vector<double> lx, ly;
  lx.reserve(points.size());
  ly.reserve(points.size());
  for (const auto& [x, y] : points) {
    if (!(x > 0.0) || !(y > 0.0))
      fail(ErrorKind::invalid_argument, "fit_loglog: x and y must be > 0");
    lx.push_back(std::log(x));
    ly.push_back(std::log(y));
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double dx = lx[i] - mx;
    const double dy = ly[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0))
    fail(ErrorKind::invalid_argument, "fit_loglog: need at least 2 distinct x values");

  LogLogFit fit;
  if (syy == 0.0) {
    fit.a = my;
    fit.b = 0.0;
    fit.r_squared = 0.0;
    fit.zero_slope = true;
    return fit;
  }
  fit.b = sxy / sxx;
  fit.a = my - fit.b * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double e = ly[i] - (fit.a + fit.b * lx[i]);
    ss_res += e * e;
  }
  fit.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  return fit;
}

double HyperbolicModel::distortion(double bits) const {
  require(bits > 0.0, "model evaluated at nonpositive bits");
  return alpha * std::pow(bits, beta);
}

namespace {

HyperbolicModel model_from_points(std::vector<std::pair<double, double>> points,
                                  ModelKind kind) {
  int clamped = 0;
  for (auto& [x, y] : points) {
    if (y < kMinFitMse) {
      y = kMinFitMse;
      ++clamped;
    }
  }
  const LogLogFit fit = fit_loglog(points);
  HyperbolicModel m;
  m.kind = kind;
  m.alpha = std::exp(fit.a);
  m.raw_beta = fit.b;
  m.r_squared = fit.r_squared;
  m.monotone = fit.b < 0.0;
  m.beta = std::clamp(fit.b, kBetaMin, kBetaMax);
  m.clamped_mse = clamped;
  return m;
}

}  // namespace

HyperbolicModel fit_frame_model_intra(std::span<const RdSample> samples) {
  std::vector<std::pair<double, double>> points;
  for (const auto& s : samples) points.emplace_back(s.bits, s.mse);
  return model_from_points(std::move(points), ModelKind::frame_bits);
}

HyperbolicModel fit_frame_model_gop(int frame, const GopGrouping& grouping,
                                    const RdSampleSet& samples) {
  require(grouping.frame_count() == samples.frame_count(),
          "GOP grouping and sample set disagree on frame count");
  const int g = grouping.group_of(frame);
  const FrameRange range = grouping.group(g);
  std::vector<std::pair<double, double>> points;
  for (const auto& s : samples.frame(frame)) {
    double gop_bits = 0.0;
    for (int f = range.begin; f < range.end; ++f) {
      const RdSample* sibling = samples.find(f, s.qp);
      if (!sibling)
        fail(ErrorKind::invalid_argument,
             "frame " + std::to_string(f + 1) + " has no sample at QP " +
                 std::to_string(s.qp) + " (needed for GOP " + std::to_string(g + 1) + ")");
      gop_bits += sibling->bits;
    }
    points.emplace_back(gop_bits, s.mse);
  }
  HyperbolicModel m = model_from_points(std::move(points), ModelKind::gop_bits);
  m.gop_index = g;
  return m;
}

std::vector<HyperbolicModel> fit_all_models(const RdSampleSet& samples,
                                            const std::optional<GopGrouping>& grouping,
                                            int threads) {
  std::vector<HyperbolicModel> models(samples.frame_count());
  detail::parallel_for(samples.frame_count(), threads, [&](int f) {
    try {
      models[f] = grouping ? fit_frame_model_gop(f, *grouping, samples)
                           : fit_frame_model_intra(samples.frame(f));
    } catch (const Error& e) {
      throw Error(e.kind(), "frame " + std::to_string(f + 1) + ": " + e.what());
    }
  });
  return models;
}

}  // namespace lfbit
