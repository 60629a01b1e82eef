#include "lfbit/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "lfbit/error.hpp"
#include "lfbit/metrics.hpp"

namespace lfbit {

DifferenceMatrix::DifferenceMatrix(int n) : n_(n) {
  require(n >= 1, "difference matrix needs n >= 1");
  data_.assign(static_cast<std::size_t>(n) * n * n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const std::size_t row = static_cast<std::size_t>(i) * n + j;
      data_[row * n + i] = 1;
      data_[row * n + j] = -1;
    }
}

std::vector<double> DifferenceMatrix::apply(std::span<const double> d) const {
  require(static_cast<int>(d.size()) == n_, "distortion vector length mismatch");
  std::vector<double> out(rows(), 0.0);
  for (int r = 0; r < rows(); ++r) {
    double acc = 0.0;
    for (int c = 0; c < n_; ++c) acc += at(r, c) * d[c];
    out[r] = acc;
  }
  return out;
}

namespace {

double pair_psi(const ScanOrder& order, const ConfidenceGrid& confidence, int i, int j) {
  const Cell a = order.cell(i);
  const Cell b = order.cell(j);
  return delta(a, b) * adjacency_weight(confidence.at(a), confidence.at(b));
}

void check_order(const ScanOrder& order, const ConfidenceGrid& confidence, int n) {
  require(n >= 1, "frame count must be >= 1");
  if (n > order.frame_count())
    fail(ErrorKind::invalid_argument,
         "frame " + std::to_string(order.frame_count() + 1) + " is not mapped by the scan order");
  require(order.grid() == confidence.grid(), "scan order and confidence grids differ");
}

}  // namespace

std::vector<double> build_psi(const ScanOrder& order, const ConfidenceGrid& confidence, int n) {
  check_order(order, confidence, n);
  std::vector<double> psi(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) psi[static_cast<std::size_t>(i) * n + j] = pair_psi(order, confidence, i, j);
  return psi;
}

double sp_quadratic_dense(const DifferenceMatrix& z, std::span<const double> psi,
                          std::span<const double> d) {
  require(static_cast<int>(psi.size()) == z.rows(), "psi length mismatch");
  const auto zd = z.apply(d);
  double sum = 0.0;
  for (std::size_t k = 0; k < zd.size(); ++k) sum += psi[k] * (zd[k] * zd[k]);
  return sum;
}

SpStructure build_sp_structure(const ScanOrder& order, const ConfidenceGrid& confidence, int n) {
  check_order(order, confidence, n);
  SpStructure sp;
  sp.frames = n;
  for (int i = 0; i < n; ++i) {
    const Cell a = order.cell(i);
    // Only 8-neighbours can carry weight; visit them in increasing frame order.
    std::vector<int> neighbours;
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        auto j = order.frame_at({a.row + dr, a.col + dc});
        if (j && *j < n) neighbours.push_back(*j);
      }
    std::sort(neighbours.begin(), neighbours.end());
    for (int j : neighbours) {
      const double psi = pair_psi(order, confidence, i, j);
      if (psi > 0.0) sp.rows.push_back({i, j, psi});
    }
  }
  return sp;
}

double sp_quadratic(const SpStructure& sp, std::span<const double> d) {
  require(static_cast<int>(d.size()) == sp.frames, "distortion vector length mismatch");
  double sum = 0.0;
  for (const auto& row : sp.rows) {
    const double diff = d[row.i] - d[row.j];
    sum += row.psi * (diff * diff);
  }
  return sum;
}

double AllocationProblem::floor_bits() const {
  return std::max(1e-6 * budget / std::max(1, variable_count), 1.0);
}

void AllocationProblem::validate() const {
  require(variable_count >= 1, "allocation problem needs at least one variable");
  require(budget > 0.0, "budget must be > 0");
  require(lambda >= 0.0, "lambda must be >= 0");
  require(grid_cells >= 1, "grid cell count must be >= 1");
  require(pinned.empty() || static_cast<int>(pinned.size()) == variable_count,
          "pinned vector length mismatch");
  for (const auto& t : terms) {
    require(t.variable >= 0 && t.variable < variable_count, "term variable out of range");
    require(t.weight >= 0.0, "term weights must be >= 0");
    require(t.alpha > 0.0, "model alpha must be > 0");
    if (!(t.beta < 0.0))
      fail(ErrorKind::invalid_argument,
           "frame " + std::to_string(t.frame + 1) + ": model beta must be < 0 for convexity");
  }
  require(sp.frames == 0 || sp.frames == static_cast<int>(terms.size()),
          "SP structure must index the problem terms");
  for (const auto& r : sp.rows) {
    require(r.i >= 0 && r.j >= 0 && r.i < static_cast<int>(terms.size()) &&
                r.j < static_cast<int>(terms.size()),
            "SP row references an unknown term");
    require(r.psi >= 0.0, "psi entries must be >= 0");
  }
}

Tangent tangent(double alpha, double beta, double at) {
  if (!(at > 0.0)) fail(ErrorKind::invalid_argument, "expansion point must be > 0");
  return {alpha * beta * std::pow(at, beta - 1.0), alpha * (1.0 - beta) * std::pow(at, beta)};
}

Linearization linearize(const AllocationProblem& problem, std::span<const double> intermediate) {
  require(static_cast<int>(intermediate.size()) == problem.variable_count,
          "expansion point length mismatch");
  Linearization lin;
  lin.expansion_point.assign(intermediate.begin(), intermediate.end());
  for (const auto& t : problem.terms) {
    const Tangent tan = tangent(t.alpha, t.beta, intermediate[t.variable]);
    lin.intercept.push_back(tan.intercept);
    lin.slope.push_back(tan.slope);
    lin.variable.push_back(t.variable);
  }
  return lin;
}

double step_a_objective(const AllocationProblem& problem, std::span<const double> x) {
  require(static_cast<int>(x.size()) == problem.variable_count, "allocation length mismatch");
  double sum = 0.0;
  for (const auto& t : problem.terms) {
    if (t.weight == 0.0) continue;
    const double v = x[t.variable];
    if (!(v > 0.0)) return std::numeric_limits<double>::infinity();
    sum += t.weight * t.alpha * std::pow(v, t.beta);
  }
  return sum;
}

double step_b_objective(const AllocationProblem& problem, const Linearization& lin,
                        std::span<const double> x, double smoothing) {
  const double smooth = step_a_objective(problem, x);
  if (problem.lambda == 0.0 || problem.sp.rows.empty()) return smooth;
  double q = 0.0;
  for (const auto& r : problem.sp.rows) {
    const double li = lin.intercept[r.i] + lin.slope[r.i] * x[lin.variable[r.i]];
    const double lj = lin.intercept[r.j] + lin.slope[r.j] * x[lin.variable[r.j]];
    q += r.psi * (li - lj) * (li - lj);
  }
  return smooth + problem.lambda * std::sqrt(q + smoothing * smoothing);
}

std::vector<double> project_capped_simplex(std::span<const double> z, double total, double floor,
                                           std::span<const double> metric) {
  const std::size_t m = z.size();
  require(m >= 1, "projection of an empty vector");
  require(metric.empty() || metric.size() == m, "metric length mismatch");
  require(total >= floor * static_cast<double>(m), "projection target below the floor");
  auto D = [&](std::size_t v) { return metric.empty() ? 1.0 : metric[v]; };

  // y_v = max(floor, z_v - tau / D_v); coordinate v leaves the floor for tau < D_v (z_v - floor).
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> breakpoint(m);
  for (std::size_t v = 0; v < m; ++v) breakpoint[v] = D(v) * (z[v] - floor);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return breakpoint[a] > breakpoint[b]; });

  double sum_z = 0.0, sum_inv = 0.0;
  double tau = 0.0;
  std::size_t active = 0;
  for (std::size_t k = 1; k <= m; ++k) {
    const std::size_t v = order[k - 1];
    sum_z += z[v];
    sum_inv += 1.0 / D(v);
    const double candidate =
        (sum_z + static_cast<double>(m - k) * floor - total) / sum_inv;
    const double upper = breakpoint[order[k - 1]];
    const double lower = (k < m) ? breakpoint[order[k]] : -std::numeric_limits<double>::infinity();
    if (candidate <= upper && candidate >= lower) {
      tau = candidate;
      active = k;
      break;
    }
  }
  if (active == 0) {
    // Only reachable when total == m * floor up to rounding.
    return std::vector<double>(m, floor);
  }
  std::vector<double> y(m);
  for (std::size_t v = 0; v < m; ++v) y[v] = std::max(floor, z[v] - tau / D(v));
  return y;
}

namespace {

struct Coef {
  double log_c;  // ln(-w alpha beta)
  double e;      // beta - 1
};

double log_marginal(const std::vector<Coef>& cs, double u) {
  double mx = -std::numeric_limits<double>::infinity();
  for (const auto& c : cs) mx = std::max(mx, c.log_c + c.e * u);
  double s = 0.0;
  for (const auto& c : cs) s += std::exp(c.log_c + c.e * u - mx);
  return mx + std::log(s);
}

double log_marginal_slope(const std::vector<Coef>& cs, double u) {
  const double base = log_marginal(cs, u);
  double s = 0.0;
  for (const auto& c : cs) s += c.e * std::exp(c.log_c + c.e * u - base);
  return s;
}

/// Solve h(x) = mu for x > floor where ln h is decreasing in ln x.
double solve_marginal(const std::vector<Coef>& cs, double log_mu, double log_floor) {
  if (cs.size() == 1) return std::exp((log_mu - cs[0].log_c) / cs[0].e);
  double lo = log_floor;
  double hi = log_floor + 1.0;
  while (log_marginal(cs, hi) > log_mu) hi += 2.0 * (hi - lo);
  double u = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = log_marginal(cs, u) - log_mu;
    if (f > 0) lo = u; else hi = u;
    double next = u - f / log_marginal_slope(cs, u);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - u) <= 1e-15 * std::max(1.0, std::abs(u))) {
      u = next;
      break;
    }
    u = next;
  }
  return std::exp(u);
}

struct FreeSet {
  std::vector<int> free;
  double free_budget = 0.0;
  std::vector<double> x;  // pinned entries filled in
};

FreeSet split_pinned(const AllocationProblem& p) {
  FreeSet fs;
  fs.x.assign(p.variable_count, 0.0);
  double pinned_total = 0.0;
  for (int v = 0; v < p.variable_count; ++v) {
    if (!p.pinned.empty() && p.pinned[v]) {
      require(*p.pinned[v] > 0.0, "pinned allocations must be > 0");
      fs.x[v] = *p.pinned[v];
      pinned_total += *p.pinned[v];
    } else {
      fs.free.push_back(v);
    }
  }
  fs.free_budget = p.budget - pinned_total;
  const double floor = p.floor_bits();
  if (!fs.free.empty() && !(fs.free_budget > floor * static_cast<double>(fs.free.size())))
    fail(ErrorKind::infeasible,
         "budget " + std::to_string(p.budget) + " cannot give " +
             std::to_string(fs.free.size()) + " variables the floor of " +
             std::to_string(floor) + " bits");
  return fs;
}

/// Spread rounding residue so that the free coordinates sum exactly to `target`.
void fix_sum(std::vector<double>& x, const std::vector<int>& free, double target, double floor) {
  if (free.empty()) return;
  double sum = 0.0;
  for (int v : free) sum += x[v];
  const double residue = target - sum;
  int largest = free.front();
  for (int v : free)
    if (x[v] > x[largest]) largest = v;
  x[largest] = std::max(floor, x[largest] + residue);
}

std::vector<std::vector<Coef>> marginal_coefs(const AllocationProblem& p) {
  std::vector<std::vector<Coef>> coefs(p.variable_count);
  for (const auto& t : p.terms) {
    if (t.weight == 0.0) continue;
    coefs[t.variable].push_back({std::log(-t.weight * t.alpha * t.beta), t.beta - 1.0});
  }
  return coefs;
}

double kkt_spread(const AllocationProblem& p, const std::vector<double>& x,
                  const std::vector<int>& free, double floor) {
  const auto coefs = marginal_coefs(p);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  double sum = 0.0;
  int count = 0;
  for (int v : free) {
    if (coefs[v].empty() || x[v] <= floor * (1.0 + 1e-9)) continue;
    const double m = std::exp(log_marginal(coefs[v], std::log(x[v])));
    lo = std::min(lo, m);
    hi = std::max(hi, m);
    sum += m;
    ++count;
  }
  if (count < 2) return 0.0;
  return (hi - lo) / (sum / count);
}

}  // namespace

AllocationSolution solve_step_a(const AllocationProblem& problem) {
  problem.validate();
  const double floor = problem.floor_bits();
  FreeSet fs = split_pinned(problem);
  std::vector<double>& x = fs.x;
  AllocationSolution sol;
  sol.converged = true;

  const auto coefs = marginal_coefs(problem);
  std::vector<int> active;
  int idle = 0;
  for (int v : fs.free) {
    if (coefs[v].empty()) {
      x[v] = floor;
      ++idle;
    } else {
      active.push_back(v);
    }
  }

  if (active.empty()) {
    // Objective does not depend on the free variables.
    for (int v : fs.free) x[v] = fs.free_budget / static_cast<double>(fs.free.size());
  } else {
    const double target = fs.free_budget - idle * floor;
    const double log_floor = std::log(floor);
    double log_mu_lo = std::numeric_limits<double>::infinity();
    double log_mu_hi = -std::numeric_limits<double>::infinity();
    for (int v : active) {
      log_mu_lo = std::min(log_mu_lo, log_marginal(coefs[v], std::log(target)));
      log_mu_hi = std::max(log_mu_hi, log_marginal(coefs[v], log_floor));
    }
    auto allocate = [&](double log_mu) {
      double sum = 0.0;
      for (int v : active) {
        x[v] = (log_marginal(coefs[v], log_floor) <= log_mu)
                   ? floor
                   : std::max(floor, solve_marginal(coefs[v], log_mu, log_floor));
        sum += x[v];
      }
      return sum;
    };
    // Total allocation is decreasing in the multiplier.
    int it = 0;
    for (; it < 400; ++it) {
      const double mid = 0.5 * (log_mu_lo + log_mu_hi);
      if (!(mid > log_mu_lo && mid < log_mu_hi)) break;
      if (allocate(mid) > target) log_mu_lo = mid; else log_mu_hi = mid;
    }
    allocate(0.5 * (log_mu_lo + log_mu_hi));
    sol.iterations = it;
    fix_sum(x, active, target, floor);
  }

  sol.kkt_residual = kkt_spread(problem, x, fs.free, floor);
  sol.objective = step_a_objective(problem, x);
  sol.bits = std::move(x);
  return sol;
}

namespace {

/// Step (b) objective in scaled coordinates y = x / scale.
class ScaledComposite {
 public:
  ScaledComposite(const AllocationProblem& p, const Linearization& lin, double scale)
      : p_(p), lin_(lin), scale_(scale) {
    double mag = 0.0;
    for (std::size_t t = 0; t < lin.intercept.size(); ++t)
      mag += std::abs(lin.intercept[t] + lin.slope[t] * lin.expansion_point[lin.variable[t]]);
    mag /= std::max<std::size_t>(1, lin.intercept.size());
    smoothing_ = 1e-12 * std::max(mag, std::numeric_limits<double>::min());
  }

  double smoothing() const { return smoothing_; }

  double linear(int t, const std::vector<double>& y) const {
    return lin_.intercept[t] + lin_.slope[t] * scale_ * y[lin_.variable[t]];
  }

  double penalty_root(const std::vector<double>& y) const {
    double q = 0.0;
    for (const auto& r : p_.sp.rows) {
      const double diff = linear(r.i, y) - linear(r.j, y);
      q += r.psi * diff * diff;
    }
    return std::sqrt(q + smoothing_ * smoothing_);
  }

  double value(const std::vector<double>& y) const {
    double sum = 0.0;
    for (const auto& t : p_.terms) {
      if (t.weight == 0.0) continue;
      if (!(y[t.variable] > 0.0)) return std::numeric_limits<double>::infinity();
      sum += t.weight * t.alpha * std::pow(scale_ * y[t.variable], t.beta);
    }
    return sum + p_.lambda * penalty_root(y);
  }

  void gradient_and_metric(const std::vector<double>& y, std::vector<double>& g,
                           std::vector<double>& d) const {
    const std::size_t m = y.size();
    g.assign(m, 0.0);
    d.assign(m, 0.0);
    for (const auto& t : p_.terms) {
      if (t.weight == 0.0) continue;
      const double yv = y[t.variable];
      const double val = t.weight * t.alpha * std::pow(scale_ * yv, t.beta);
      g[t.variable] += t.beta * val / yv;
      d[t.variable] += t.beta * (t.beta - 1.0) * val / (yv * yv);
    }
    const double root = penalty_root(y);
    const double k = p_.lambda / root;
    for (const auto& r : p_.sp.rows) {
      const double diff = linear(r.i, y) - linear(r.j, y);
      const int vi = lin_.variable[r.i];
      const int vj = lin_.variable[r.j];
      const double bi = lin_.slope[r.i] * scale_;
      const double bj = lin_.slope[r.j] * scale_;
      g[vi] += k * r.psi * diff * bi;
      g[vj] -= k * r.psi * diff * bj;
      if (vi == vj) {
        d[vi] += k * r.psi * (bi - bj) * (bi - bj);
      } else {
        d[vi] += k * r.psi * bi * bi;
        d[vj] += k * r.psi * bj * bj;
      }
    }
  }

  /// Exact Hessian restricted to `vars` (indices into y).
  Eigen::MatrixXd hessian(const std::vector<double>& y, const std::vector<int>& vars) const {
    std::vector<int> pos(y.size(), -1);
    for (std::size_t i = 0; i < vars.size(); ++i) pos[vars[i]] = static_cast<int>(i);
    const auto n = static_cast<Eigen::Index>(vars.size());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    for (const auto& t : p_.terms) {
      const int k = pos[t.variable];
      if (t.weight == 0.0 || k < 0) continue;
      const double yv = y[t.variable];
      h(k, k) += t.beta * (t.beta - 1.0) * t.weight * t.alpha * std::pow(scale_ * yv, t.beta) /
                 (yv * yv);
    }
    const double root = penalty_root(y);
    Eigen::VectorXd half_grad = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(n, n);
    for (const auto& r : p_.sp.rows) {
      const double diff = linear(r.i, y) - linear(r.j, y);
      Eigen::VectorXd dd = Eigen::VectorXd::Zero(n);
      if (const int a = pos[lin_.variable[r.i]]; a >= 0) dd(a) += lin_.slope[r.i] * scale_;
      if (const int b = pos[lin_.variable[r.j]]; b >= 0) dd(b) -= lin_.slope[r.j] * scale_;
      outer += r.psi * dd * dd.transpose();
      half_grad += r.psi * diff * dd;
    }
    h += p_.lambda * (outer / root - half_grad * half_grad.transpose() / (root * root * root));
    return h;
  }

 private:
  const AllocationProblem& p_;
  const Linearization& lin_;
  double scale_;
  double smoothing_ = 0.0;
};

}  // namespace

AllocationSolution solve_step_b(const AllocationProblem& problem, const Linearization& lin,
                                const SolverOptions& options) {
  problem.validate();
  require(static_cast<int>(lin.expansion_point.size()) == problem.variable_count &&
              lin.intercept.size() == problem.terms.size(),
          "linearization does not match the problem");
  const double floor = problem.floor_bits();
  FreeSet fs = split_pinned(problem);

  AllocationSolution sol;
  sol.bits = lin.expansion_point;
  if (problem.lambda == 0.0 || problem.sp.rows.empty() || fs.free.empty()) {
    sol.objective = step_b_objective(problem, lin, sol.bits);
    sol.converged = true;
    return sol;
  }

  const double scale = fs.free_budget / static_cast<double>(fs.free.size());
  const double total = static_cast<double>(fs.free.size());
  const double yfloor = floor / scale;
  const ScaledComposite f(problem, lin, scale);

  std::vector<double> y(problem.variable_count);
  for (int v = 0; v < problem.variable_count; ++v) y[v] = lin.expansion_point[v] / scale;
  {
    // Start from the projection of the expansion point so the iterate is feasible.
    std::vector<double> z;
    for (int v : fs.free) z.push_back(y[v]);
    auto p = project_capped_simplex(z, total, yfloor);
    for (std::size_t i = 0; i < fs.free.size(); ++i) y[fs.free[i]] = p[i];
  }

  double fy = f.value(y);
  std::vector<double> g, dm, z(fs.free.size()), metric(fs.free.size()), trial = y;
  double step = 1.0;
  auto project = [&](double t) {
    for (std::size_t i = 0; i < fs.free.size(); ++i) {
      const int v = fs.free[i];
      z[i] = y[v] - t * g[v] / metric[i];
    }
    auto p = project_capped_simplex(z, total, yfloor, metric);
    trial = y;
    for (std::size_t i = 0; i < fs.free.size(); ++i) trial[fs.free[i]] = p[i];
  };

  if (options.record_trace) sol.objective_trace.push_back(fy);
  for (sol.iterations = 0; sol.iterations < options.max_iterations; ++sol.iterations) {
    f.gradient_and_metric(y, g, dm);
    double dmax = 0.0;
    for (std::size_t i = 0; i < fs.free.size(); ++i) dmax = std::max(dmax, dm[fs.free[i]]);
    for (std::size_t i = 0; i < fs.free.size(); ++i)
      metric[i] = std::max(dm[fs.free[i]], 1e-12 * std::max(dmax, 1e-300));

    // Stationarity: scaled projected-gradient step at unit length.
    project(1.0);
    double pg = 0.0;
    for (int v : fs.free) pg = std::max(pg, std::abs(trial[v] - y[v]));
    sol.kkt_residual = pg;
    if (pg <= options.projected_gradient_tol) {
      sol.converged = true;
      break;
    }

    step = std::min(step * 2.0, 1e6);
    double f_new = 0.0;
    bool accepted = false;
    while (step > 1e-20) {
      project(step);
      double lin_term = 0.0, quad = 0.0;
      for (std::size_t i = 0; i < fs.free.size(); ++i) {
        const int v = fs.free[i];
        const double dv = trial[v] - y[v];
        lin_term += g[v] * dv;
        quad += metric[i] * dv * dv;
      }
      f_new = f.value(trial);
      if (f_new <= fy + lin_term + quad / (2.0 * step) && f_new <= fy) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No descent possible at machine precision.
      sol.converged = true;
      break;
    }
    const double change = std::abs(fy - f_new) / std::max(std::abs(fy), 1e-300);
    y = trial;
    fy = f_new;
    if (options.record_trace) sol.objective_trace.push_back(fy);
    if (change <= options.relative_objective_tol) {
      sol.converged = true;
      ++sol.iterations;
      break;
    }
  }

  // Newton refinement on the face of coordinates above the floor. The diagonal
  // metric above converges slowly once the penalty couples the variables.
  for (int it = 0; it < 50; ++it) {
    std::vector<int> face;
    for (int v : fs.free)
      if (y[v] > yfloor * (1.0 + 1e-9)) face.push_back(v);
    // On the kink SP = 0 the objective is not differentiable.
    if (face.size() < 2 || f.penalty_root(y) <= 1e6 * f.smoothing()) break;
    const auto n = static_cast<Eigen::Index>(face.size());
    f.gradient_and_metric(y, g, dm);
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + 1, n + 1);
    kkt.topLeftCorner(n, n) = f.hessian(y, face);
    kkt.block(0, n, n, 1).setOnes();
    kkt.block(n, 0, 1, n).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
    for (Eigen::Index i = 0; i < n; ++i) rhs(i) = -g[face[i]];
    Eigen::VectorXd sol_dir = kkt.fullPivLu().solve(rhs).head(n);
    if (!sol_dir.allFinite()) break;
    sol_dir.array() -= sol_dir.mean();
    double dnorm = 0.0, t = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = sol_dir(i);
      dnorm = std::max(dnorm, std::abs(d));
      if (d < 0.0) t = std::min(t, 0.99 * (y[face[i]] - yfloor) / -d);
    }
    if (dnorm <= 1e-14) break;
    bool moved = false;
    for (int k = 0; k < 40; ++k) {
      trial = y;
      for (Eigen::Index i = 0; i < n; ++i) trial[face[i]] += t * sol_dir(i);
      const double f_new = f.value(trial);
      if (f_new <= fy + 4.0 * std::numeric_limits<double>::epsilon() * std::abs(fy)) {
        y = trial;
        fy = std::min(fy, f_new);
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;
    if (t * dnorm <= 1e-14) break;
  }

  std::vector<double> x = fs.x;
  for (int v : fs.free) x[v] = y[v] * scale;
  fix_sum(x, fs.free, fs.free_budget, floor);
  sol.objective = step_b_objective(problem, lin, x, f.smoothing());
  sol.bits = std::move(x);
  return sol;
}

TwoStepResult solve_two_step(const AllocationProblem& problem, const SolverOptions& options) {
  TwoStepResult r;
  r.step_a = solve_step_a(problem);
  r.linearization = linearize(problem, r.step_a.bits);
  r.step_b = solve_step_b(problem, r.linearization, options);
  return r;
}

OracleResult brute_force_oracle(const std::function<double(std::span<const double>)>& objective,
                                double budget, int n, int grid_steps) {
  if (n < 1 || n > 4)
    fail(ErrorKind::invalid_argument, "brute_force_oracle supports 1 <= n <= 4");
  if (grid_steps < 1 || grid_steps > 400)
    fail(ErrorKind::invalid_argument, "brute_force_oracle supports 1 <= grid_steps <= 400");
  require(budget > 0.0, "budget must be > 0");

  OracleResult best;
  best.objective = std::numeric_limits<double>::infinity();
  std::vector<int> k(n, 0);
  std::vector<double> r(n, 0.0);
  const double cell = budget / grid_steps;

  auto visit = [&](auto&& self, int pos, int remaining) -> void {
    if (pos == n - 1) {
      k[pos] = remaining;
      for (int i = 0; i < n; ++i) r[i] = cell * k[i];
      const double value = objective(r);
      if (value < best.objective) {
        best.objective = value;
        best.allocation = r;
      }
      return;
    }
    for (int take = 0; take <= remaining; ++take) {
      k[pos] = take;
      self(self, pos + 1, remaining - take);
    }
  };
  visit(visit, 0, grid_steps);
  if (best.allocation.empty())
    fail(ErrorKind::numerical, "brute_force_oracle: objective is infinite on the whole grid");
  return best;
}

double predict_T(const AllocationProblem& problem, std::span<const double> allocation) {
  require(static_cast<int>(allocation.size()) == problem.variable_count,
          "allocation length mismatch");
  double total = 0.0;
  for (double x : allocation) {
    require(x > 0.0, "allocation entries must be > 0");
    total += x;
  }
  if (total > problem.budget * (1.0 + 1e-9))
    fail(ErrorKind::infeasible, "allocation exceeds the budget");
  std::vector<double> d(problem.terms.size());
  double weighted = 0.0;
  for (std::size_t t = 0; t < problem.terms.size(); ++t) {
    const auto& term = problem.terms[t];
    d[t] = term.alpha * std::pow(allocation[term.variable], term.beta);
    weighted += term.weight * d[t];
  }
  double sp = 0.0;
  if (!problem.sp.rows.empty()) sp = sp_quadratic(problem.sp, d);
  return (weighted + problem.lambda * std::sqrt(sp)) / problem.grid_cells;
}

}  // namespace lfbit
