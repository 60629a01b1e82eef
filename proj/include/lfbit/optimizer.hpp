#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "lfbit/core_model.hpp"

namespace lfbit {

/// Dense n^2 x n difference matrix. Row k (zero-based) addresses the ordered
/// frame pair (i, j) = (k / n, k % n): +1 in column i, -1 in column j, and an
/// all-zero row when i == j.
class DifferenceMatrix {
 public:
  explicit DifferenceMatrix(int n);

  int frames() const { return n_; }
  int rows() const { return n_ * n_; }
  int at(int row, int col) const { return data_[static_cast<std::size_t>(row) * n_ + col]; }

  /// (Z d) for a distortion vector d of length n.
  std::vector<double> apply(std::span<const double> d) const;

 private:
  int n_;
  std::vector<int> data_;
};

inline DifferenceMatrix build_difference_matrix(int n) { return DifferenceMatrix(n); }

/// Diagonal of the n^2 x n^2 adjacency weight matrix in the same row order as
/// DifferenceMatrix: delta(cell_i, cell_j) * phi(min(w_i, w_j)).
std::vector<double> build_psi(const ScanOrder& order, const ConfidenceGrid& confidence, int n);

/// (Zd)^T Psi (Zd) using the dense reference matrices.
double sp_quadratic_dense(const DifferenceMatrix& z, std::span<const double> psi,
                          std::span<const double> d);

/// One kept row of sqrt(Psi) Z: the ordered pair (i, j) with psi > 0.
struct SpRow {
  int i = 0;
  int j = 0;
  double psi = 0.0;
};

/// Sparse form of (Z, Psi): only rows with psi > 0, in dense row order.
struct SpStructure {
  int frames = 0;
  std::vector<SpRow> rows;
};

SpStructure build_sp_structure(const ScanOrder& order, const ConfidenceGrid& confidence, int n);

double sp_quadratic(const SpStructure& sp, std::span<const double> d);

/// A distortion term d = alpha * x^beta attached to allocation variable
/// `variable`, weighted by phi of its view's confidence.
struct FrameTerm {
  int frame = 0;
  int variable = 0;
  double weight = 0.0;
  double alpha = 1.0;
  double beta = -1.0;
};

enum class VariableKind { per_frame, per_gop };

/// minimize sum_t w_t d_t + lambda * sqrt(sum_rows psi (d_i - d_j)^2)
/// subject to sum_v x_v = budget, x_v >= floor.
/// SP rows index into `terms`.
struct AllocationProblem {
  VariableKind variable_kind = VariableKind::per_frame;
  int variable_count = 0;
  std::vector<FrameTerm> terms;
  SpStructure sp;
  /// Variables with a fixed allocation (no usable model); they consume budget
  /// but are not optimized.
  std::vector<std::optional<double>> pinned;
  double lambda = 0.0;
  double budget = 0.0;
  /// K*L, the normalization of predicted T.
  int grid_cells = 1;

  /// max(1e-6 * budget / variable_count, 1) bits.
  double floor_bits() const;
  void validate() const;
};

/// First-order expansion d_t ~ intercept_t + slope_t * x_{variable_t}.
struct Linearization {
  std::vector<double> intercept;
  std::vector<double> slope;
  std::vector<int> variable;
  std::vector<double> expansion_point;
};

struct Tangent {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Tangent of alpha * x^beta at x = at: slope alpha*beta*at^(beta-1),
/// intercept alpha*(1-beta)*at^beta.
Tangent tangent(double alpha, double beta, double at);

Linearization linearize(const AllocationProblem& problem, std::span<const double> intermediate);

struct SolverOptions {
  int max_iterations = 10000;
  double relative_objective_tol = 1e-10;
  double projected_gradient_tol = 1e-8;
  bool record_trace = false;
};

struct AllocationSolution {
  std::vector<double> bits;
  double objective = 0.0;
  bool converged = false;
  int iterations = 0;
  /// Step (a): relative spread of marginal returns over coordinates above the
  /// floor. Step (b): scaled projected-gradient norm at exit.
  double kkt_residual = 0.0;
  std::vector<double> objective_trace;
};

/// sum_t w_t alpha_t x^beta_t.
double step_a_objective(const AllocationProblem& problem, std::span<const double> x);

/// Step (a) objective plus lambda * ||sqrt(Psi) Z (c + B x)||, with the same
/// smoothing as the solver when `smoothing` > 0.
double step_b_objective(const AllocationProblem& problem, const Linearization& lin,
                        std::span<const double> x, double smoothing = 0.0);

/// Minimizes the weighted distortion without the smoothness term. Solved
/// exactly through its KKT conditions: equal marginal return above the floor.
AllocationSolution solve_step_a(const AllocationProblem& problem);

/// Minimizes the composite objective with the linearized smoothness term by
/// diagonally scaled projected gradient with backtracking, started from the
/// expansion point. Returns the expansion point unchanged when lambda == 0 or
/// there are no adjacent pairs.
AllocationSolution solve_step_b(const AllocationProblem& problem, const Linearization& lin,
                                const SolverOptions& options = {});

struct TwoStepResult {
  AllocationSolution step_a;
  Linearization linearization;
  AllocationSolution step_b;
};

TwoStepResult solve_two_step(const AllocationProblem& problem, const SolverOptions& options = {});

/// Projection onto {y : sum y = total, y >= floor} in the metric
/// sum_v metric_v (y_v - z_v)^2. An empty metric means Euclidean.
std::vector<double> project_capped_simplex(std::span<const double> z, double total, double floor,
                                           std::span<const double> metric = {});

struct OracleResult {
  std::vector<double> allocation;
  double objective = 0.0;
};

/// Exhaustive search over {r : r_i = budget * k_i / grid_steps, sum k_i =
/// grid_steps}. Limited to n <= 4 and grid_steps <= 400.
OracleResult brute_force_oracle(const std::function<double(std::span<const double>)>& objective,
                                double budget, int n, int grid_steps);

/// Predicted T using the exact (non-linearized) models:
/// (sum w d + lambda * sqrt(SP)) / (K*L).
double predict_T(const AllocationProblem& problem, std::span<const double> allocation);

}  // namespace lfbit
