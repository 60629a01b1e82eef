#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lfbit/core_model.hpp"
#include "lfbit/optimizer.hpp"
#include "lfbit/rd_model.hpp"

namespace lfbit {

enum class ProfileKind { all_intra, random_access, low_delay };

/// Accepts "ai", "ra", "ld" and the long names.
ProfileKind parse_profile_kind(std::string_view name);
std::string to_string(ProfileKind kind);
std::string short_name(ProfileKind kind);

struct EncoderProfile {
  ProfileKind kind = ProfileKind::all_intra;
  /// 1 for all-intra; the (virtual) GOP length otherwise.
  int gop_size = 1;
  /// Offset added to the base QP by position within the GOP. Empty for
  /// all-intra.
  std::vector<int> qp_offsets;
  int sweep_min_qp = kSweepMinQp;
  int sweep_max_qp = kSweepMaxQp;

  bool uses_gops() const { return kind != ProfileKind::all_intra; }
  int offset_at(int position) const;
  std::vector<int> sweep_qps() const;
};

EncoderProfile profile_defaults(ProfileKind kind);

/// Bit budgets (in bits, 1 Mb = 1e6 bits) for the 192-frame test sequences.
std::vector<double> profile_budgets(ProfileKind kind);

/// Smoothness weights used in the evaluation runs.
std::vector<double> lambda_presets();

struct QpSchedule {
  std::vector<int> frame_qps;
  /// Chosen sweep QP per variable (per frame, or the GOP base QP).
  std::vector<int> variable_qps;
  std::vector<double> target_bits;
  /// Observed first-pass bits of each variable at its chosen QP.
  std::vector<double> variable_bits;
  /// Frames whose base + offset fell outside [0,51].
  std::vector<bool> clamped;
  /// First-pass distortion of each frame at its chosen sweep QP.
  std::vector<double> expected_mse;
  double expected_bits = 0.0;
  std::optional<double> expected_T;

  int sweep_index(int variable, int sweep_min_qp) const {
    return variable_qps.at(variable) - sweep_min_qp;
  }
};

/// Per frame, the sweep QP whose observed bits are closest to the target
/// (ties go to the lower QP).
QpSchedule plan_all_intra(const RdSampleSet& samples, const std::vector<double>& allocation);

/// Per GOP, the base QP whose observed GOP total is closest to the target;
/// frame QP = base + offset, clamped to [0,51].
QpSchedule plan_gop(const RdSampleSet& samples, const GopGrouping& grouping,
                    const std::vector<double>& allocation, const EncoderProfile& profile);

QpSchedule plan_schedule(const EncoderProfile& profile, const RdSampleSet& samples,
                         const std::vector<double>& allocation);

/// Sum over variables of half the largest bit step between the chosen QP and
/// its sweep neighbours, plus the shortfall of any target outside the swept
/// range. |expected_bits - sum(targets)| never exceeds this.
double quantization_bound(const EncoderProfile& profile, const RdSampleSet& samples,
                          const QpSchedule& schedule);

/// Fills expected_T from the first-pass distortions at the chosen QPs.
void fill_expected_T(QpSchedule& schedule, const ScanOrder& order,
                     const ConfidenceGrid& confidence, double lambda);

/// Frames whose model slope was not negative are left out of the objective
/// and the smoothness rows. A variable with no usable frame is pinned to its
/// share of the budget, budget * |G| / n.
AllocationProblem assemble_problem(const EncoderProfile& profile,
                                   const std::vector<HyperbolicModel>& models,
                                   const ConfidenceGrid& confidence, const ScanOrder& order,
                                   double lambda, double budget);

int variable_count(const EncoderProfile& profile, int frame_count);

/// Equal bits per variable: the comparison baseline.
std::vector<double> uniform_allocation(const EncoderProfile& profile, int frame_count,
                                       double budget);

}  // namespace lfbit
