#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lfbit/pipeline.hpp"

namespace lfbit {

using Json = nlohmann::ordered_json;

Json to_json(const MockScene& scene);
MockScene mock_scene_from_json(const Json& j);

/// Starts from the profile preset and applies any fields present in `j`.
MockSceneSpec mock_spec_from_json(const Json& j, ProfileKind profile);

Json to_json(const HyperbolicModel& m);
Json to_json(const std::vector<HyperbolicModel>& models);
std::vector<HyperbolicModel> models_from_json(const Json& j);

Json to_json(const PassOneStats& stats, bool include_timing = true);
PassOneStats pass_one_from_json(const Json& j);

Json to_json(const QualityReport& q);
Json to_json(const QpSchedule& s);

/// Wall-clock fields are left out when `include_timing` is false so that two
/// runs of the same configuration serialize identically.
Json to_json(const TwoPassReport& r, bool include_timing = true);
Json to_json(const Comparison& c);

Json to_json(const AllocationProblem& p);
AllocationProblem problem_from_json(const Json& j);
Json to_json(const TwoStepResult& r, bool include_trace = false);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// One JSON document describing a batch of two-pass runs.
struct PipelineConfig {
  EncoderProfile profile;
  std::vector<double> budgets;
  std::vector<double> lambdas;
  MseMode mse_mode = MseMode::combined;
  AllocationMode allocation = AllocationMode::two_step;
  AngularGrid grid{15, 15};
  /// "raster", "snake", "spiral", or a path to a custom order file.
  std::string scan_order = "snake";
  /// "uniform", "plateau", or a path to a confidence CSV.
  std::string confidence = "uniform";
  std::string backend = "mock";
  /// Mock backend: either a full scene or a generator spec.
  std::optional<MockScene> scene;
  MockSceneSpec scene_spec;
  /// External backend adapter config path.
  std::filesystem::path adapter;
  int parallelism = 1;
  std::string sequence_id = "sequence";
};

/// Fields: preset ("ai" | "ra" | "ld"), budgets, lambdas, mse_mode,
/// allocation, grid [K, L], scan_order, confidence, backend ("mock" |
/// "external"), scene, scene_spec, adapter, parallel, sequence_id. Presets fill
/// profile constants, budgets and lambdas. Relative paths are resolved against
/// `base_dir`.
PipelineConfig pipeline_config_from_json(const Json& j, const std::filesystem::path& base_dir);

std::unique_ptr<EncoderBackend> make_backend(const PipelineConfig& config);
LightFieldLayout make_layout(const PipelineConfig& config, int frame_count);

/// Resolves a scan-order name or file and a confidence name or file.
ScanOrder resolve_scan_order(const std::string& spec, AngularGrid grid, int frame_count);
ConfidenceGrid resolve_confidence(const std::string& spec, AngularGrid grid);

}  // namespace lfbit
