#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "lfbit/allocator.hpp"
#include "lfbit/core_model.hpp"
#include "lfbit/rd_model.hpp"

namespace lfbit {

struct EncodeRequest {
  std::string sequence_id;
  /// One QP per frame, in coding order.
  std::vector<int> frame_qps;
  EncoderProfile profile;
};

struct EncodeResult {
  /// Sorted by frame; `qp` is the QP the frame was coded with.
  std::vector<FrameStat> frames;
  double total_bits = 0.0;
  double wall_time = 0.0;
};

class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;

  /// Must be safe to call concurrently for different requests.
  virtual EncodeResult encode(const EncodeRequest& request) = 0;

  /// Stable description of the backend and its input; part of the first-pass
  /// cache key.
  virtual std::string identity() const = 0;

  virtual int frame_count() const = 0;
};

enum class Coupling { frame_level, gop_level };

std::string to_string(Coupling c);
Coupling parse_coupling(std::string_view name);

struct MockFrame {
  double alpha = 1.0;
  double beta = -1.0;
  /// Bits at the reference QP.
  double r_ref = 1.0;
};

/// Synthetic encoder: bits(qp) = r_ref * 2^((q_ref - qp) / 6) and
/// mse = alpha * x^beta * exp(sigma * z), where x is the frame's bits or the
/// total bits of its GOP.
struct MockScene {
  std::vector<MockFrame> frames;
  int q_ref = 30;
  double sigma = 0.0;
  Coupling coupling = Coupling::frame_level;
  /// Coupling group length; ignored for frame_level.
  int gop_size = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MockSceneSpec {
  int frame_count = 192;
  double r_ref_min = 50e3;
  double r_ref_max = 130e3;
  double beta_min = -1.2;
  double beta_max = -0.8;
  /// Distortion at the reference QP (frame level) or at the GOP's reference
  /// total (GOP level).
  double mse_ref_min = 30.0;
  double mse_ref_max = 60.0;
  int q_ref = 30;
  double sigma = 0.0;
  Coupling coupling = Coupling::frame_level;
  int gop_size = 1;
  std::uint64_t seed = 1;
};

/// Defaults sized so the profile's budget presets fall inside the QP sweep.
MockSceneSpec mock_spec_preset(ProfileKind kind);

MockScene generate_mock_scene(const MockSceneSpec& spec);

/// Scene whose parameters follow the frame's distance from the grid centre:
/// r_ref falls from r_ref_max to r_ref_min, mse_ref rises from mse_ref_min to
/// mse_ref_max and beta moves from beta_min to beta_max. Each parameter then
/// gets an independent relative jitter drawn from [-jitter, jitter].
MockScene generate_angular_mock_scene(const MockSceneSpec& spec, const ScanOrder& order,
                                      double jitter);

/// Bits of a frame coded at `qp`.
double mock_bits(const MockScene& scene, int frame, int qp);

/// Confidence that is 1 on a central disc and falls off linearly towards the
/// corners, like the microlens vignetting of a plenoptic capture.
ConfidenceGrid central_plateau_confidence(AngularGrid grid, double plateau_radius = 0.35);

class MockBackend final : public EncoderBackend {
 public:
  explicit MockBackend(MockScene scene);

  EncodeResult encode(const EncodeRequest& request) override;
  std::string identity() const override;
  int frame_count() const override { return static_cast<int>(scene_.frames.size()); }
  const MockScene& scene() const { return scene_; }

 private:
  MockScene scene_;
  std::string identity_;
};

/// Command template with {input}, {qpfile}, {output} and {statsfile}
/// placeholders, run through /bin/sh.
struct ExternalAdapterConfig {
  std::string command;
  std::filesystem::path input;
  std::filesystem::path work_dir;
  int frame_count = 0;
  double timeout_seconds = 3600.0;
  int max_parallel = 4;
};

/// Reads the JSON adapter config. LFBIT_ENCODER_TIMEOUT (seconds) overrides
/// the timeout.
ExternalAdapterConfig load_adapter_config(const std::filesystem::path& path);

/// `frame_index,qp` with a header line, frames one-based.
void write_qp_file(const std::filesystem::path& path, const std::vector<int>& frame_qps);

/// Parses a stats file and checks that frames 1..n each appear exactly once.
EncodeResult parse_encode_stats(const std::filesystem::path& path, int frame_count);

class ExternalBackend final : public EncoderBackend {
 public:
  explicit ExternalBackend(ExternalAdapterConfig config);

  EncodeResult encode(const EncodeRequest& request) override;
  std::string identity() const override;
  int frame_count() const override { return config_.frame_count; }

 private:
  ExternalAdapterConfig config_;
  std::mutex mutex_;
  std::condition_variable slot_free_;
  int running_ = 0;
  std::uint64_t next_job_ = 0;
};

}  // namespace lfbit
