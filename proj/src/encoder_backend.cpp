#include "lfbit/encoder_backend.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "lfbit/error.hpp"

namespace lfbit {

std::string to_string(Coupling c) {
  return c == Coupling::frame_level ? "frame_level" : "gop_level";
}

Coupling parse_coupling(std::string_view name) {
  if (name == "frame_level") return Coupling::frame_level;
  if (name == "gop_level") return Coupling::gop_level;
  fail(ErrorKind::invalid_argument, "unknown coupling '" + std::string(name) + "'");
}

void MockScene::validate() const {
  require(!frames.empty(), "mock scene has no frames");
  require(q_ref >= 0 && q_ref <= 51, "mock reference QP outside [0,51]");
  require(sigma >= 0.0, "mock noise sigma must be >= 0");
  require(gop_size >= 1, "mock GOP size must be >= 1");
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& m = frames[f];
    const std::string who = "mock frame " + std::to_string(f + 1);
    require(m.alpha > 0.0, who + ": alpha must be > 0");
    require(m.beta < 0.0, who + ": beta must be < 0");
    require(m.r_ref > 0.0, who + ": r_ref must be > 0");
  }
}

MockSceneSpec mock_spec_preset(ProfileKind kind) {
  MockSceneSpec s;
  switch (kind) {
    case ProfileKind::all_intra:
      break;
    case ProfileKind::random_access:
      s.r_ref_min = 12.5e3;
      s.r_ref_max = 32.5e3;
      s.coupling = Coupling::gop_level;
      s.gop_size = 8;
      break;
    case ProfileKind::low_delay:
      s.r_ref_min = 6.25e3;
      s.r_ref_max = 16.25e3;
      s.coupling = Coupling::gop_level;
      s.gop_size = 12;
      break;
  }
  return s;
}

namespace {

void check_spec(const MockSceneSpec& spec) {
  require(spec.frame_count >= 1, "mock scene needs at least one frame");
  require(spec.r_ref_min > 0.0 && spec.r_ref_min <= spec.r_ref_max, "invalid r_ref range");
  require(spec.beta_min <= spec.beta_max && spec.beta_max < 0.0,
          "invalid beta range: need beta_min <= beta_max < 0");
  require(spec.mse_ref_min > 0.0 && spec.mse_ref_min <= spec.mse_ref_max,
          "invalid mse_ref range");
  require(spec.sigma >= 0.0, "sigma must be >= 0");
  require(spec.gop_size >= 1, "GOP size must be >= 1");
}

/// alpha from the distortion at the reference operating point.
MockScene finish_scene(const MockSceneSpec& spec, std::vector<MockFrame> frames,
                       const std::vector<double>& mse_ref) {
  MockScene scene;
  scene.q_ref = spec.q_ref;
  scene.sigma = spec.sigma;
  scene.coupling = spec.coupling;
  scene.gop_size = spec.coupling == Coupling::gop_level ? spec.gop_size : 1;
  scene.seed = spec.seed;
  scene.frames = std::move(frames);
  const int n = static_cast<int>(scene.frames.size());
  for (int f = 0; f < n; ++f) {
    double x = scene.frames[f].r_ref;
    if (scene.coupling == Coupling::gop_level) {
      const int begin = f / scene.gop_size * scene.gop_size;
      const int end = std::min(n, begin + scene.gop_size);
      x = 0.0;
      for (int s = begin; s < end; ++s) x += scene.frames[s].r_ref;
    }
    scene.frames[f].alpha = mse_ref[f] * std::pow(x, -scene.frames[f].beta);
  }
  scene.validate();
  return scene;
}

}  // namespace

MockScene generate_mock_scene(const MockSceneSpec& spec) {
  check_spec(spec);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  std::vector<MockFrame> frames(spec.frame_count);
  std::vector<double> mse_ref(spec.frame_count);
  for (int f = 0; f < spec.frame_count; ++f) {
    frames[f].r_ref = draw(spec.r_ref_min, spec.r_ref_max);
    frames[f].beta = draw(spec.beta_min, spec.beta_max);
    mse_ref[f] = draw(spec.mse_ref_min, spec.mse_ref_max);
  }
  return finish_scene(spec, std::move(frames), mse_ref);
}

MockScene generate_angular_mock_scene(const MockSceneSpec& spec, const ScanOrder& order,
                                      double jitter) {
  check_spec(spec);
  require(jitter >= 0.0 && jitter < 1.0, "jitter must be in [0,1)");
  if (order.frame_count() != spec.frame_count)
    fail(ErrorKind::invalid_argument, "scan order does not map the scene's frames");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto jittered = [&](double v) { return v * (1.0 + jitter * unit(rng)); };

  const AngularGrid g = order.grid();
  const double cr = (g.rows - 1) / 2.0;
  const double cc = (g.cols - 1) / 2.0;
  const double far = std::max(std::hypot(cr, cc), 1e-300);
  std::vector<MockFrame> frames(spec.frame_count);
  std::vector<double> mse_ref(spec.frame_count);
  for (int f = 0; f < spec.frame_count; ++f) {
    const Cell c = order.cell(f);
    const double rho = std::hypot(c.row - cr, c.col - cc) / far;
    frames[f].r_ref = jittered(spec.r_ref_max + (spec.r_ref_min - spec.r_ref_max) * rho);
    frames[f].beta = std::min(jittered(spec.beta_min + (spec.beta_max - spec.beta_min) * rho),
                              -1e-3);
    mse_ref[f] = jittered(spec.mse_ref_min + (spec.mse_ref_max - spec.mse_ref_min) * rho);
  }
  return finish_scene(spec, std::move(frames), mse_ref);
}

double mock_bits(const MockScene& scene, int frame, int qp) {
  return scene.frames.at(frame).r_ref * std::exp2((scene.q_ref - qp) / 6.0);
}

ConfidenceGrid central_plateau_confidence(AngularGrid grid, double plateau_radius) {
  require(grid.rows >= 1 && grid.cols >= 1, "grid dimensions must be >= 1");
  require(plateau_radius >= 0.0 && plateau_radius < 1.0, "plateau radius must be in [0,1)");
  const double cr = (grid.rows - 1) / 2.0;
  const double cc = (grid.cols - 1) / 2.0;
  const double far = std::hypot(cr, cc);
  std::vector<double> values;
  for (int r = 0; r < grid.rows; ++r)
    for (int c = 0; c < grid.cols; ++c) {
      const double rho = far > 0.0 ? std::hypot(r - cr, c - cc) / far : 0.0;
      const double w = rho <= plateau_radius ? 1.0 : 1.0 - (rho - plateau_radius) / (1.0 - plateau_radius);
      values.push_back(std::clamp(w, 0.0, 1.0));
    }
  return ConfidenceGrid(grid, std::move(values));
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Standard normal keyed on (seed, frame, QPs of the coupled frames).
double noise_draw(std::uint64_t seed, int frame, const std::vector<int>& qps, int begin,
                  int end) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(frame)));
  for (int f = begin; f < end; ++f) h = splitmix64(h ^ static_cast<std::uint32_t>(qps[f]));
  const double u1 = (static_cast<double>(splitmix64(h ^ 1) >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(splitmix64(h ^ 2) >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

MockBackend::MockBackend(MockScene scene) : scene_(std::move(scene)) {
  scene_.validate();
  std::ostringstream os;
  os << std::hexfloat << scene_.q_ref << ';' << scene_.sigma << ';' << to_string(scene_.coupling)
     << ';' << scene_.gop_size << ';' << scene_.seed;
  for (const auto& f : scene_.frames) os << ';' << f.alpha << ',' << f.beta << ',' << f.r_ref;
  identity_ = "mock:" + hex64(fnv1a(os.str()));
}

std::string MockBackend::identity() const { return identity_; }

EncodeResult MockBackend::encode(const EncodeRequest& request) {
  const auto start = std::chrono::steady_clock::now();
  const int n = frame_count();
  if (static_cast<int>(request.frame_qps.size()) != n)
    fail(ErrorKind::invalid_argument, "QP schedule has " +
                                          std::to_string(request.frame_qps.size()) +
                                          " entries for " + std::to_string(n) + " frames");
  for (int qp : request.frame_qps) require(qp >= 0 && qp <= 51, "frame QP outside [0,51]");

  EncodeResult result;
  result.frames.resize(n);
  for (int f = 0; f < n; ++f) {
    auto& out = result.frames[f];
    out.frame = f;
    out.qp = request.frame_qps[f];
    out.bits = mock_bits(scene_, f, out.qp);
    result.total_bits += out.bits;
  }
  for (int f = 0; f < n; ++f) {
    int begin = f, end = f + 1;
    double x = result.frames[f].bits;
    if (scene_.coupling == Coupling::gop_level) {
      begin = f / scene_.gop_size * scene_.gop_size;
      end = std::min(n, begin + scene_.gop_size);
      x = 0.0;
      for (int s = begin; s < end; ++s) x += result.frames[s].bits;
    }
    const auto& m = scene_.frames[f];
    double mse = m.alpha * std::pow(x, m.beta);
    if (scene_.sigma > 0.0)
      mse *= std::exp(scene_.sigma * noise_draw(scene_.seed, f, request.frame_qps, begin, end));
    const double y = mse * 8.0 / 7.0;
    result.frames[f].mse = {y, 0.5 * y, 0.5 * y};
  }
  result.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

ExternalAdapterConfig load_adapter_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open adapter config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, path.string() + ": " + e.what());
  }
  ExternalAdapterConfig cfg;
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  try {
    cfg.command = j.at("command").get<std::string>();
    cfg.frame_count = j.at("frame_count").get<int>();
    if (j.contains("input")) cfg.input = resolve(j["input"].get<std::string>());
    cfg.work_dir = j.contains("work_dir")
                       ? resolve(j["work_dir"].get<std::string>())
                       : std::filesystem::temp_directory_path() /
                             ("lfbit-" + std::to_string(::getpid()));
    cfg.timeout_seconds = j.value("timeout_seconds", cfg.timeout_seconds);
    cfg.max_parallel = j.value("max_parallel", cfg.max_parallel);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, path.string() + ": " + e.what());
  }
  if (const char* env = std::getenv("LFBIT_ENCODER_TIMEOUT")) {
    char* end = nullptr;
    const double t = std::strtod(env, &end);
    if (end == env || *end != '\0' || !(t > 0.0))
      fail(ErrorKind::invalid_argument, "LFBIT_ENCODER_TIMEOUT must be a positive number");
    cfg.timeout_seconds = t;
  }
  return cfg;
}

void write_qp_file(const std::filesystem::path& path, const std::vector<int>& frame_qps) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write QP file " + path.string());
  out << "frame_index,qp\n";
  for (std::size_t f = 0; f < frame_qps.size(); ++f) out << f + 1 << ',' << frame_qps[f] << '\n';
  if (!out) fail(ErrorKind::io, "failed writing QP file " + path.string());
}

EncodeResult parse_encode_stats(const std::filesystem::path& path, int frame_count) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::backend_stats, "incomplete stats: no stats file at " + path.string());
  std::vector<FrameStat> rows;
  try {
    rows = read_stats_csv(in);
  } catch (const Error& e) {
    fail(ErrorKind::backend_stats, "malformed stats file " + path.string() + ": " + e.what());
  }
  EncodeResult result;
  result.frames.resize(frame_count);
  std::vector<bool> seen(frame_count, false);
  for (const auto& r : rows) {
    if (r.frame >= frame_count)
      fail(ErrorKind::backend_stats, "stats reference frame " + std::to_string(r.frame + 1) +
                                         " beyond the sequence length " +
                                         std::to_string(frame_count));
    if (seen[r.frame])
      fail(ErrorKind::backend_stats, "stats list frame " + std::to_string(r.frame + 1) + " twice");
    seen[r.frame] = true;
    result.frames[r.frame] = r;
    result.total_bits += r.bits;
  }
  for (int f = 0; f < frame_count; ++f)
    if (!seen[f])
      fail(ErrorKind::backend_stats, "incomplete stats: frame " + std::to_string(f + 1) +
                                         " missing from " + path.string());
  return result;
}

ExternalBackend::ExternalBackend(ExternalAdapterConfig config) : config_(std::move(config)) {
  require(!config_.command.empty(), "adapter command is empty");
  require(config_.frame_count >= 1, "adapter frame_count must be >= 1");
  require(config_.timeout_seconds > 0.0, "adapter timeout must be > 0");
  require(config_.max_parallel >= 1, "adapter max_parallel must be >= 1");
}

std::string ExternalBackend::identity() const {
  std::string id = "external:" + config_.command + "|" + config_.input.string();
  std::error_code ec;
  if (!config_.input.empty() && std::filesystem::exists(config_.input, ec)) {
    id += "|" + std::to_string(std::filesystem::file_size(config_.input, ec));
    id += "|" + std::to_string(
                    std::filesystem::last_write_time(config_.input, ec).time_since_epoch().count());
  }
  return "external:" + hex64(fnv1a(id));
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

std::string substitute(std::string command, const std::string& key, const std::string& value) {
  const std::string token = "{" + key + "}";
  for (auto pos = command.find(token); pos != std::string::npos;
       pos = command.find(token, pos + value.size()))
    command.replace(pos, token.size(), value);
  return command;
}

std::string log_tail(const std::filesystem::path& log) {
  std::ifstream in(log);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t keep = 2000;
  if (text.size() > keep) text = "..." + text.substr(text.size() - keep);
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  return text;
}

}  // namespace

EncodeResult ExternalBackend::encode(const EncodeRequest& request) {
  if (static_cast<int>(request.frame_qps.size()) != config_.frame_count)
    fail(ErrorKind::invalid_argument, "QP schedule has " +
                                          std::to_string(request.frame_qps.size()) +
                                          " entries for " +
                                          std::to_string(config_.frame_count) + " frames");
  std::uint64_t job = 0;
  {
    std::unique_lock lock(mutex_);
    slot_free_.wait(lock, [&] { return running_ < config_.max_parallel; });
    ++running_;
    job = next_job_++;
  }
  struct SlotGuard {
    ExternalBackend* self;
    ~SlotGuard() {
      std::lock_guard lock(self->mutex_);
      --self->running_;
      self->slot_free_.notify_one();
    }
  } guard{this};

  const auto start = std::chrono::steady_clock::now();
  const auto dir = config_.work_dir / ("job-" + std::to_string(::getpid()) + "-" +
                                       std::to_string(job));
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create work directory " + dir.string() + ": " + ec.message());
  const auto qpfile = dir / "qp.csv";
  const auto output = dir / "output.bin";
  const auto statsfile = dir / "stats.csv";
  const auto logfile = dir / "encoder.log";
  write_qp_file(qpfile, request.frame_qps);

  std::string command = config_.command;
  command = substitute(command, "input", shell_quote(config_.input.string()));
  command = substitute(command, "qpfile", shell_quote(qpfile.string()));
  command = substitute(command, "output", shell_quote(output.string()));
  command = substitute(command, "statsfile", shell_quote(statsfile.string()));
  const std::string log_path = logfile.string();

  const pid_t pid = ::fork();
  if (pid < 0) fail(ErrorKind::backend_process, "fork failed");
  if (pid == 0) {
    ::setpgid(0, 0);
    const int fd = ::open(log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd >= 0) {
      ::dup2(fd, STDOUT_FILENO);
      ::dup2(fd, STDERR_FILENO);
      ::close(fd);
    }
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }

  int status = 0;
  const auto deadline = start + std::chrono::duration<double>(config_.timeout_seconds);
  while (true) {
    const pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0) fail(ErrorKind::backend_process, "waitpid failed for encoder process");
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(-pid, SIGKILL);
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      fail(ErrorKind::backend_timeout,
           "encoder timed out after " + std::to_string(config_.timeout_seconds) + " s (" +
               request.sequence_id + ")\n" + log_tail(logfile));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  if (WIFSIGNALED(status))
    fail(ErrorKind::backend_process, "encoder killed by signal " +
                                         std::to_string(WTERMSIG(status)) + "\n" +
                                         log_tail(logfile));
  if (WEXITSTATUS(status) != 0)
    fail(ErrorKind::backend_process, "encoder exited with status " +
                                         std::to_string(WEXITSTATUS(status)) + "\n" +
                                         log_tail(logfile));

  EncodeResult result = parse_encode_stats(statsfile, config_.frame_count);
  result.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace lfbit
