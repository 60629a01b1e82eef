#include "lfbit/serialization.hpp"

#include <fstream>
#include <sstream>

#include "lfbit/error.hpp"

namespace lfbit {

namespace {

template <typename F>
auto guarded(const char* what, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string(what) + ": " + e.what());
  }
}

Json optional_number(const std::optional<double>& v) {
  return v ? Json(*v) : Json(nullptr);
}

}  // namespace

Json to_json(const MockScene& scene) {
  Json frames = Json::array();
  for (const auto& f : scene.frames)
    frames.push_back({{"alpha", f.alpha}, {"beta", f.beta}, {"r_ref", f.r_ref}});
  return {{"q_ref", scene.q_ref},       {"sigma", scene.sigma},
          {"coupling", to_string(scene.coupling)}, {"gop_size", scene.gop_size},
          {"seed", scene.seed},         {"frames", frames}};
}

MockScene mock_scene_from_json(const Json& j) {
  return guarded("mock scene", [&] {
    MockScene s;
    s.q_ref = j.at("q_ref").get<int>();
    s.sigma = j.at("sigma").get<double>();
    s.coupling = parse_coupling(j.at("coupling").get<std::string>());
    s.gop_size = j.at("gop_size").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& f : j.at("frames"))
      s.frames.push_back(
          {f.at("alpha").get<double>(), f.at("beta").get<double>(), f.at("r_ref").get<double>()});
    s.validate();
    return s;
  });
}

MockSceneSpec mock_spec_from_json(const Json& j, ProfileKind profile) {
  return guarded("mock scene spec", [&] {
    MockSceneSpec s = mock_spec_preset(profile);
    s.frame_count = j.value("frame_count", s.frame_count);
    s.r_ref_min = j.value("r_ref_min", s.r_ref_min);
    s.r_ref_max = j.value("r_ref_max", s.r_ref_max);
    s.beta_min = j.value("beta_min", s.beta_min);
    s.beta_max = j.value("beta_max", s.beta_max);
    s.mse_ref_min = j.value("mse_ref_min", s.mse_ref_min);
    s.mse_ref_max = j.value("mse_ref_max", s.mse_ref_max);
    s.q_ref = j.value("q_ref", s.q_ref);
    s.sigma = j.value("sigma", s.sigma);
    if (j.contains("coupling")) s.coupling = parse_coupling(j["coupling"].get<std::string>());
    s.gop_size = j.value("gop_size", s.gop_size);
    s.seed = j.value("seed", s.seed);
    return s;
  });
}

Json to_json(const HyperbolicModel& m) {
  return {{"alpha", m.alpha},
          {"beta", m.beta},
          {"r_squared", m.r_squared},
          {"kind", m.kind == ModelKind::frame_bits ? "frame_bits" : "gop_bits"},
          {"gop", m.gop_index ? Json(*m.gop_index + 1) : Json(nullptr)},
          {"monotone", m.monotone},
          {"raw_beta", m.raw_beta},
          {"clamped_mse", m.clamped_mse}};
}

Json to_json(const std::vector<HyperbolicModel>& models) {
  Json a = Json::array();
  for (const auto& m : models) a.push_back(to_json(m));
  return a;
}

std::vector<HyperbolicModel> models_from_json(const Json& j) {
  return guarded("models", [&] {
    std::vector<HyperbolicModel> out;
    for (const auto& e : j) {
      HyperbolicModel m;
      m.alpha = e.at("alpha").get<double>();
      m.beta = e.at("beta").get<double>();
      m.r_squared = e.value("r_squared", 0.0);
      const auto kind = e.at("kind").get<std::string>();
      if (kind == "frame_bits") m.kind = ModelKind::frame_bits;
      else if (kind == "gop_bits") m.kind = ModelKind::gop_bits;
      else fail(ErrorKind::parse, "unknown model kind '" + kind + "'");
      if (e.contains("gop") && !e["gop"].is_null()) m.gop_index = e["gop"].get<int>() - 1;
      m.monotone = e.value("monotone", true);
      m.raw_beta = e.value("raw_beta", m.beta);
      m.clamped_mse = e.value("clamped_mse", 0);
      out.push_back(m);
    }
    return out;
  });
}

Json to_json(const PassOneStats& stats, bool include_timing) {
  Json rows = Json::array();
  for (const auto& s : stats.stats)
    rows.push_back({s.frame + 1, s.qp, s.bits, s.mse.y, s.mse.u, s.mse.v});
  Json totals = Json::array();
  for (const auto& [qp, bits] : stats.totals) totals.push_back({qp, bits});
  Json j = {{"profile", short_name(stats.profile)},
            {"sweep", {stats.sweep_min_qp, stats.sweep_max_qp}},
            {"frame_count", stats.frame_count},
            {"totals", totals},
            {"stats", rows}};
  if (include_timing) j["seconds"] = stats.seconds;
  return j;
}

PassOneStats pass_one_from_json(const Json& j) {
  return guarded("first-pass stats", [&] {
    PassOneStats p;
    p.profile = parse_profile_kind(j.at("profile").get<std::string>());
    p.sweep_min_qp = j.at("sweep").at(0).get<int>();
    p.sweep_max_qp = j.at("sweep").at(1).get<int>();
    p.frame_count = j.at("frame_count").get<int>();
    for (const auto& t : j.at("totals")) p.totals.emplace_back(t.at(0).get<int>(), t.at(1).get<double>());
    for (const auto& r : j.at("stats"))
      p.stats.push_back({r.at(0).get<int>() - 1, r.at(1).get<int>(), r.at(2).get<double>(),
                         {r.at(3).get<double>(), r.at(4).get<double>(), r.at(5).get<double>()}});
    p.seconds = j.value("seconds", 0.0);
    return p;
  });
}

Json to_json(const QualityReport& q) {
  const AngularGrid g = q.per_sai_mse.grid();
  Json grid = Json::array();
  for (int r = 0; r < g.rows; ++r) {
    Json row = Json::array();
    for (int c = 0; c < g.cols; ++c)
      row.push_back(q.per_sai_mse.valid({r, c}) ? Json(q.per_sai_mse.at({r, c})) : Json(nullptr));
    grid.push_back(row);
  }
  return {{"wmse", q.wmse},   {"sp", q.sp},         {"T", q.T},
          {"T_prime_db", q.T_prime ? Json(*q.T_prime) : Json("inf")}, {"lambda", q.lambda},
          {"per_sai_mse", grid}};
}

Json to_json(const QpSchedule& s) {
  Json clamped = Json::array();
  for (std::size_t f = 0; f < s.clamped.size(); ++f)
    if (s.clamped[f]) clamped.push_back(f + 1);
  return {{"frame_qps", s.frame_qps},
          {"variable_qps", s.variable_qps},
          {"target_bits", s.target_bits},
          {"variable_bits", s.variable_bits},
          {"clamped_frames", clamped},
          {"expected_bits", s.expected_bits},
          {"expected_T", optional_number(s.expected_T)}};
}

Json to_json(const TwoPassReport& r, bool include_timing) {
  Json j = {
      {"profile", to_string(r.profile)},
      {"allocation", to_string(r.allocation_mode)},
      {"backend", r.backend},
      {"sequence_id", r.sequence_id},
      {"budget", r.budget},
      {"lambda", r.lambda},
      {"mse_mode", r.mse_mode == MseMode::combined ? "combined" : "luma"},
      {"achieved_bits", r.evaluation.achieved_bits},
      {"bit_error", r.evaluation.bit_error},
      {"quality", to_json(r.evaluation.quality)},
      {"predicted_T", r.predicted_T},
      {"fit_window",
       {{"center_qp", r.fit_window.center_qp},
        {"qp_lo", r.fit_window.qp_lo},
        {"qp_hi", r.fit_window.qp_hi}}},
      {"solver",
       {{"step_a_iterations", r.solver.step_a_iterations},
        {"step_a_kkt_residual", r.solver.step_a_kkt_residual},
        {"step_b_iterations", r.solver.step_b_iterations},
        {"step_b_kkt_residual", r.solver.step_b_kkt_residual},
        {"step_b_converged", r.solver.step_b_converged}}},
      {"allocation_bits", r.allocation},
      {"schedule", to_json(r.schedule)},
      {"models", to_json(r.models)},
  };
  if (include_timing) {
    j["pass_one_cached"] = r.pass_one_cached;
    j["timing"] = {{"pass1", r.timing.pass1},
                   {"optimize", r.timing.optimize},
                   {"pass2", r.timing.pass2},
                   {"total", r.timing.total}};
  }
  return j;
}

Json to_json(const Comparison& c) {
  Json rows = Json::array();
  for (const auto& r : c.rows)
    rows.push_back({{"budget", r.budget},
                    {"anchor_bits", r.anchor_bits},
                    {"anchor_T_prime", r.anchor_quality},
                    {"test_bits", r.test_bits},
                    {"test_T_prime", r.test_quality}});
  return {{"bd_rate_percent", c.bd_rate}, {"rows", rows}};
}

Json to_json(const AllocationProblem& p) {
  Json terms = Json::array();
  for (const auto& t : p.terms)
    terms.push_back({{"frame", t.frame + 1},
                     {"variable", t.variable + 1},
                     {"weight", t.weight},
                     {"alpha", t.alpha},
                     {"beta", t.beta}});
  Json rows = Json::array();
  for (const auto& r : p.sp.rows) rows.push_back({r.i + 1, r.j + 1, r.psi});
  Json pinned = Json::array();
  for (const auto& v : p.pinned) pinned.push_back(optional_number(v));
  return {{"variable_kind", p.variable_kind == VariableKind::per_frame ? "per_frame" : "per_gop"},
          {"variable_count", p.variable_count},
          {"budget", p.budget},
          {"lambda", p.lambda},
          {"grid_cells", p.grid_cells},
          {"terms", terms},
          {"sp_rows", rows},
          {"pinned", pinned}};
}

AllocationProblem problem_from_json(const Json& j) {
  return guarded("allocation problem", [&] {
    AllocationProblem p;
    const auto kind = j.value("variable_kind", std::string("per_frame"));
    p.variable_kind = kind == "per_gop" ? VariableKind::per_gop : VariableKind::per_frame;
    p.variable_count = j.at("variable_count").get<int>();
    p.budget = j.at("budget").get<double>();
    p.lambda = j.value("lambda", 0.0);
    p.grid_cells = j.value("grid_cells", 1);
    for (const auto& t : j.at("terms"))
      p.terms.push_back({t.value("frame", static_cast<int>(p.terms.size()) + 1) - 1,
                         t.at("variable").get<int>() - 1, t.at("weight").get<double>(),
                         t.at("alpha").get<double>(), t.at("beta").get<double>()});
    if (j.contains("sp_rows")) {
      p.sp.frames = static_cast<int>(p.terms.size());
      for (const auto& r : j["sp_rows"])
        p.sp.rows.push_back({r.at(0).get<int>() - 1, r.at(1).get<int>() - 1, r.at(2).get<double>()});
    }
    if (j.contains("pinned")) {
      for (const auto& v : j["pinned"])
        p.pinned.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
    }
    p.validate();
    return p;
  });
}

Json to_json(const TwoStepResult& r, bool include_trace) {
  auto solution = [&](const AllocationSolution& s) {
    Json j = {{"bits", s.bits},
              {"objective", s.objective},
              {"converged", s.converged},
              {"iterations", s.iterations},
              {"kkt_residual", s.kkt_residual}};
    if (include_trace) j["objective_trace"] = s.objective_trace;
    return j;
  };
  return {{"step_a", solution(r.step_a)},
          {"linearization",
           {{"intercept", r.linearization.intercept}, {"slope", r.linearization.slope}}},
          {"step_b", solution(r.step_b)}};
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

PipelineConfig pipeline_config_from_json(const Json& j, const std::filesystem::path& base_dir) {
  return guarded("pipeline config", [&] {
    auto resolve = [&](const std::string& p) {
      std::filesystem::path q(p);
      return q.is_absolute() ? q : base_dir / q;
    };
    PipelineConfig c;
    const ProfileKind kind = parse_profile_kind(j.value("preset", std::string("ai")));
    c.profile = profile_defaults(kind);
    c.budgets = profile_budgets(kind);
    c.lambdas = lambda_presets();
    if (j.contains("qp_offsets")) c.profile.qp_offsets = j["qp_offsets"].get<std::vector<int>>();
    if (j.contains("sweep")) {
      c.profile.sweep_min_qp = j["sweep"].at(0).get<int>();
      c.profile.sweep_max_qp = j["sweep"].at(1).get<int>();
    }
    if (j.contains("budgets")) c.budgets = j["budgets"].get<std::vector<double>>();
    if (j.contains("lambdas")) c.lambdas = j["lambdas"].get<std::vector<double>>();
    if (j.contains("mse_mode")) {
      const auto m = j["mse_mode"].get<std::string>();
      if (m == "combined") c.mse_mode = MseMode::combined;
      else if (m == "luma") c.mse_mode = MseMode::luma;
      else fail(ErrorKind::parse, "unknown mse_mode '" + m + "'");
    }
    if (j.contains("allocation"))
      c.allocation = parse_allocation_mode(j["allocation"].get<std::string>());
    if (j.contains("grid")) c.grid = {j["grid"].at(0).get<int>(), j["grid"].at(1).get<int>()};
    auto name_or_path = [&](const std::string& v, std::initializer_list<const char*> names) {
      for (const char* n : names)
        if (v == n) return v;
      return resolve(v).string();
    };
    if (j.contains("scan_order"))
      c.scan_order = name_or_path(j["scan_order"].get<std::string>(), {"raster", "snake", "spiral"});
    if (j.contains("confidence"))
      c.confidence = name_or_path(j["confidence"].get<std::string>(), {"uniform", "plateau"});
    c.backend = j.value("backend", c.backend);
    if (c.backend != "mock" && c.backend != "external")
      fail(ErrorKind::parse, "unknown backend '" + c.backend + "'");
    if (j.contains("scene")) {
      if (j["scene"].is_string())
        c.scene = mock_scene_from_json(read_json_file(resolve(j["scene"].get<std::string>())));
      else
        c.scene = mock_scene_from_json(j["scene"]);
    }
    c.scene_spec = mock_spec_from_json(j.value("scene_spec", Json::object()), kind);
    if (j.contains("adapter")) c.adapter = resolve(j["adapter"].get<std::string>());
    c.parallelism = j.value("parallel", c.parallelism);
    c.sequence_id = j.value("sequence_id", c.sequence_id);
    if (c.backend == "external" && c.adapter.empty())
      fail(ErrorKind::parse, "external backend needs an 'adapter' config path");
    require(c.parallelism >= 1, "parallel must be >= 1");
    return c;
  });
}

std::unique_ptr<EncoderBackend> make_backend(const PipelineConfig& config) {
  if (config.backend == "external")
    return std::make_unique<ExternalBackend>(load_adapter_config(config.adapter));
  return std::make_unique<MockBackend>(config.scene ? *config.scene
                                                    : generate_mock_scene(config.scene_spec));
}

ScanOrder resolve_scan_order(const std::string& spec, AngularGrid grid, int frame_count) {
  if (spec == "raster" || spec == "snake" || spec == "spiral")
    return build_scan_order(parse_scan_kind(spec), grid, frame_count);
  ScanOrder order = load_scan_order(std::filesystem::path(spec), grid);
  if (order.frame_count() != frame_count)
    fail(ErrorKind::invalid_argument, "scan order file maps " +
                                          std::to_string(order.frame_count()) +
                                          " frames; the sequence has " +
                                          std::to_string(frame_count));
  return order;
}

ConfidenceGrid resolve_confidence(const std::string& spec, AngularGrid grid) {
  if (spec == "uniform") return ConfidenceGrid::uniform(grid);
  if (spec == "plateau") return central_plateau_confidence(grid);
  ConfidenceGrid c = load_confidence(std::filesystem::path(spec));
  if (!(c.grid() == grid))
    fail(ErrorKind::invalid_argument, "confidence grid is " + std::to_string(c.grid().rows) + "x" +
                                          std::to_string(c.grid().cols) + ", expected " +
                                          std::to_string(grid.rows) + "x" +
                                          std::to_string(grid.cols));
  return c;
}

LightFieldLayout make_layout(const PipelineConfig& config, int frame_count) {
  return {resolve_scan_order(config.scan_order, config.grid, frame_count),
          resolve_confidence(config.confidence, config.grid)};
}

}  // namespace lfbit
