// lfbit: two-pass bit allocation for light-field pseudo-sequences.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "lfbit/serialization.hpp"

using namespace lfbit;

namespace {

struct Options {
  std::string profile = "ai";
  std::vector<double> budgets;
  std::vector<double> lambdas{0.0};
  std::string backend = "mock";
  std::string scene;
  std::string adapter;
  std::string scan_order = "snake";
  std::string confidence = "uniform";
  std::string grid = "15x15";
  std::string out;
  std::uint64_t seed = 1;
  int parallel = 1;
  std::string config;
  std::string allocation = "two_step";
  std::string mse_mode = "combined";
  std::string sequence_id = "sequence";
  bool no_timing = false;
};

AngularGrid parse_grid(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos)
    fail(ErrorKind::invalid_argument, "grid must look like KxL, got '" + text + "'");
  try {
    return {std::stoi(text.substr(0, x)), std::stoi(text.substr(x + 1))};
  } catch (const std::exception&) {
    fail(ErrorKind::invalid_argument, "grid must look like KxL, got '" + text + "'");
  }
}

MseMode parse_mse_mode(const std::string& s) {
  if (s == "combined") return MseMode::combined;
  if (s == "luma") return MseMode::luma;
  fail(ErrorKind::invalid_argument, "unknown MSE mode '" + s + "'");
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
  } else {
    write_text_file(path, text);
  }
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

void add_layout(CLI::App* app, Options& o) {
  app->add_option("--grid", o.grid, "Angular grid KxL")->capture_default_str();
  app->add_option("--scan-order", o.scan_order, "raster, snake, spiral or a mapping file")
      ->capture_default_str();
  app->add_option("--confidence", o.confidence, "uniform, plateau or a confidence CSV")
      ->capture_default_str();
}

void add_backend(CLI::App* app, Options& o) {
  app->add_option("--backend", o.backend, "mock or external")
      ->check(CLI::IsMember({"mock", "external"}))
      ->capture_default_str();
  app->add_option("--scene", o.scene, "Mock scene JSON (from mockgen)");
  app->add_option("--adapter", o.adapter, "External adapter config JSON");
  app->add_option("--seed", o.seed, "Seed for a generated mock scene")->capture_default_str();
  app->add_option("--parallel", o.parallel, "Concurrent first-pass encodes")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--sequence-id", o.sequence_id)->capture_default_str();
}

void add_profile(CLI::App* app, Options& o) {
  app->add_option("--profile", o.profile, "ai, ra or ld")
      ->check(CLI::IsMember({"ai", "ra", "ld"}))
      ->capture_default_str();
}

PipelineConfig config_from_options(const Options& o) {
  if (!o.config.empty()) {
    const auto path = std::filesystem::path(o.config);
    return pipeline_config_from_json(read_json_file(path), path.parent_path());
  }
  PipelineConfig c;
  const ProfileKind kind = parse_profile_kind(o.profile);
  c.profile = profile_defaults(kind);
  c.budgets = o.budgets.empty() ? profile_budgets(kind) : o.budgets;
  c.lambdas = o.lambdas;
  c.mse_mode = parse_mse_mode(o.mse_mode);
  c.allocation = parse_allocation_mode(o.allocation);
  c.grid = parse_grid(o.grid);
  c.scan_order = o.scan_order;
  c.confidence = o.confidence;
  c.backend = o.backend;
  if (!o.scene.empty()) c.scene = mock_scene_from_json(read_json_file(o.scene));
  c.scene_spec = mock_spec_preset(kind);
  c.scene_spec.seed = o.seed;
  c.adapter = o.adapter;
  if (c.backend == "external" && c.adapter.empty())
    fail(ErrorKind::invalid_argument, "--backend external needs --adapter");
  c.parallelism = o.parallel;
  c.sequence_id = o.sequence_id;
  return c;
}

std::vector<TwoPassReport> run_batch(const PipelineConfig& c, AllocationMode mode) {
  auto backend = make_backend(c);
  const LightFieldLayout layout = make_layout(c, backend->frame_count());
  PassOneCache cache;
  std::vector<TwoPassReport> reports;
  for (double lambda : c.lambdas)
    for (double budget : c.budgets) {
      RunSettings s;
      s.profile = c.profile;
      s.budget = budget;
      s.lambda = lambda;
      s.mse_mode = c.mse_mode;
      s.allocation = mode;
      s.parallelism = c.parallelism;
      s.sequence_id = c.sequence_id;
      reports.push_back(run_two_pass(s, layout, *backend, &cache));
    }
  return reports;
}

/// Minimal report carrying what compare_runs reads.
std::vector<TwoPassReport> reports_from_json(const Json& j) {
  std::vector<TwoPassReport> out;
  try {
    for (const auto& r : j) {
      TwoPassReport rep;
      rep.budget = r.at("budget").get<double>();
      rep.evaluation.achieved_bits = r.at("achieved_bits").get<double>();
      const auto& tp = r.at("quality").at("T_prime_db");
      if (tp.is_number()) rep.evaluation.quality.T_prime = tp.get<double>();
      out.push_back(rep);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("report list: ") + e.what());
  }
  return out;
}

std::vector<RdCurvePoint> read_curve(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  std::vector<RdCurvePoint> pts;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (pts.empty() && line.rfind("bits", 0) == 0) continue;
    std::istringstream ss(line);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b))
      fail(ErrorKind::parse, path + " line " + std::to_string(line_no) + ": expected bits,quality");
    try {
      std::size_t ia = 0, ib = 0;
      const double bits = std::stod(a, &ia);
      const double q = std::stod(b, &ib);
      pts.push_back({bits, q});
    } catch (const std::exception&) {
      fail(ErrorKind::parse, path + " line " + std::to_string(line_no) + ": not a number");
    }
  }
  return pts;
}

int run(int argc, char** argv) {
  CLI::App app{"Two-pass frame-level bit allocation for light-field pseudo-sequences"};
  app.require_subcommand(1);
  Options o;

  auto* mockgen = app.add_subcommand("mockgen", "Write a synthetic encoder scene");
  add_profile(mockgen, o);
  double sigma = 0.0;
  int frames = 192;
  double jitter = -1.0;
  mockgen->add_option("--seed", o.seed)->capture_default_str();
  mockgen->add_option("--sigma", sigma, "Log-normal distortion noise")->capture_default_str();
  mockgen->add_option("--frames", frames)->capture_default_str();
  mockgen->add_option("--angular-jitter", jitter,
                      "Vary parameters smoothly over the grid with this relative jitter");
  add_layout(mockgen, o);
  mockgen->add_option("--out", o.out, "Output file (default stdout)");

  auto* firstpass = app.add_subcommand("firstpass", "Run the QP sweep and write frame stats");
  add_profile(firstpass, o);
  add_backend(firstpass, o);
  bool firstpass_json = false;
  firstpass->add_option("--out", o.out, "Stats CSV (default stdout)");
  firstpass->add_flag("--json", firstpass_json, "Write the full first-pass record as JSON");

  auto* fit = app.add_subcommand("fit", "Fit R-D models from first-pass stats");
  add_profile(fit, o);
  std::string stats_path;
  fit->add_option("--stats", stats_path, "First-pass stats CSV")->required();
  fit->add_option("--budget", o.budgets, "Budget in bits (selects the fit window)")
      ->required()
      ->expected(1);
  fit->add_option("--mse-mode", o.mse_mode)->capture_default_str();
  fit->add_option("--out", o.out);

  auto* allocate = app.add_subcommand("allocate", "Solve an allocation problem");
  std::string problem_path, problem_out;
  bool trace = false;
  add_profile(allocate, o);
  add_layout(allocate, o);
  allocate->add_option("--problem", problem_path, "Problem JSON; solved as given");
  allocate->add_option("--stats", stats_path, "First-pass stats CSV; fit, solve and plan");
  allocate->add_option("--budget", o.budgets, "Budget in bits")->expected(1);
  allocate->add_option("--lambda", o.lambdas, "Smoothness weight")->expected(1);
  allocate->add_option("--mse-mode", o.mse_mode)->capture_default_str();
  allocate->add_option("--problem-out", problem_out, "Also write the assembled problem");
  allocate->add_flag("--trace", trace, "Include the objective trace");
  allocate->add_option("--out", o.out, "Solution JSON, or the QP CSV with --stats");

  auto* twopass = app.add_subcommand("twopass", "Run the full two-pass pipeline");
  add_profile(twopass, o);
  add_backend(twopass, o);
  add_layout(twopass, o);
  twopass->add_option("--config", o.config, "Pipeline config JSON (overrides flags)");
  twopass->add_option("--budget", o.budgets, "Budgets in bits (default: profile presets)");
  twopass->add_option("--lambda", o.lambdas, "Smoothness weights")->capture_default_str();
  twopass->add_option("--allocation", o.allocation, "two_step or uniform")->capture_default_str();
  twopass->add_option("--mse-mode", o.mse_mode)->capture_default_str();
  twopass->add_flag("--no-timing", o.no_timing, "Leave wall-clock fields out");
  twopass->add_option("--out", o.out);

  auto* metrics = app.add_subcommand("metrics", "Quality of a reconstructed sequence");
  std::string ref_path, rec_path;
  int width = 0, height = 0;
  metrics->add_option("--ref", ref_path, "Reference 8-bit 4:2:0 sequence")->required();
  metrics->add_option("--rec", rec_path, "Reconstructed sequence")->required();
  metrics->add_option("--width", width)->required();
  metrics->add_option("--height", height)->required();
  metrics->add_option("--frames", frames, "Frames to read (default K*L)");
  add_layout(metrics, o);
  metrics->add_option("--lambda", o.lambdas)->expected(1);
  metrics->add_option("--mse-mode", o.mse_mode)->capture_default_str();
  metrics->add_option("--out", o.out);

  auto* bdrate = app.add_subcommand("bdrate", "BD-rate between two bits,quality curves");
  std::string anchor_path, test_path;
  bdrate->add_option("--anchor", anchor_path, "CSV bits,quality")->required();
  bdrate->add_option("--test", test_path, "CSV bits,quality")->required();

  auto* compare = app.add_subcommand("compare", "BD-rate of two-step allocation against a baseline");
  std::string reports_path, anchors_path;
  add_profile(compare, o);
  add_backend(compare, o);
  add_layout(compare, o);
  compare->add_option("--config", o.config);
  compare->add_option("--budget", o.budgets);
  compare->add_option("--lambda", o.lambdas)->expected(1);
  compare->add_option("--reports", reports_path, "twopass output to evaluate");
  compare->add_option("--anchors", anchors_path, "twopass output used as the anchor");
  compare->add_option("--out", o.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*mockgen) {
    const ProfileKind kind = parse_profile_kind(o.profile);
    MockSceneSpec spec = mock_spec_preset(kind);
    spec.seed = o.seed;
    spec.sigma = sigma;
    spec.frame_count = frames;
    MockScene scene;
    if (jitter >= 0.0) {
      const AngularGrid grid = parse_grid(o.grid);
      scene = generate_angular_mock_scene(spec, resolve_scan_order(o.scan_order, grid, frames),
                                          jitter);
    } else {
      scene = generate_mock_scene(spec);
    }
    emit(o.out, dump(to_json(scene)));
  } else if (*firstpass) {
    const PipelineConfig c = config_from_options(o);
    auto backend = make_backend(c);
    const PassOneStats p = first_pass(*backend, c.profile, c.sequence_id, c.parallelism);
    if (firstpass_json) {
      emit(o.out, dump(to_json(p)));
    } else {
      std::ostringstream os;
      write_stats_csv(os, p.stats);
      emit(o.out, os.str());
    }
  } else if (*fit) {
    const EncoderProfile profile = profile_defaults(parse_profile_kind(o.profile));
    std::ifstream in(stats_path);
    if (!in) fail(ErrorKind::io, "cannot open " + stats_path);
    const auto stats = read_stats_csv(in);
    int n = 0;
    for (const auto& s : stats) n = std::max(n, s.frame + 1);
    const RdSampleSet samples = RdSampleSet::from_stats(n, stats, parse_mse_mode(o.mse_mode));
    const FitWindow w = select_fit_window(samples, o.budgets.at(0), profile.sweep_min_qp,
                                          profile.sweep_max_qp);
    std::optional<GopGrouping> grouping;
    if (profile.uses_gops()) grouping.emplace(n, profile.gop_size);
    const auto models = fit_all_models(samples.restricted_to(w.qp_lo, w.qp_hi), grouping);
    Json j = {{"fit_window", {{"center_qp", w.center_qp}, {"qp_lo", w.qp_lo}, {"qp_hi", w.qp_hi}}},
              {"models", to_json(models)}};
    emit(o.out, dump(j));
  } else if (*allocate) {
    if (!problem_path.empty()) {
      const AllocationProblem p = problem_from_json(read_json_file(problem_path));
      SolverOptions opts;
      opts.record_trace = trace;
      Json j = to_json(solve_two_step(p, opts), trace);
      j["predicted_T"] = predict_T(p, solve_two_step(p, opts).step_b.bits);
      emit(o.out, dump(j));
    } else {
      if (stats_path.empty())
        fail(ErrorKind::invalid_argument, "allocate needs --problem or --stats");
      if (o.budgets.empty()) fail(ErrorKind::invalid_argument, "allocate --stats needs --budget");
      const EncoderProfile profile = profile_defaults(parse_profile_kind(o.profile));
      std::ifstream in(stats_path);
      if (!in) fail(ErrorKind::io, "cannot open " + stats_path);
      const auto stats = read_stats_csv(in);
      int n = 0;
      for (const auto& s : stats) n = std::max(n, s.frame + 1);
      const RdSampleSet samples = RdSampleSet::from_stats(n, stats, parse_mse_mode(o.mse_mode));
      const double budget = o.budgets.at(0);
      const double lambda = o.lambdas.at(0);
      const FitWindow w = select_fit_window(samples, budget, profile.sweep_min_qp,
                                            profile.sweep_max_qp);
      std::optional<GopGrouping> grouping;
      if (profile.uses_gops()) grouping.emplace(n, profile.gop_size);
      const auto models = fit_all_models(samples.restricted_to(w.qp_lo, w.qp_hi), grouping);
      const AngularGrid grid = parse_grid(o.grid);
      const ScanOrder order = resolve_scan_order(o.scan_order, grid, n);
      const ConfidenceGrid conf = resolve_confidence(o.confidence, grid);
      const AllocationProblem p = assemble_problem(profile, models, conf, order, lambda, budget);
      if (!problem_out.empty()) write_text_file(problem_out, dump(to_json(p)));
      SolverOptions opts;
      opts.record_trace = trace;
      const TwoStepResult r = solve_two_step(p, opts);
      QpSchedule s = plan_schedule(profile, samples, r.step_b.bits);
      fill_expected_T(s, order, conf, lambda);
      std::ostringstream csv;
      csv << "frame_index,qp\n";
      for (std::size_t f = 0; f < s.frame_qps.size(); ++f)
        csv << f + 1 << ',' << s.frame_qps[f] << '\n';
      emit(o.out, csv.str());
      Json summary = {{"solution", to_json(r, trace)},
                      {"predicted_T", predict_T(p, r.step_b.bits)},
                      {"schedule", to_json(s)}};
      if (!o.out.empty() && o.out != "-") std::cout << dump(summary);
    }
  } else if (*twopass) {
    const PipelineConfig c = config_from_options(o);
    Json out = Json::array();
    for (const auto& r : run_batch(c, c.allocation)) out.push_back(to_json(r, !o.no_timing));
    emit(o.out, dump(out));
  } else if (*metrics) {
    const AngularGrid grid = parse_grid(o.grid);
    if (!metrics->count("--frames")) frames = grid.cells();
    const SaiGridDims dims(grid.rows, grid.cols, height, width);
    const ScanOrder order = resolve_scan_order(o.scan_order, grid, frames);
    const ConfidenceGrid conf = resolve_confidence(o.confidence, grid);
    std::ifstream ref(ref_path, std::ios::binary), rec(rec_path, std::ios::binary);
    if (!ref) fail(ErrorKind::io, "cannot open " + ref_path);
    if (!rec) fail(ErrorKind::io, "cannot open " + rec_path);
    const MseGrid mse = compute_mse_grid(ref, rec, dims, order, parse_mse_mode(o.mse_mode));
    emit(o.out, dump(to_json(evaluate_quality(mse, conf, o.lambdas.at(0)))));
  } else if (*bdrate) {
    const double v = bd_rate(read_curve(anchor_path), read_curve(test_path));
    emit("", dump(Json{{"bd_rate_percent", v}}));
  } else if (*compare) {
    Comparison c;
    if (!reports_path.empty() || !anchors_path.empty()) {
      if (reports_path.empty() || anchors_path.empty())
        fail(ErrorKind::invalid_argument, "compare needs both --reports and --anchors");
      c = compare_runs(reports_from_json(read_json_file(reports_path)),
                       reports_from_json(read_json_file(anchors_path)));
    } else {
      PipelineConfig cfg = config_from_options(o);
      cfg.lambdas.resize(1);
      c = compare_runs(run_batch(cfg, AllocationMode::two_step),
                       run_batch(cfg, AllocationMode::uniform));
    }
    emit(o.out, dump(to_json(c)));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "lfbit: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "lfbit: unexpected error: " << e.what() << "\n";
    return 1;
  }
}
