// psr: synthesize, plan, reconstruct, baseline, score and render.
//
// Exit codes: 0 ok, 2 usage or invalid configuration, 3 data (missing or
// corrupt input), 4 numerical failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include "psr/baseline.hpp"
#include "psr/dataset_io.hpp"
#include "psr/evaluation.hpp"
#include "psr/phantom.hpp"
#include "psr/recon_fft.hpp"
#include "psr/recon_sms.hpp"
#include "psr/thermal_model.hpp"
#include "scenario.hpp"
#include "units.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace psr;
using namespace psr::cli;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

// Failure with a chosen exit code.
struct CommandError : std::runtime_error {
  CommandError(int code_, const std::string& what) : std::runtime_error(what), code(code_) {}
  int code;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct RunRecord {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  json inputs = json::object();
  json outputs = json::array();
  json timings = json::object();
  std::optional<std::uint64_t> seed;

  void write(const fs::path& dir) const {
    json j;
    j["tool"] = "psr";
    j["version"] = PSR_VERSION;
    j["command"] = command;
    j["argv"] = argv;
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["timings"] = timings;
    j["seed"] = seed ? json(*seed) : json(nullptr);
    std::ofstream out(dir / "run.json");
    out << j.dump(2) << '\n';
    if (!out) throw CommandError(kData, "cannot write " + (dir / "run.json").string());
  }
};

std::string absolute_string(const fs::path& p) { return fs::absolute(p).lexically_normal().string(); }

// Output directories are created on demand and must not be an input.
void prepare_output(const fs::path& out, const std::vector<fs::path>& inputs) {
  for (const auto& in : inputs) {
    std::error_code ec;
    if (fs::exists(out) && fs::exists(in) && fs::equivalent(out, in, ec))
      throw CommandError(kUsage, "output directory " + out.string() + " is also an input");
  }
  fs::create_directories(out);
}

std::string format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

fs::path resolve_scenario(const std::string& name) {
  fs::path p(name);
  if (fs::exists(p)) return p;
  const fs::path bundled = fs::path(PSR_SCENARIO_DIR) / (name + ".json");
  if (fs::exists(bundled)) return bundled;
  throw CommandError(kUsage, "scenario '" + name + "' not found");
}

// ---------------------------------------------------------------- maps

struct LoadedMap {
  Field values;
  Grid2D grid;
  std::string name;
};

// A map from a reconstruction directory (result.json), a baseline directory
// (baseline.json) or a delimited text file.
LoadedMap load_map(const fs::path& path, const std::string& map_name) {
  if (fs::is_directory(path)) {
    if (fs::exists(path / "result.json")) {
      const ReconResult r = read_result(path);
      if (map_name.empty() || map_name == "a_rec") return {r.a_rec, r.grid, "a_rec"};
      if (map_name.rfind("a_rec_", 0) == 0) {
        const std::size_t m = std::stoul(map_name.substr(6));
        if (m >= r.per_measurement.size())
          throw CommandError(kData, "no per-measurement map " + map_name + " in " + path.string());
        return {r.per_measurement[m], r.grid, map_name};
      }
      throw CommandError(kUsage, "unknown map '" + map_name + "' for a reconstruction");
    }
    if (fs::exists(path / "baseline.json")) {
      std::ifstream in(path / "baseline.json");
      const json j = json::parse(in);
      const Grid2D grid = grid_from_json(j.at("grid"));
      const json& maps = j.at("maps");
      std::string name = map_name.empty() ? maps.begin().key() : map_name;
      if (!maps.contains(name)) throw CommandError(kUsage, "unknown map '" + name + "' in " + path.string());
      return {read_field_f64(path / maps.at(name).get<std::string>(), grid), grid, name};
    }
    throw CommandError(kData, path.string() + " holds neither result.json nor baseline.json");
  }
  if (!fs::exists(path)) throw CommandError(kData, path.string() + " does not exist");
  if (path.extension() == ".csv") {
    LoadedMap m;
    m.values = read_delimited(path);
    m.grid = Grid2D{static_cast<std::size_t>(m.values.cols()), static_cast<std::size_t>(m.values.rows()), 1.0, 1.0};
    m.name = path.stem().string();
    return m;
  }
  throw CommandError(kUsage, path.string() + ": expected a result directory, a baseline directory or a .csv file");
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string scenario;
  std::string out;
  bool defect_free = false;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

int cmd_synth(const SynthArgs& a, RunRecord& rec) {
  const auto t0 = Clock::now();
  const fs::path scenario_path = resolve_scenario(a.scenario);
  Scenario s = load_scenario(scenario_path);
  if (a.seed) s.seed = *a.seed;
  const fs::path out(a.out);
  prepare_output(out, {scenario_path});

  const MeasurementSet set = synthesize(s, a.defect_free, a.threads);
  const double t_sim = seconds_since(t0);
  write_dataset(set, out);
  write_truth(scenario_defects(s, a.defect_free), out / "truth.json");

  rec.config = s.resolved;
  rec.config["defect_free"] = a.defect_free;
  rec.inputs["scenario"] = absolute_string(scenario_path);
  rec.outputs = {"manifest.json", "truth.json"};
  for (std::size_t m = 0; m < set.n_m(); ++m) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05zu.f32", m);
    rec.outputs.push_back(name);
  }
  rec.seed = s.seed;
  rec.timings = {{"simulate_s", t_sim}, {"total_s", seconds_since(t0)}};

  std::cout << "dataset " << out.string() << "\n"
            << "grid " << set.grid.n_x << " x " << set.grid.n_y << " px, pixel " << format("%.4g", set.grid.dx * 1e3)
            << " mm\n"
            << "measurements " << set.n_m() << "\n"
            << "slices " << (set.time_axis ? set.time_axis->times.size() : 1) << "\n"
            << "noise sigma " << format("%.4g", set.noise_sigma) << "\n"
            << "defects " << (a.defect_free ? 0 : s.defects.size()) << "\n";
  return kOk;
}

// ---------------------------------------------------------------- plan

struct PlanArgs {
  std::string roi;
  std::string rd;
  std::string spot = "0mm";
  std::string t_eval = "500ms";
  std::string pixel = "52um";
  std::string out;
};

int cmd_plan(const PlanArgs& a, RunRecord& rec) {
  const auto t0 = Clock::now();
  const Extent roi = parse_extent(a.roi);
  const double rd = parse_length(a.rd).value;
  const double spot = parse_length(a.spot).value;
  const double t_eval = parse_time(a.t_eval);
  const double pixel = parse_length(a.pixel).value;
  if (!(rd > 0.0) || !(pixel > 0.0) || !(t_eval > 0.0))
    throw CommandError(kUsage, "--rd, --pixel and --t-eval must be positive");

  const ScanPlan plan = plan_triangular_grid(Rect{0.0, 0.0, roi.width, roi.height}, rd, spot);
  const PlateSpec plate = PlateSpec::stainless_316l();
  const double fwhm = fwhm_diameter(plate, t_eval);

  Grid2D grid;
  grid.dx = grid.dy = pixel;
  grid.n_x = static_cast<std::size_t>(std::floor(roi.width / pixel + 1e-9)) + 1;
  grid.n_y = static_cast<std::size_t>(std::floor(roi.height / pixel + 1e-9)) + 1;
  HomogeneityReport report;
  double erosion = fwhm;
  try {
    report = homogeneity_check(plan, GaussianFootprint{fwhm}, grid);
  } catch (const DomainError&) {
    // The roi is narrower than two footprints; score the whole roi instead.
    erosion = 0.0;
    report = homogeneity_check(plan, GaussianFootprint{fwhm}, grid, 0.0);
  }

  std::cout << "roi " << format("%.4g", roi.width * 1e3) << " x " << format("%.4g", roi.height * 1e3) << " mm\n"
            << "pitch " << format("%.4g", rd * 1e3) << " mm\n"
            << "rows " << plan.rows << "\n"
            << "measurements " << plan.positions.size() << (plan.degenerate ? " (single centred spot)" : "") << "\n"
            << "footprint fwhm " << format("%.4g", fwhm * 1e3) << " mm at " << format("%.4g", t_eval * 1e3)
            << " ms\n"
            << "homogeneity cv " << format("%.4g", report.coefficient_of_variation)
            << (erosion > 0.0 ? " (interior eroded by one fwhm)" : " (whole roi, too small to erode)") << "\n"
            << "homogeneous " << (report.uniform ? "yes" : "no") << "\n";

  if (!a.out.empty()) {
    const fs::path out(a.out);
    prepare_output(out, {});
    json j;
    j["roi"] = {{"width", roi.width}, {"height", roi.height}};
    j["pitch"] = rd;
    j["spot_diameter"] = spot;
    j["rows"] = plan.rows;
    j["n_m"] = plan.positions.size();
    j["degenerate"] = plan.degenerate;
    j["positions"] = json::array();
    for (const auto& p : plan.positions) j["positions"].push_back({p.x, p.y});
    j["homogeneity"] = {{"coefficient_of_variation", report.coefficient_of_variation},
                        {"uniform", report.uniform},
                        {"footprint_fwhm", fwhm},
                        {"erosion", erosion},
                        {"pixel", pixel}};
    std::ofstream(out / "plan.json") << j.dump(2) << '\n';
    rec.outputs = {"plan.json"};
  }
  rec.config = {{"roi", a.roi}, {"rd", a.rd}, {"spot", a.spot}, {"t_eval", a.t_eval}, {"pixel", a.pixel}};
  rec.timings = {{"total_s", seconds_since(t0)}};
  return kOk;
}

// ---------------------------------------------------------------- reconstruct

struct ReconArgs {
  std::string dataset;
  std::string out;
  std::string method;
  std::string preset;
  std::optional<double> lambda21;
  std::optional<double> lambda2;
  std::string rho;
  std::optional<std::size_t> iters;
  std::string t_eval;
  std::uint64_t seed = 0;
  bool per_measurement = false;
  bool accelerate = false;
  bool balance = false;
  bool strict_2d = false;
  bool no_taper = false;
  std::size_t threads = 1;
};

// Paper value sets behind --preset; without one the desk-scale weights apply.
ReconConfig preset_config(const std::string& name) {
  if (name == "paper-sms") return ReconConfig::paper_sms();
  if (name == "paper-fft") return ReconConfig::paper_fft();
  return ReconConfig::desk();
}

int cmd_reconstruct(const ReconArgs& a, RunRecord& rec) {
  const auto t0 = Clock::now();
  std::string method = a.method;
  if (!a.preset.empty()) {
    const std::string preset_method = a.preset == "paper-sms" ? "sms" : "fft";
    if (method.empty()) method = preset_method;
    else if (method != preset_method)
      throw CommandError(kUsage, "--preset " + a.preset + " does not match --method " + method);
  }
  if (method.empty()) throw CommandError(kUsage, "--method or --preset is required");

  ReconConfig config = preset_config(a.preset);
  if (a.lambda21) config.lambda_21 = *a.lambda21;
  if (a.lambda2) config.lambda_2 = *a.lambda2;
  if (a.iters) config.n_iter = *a.iters;
  if (a.rho == "auto") {
    config.rho_mode = RhoMode::l_curve;
  } else if (!a.rho.empty()) {
    try {
      std::size_t used = 0;
      config.rho = std::stod(a.rho, &used);
      if (used != a.rho.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw CommandError(kUsage, "--rho expects a number or 'auto', got '" + a.rho + "'");
    }
  }
  if (a.balance) {
    if (config.rho_mode == RhoMode::l_curve) throw CommandError(kUsage, "--rho auto and --balance-rho exclude each other");
    config.rho_mode = RhoMode::balanced;
  }
  config.seed = a.seed;
  config.keep_per_measurement = a.per_measurement;
  config.accelerate = a.accelerate;
  config.sms_strict_2d = a.strict_2d;
  config.fft_taper = !a.no_taper;

  const fs::path in(a.dataset);
  DatasetReader reader(in);
  // Without --t-eval a preset's time applies, otherwise the dataset's own.
  double t_eval = reader.header().eval_time;
  if (!a.t_eval.empty()) t_eval = parse_time(a.t_eval);
  else if (!a.preset.empty()) t_eval = config.eval_time;
  config.eval_time = t_eval;
  config.validate();

  const auto k = reader.time_index(t_eval);
  if (!k) throw CommandError(kData, "dataset " + in.string() + " has no slice at t_eval = " +
                                        format("%.6g", t_eval * 1e3) + " ms");
  MeasurementSet data = reader.header();
  data.eval_time = t_eval;
  data.frames.reserve(reader.n_m());
  for (std::size_t m = 0; m < reader.n_m(); ++m) data.frames.push_back(reader.slice(m, *k));
  const fs::path out(a.out);
  prepare_output(out, {in});
  const double t_load = seconds_since(t0);

  Eigen::setNbThreads(static_cast<int>(a.threads));
  const auto t1 = Clock::now();
  const PsfField psf = synth_centered_psf(data.plate, data.excitation, data.grid, t_eval);
  const double t_psf = seconds_since(t1);
  const auto t2 = Clock::now();
  ReconResult result = method == "sms" ? reconstruct_sms(data, psf, config) : reconstruct_fft(data, psf, config);
  const double t_solve = seconds_since(t2);
  write_result(result, out);

  const SolveDiagnostics& d = result.diagnostics;
  rec.config = to_json(result.config);
  rec.config["method"] = method;
  if (!a.preset.empty()) rec.config["preset"] = a.preset;
  rec.inputs["dataset"] = absolute_string(in);
  rec.outputs = {"result.json", "a_rec.f64"};
  for (std::size_t m = 0; m < result.per_measurement.size(); ++m) {
    char name[32];
    std::snprintf(name, sizeof name, "a_rec_%05zu.f64", m);
    rec.outputs.push_back(name);
  }
  rec.seed = config.seed;
  rec.timings = {{"load_s", t_load}, {"psf_s", t_psf}, {"solve_s", t_solve}, {"admm_s", d.wall_time},
                 {"total_s", seconds_since(t0)}};

  std::cout << "method " << method << "\n"
            << "measurements " << data.n_m() << ", grid " << data.grid.n_x << " x " << data.grid.n_y << "\n"
            << "lambda21 " << format("%.6g", result.config.lambda_21) << ", lambda2 "
            << format("%.6g", result.config.lambda_2) << ", rho " << format("%.6g", result.config.rho)
            << (result.lcurve ? " (l-curve)" : "") << "\n"
            << "iterations " << d.iterations << "\n";
  if (!d.objective_per_iter.empty())
    std::cout << "objective " << format("%.6g", d.objective_initial) << " -> "
              << format("%.6g", d.objective_per_iter.back()) << "\n";
  if (!d.relative_primal_per_iter.empty())
    std::cout << "relative primal residual " << format("%.3g", d.relative_primal_per_iter.back()) << "\n";
  std::cout << "solve time " << format("%.3f", t_solve) << " s\n";
  return kOk;
}

// ---------------------------------------------------------------- baseline

struct BaselineArgs {
  std::string dataset;
  std::string out;
  std::string method;
  std::string reference;
  std::string freq = "0.1Hz";
  bool window = false;
};

int cmd_baseline(const BaselineArgs& a, RunRecord& rec) {
  const auto t0 = Clock::now();
  const fs::path in(a.dataset);
  DatasetReader reader(in);
  const Grid2D grid = reader.grid();
  std::vector<fs::path> inputs{in};
  json maps = json::object();
  std::vector<std::pair<std::string, Field>> fields;
  rec.inputs["dataset"] = absolute_string(in);
  rec.config = {{"method", a.method}};

  if (a.method == "diff") {
    if (a.reference.empty()) throw CommandError(kUsage, "--method diff needs --reference <dataset>");
    const fs::path ref_path(a.reference);
    DatasetReader ref(ref_path);
    inputs.push_back(ref_path);
    if (!(ref.grid() == grid) || ref.n_m() != reader.n_m())
      throw CommandError(kData, "reference dataset does not match the grid or measurement count");
    Field diff = grid.zeros();
    for (std::size_t m = 0; m < reader.n_m(); ++m)
      diff += difference_thermogram(reader.frame(m).cast<double>(), ref.frame(m).cast<double>());
    fields.emplace_back("difference", diff);
    rec.inputs["reference"] = absolute_string(ref_path);
  } else {
    if (!reader.header().time_axis)
      throw CommandError(kData, "dataset " + in.string() + " has no time axis; ppt needs the full transient");
    const double f = parse_frequency(a.freq);
    // Transients of all measurements are summed into one sequence.
    std::vector<Field> series(reader.n_t(), grid.zeros());
    for (std::size_t m = 0; m < reader.n_m(); ++m) {
      const auto slices = reader.measurement(m);
      for (std::size_t k = 0; k < slices.size(); ++k) series[k] += slices[k].cast<double>();
    }
    PptOptions opt;
    opt.half_cosine_window = a.window;
    const PptResult r = ppt(series, reader.header().time_axis->frame_rate, f, opt);
    fields.emplace_back("amplitude", r.amplitude);
    fields.emplace_back("phase", r.phase);
    rec.config["requested_frequency"] = f;
    rec.config["bin"] = r.bin;
    rec.config["bin_frequency"] = r.frequency;
    rec.config["half_cosine_window"] = a.window;
    std::cout << "ppt bin " << r.bin << " at " << format("%.6g", r.frequency) << " Hz (requested "
              << format("%.6g", f) << " Hz)\n";
  }

  const fs::path out(a.out);
  prepare_output(out, inputs);
  for (const auto& [name, field] : fields) {
    write_field_f64(field, out / (name + ".f64"));
    maps[name] = name + ".f64";
    rec.outputs.push_back(name + ".f64");
    std::cout << name << " range " << format("%.6g", field.minCoeff()) << " .. " << format("%.6g", field.maxCoeff())
              << "\n";
  }
  json j;
  j["format_version"] = kFormatVersion;
  j["method"] = a.method;
  j["grid"] = to_json(grid);
  j["maps"] = maps;
  j["config"] = rec.config;
  std::ofstream(out / "baseline.json") << j.dump(2) << '\n';
  rec.outputs.push_back("baseline.json");
  rec.timings = {{"total_s", seconds_since(t0)}};
  return kOk;
}

// ---------------------------------------------------------------- metrics

struct MetricsArgs {
  std::string recon;
  std::string map;
  std::string truth;
  std::string out;
  double valley = 0.5;
  double activation = 0.5;
};

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

int cmd_metrics(const MetricsArgs& a, RunRecord& rec) {
  const auto t0 = Clock::now();
  const LoadedMap map = load_map(a.recon, a.map);
  const DefectMap truth = read_truth(a.truth);
  if (static_cast<std::size_t>(map.values.rows()) != truth.grid.n_y ||
      static_cast<std::size_t>(map.values.cols()) != truth.grid.n_x)
    throw CommandError(kData, "map and truth grids differ");
  if (!(a.valley > 0.0 && a.valley < 1.0) || !(a.activation > 0.0 && a.activation < 1.0))
    throw CommandError(kUsage, "--valley and --activation must lie in (0, 1)");

  const SeparabilityReport sep = separability(map.values, truth, a.valley, a.activation);
  const SupportMetrics sup = support_metrics(map.values, truth, a.activation);

  json j;
  j["map"] = map.name;
  j["valley_threshold"] = a.valley;
  j["activation_threshold_frac"] = a.activation;
  j["baseline"] = sep.baseline;
  j["noise_floor"] = sep.noise_floor;
  j["support_iou"] = sup.support_iou;
  j["components"] = sup.components;
  j["localization_error"] = json::array();
  for (const auto& e : sup.localization_error) j["localization_error"].push_back(optional_json(e));
  j["pairs"] = json::array();
  for (const auto& p : sep.pairs)
    j["pairs"].push_back({{"first", p.first},
                          {"second", p.second},
                          {"gap", p.gap},
                          {"separated", p.separated},
                          {"valley_ratio", p.valley_ratio},
                          {"peak_first", p.peak_first},
                          {"peak_second", p.peak_second},
                          {"valley", p.valley}});

  const fs::path out(a.out);
  prepare_output(out, {fs::path(a.recon)});
  std::ofstream(out / "metrics.json") << j.dump(2) << '\n';

  std::cout << "support iou " << format("%.4f", sup.support_iou) << "\n";
  for (std::size_t i = 0; i < sup.localization_error.size(); ++i)
    std::cout << "defect " << i << " localization "
              << (sup.localization_error[i] ? format("%.4g", *sup.localization_error[i] * 1e3) + " mm" : "missing")
              << "\n";
  for (const auto& p : sep.pairs)
    std::cout << "pair " << p.first << "-" << p.second << " gap " << format("%.4g", p.gap * 1e3) << " mm "
              << (p.separated ? "separated" : "merged") << " valley ratio " << format("%.3f", p.valley_ratio) << "\n";

  rec.config = {{"valley_threshold", a.valley}, {"activation_threshold_frac", a.activation}, {"map", map.name}};
  rec.inputs = {{"recon", absolute_string(a.recon)}, {"truth", absolute_string(a.truth)}};
  rec.outputs = {"metrics.json"};
  rec.timings = {{"total_s", seconds_since(t0)}};
  return kOk;
}

// ---------------------------------------------------------------- render

struct RenderArgs {
  std::string input;
  std::string map;
  std::string out;
  std::string format = "pgm";
};

int cmd_render(const RenderArgs& a, RunRecord& rec) {
  const auto t0 = Clock::now();
  const LoadedMap map = load_map(a.input, a.map);
  const fs::path out(a.out);
  prepare_output(out, {fs::path(a.input)});
  const bool graymap = a.format == "pgm";
  const fs::path file = out / (map.name + (graymap ? ".pgm" : ".csv"));
  const RenderOutcome r = render_map(map.values, file, graymap ? RenderFormat::graymap : RenderFormat::delimited);
  if (r.degenerate_range) std::cerr << "warning: " << map.name << " is constant, rendered as mid-gray\n";
  std::cout << "wrote " << file.string() << "\n";
  rec.outputs = {file.filename().string()};
  if (!r.sidecar.empty()) {
    std::cout << "scale " << r.sidecar.string() << "\n";
    rec.outputs.push_back(r.sidecar.filename().string());
  }
  rec.config = {{"map", map.name}, {"format", a.format}};
  rec.inputs = {{"input", absolute_string(a.input)}};
  rec.timings = {{"total_s", seconds_since(t0)}};
  return kOk;
}

// Runs a command and writes its record to `out` on success.
template <class Fn>
int run_command(Fn&& fn, RunRecord& rec, const std::string& out) {
  const int code = fn(rec);
  if (code == kOk && !out.empty()) rec.write(out);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photothermal super-resolution reconstruction from sequential laser-spot thermography"};
  app.require_subcommand(1);
  app.set_version_flag("--version", PSR_VERSION);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Simulate a scan experiment from a scenario file");
  c_synth->add_option("scenario", synth.scenario, "Scenario file or bundled scenario name")->required();
  c_synth->add_option("-o,--out", synth.out, "Output dataset directory")->required();
  c_synth->add_flag("--defect-free", synth.defect_free, "Drop all defects (reference for difference thermograms)");
  c_synth->add_option("--seed", synth.seed, "Override the scenario seed");
  c_synth->add_option("--threads", synth.threads, "Worker cap")->check(CLI::PositiveNumber);

  PlanArgs plan;
  auto* c_plan = app.add_subcommand("plan", "Triangular scan plan and homogeneity check");
  c_plan->add_option("--roi", plan.roi, "Region of interest, e.g. 40.1x3.86mm")->required();
  c_plan->add_option("--rd", plan.rd, "Scan pitch, e.g. 0.743mm")->required();
  c_plan->add_option("--spot", plan.spot, "Spot diameter")->capture_default_str();
  c_plan->add_option("--t-eval", plan.t_eval, "Evaluation time of the footprint")->capture_default_str();
  c_plan->add_option("--pixel", plan.pixel, "Pixel pitch of the homogeneity grid")->capture_default_str();
  c_plan->add_option("-o,--out", plan.out, "Write plan.json to this directory");

  ReconArgs recon;
  auto* c_recon = app.add_subcommand("reconstruct", "Joint-sparse reconstruction of the defect map");
  c_recon->add_option("dataset", recon.dataset, "Dataset directory")->required();
  c_recon->add_option("-o,--out", recon.out, "Output directory")->required();
  c_recon->add_option("--method", recon.method, "sms or fft")->check(CLI::IsMember({"sms", "fft"}));
  c_recon->add_option("--preset", recon.preset, "paper-sms or paper-fft")
      ->check(CLI::IsMember({"paper-sms", "paper-fft"}));
  c_recon->add_option("--lambda21", recon.lambda21, "Joint-sparsity weight");
  c_recon->add_option("--lambda2", recon.lambda2, "Quadratic weight");
  c_recon->add_option("--rho", recon.rho, "ADMM penalty or 'auto' for the L-curve");
  c_recon->add_option("--iters", recon.iters, "ADMM iterations")->check(CLI::PositiveNumber);
  c_recon->add_option("--t-eval", recon.t_eval, "Evaluation time, e.g. 500ms");
  c_recon->add_option("--seed", recon.seed, "Seed of the starting iterates")->capture_default_str();
  c_recon->add_flag("--per-measurement", recon.per_measurement, "Also write each measurement's map");
  c_recon->add_flag("--accelerate", recon.accelerate, "Extrapolated ADMM with restart");
  c_recon->add_flag("--balance-rho", recon.balance, "Rescale rho to balance the residuals");
  c_recon->add_flag("--strict-2d", recon.strict_2d, "sms: exact 2-D convolution operator");
  c_recon->add_flag("--no-taper", recon.no_taper, "fft: no edge taper of the frames");
  c_recon->add_option("--threads", recon.threads, "Worker cap")->check(CLI::PositiveNumber);

  BaselineArgs base;
  auto* c_base = app.add_subcommand("baseline", "Conventional evaluation: difference thermogram or pulse phase");
  c_base->add_option("dataset", base.dataset, "Dataset directory")->required();
  c_base->add_option("-o,--out", base.out, "Output directory")->required();
  c_base->add_option("--method", base.method, "diff or ppt")->required()->check(CLI::IsMember({"diff", "ppt"}));
  c_base->add_option("--reference", base.reference, "Defect-free dataset (diff)");
  c_base->add_option("--freq", base.freq, "Frequency (ppt), e.g. 0.1 or 0.1Hz")->capture_default_str();
  c_base->add_flag("--window", base.window, "Half-cosine window before the transform");

  MetricsArgs metrics;
  auto* c_metrics = app.add_subcommand("metrics", "Score a map against the ground truth");
  c_metrics->add_option("--recon", metrics.recon, "Result or baseline directory, or a .csv map")->required();
  c_metrics->add_option("--map", metrics.map, "Map name inside the directory");
  c_metrics->add_option("--truth", metrics.truth, "truth.json of the dataset")->required();
  c_metrics->add_option("-o,--out", metrics.out, "Output directory")->required();
  c_metrics->add_option("--valley", metrics.valley, "Valley threshold")->capture_default_str();
  c_metrics->add_option("--activation", metrics.activation, "Activation threshold fraction")->capture_default_str();

  RenderArgs render;
  auto* c_render = app.add_subcommand("render", "Write a map as a graymap or delimited text");
  c_render->add_option("input", render.input, "Result or baseline directory, or a .csv map")->required();
  c_render->add_option("--map", render.map, "Map name inside the directory");
  c_render->add_option("-o,--out", render.out, "Output directory")->required();
  c_render->add_option("--format", render.format, "pgm or csv")
      ->check(CLI::IsMember({"pgm", "csv"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  RunRecord rec;
  rec.argv.assign(argv, argv + argc);
  try {
    if (c_synth->parsed()) {
      rec.command = "synth";
      return run_command([&](RunRecord& r) { return cmd_synth(synth, r); }, rec, synth.out);
    }
    if (c_plan->parsed()) {
      rec.command = "plan";
      return run_command([&](RunRecord& r) { return cmd_plan(plan, r); }, rec, plan.out);
    }
    if (c_recon->parsed()) {
      rec.command = "reconstruct";
      return run_command([&](RunRecord& r) { return cmd_reconstruct(recon, r); }, rec, recon.out);
    }
    if (c_base->parsed()) {
      rec.command = "baseline";
      return run_command([&](RunRecord& r) { return cmd_baseline(base, r); }, rec, base.out);
    }
    if (c_metrics->parsed()) {
      rec.command = "metrics";
      return run_command([&](RunRecord& r) { return cmd_metrics(metrics, r); }, rec, metrics.out);
    }
    if (c_render->parsed()) {
      rec.command = "render";
      return run_command([&](RunRecord& r) { return cmd_render(render, r); }, rec, render.out);
    }
  } catch (const CommandError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code;
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const UnitError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "error: solver diverged: " << e.what() << "\n";
    return kNumerical;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const CorruptDatasetError& e) {
    std::cerr << "error: corrupt dataset: " << e.what() << "\n";
    return kData;
  } catch (const VersionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed input: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  }
  return kUsage;
}
