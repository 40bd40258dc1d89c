#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>

#include <json.hpp>

#include "psr/dataset_io.hpp"
#include "scenario.hpp"
#include "support.hpp"
#include "units.hpp"

using namespace psr;
using namespace psr::cli;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(PSR_CLI) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// File name -> contents, run records excluded.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename() != "run.json") out[e.path().filename().string()] = slurp(e.path());
  return out;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// 24 x 16 grid, five spots, one defect.
const char* kSmallScenario = R"({
  "name": "small",
  "plate": {"material": "316L"},
  "eval_time": "500ms",
  "grid": {"n_x": 24, "n_y": 16, "fwhm_pixels": 8},
  "excitation": {"spot_diameter": "1px"},
  "illumination": "scan",
  "scan": {"roi": {"x": "4px", "y": "4px", "width": "16px", "height": "8px"}, "pitch": "8px"},
  "defects": [
    {"x": "10px", "y": "6px", "width": "2px", "height": "2px", "zeta": ZETA}
  ],
  "noise": {"snr_db": 40},
  "seed": 3
})";

std::string small_scenario(const std::string& zeta = "0.4") {
  std::string s = kSmallScenario;
  s.replace(s.find("ZETA"), 4, zeta);
  return s;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

}  // namespace

TEST_CASE("lengths need a unit") {
  CHECK(parse_length("0.743mm").value == doctest::Approx(0.743e-3));
  CHECK(parse_length("52um").value == doctest::Approx(52e-6));
  CHECK(parse_length("1.5e-3m").value == 1.5e-3);
  CHECK(parse_length(" 2 mm ").value == doctest::Approx(2e-3));
  const Length px = parse_length("8px", true);
  CHECK(px.pixels);
  CHECK(px.metres(0.5e-3) == doctest::Approx(4e-3));
  CHECK_THROWS_AS(parse_length("8px"), UnitError);
  CHECK_THROWS_AS(parse_length("0.5"), UnitError);
  CHECK_THROWS_AS(parse_length("3 furlongs"), UnitError);
  CHECK_THROWS_AS(parse_length("mm"), UnitError);
}

TEST_CASE("times, frequencies and extents") {
  CHECK(parse_time("500ms") == doctest::Approx(0.5));
  CHECK(parse_time("0.7s") == 0.7);
  CHECK_THROWS_AS(parse_time("500"), UnitError);
  CHECK_THROWS_AS(parse_time("5min"), UnitError);
  CHECK(parse_frequency("0.1") == 0.1);
  CHECK(parse_frequency("100Hz") == 100.0);
  CHECK(parse_frequency("250mHz") == doctest::Approx(0.25));
  const Extent e = parse_extent("40.1x3.86mm");
  CHECK(e.width == doctest::Approx(40.1e-3));
  CHECK(e.height == doctest::Approx(3.86e-3));
  CHECK(parse_extent("2mmx500um").height == doctest::Approx(0.5e-3));
  CHECK_THROWS_AS(parse_extent("40.1mm"), UnitError);
  CHECK_THROWS_AS(parse_extent("0x3mm"), UnitError);
}

TEST_CASE("scenario diagnostics name the line and field") {
  try {
    parse_scenario(small_scenario("-0.2"), "s.json");
    FAIL("negative zeta accepted");
  } catch (const ScenarioError& e) {
    CHECK(e.field == "/defects/0/zeta");
    CHECK(e.line == 10);
    CHECK(std::string(e.what()).find("zeta") != std::string::npos);
  }
  std::string unknown = small_scenario();
  unknown.replace(unknown.find("\"seed\""), 6, "\"sede\"");
  CHECK_THROWS_AS(parse_scenario(unknown, "s.json"), ScenarioError);
  CHECK_THROWS_AS(parse_scenario("{ \"name\": ", "s.json"), ScenarioError);
}

TEST_CASE("bundled gap sweep resolves to pixel gaps 1, 2, 4 and 8") {
  const Scenario s = load_scenario(fs::path(PSR_SCENARIO_DIR) / "pairs-gap-sweep.json");
  REQUIRE(s.defects.size() == 8);
  const double dx = s.grid.dx;
  CHECK(dx == doctest::Approx(fwhm_diameter(s.plate, 0.5) / 8.0));
  for (std::size_t p = 0; p < 4; ++p) {
    const Rect& a = s.defects[2 * p].rect;
    const Rect& b = s.defects[2 * p + 1].rect;
    CHECK((b.x - (a.x + a.width)) / dx == doctest::Approx(double(1u << p)));
  }
  const ScanPlan plan = scenario_plan(s);
  CHECK(plan.positions.size() == 24);
}

TEST_CASE("synth writes a dataset, truth and run record") {
  test::TempDir tmp("cli");
  const fs::path ds = tmp / "ds";
  REQUIRE(run("synth pairs-gap-sweep -o " + q(ds), tmp / "log") == 0);
  CHECK(fs::exists(ds / "truth.json"));
  CHECK(fs::exists(ds / "run.json"));
  const MeasurementSet m = read_dataset(ds);
  CHECK(m.n_m() == 24);
  CHECK(read_truth(ds / "truth.json").defects.size() == 8);
  const auto rec = nlohmann::json::parse(slurp(ds / "run.json"));
  CHECK(rec["command"] == "synth");
  CHECK(rec["seed"] == 1);
  CHECK(rec.contains("timings"));
}

TEST_CASE("invalid scenario exits with a usage error naming the field") {
  test::TempDir tmp("cli");
  write_text(tmp / "bad.json", small_scenario("-0.2"));
  CHECK(run("synth " + q(tmp / "bad.json") + " -o " + q(tmp / "out"), tmp / "log") == 2);
  CHECK(slurp(tmp / "log").find("/defects/0/zeta") != std::string::npos);
  CHECK_FALSE(fs::exists(tmp / "out" / "manifest.json"));
  CHECK(run("synth no-such-scenario -o " + q(tmp / "out"), tmp / "log") == 2);
}

TEST_CASE("synth is deterministic for a fixed seed") {
  test::TempDir tmp("cli");
  write_text(tmp / "s.json", small_scenario());
  REQUIRE(run("synth " + q(tmp / "s.json") + " -o " + q(tmp / "a"), tmp / "log") == 0);
  REQUIRE(run("synth " + q(tmp / "s.json") + " -o " + q(tmp / "b"), tmp / "log") == 0);
  REQUIRE(run("synth " + q(tmp / "s.json") + " -o " + q(tmp / "c") + " --seed 4", tmp / "log") == 0);
  const auto a = snapshot(tmp / "a");
  CHECK(a == snapshot(tmp / "b"));
  CHECK(a.at("frame_00000.f32") != snapshot(tmp / "c").at("frame_00000.f32"));
}

TEST_CASE("reconstruct: exit codes, outputs and determinism") {
  test::TempDir tmp("cli");
  write_text(tmp / "s.json", small_scenario());
  const fs::path ds = tmp / "ds";
  REQUIRE(run("synth " + q(tmp / "s.json") + " -o " + q(ds), tmp / "log") == 0);
  const auto before = snapshot(ds);
  const std::string common = "reconstruct " + q(ds) + " --lambda21 0.004 --lambda2 0 --rho 0.03 --iters 30 ";

  CHECK(run(common + "--method bogus -o " + q(tmp / "x"), tmp / "log") == 2);
  CHECK(run(common + "--method fft --t-eval 700ms -o " + q(tmp / "x"), tmp / "log") == 3);
  CHECK(slurp(tmp / "log").find("700") != std::string::npos);
  CHECK(run(common + "--method fft --t-eval 500 -o " + q(tmp / "x"), tmp / "log") == 2);
  CHECK(run("reconstruct " + q(tmp / "nothing") + " --method fft -o " + q(tmp / "x"), tmp / "log") == 3);
  CHECK(run("reconstruct " + q(ds) + " --method fft --rho 1e308 --iters 5 -o " + q(tmp / "x"), tmp / "log") == 4);
  CHECK(slurp(tmp / "log").find("iteration 1") != std::string::npos);
  CHECK(run(common + "--method sms -o " + q(ds), tmp / "log") == 2);

  for (const char* method : {"sms", "fft"}) {
    const fs::path a = tmp / (std::string(method) + "_a"), b = tmp / (std::string(method) + "_b");
    REQUIRE(run(common + "--method " + method + " --per-measurement -o " + q(a), tmp / "log") == 0);
    REQUIRE(run(common + "--method " + method + " --per-measurement -o " + q(b), tmp / "log") == 0);
    CHECK(snapshot(a) == snapshot(b));
    const ReconResult r = read_result(a);
    CHECK(r.method == method);
    CHECK(r.per_measurement.size() == 5);
    CHECK(r.diagnostics.iterations == 30);
    const auto rec = nlohmann::json::parse(slurp(a / "run.json"));
    CHECK(rec["command"] == "reconstruct");
    CHECK(rec["config"]["lambda_21"] == 0.004);
  }
  CHECK(snapshot(ds) == before);
}

TEST_CASE("reconstruct presets and the L-curve") {
  test::TempDir tmp("cli");
  write_text(tmp / "s.json", small_scenario());
  const fs::path ds = tmp / "ds";
  REQUIRE(run("synth " + q(tmp / "s.json") + " -o " + q(ds), tmp / "log") == 0);
  REQUIRE(run("reconstruct " + q(ds) + " --preset paper-sms --iters 10 -o " + q(tmp / "p"), tmp / "log") == 0);
  const ReconResult p = read_result(tmp / "p");
  CHECK(p.method == "sms");
  CHECK(p.config.lambda_21 == 1570.0);
  CHECK(p.config.lambda_2 == 100.0);
  CHECK(p.config.rho == 16.0);

  REQUIRE(run("reconstruct " + q(ds) + " --method fft --rho auto --iters 20 -o " + q(tmp / "l"), tmp / "log") == 0);
  const ReconResult l = read_result(tmp / "l");
  REQUIRE(l.lcurve.has_value());
  CHECK(l.lcurve->points.size() == default_rho_candidates().size());
  CHECK(l.config.rho == l.lcurve->rho);

  REQUIRE(run("reconstruct " + q(ds) + " --method sms --iters 10 -o " + q(tmp / "d"), tmp / "log") == 0);
  const ReconResult d = read_result(tmp / "d");
  CHECK(d.config.lambda_21 == 0.004);
  CHECK(d.config.lambda_2 == 0.0);
  CHECK(d.config.rho == 0.03);
}

TEST_CASE("plan reports rows, measurements and homogeneity") {
  test::TempDir tmp("cli");
  REQUIRE(run("plan --roi 40.1x3.86mm --rd 0.743mm -o " + q(tmp / "p"), tmp / "log") == 0);
  const std::string out = slurp(tmp / "log");
  CHECK(out.find("rows 7") != std::string::npos);
  CHECK(out.find("measurements 378") != std::string::npos);
  CHECK(out.find("homogeneity") != std::string::npos);
  const auto plan = nlohmann::json::parse(slurp(tmp / "p" / "plan.json"));
  CHECK(plan["positions"].size() == 378);
  CHECK(fs::exists(tmp / "p" / "run.json"));
  CHECK(run("plan --roi 40.1x3.86 --rd 0.743mm", tmp / "log") == 2);
  CHECK(run("plan --roi 40.1x3.86mm --rd -1mm", tmp / "log") == 2);
}

TEST_CASE("render, metrics and the difference baseline") {
  test::TempDir tmp("cli");
  write_text(tmp / "s.json", small_scenario());
  const fs::path ds = tmp / "ds", ref = tmp / "ref";
  REQUIRE(run("synth " + q(tmp / "s.json") + " -o " + q(ds), tmp / "log") == 0);
  REQUIRE(run("synth " + q(tmp / "s.json") + " --defect-free -o " + q(ref), tmp / "log") == 0);
  CHECK(read_truth(ref / "truth.json").defects.empty());
  REQUIRE(run("reconstruct " + q(ds) + " --method fft --lambda21 0.004 --lambda2 0 --rho 0.03 --iters 30 -o " +
                  q(tmp / "r"),
              tmp / "log") == 0);

  REQUIRE(run("render " + q(tmp / "r") + " -o " + q(tmp / "img"), tmp / "log") == 0);
  CHECK(fs::exists(tmp / "img" / "a_rec.pgm"));
  CHECK(slurp(tmp / "img" / "a_rec.pgm.scale.txt").find("max") != std::string::npos);
  CHECK(read_graymap(tmp / "img" / "a_rec.pgm").size() == 24 * 16);
  CHECK(fs::exists(tmp / "img" / "run.json"));
  REQUIRE(run("render " + q(tmp / "r") + " --format csv -o " + q(tmp / "csv"), tmp / "log") == 0);
  const Field csv = read_delimited(tmp / "csv" / "a_rec.csv");
  CHECK((csv == read_result(tmp / "r").a_rec).all());

  REQUIRE(run("metrics --recon " + q(tmp / "r") + " --truth " + q(ds / "truth.json") + " -o " + q(tmp / "m"),
              tmp / "log") == 0);
  const auto m = nlohmann::json::parse(slurp(tmp / "m" / "metrics.json"));
  CHECK(m["support_iou"].get<double>() >= 0.0);
  CHECK(m["support_iou"].get<double>() <= 1.0);
  CHECK(m["localization_error"].size() == 1);

  CHECK(run("baseline " + q(ds) + " --method diff -o " + q(tmp / "d"), tmp / "log") == 2);
  REQUIRE(run("baseline " + q(ds) + " --method diff --reference " + q(ref) + " -o " + q(tmp / "d"), tmp / "log") == 0);
  CHECK(fs::exists(tmp / "d" / "difference.f64"));
  CHECK(run("baseline " + q(ds) + " --method ppt -o " + q(tmp / "p"), tmp / "log") == 3);
}

TEST_CASE("pulse phase baseline on a short homogeneous transient") {
  test::TempDir tmp("cli");
  write_text(tmp / "h.json", R"({
    "name": "series",
    "plate": {"material": "316L"},
    "eval_time": "500ms",
    "grid": {"n_x": 20, "n_y": 16, "fwhm_pixels": 8},
    "excitation": {"frame_rate": "4Hz"},
    "illumination": "homogeneous",
    "defects": [{"x": "8px", "y": "6px", "width": "3px", "height": "3px", "zeta": 0.5}],
    "series": {"duration": "10s"},
    "seed": 2
  })");
  REQUIRE(run("synth " + q(tmp / "h.json") + " -o " + q(tmp / "ds"), tmp / "log") == 0);
  const DatasetReader reader(tmp / "ds");
  CHECK(reader.n_t() == 40);
  REQUIRE(run("baseline " + q(tmp / "ds") + " --method ppt --freq 0.1 -o " + q(tmp / "p"), tmp / "log") == 0);
  CHECK(slurp(tmp / "log").find("0.1 Hz") != std::string::npos);
  CHECK(fs::exists(tmp / "p" / "amplitude.f64"));
  CHECK(fs::exists(tmp / "p" / "phase.f64"));
  CHECK(fs::exists(tmp / "p" / "run.json"));
  CHECK(run("baseline " + q(tmp / "ds") + " --method ppt --freq 3Hz -o " + q(tmp / "q"), tmp / "log") == 2);
  REQUIRE(run("render " + q(tmp / "p") + " --map phase -o " + q(tmp / "img"), tmp / "log") == 0);
  CHECK(fs::exists(tmp / "img" / "phase.pgm"));
}

TEST_CASE("help and unknown commands") {
  test::TempDir tmp("cli");
  CHECK(run("--help", tmp / "log") == 0);
  CHECK(run("frobnicate", tmp / "log") == 2);
  CHECK(run("", tmp / "log") == 2);
}
