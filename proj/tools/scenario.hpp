#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "psr/phantom.hpp"

namespace psr::cli {

// Invalid scenario; `line` is 0 when unknown, `field` is a JSON pointer.
struct ScenarioError : std::runtime_error {
  ScenarioError(std::string origin, int line, std::string field, const std::string& what);
  std::string origin;
  int line = 0;
  std::string field;
};

enum class Illumination { scan, homogeneous };

struct Scenario {
  std::string name;
  Grid2D grid;
  PlateSpec plate;
  ExcitationTemporal excitation;
  double spot_diameter = 0.0;
  double eval_time = 0.5;
  Illumination illumination = Illumination::scan;
  Rect roi;
  double pitch = 0.0;
  std::vector<DefectRect> defects;
  std::optional<double> snr_db;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  // Sample times of the full transient; empty for a single slice.
  std::vector<double> times;
  // Resolved values in SI units.
  nlohmann::json resolved;
};

Scenario parse_scenario(const std::string& text, const std::string& origin);
Scenario load_scenario(const std::filesystem::path& path);

DefectMap scenario_defects(const Scenario& s, bool defect_free = false);
ScanPlan scenario_plan(const Scenario& s);
MeasurementSet synthesize(const Scenario& s, bool defect_free, std::size_t threads);

}  // namespace psr::cli
