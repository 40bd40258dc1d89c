#include "scenario.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <map>
#include <sstream>

#include "units.hpp"

namespace psr::cli {

using nlohmann::json;

ScenarioError::ScenarioError(std::string origin_, int line_, std::string field_, const std::string& what)
    : std::runtime_error(origin_ + (line_ > 0 ? ":" + std::to_string(line_) : std::string()) +
                         (field_.empty() ? std::string() : ": field " + field_) + ": " + what),
      origin(std::move(origin_)),
      line(line_),
      field(std::move(field_)) {}

namespace {

// Line of every value in an already validated JSON text, keyed by pointer.
class LineIndex {
 public:
  explicit LineIndex(const std::string& text) : s_(text) {
    value("");
  }
  int line(const std::string& pointer) const {
    auto it = lines_.find(pointer);
    return it == lines_.end() ? 0 : it->second;
  }

 private:
  void ws() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) {
      if (s_[i_] == '\n') ++line_;
      ++i_;
    }
  }
  std::string string() {
    std::string out;
    ++i_;
    while (i_ < s_.size() && s_[i_] != '"') {
      if (s_[i_] == '\\') ++i_;
      if (i_ < s_.size()) out += s_[i_++];
    }
    ++i_;
    return out;
  }
  void value(const std::string& ptr) {
    ws();
    lines_[ptr] = line_;
    if (i_ >= s_.size()) return;
    if (s_[i_] == '{') {
      ++i_;
      for (;;) {
        ws();
        if (i_ >= s_.size() || s_[i_] == '}') break;
        if (s_[i_] == ',') { ++i_; continue; }
        const std::string key = string();
        ws();
        ++i_;  // ':'
        value(ptr + "/" + key);
      }
      ++i_;
    } else if (s_[i_] == '[') {
      ++i_;
      for (std::size_t k = 0;; ++k) {
        ws();
        if (i_ >= s_.size() || s_[i_] == ']') break;
        if (s_[i_] == ',') { ++i_; --k; continue; }
        value(ptr + "/" + std::to_string(k));
      }
      ++i_;
    } else if (s_[i_] == '"') {
      string();
    } else {
      while (i_ < s_.size() && s_[i_] != ',' && s_[i_] != ']' && s_[i_] != '}' &&
             !std::isspace(static_cast<unsigned char>(s_[i_])))
        ++i_;
    }
  }

  const std::string& s_;
  std::size_t i_ = 0;
  int line_ = 1;
  std::map<std::string, int> lines_;
};

class Reader {
 public:
  Reader(const std::string& text, std::string origin) : origin_(std::move(origin)), index_(text) {}

  [[noreturn]] void fail(const std::string& ptr, const std::string& what) const {
    throw ScenarioError(origin_, index_.line(ptr), ptr, what);
  }

  void allow(const json& obj, const std::string& ptr, std::initializer_list<const char*> keys) const {
    if (!obj.is_object()) fail(ptr, "expected an object");
    for (const auto& [k, v] : obj.items()) {
      bool known = false;
      for (const char* key : keys) known = known || k == key;
      if (!known) fail(ptr + "/" + k, "unknown field");
    }
  }

  const json* find(const json& obj, const std::string& key) const {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
  }

  const json& need(const json& obj, const std::string& ptr, const std::string& key) const {
    const json* v = find(obj, key);
    if (!v) fail(ptr + "/" + key, "missing required field");
    return *v;
  }

  double number(const json& v, const std::string& ptr) const {
    if (!v.is_number()) fail(ptr, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(ptr, "must be finite");
    return d;
  }

  double positive(const json& v, const std::string& ptr) const {
    const double d = number(v, ptr);
    if (!(d > 0.0)) fail(ptr, "must be positive, got " + v.dump());
    return d;
  }

  std::size_t count(const json& v, const std::string& ptr) const {
    if (!v.is_number_unsigned() || v.get<std::size_t>() == 0) fail(ptr, "expected a positive integer");
    return v.get<std::size_t>();
  }

  template <class Fn>
  auto with_units(const json& v, const std::string& ptr, Fn&& fn) const {
    if (!v.is_string()) fail(ptr, "expected a string with a unit, e.g. \"0.5mm\" or \"500ms\"");
    try {
      return fn(v.get<std::string>());
    } catch (const UnitError& e) {
      fail(ptr, e.what());
    }
  }

  Length length(const json& v, const std::string& ptr, bool allow_pixels) const {
    return with_units(v, ptr, [&](const std::string& s) { return parse_length(s, allow_pixels); });
  }
  double time(const json& v, const std::string& ptr) const {
    return with_units(v, ptr, [](const std::string& s) { return parse_time(s); });
  }
  double frequency(const json& v, const std::string& ptr) const {
    if (v.is_number()) return positive(v, ptr);
    return with_units(v, ptr, [](const std::string& s) { return parse_frequency(s); });
  }

 private:
  std::string origin_;
  LineIndex index_;
};

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    // Byte offset to line number.
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    int line = 1;
    for (std::size_t i = 0; i + 1 < upto; ++i) line += text[i] == '\n';
    throw ScenarioError(origin, line, "", std::string("syntax error: ") + e.what());
  }
  const Reader r(text, origin);
  r.allow(root, "", {"name", "grid", "plate", "excitation", "eval_time", "illumination", "scan", "defects",
                     "noise", "seed", "series"});

  Scenario s;
  if (const json* name = r.find(root, "name")) {
    if (!name->is_string()) r.fail("/name", "expected a string");
    s.name = name->get<std::string>();
  }

  if (const json* plate = r.find(root, "plate")) {
    r.allow(*plate, "/plate", {"material", "thickness", "diffusivity", "conductivity", "density", "heat_capacity",
                               "reflection_coeff"});
    if (const json* m = r.find(*plate, "material")) {
      if (!m->is_string() || m->get<std::string>() != "316L") r.fail("/plate/material", "only \"316L\" is known");
    }
    if (const json* v = r.find(*plate, "thickness")) s.plate.thickness = r.length(*v, "/plate/thickness", false).value;
    if (const json* v = r.find(*plate, "diffusivity")) s.plate.diffusivity = r.positive(*v, "/plate/diffusivity");
    if (const json* v = r.find(*plate, "conductivity")) s.plate.conductivity = r.positive(*v, "/plate/conductivity");
    if (const json* v = r.find(*plate, "density")) s.plate.density = r.positive(*v, "/plate/density");
    if (const json* v = r.find(*plate, "heat_capacity")) s.plate.heat_capacity = r.positive(*v, "/plate/heat_capacity");
    if (const json* v = r.find(*plate, "reflection_coeff")) {
      s.plate.reflection_coeff = r.number(*v, "/plate/reflection_coeff");
      if (s.plate.reflection_coeff < 0.0 || s.plate.reflection_coeff > 1.0)
        r.fail("/plate/reflection_coeff", "must lie in [0, 1]");
    }
  }

  s.eval_time = r.time(r.need(root, "", "eval_time"), "/eval_time");
  if (!(s.eval_time > 0.0)) r.fail("/eval_time", "must be positive");

  const json& grid = r.need(root, "", "grid");
  r.allow(grid, "/grid", {"n_x", "n_y", "pixel", "fwhm_pixels"});
  s.grid.n_x = r.count(r.need(grid, "/grid", "n_x"), "/grid/n_x");
  s.grid.n_y = r.count(r.need(grid, "/grid", "n_y"), "/grid/n_y");
  const json* pixel = r.find(grid, "pixel");
  const json* fwhm_px = r.find(grid, "fwhm_pixels");
  if ((pixel != nullptr) == (fwhm_px != nullptr)) r.fail("/grid", "give exactly one of \"pixel\" or \"fwhm_pixels\"");
  if (pixel) {
    s.grid.dx = r.length(*pixel, "/grid/pixel", false).value;
    if (!(s.grid.dx > 0.0)) r.fail("/grid/pixel", "must be positive");
  } else {
    s.grid.dx = fwhm_diameter(s.plate, s.eval_time) / r.positive(*fwhm_px, "/grid/fwhm_pixels");
  }
  s.grid.dy = s.grid.dx;
  const double px = s.grid.dx;

  if (const json* ex = r.find(root, "excitation")) {
    r.allow(*ex, "/excitation", {"pulse_duration", "peak_power", "frame_rate", "spot_diameter"});
    if (const json* v = r.find(*ex, "pulse_duration")) {
      s.excitation.pulse_duration = r.time(*v, "/excitation/pulse_duration");
      if (!(s.excitation.pulse_duration > 0.0)) r.fail("/excitation/pulse_duration", "must be positive");
    }
    if (const json* v = r.find(*ex, "peak_power")) s.excitation.peak_power = r.positive(*v, "/excitation/peak_power");
    if (const json* v = r.find(*ex, "frame_rate")) s.excitation.frame_rate = r.frequency(*v, "/excitation/frame_rate");
    if (const json* v = r.find(*ex, "spot_diameter")) {
      s.spot_diameter = r.length(*v, "/excitation/spot_diameter", true).metres(px);
      if (s.spot_diameter < 0.0) r.fail("/excitation/spot_diameter", "must not be negative");
    }
  }

  if (const json* il = r.find(root, "illumination")) {
    if (*il == "scan") s.illumination = Illumination::scan;
    else if (*il == "homogeneous") s.illumination = Illumination::homogeneous;
    else r.fail("/illumination", "expected \"scan\" or \"homogeneous\"");
  }

  auto rect = [&](const json& obj, const std::string& ptr, std::initializer_list<const char*> extra) {
    std::vector<const char*> keys{"x", "y", "width", "height"};
    keys.insert(keys.end(), extra.begin(), extra.end());
    if (!obj.is_object()) r.fail(ptr, "expected an object");
    for (const auto& [k, v] : obj.items()) {
      bool known = false;
      for (const char* key : keys) known = known || k == key;
      if (!known) r.fail(ptr + "/" + k, "unknown field");
    }
    Rect out;
    out.x = r.length(r.need(obj, ptr, "x"), ptr + "/x", true).metres(s.grid.dx);
    out.y = r.length(r.need(obj, ptr, "y"), ptr + "/y", true).metres(s.grid.dy);
    out.width = r.length(r.need(obj, ptr, "width"), ptr + "/width", true).metres(s.grid.dx);
    out.height = r.length(r.need(obj, ptr, "height"), ptr + "/height", true).metres(s.grid.dy);
    if (!(out.width > 0.0)) r.fail(ptr + "/width", "must be positive");
    if (!(out.height > 0.0)) r.fail(ptr + "/height", "must be positive");
    return out;
  };

  if (s.illumination == Illumination::scan) {
    const json& scan = r.need(root, "", "scan");
    r.allow(scan, "/scan", {"roi", "pitch"});
    s.roi = rect(r.need(scan, "/scan", "roi"), "/scan/roi", {});
    s.pitch = r.length(r.need(scan, "/scan", "pitch"), "/scan/pitch", true).metres(px);
    if (!(s.pitch > 0.0)) r.fail("/scan/pitch", "must be positive");
  } else if (r.find(root, "scan")) {
    r.fail("/scan", "not used with homogeneous illumination");
  }

  if (const json* defects = r.find(root, "defects")) {
    if (!defects->is_array()) r.fail("/defects", "expected an array");
    for (std::size_t i = 0; i < defects->size(); ++i) {
      const std::string ptr = "/defects/" + std::to_string(i);
      const json& d = (*defects)[i];
      DefectRect dr;
      dr.rect = rect(d, ptr, {"zeta"});
      dr.zeta = r.number(r.need(d, ptr, "zeta"), ptr + "/zeta");
      if (dr.zeta < 0.0 || dr.zeta >= 1.0)
        r.fail(ptr + "/zeta", "must lie in [0, 1), got " + d.at("zeta").dump());
      s.defects.push_back(dr);
    }
  }

  if (const json* noise = r.find(root, "noise")) {
    r.allow(*noise, "/noise", {"snr_db", "sigma"});
    const json* snr = r.find(*noise, "snr_db");
    const json* sigma = r.find(*noise, "sigma");
    if (snr && sigma) r.fail("/noise", "give either \"snr_db\" or \"sigma\"");
    if (snr) s.snr_db = r.number(*snr, "/noise/snr_db");
    if (sigma) {
      s.noise_sigma = r.number(*sigma, "/noise/sigma");
      if (s.noise_sigma < 0.0) r.fail("/noise/sigma", "must not be negative");
    }
  }

  if (const json* seed = r.find(root, "seed")) {
    if (!seed->is_number_unsigned()) r.fail("/seed", "expected a non-negative integer");
    s.seed = seed->get<std::uint64_t>();
  }

  if (const json* series = r.find(root, "series")) {
    r.allow(*series, "/series", {"duration"});
    const double duration = r.time(r.need(*series, "/series", "duration"), "/series/duration");
    const auto n_t = static_cast<std::size_t>(std::llround(duration * s.excitation.frame_rate));
    if (n_t < 2) r.fail("/series/duration", "shorter than two frames");
    std::size_t k_eval = n_t;
    for (std::size_t k = 1; k <= n_t; ++k) {
      const double t = static_cast<double>(k) / s.excitation.frame_rate;
      s.times.push_back(t);
      if (std::abs(t - s.eval_time) <= 1e-9 * s.eval_time) k_eval = k - 1;
    }
    if (k_eval == n_t) r.fail("/eval_time", "is not a frame time of the series");
    s.eval_time = s.times[k_eval];
  } else if (s.illumination == Illumination::homogeneous) {
    s.times = {s.eval_time};
  }

  json& j = s.resolved;
  j["name"] = s.name;
  j["grid"] = {{"n_x", s.grid.n_x}, {"n_y", s.grid.n_y}, {"dx", s.grid.dx}, {"dy", s.grid.dy}};
  j["eval_time"] = s.eval_time;
  j["illumination"] = s.illumination == Illumination::scan ? "scan" : "homogeneous";
  if (s.illumination == Illumination::scan)
    j["scan"] = {{"roi", {{"x", s.roi.x}, {"y", s.roi.y}, {"width", s.roi.width}, {"height", s.roi.height}}},
                 {"pitch", s.pitch}};
  j["spot_diameter"] = s.spot_diameter;
  j["defects"] = json::array();
  for (const auto& d : s.defects)
    j["defects"].push_back({{"x", d.rect.x}, {"y", d.rect.y}, {"width", d.rect.width}, {"height", d.rect.height},
                            {"zeta", d.zeta}});
  if (s.snr_db) j["noise"] = {{"snr_db", *s.snr_db}};
  else j["noise"] = {{"sigma", s.noise_sigma}};
  j["seed"] = s.seed;
  j["n_t"] = s.times.size();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError(path.string(), 0, "", "cannot open scenario file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.string());
}

DefectMap scenario_defects(const Scenario& s, bool defect_free) {
  if (defect_free) return DefectMap::empty(s.grid);
  return DefectMap::from_rects(s.grid, s.defects);
}

ScanPlan scenario_plan(const Scenario& s) {
  return plan_triangular_grid(s.roi, s.pitch, s.spot_diameter);
}

MeasurementSet synthesize(const Scenario& s, bool defect_free, std::size_t threads) {
  const DefectMap defects = scenario_defects(s, defect_free);
  ForwardOptions options;
  options.snr_db = s.snr_db;
  options.threads = threads;
  options.times = s.times;
  options.frame_rate = s.times.empty() ? 0.0 : s.excitation.frame_rate;
  if (s.illumination == Illumination::homogeneous)
    return simulate_homogeneous(s.plate, s.excitation, defects, s.eval_time, s.noise_sigma, s.seed, options);
  return forward_simulate(s.plate, s.excitation, scenario_plan(s), defects, s.eval_time, s.noise_sigma, s.seed,
                          options);
}

}  // namespace psr::cli
