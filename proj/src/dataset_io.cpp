#include "psr/dataset_io.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>

namespace psr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <class T>
void to_little_endian(T* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < n; ++i) {
      unsigned char* b = reinterpret_cast<unsigned char*>(data + i);
      std::reverse(b, b + sizeof(T));
    }
  } else {
    (void)data;
    (void)n;
  }
}

template <class T>
void write_raw(const fs::path& path, std::vector<T> buf) {
  to_little_endian(buf.data(), buf.size());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(T)));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

template <class T>
std::vector<T> read_raw(const fs::path& path, std::size_t count) {
  std::error_code ec;
  if (!fs::exists(path, ec)) throw CorruptDatasetError(path.filename().string(), "payload file missing");
  const auto size = fs::file_size(path, ec);
  if (ec) throw CorruptDatasetError(path.filename().string(), "cannot stat payload");
  if (size != count * sizeof(T))
    throw CorruptDatasetError(path.filename().string(), "payload holds " + std::to_string(size) +
                                                             " bytes, manifest declares " +
                                                             std::to_string(count * sizeof(T)));
  std::vector<T> buf(count);
  std::ifstream in(path, std::ios::binary);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * sizeof(T)));
  if (!in) throw CorruptDatasetError(path.filename().string(), "short read");
  to_little_endian(buf.data(), buf.size());
  return buf;
}

void check_payload_size(const fs::path& path, std::uintmax_t expected) {
  std::error_code ec;
  if (!fs::exists(path, ec)) throw CorruptDatasetError(path.filename().string(), "payload file missing");
  const auto size = fs::file_size(path, ec);
  if (ec || size != expected)
    throw CorruptDatasetError(path.filename().string(), "payload holds " + std::to_string(size) +
                                                            " bytes, manifest declares " + std::to_string(expected));
}

std::string frame_name(std::size_t m) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05zu.f32", m);
  return buf;
}

// Exclusive writer lock on a dataset directory.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      if (errno == EEXIST) throw std::runtime_error("dataset directory is locked by another writer: " + dir.string());
      throw std::runtime_error("cannot create lock file in " + dir.string() + ": " + std::strerror(errno));
    }
  }
  ~DirectoryLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

json point_json(Point p) { return json::array({p.x, p.y}); }
json rect_json(const Rect& r) { return {{"x", r.x}, {"y", r.y}, {"width", r.width}, {"height", r.height}}; }
Rect rect_from(const json& j) {
  return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("width").get<double>(),
          j.at("height").get<double>()};
}

PlateSpec plate_from(const json& j) {
  PlateSpec p;
  p.thickness = j.at("thickness").get<double>();
  p.diffusivity = j.at("diffusivity").get<double>();
  p.conductivity = j.at("conductivity").get<double>();
  p.density = j.at("density").get<double>();
  p.heat_capacity = j.at("heat_capacity").get<double>();
  p.reflection_coeff = j.at("reflection_coeff").get<double>();
  return p;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CorruptDatasetError(path.filename().string(), "cannot open");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw CorruptDatasetError(path.filename().string(), e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

std::vector<float> flatten(const FieldF& f) { return {f.data(), f.data() + f.size()}; }

}  // namespace

json to_json(const Grid2D& g) { return {{"n_x", g.n_x}, {"n_y", g.n_y}, {"dx", g.dx}, {"dy", g.dy}}; }

Grid2D grid_from_json(const json& j) {
  Grid2D g{j.at("n_x").get<std::size_t>(), j.at("n_y").get<std::size_t>(), j.at("dx").get<double>(),
           j.at("dy").get<double>()};
  g.validate();
  return g;
}

json to_json(const PlateSpec& p) {
  return {{"thickness", p.thickness},         {"diffusivity", p.diffusivity},
          {"conductivity", p.conductivity},   {"density", p.density},
          {"heat_capacity", p.heat_capacity}, {"reflection_coeff", p.reflection_coeff}};
}

const char* rho_mode_name(RhoMode m) {
  switch (m) {
    case RhoMode::fixed: return "fixed";
    case RhoMode::l_curve: return "l_curve";
    case RhoMode::balanced: return "balanced";
  }
  return "fixed";
}

RhoMode rho_mode_from_name(const std::string& name) {
  if (name == "fixed") return RhoMode::fixed;
  if (name == "l_curve") return RhoMode::l_curve;
  if (name == "balanced") return RhoMode::balanced;
  throw ParameterError("unknown rho_mode '" + name + "'");
}

json to_json(const ReconConfig& c) {
  return {{"lambda_21", c.lambda_21},
          {"lambda_2", c.lambda_2},
          {"rho", c.rho},
          {"n_iter", c.n_iter},
          {"eval_time", c.eval_time},
          {"rho_mode", rho_mode_name(c.rho_mode)},
          {"rho_candidates", c.rho_candidates},
          {"rho_balance_mu", c.rho_balance_mu},
          {"rho_balance_tau", c.rho_balance_tau},
          {"rho_balance_interval", c.rho_balance_interval},
          {"accelerate", c.accelerate},
          {"restart_eta", c.restart_eta},
          {"seed", c.seed},
          {"early_stop", c.early_stop},
          {"early_stop_tol", c.early_stop_tol},
          {"track_objective", c.track_objective},
          {"keep_per_measurement", c.keep_per_measurement},
          {"sms_strict_2d", c.sms_strict_2d},
          {"sms_memory_cap_bytes", c.sms_memory_cap_bytes},
          {"sms_cg_tol", c.sms_cg_tol},
          {"fft_taper", c.fft_taper}};
}

ReconConfig config_from_json(const json& j) {
  ReconConfig c;
  c.lambda_21 = j.value("lambda_21", c.lambda_21);
  c.lambda_2 = j.value("lambda_2", c.lambda_2);
  c.rho = j.value("rho", c.rho);
  c.n_iter = j.value("n_iter", c.n_iter);
  c.eval_time = j.value("eval_time", c.eval_time);
  c.rho_mode = rho_mode_from_name(j.value("rho_mode", std::string("fixed")));
  c.rho_candidates = j.value("rho_candidates", c.rho_candidates);
  c.rho_balance_mu = j.value("rho_balance_mu", c.rho_balance_mu);
  c.rho_balance_tau = j.value("rho_balance_tau", c.rho_balance_tau);
  c.rho_balance_interval = j.value("rho_balance_interval", c.rho_balance_interval);
  c.accelerate = j.value("accelerate", c.accelerate);
  c.restart_eta = j.value("restart_eta", c.restart_eta);
  c.seed = j.value("seed", c.seed);
  c.early_stop = j.value("early_stop", c.early_stop);
  c.early_stop_tol = j.value("early_stop_tol", c.early_stop_tol);
  c.track_objective = j.value("track_objective", c.track_objective);
  c.keep_per_measurement = j.value("keep_per_measurement", c.keep_per_measurement);
  c.sms_strict_2d = j.value("sms_strict_2d", c.sms_strict_2d);
  c.sms_memory_cap_bytes = j.value("sms_memory_cap_bytes", c.sms_memory_cap_bytes);
  c.sms_cg_tol = j.value("sms_cg_tol", c.sms_cg_tol);
  c.fft_taper = j.value("fft_taper", c.fft_taper);
  return c;
}

json to_json(const SolveDiagnostics& d) {
  return {{"objective_initial", d.objective_initial},
          {"objective_per_iter", d.objective_per_iter},
          {"primal_residual_per_iter", d.primal_residual_per_iter},
          {"dual_residual_per_iter", d.dual_residual_per_iter},
          {"relative_primal_per_iter", d.relative_primal_per_iter},
          {"wall_time", d.wall_time},
          {"iterations", d.iterations},
          {"early_stopped", d.early_stopped},
          {"max_imag_residue", d.max_imag_residue},
          {"factorization_fallback", d.factorization_fallback},
          {"rho_per_iter", d.rho_per_iter},
          {"rho_updates", d.rho_updates},
          {"restarts", d.restarts}};
}

json write_dataset(const MeasurementSet& set, const fs::path& dir) {
  set.validate();
  fs::create_directories(dir);
  DirectoryLock lock(dir);

  const std::size_t n_t = set.time_axis ? set.time_axis->times.size() : 1;
  json m;
  m["format_version"] = kFormatVersion;
  m["grid"] = to_json(set.grid);
  m["n_m"] = set.n_m();
  m["eval_time"] = set.eval_time;
  if (set.time_axis) {
    const auto& ts = set.time_axis->times;
    const auto it = std::find(ts.begin(), ts.end(), set.eval_time);
    if (it == ts.end()) throw ParameterError("eval_time is not a sample of the time axis");
    m["time_axis"] = {{"n_t", n_t},
                      {"frame_rate", set.time_axis->frame_rate},
                      {"times", ts},
                      {"eval_index", static_cast<std::size_t>(it - ts.begin())}};
  }
  m["plate"] = to_json(set.plate);
  m["excitation"] = {{"pulse_duration", set.excitation.pulse_duration},
                     {"peak_power", set.excitation.peak_power},
                     {"frame_rate", set.excitation.frame_rate},
                     {"spot_diameter", set.excitations.spot_diameter}};
  json positions = json::array();
  for (const auto& p : set.excitations.positions) positions.push_back(point_json(p));
  m["scan"] = {{"pitch", set.excitations.pitch},
               {"rows", set.excitations.rows},
               {"roi", rect_json(set.excitations.roi)},
               {"degenerate", set.excitations.degenerate},
               {"positions", positions}};
  m["noise_sigma"] = set.noise_sigma;
  m["provenance"] = {{"seed", set.seed}, {"generator", set.provenance}};
  m["payload"] = {{"dtype", "float32"}, {"byte_order", "little"}, {"layout", "row-major, x fastest"}};

  json files = json::array();
  for (std::size_t i = 0; i < set.n_m(); ++i) {
    const std::string name = frame_name(i);
    std::vector<float> buf;
    if (set.time_axis) {
      buf.reserve(n_t * set.grid.size());
      for (const auto& f : set.series[i]) buf.insert(buf.end(), f.data(), f.data() + f.size());
    } else {
      buf = flatten(set.frames[i]);
    }
    write_raw(dir / name, std::move(buf));
    files.push_back(name);
  }
  m["files"] = files;
  write_json(dir / kManifestName, m);
  return m;
}

DatasetReader::DatasetReader(const fs::path& dir) : dir_(dir) {
  const fs::path mpath = dir / kManifestName;
  if (!fs::exists(mpath)) throw CorruptDatasetError(kManifestName, "manifest missing in " + dir.string());
  manifest_ = read_json(mpath);
  const json& m = manifest_;
  if (!m.contains("format_version") || !m["format_version"].is_number_integer())
    throw CorruptDatasetError(kManifestName, "format_version missing");
  const int version = m["format_version"].get<int>();
  if (version != kFormatVersion)
    throw VersionError("unsupported dataset format_version " + std::to_string(version) + " (reader supports " +
                       std::to_string(kFormatVersion) + ")");
  try {
    header_.grid = grid_from_json(m.at("grid"));
    const std::size_t n_m = m.at("n_m").get<std::size_t>();
    header_.eval_time = m.at("eval_time").get<double>();
    if (m.contains("time_axis")) {
      const json& ta = m["time_axis"];
      TimeAxis axis;
      axis.frame_rate = ta.at("frame_rate").get<double>();
      axis.times = ta.at("times").get<std::vector<double>>();
      n_t_ = ta.at("n_t").get<std::size_t>();
      if (axis.times.size() != n_t_) throw CorruptDatasetError(kManifestName, "time_axis.times length differs from n_t");
      eval_index_ = ta.at("eval_index").get<std::size_t>();
      if (eval_index_ >= n_t_) throw CorruptDatasetError(kManifestName, "time_axis.eval_index out of range");
      header_.time_axis = std::move(axis);
    }
    header_.plate = plate_from(m.at("plate"));
    const json& ex = m.at("excitation");
    header_.excitation.pulse_duration = ex.at("pulse_duration").get<double>();
    header_.excitation.peak_power = ex.at("peak_power").get<double>();
    header_.excitation.frame_rate = ex.at("frame_rate").get<double>();
    header_.excitations.spot_diameter = ex.at("spot_diameter").get<double>();
    const json& scan = m.at("scan");
    header_.excitations.pitch = scan.at("pitch").get<double>();
    header_.excitations.rows = scan.at("rows").get<std::size_t>();
    header_.excitations.roi = rect_from(scan.at("roi"));
    header_.excitations.degenerate = scan.value("degenerate", false);
    for (const auto& p : scan.at("positions")) header_.excitations.positions.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    header_.noise_sigma = m.value("noise_sigma", 0.0);
    const json& prov = m.at("provenance");
    header_.seed = prov.at("seed").get<std::uint64_t>();
    header_.provenance = prov.at("generator").get<std::string>();
    files_ = m.at("files").get<std::vector<std::string>>();
    if (files_.size() != n_m)
      throw CorruptDatasetError(kManifestName, "manifest declares n_m = " + std::to_string(n_m) + " but lists " +
                                                   std::to_string(files_.size()) + " payload files");
  } catch (const json::exception& e) {
    throw CorruptDatasetError(kManifestName, e.what());
  }
  for (const auto& f : files_) {
    if (f.find('/') != std::string::npos || f.find("..") != std::string::npos)
      throw CorruptDatasetError(f, "payload name escapes the dataset directory");
    check_payload_size(dir_ / f, static_cast<std::uintmax_t>(n_t_) * header_.grid.size() * sizeof(float));
  }
  // Payload files not listed by the manifest point at a mismatched n_m.
  for (const auto& entry : fs::directory_iterator(dir_)) {
    const std::string name = entry.path().filename().string();
    if (entry.path().extension() == ".f32" && std::find(files_.begin(), files_.end(), name) == files_.end())
      throw CorruptDatasetError(name, "payload file not declared in the manifest");
  }
}

std::vector<FieldF> DatasetReader::measurement(std::size_t m) const {
  if (m >= files_.size()) throw ParameterError("measurement index out of range");
  const auto ny = static_cast<Eigen::Index>(header_.grid.n_y);
  const auto nx = static_cast<Eigen::Index>(header_.grid.n_x);
  const std::size_t px = header_.grid.size();
  const std::vector<float> buf = read_raw<float>(dir_ / files_[m], n_t_ * px);
  std::vector<FieldF> out;
  out.reserve(n_t_);
  for (std::size_t k = 0; k < n_t_; ++k) out.emplace_back(Eigen::Map<const FieldF>(buf.data() + k * px, ny, nx));
  return out;
}

std::optional<std::size_t> DatasetReader::time_index(double t) const {
  if (!header_.time_axis) {
    if (std::abs(t - header_.eval_time) <= 1e-9 * std::max(1.0, std::abs(t))) return 0;
    return std::nullopt;
  }
  const auto& ts = header_.time_axis->times;
  for (std::size_t k = 0; k < ts.size(); ++k)
    if (std::abs(ts[k] - t) <= 1e-9 * std::max(1.0, std::abs(t))) return k;
  return std::nullopt;
}

FieldF DatasetReader::frame(std::size_t m) const { return slice(m, eval_index_); }

FieldF DatasetReader::slice(std::size_t m, std::size_t k) const {
  if (m >= files_.size()) throw ParameterError("measurement index out of range");
  if (k >= n_t_) throw ParameterError("time index out of range");
  const std::size_t px = header_.grid.size();
  const fs::path path = dir_ / files_[m];
  check_payload_size(path, static_cast<std::uintmax_t>(n_t_) * px * sizeof(float));
  std::vector<float> buf(px);
  std::ifstream in(path, std::ios::binary);
  in.seekg(static_cast<std::streamoff>(k * px * sizeof(float)));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(px * sizeof(float)));
  if (!in) throw CorruptDatasetError(files_[m], "short read");
  to_little_endian(buf.data(), buf.size());
  return Eigen::Map<const FieldF>(buf.data(), static_cast<Eigen::Index>(header_.grid.n_y),
                                  static_cast<Eigen::Index>(header_.grid.n_x));
}

MeasurementSet read_dataset(const fs::path& dir) {
  DatasetReader reader(dir);
  MeasurementSet set = reader.header();
  set.frames.reserve(reader.n_m());
  for (std::size_t m = 0; m < reader.n_m(); ++m) {
    if (set.time_axis) {
      auto slices = reader.measurement(m);
      set.frames.push_back(slices[reader.manifest()["time_axis"]["eval_index"].get<std::size_t>()]);
      set.series.push_back(std::move(slices));
    } else {
      set.frames.push_back(reader.frame(m));
    }
  }
  return set;
}

void write_truth(const DefectMap& truth, const fs::path& path) {
  truth.validate();
  json defects = json::array();
  for (const auto& d : truth.defects) defects.push_back({{"rect", rect_json(d.rect)}, {"zeta", d.zeta}});
  write_json(path, {{"format_version", kFormatVersion}, {"grid", to_json(truth.grid)}, {"defects", defects}});
}

DefectMap read_truth(const fs::path& path) {
  const json j = read_json(path);
  if (j.value("format_version", 0) != kFormatVersion) throw VersionError("unsupported truth format_version");
  try {
    std::vector<DefectRect> defects;
    for (const auto& d : j.at("defects")) defects.push_back({rect_from(d.at("rect")), d.at("zeta").get<double>()});
    return DefectMap::from_rects(grid_from_json(j.at("grid")), std::move(defects));
  } catch (const json::exception& e) {
    throw CorruptDatasetError(path.filename().string(), e.what());
  }
}

void write_field_f64(const Field& f, const fs::path& path) {
  write_raw(path, std::vector<double>(f.data(), f.data() + f.size()));
}

Field read_field_f64(const fs::path& path, const Grid2D& grid) {
  const std::vector<double> buf = read_raw<double>(path, grid.size());
  return Eigen::Map<const Field>(buf.data(), static_cast<Eigen::Index>(grid.n_y), static_cast<Eigen::Index>(grid.n_x));
}

void write_result(const ReconResult& result, const fs::path& dir) {
  fs::create_directories(dir);
  DirectoryLock lock(dir);
  json j;
  j["format_version"] = kFormatVersion;
  j["method"] = result.method;
  j["grid"] = to_json(result.grid);
  j["config"] = to_json(result.config);
  j["diagnostics"] = to_json(result.diagnostics);
  // Timings belong to the run record so that results are byte-reproducible.
  j["diagnostics"].erase("wall_time");
  j["a_rec"] = "a_rec.f64";
  write_field_f64(result.a_rec, dir / "a_rec.f64");
  json per = json::array();
  for (std::size_t m = 0; m < result.per_measurement.size(); ++m) {
    char name[32];
    std::snprintf(name, sizeof name, "a_rec_%05zu.f64", m);
    write_field_f64(result.per_measurement[m], dir / name);
    per.push_back(name);
  }
  j["per_measurement"] = per;
  if (result.lcurve) {
    json pts = json::array();
    for (const auto& p : result.lcurve->points)
      pts.push_back({{"rho", p.rho}, {"log_residual", p.log_residual}, {"log_solution", p.log_solution}});
    j["lcurve"] = {{"rho", result.lcurve->rho},
                   {"index", result.lcurve->index},
                   {"points", pts},
                   {"curvature", result.lcurve->curvature},
                   {"fallback", result.lcurve->fallback}};
  }
  write_json(dir / "result.json", j);
}

ReconResult read_result(const fs::path& dir) {
  const json j = read_json(dir / "result.json");
  if (j.value("format_version", 0) != kFormatVersion) throw VersionError("unsupported result format_version");
  ReconResult r;
  try {
    r.method = j.at("method").get<std::string>();
    r.grid = grid_from_json(j.at("grid"));
    r.config = config_from_json(j.at("config"));
    const json& d = j.at("diagnostics");
    r.diagnostics.objective_initial = d.value("objective_initial", 0.0);
    r.diagnostics.objective_per_iter = d.value("objective_per_iter", std::vector<double>{});
    r.diagnostics.primal_residual_per_iter = d.value("primal_residual_per_iter", std::vector<double>{});
    r.diagnostics.dual_residual_per_iter = d.value("dual_residual_per_iter", std::vector<double>{});
    r.diagnostics.relative_primal_per_iter = d.value("relative_primal_per_iter", std::vector<double>{});
    r.diagnostics.wall_time = d.value("wall_time", 0.0);
    r.diagnostics.iterations = d.value("iterations", std::size_t{0});
    r.diagnostics.early_stopped = d.value("early_stopped", false);
    r.diagnostics.max_imag_residue = d.value("max_imag_residue", 0.0);
    r.diagnostics.factorization_fallback = d.value("factorization_fallback", false);
    r.diagnostics.rho_per_iter = d.value("rho_per_iter", std::vector<double>{});
    r.diagnostics.rho_updates = d.value("rho_updates", std::size_t{0});
    r.diagnostics.restarts = d.value("restarts", std::size_t{0});
    if (j.contains("lcurve")) {
      const json& lc = j["lcurve"];
      LCurveSelection sel;
      sel.rho = lc.at("rho").get<double>();
      sel.index = lc.at("index").get<std::size_t>();
      for (const auto& p : lc.at("points"))
        sel.points.push_back(
            {p.at("rho").get<double>(), p.at("log_residual").get<double>(), p.at("log_solution").get<double>()});
      sel.curvature = lc.at("curvature").get<std::vector<double>>();
      sel.fallback = lc.at("fallback").get<bool>();
      r.lcurve = std::move(sel);
    }
    r.a_rec = read_field_f64(dir / j.at("a_rec").get<std::string>(), r.grid);
    for (const auto& name : j.value("per_measurement", json::array()))
      r.per_measurement.push_back(read_field_f64(dir / name.get<std::string>(), r.grid));
  } catch (const json::exception& e) {
    throw CorruptDatasetError("result.json", e.what());
  }
  return r;
}

RenderOutcome render_map(const Field& field, const fs::path& path, RenderFormat format) {
  if (!field.allFinite()) throw DomainError("render_map: field contains non-finite values");
  if (field.size() == 0) throw ShapeError("render_map: empty field");
  RenderOutcome out;
  out.min = field.minCoeff();
  out.max = field.maxCoeff();
  if (format == RenderFormat::delimited) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    char buf[40];
    for (Eigen::Index iy = 0; iy < field.rows(); ++iy) {
      for (Eigen::Index ix = 0; ix < field.cols(); ++ix) {
        std::snprintf(buf, sizeof buf, "%.17g", field(iy, ix));
        if (ix) f << ',';
        f << buf;
      }
      f << '\n';
    }
    return out;
  }

  out.degenerate_range = !(out.max > out.min);
  std::vector<unsigned char> pixels(static_cast<std::size_t>(field.size()));
  for (Eigen::Index i = 0; i < field.size(); ++i) {
    if (out.degenerate_range) {
      pixels[static_cast<std::size_t>(i)] = 128;
    } else {
      const double s = (field.data()[i] - out.min) / (out.max - out.min) * 255.0;
      pixels[static_cast<std::size_t>(i)] = static_cast<unsigned char>(std::lround(std::clamp(s, 0.0, 255.0)));
    }
  }
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f << "P5\n" << field.cols() << ' ' << field.rows() << "\n255\n";
    f.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  }
  out.sidecar = path;
  out.sidecar += ".scale.txt";
  std::ofstream s(out.sidecar, std::ios::trunc);
  char buf[128];
  std::snprintf(buf, sizeof buf, "min %.17g\nmax %.17g\nlevels 255\n", out.min, out.max);
  s << buf;
  if (out.degenerate_range) s << "degenerate range: constant field rendered as mid-gray 128\n";
  return out;
}

Field read_delimited(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
    if (!rows.empty() && row.size() != rows.front().size()) throw ShapeError("ragged delimited file");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return Field();
  Field f(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k) f(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  return f;
}

std::vector<unsigned char> read_graymap(const fs::path& path, std::size_t* width, std::size_t* height) {
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (!in || magic != "P5" || maxval != 255) throw CorruptDatasetError(path.filename().string(), "not an 8-bit P5 graymap");
  in.get();
  std::vector<unsigned char> px(w * h);
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!in) throw CorruptDatasetError(path.filename().string(), "truncated graymap");
  if (width) *width = w;
  if (height) *height = h;
  return px;
}

}  // namespace psr
