#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "psr/phantom.hpp"
#include "psr/solver_core.hpp"

namespace psr {

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";

// Dataset directory layout:
//   manifest.json       structured description, see docs/FORMAT.md
//   frame_NNNNN.f32     one file per measurement, little-endian float32,
//                       row-major with x fastest; [n_t][n_y][n_x] when the
//                       manifest carries a time axis, [n_y][n_x] otherwise
nlohmann::json write_dataset(const MeasurementSet& set, const std::filesystem::path& dir);
MeasurementSet read_dataset(const std::filesystem::path& dir);

// Streaming access: the manifest and payload sizes are checked on open, frames
// are loaded one measurement at a time.
class DatasetReader {
 public:
  explicit DatasetReader(const std::filesystem::path& dir);

  const nlohmann::json& manifest() const { return manifest_; }
  std::size_t n_m() const { return files_.size(); }
  const Grid2D& grid() const { return header_.grid; }
  std::size_t n_t() const { return n_t_; }
  // All slices of measurement m ([n_t] or a single frame).
  std::vector<FieldF> measurement(std::size_t m) const;
  // Slice of measurement m at the manifest's eval_time.
  FieldF frame(std::size_t m) const;
  // Slice k of measurement m; only that frame is read.
  FieldF slice(std::size_t m, std::size_t k) const;
  // Index of the sample at time t (1e-9 relative match), if any.
  std::optional<std::size_t> time_index(double t) const;
  std::size_t eval_index() const { return eval_index_; }
  // Metadata without any payload.
  const MeasurementSet& header() const { return header_; }

 private:
  std::filesystem::path dir_;
  nlohmann::json manifest_;
  std::vector<std::string> files_;
  std::size_t n_t_ = 1;
  std::size_t eval_index_ = 0;
  MeasurementSet header_;
};

// Ground-truth sidecar for synthetic datasets.
void write_truth(const DefectMap& truth, const std::filesystem::path& path);
DefectMap read_truth(const std::filesystem::path& path);

// Reconstruction output: result.json (config, diagnostics) + a_rec.f64 and,
// optionally, a_rec_NNNNN.f64 per measurement (little-endian float64).
void write_result(const ReconResult& result, const std::filesystem::path& dir);
ReconResult read_result(const std::filesystem::path& dir);

void write_field_f64(const Field& f, const std::filesystem::path& path);
Field read_field_f64(const std::filesystem::path& path, const Grid2D& grid);

enum class RenderFormat { graymap, delimited };

struct RenderOutcome {
  bool degenerate_range = false;
  double min = 0.0;
  double max = 0.0;
  std::filesystem::path sidecar;
};

// graymap: 8-bit binary PGM normalised min -> 0, max -> 255 with the scale in
// "<path>.scale.txt"; delimited: comma-separated rows at full precision.
RenderOutcome render_map(const Field& field, const std::filesystem::path& path, RenderFormat format);
Field read_delimited(const std::filesystem::path& path);
// 8-bit PGM pixels, row-major.
std::vector<unsigned char> read_graymap(const std::filesystem::path& path, std::size_t* width = nullptr,
                                        std::size_t* height = nullptr);

nlohmann::json to_json(const PlateSpec& p);
nlohmann::json to_json(const ReconConfig& c);
nlohmann::json to_json(const SolveDiagnostics& d);
nlohmann::json to_json(const Grid2D& g);
Grid2D grid_from_json(const nlohmann::json& j);
ReconConfig config_from_json(const nlohmann::json& j);
const char* rho_mode_name(RhoMode m);
RhoMode rho_mode_from_name(const std::string& name);

}  // namespace psr
