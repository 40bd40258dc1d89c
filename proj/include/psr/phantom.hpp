#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "psr/grid.hpp"
#include "psr/thermal_model.hpp"

namespace psr {

struct DefectRect {
  Rect rect;
  double zeta = 0.5;
};

// Internal apparent heat sources. A pixel belongs to a rectangle when its
// centre lies inside it (closed, with a small tolerance).
struct DefectMap {
  Grid2D grid;
  Field weights;
  std::vector<DefectRect> defects;

  static DefectMap empty(const Grid2D& grid);
  static DefectMap from_rects(const Grid2D& grid, std::vector<DefectRect> defects);
  // Pixel mask of one defect.
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> mask(std::size_t i) const;
  void validate() const;
};

struct ScanPlan {
  std::vector<Point> positions;
  double spot_diameter = 0.0;
  double pitch = 0.0;  // r_d
  std::size_t rows = 0;
  Rect roi;
  bool degenerate = false;  // pitch not smaller than the roi: single centred position
};

// Equilateral-triangle lattice: rows sqrt(3)/2 r_d apart starting at the roi's
// lower edge, odd rows shifted by r_d/2, serpentine order. Lattice points may
// overshoot the roi by at most `edge_tolerance` * r_d. A pitch that is not
// smaller than both roi sides yields one position at the roi centre.
ScanPlan plan_triangular_grid(const Rect& roi, double pitch, double spot_diameter = 0.0,
                              double edge_tolerance = 1e-2);

// round(sqrt(3)/2 * n_1d^2)
std::size_t required_measurements_2d(std::size_t n_1d);

struct TimeAxis {
  std::vector<double> times;  // s, after the start of the pulse
  double frame_rate = 0.0;
};

struct MeasurementSet {
  Grid2D grid;
  // One frame per measurement at eval_time (T_diff, kelvin).
  std::vector<FieldF> frames;
  // Optional full transients, series[m][k] at time_axis->times[k].
  std::optional<TimeAxis> time_axis;
  std::vector<std::vector<FieldF>> series;
  ScanPlan excitations;
  double eval_time = 0.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  PlateSpec plate;
  ExcitationTemporal excitation;
  std::string provenance = "experimental";

  std::size_t n_m() const { return frames.size(); }
  void validate() const;
};

struct ForwardOptions {
  PsfOptions psf;
  // When set, overrides noise_sigma with max|clean| / 10^(snr_db / 20).
  std::optional<double> snr_db;
  // Optional sample times for full transients; eval_time must be one of them.
  std::vector<double> times;
  double frame_rate = 0.0;
  std::size_t threads = 1;
};

// Top-hat disc of the given diameter centred on a pixel, area-weighted with 4x4
// supersampling of partially covered pixels, normalised to unit sum.
Field tophat_kernel(double diameter, double dx, double dy);

// Bilinear deposit of a unit impulse at `p` onto the four surrounding pixels.
Field splat_impulse(const Grid2D& grid, Point p);

// Synthetic sequential spot-scan experiment. For measurement m the source map
// is a^m = I_xy * (delta_m + zeta .* w_m) where w_m is the external thermal
// footprint of spot m normalised to a unit maximum, and
// T_diff^m = PSF * a^m + N(0, noise_sigma).
MeasurementSet forward_simulate(const PlateSpec& plate, const ExcitationTemporal& excitation,
                                const ScanPlan& plan, const DefectMap& defects, double eval_time,
                                double noise_sigma, std::uint64_t seed, const ForwardOptions& options = {});

// Full-surface (homogeneous) illumination of the whole grid, one measurement
// with a transient at the requested times: T(t) = PSF(t) * (1 + zeta).
MeasurementSet simulate_homogeneous(const PlateSpec& plate, const ExcitationTemporal& excitation,
                                    const DefectMap& defects, double eval_time, double noise_sigma,
                                    std::uint64_t seed, const ForwardOptions& options);

struct GaussianFootprint {
  double fwhm;
};
struct TopHatFootprint {
  double diameter;
};
using FootprintProfile = std::variant<GaussianFootprint, TopHatFootprint, PsfField>;

struct HomogeneityReport {
  double coefficient_of_variation = 0.0;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> interior_mask;
  Field summed;
  bool uniform = false;  // coefficient_of_variation < 0.05
};

// Sum of the per-spot footprints over the grid; statistics over pixels of the
// plan's roi at least one footprint width away from its boundary.
// `erosion` overrides the distance kept from the roi boundary (default: the
// footprint width).
HomogeneityReport homogeneity_check(const ScanPlan& plan, const FootprintProfile& profile, const Grid2D& grid,
                                    std::optional<double> erosion = std::nullopt);
// Footprint widened to d_FWHM(eval_time).
HomogeneityReport homogeneity_check(const ScanPlan& plan, const PlateSpec& plate, double eval_time,
                                    const Grid2D& grid);

}  // namespace psr
