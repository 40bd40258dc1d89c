#include "psr/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "psr/parallel.hpp"
#include "psr/spectral.hpp"

namespace psr {

namespace {
constexpr double kRectTol = 1e-9;

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

bool pixel_in(const Rect& r, const Grid2D& g, std::size_t ix, std::size_t iy) {
  return r.contains({g.x(ix), g.y(iy)}, kRectTol * std::max(g.dx, g.dy));
}

std::mt19937_64 measurement_stream(std::uint64_t seed, std::size_t m) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(m >> 32)};
  return std::mt19937_64(seq);
}

// Area of pixel (centre px, py) covered by a disc, 4x4 supersampling at the rim.
double disc_coverage(double px, double py, double cx, double cy, double radius, double dx, double dy) {
  const double hx = 0.5 * dx, hy = 0.5 * dy;
  const double nx = std::max(std::abs(px - cx) - hx, 0.0), ny = std::max(std::abs(py - cy) - hy, 0.0);
  if (nx * nx + ny * ny > radius * radius) return 0.0;
  const double fx = std::abs(px - cx) + hx, fy = std::abs(py - cy) + hy;
  if (fx * fx + fy * fy <= radius * radius) return 1.0;
  int inside = 0;
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i) {
      const double sx = px - hx + (i + 0.5) * dx / 4.0 - cx;
      const double sy = py - hy + (j + 0.5) * dy / 4.0 - cy;
      if (sx * sx + sy * sy <= radius * radius) ++inside;
    }
  return inside / 16.0;
}

Grid2D extended_grid(const Grid2D& g) { return {2 * g.n_x - 1, 2 * g.n_y - 1, g.dx, g.dy}; }

FieldF to_float(const Field& f) { return f.cast<float>(); }

std::size_t find_time(const std::vector<double>& times, double t) {
  for (std::size_t k = 0; k < times.size(); ++k)
    if (std::abs(times[k] - t) <= 1e-9 * std::max(1.0, std::abs(t))) return k;
  throw ParameterError("eval_time is not one of the requested sample times");
}

void add_noise(std::vector<Field>& frames, double sigma, std::mt19937_64& rng) {
  if (!(sigma > 0.0)) return;
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& f : frames)
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] += noise(rng);
}

double peak_abs(const std::vector<std::vector<Field>>& all) {
  double peak = 0.0;
  for (const auto& per_m : all)
    for (const auto& f : per_m) peak = std::max(peak, f.abs().maxCoeff());
  return peak;
}

}  // namespace

// ---------------------------------------------------------------- DefectMap

DefectMap DefectMap::empty(const Grid2D& grid) { return {grid, grid.zeros(), {}}; }

DefectMap DefectMap::from_rects(const Grid2D& grid, std::vector<DefectRect> defects) {
  grid.validate();
  DefectMap map{grid, grid.zeros(), std::move(defects)};
  for (const auto& d : map.defects) {
    if (!(d.zeta >= 0.0 && d.zeta < 1.0)) throw ParameterError("defect zeta must lie in [0, 1)");
    if (!(d.rect.width >= 0.0 && d.rect.height >= 0.0)) throw ParameterError("defect rectangle has negative size");
    for (std::size_t iy = 0; iy < grid.n_y; ++iy)
      for (std::size_t ix = 0; ix < grid.n_x; ++ix)
        if (pixel_in(d.rect, grid, ix, iy))
          map.weights(static_cast<Eigen::Index>(iy), static_cast<Eigen::Index>(ix)) = d.zeta;
  }
  return map;
}

Mask DefectMap::mask(std::size_t i) const {
  Mask m = Mask::Constant(static_cast<Eigen::Index>(grid.n_y), static_cast<Eigen::Index>(grid.n_x), false);
  const Rect& r = defects.at(i).rect;
  for (std::size_t iy = 0; iy < grid.n_y; ++iy)
    for (std::size_t ix = 0; ix < grid.n_x; ++ix)
      m(static_cast<Eigen::Index>(iy), static_cast<Eigen::Index>(ix)) = pixel_in(r, grid, ix, iy);
  return m;
}

void DefectMap::validate() const {
  grid.validate();
  require_shape(weights, grid, "DefectMap");
  if ((weights < 0.0).any() || (weights >= 1.0).any()) throw ParameterError("defect weights must lie in [0, 1)");
  for (std::size_t iy = 0; iy < grid.n_y; ++iy)
    for (std::size_t ix = 0; ix < grid.n_x; ++ix) {
      if (weights(static_cast<Eigen::Index>(iy), static_cast<Eigen::Index>(ix)) == 0.0) continue;
      const bool covered = std::any_of(defects.begin(), defects.end(),
                                       [&](const DefectRect& d) { return pixel_in(d.rect, grid, ix, iy); });
      if (!covered) throw ParameterError("nonzero defect weight outside every ground-truth rectangle");
    }
}

// ---------------------------------------------------------------- scan plans

ScanPlan plan_triangular_grid(const Rect& roi, double pitch, double spot_diameter, double edge_tolerance) {
  if (!(pitch > 0.0)) throw ParameterError("scan pitch must be positive");
  if (!(roi.width >= 0.0 && roi.height >= 0.0) || (roi.width == 0.0 && roi.height == 0.0))
    throw ParameterError("scan roi is empty");
  ScanPlan plan;
  plan.pitch = pitch;
  plan.spot_diameter = spot_diameter;
  plan.roi = roi;
  const double tol = edge_tolerance * pitch;

  if (pitch >= roi.width - tol && pitch >= roi.height - tol) {
    plan.positions.push_back(roi.center());
    plan.rows = 1;
    plan.degenerate = true;
    return plan;
  }

  const double row_pitch = std::numbers::sqrt3 / 2.0 * pitch;
  const auto n_rows = static_cast<std::size_t>(std::floor((roi.height + tol) / row_pitch)) + 1;
  for (std::size_t r = 0; r < n_rows; ++r) {
    const double offset = (r % 2 == 1) ? 0.5 * pitch : 0.0;
    const double span = roi.width - offset + tol;
    if (span < 0.0) continue;
    const auto count = static_cast<std::size_t>(std::floor(span / pitch)) + 1;
    const double y = roi.y + static_cast<double>(r) * row_pitch;
    std::vector<Point> row;
    row.reserve(count);
    for (std::size_t k = 0; k < count; ++k) row.push_back({roi.x + offset + static_cast<double>(k) * pitch, y});
    if (r % 2 == 1) std::reverse(row.begin(), row.end());
    plan.positions.insert(plan.positions.end(), row.begin(), row.end());
    ++plan.rows;
  }
  return plan;
}

std::size_t required_measurements_2d(std::size_t n_1d) {
  const double n = static_cast<double>(n_1d);
  return static_cast<std::size_t>(std::llround(std::numbers::sqrt3 / 2.0 * n * n));
}

// ---------------------------------------------------------------- forward model

Field tophat_kernel(double diameter, double dx, double dy) {
  if (!(diameter > 0.0)) return Field::Ones(1, 1);
  const double radius = 0.5 * diameter;
  const auto hx = static_cast<Eigen::Index>(std::ceil(radius / dx)) + 1;
  const auto hy = static_cast<Eigen::Index>(std::ceil(radius / dy)) + 1;
  Field k(2 * hy + 1, 2 * hx + 1);
  for (Eigen::Index y = 0; y < k.rows(); ++y)
    for (Eigen::Index x = 0; x < k.cols(); ++x)
      k(y, x) = disc_coverage(static_cast<double>(x - hx) * dx, static_cast<double>(y - hy) * dy, 0.0, 0.0, radius,
                              dx, dy);
  return k / k.sum();
}

Field splat_impulse(const Grid2D& grid, Point p) {
  Field f = grid.zeros();
  const double u = p.x / grid.dx, v = p.y / grid.dy;
  const double fu = std::floor(u), fv = std::floor(v);
  const double wu = u - fu, wv = v - fv;
  const auto x0 = static_cast<Eigen::Index>(fu), y0 = static_cast<Eigen::Index>(fv);
  auto put = [&](Eigen::Index y, Eigen::Index x, double w) {
    if (w == 0.0) return;
    if (y < 0 || x < 0 || y >= f.rows() || x >= f.cols()) return;
    f(y, x) += w;
  };
  put(y0, x0, (1.0 - wu) * (1.0 - wv));
  put(y0, x0 + 1, wu * (1.0 - wv));
  put(y0 + 1, x0, (1.0 - wu) * wv);
  put(y0 + 1, x0 + 1, wu * wv);
  return f;
}

MeasurementSet forward_simulate(const PlateSpec& plate, const ExcitationTemporal& excitation,
                                const ScanPlan& plan, const DefectMap& defects, double eval_time,
                                double noise_sigma, std::uint64_t seed, const ForwardOptions& options) {
  defects.validate();
  const Grid2D& grid = defects.grid;
  if (plan.positions.empty()) throw ParameterError("scan plan has no positions");
  const Rect ext = grid.extent();
  for (const Point& p : plan.positions)
    if (!ext.contains(p, 1e-9)) throw ShapeError("scan position lies outside the defect map grid");
  if (noise_sigma < 0.0) throw ParameterError("noise sigma must be non-negative");

  std::vector<double> times = options.times;
  const bool series = !times.empty();
  if (!series) times = {eval_time};
  const std::size_t k_eval = find_time(times, eval_time);

  const Grid2D big = extended_grid(grid);
  std::vector<Field> kernels;
  kernels.reserve(times.size());
  for (double t : times) kernels.push_back(synth_centered_psf(plate, excitation, big, t, options.psf).values);

  const Field spot = tophat_kernel(plan.spot_diameter, grid.dx, grid.dy);
  const std::size_t n_m = plan.positions.size();
  std::vector<std::vector<Field>> clean(n_m);

  parallel_for(n_m, options.threads, [&](std::size_t m) {
    const Field impulse = splat_impulse(grid, plan.positions[m]);
    const Field external = convolve_same(convolve_same(impulse, spot), kernels[k_eval]);
    const double peak = external.maxCoeff();
    const Field footprint = peak > 0.0 ? Field(external / peak) : grid.zeros();
    const Field source = convolve_same(impulse + defects.weights * footprint, spot);
    auto& out = clean[m];
    out.reserve(times.size());
    for (const Field& k : kernels) out.push_back(convolve_same(source, k));
  });

  MeasurementSet set;
  set.grid = grid;
  set.excitations = plan;
  set.eval_time = eval_time;
  set.seed = seed;
  set.plate = plate;
  set.excitation = excitation;
  set.provenance = "synthetic";
  set.noise_sigma = options.snr_db ? peak_abs(clean) / std::pow(10.0, *options.snr_db / 20.0) : noise_sigma;

  set.frames.resize(n_m);
  if (series) {
    set.time_axis = TimeAxis{times, options.frame_rate};
    set.series.resize(n_m);
  }
  parallel_for(n_m, options.threads, [&](std::size_t m) {
    auto rng = measurement_stream(seed, m);
    add_noise(clean[m], set.noise_sigma, rng);
    set.frames[m] = to_float(clean[m][k_eval]);
    if (series) {
      set.series[m].reserve(times.size());
      for (const Field& f : clean[m]) set.series[m].push_back(to_float(f));
    }
  });
  return set;
}

MeasurementSet simulate_homogeneous(const PlateSpec& plate, const ExcitationTemporal& excitation,
                                    const DefectMap& defects, double eval_time, double noise_sigma,
                                    std::uint64_t seed, const ForwardOptions& options) {
  defects.validate();
  const Grid2D& grid = defects.grid;
  if (options.times.empty()) throw ParameterError("homogeneous simulation needs sample times");
  const std::size_t k_eval = find_time(options.times, eval_time);
  const Grid2D big = extended_grid(grid);
  const Field source = Field::Ones(static_cast<Eigen::Index>(grid.n_y), static_cast<Eigen::Index>(grid.n_x)) +
                       defects.weights;

  std::vector<std::vector<Field>> clean(1);
  clean[0].resize(options.times.size());
  parallel_for(options.times.size(), options.threads, [&](std::size_t k) {
    const Field kernel = synth_centered_psf(plate, excitation, big, options.times[k], options.psf).values;
    clean[0][k] = convolve_same(source, kernel);
  });

  MeasurementSet set;
  set.grid = grid;
  set.excitations.roi = grid.extent();
  set.eval_time = eval_time;
  set.seed = seed;
  set.plate = plate;
  set.excitation = excitation;
  set.provenance = "synthetic-homogeneous";
  set.noise_sigma = options.snr_db ? peak_abs(clean) / std::pow(10.0, *options.snr_db / 20.0) : noise_sigma;
  auto rng = measurement_stream(seed, 0);
  add_noise(clean[0], set.noise_sigma, rng);
  set.time_axis = TimeAxis{options.times, options.frame_rate};
  set.series.resize(1);
  for (const Field& f : clean[0]) set.series[0].push_back(to_float(f));
  set.frames = {set.series[0][k_eval]};
  return set;
}

void MeasurementSet::validate() const {
  grid.validate();
  for (const auto& f : frames)
    if (static_cast<std::size_t>(f.rows()) != grid.n_y || static_cast<std::size_t>(f.cols()) != grid.n_x)
      throw ShapeError("measurement frame does not match the dataset grid");
  if (time_axis) {
    if (series.size() != frames.size()) throw ShapeError("time series count differs from frame count");
    for (const auto& s : series) {
      if (s.size() != time_axis->times.size()) throw ShapeError("time series length differs from time axis");
      for (const auto& f : s)
        if (static_cast<std::size_t>(f.rows()) != grid.n_y || static_cast<std::size_t>(f.cols()) != grid.n_x)
          throw ShapeError("time series frame does not match the dataset grid");
    }
  }
}

// ---------------------------------------------------------------- homogeneity

HomogeneityReport homogeneity_check(const ScanPlan& plan, const FootprintProfile& profile, const Grid2D& grid,
                                    std::optional<double> erosion) {
  if (plan.positions.empty()) throw ParameterError("homogeneity_check: empty plan");
  grid.validate();
  Field sum = grid.zeros();
  double width = 0.0;

  if (const auto* g = std::get_if<GaussianFootprint>(&profile)) {
    width = g->fwhm;
    const double c = 4.0 * std::numbers::ln2 / (g->fwhm * g->fwhm);
    for (const Point& p : plan.positions)
      for (Eigen::Index y = 0; y < sum.rows(); ++y) {
        const double ry = grid.y(static_cast<std::size_t>(y)) - p.y;
        for (Eigen::Index x = 0; x < sum.cols(); ++x) {
          const double rx = grid.x(static_cast<std::size_t>(x)) - p.x;
          sum(y, x) += std::exp(-c * (rx * rx + ry * ry));
        }
      }
  } else if (const auto* t = std::get_if<TopHatFootprint>(&profile)) {
    width = t->diameter;
    for (const Point& p : plan.positions)
      for (Eigen::Index y = 0; y < sum.rows(); ++y)
        for (Eigen::Index x = 0; x < sum.cols(); ++x)
          sum(y, x) += disc_coverage(grid.x(static_cast<std::size_t>(x)), grid.y(static_cast<std::size_t>(y)), p.x,
                                     p.y, 0.5 * t->diameter, grid.dx, grid.dy);
  } else {
    const auto& psf = std::get<PsfField>(profile);
    if (psf.grid.dx != grid.dx || psf.grid.dy != grid.dy) throw ShapeError("footprint pitch differs from grid");
    width = measured_fwhm_x(psf);
    Field impulses = grid.zeros();
    for (const Point& p : plan.positions) impulses += splat_impulse(grid, p);
    sum = convolve_same(impulses, psf.values / psf.values.maxCoeff());
  }

  if (erosion) {
    if (!(*erosion >= 0.0)) throw ParameterError("homogeneity_check: erosion must be non-negative");
    width = *erosion;
  }

  HomogeneityReport report;
  report.summed = sum;
  report.interior_mask = Mask::Constant(sum.rows(), sum.cols(), false);
  const Rect& roi = plan.roi;
  double acc = 0.0, acc2 = 0.0;
  std::size_t count = 0;
  for (Eigen::Index y = 0; y < sum.rows(); ++y)
    for (Eigen::Index x = 0; x < sum.cols(); ++x) {
      const double px = grid.x(static_cast<std::size_t>(x)), py = grid.y(static_cast<std::size_t>(y));
      const bool inside = px >= roi.x + width && px <= roi.x + roi.width - width && py >= roi.y + width &&
                          py <= roi.y + roi.height - width;
      if (!inside) continue;
      report.interior_mask(y, x) = true;
      acc += sum(y, x);
      ++count;
    }
  if (count == 0) throw DomainError("homogeneity_check: roi too small, interior is empty after erosion");
  const double mean = acc / static_cast<double>(count);
  for (Eigen::Index y = 0; y < sum.rows(); ++y)
    for (Eigen::Index x = 0; x < sum.cols(); ++x)
      if (report.interior_mask(y, x)) acc2 += (sum(y, x) - mean) * (sum(y, x) - mean);
  const double stddev = std::sqrt(acc2 / static_cast<double>(count));
  report.coefficient_of_variation = mean > 0.0 ? stddev / mean : std::numeric_limits<double>::infinity();
  report.uniform = report.coefficient_of_variation < 0.05;
  return report;
}

HomogeneityReport homogeneity_check(const ScanPlan& plan, const PlateSpec& plate, double eval_time,
                                    const Grid2D& grid) {
  return homogeneity_check(plan, GaussianFootprint{fwhm_diameter(plate, eval_time)}, grid);
}

}  // namespace psr
