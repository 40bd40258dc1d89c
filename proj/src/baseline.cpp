#include "psr/baseline.hpp"

#include <cmath>
#include <complex>
#include <numbers>

namespace psr {

Field difference_thermogram(const Field& data, const Field& reference) {
  if (data.rows() != reference.rows() || data.cols() != reference.cols())
    throw ShapeError("difference_thermogram: shape mismatch");
  return data - reference;
}

PptResult ppt(const std::vector<Field>& series, double frame_rate, double frequency, const PptOptions& options) {
  const std::size_t n_t = series.size();
  if (n_t < 2) throw ParameterError("ppt needs at least two frames");
  if (!(frame_rate > 0.0)) throw ParameterError("ppt: frame rate must be positive");
  if (!(frequency >= 0.0) || frequency > 0.5 * frame_rate) throw ParameterError("ppt: frequency above Nyquist");
  const Eigen::Index ny = series[0].rows(), nx = series[0].cols();
  for (const Field& f : series)
    if (f.rows() != ny || f.cols() != nx) throw ShapeError("ppt: frames differ in shape");

  const double resolution = frame_rate / static_cast<double>(n_t);
  const auto bin = static_cast<std::size_t>(std::llround(frequency / resolution));

  Field re = Field::Zero(ny, nx), im = Field::Zero(ny, nx);
  for (std::size_t n = 0; n < n_t; ++n) {
    double w = 1.0;
    if (options.half_cosine_window)
      w = std::cos(0.5 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(n_t));
    // Reduce k n modulo n_t before forming the angle to keep it small.
    const double angle = -2.0 * std::numbers::pi * static_cast<double>((bin * n) % n_t) / static_cast<double>(n_t);
    re += (w * std::cos(angle)) * series[n];
    im += (w * std::sin(angle)) * series[n];
  }
  PptResult r;
  r.bin = bin;
  r.frequency = static_cast<double>(bin) * resolution;
  const double scale = (bin == 0 || 2 * bin == n_t) ? 1.0 / static_cast<double>(n_t) : 2.0 / static_cast<double>(n_t);
  r.amplitude = scale * (re.square() + im.square()).sqrt();
  r.phase = Field(ny, nx);
  for (Eigen::Index i = 0; i < re.size(); ++i) {
    double p = std::atan2(im.data()[i], re.data()[i]);
    if (p <= -std::numbers::pi) p = std::numbers::pi;
    r.phase.data()[i] = p;
  }
  return r;
}

}  // namespace psr
