#include "psr/thermal_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace psr {

void PlateSpec::validate() const {
  if (!(thickness > 0.0)) throw ParameterError("plate thickness must be positive");
  if (!(diffusivity > 0.0)) throw ParameterError("plate diffusivity must be positive");
  if (!(density > 0.0)) throw ParameterError("plate density must be positive");
  if (!(heat_capacity > 0.0)) throw ParameterError("plate heat capacity must be positive");
  if (!(reflection_coeff >= 0.0 && reflection_coeff <= 1.0))
    throw ParameterError("reflection coefficient must lie in [0, 1]");
  if (conductivity > 0.0) {
    const double inferred = conductivity / (density * heat_capacity);
    if (std::abs(diffusivity - inferred) / diffusivity >= 1e-3)
      throw ParameterError("diffusivity inconsistent with conductivity / (density * heat_capacity)");
  }
}

void ExcitationTemporal::validate() const {
  if (!(pulse_duration > 0.0)) throw ParameterError("pulse duration must be positive");
  if (!(peak_power > 0.0)) throw ParameterError("peak power must be positive");
}

double diffusion_length(const PlateSpec& plate, double t) {
  if (t < 0.0) throw DomainError("diffusion_length: negative time");
  return std::sqrt(plate.diffusivity * t);
}

double psf_sigma(const PlateSpec& plate, double t) {
  if (t < 0.0) throw DomainError("psf_sigma: negative time");
  return std::sqrt(2.0 * plate.diffusivity * t);
}

double fwhm_diameter(const PlateSpec& plate, double t) {
  if (t < 0.0) throw DomainError("fwhm_diameter: negative time");
  return 4.0 * std::sqrt(std::numbers::ln2 * plate.diffusivity * t);
}

double image_series(const PlateSpec& plate, double t, std::size_t series_terms,
                    std::size_t* terms_used, double* last_term_ratio) {
  const double R = plate.reflection_coeff;
  const double four_alpha_t = 4.0 * plate.diffusivity * t;
  const double base = R;  // n = 0 term
  double sum = base;
  std::size_t used = 0;
  double last_ratio = 0.0;
  for (std::size_t k = 1; k <= series_terms; ++k) {
    if (R == 0.0) break;
    const double n = static_cast<double>(k);
    const double decay = std::exp(-(2.0 * n * plate.thickness) * (2.0 * n * plate.thickness) / four_alpha_t);
    // n = +k and n = -k share the Gaussian factor.
    const double term = (std::pow(R, 2.0 * n + 1.0) + std::pow(R, -2.0 * n + 1.0)) * decay;
    sum += term;
    used = k;
    last_ratio = base > 0.0 ? term / base : 0.0;
    if (term < 1e-12 * sum) break;
  }
  if (terms_used) *terms_used = used;
  if (last_term_ratio) *last_term_ratio = last_ratio;
  return sum;
}

namespace {

struct Integrand {
  double prefactor;  // 2 Q / (c_p rho)
  double alpha;
  int n_dim;
  const PlateSpec* plate;
  std::size_t series_terms;
  double t_min;
  double r2;

  double operator()(double s) const {
    s = std::max(s, t_min);
    const double four_alpha_s = 4.0 * alpha * s;
    const double spread = std::pow(std::numbers::pi * four_alpha_s, 0.5 * n_dim);
    return prefactor / spread * std::exp(-r2 / four_alpha_s) *
           image_series(*plate, s, series_terms);
  }
};

template <class F>
double simpson_step(const F& f, double a, double fa, double b, double fb, double m, double fm,
                    double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_step(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

// Adaptive trapezoid refinement with Richardson extrapolation (equivalently
// adaptive Simpson). The tolerance is relative to a coarse estimate of the
// integral itself.
template <class F>
double adaptive_integrate(const F& f, double a, double b, double rtol) {
  if (!(b > a)) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  // Seed the scale from a few probes so narrow peaks are not missed.
  double scale = std::abs(whole);
  for (int i = 1; i < 16; ++i) scale = std::max(scale, std::abs(f(a + (b - a) * i / 16.0)) * (b - a) / 16.0);
  const double tol = std::max(rtol * scale, 1e-300);
  return simpson_step(f, a, fa, b, fb, m, fm, whole, tol, 48);
}

double integrate_pulse(const Integrand& g, double t, double pulse, double rtol) {
  const double lo = std::max(t - pulse, 0.0);
  const double hi = t;
  const double a = std::max(lo, g.t_min);
  if (!(hi > a)) return 0.0;
  if (hi / a > 10.0) {
    // Near-singular start: integrate in log time.
    auto h = [&](double u) {
      const double s = std::exp(u);
      return g(s) * s;
    };
    return adaptive_integrate(h, std::log(a), std::log(hi), rtol);
  }
  return adaptive_integrate(g, a, hi, rtol);
}

}  // namespace

PsfField synth_psf(const PlateSpec& plate, const ExcitationTemporal& excitation, const Grid2D& grid,
                   Point center, double eval_time, const PsfOptions& options) {
  if (!(eval_time > 0.0)) throw DomainError("synth_psf: eval_time must be positive");
  if (options.n_dim < 1 || options.n_dim > 3) throw ParameterError("synth_psf: n_dim must be 1, 2 or 3");
  plate.validate();
  excitation.validate();
  grid.validate();

  PsfField psf;
  psf.grid = grid;
  psf.center = center;
  psf.eval_time = eval_time;
  psf.n_dim = options.n_dim;
  psf.series_terms = options.series_terms;

  double last_ratio = 0.0;
  image_series(plate, eval_time, options.series_terms, &psf.series_terms_used, &last_ratio);
  if (options.series_terms == 0) {
    // Nothing beyond n = 0 was included; judge by the first omitted pair.
    image_series(plate, eval_time, 1, nullptr, &last_ratio);
  }
  psf.truncation_warning = last_ratio > 1e-9;

  Integrand g{2.0 * excitation.peak_power / (plate.heat_capacity * plate.density),
              plate.diffusivity,
              options.n_dim,
              &plate,
              options.series_terms,
              options.t_min,
              0.0};

  psf.values = grid.zeros();
  for (std::size_t iy = 0; iy < grid.n_y; ++iy) {
    const double ry = grid.y(iy) - center.y;
    for (std::size_t ix = 0; ix < grid.n_x; ++ix) {
      const double rx = grid.x(ix) - center.x;
      g.r2 = rx * rx + ry * ry;
      psf.values(static_cast<Eigen::Index>(iy), static_cast<Eigen::Index>(ix)) =
          integrate_pulse(g, eval_time, excitation.pulse_duration, options.quadrature_rtol);
    }
  }
  return psf;
}

PsfField synth_centered_psf(const PlateSpec& plate, const ExcitationTemporal& excitation,
                            const Grid2D& grid, double eval_time, const PsfOptions& options) {
  return synth_psf(plate, excitation, grid, grid.center(), eval_time, options);
}

double measured_fwhm_x(const PsfField& psf) {
  const Field& v = psf.values;
  Eigen::Index py = 0, px = 0;
  const double peak = v.maxCoeff(&py, &px);
  if (!(peak > 0.0)) return 0.0;
  const double half = 0.5 * peak;
  auto crossing = [&](int step) {
    Eigen::Index ix = px;
    while (ix + step >= 0 && ix + step < v.cols() && v(py, ix + step) >= half) ix += step;
    if (ix + step < 0 || ix + step >= v.cols()) return static_cast<double>(ix);
    const double a = v(py, ix), b = v(py, ix + step);
    return static_cast<double>(ix) + step * (a - half) / (a - b);
  };
  return (crossing(+1) - crossing(-1)) * psf.grid.dx;
}

}  // namespace psr
