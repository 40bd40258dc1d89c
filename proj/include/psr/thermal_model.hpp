#pragma once

#include <cstddef>

#include "psr/grid.hpp"

namespace psr {

// Material and geometry of a plate with adiabatic-ish back surface.
struct PlateSpec {
  double thickness = 4.5e-3;        // m
  double diffusivity = 3.76e-6;     // m^2/s
  double conductivity = 15.0;       // W/(m K)
  double density = 7950.0;          // kg/m^3
  double heat_capacity = 502.0;     // J/(kg K)
  double reflection_coeff = 1.0;    // thermal wave reflection at the rear surface

  void validate() const;

  // 316L stainless steel, 4.5 mm thick.
  static PlateSpec stainless_316l() { return {}; }
};

// Boxcar laser pulse.
struct ExcitationTemporal {
  double pulse_duration = 0.1;  // s
  double peak_power = 15.0;     // W
  double frame_rate = 100.0;    // Hz

  void validate() const;
};

struct PsfField {
  Grid2D grid;
  // Surface temperature sampled at the pixel centres for the whole pulse
  // deposited at `center`; a source map holds the fraction of the pulse
  // absorbed per pixel.
  Field values;
  Point center;
  double eval_time = 0.0;
  int n_dim = 2;
  std::size_t series_terms = 0;      // requested truncation
  std::size_t series_terms_used = 0;  // after early stop
  bool truncation_warning = false;
};

struct PsfOptions {
  int n_dim = 2;
  std::size_t series_terms = 20;
  double quadrature_rtol = 1e-8;
  double t_min = 1e-9;
};

// Kernel of the plate at eval_time, centred at `center` (metres, grid frame),
// convolved in time with the boxcar pulse.
PsfField synth_psf(const PlateSpec& plate, const ExcitationTemporal& excitation, const Grid2D& grid,
                   Point center, double eval_time, const PsfOptions& options = {});

// Convenience: kernel centred on the grid's centre pixel.
PsfField synth_centered_psf(const PlateSpec& plate, const ExcitationTemporal& excitation,
                            const Grid2D& grid, double eval_time, const PsfOptions& options = {});

// Image-source factor sum_{n=-N..N} R^(2n+1) exp(-(2nL)^2 / (4 alpha t)) with
// early termination; `terms_used` receives the highest |n| actually summed and
// `last_term_ratio` the magnitude of that |n| pair relative to the n = 0 term.
double image_series(const PlateSpec& plate, double t, std::size_t series_terms,
                    std::size_t* terms_used = nullptr, double* last_term_ratio = nullptr);

double diffusion_length(const PlateSpec& plate, double t);
double fwhm_diameter(const PlateSpec& plate, double t);
double psf_sigma(const PlateSpec& plate, double t);

// Full width at half maximum of a sampled kernel along x through its peak, in metres.
double measured_fwhm_x(const PsfField& psf);

}  // namespace psr
