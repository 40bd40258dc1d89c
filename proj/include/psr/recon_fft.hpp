#pragma once

#include "psr/phantom.hpp"
#include "psr/solver_core.hpp"
#include "psr/spectral.hpp"
#include "psr/thermal_model.hpp"

namespace psr {

// diag(vec(conj(fft(quadrant_swap(PSF))))) over the grid's frequency bins.
struct SpectralOperator {
  Grid2D grid;
  CField diag_values;
};

SpectralOperator make_spectral_operator(const PsfField& psf);

// real(ifft(diag_values .* fft(a)))
Field spectral_forward(const SpectralOperator& op, const Field& a);

// Raised-cosine window rising from the border over `width_x` / `width_y` pixels.
Field edge_taper(const Grid2D& grid, double width_x, double width_y);

// ADMM with x, z and u held as spectra; the per-bin x-update is
// x = (|A|^2 + rho)^-1 (conj(A) b + rho (z - u)) and the prox runs in the
// spatial domain between one inverse and one forward transform.
ReconResult reconstruct_fft(const MeasurementSet& data, const PsfField& psf, const ReconConfig& config);

}  // namespace psr
