#include "psr/recon_fft.hpp"

#include "psr/recon_sms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace psr {

namespace {
using CMatrix = Eigen::MatrixXcd;

Eigen::Map<const Eigen::VectorXcd> flat(const CField& f) { return {f.data(), f.size()}; }
}  // namespace

SpectralOperator make_spectral_operator(const PsfField& psf) {
  Fft2d fft(psf.grid.n_y, psf.grid.n_x);
  const Field swapped = quadrant_swap(psf.values);
  return {psf.grid, fft.forward(swapped).conjugate()};
}

Field spectral_forward(const SpectralOperator& op, const Field& a) {
  require_shape(a, op.grid, "spectral_forward");
  Fft2d fft(op.grid.n_y, op.grid.n_x);
  const CField prod = op.diag_values * fft.forward(a);
  return fft.inverse_real(prod);
}

Field edge_taper(const Grid2D& grid, double width_x, double width_y) {
  auto ramp = [](std::size_t i, std::size_t n, double w) {
    if (!(w > 0.0)) return 1.0;
    const double d = static_cast<double>(std::min(i, n - 1 - i));
    if (d >= w) return 1.0;
    return 0.5 * (1.0 - std::cos(std::numbers::pi * (d + 0.5) / w));
  };
  Field t = grid.zeros();
  for (std::size_t iy = 0; iy < grid.n_y; ++iy)
    for (std::size_t ix = 0; ix < grid.n_x; ++ix)
      t(static_cast<Eigen::Index>(iy), static_cast<Eigen::Index>(ix)) =
          ramp(ix, grid.n_x, width_x) * ramp(iy, grid.n_y, width_y);
  return t;
}

namespace {

// One fixed-rho solve; `residual` receives ||H A - T|| at the final iterate.
ReconResult solve_fft(const MeasurementSet& data, const PsfField& psf, const ReconConfig& config,
                      double* residual = nullptr) {
  const Grid2D& grid = data.grid;
  if (psf.grid.n_x != grid.n_x || psf.grid.n_y != grid.n_y ||
      std::abs(psf.grid.dx - grid.dx) > 1e-9 * grid.dx || std::abs(psf.grid.dy - grid.dy) > 1e-9 * grid.dy)
    throw ShapeError("kernel grid differs from the dataset grid");
  const Eigen::Index n_m = static_cast<Eigen::Index>(data.n_m());
  if (n_m == 0) throw ParameterError("dataset has no measurements");
  const Eigen::Index N = static_cast<Eigen::Index>(grid.size());
  const auto ny = static_cast<Eigen::Index>(grid.n_y), nx = static_cast<Eigen::Index>(grid.n_x);
  const double M = static_cast<double>(N);

  const SpectralOperator op = make_spectral_operator(psf);
  const Eigen::VectorXcd A = flat(op.diag_values);
  const Eigen::VectorXd denom_base = A.cwiseAbs2();
  if (!A.allFinite()) throw DivergenceError(0, "kernel spectrum is not finite");

  Fft2d fft(grid.n_y, grid.n_x);
  Field window = Field::Ones(ny, nx);
  if (config.fft_taper) {
    const double half_fwhm = 0.5 * measured_fwhm_x(psf);
    window = edge_taper(grid, half_fwhm / grid.dx, half_fwhm / grid.dy);
  }

  // b: spectra of the (tapered) frames; Atb = conj(A) .* b
  CMatrix B(N, n_m);
  for (Eigen::Index m = 0; m < n_m; ++m) {
    const Field frame = data.frames[static_cast<std::size_t>(m)].cast<double>() * window;
    B.col(m) = flat(fft.forward(frame));
  }
  const CMatrix AtB = A.conjugate().asDiagonal() * B;

  double rho = config.rho;
  double l21 = config.lambda_21 / rho, l2 = config.lambda_2 / rho;
  Eigen::VectorXd inv_denom = (denom_base.array() + rho).inverse().matrix();

  // Spatial prox output of the latest z-update; the objective is evaluated at
  // that z and the aggregate is taken from it.
  GroupMatrix spatial(N, n_m);
  bool have_spatial = false;
  double max_imag = 0.0;

  auto to_spatial = [&](const CMatrix& s, GroupMatrix& out, bool track_imag) {
    CField in(ny, nx), res;
    for (Eigen::Index m = 0; m < s.cols(); ++m) {
      Eigen::Map<Eigen::VectorXcd>(in.data(), N) = s.col(m);
      fft.inverse(in, res);
      const Eigen::Map<const Eigen::VectorXcd> r(res.data(), N);
      out.col(m) = r.real();
      if (track_imag) {
        const double re = r.real().norm();
        if (re > 0.0) max_imag = std::max(max_imag, r.imag().norm() / re);
      }
    }
  };
  auto to_spectral = [&](const GroupMatrix& s, CMatrix& out) {
    out.resize(N, s.cols());
    CField in(ny, nx), res;
    for (Eigen::Index m = 0; m < s.cols(); ++m) {
      Eigen::Map<Eigen::VectorXcd>(in.data(), N) = s.col(m).cast<cplx>();
      fft.forward(in, res);
      out.col(m) = flat(res);
    }
  };

  AdmmSteps<CMatrix> steps;
  steps.lift = [&](const GroupMatrix& g) {
    CMatrix s;
    to_spectral(g, s);
    return s;
  };
  steps.x_update = [&](const CMatrix& v, CMatrix& x) { x = inv_denom.asDiagonal() * (AtB + rho * v); };
  steps.z_update = [&](const CMatrix& v, CMatrix& z) {
    to_spatial(v, spatial, true);
    prox_l21_l2_inplace(spatial, l21, l2);
    to_spectral(spatial, z);
    have_spatial = true;
  };
  steps.set_rho = [&](double r) {
    rho = r;
    l21 = config.lambda_21 / rho;
    l2 = config.lambda_2 / rho;
    inv_denom = (denom_base.array() + rho).inverse().matrix();
  };
  steps.objective = [&](const CMatrix& z) {
    // Parseval with an unnormalized forward transform.
    const double misfit = 0.5 * (A.asDiagonal() * z - B).squaredNorm() / M;
    if (have_spatial) return misfit + regularizer_value(spatial, config.lambda_21, config.lambda_2);
    GroupMatrix initial(N, n_m);
    to_spatial(z, initial, false);
    return misfit + regularizer_value(initial, config.lambda_21, config.lambda_2);
  };

  auto out = admm_drive(steps, config, N, n_m, config.seed);

  ReconResult result;
  result.method = "fft";
  result.grid = grid;
  result.config = config;
  result.diagnostics = std::move(out.diagnostics);
  result.diagnostics.max_imag_residue = max_imag;
  if (residual) *residual = std::sqrt((A.asDiagonal() * out.z - B).squaredNorm() / M);
  result.a_rec = devectorize(spatial.rowwise().sum(), grid);
  if (config.keep_per_measurement)
    for (Eigen::Index m = 0; m < n_m; ++m) result.per_measurement.push_back(devectorize(spatial.col(m), grid));
  return result;
}

}  // namespace

ReconResult reconstruct_fft(const MeasurementSet& data, const PsfField& psf, const ReconConfig& config) {
  config.validate();
  if (config.rho_mode != RhoMode::l_curve) return solve_fft(data, psf, config);
  const auto candidates = config.rho_candidates.empty() ? default_rho_candidates() : config.rho_candidates;
  ReconConfig short_cfg = config;
  short_cfg.rho_mode = RhoMode::fixed;
  short_cfg.n_iter = std::max<std::size_t>(config.n_iter / 4, 25);
  short_cfg.track_objective = false;
  short_cfg.early_stop = false;
  short_cfg.keep_per_measurement = true;
  LCurveSelection lcurve = select_rho_lcurve(
      [&](double rho) {
        short_cfg.rho = rho;
        double residual = 0.0;
        const ReconResult r = solve_fft(data, psf, short_cfg, &residual);
        double sq = 0.0;
        for (const auto& f : r.per_measurement) sq += f.square().sum();
        return std::pair<double, double>{residual, std::sqrt(sq)};
      },
      candidates);
  ReconConfig final_cfg = config;
  final_cfg.rho_mode = RhoMode::fixed;
  final_cfg.rho = lcurve.rho;
  ReconResult result = solve_fft(data, psf, final_cfg);
  result.config.rho_mode = RhoMode::l_curve;
  result.lcurve = std::move(lcurve);
  return result;
}

}  // namespace psr
