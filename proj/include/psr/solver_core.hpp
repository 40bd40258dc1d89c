#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "psr/errors.hpp"
#include "psr/grid.hpp"

namespace psr {

// fixed: rho as given; l_curve: rho picked from candidates before the solve;
// balanced: rho starts at the given value and is rescaled during the solve to
// keep primal and dual residuals within a factor `rho_balance_mu` of each other.
enum class RhoMode { fixed, l_curve, balanced };

struct ReconConfig {
  double lambda_21 = 1570.0;
  double lambda_2 = 100.0;
  double rho = 16.0;
  std::size_t n_iter = 400;
  double eval_time = 0.5;
  RhoMode rho_mode = RhoMode::fixed;
  std::vector<double> rho_candidates;  // l_curve mode; decade grid when empty
  double rho_balance_mu = 10.0;
  double rho_balance_tau = 2.0;
  std::size_t rho_balance_interval = 10;  // iterations between checks
  // Nesterov-type extrapolation of z and u with restart on a rising combined
  // residual (fast ADMM).
  bool accelerate = false;
  double restart_eta = 0.999;
  std::uint64_t seed = 0;
  bool early_stop = false;
  double early_stop_tol = 1e-8;
  bool track_objective = true;
  bool keep_per_measurement = false;

  // sparse matrix stacking
  bool sms_strict_2d = false;
  std::size_t sms_memory_cap_bytes = std::size_t{1} << 30;
  double sms_cg_tol = 1e-10;

  // frequency domain
  bool fft_taper = true;

  void validate() const;

  static ReconConfig paper_sms();  // 1570 / 100 / 16 / 400 at 500 ms
  static ReconConfig paper_fft();  // 27 / 500 / 16 / 400 at 700 ms
  // Weights for kernels normalized per unit source, as produced by the
  // simulator: 0.004 / 0 / 0.03 / 400 at 500 ms.
  static ReconConfig desk();
};

struct SolveDiagnostics {
  std::vector<double> objective_per_iter;
  std::vector<double> primal_residual_per_iter;   // ||x - z||
  std::vector<double> dual_residual_per_iter;     // rho ||z - z_prev||
  std::vector<double> relative_primal_per_iter;   // ||x - z|| / max(||z||, tiny)
  double objective_initial = 0.0;
  double wall_time = 0.0;
  std::size_t iterations = 0;
  bool early_stopped = false;
  double max_imag_residue = 0.0;  // frequency-domain method only
  bool factorization_fallback = false;  // sms: iterative solve instead of Cholesky
  std::vector<double> rho_per_iter;
  std::size_t rho_updates = 0;
  std::size_t restarts = 0;  // accelerated mode
};

struct LCurvePoint {
  double rho = 0.0;
  double log_residual = 0.0;
  double log_solution = 0.0;
};

struct LCurveSelection {
  double rho = 0.0;
  std::size_t index = 0;
  std::vector<LCurvePoint> points;
  std::vector<double> curvature;  // per point, zero at the ends
  bool fallback = false;          // degenerate curve, median candidate returned
};

struct ReconResult {
  std::string method;
  Grid2D grid;
  Field a_rec;
  std::vector<Field> per_measurement;
  ReconConfig config;
  SolveDiagnostics diagnostics;
  std::optional<LCurveSelection> lcurve;
};

// Rows are pixels, columns are measurements.
using GroupMatrix = Eigen::MatrixXd;

// sum over pixels of the Euclidean norm across measurements
double norm_l21(const GroupMatrix& a);

// Group soft threshold per pixel row followed by shrinkage 1 / (1 + lambda_2).
GroupMatrix prox_l21_l2(const GroupMatrix& l, double lambda_21, double lambda_2);
void prox_l21_l2_inplace(GroupMatrix& l, double lambda_21, double lambda_2);

// Objective matching the proximal step: (lambda_2 / 2) ||a||^2 is the quadratic
// term whose prox is the 1 / (1 + lambda_2 / rho) shrinkage.
inline double regularizer_value(const GroupMatrix& a, double lambda_21, double lambda_2) {
  return lambda_21 * norm_l21(a) + 0.5 * lambda_2 * a.squaredNorm();
}

// Uniform [0, 1) matrix from a seeded stream.
GroupMatrix random_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

template <class State>
struct AdmmSteps {
  // x <- argmin_x f(x) + rho/2 ||x - v||^2, called with v = z - u
  std::function<void(const State& v, State& x)> x_update;
  // z <- prox(v), called with v = x + u
  std::function<void(const State& v, State& z)> z_update;
  // Objective at z; optional.
  std::function<double(const State& z)> objective;
  // Real pixels x measurements matrix to solver state; identity when empty.
  std::function<State(const GroupMatrix&)> lift;
  // Called when the penalty changes (balanced mode); required for that mode.
  std::function<void(double rho)> set_rho;
};

template <class State>
struct AdmmOutcome {
  State x, z, u;
  SolveDiagnostics diagnostics;
};

// Scaled-form ADMM: x-update, z-update, u <- u + x - z. Iterates start from
// uniform [0, 1) random values drawn from `seed`, u0 = x0 - z0.
template <class State>
AdmmOutcome<State> admm_drive(const AdmmSteps<State>& steps, const ReconConfig& config, Eigen::Index rows,
                              Eigen::Index cols, std::uint64_t seed) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  const GroupMatrix x0 = random_uniform(rows, cols, rng);
  const GroupMatrix z0 = random_uniform(rows, cols, rng);
  AdmmOutcome<State> out;
  if (steps.lift) {
    out.x = steps.lift(x0);
    out.z = steps.lift(z0);
  } else {
    out.x = x0;
    out.z = z0;
  }
  out.u = out.x - out.z;
  SolveDiagnostics& d = out.diagnostics;
  const bool track = config.track_objective && static_cast<bool>(steps.objective);
  if (track) d.objective_initial = steps.objective(out.z);
  d.objective_per_iter.reserve(config.n_iter);
  d.primal_residual_per_iter.reserve(config.n_iter);
  d.dual_residual_per_iter.reserve(config.n_iter);
  d.relative_primal_per_iter.reserve(config.n_iter);

  const bool balance = config.rho_mode == RhoMode::balanced;
  if (balance && !steps.set_rho) throw ParameterError("balanced rho needs a set_rho step");
  double rho = config.rho;
  d.rho_per_iter.reserve(config.n_iter);

  // z_hat and u_hat are the points the next iteration starts from; without
  // acceleration they are simply z and u.
  State v, z_prev, u_prev, z_hat = out.z, u_hat = out.u;
  double alpha = 1.0, combined_prev = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k <= config.n_iter; ++k) {
    v = z_hat - u_hat;
    steps.x_update(v, out.x);
    v = out.x + u_hat;
    z_prev = out.z;
    u_prev = out.u;
    steps.z_update(v, out.z);
    out.u = u_hat + out.x - out.z;
    if (!out.x.allFinite() || !out.z.allFinite() || !out.u.allFinite())
      throw DivergenceError(k, "ADMM iterate became non-finite");

    const double primal = (out.x - out.z).norm();
    const double dual = rho * (out.z - z_hat).norm();
    if (config.accelerate) {
      const double combined = (out.u - u_hat).squaredNorm() + (out.z - z_hat).squaredNorm();
      if (combined < config.restart_eta * combined_prev) {
        const double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * alpha * alpha));
        const double w = (alpha - 1.0) / next;
        z_hat = out.z + w * (out.z - z_prev);
        u_hat = out.u + w * (out.u - u_prev);
        alpha = next;
        combined_prev = combined;
      } else {
        alpha = 1.0;
        z_hat = z_prev;
        u_hat = u_prev;
        combined_prev /= config.restart_eta;
        ++d.restarts;
      }
    } else {
      z_hat = out.z;
      u_hat = out.u;
    }
    const double z_norm = out.z.norm();
    d.primal_residual_per_iter.push_back(primal);
    d.dual_residual_per_iter.push_back(dual);
    d.relative_primal_per_iter.push_back(primal / std::max(z_norm, 1e-300));
    d.objective_per_iter.push_back(track ? steps.objective(out.z) : std::nan(""));
    d.rho_per_iter.push_back(rho);
    d.iterations = k;

    if (config.early_stop) {
      const double scale_p = std::max({out.x.norm(), z_norm, 1e-300});
      const double scale_d = std::max(rho * out.u.norm(), 1e-300);
      if (primal <= config.early_stop_tol * scale_p && dual <= config.early_stop_tol * scale_d) {
        d.early_stopped = true;
        break;
      }
    }

    if (balance && k % config.rho_balance_interval == 0 && k < config.n_iter) {
      // The scaled dual variable is u = y / rho and must be rescaled with rho.
      double factor = 1.0;
      if (primal > config.rho_balance_mu * dual) factor = config.rho_balance_tau;
      else if (dual > config.rho_balance_mu * primal) factor = 1.0 / config.rho_balance_tau;
      if (factor != 1.0) {
        rho *= factor;
        out.u /= factor;
        u_hat /= factor;
        steps.set_rho(rho);
        ++d.rho_updates;
      }
    }
  }
  d.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// Discrete L-curve corner: the interior point of maximum Menger curvature in
// (log residual, log solution) space.
LCurveSelection lcurve_corner(std::vector<LCurvePoint> points);

// probe(rho) runs a short solve and returns (||H A - T||, ||A||).
using LCurveProbe = std::function<std::pair<double, double>(double rho)>;
LCurveSelection select_rho_lcurve(const LCurveProbe& probe, const std::vector<double>& candidates);

// 10^-2 ... 10^4
std::vector<double> default_rho_candidates();

}  // namespace psr
