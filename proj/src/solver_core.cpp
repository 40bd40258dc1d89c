#include "psr/solver_core.hpp"

#include <algorithm>
#include <cmath>

namespace psr {

void ReconConfig::validate() const {
  if (!(lambda_21 >= 0.0)) throw ParameterError("lambda_21 must be non-negative");
  if (!(lambda_2 >= 0.0)) throw ParameterError("lambda_2 must be non-negative");
  if (!(rho > 0.0)) throw ParameterError("rho must be positive");
  if (n_iter < 1) throw ParameterError("n_iter must be at least 1");
  if (!(eval_time > 0.0)) throw ParameterError("eval_time must be positive");
  if (rho_mode == RhoMode::balanced) {
    if (!(rho_balance_mu > 1.0)) throw ParameterError("rho_balance_mu must exceed 1");
    if (!(rho_balance_tau > 1.0)) throw ParameterError("rho_balance_tau must exceed 1");
    if (rho_balance_interval < 1) throw ParameterError("rho_balance_interval must be at least 1");
  }
}

ReconConfig ReconConfig::paper_sms() {
  ReconConfig c;
  c.lambda_21 = 1570.0;
  c.lambda_2 = 100.0;
  c.rho = 16.0;
  c.n_iter = 400;
  c.eval_time = 0.5;
  return c;
}

ReconConfig ReconConfig::paper_fft() {
  ReconConfig c;
  c.lambda_21 = 27.0;
  c.lambda_2 = 500.0;
  c.rho = 16.0;
  c.n_iter = 400;
  c.eval_time = 0.7;
  return c;
}

ReconConfig ReconConfig::desk() {
  ReconConfig c;
  c.lambda_21 = 0.004;
  c.lambda_2 = 0.0;
  c.rho = 0.03;
  c.n_iter = 400;
  c.eval_time = 0.5;
  return c;
}

double norm_l21(const GroupMatrix& a) { return a.rowwise().norm().sum(); }

void prox_l21_l2_inplace(GroupMatrix& l, double lambda_21, double lambda_2) {
  if (lambda_21 < 0.0 || lambda_2 < 0.0) throw ParameterError("prox weights must be non-negative");
  const double shrink = 1.0 / (1.0 + lambda_2);
  for (Eigen::Index r = 0; r < l.rows(); ++r) {
    const double g = l.row(r).norm();
    const double factor = g > 0.0 ? std::max(0.0, 1.0 - lambda_21 / g) * shrink : 0.0;
    l.row(r) *= factor;
  }
}

GroupMatrix prox_l21_l2(const GroupMatrix& l, double lambda_21, double lambda_2) {
  GroupMatrix p = l;
  prox_l21_l2_inplace(p, lambda_21, lambda_2);
  return p;
}

GroupMatrix random_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  GroupMatrix m(rows, cols);
  // Fill column by column so the stream order is independent of storage order.
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = uni(rng);
  return m;
}

std::vector<double> default_rho_candidates() { return {1e-2, 1e-1, 1e0, 1e1, 1e2, 1e3, 1e4}; }

LCurveSelection lcurve_corner(std::vector<LCurvePoint> points) {
  if (points.size() < 3) throw ParameterError("L-curve needs at least 3 candidates");
  LCurveSelection sel;
  sel.points = std::move(points);
  const auto& p = sel.points;
  sel.curvature.assign(p.size(), 0.0);

  double span = 0.0;
  for (const auto& a : p)
    for (const auto& b : p)
      span = std::max(span, std::hypot(a.log_residual - b.log_residual, a.log_solution - b.log_solution));

  bool finite = std::isfinite(span);
  double best = 0.0;
  std::size_t best_i = 0;
  for (std::size_t i = 1; i + 1 < p.size() && finite; ++i) {
    const double ax = p[i].log_residual - p[i - 1].log_residual, ay = p[i].log_solution - p[i - 1].log_solution;
    const double bx = p[i + 1].log_residual - p[i].log_residual, by = p[i + 1].log_solution - p[i].log_solution;
    const double cx = p[i + 1].log_residual - p[i - 1].log_residual,
                 cy = p[i + 1].log_solution - p[i - 1].log_solution;
    const double la = std::hypot(ax, ay), lb = std::hypot(bx, by), lc = std::hypot(cx, cy);
    const double cross = ax * by - ay * bx;
    // Menger curvature 4 * area / (|a| |b| |c|); area = cross / 2.
    const double k = (la > 0.0 && lb > 0.0 && lc > 0.0) ? 2.0 * cross / (la * lb * lc) : 0.0;
    if (!std::isfinite(k)) finite = false;
    sel.curvature[i] = k;
    if (std::abs(k) > best) {
      best = std::abs(k);
      best_i = i;
    }
  }
  // Zero curvature relative to the curve's extent means no corner.
  if (!finite || !(span > 0.0) || best * span < 1e-9) {
    sel.fallback = true;
    sel.index = p.size() / 2;
  } else {
    sel.index = best_i;
  }
  sel.rho = p[sel.index].rho;
  return sel;
}

LCurveSelection select_rho_lcurve(const LCurveProbe& probe, const std::vector<double>& candidates) {
  if (candidates.size() < 3) throw ParameterError("L-curve needs at least 3 candidates");
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!(candidates[i] > 0.0)) throw ParameterError("L-curve candidates must be positive");
    if (i > 0 && !(candidates[i] > candidates[i - 1])) throw ParameterError("L-curve candidates must be ascending");
  }
  std::vector<LCurvePoint> points;
  points.reserve(candidates.size());
  for (double rho : candidates) {
    const auto [residual, solution] = probe(rho);
    points.push_back({rho, std::log(std::max(residual, 1e-300)), std::log(std::max(solution, 1e-300))});
  }
  return lcurve_corner(std::move(points));
}

}  // namespace psr
