#include "psr/recon_sms.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace psr {

Eigen::VectorXd vectorize(const Field& field) {
  return Eigen::Map<const Eigen::VectorXd>(field.data(), field.size());
}

Field devectorize(const Eigen::VectorXd& v, const Grid2D& grid) {
  if (static_cast<std::size_t>(v.size()) != grid.size()) throw ShapeError("devectorize: length does not match grid");
  return Eigen::Map<const Field>(v.data(), static_cast<Eigen::Index>(grid.n_y), static_cast<Eigen::Index>(grid.n_x));
}

// ---------------------------------------------------------------- ConvMatrix

ConvMatrix::ConvMatrix(Eigen::VectorXd generator, Eigen::Index center)
    : generator_(std::move(generator)), center_(center) {
  if (generator_.size() == 0) throw ParameterError("convolution generator is empty");
  if (center_ < 0 || center_ >= generator_.size()) throw ParameterError("generator centre out of range");
}

Eigen::VectorXd ConvMatrix::apply(const Eigen::VectorXd& a) const {
  const Eigen::Index N = n();
  if (a.size() != N) throw ShapeError("ConvMatrix::apply: length mismatch");
  Eigen::VectorXd y = Eigen::VectorXd::Zero(2 * N - 1);
  for (Eigen::Index j = 0; j < N; ++j) {
    if (a[j] == 0.0) continue;
    y.segment(j, N).noalias() += a[j] * generator_;
  }
  return y;
}

Eigen::VectorXd ConvMatrix::apply_transpose(const Eigen::VectorXd& y) const {
  const Eigen::Index N = n();
  if (y.size() != 2 * N - 1) throw ShapeError("ConvMatrix::apply_transpose: length mismatch");
  Eigen::VectorXd a(N);
  for (Eigen::Index j = 0; j < N; ++j) a[j] = generator_.dot(y.segment(j, N));
  return a;
}

Eigen::MatrixXd ConvMatrix::gram() const {
  const Eigen::Index N = n();
  Eigen::VectorXd r(N);
  for (Eigen::Index d = 0; d < N; ++d) r[d] = generator_.head(N - d).dot(generator_.tail(N - d));
  Eigen::MatrixXd g(N, N);
  for (Eigen::Index j = 0; j < N; ++j)
    for (Eigen::Index i = 0; i < N; ++i) g(i, j) = r[std::abs(i - j)];
  return g;
}

Eigen::VectorXd ConvMatrix::pad_data(const Field& frame) const {
  if (frame.size() != n()) throw ShapeError("ConvMatrix::pad_data: frame size mismatch");
  Eigen::VectorXd y = Eigen::VectorXd::Zero(rows());
  y.segment(center_, n()) = vectorize(frame);
  return y;
}

Eigen::SparseMatrix<double> ConvMatrix::to_sparse() const {
  const Eigen::Index N = n();
  std::vector<Eigen::Triplet<double>> t;
  const auto nnz = (generator_.array() != 0.0).count();
  t.reserve(static_cast<std::size_t>(nnz * N));
  for (Eigen::Index j = 0; j < N; ++j)
    for (Eigen::Index i = 0; i < N; ++i)
      if (generator_[i] != 0.0) t.emplace_back(i + j, j, generator_[i]);
  Eigen::SparseMatrix<double> h(rows(), cols());
  h.setFromTriplets(t.begin(), t.end());
  return h;
}

ConvMatrix build_conv_matrix(const Eigen::VectorXd& psf_vec, Eigen::Index center) {
  return ConvMatrix(psf_vec, center);
}

namespace {
std::pair<Eigen::Index, Eigen::Index> center_pixel(const PsfField& psf) {
  const auto cx = static_cast<Eigen::Index>(std::llround(psf.center.x / psf.grid.dx));
  const auto cy = static_cast<Eigen::Index>(std::llround(psf.center.y / psf.grid.dy));
  if (cx < 0 || cy < 0 || cx >= psf.values.cols() || cy >= psf.values.rows())
    throw ShapeError("kernel centre lies outside its grid");
  return {cy, cx};
}
}  // namespace

ConvMatrix build_conv_matrix(const PsfField& psf) {
  const auto [cy, cx] = center_pixel(psf);
  return ConvMatrix(vectorize(psf.values), cy * psf.values.cols() + cx);
}

// ---------------------------------------------------------------- Conv2dMatrix

Conv2dMatrix::Conv2dMatrix(Field kernel) : kernel_(std::move(kernel)) {
  if (kernel_.size() == 0) throw ParameterError("convolution kernel is empty");
}

Eigen::VectorXd Conv2dMatrix::apply(const Eigen::VectorXd& a) const {
  const Eigen::Index ny = kernel_.rows(), nx = kernel_.cols(), oy = 2 * ny - 1, ox = 2 * nx - 1;
  if (a.size() != kernel_.size()) throw ShapeError("Conv2dMatrix::apply: length mismatch");
  Field out = Field::Zero(oy, ox);
  for (Eigen::Index qy = 0; qy < ny; ++qy)
    for (Eigen::Index qx = 0; qx < nx; ++qx) {
      const double s = a[qy * nx + qx];
      if (s != 0.0) out.block(qy, qx, ny, nx) += s * kernel_;
    }
  return vectorize(out);
}

Eigen::VectorXd Conv2dMatrix::apply_transpose(const Eigen::VectorXd& y) const {
  const Eigen::Index ny = kernel_.rows(), nx = kernel_.cols(), ox = 2 * nx - 1;
  if (y.size() != rows()) throw ShapeError("Conv2dMatrix::apply_transpose: length mismatch");
  const Eigen::Map<const Field> out(y.data(), 2 * ny - 1, ox);
  Eigen::VectorXd a(kernel_.size());
  for (Eigen::Index qy = 0; qy < ny; ++qy)
    for (Eigen::Index qx = 0; qx < nx; ++qx) a[qy * nx + qx] = (out.block(qy, qx, ny, nx) * kernel_).sum();
  return a;
}

Eigen::MatrixXd Conv2dMatrix::gram() const {
  const Eigen::Index ny = kernel_.rows(), nx = kernel_.cols();
  // R(d) = sum_s K(s) K(s + d) for d in [-(n-1), n-1] on both axes.
  Field r(2 * ny - 1, 2 * nx - 1);
  for (Eigen::Index dy = -(ny - 1); dy < ny; ++dy)
    for (Eigen::Index dx = -(nx - 1); dx < nx; ++dx) {
      const Eigen::Index y0 = std::max<Eigen::Index>(0, -dy), y1 = std::min(ny, ny - dy);
      const Eigen::Index x0 = std::max<Eigen::Index>(0, -dx), x1 = std::min(nx, nx - dx);
      r(dy + ny - 1, dx + nx - 1) =
          (kernel_.block(y0, x0, y1 - y0, x1 - x0) * kernel_.block(y0 + dy, x0 + dx, y1 - y0, x1 - x0)).sum();
    }
  const Eigen::Index N = kernel_.size();
  Eigen::MatrixXd g(N, N);
  for (Eigen::Index j = 0; j < N; ++j)
    for (Eigen::Index i = 0; i < N; ++i) {
      const Eigen::Index dy = i / nx - j / nx, dx = i % nx - j % nx;
      g(i, j) = r(dy + ny - 1, dx + nx - 1);
    }
  return g;
}

Eigen::VectorXd Conv2dMatrix::pad_data(const Field& frame) const {
  const Eigen::Index ny = kernel_.rows(), nx = kernel_.cols();
  if (frame.rows() != ny || frame.cols() != nx) throw ShapeError("Conv2dMatrix::pad_data: frame shape mismatch");
  Field out = Field::Zero(2 * ny - 1, 2 * nx - 1);
  out.block(ny / 2, nx / 2, ny, nx) = frame;
  return vectorize(out);
}

// ---------------------------------------------------------------- StackedSystem

Eigen::MatrixXd StackedSystem::apply(const GroupMatrix& a) const {
  if (a.cols() != data.cols() || a.rows() != block->cols()) throw ShapeError("StackedSystem::apply: shape mismatch");
  Eigen::MatrixXd y(block->rows(), a.cols());
  for (Eigen::Index m = 0; m < a.cols(); ++m) y.col(m) = block->apply(a.col(m));
  return y;
}

Eigen::MatrixXd StackedSystem::apply_transpose(const Eigen::MatrixXd& y) const {
  if (y.cols() != data.cols() || y.rows() != block->rows())
    throw ShapeError("StackedSystem::apply_transpose: shape mismatch");
  Eigen::MatrixXd a(block->cols(), y.cols());
  for (Eigen::Index m = 0; m < y.cols(); ++m) a.col(m) = block->apply_transpose(y.col(m));
  return a;
}

Eigen::SparseMatrix<double> StackedSystem::to_sparse() const {
  const auto* h = dynamic_cast<const ConvMatrix*>(block.get());
  if (!h) throw ParameterError("explicit sparse form is only available for the 1-D operator");
  const Eigen::SparseMatrix<double> hb = h->to_sparse();
  const Eigen::Index R = hb.rows(), C = hb.cols(), M = data.cols();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(hb.nonZeros() * M));
  for (Eigen::Index m = 0; m < M; ++m)
    for (Eigen::Index k = 0; k < hb.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(hb, k); it; ++it)
        t.emplace_back(m * R + it.row(), m * C + it.col(), it.value());
  Eigen::SparseMatrix<double> H(R * M, C * M);
  H.setFromTriplets(t.begin(), t.end());
  return H;
}

namespace {
void require_same_grid(const MeasurementSet& data, const PsfField& psf) {
  const Grid2D& a = data.grid;
  const Grid2D& b = psf.grid;
  auto close = [](double u, double v) { return std::abs(u - v) <= 1e-9 * std::max(std::abs(u), std::abs(v)); };
  if (a.n_x != b.n_x || a.n_y != b.n_y || !close(a.dx, b.dx) || !close(a.dy, b.dy))
    throw ShapeError("kernel grid differs from the dataset grid");
}
}  // namespace

StackedSystem build_stacked_system(const MeasurementSet& data, const PsfField& psf, bool strict_2d) {
  require_same_grid(data, psf);
  if (data.n_m() == 0) throw ParameterError("dataset has no measurements");
  StackedSystem s;
  if (strict_2d) {
    center_pixel(psf);
    if (psf.values.rows() / 2 != static_cast<Eigen::Index>(std::llround(psf.center.y / psf.grid.dy)) ||
        psf.values.cols() / 2 != static_cast<Eigen::Index>(std::llround(psf.center.x / psf.grid.dx)))
      throw ShapeError("strict 2-D operator needs a kernel centred on the grid's centre pixel");
    s.block = std::make_shared<Conv2dMatrix>(psf.values);
  } else {
    s.block = std::make_shared<ConvMatrix>(build_conv_matrix(psf));
  }
  s.data.resize(s.block->rows(), static_cast<Eigen::Index>(data.n_m()));
  for (std::size_t m = 0; m < data.n_m(); ++m)
    s.data.col(static_cast<Eigen::Index>(m)) = s.block->pad_data(data.frames[m].cast<double>());
  return s;
}

// ---------------------------------------------------------------- SmsProblem

SmsProblem::SmsProblem(const MeasurementSet& data, const PsfField& psf, const ReconConfig& config)
    : grid_(data.grid),
      system_(build_stacked_system(data, psf, config.sms_strict_2d)),
      cg_tol_(config.sms_cg_tol),
      memory_cap_(config.sms_memory_cap_bytes) {
  config.validate();
  htt_ = system_.apply_transpose(system_.data);
  data_sq_norm_ = system_.data.squaredNorm();
  const auto n = static_cast<double>(system_.block->cols());
  if (n * n * sizeof(double) <= static_cast<double>(memory_cap_)) gram_ = system_.block->gram();
  set_rho(config.rho);
}

void SmsProblem::set_rho(double rho) {
  if (!(rho > 0.0)) throw ParameterError("rho must be positive");
  rho_ = rho;
  if (gram_.size() == 0) {
    factor_.reset();
    return;
  }
  auto f = std::make_shared<Factorization>();
  Eigen::MatrixXd a = gram_;
  a.diagonal().array() += rho;
  f->llt.compute(a);
  if (f->llt.info() != Eigen::Success) throw NumericalError("Cholesky factorization of H^T H + rho I failed");
  factor_ = std::move(f);
}

void SmsProblem::cg_solve(const GroupMatrix& rhs, GroupMatrix& x) const {
  const ConvolutionBlock& h = *system_.block;
  auto apply_a = [&](const Eigen::VectorXd& p) { return Eigen::VectorXd(h.apply_transpose(h.apply(p)) + rho_ * p); };
  if (x.rows() != rhs.rows() || x.cols() != rhs.cols()) x = GroupMatrix::Zero(rhs.rows(), rhs.cols());
  const Eigen::Index max_iter = 10 * rhs.rows();
  for (Eigen::Index m = 0; m < rhs.cols(); ++m) {
    Eigen::VectorXd xm = x.col(m);
    const Eigen::VectorXd b = rhs.col(m);
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
      x.col(m).setZero();
      continue;
    }
    Eigen::VectorXd r = b - apply_a(xm);
    Eigen::VectorXd p = r;
    double rr = r.squaredNorm();
    for (Eigen::Index it = 0; it < max_iter && std::sqrt(rr) > cg_tol_ * bnorm; ++it) {
      const Eigen::VectorXd ap = apply_a(p);
      const double alpha = rr / p.dot(ap);
      xm += alpha * p;
      r -= alpha * ap;
      const double rr_new = r.squaredNorm();
      p = r + (rr_new / rr) * p;
      rr = rr_new;
    }
    x.col(m) = xm;
  }
}

void SmsProblem::x_update(const GroupMatrix& v, GroupMatrix& x) const {
  const GroupMatrix rhs = htt_ + rho_ * v;
  if (factor_)
    x = factor_->llt.solve(rhs);
  else
    cg_solve(rhs, x);
}

double SmsProblem::data_misfit(const GroupMatrix& a) const {
  if (gram_.size() != 0) {
    const double quad = a.cwiseProduct(gram_ * a).sum();
    return std::max(0.0, 0.5 * quad - a.cwiseProduct(htt_).sum() + 0.5 * data_sq_norm_);
  }
  return 0.5 * (system_.apply(a) - system_.data).squaredNorm();
}

AdmmOutcome<GroupMatrix> SmsProblem::run(const ReconConfig& config) {
  const double rho_start = rho_;
  double l21 = config.lambda_21 / rho_, l2 = config.lambda_2 / rho_;
  AdmmSteps<GroupMatrix> steps;
  steps.set_rho = [&](double r) {
    set_rho(r);
    l21 = config.lambda_21 / r;
    l2 = config.lambda_2 / r;
  };
  steps.x_update = [&](const GroupMatrix& v, GroupMatrix& x) { x_update(v, x); };
  steps.z_update = [&](const GroupMatrix& v, GroupMatrix& z) {
    z = v;
    prox_l21_l2_inplace(z, l21, l2);
  };
  steps.objective = [&](const GroupMatrix& z) {
    return data_misfit(z) + regularizer_value(z, config.lambda_21, config.lambda_2);
  };
  ReconConfig cfg = config;
  cfg.rho = rho_;
  auto out = admm_drive(steps, cfg, system_.block->cols(), static_cast<Eigen::Index>(system_.n_m()), config.seed);
  out.diagnostics.factorization_fallback = !factor_;
  if (rho_ != rho_start) set_rho(rho_start);
  return out;
}

ReconResult SmsProblem::solve(const ReconConfig& config) {
  auto out = run(config);
  ReconResult result;
  result.method = "sms";
  result.grid = grid_;
  result.config = config;
  result.config.rho = rho_;
  result.diagnostics = std::move(out.diagnostics);
  result.a_rec = devectorize(out.z.rowwise().sum(), grid_);
  if (config.keep_per_measurement)
    for (Eigen::Index m = 0; m < out.z.cols(); ++m) result.per_measurement.push_back(devectorize(out.z.col(m), grid_));
  return result;
}

ReconResult reconstruct_sms(const MeasurementSet& data, const PsfField& psf, const ReconConfig& config) {
  config.validate();
  SmsProblem problem(data, psf, config);
  std::optional<LCurveSelection> lcurve;
  if (config.rho_mode == RhoMode::l_curve) {
    const auto candidates = config.rho_candidates.empty() ? default_rho_candidates() : config.rho_candidates;
    ReconConfig short_cfg = config;
    short_cfg.n_iter = std::max<std::size_t>(config.n_iter / 4, 25);
    short_cfg.track_objective = false;
    short_cfg.early_stop = false;
    lcurve = select_rho_lcurve(
        [&](double rho) {
          problem.set_rho(rho);
          const auto out = problem.run(short_cfg);
          return std::pair<double, double>{std::sqrt(2.0 * problem.data_misfit(out.z)), out.z.norm()};
        },
        candidates);
    problem.set_rho(lcurve->rho);
  }
  ReconResult result = problem.solve(config);
  result.lcurve = std::move(lcurve);
  return result;
}

}  // namespace psr
