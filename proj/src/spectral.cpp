#include "psr/spectral.hpp"

#include <algorithm>
#include <cstring>
#include <mutex>
#include <utility>

#include <fftw3.h>

namespace psr {

namespace {
// The FFTW planner is not thread-safe; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

Fft2d::Fft2d(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
  if (rows == 0 || cols == 0) throw ShapeError("Fft2d: empty shape");
  const std::size_t n = rows * cols;
  buf_in_ = reinterpret_cast<cplx*>(fftw_malloc(sizeof(fftw_complex) * n));
  buf_out_ = reinterpret_cast<cplx*>(fftw_malloc(sizeof(fftw_complex) * n));
  std::lock_guard lock(planner_mutex());
  auto* in = reinterpret_cast<fftw_complex*>(buf_in_);
  auto* out = reinterpret_cast<fftw_complex*>(buf_out_);
  plan_fwd_ = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), in, out, FFTW_FORWARD,
                               FFTW_ESTIMATE);
  plan_inv_ = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), in, out, FFTW_BACKWARD,
                               FFTW_ESTIMATE);
}

Fft2d::~Fft2d() {
  if (plan_fwd_ || plan_inv_) {
    std::lock_guard lock(planner_mutex());
    if (plan_fwd_) fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
    if (plan_inv_) fftw_destroy_plan(static_cast<fftw_plan>(plan_inv_));
  }
  if (buf_in_) fftw_free(buf_in_);
  if (buf_out_) fftw_free(buf_out_);
}

Fft2d::Fft2d(Fft2d&& o) noexcept
    : rows_(o.rows_), cols_(o.cols_), buf_in_(std::exchange(o.buf_in_, nullptr)),
      buf_out_(std::exchange(o.buf_out_, nullptr)), plan_fwd_(std::exchange(o.plan_fwd_, nullptr)),
      plan_inv_(std::exchange(o.plan_inv_, nullptr)) {}

Fft2d& Fft2d::operator=(Fft2d&& o) noexcept {
  if (this != &o) {
    std::swap(rows_, o.rows_);
    std::swap(cols_, o.cols_);
    std::swap(buf_in_, o.buf_in_);
    std::swap(buf_out_, o.buf_out_);
    std::swap(plan_fwd_, o.plan_fwd_);
    std::swap(plan_inv_, o.plan_inv_);
  }
  return *this;
}

void Fft2d::execute(void* plan, const CField& in, CField& out) {
  if (static_cast<std::size_t>(in.rows()) != rows_ || static_cast<std::size_t>(in.cols()) != cols_)
    throw ShapeError("Fft2d: input shape mismatch");
  const std::size_t n = rows_ * cols_;
  std::memcpy(static_cast<void*>(buf_in_), in.data(), n * sizeof(cplx));
  fftw_execute(static_cast<fftw_plan>(plan));
  out.resize(in.rows(), in.cols());
  std::memcpy(static_cast<void*>(out.data()), buf_out_, n * sizeof(cplx));
}

void Fft2d::forward(const CField& in, CField& out) { execute(plan_fwd_, in, out); }

void Fft2d::inverse(const CField& in, CField& out) {
  execute(plan_inv_, in, out);
  out /= static_cast<double>(rows_ * cols_);
}

CField Fft2d::forward(const Field& in) {
  CField c = in.cast<cplx>();
  CField out;
  forward(c, out);
  return out;
}

Field Fft2d::inverse_real(const CField& in, double* imag_norm) {
  CField out;
  inverse(in, out);
  if (imag_norm) *imag_norm = out.imag().matrix().norm();
  return out.real();
}

Field convolve_same(const Field& a, const Field& kernel) {
  const Eigen::Index ny = a.rows(), nx = a.cols();
  const Eigen::Index ky = kernel.rows(), kx = kernel.cols();
  const Eigen::Index cy = ky / 2, cx = kx / 2;
  Field out = Field::Zero(ny, nx);
  const auto nnz = (a != 0.0).count();
  // Direct summation when either operand is small, FFT otherwise.
  if (static_cast<double>(nnz) * static_cast<double>(ky * kx) < 4e6 || ky * kx <= 49) {
    for (Eigen::Index qy = 0; qy < ny; ++qy)
      for (Eigen::Index qx = 0; qx < nx; ++qx) {
        const double s = a(qy, qx);
        if (s == 0.0) continue;
        const Eigen::Index y0 = std::max<Eigen::Index>(0, qy - cy);
        const Eigen::Index y1 = std::min<Eigen::Index>(ny, qy - cy + ky);
        const Eigen::Index x0 = std::max<Eigen::Index>(0, qx - cx);
        const Eigen::Index x1 = std::min<Eigen::Index>(nx, qx - cx + kx);
        for (Eigen::Index py = y0; py < y1; ++py)
          for (Eigen::Index px = x0; px < x1; ++px) out(py, px) += kernel(py - qy + cy, px - qx + cx) * s;
      }
    return out;
  }
  const Eigen::Index py = ny + ky - 1, px = nx + kx - 1;
  Field pa = Field::Zero(py, px), pk = Field::Zero(py, px);
  pa.topLeftCorner(ny, nx) = a;
  pk.topLeftCorner(ky, kx) = kernel;
  Fft2d fft(static_cast<std::size_t>(py), static_cast<std::size_t>(px));
  CField prod = fft.forward(pa) * fft.forward(pk);
  Field full = fft.inverse_real(prod);
  return full.block(cy, cx, ny, nx);
}

}  // namespace psr
