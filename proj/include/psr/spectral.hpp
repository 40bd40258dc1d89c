#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "psr/grid.hpp"

namespace psr {

using cplx = std::complex<double>;
using CField = Eigen::Array<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// 2-D complex transform of a fixed shape backed by FFTW (estimate-mode plans,
// so results are reproducible run to run). Forward is unnormalized, inverse is
// scaled by 1 / (rows * cols).
class Fft2d {
 public:
  Fft2d(std::size_t rows, std::size_t cols);
  ~Fft2d();
  Fft2d(const Fft2d&) = delete;
  Fft2d& operator=(const Fft2d&) = delete;
  Fft2d(Fft2d&&) noexcept;
  Fft2d& operator=(Fft2d&&) noexcept;

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  void forward(const CField& in, CField& out);
  void inverse(const CField& in, CField& out);
  CField forward(const Field& in);
  // Real part of the inverse; the discarded imaginary norm goes to `imag_norm`.
  Field inverse_real(const CField& in, double* imag_norm = nullptr);

 private:
  void execute(void* plan, const CField& in, CField& out);
  std::size_t rows_ = 0, cols_ = 0;
  cplx* buf_in_ = nullptr;
  cplx* buf_out_ = nullptr;
  void* plan_fwd_ = nullptr;
  void* plan_inv_ = nullptr;
};

// Moves the centre element (floor(n_y/2), floor(n_x/2)) to (0, 0).
template <class Derived>
auto quadrant_swap(const Eigen::ArrayBase<Derived>& f) {
  using Scalar = typename Derived::Scalar;
  Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(f.rows(), f.cols());
  const Eigen::Index ny = f.rows(), nx = f.cols(), sy = ny / 2, sx = nx / 2;
  for (Eigen::Index y = 0; y < ny; ++y)
    for (Eigen::Index x = 0; x < nx; ++x) out(y, x) = f((y + sy) % ny, (x + sx) % nx);
  return out;
}

// Inverse of quadrant_swap: moves (0, 0) to the centre element.
template <class Derived>
auto center_shift(const Eigen::ArrayBase<Derived>& f) {
  using Scalar = typename Derived::Scalar;
  Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(f.rows(), f.cols());
  const Eigen::Index ny = f.rows(), nx = f.cols(), sy = ny / 2, sx = nx / 2;
  for (Eigen::Index y = 0; y < ny; ++y)
    for (Eigen::Index x = 0; x < nx; ++x) out((y + sy) % ny, (x + sx) % nx) = f(y, x);
  return out;
}

// Linear convolution cropped to the shape of `a`: out(p) = sum_q k(p - q + c) a(q)
// where c = (floor(k_rows/2), floor(k_cols/2)) is the kernel's centre.
Field convolve_same(const Field& a, const Field& kernel);

}  // namespace psr
