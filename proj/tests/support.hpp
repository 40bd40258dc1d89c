#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include <Eigen/Core>

#include "psr/grid.hpp"

namespace test {

inline psr::Field random_field(Eigen::Index ny, Eigen::Index nx, std::mt19937_64& rng, double lo = -1.0,
                               double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  psr::Field f(ny, nx);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = u(rng);
  return f;
}

inline Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

// Full linear convolution, length |g| + |a| - 1.
inline Eigen::VectorXd brute_conv1d(const Eigen::VectorXd& g, const Eigen::VectorXd& a) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(g.size() + a.size() - 1);
  for (Eigen::Index i = 0; i < g.size(); ++i)
    for (Eigen::Index j = 0; j < a.size(); ++j) out(i + j) += g(i) * a(j);
  return out;
}

// out(p) = sum_q k((p - q + c) mod n) a(q), c the centre pixel.
inline psr::Field brute_circular_conv(const psr::Field& k, const psr::Field& a) {
  const Eigen::Index ny = a.rows(), nx = a.cols(), cy = ny / 2, cx = nx / 2;
  psr::Field out = psr::Field::Zero(ny, nx);
  for (Eigen::Index py = 0; py < ny; ++py)
    for (Eigen::Index px = 0; px < nx; ++px) {
      double s = 0.0;
      for (Eigen::Index qy = 0; qy < ny; ++qy)
        for (Eigen::Index qx = 0; qx < nx; ++qx)
          s += k(((py - qy + cy) % ny + ny) % ny, ((px - qx + cx) % nx + nx) % nx) * a(qy, qx);
      out(py, px) = s;
    }
  return out;
}

// Point-symmetric about the centre pixel under wrap-around: k(c + d) = k(c - d).
inline psr::Field symmetrize(const psr::Field& g) {
  const Eigen::Index ny = g.rows(), nx = g.cols(), cy = ny / 2, cx = nx / 2;
  psr::Field k(ny, nx);
  for (Eigen::Index y = 0; y < ny; ++y)
    for (Eigen::Index x = 0; x < nx; ++x)
      k(y, x) = 0.5 * (g(y, x) + g(((2 * cy - y) % ny + ny) % ny, ((2 * cx - x) % nx + nx) % nx));
  return k;
}

inline double brute_l21(const Eigen::MatrixXd& a) {
  double s = 0.0;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    double g = 0.0;
    for (Eigen::Index m = 0; m < a.cols(); ++m) g += a(r, m) * a(r, m);
    s += std::sqrt(g);
  }
  return s;
}

inline double rel_err(const psr::Field& a, const psr::Field& b) {
  const double scale = std::max(b.matrix().norm(), 1e-300);
  return (a - b).matrix().norm() / scale;
}

// Fresh directory below the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("psr_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace test
