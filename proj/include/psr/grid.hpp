#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "psr/errors.hpp"

namespace psr {

// Row-major 2-D arrays indexed (iy, ix); x is the fastest-varying axis.
using Field = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using FieldF = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Axis-aligned rectangle in metres, (x, y) is the lower corner.
struct Rect {
  double x = 0.0;
  double y = 0.0;
  double width = 0.0;
  double height = 0.0;

  bool contains(Point p, double tol = 0.0) const {
    return p.x >= x - tol && p.x <= x + width + tol && p.y >= y - tol && p.y <= y + height + tol;
  }
  Point center() const { return {x + 0.5 * width, y + 0.5 * height}; }
};

// Pixel (ix, iy) has its centre at (ix * dx, iy * dy).
struct Grid2D {
  std::size_t n_x = 1;
  std::size_t n_y = 1;
  double dx = 1.0;
  double dy = 1.0;

  std::size_t size() const { return n_x * n_y; }
  double x(std::size_t ix) const { return static_cast<double>(ix) * dx; }
  double y(std::size_t iy) const { return static_cast<double>(iy) * dy; }
  // Centre pixel used for kernels: (floor(n_y / 2), floor(n_x / 2)).
  std::size_t center_ix() const { return n_x / 2; }
  std::size_t center_iy() const { return n_y / 2; }
  Point center() const { return {x(center_ix()), y(center_iy())}; }
  // Rectangle spanned by the pixel centres.
  Rect extent() const {
    return {0.0, 0.0, static_cast<double>(n_x - 1) * dx, static_cast<double>(n_y - 1) * dy};
  }
  Field zeros() const { return Field::Zero(static_cast<Eigen::Index>(n_y), static_cast<Eigen::Index>(n_x)); }

  void validate() const {
    if (n_x < 1 || n_y < 1) throw ParameterError("grid needs at least one pixel per axis");
    if (!(dx > 0.0) || !(dy > 0.0)) throw ParameterError("grid pitch must be positive");
  }

  bool operator==(const Grid2D&) const = default;
};

inline void require_shape(const Field& f, const Grid2D& g, const char* what) {
  if (static_cast<std::size_t>(f.rows()) != g.n_y || static_cast<std::size_t>(f.cols()) != g.n_x)
    throw ShapeError(std::string(what) + ": field shape does not match grid");
}

}  // namespace psr
