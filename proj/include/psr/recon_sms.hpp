#pragma once

#include <cstddef>
#include <memory>
#include <variant>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "psr/grid.hpp"
#include "psr/phantom.hpp"
#include "psr/solver_core.hpp"
#include "psr/thermal_model.hpp"

namespace psr {

// Row-major flattening, x fastest.
Eigen::VectorXd vectorize(const Field& field);
Field devectorize(const Eigen::VectorXd& v, const Grid2D& grid);

// One diagonal block of the stacked operator: a convolution with a fixed
// generator, mapping N source pixels to a zero-padded data vector.
class ConvolutionBlock {
 public:
  virtual ~ConvolutionBlock() = default;
  virtual Eigen::Index rows() const = 0;
  virtual Eigen::Index cols() const = 0;
  virtual Eigen::VectorXd apply(const Eigen::VectorXd& a) const = 0;
  virtual Eigen::VectorXd apply_transpose(const Eigen::VectorXd& y) const = 0;
  // h^T h as a dense N x N matrix.
  virtual Eigen::MatrixXd gram() const = 0;
  // Places a measured frame in the output window matching the kernel centre.
  virtual Eigen::VectorXd pad_data(const Field& frame) const = 0;
  // Number of doubles held by the operator.
  virtual std::size_t storage_size() const = 0;
};

// h(Phi_r): the (2N-1) x N lower-triangular Toeplitz matrix of the full 1-D
// convolution with the vectorized kernel, stored as its generator only.
class ConvMatrix final : public ConvolutionBlock {
 public:
  // `center` is the index of the kernel centre inside the generator; the data
  // window of the output starts there.
  explicit ConvMatrix(Eigen::VectorXd generator, Eigen::Index center = 0);

  Eigen::Index rows() const override { return 2 * n() - 1; }
  Eigen::Index cols() const override { return n(); }
  Eigen::Index n() const { return generator_.size(); }
  Eigen::Index center() const { return center_; }
  const Eigen::VectorXd& generator() const { return generator_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& a) const override;
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& y) const override;
  Eigen::MatrixXd gram() const override;
  Eigen::VectorXd pad_data(const Field& frame) const override;
  std::size_t storage_size() const override { return static_cast<std::size_t>(generator_.size()); }

  Eigen::SparseMatrix<double> to_sparse() const;

 private:
  Eigen::VectorXd generator_;
  Eigen::Index center_ = 0;
};

ConvMatrix build_conv_matrix(const Eigen::VectorXd& psf_vec, Eigen::Index center = 0);
// Generator and centre taken from a kernel field centred at its centre pixel.
ConvMatrix build_conv_matrix(const PsfField& psf);

// Strict 2-D linear convolution (block Toeplitz with Toeplitz blocks), output
// (2 n_y - 1) x (2 n_x - 1) flattened row-major.
class Conv2dMatrix final : public ConvolutionBlock {
 public:
  explicit Conv2dMatrix(Field kernel);

  Eigen::Index rows() const override { return (2 * kernel_.rows() - 1) * (2 * kernel_.cols() - 1); }
  Eigen::Index cols() const override { return kernel_.size(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& a) const override;
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& y) const override;
  Eigen::MatrixXd gram() const override;
  Eigen::VectorXd pad_data(const Field& frame) const override;
  std::size_t storage_size() const override { return static_cast<std::size_t>(kernel_.size()); }

 private:
  Field kernel_;
};

// H = blockdiag(h, ..., h) and the stacked padded data T_R0.
struct StackedSystem {
  std::shared_ptr<const ConvolutionBlock> block;
  Eigen::MatrixXd data;  // column m is T_r0^m
  std::size_t n_m() const { return static_cast<std::size_t>(data.cols()); }

  // H A with A as N x n_m, result (2N-1) x n_m.
  Eigen::MatrixXd apply(const GroupMatrix& a) const;
  Eigen::MatrixXd apply_transpose(const Eigen::MatrixXd& y) const;
  // Explicit sparse H for small problems.
  Eigen::SparseMatrix<double> to_sparse() const;
};

StackedSystem build_stacked_system(const MeasurementSet& data, const PsfField& psf, bool strict_2d);

// Solve context for the x-update: (H^T H + rho I) X = H^T T_R0 + rho V. The
// block normal matrix is identical for every measurement, so a single
// factorization serves all n_m blocks.
class SmsProblem {
 public:
  SmsProblem(const MeasurementSet& data, const PsfField& psf, const ReconConfig& config);

  const StackedSystem& system() const { return system_; }
  const Grid2D& grid() const { return grid_; }

  void set_rho(double rho);
  void x_update(const GroupMatrix& v, GroupMatrix& x) const;
  double data_misfit(const GroupMatrix& a) const;  // 1/2 ||H A - T_R0||^2

  // Factorizations currently alive; all blocks share one.
  long factorization_use_count() const { return factor_.use_count(); }
  bool uses_iterative_solver() const { return !factor_; }

  // Balanced-rho runs refactorize as the penalty changes and restore the
  // starting penalty afterwards.
  AdmmOutcome<GroupMatrix> run(const ReconConfig& config);
  ReconResult solve(const ReconConfig& config);

 private:
  struct Factorization {
    Eigen::LLT<Eigen::MatrixXd> llt;
  };

  void cg_solve(const GroupMatrix& rhs, GroupMatrix& x) const;

  Grid2D grid_;
  StackedSystem system_;
  Eigen::MatrixXd gram_;  // empty when over the memory cap
  Eigen::MatrixXd htt_;   // H^T T_R0, N x n_m
  double data_sq_norm_ = 0.0;
  double rho_ = 0.0;
  double cg_tol_ = 1e-10;
  std::size_t memory_cap_ = 0;
  std::shared_ptr<const Factorization> factor_;
};

ReconResult reconstruct_sms(const MeasurementSet& data, const PsfField& psf, const ReconConfig& config);

}  // namespace psr
