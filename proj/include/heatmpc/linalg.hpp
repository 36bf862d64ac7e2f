#pragma once

#include <memory>

#include <Eigen/Core>

#include "heatmpc/fem.hpp"

namespace heatmpc {

/// LU factorization of one time-step matrix, reusable for A x = b and A' x = b.
class StepSolver {
 public:
  StepSolver();
  ~StepSolver();
  StepSolver(StepSolver&&) noexcept;
  StepSolver& operator=(StepSolver&&) noexcept;

  /// Throws SolverError tagged with `step` when the matrix is singular.
  void factorize(const SpMat& a, int step = -1);
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::VectorXd solve_transposed(const Eigen::VectorXd& b) const;
  bool ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Sparse direct solver for assembled space-time systems (supernodal LU, COLAMD ordering).
class SparseDirectSolver {
 public:
  SparseDirectSolver();
  ~SparseDirectSolver();
  SparseDirectSolver(SparseDirectSolver&&) noexcept;
  SparseDirectSolver& operator=(SparseDirectSolver&&) noexcept;

  void factorize(const SpMat& a);
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Factorize-and-solve shorthand; throws SolverError on failure or non-finite output.
Eigen::VectorXd sparse_solve(const SpMat& a, const Eigen::VectorXd& b);

}  // namespace heatmpc
