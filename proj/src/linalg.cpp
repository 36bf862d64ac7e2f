#include "heatmpc/linalg.hpp"

#include <Eigen/SparseLU>

#include "heatmpc/error.hpp"

namespace heatmpc {

struct StepSolver::Impl {
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  bool ready = false;
  int step = -1;
};

StepSolver::StepSolver() : impl_(std::make_unique<Impl>()) {}
StepSolver::~StepSolver() = default;
StepSolver::StepSolver(StepSolver&&) noexcept = default;
StepSolver& StepSolver::operator=(StepSolver&&) noexcept = default;

void StepSolver::factorize(const SpMat& a, int step) {
  impl_->step = step;
  impl_->lu.compute(a);
  if (impl_->lu.info() != Eigen::Success)
    throw SolverError("LU factorization failed: " + impl_->lu.lastErrorMessage(), step);
  impl_->ready = true;
}

Eigen::VectorXd StepSolver::solve(const Eigen::VectorXd& b) const {
  if (!impl_->ready) throw SolverError("StepSolver used before factorize", impl_->step);
  Eigen::VectorXd x = impl_->lu.solve(b);
  if (!x.allFinite()) throw SolverError("non-finite solution in step solve", impl_->step);
  return x;
}

Eigen::VectorXd StepSolver::solve_transposed(const Eigen::VectorXd& b) const {
  if (!impl_->ready) throw SolverError("StepSolver used before factorize", impl_->step);
  Eigen::VectorXd x = impl_->lu.transpose().solve(b);
  if (!x.allFinite()) throw SolverError("non-finite solution in transposed step solve", impl_->step);
  return x;
}

bool StepSolver::ready() const { return impl_->ready; }

struct SparseDirectSolver::Impl {
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  bool ready = false;
};

SparseDirectSolver::SparseDirectSolver() : impl_(std::make_unique<Impl>()) {}
SparseDirectSolver::~SparseDirectSolver() = default;
SparseDirectSolver::SparseDirectSolver(SparseDirectSolver&&) noexcept = default;
SparseDirectSolver& SparseDirectSolver::operator=(SparseDirectSolver&&) noexcept = default;

void SparseDirectSolver::factorize(const SpMat& a) {
  impl_->lu.compute(a);
  if (impl_->lu.info() != Eigen::Success) throw SolverError("sparse LU factorization failed: " + impl_->lu.lastErrorMessage());
  impl_->ready = true;
}

Eigen::VectorXd SparseDirectSolver::solve(const Eigen::VectorXd& b) const {
  if (!impl_->ready) throw SolverError("SparseDirectSolver used before factorize");
  Eigen::VectorXd x = impl_->lu.solve(b);
  if (impl_->lu.info() != Eigen::Success || !x.allFinite()) throw SolverError("sparse LU solve failed");
  return x;
}

Eigen::VectorXd sparse_solve(const SpMat& a, const Eigen::VectorXd& b) {
  SparseDirectSolver s;
  s.factorize(a);
  return s.solve(b);
}

}  // namespace heatmpc
