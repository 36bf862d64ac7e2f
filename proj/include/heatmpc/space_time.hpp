#pragma once

#include <memory>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "heatmpc/convdiff.hpp"
#include "heatmpc/pod.hpp"

namespace heatmpc {

/// One-step discretization of the prediction model in some coordinate space: the FE nodal
/// basis (FullModel) or a POD basis (ReducedModel). Index k is the advection node; a horizon
/// starting at node `offset` uses k = offset + j for its local step j.
///
/// All operations are const and thread-safe.
class SpaceTimeModel {
 public:
  virtual ~SpaceTimeModel() = default;

  virtual int dim() const = 0;
  virtual int space_dofs() const = 0;
  virtual double dt() const = 0;
  virtual int advection_nodes() const = 0;

  /// E_k^{-1} b and E_k^{-T} b.
  virtual Eigen::MatrixXd solve_E(int k, const Eigen::MatrixXd& b) const = 0;
  virtual Eigen::VectorXd solve_Et(int k, const Eigen::VectorXd& b) const = 0;
  virtual Eigen::MatrixXd apply_M(const Eigen::MatrixXd& x) const = 0;
  /// dt gamma_c b_c and dt gamma b_out in model coordinates.
  virtual const Eigen::VectorXd& control_load() const = 0;
  virtual const Eigen::VectorXd& outside_load() const = 0;
  /// Right-hand side contribution M y0 of the first step for a full-space initial field.
  virtual Eigen::VectorXd initial_load(const Eigen::VectorXd& y0) const = 0;
  /// Model-space representation of the functional v -> <f, v>_{M_L} for a nodal field f.
  virtual Eigen::MatrixXd project_lumped(const Eigen::MatrixXd& f) const = 0;
  /// Nodal values of model coordinates.
  virtual Eigen::MatrixXd lift(const Eigen::MatrixXd& x) const = 0;
  /// Rows `rows` of lift(x).
  virtual Eigen::MatrixXd lift_rows(const std::vector<int>& rows, const Eigen::MatrixXd& x) const = 0;

  /// Assembled forms, used by the sparse KKT route.
  virtual SpMat E_matrix(int k) const = 0;
  virtual SpMat M_matrix() const = 0;
  /// L' diag(weights) L where L = lift restricted to `rows`.
  virtual SpMat mixed_block(const std::vector<int>& rows, const Eigen::VectorXd& weights) const = 0;
  /// Row sums of the FE mass matrix.
  virtual const Eigen::VectorXd& lumped_mass() const = 0;

  /// Forward trajectory of n = u.size() - 1 steps, lifted; column 0 is y0.
  Eigen::MatrixXd forward(const Eigen::VectorXd& y0, const Eigen::VectorXd& u, const Eigen::VectorXd& yout,
                          int offset = 0) const;
  /// Adjoint E_j' p_j = M p_{j+1} - alpha_j M_L beta_j for a nodal field beta, in model coordinates.
  Eigen::MatrixXd adjoint_coords(const Eigen::MatrixXd& beta, int offset = 0) const;
  Eigen::MatrixXd adjoint(const Eigen::MatrixXd& beta, int offset = 0) const { return lift(adjoint_coords(beta, offset)); }
  /// (dt/alpha_j) gamma_c b_c' p_j from model coordinates (0 at j = 0).
  Eigen::VectorXd control_trace(const Eigen::MatrixXd& p_coords) const;
  /// u -> S_lin* w: minus the control trace of the adjoint of w.
  Eigen::VectorXd s_star(const Eigen::MatrixXd& w, int offset = 0) const { return -control_trace(adjoint_coords(w, offset)); }
  Eigen::VectorXd weights(int steps) const { return TimeGrid{0.0, dt(), steps}.trapezoid_weights(); }
};

class FullModel : public SpaceTimeModel {
 public:
  explicit FullModel(std::shared_ptr<const HeatModel> heat);

  int dim() const override { return heat_->num_dofs(); }
  int space_dofs() const override { return heat_->num_dofs(); }
  double dt() const override { return heat_->dt(); }
  int advection_nodes() const override { return heat_->advection_nodes(); }
  Eigen::MatrixXd solve_E(int k, const Eigen::MatrixXd& b) const override;
  Eigen::VectorXd solve_Et(int k, const Eigen::VectorXd& b) const override;
  Eigen::MatrixXd apply_M(const Eigen::MatrixXd& x) const override;
  const Eigen::VectorXd& control_load() const override { return control_; }
  const Eigen::VectorXd& outside_load() const override { return outside_; }
  Eigen::VectorXd initial_load(const Eigen::VectorXd& y0) const override;
  Eigen::MatrixXd project_lumped(const Eigen::MatrixXd& f) const override;
  Eigen::MatrixXd lift(const Eigen::MatrixXd& x) const override { return x; }
  Eigen::MatrixXd lift_rows(const std::vector<int>& rows, const Eigen::MatrixXd& x) const override;
  SpMat E_matrix(int k) const override { return heat_->E(k); }
  SpMat M_matrix() const override { return heat_->ops().M; }
  SpMat mixed_block(const std::vector<int>& rows, const Eigen::VectorXd& weights) const override;
  const Eigen::VectorXd& lumped_mass() const override { return heat_->ops().M_lumped; }

  const HeatModel& heat() const { return *heat_; }

 private:
  std::shared_ptr<const HeatModel> heat_;
  Eigen::VectorXd control_, outside_;
};

/// Galerkin-projected model on span(Psi); every step matrix is factorized up front.
class ReducedModel : public SpaceTimeModel {
 public:
  ReducedModel(std::shared_ptr<const ReducedOperators> red, const PhysicalParams& params, double dt,
               const Eigen::VectorXd& lumped_mass);

  int dim() const override { return red_->dim(); }
  int space_dofs() const override { return static_cast<int>(red_->Psi.rows()); }
  double dt() const override { return dt_; }
  int advection_nodes() const override { return static_cast<int>(E_.size()); }
  Eigen::MatrixXd solve_E(int k, const Eigen::MatrixXd& b) const override;
  Eigen::VectorXd solve_Et(int k, const Eigen::VectorXd& b) const override;
  Eigen::MatrixXd apply_M(const Eigen::MatrixXd& x) const override { return red_->M * x; }
  const Eigen::VectorXd& control_load() const override { return control_; }
  const Eigen::VectorXd& outside_load() const override { return outside_; }
  Eigen::VectorXd initial_load(const Eigen::VectorXd& y0) const override { return red_->PsiT_M * y0; }
  Eigen::MatrixXd project_lumped(const Eigen::MatrixXd& f) const override;
  Eigen::MatrixXd lift(const Eigen::MatrixXd& x) const override { return red_->Psi * x; }
  Eigen::MatrixXd lift_rows(const std::vector<int>& rows, const Eigen::MatrixXd& x) const override;
  SpMat E_matrix(int k) const override;
  SpMat M_matrix() const override;
  SpMat mixed_block(const std::vector<int>& rows, const Eigen::VectorXd& weights) const override;
  const Eigen::VectorXd& lumped_mass() const override { return lumped_; }

  const ReducedOperators& operators() const { return *red_; }
  const Eigen::MatrixXd& E_dense(int k) const;

 private:
  int node(int k) const;

  std::shared_ptr<const ReducedOperators> red_;
  double dt_;
  Eigen::VectorXd lumped_;
  Eigen::VectorXd control_, outside_;
  std::vector<Eigen::MatrixXd> E_;
  std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>> lu_;
};

}  // namespace heatmpc
