#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "heatmpc/fem.hpp"
#include "heatmpc/linalg.hpp"
#include "heatmpc/time_grid.hpp"

namespace heatmpc {

/// Precomputed velocity data of the prediction model, one field per time node.
struct FrozenAdvection {
  std::vector<VelocityField> fields;
  std::string provenance;

  int size() const { return static_cast<int>(fields.size()); }
  bool empty() const { return fields.empty(); }
  /// Field at node k; indices past the end hold the last field.
  const VelocityField& at(int k) const;

  static FrozenAdvection zero(int time_nodes, int space_nodes, std::string provenance = "zero");
  static FrozenAdvection constant(const VelocityField& v, int time_nodes, std::string provenance = "constant");
};

/// Nodal temperatures (or adjoint values), one column per time node of `grid`.
struct TemperatureTrajectory {
  Eigen::MatrixXd values;
  TimeGrid grid;

  int nodes() const { return static_cast<int>(values.cols()); }
  Eigen::VectorXd at(int j) const { return values.col(j); }
};

/// Implicit-Euler Q1 convection-diffusion model with frozen advection.
///
/// For a horizon of n steps starting at advection node `offset`, with A_j the operator at node
/// offset + j and E_j = M + dt A_j, the forward scheme is
///   E_j y_j = M y_{j-1} + dt (gamma yout_j b_out + gamma_c u_j b_c),  j = 1..n,
/// so u_0 and yout_0 never enter. The adjoint is its exact transpose with respect to the
/// trapezoidal, mass-lumped W inner product:
///   E_j' p_j = M p_{j+1} - alpha_j M_L beta_j,  j = n..0,  p_{n+1} = 0.
/// Step factorizations are cached; the model is safe to share between threads.
class HeatModel {
 public:
  HeatModel(const FEOperators& ops, const PhysicalParams& params, FrozenAdvection adv, double dt);

  int num_dofs() const { return ops_->size(); }
  int advection_nodes() const { return adv_.size(); }
  double dt() const { return dt_; }
  const FEOperators& ops() const { return *ops_; }
  const PhysicalParams& params() const { return params_; }
  const FrozenAdvection& advection() const { return adv_; }

  /// kappa/(rho c_p) K + C(v_k) + gamma B_out + gamma_c B_c.
  SpMat A(int k) const;
  /// M + dt A(k), cached.
  const SpMat& E(int k) const;
  const StepSolver& solver(int k) const;
  /// Factorizes nodes [begin, end) concurrently.
  void prefactor(int begin, int end) const;

  /// Trajectory with columns j = 0..n, n = u.size() - 1; column 0 is y0.
  Eigen::MatrixXd forward(const Eigen::VectorXd& y0, const Eigen::VectorXd& u, const Eigen::VectorXd& yout,
                          int offset = 0) const;
  /// Adjoint p for the space-time field beta (columns j = 0..n).
  Eigen::MatrixXd adjoint(const Eigen::MatrixXd& beta, int offset = 0) const;
  /// (dt/alpha_j) gamma_c b_c' p_j for j >= 1, 0 at j = 0.
  Eigen::VectorXd control_trace(const Eigen::MatrixXd& p) const;
  /// Dual of the control-to-state map: <S_lin u, w>_W = <u, S* w>_U.
  Eigen::VectorXd s_star(const Eigen::MatrixXd& w, int offset = 0) const;

  Eigen::VectorXd weights(int steps) const;
  double u_inner(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
  double w_inner(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const;

 private:
  struct Slot {
    std::once_flag once;
    SpMat E;
    StepSolver lu;
  };
  Slot& slot(int k) const;
  Slot& ensure(int k) const;

  const FEOperators* ops_;
  PhysicalParams params_;
  FrozenAdvection adv_;
  double dt_;
  SpMat static_part_;
  std::unique_ptr<Slot[]> slots_;
  int n_slots_ = 0;
};

/// Free-function forms of the model over a time grid.
TemperatureTrajectory solve_state(const Eigen::VectorXd& y0, const Eigen::VectorXd& u, const Eigen::VectorXd& yout,
                                  const FrozenAdvection& adv, const TimeGrid& grid, const PhysicalParams& params,
                                  const FEOperators& ops);
TemperatureTrajectory solve_adjoint(const Eigen::MatrixXd& beta, const TimeGrid& grid, const FrozenAdvection& adv,
                                    const PhysicalParams& params, const FEOperators& ops);
Eigen::VectorXd apply_S_star(const Eigen::MatrixXd& w, const TimeGrid& grid, const FrozenAdvection& adv,
                             const PhysicalParams& params, const FEOperators& ops);

}  // namespace heatmpc
