#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "heatmpc/convdiff.hpp"
#include "heatmpc/fem.hpp"
#include "heatmpc/mesh.hpp"
#include "heatmpc/time_grid.hpp"

namespace heatmpc {

struct FlowState {
  VelocityField v;    ///< nodal velocity
  Eigen::VectorXd p;  ///< nodal pressure, zero mean
  Eigen::VectorXd y;  ///< nodal temperature
  double t = 0.0;

  static FlowState at_rest(int nodes, double y0, double t = 0.0);
};

/// Control and outside temperature on every node of a time grid.
struct BoundaryData {
  Eigen::VectorXd u, yout;

  /// Constant control, outside temperature given per node.
  static BoundaryData constant_control(double u, const Eigen::VectorXd& yout);
};

/// Q1-Q1 Chorin projection scheme with lagged convection.
///
/// One step from t to t + dt:
///   1. (M/dt + nu K + C(v)) v~ = M v/dt - M g alpha (y - y_ref), v~ = 0 on the boundary;
///   2. A p = (rho/dt) sum_d D_d' v~_d with A = sum_d D_d' P M_L^{-1} D_d (P drops boundary rows);
///   3. v' = v~ - (dt/rho) P M_L^{-1} D_d p, which makes sum_d D_d' v'_d vanish;
///   4. (M + dt (kappa/(rho c_p) K + C(v') + gamma B_out + gamma_c B_c)) y' = M y + dt (gamma yout' b_out + gamma_c u' b_c).
/// Step 4 is the convdiff step with the new velocity frozen at the new time node. A is singular
/// on constants (and on the Q1-Q1 spurious pressure modes); the consistent system is solved by
/// preconditioned CG and p is shifted to zero mean.
class BoussinesqSolver {
 public:
  BoussinesqSolver(const StructuredQuadMesh& mesh, const FEOperators& ops, const PhysicalParams& params, double dt);

  /// u and yout are the values at the new time level.
  FlowState step(const FlowState& s, double u, double yout) const;
  /// States at every node of `grid`; entry 0 is `s0`, and step j -> j+1 uses bd.u[j+1], bd.yout[j+1].
  std::vector<FlowState> solve(const FlowState& s0, const BoundaryData& bd, const TimeGrid& grid) const;

  /// |sum_d D_d' v_d|_2, the divergence the projection removes.
  double divergence_norm(const VelocityField& v) const;
  double dt() const { return dt_; }
  const PhysicalParams& params() const { return params_; }

 private:
  const FEOperators* ops_;
  PhysicalParams params_;
  double dt_;
  std::vector<char> boundary_;
  Eigen::VectorXd inv_lumped_interior_;
  SpMat pressure_;
  SpMat heat_static_;
  SpMat velocity_static_;
};

FlowState step_boussinesq(const FlowState& state, double u, double yout, double dt, const PhysicalParams& params,
                          const StructuredQuadMesh& mesh, const FEOperators& ops);
std::vector<FlowState> solve_boussinesq(const FlowState& s0, const BoundaryData& bd, const TimeGrid& grid,
                                        const PhysicalParams& params, const StructuredQuadMesh& mesh,
                                        const FEOperators& ops);

/// Velocity fields of a trajectory as prediction-model advection.
FrozenAdvection advection_from(const std::vector<FlowState>& traj, std::string provenance = "boussinesq");
/// Temperatures of a trajectory, one column per state.
Eigen::MatrixXd temperatures(const std::vector<FlowState>& traj);

/// Writes v_<j>.mtx, p_<j>.mtx, y_<j>.mtx for each selected index and manifest.json with the
/// time grid, parameters and file list. An empty `indices` selects every state.
void write_checkpoints(const std::filesystem::path& dir, const std::vector<FlowState>& traj, const TimeGrid& grid,
                       const PhysicalParams& params, const std::vector<int>& indices = {});
/// Reads the checkpoints listed in a manifest.
std::vector<FlowState> read_checkpoints(const std::filesystem::path& dir);

}  // namespace heatmpc
