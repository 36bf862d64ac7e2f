#pragma once

#include <array>
#include <memory>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "heatmpc/mesh.hpp"

namespace heatmpc {

using SpMat = Eigen::SparseMatrix<double>;
/// Nodal velocity field, one row (v_x, v_y) per mesh node.
using VelocityField = Eigen::MatrixX2d;

struct PhysicalParams {
  double rho = 1.0;        // density
  double nu = 0.1;         // kinematic viscosity
  double alpha_exp = 1.0;  // thermal expansion coefficient
  double kappa = 0.025;    // thermal conductivity
  double cp = 1.0;         // isobaric specific heat
  Eigen::Vector2d g{0.0, -9.8};
  double y_ref = 20.0;     // reference temperature for the buoyancy term
  double gamma = 0.1;      // heat transfer coefficient on the outside boundary
  double gamma_c = 1e5;    // heat transfer coefficient on the control boundary

  /// Effective diffusivity kappa / (rho c_p) of the heat equation.
  double diffusivity() const { return kappa / (rho * cp); }
  /// Throws ConfigError unless every positivity requirement holds. `allow_zero` relaxes the
  /// requirement to >= 0 for alpha_exp, gamma and gamma_c (decoupled and insulated tests).
  void validate(bool allow_zero = false) const;
};

class ConvectionAssembler;

/// Every discrete operator on the Q1 space of one mesh.
struct FEOperators {
  SpMat M;    ///< mass, <phi_j, phi_i>_{L2}
  SpMat K;    ///< stiffness, int grad phi_j . grad phi_i
  SpMat B_out;  ///< boundary mass on the outside boundary
  SpMat B_c;    ///< boundary mass on the control boundary
  Eigen::VectorXd b_out;  ///< int_{outside} phi_i ds
  Eigen::VectorXd b_c;    ///< int_{control} phi_i ds
  SpMat W_V;  ///< H1 Gram matrix M + K
  Eigen::VectorXd M_lumped;  ///< row sums of M
  /// Weak derivative matrices (D_d)_{ij} = int phi_i d_d phi_j, d = x, y.
  SpMat Dx, Dy;
  /// Shared assembler for the velocity-dependent convection matrix.
  std::shared_ptr<const ConvectionAssembler> convection;

  int size() const { return static_cast<int>(M.rows()); }
  SpMat convection_matrix(const VelocityField& v) const;
};

/// 2x2 Gauss assembly of all static operators; boundary integrals use 2-point Gauss per edge.
FEOperators assemble_operators(const StructuredQuadMesh& mesh);

/// Assembles C(v)_{ij} = int (v . grad phi_j) phi_i dx for bilinearly interpolated v.
///
/// The sparsity pattern and scatter map are built once per mesh; each assemble() call only
/// refills values, so repeated assembly along a trajectory is cheap and bit-reproducible.
class ConvectionAssembler {
 public:
  explicit ConvectionAssembler(const StructuredQuadMesh& mesh);
  SpMat assemble(const VelocityField& v) const;
  int num_nodes() const { return n_nodes_; }

 private:
  int n_nodes_ = 0;
  std::vector<std::array<int, 4>> elements_;
  SpMat pattern_;
  std::vector<std::array<int, 16>> scatter_;  // element-local (a, b) -> value slot
  // tensor_[c][d][a][b]: contribution of velocity component d at local node c.
  std::array<std::array<std::array<std::array<double, 4>, 4>, 2>, 4> tensor_{};
};

SpMat assemble_convection(const StructuredQuadMesh& mesh, const VelocityField& v);

}  // namespace heatmpc
