#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "heatmpc/convdiff.hpp"
#include "heatmpc/fem.hpp"

namespace heatmpc {

/// Weighted snapshot data: column j of Y carries weight alpha_j; W is the V Gram matrix.
struct SnapshotEnsemble {
  Eigen::MatrixXd Y;
  Eigen::VectorXd alpha;
  SpMat W;

  void validate() const;
};

/// Stacks primal and dual families into one ensemble. The dual family is rescaled so both
/// carry the same weighted V energy (a zero family is dropped).
SnapshotEnsemble stack_ensembles(const SnapshotEnsemble& primal, const SnapshotEnsemble& dual);

/// V-orthonormal POD basis with the retained spectrum lambda_1 >= ... >= lambda_{d_n} > 0.
struct PODBasis {
  Eigen::MatrixXd Psi;    ///< all d_n basis vectors, one per column
  Eigen::VectorXd lambda;
  int ell = 0;            ///< selected rank, 0 = unset
  std::string provenance;

  int rank() const { return static_cast<int>(lambda.size()); }
  /// First ell columns of Psi (all of them when ell is unset).
  Eigen::MatrixXd active() const;
  /// Sum of the eigenvalues beyond ell.
  double tail(int ell) const;
};

/// Method of snapshots on the weighted Gramian D^{1/2} Y' W Y D^{1/2}. Eigenvalues below
/// 1e-13 lambda_1 are dropped; the basis is re-orthonormalized in the W inner product.
PODBasis compute_pod(const SnapshotEnsemble& ens);

/// Smallest ell >= 1 with tail(ell) <= tau1 (0 for an empty basis).
int select_rank(const PODBasis& basis, double tau1);

/// Sum_j alpha_j |y_j - P_ell y_j|_V^2, evaluated directly.
double projection_error(const SnapshotEnsemble& ens, const PODBasis& basis, int ell);

/// Galerkin projections Psi' X Psi and Psi' b for a basis of rank ell.
struct ReducedOperators {
  Eigen::MatrixXd Psi;
  Eigen::MatrixXd M, K, B_out, B_c;
  Eigen::VectorXd b_out, b_c;
  std::vector<Eigen::MatrixXd> C;  ///< convection, one per advection node
  Eigen::MatrixXd PsiT_M;          ///< Psi' M, projects mass-weighted full fields

  int dim() const { return static_cast<int>(Psi.cols()); }
};

ReducedOperators project_operators(const PODBasis& basis, const FEOperators& ops, const FrozenAdvection& adv);

struct SnapshotSelectionConfig {
  double rho = 1e-4;
  double varrho = 1e-2;

  void validate() const;
};

/// Alg. 4 merge in the V inner product: S plus every L[i] with
/// (1-varrho)|S_j||L_i| <= |<S_j,L_i>| <= (1-rho)|S_j||L_i| for some j (first match wins).
/// An L[i] that is nearly collinear (|cos| > 1 - rho) with any S[j] is never re-added, which
/// makes the merge idempotent.
std::vector<Eigen::VectorXd> select_snapshots(const std::vector<Eigen::VectorXd>& old_list,
                                              const std::vector<Eigen::VectorXd>& new_list,
                                              const SnapshotSelectionConfig& cfg, const SpMat& W);

/// Persists Psi and lambda as Matrix Market plus manifest.json in `dir`.
void save_basis(const std::filesystem::path& dir, const PODBasis& basis);
PODBasis load_basis(const std::filesystem::path& dir);

}  // namespace heatmpc
