#include "heatmpc/pod.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "heatmpc/error.hpp"
#include "heatmpc/matrix_market.hpp"
#include "heatmpc/parallel.hpp"
#include "json.hpp"

namespace heatmpc {

void SnapshotEnsemble::validate() const {
  if (Y.cols() < 1) throw DimensionError("snapshot ensemble has no columns");
  if (alpha.size() != Y.cols()) throw DimensionError("snapshot weights do not match the column count");
  if (W.rows() != Y.rows() || W.cols() != Y.rows()) throw DimensionError("Gram matrix does not match snapshots");
  if ((alpha.array() <= 0.0).any()) throw ConfigError("snapshot weights must be > 0");
}

namespace {

double weighted_energy(const SnapshotEnsemble& e) {
  const Eigen::MatrixXd wy = e.W * e.Y;
  double s = 0.0;
  for (Eigen::Index j = 0; j < e.Y.cols(); ++j) s += e.alpha[j] * e.Y.col(j).dot(wy.col(j));
  return s;
}

}  // namespace

SnapshotEnsemble stack_ensembles(const SnapshotEnsemble& primal, const SnapshotEnsemble& dual) {
  primal.validate();
  dual.validate();
  if (primal.Y.rows() != dual.Y.rows()) throw DimensionError("stack_ensembles: row count mismatch");
  const double ep = weighted_energy(primal), ed = weighted_energy(dual);
  if (ed <= 0.0) return primal;
  if (ep <= 0.0) return dual;
  const double scale = std::sqrt(ep / ed);
  SnapshotEnsemble out;
  out.W = primal.W;
  out.Y.resize(primal.Y.rows(), primal.Y.cols() + dual.Y.cols());
  out.Y << primal.Y, scale * dual.Y;
  out.alpha.resize(out.Y.cols());
  out.alpha << primal.alpha, dual.alpha;
  return out;
}

Eigen::MatrixXd PODBasis::active() const {
  const int l = ell > 0 ? std::min(ell, static_cast<int>(Psi.cols())) : static_cast<int>(Psi.cols());
  return Psi.leftCols(l);
}

double PODBasis::tail(int l) const {
  if (l >= rank()) return 0.0;
  return lambda.tail(rank() - std::max(l, 0)).sum();
}

PODBasis compute_pod(const SnapshotEnsemble& ens) {
  ens.validate();
  const Eigen::VectorXd sqrt_alpha = ens.alpha.cwiseSqrt();
  const Eigen::MatrixXd yd = ens.Y * sqrt_alpha.asDiagonal();
  const Eigen::MatrixXd wyd = ens.W * yd;
  Eigen::MatrixXd gram = yd.transpose() * wyd;
  gram = 0.5 * (gram + gram.transpose()).eval();

  PODBasis basis;
  if (gram.diagonal().maxCoeff() <= 0.0) {
    spdlog::warn("compute_pod: all snapshots vanish, returning an empty basis");
    basis.Psi.resize(ens.Y.rows(), 0);
    return basis;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw SolverError("compute_pod: eigenvalue solver failed");
  const Eigen::Index m = gram.rows();
  const double lambda1 = eig.eigenvalues()[m - 1];
  int d = 0;
  while (d < m && eig.eigenvalues()[m - 1 - d] > 1e-13 * lambda1) ++d;

  basis.lambda.resize(d);
  basis.Psi.resize(ens.Y.rows(), d);
  for (int i = 0; i < d; ++i) {
    const double lam = eig.eigenvalues()[m - 1 - i];
    basis.lambda[i] = lam;
    basis.Psi.col(i) = yd * eig.eigenvectors().col(m - 1 - i) / std::sqrt(lam);
  }

  // Two passes of modified Gram-Schmidt in the W inner product restore orthonormality lost to
  // rounding in the trailing, small-eigenvalue directions.
  for (int pass = 0; pass < 2; ++pass) {
    for (int i = 0; i < d; ++i) {
      Eigen::VectorXd v = basis.Psi.col(i);
      for (int k = 0; k < i; ++k) {
        const Eigen::VectorXd wk = ens.W * basis.Psi.col(k);
        v -= wk.dot(v) * basis.Psi.col(k);
      }
      basis.Psi.col(i) = v / std::sqrt(v.dot(ens.W * v));
    }
  }
  return basis;
}

int select_rank(const PODBasis& basis, double tau1) {
  if (basis.rank() == 0) return 0;
  for (int l = 1; l < basis.rank(); ++l)
    if (basis.tail(l) <= tau1) return l;
  return basis.rank();
}

double projection_error(const SnapshotEnsemble& ens, const PODBasis& basis, int ell) {
  ens.validate();
  const Eigen::MatrixXd psi = basis.Psi.leftCols(std::clamp(ell, 0, basis.rank()));
  const Eigen::MatrixXd coeff = psi.transpose() * (ens.W * ens.Y);
  const Eigen::MatrixXd r = ens.Y - psi * coeff;
  const Eigen::MatrixXd wr = ens.W * r;
  double s = 0.0;
  for (Eigen::Index j = 0; j < r.cols(); ++j) s += ens.alpha[j] * r.col(j).dot(wr.col(j));
  return s;
}

ReducedOperators project_operators(const PODBasis& basis, const FEOperators& ops, const FrozenAdvection& adv) {
  const Eigen::MatrixXd psi = basis.active();
  if (psi.rows() != ops.size()) throw DimensionError("project_operators: basis does not match the mesh");
  if (psi.cols() < 1) throw DimensionError("project_operators: empty basis");
  auto congruence = [&](const SpMat& a) -> Eigen::MatrixXd {
    const Eigen::MatrixXd ap = a * psi;
    return psi.transpose() * ap;
  };
  ReducedOperators r;
  r.Psi = psi;
  r.M = congruence(ops.M);
  r.K = congruence(ops.K);
  r.B_out = congruence(ops.B_out);
  r.B_c = congruence(ops.B_c);
  r.b_out = psi.transpose() * ops.b_out;
  r.b_c = psi.transpose() * ops.b_c;
  r.PsiT_M = (ops.M * psi).transpose();
  r.C.resize(adv.fields.size());
  parallel_for(0, adv.fields.size(),
               [&](std::size_t k) { r.C[k] = congruence(ops.convection_matrix(adv.fields[k])); });
  return r;
}

void SnapshotSelectionConfig::validate() const {
  if (!(rho > 0.0 && rho < varrho && varrho < 1.0))
    throw ConfigError("snapshots: require 0 < rho < varrho < 1");
}

std::vector<Eigen::VectorXd> select_snapshots(const std::vector<Eigen::VectorXd>& old_list,
                                              const std::vector<Eigen::VectorXd>& new_list,
                                              const SnapshotSelectionConfig& cfg, const SpMat& W) {
  cfg.validate();
  std::vector<Eigen::VectorXd> merged = new_list;
  std::vector<Eigen::VectorXd> w_new;
  std::vector<double> norm_new;
  for (const auto& s : new_list) {
    if (s.size() != W.rows()) throw DimensionError("select_snapshots: snapshot size mismatch");
    w_new.push_back(W * s);
    norm_new.push_back(std::sqrt(s.dot(w_new.back())));
  }
  for (const auto& l : old_list) {
    if (l.size() != W.rows()) throw DimensionError("select_snapshots: snapshot size mismatch");
    const double nl = std::sqrt(l.dot(W * l));
    bool matched = false, collinear = false;
    for (std::size_t j = 0; j < new_list.size(); ++j) {
      const double scale = norm_new[j] * nl;
      const double c = std::abs(w_new[j].dot(l));
      if (c > (1.0 - cfg.rho) * scale) collinear = true;
      if (!matched && (1.0 - cfg.varrho) * scale <= c && c <= (1.0 - cfg.rho) * scale) matched = true;
    }
    if (matched && !collinear) merged.push_back(l);
  }
  return merged;
}

void save_basis(const std::filesystem::path& dir, const PODBasis& basis) {
  std::filesystem::create_directories(dir);
  mm::write_dense(dir / "psi.mtx", basis.Psi, "POD basis, one vector per column");
  mm::write_dense(dir / "lambda.mtx", basis.lambda, "POD eigenvalues");
  nlohmann::json doc;
  doc["ell"] = basis.ell;
  doc["rank"] = basis.rank();
  doc["spectrum"] = std::vector<double>(basis.lambda.data(), basis.lambda.data() + basis.lambda.size());
  doc["provenance"] = basis.provenance;
  doc["files"] = {{"psi", "psi.mtx"}, {"lambda", "lambda.mtx"}};
  mm::write_text_atomic(dir / "manifest.json", doc.dump(2) + "\n");
}

PODBasis load_basis(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error("load_basis: missing manifest in " + dir.string());
  const nlohmann::json doc = nlohmann::json::parse(in);
  PODBasis basis;
  basis.Psi = mm::read_dense(dir / doc.at("files").at("psi").get<std::string>());
  const Eigen::MatrixXd lam = mm::read_dense(dir / doc.at("files").at("lambda").get<std::string>());
  basis.lambda = lam.col(0);
  basis.ell = doc.at("ell").get<int>();
  basis.provenance = doc.value("provenance", "");
  return basis;
}

}  // namespace heatmpc
