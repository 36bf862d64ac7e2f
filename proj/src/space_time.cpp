#include "heatmpc/space_time.hpp"

#include <algorithm>
#include <mutex>

#include <spdlog/spdlog.h>

#include "heatmpc/error.hpp"
#include "heatmpc/parallel.hpp"

namespace heatmpc {

Eigen::MatrixXd SpaceTimeModel::forward(const Eigen::VectorXd& y0, const Eigen::VectorXd& u,
                                        const Eigen::VectorXd& yout, int offset) const {
  const int n = static_cast<int>(u.size()) - 1;
  if (n < 0) throw DimensionError("forward: empty control");
  if (yout.size() != u.size()) throw DimensionError("forward: yout and u lengths differ");
  if (y0.size() != space_dofs()) throw DimensionError("forward: initial field size mismatch");
  Eigen::MatrixXd y(space_dofs(), n + 1);
  y.col(0) = y0;
  Eigen::VectorXd x;
  for (int j = 1; j <= n; ++j) {
    Eigen::VectorXd rhs = j == 1 ? initial_load(y0) : Eigen::VectorXd(apply_M(x));
    rhs += yout[j] * outside_load() + u[j] * control_load();
    x = solve_E(offset + j, rhs);
    y.col(j) = lift(x);
  }
  return y;
}

Eigen::MatrixXd SpaceTimeModel::adjoint_coords(const Eigen::MatrixXd& beta, int offset) const {
  if (beta.rows() != space_dofs()) throw DimensionError("adjoint: field size mismatch");
  const int n = static_cast<int>(beta.cols()) - 1;
  const Eigen::VectorXd alpha = weights(n);
  const Eigen::MatrixXd load = project_lumped(beta);
  Eigen::MatrixXd p(dim(), n + 1);
  Eigen::VectorXd next = Eigen::VectorXd::Zero(dim());
  for (int j = n; j >= 0; --j) {
    Eigen::VectorXd rhs = -alpha[j] * load.col(j);
    if (j < n) rhs += apply_M(next);
    next = solve_Et(offset + j, rhs);
    p.col(j) = next;
  }
  return p;
}

Eigen::VectorXd SpaceTimeModel::control_trace(const Eigen::MatrixXd& p) const {
  const int n = static_cast<int>(p.cols()) - 1;
  const Eigen::VectorXd alpha = weights(n);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n + 1);
  for (int j = 1; j <= n; ++j) g[j] = control_load().dot(p.col(j)) / alpha[j];
  return g;
}

FullModel::FullModel(std::shared_ptr<const HeatModel> heat) : heat_(std::move(heat)) {
  if (!heat_) throw ConfigError("FullModel: null heat model");
  const auto& pr = heat_->params();
  control_ = heat_->dt() * pr.gamma_c * heat_->ops().b_c;
  outside_ = heat_->dt() * pr.gamma * heat_->ops().b_out;
}

Eigen::MatrixXd FullModel::solve_E(int k, const Eigen::MatrixXd& b) const {
  Eigen::MatrixXd x(b.rows(), b.cols());
  const auto& lu = heat_->solver(k);
  if (b.cols() < 16) {
    for (Eigen::Index c = 0; c < b.cols(); ++c) x.col(c) = lu.solve(b.col(c));
  } else {
    parallel_for(0, static_cast<std::size_t>(b.cols()), [&](std::size_t c) {
      const auto ci = static_cast<Eigen::Index>(c);
      x.col(ci) = lu.solve(b.col(ci));
    });
  }
  return x;
}

Eigen::VectorXd FullModel::solve_Et(int k, const Eigen::VectorXd& b) const {
  return heat_->solver(k).solve_transposed(b);
}

Eigen::MatrixXd FullModel::apply_M(const Eigen::MatrixXd& x) const { return heat_->ops().M * x; }

Eigen::VectorXd FullModel::initial_load(const Eigen::VectorXd& y0) const { return heat_->ops().M * y0; }

Eigen::MatrixXd FullModel::project_lumped(const Eigen::MatrixXd& f) const {
  return heat_->ops().M_lumped.asDiagonal() * f;
}

Eigen::MatrixXd FullModel::lift_rows(const std::vector<int>& rows, const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
  return out;
}

SpMat FullModel::mixed_block(const std::vector<int>& rows, const Eigen::VectorXd& w) const {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) t.emplace_back(rows[r], rows[r], w[static_cast<Eigen::Index>(r)]);
  SpMat out(dim(), dim());
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

ReducedModel::ReducedModel(std::shared_ptr<const ReducedOperators> red, const PhysicalParams& params, double dt,
                           const Eigen::VectorXd& lumped_mass)
    : red_(std::move(red)), dt_(dt), lumped_(lumped_mass) {
  if (!red_) throw ConfigError("ReducedModel: null operators");
  if (dt <= 0.0) throw ConfigError("ReducedModel: dt must be > 0");
  if (red_->C.empty()) throw DimensionError("ReducedModel: no advection nodes");
  if (lumped_.size() != red_->Psi.rows()) throw DimensionError("ReducedModel: lumped mass size mismatch");
  control_ = dt * params.gamma_c * red_->b_c;
  outside_ = dt * params.gamma * red_->b_out;
  const Eigen::MatrixXd stat =
      params.diffusivity() * red_->K + params.gamma * red_->B_out + params.gamma_c * red_->B_c;
  const std::size_t nodes = red_->C.size();
  E_.resize(nodes);
  lu_.resize(nodes);
  parallel_for(0, nodes, [&](std::size_t k) {
    E_[k] = red_->M + dt * (stat + red_->C[k]);
    lu_[k].compute(E_[k]);
  });
}

int ReducedModel::node(int k) const {
  const int n = static_cast<int>(E_.size());
  if (k < 0) throw DimensionError("ReducedModel: negative advection node");
  if (k >= n) {
    static std::once_flag warned;
    std::call_once(warned, [&] {
      spdlog::warn("ReducedModel: advection node {} past the window ({}), holding the last field", k, n);
    });
    return n - 1;
  }
  return k;
}

const Eigen::MatrixXd& ReducedModel::E_dense(int k) const { return E_[node(k)]; }

Eigen::MatrixXd ReducedModel::solve_E(int k, const Eigen::MatrixXd& b) const {
  Eigen::MatrixXd x = lu_[node(k)].solve(b);
  if (!x.allFinite()) throw SolverError("reduced step solve produced non-finite values", k);
  return x;
}

Eigen::VectorXd ReducedModel::solve_Et(int k, const Eigen::VectorXd& b) const {
  Eigen::VectorXd x = lu_[node(k)].transpose().solve(b);
  if (!x.allFinite()) throw SolverError("reduced adjoint step solve produced non-finite values", k);
  return x;
}

Eigen::MatrixXd ReducedModel::project_lumped(const Eigen::MatrixXd& f) const {
  return red_->Psi.transpose() * (lumped_.asDiagonal() * f);
}

Eigen::MatrixXd ReducedModel::lift_rows(const std::vector<int>& rows, const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd psi_rows(static_cast<Eigen::Index>(rows.size()), dim());
  for (std::size_t r = 0; r < rows.size(); ++r) psi_rows.row(static_cast<Eigen::Index>(r)) = red_->Psi.row(rows[r]);
  return psi_rows * x;
}

SpMat ReducedModel::E_matrix(int k) const { return E_dense(k).sparseView(); }

SpMat ReducedModel::M_matrix() const { return red_->M.sparseView(); }

SpMat ReducedModel::mixed_block(const std::vector<int>& rows, const Eigen::VectorXd& w) const {
  Eigen::MatrixXd psi_rows(static_cast<Eigen::Index>(rows.size()), dim());
  for (std::size_t r = 0; r < rows.size(); ++r) psi_rows.row(static_cast<Eigen::Index>(r)) = red_->Psi.row(rows[r]);
  const Eigen::MatrixXd block = psi_rows.transpose() * w.asDiagonal() * psi_rows;
  return block.sparseView();
}

}  // namespace heatmpc
