#include "heatmpc/convdiff.hpp"

#include <algorithm>
#include <atomic>

#include <spdlog/spdlog.h>

#include "heatmpc/error.hpp"
#include "heatmpc/parallel.hpp"

namespace heatmpc {

const VelocityField& FrozenAdvection::at(int k) const {
  if (fields.empty()) throw DimensionError("FrozenAdvection: no fields");
  return fields[static_cast<std::size_t>(std::clamp(k, 0, size() - 1))];
}

FrozenAdvection FrozenAdvection::zero(int time_nodes, int space_nodes, std::string provenance) {
  return constant(VelocityField::Zero(space_nodes, 2), time_nodes, std::move(provenance));
}

FrozenAdvection FrozenAdvection::constant(const VelocityField& v, int time_nodes, std::string provenance) {
  FrozenAdvection adv;
  adv.fields.assign(static_cast<std::size_t>(std::max(time_nodes, 1)), v);
  adv.provenance = std::move(provenance);
  return adv;
}

HeatModel::HeatModel(const FEOperators& ops, const PhysicalParams& params, FrozenAdvection adv, double dt)
    : ops_(&ops), params_(params), adv_(std::move(adv)), dt_(dt) {
  if (!(dt > 0.0)) throw ConfigError("HeatModel: dt must be > 0");
  if (adv_.empty()) throw DimensionError("HeatModel: advection has no fields");
  for (const auto& v : adv_.fields)
    if (v.rows() != ops.size()) throw DimensionError("HeatModel: velocity field size does not match mesh");
  static_part_ = params.diffusivity() * ops.K + params.gamma * ops.B_out + params.gamma_c * ops.B_c;
  n_slots_ = adv_.size();
  slots_ = std::make_unique<Slot[]>(static_cast<std::size_t>(n_slots_));
}

SpMat HeatModel::A(int k) const {
  SpMat a = static_part_ + ops_->convection_matrix(adv_.at(k));
  a.makeCompressed();
  return a;
}

HeatModel::Slot& HeatModel::slot(int k) const {
  if (k < 0) throw DimensionError("HeatModel: negative advection index");
  if (k >= n_slots_) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true))
      spdlog::warn("advection requested at node {} beyond the available {}; holding the last field", k, n_slots_);
    k = n_slots_ - 1;
  }
  return slots_[static_cast<std::size_t>(k)];
}

HeatModel::Slot& HeatModel::ensure(int k) const {
  Slot& s = slot(k);
  std::call_once(s.once, [&] {
    s.E = ops_->M + dt_ * A(std::min(k, n_slots_ - 1));
    s.E.makeCompressed();
    s.lu.factorize(s.E, k);
  });
  return s;
}

const SpMat& HeatModel::E(int k) const { return ensure(k).E; }
const StepSolver& HeatModel::solver(int k) const { return ensure(k).lu; }

void HeatModel::prefactor(int begin, int end) const {
  begin = std::max(begin, 0);
  end = std::min(end, n_slots_);
  if (end <= begin) return;
  parallel_for(static_cast<std::size_t>(begin), static_cast<std::size_t>(end),
               [&](std::size_t k) { ensure(static_cast<int>(k)); });
}

Eigen::VectorXd HeatModel::weights(int steps) const { return TimeGrid{0.0, dt_, steps}.trapezoid_weights(); }

Eigen::MatrixXd HeatModel::forward(const Eigen::VectorXd& y0, const Eigen::VectorXd& u, const Eigen::VectorXd& yout,
                                   int offset) const {
  const int nx = num_dofs();
  if (y0.size() != nx) throw DimensionError("forward: y0 size does not match mesh");
  if (u.size() < 1 || yout.size() != u.size()) throw DimensionError("forward: u and yout must share the time grid");
  const int n = static_cast<int>(u.size()) - 1;
  Eigen::MatrixXd y(nx, n + 1);
  y.col(0) = y0;
  for (int j = 1; j <= n; ++j) {
    Eigen::VectorXd rhs = ops_->M * y.col(j - 1);
    rhs += dt_ * params_.gamma * yout[j] * ops_->b_out;
    rhs += dt_ * params_.gamma_c * u[j] * ops_->b_c;
    y.col(j) = solver(offset + j).solve(rhs);
  }
  return y;
}

Eigen::MatrixXd HeatModel::adjoint(const Eigen::MatrixXd& beta, int offset) const {
  const int nx = num_dofs();
  if (beta.rows() != nx || beta.cols() < 1) throw DimensionError("adjoint: beta size does not match mesh");
  const int n = static_cast<int>(beta.cols()) - 1;
  const Eigen::VectorXd alpha = weights(n);
  Eigen::MatrixXd p(nx, n + 1);
  Eigen::VectorXd next = Eigen::VectorXd::Zero(nx);
  for (int j = n; j >= 0; --j) {
    Eigen::VectorXd rhs = ops_->M * next;
    rhs -= alpha[j] * ops_->M_lumped.cwiseProduct(beta.col(j));
    p.col(j) = solver(offset + j).solve_transposed(rhs);
    next = p.col(j);
  }
  return p;
}

Eigen::VectorXd HeatModel::control_trace(const Eigen::MatrixXd& p) const {
  const int n = static_cast<int>(p.cols()) - 1;
  const Eigen::VectorXd alpha = weights(n);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n + 1);
  for (int j = 1; j <= n; ++j) g[j] = dt_ / alpha[j] * params_.gamma_c * ops_->b_c.dot(p.col(j));
  return g;
}

Eigen::VectorXd HeatModel::s_star(const Eigen::MatrixXd& w, int offset) const {
  return -control_trace(adjoint(w, offset));
}

double HeatModel::u_inner(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
  if (a.size() != b.size()) throw DimensionError("u_inner: size mismatch");
  const Eigen::VectorXd alpha = weights(static_cast<int>(a.size()) - 1);
  return (alpha.array() * a.array() * b.array()).sum();
}

double HeatModel::w_inner(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("w_inner: size mismatch");
  const Eigen::VectorXd alpha = weights(static_cast<int>(a.cols()) - 1);
  double s = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    s += alpha[j] * (a.col(j).array() * ops_->M_lumped.array() * b.col(j).array()).sum();
  return s;
}

namespace {

void check_grid(const TimeGrid& grid, Eigen::Index columns, const char* what) {
  if (columns != grid.nodes()) throw DimensionError(std::string(what) + ": data does not match the time grid");
}

}  // namespace

TemperatureTrajectory solve_state(const Eigen::VectorXd& y0, const Eigen::VectorXd& u, const Eigen::VectorXd& yout,
                                  const FrozenAdvection& adv, const TimeGrid& grid, const PhysicalParams& params,
                                  const FEOperators& ops) {
  check_grid(grid, u.size(), "solve_state");
  HeatModel model(ops, params, adv, grid.dt);
  return {model.forward(y0, u, yout), grid};
}

TemperatureTrajectory solve_adjoint(const Eigen::MatrixXd& beta, const TimeGrid& grid, const FrozenAdvection& adv,
                                    const PhysicalParams& params, const FEOperators& ops) {
  check_grid(grid, beta.cols(), "solve_adjoint");
  HeatModel model(ops, params, adv, grid.dt);
  return {model.adjoint(beta), grid};
}

Eigen::VectorXd apply_S_star(const Eigen::MatrixXd& w, const TimeGrid& grid, const FrozenAdvection& adv,
                             const PhysicalParams& params, const FEOperators& ops) {
  check_grid(grid, w.cols(), "apply_S_star");
  HeatModel model(ops, params, adv, grid.dt);
  return model.s_star(w);
}

}  // namespace heatmpc
