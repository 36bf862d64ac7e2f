#include "heatmpc/boussinesq.hpp"

#include <fstream>
#include <sstream>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>
#include <spdlog/spdlog.h>

#include "heatmpc/error.hpp"
#include "heatmpc/matrix_market.hpp"
#include "heatmpc/parallel.hpp"
#include "json.hpp"

namespace heatmpc {

FlowState FlowState::at_rest(int nodes, double y0, double t) {
  FlowState s;
  s.v = VelocityField::Zero(nodes, 2);
  s.p = Eigen::VectorXd::Zero(nodes);
  s.y = Eigen::VectorXd::Constant(nodes, y0);
  s.t = t;
  return s;
}

BoundaryData BoundaryData::constant_control(double u, const Eigen::VectorXd& yout) {
  return {Eigen::VectorXd::Constant(yout.size(), u), yout};
}

namespace {

/// Replaces the rows of boundary nodes by identity rows.
SpMat with_dirichlet_rows(const SpMat& a, const std::vector<char>& boundary) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(a.nonZeros()));
  for (int c = 0; c < a.outerSize(); ++c)
    for (SpMat::InnerIterator it(a, c); it; ++it)
      if (!boundary[static_cast<std::size_t>(it.row())]) t.emplace_back(it.row(), it.col(), it.value());
  for (std::size_t i = 0; i < boundary.size(); ++i)
    if (boundary[i]) t.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
  SpMat out(a.rows(), a.cols());
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

}  // namespace

BoussinesqSolver::BoussinesqSolver(const StructuredQuadMesh& mesh, const FEOperators& ops,
                                   const PhysicalParams& params, double dt)
    : ops_(&ops), params_(params), dt_(dt) {
  params_.validate(true);
  if (!(dt > 0.0)) throw ConfigError("boussinesq: dt must be > 0");
  const int n = ops.size();
  if (mesh.num_nodes() != n) throw DimensionError("boussinesq: mesh and operators differ in size");
  boundary_.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) boundary_[static_cast<std::size_t>(i)] = mesh.on_boundary(i) ? 1 : 0;
  inv_lumped_interior_ = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i)
    if (!boundary_[static_cast<std::size_t>(i)]) inv_lumped_interior_[i] = 1.0 / ops.M_lumped[i];
  const auto Pm = inv_lumped_interior_.asDiagonal();
  pressure_ = SpMat(ops.Dx.transpose() * (Pm * ops.Dx)) + SpMat(ops.Dy.transpose() * (Pm * ops.Dy));
  pressure_.makeCompressed();
  heat_static_ = params_.diffusivity() * ops.K + params_.gamma * ops.B_out + params_.gamma_c * ops.B_c;
  velocity_static_ = (1.0 / dt) * ops.M + params_.nu * ops.K;
}

FlowState BoussinesqSolver::step(const FlowState& s, double u, double yout) const {
  const FEOperators& ops = *ops_;
  const int n = ops.size();
  if (s.v.rows() != n || s.y.size() != n) throw DimensionError("boussinesq: state size does not match the mesh");
  const double rho = params_.rho;

  // Tentative velocity with lagged convection and buoyancy from the old temperature.
  const SpMat Av = with_dirichlet_rows(SpMat(velocity_static_ + ops.convection_matrix(s.v)), boundary_);
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu(Av);
  if (lu.info() != Eigen::Success) throw SolverError("boussinesq: velocity matrix is singular");
  const Eigen::VectorXd dy = s.y.array() - params_.y_ref;
  Eigen::MatrixX2d rhs(n, 2);
  for (int d = 0; d < 2; ++d) {
    rhs.col(d) = ops.M * ((1.0 / dt_) * s.v.col(d) - params_.g[d] * params_.alpha_exp * dy);
    for (int i = 0; i < n; ++i)
      if (boundary_[static_cast<std::size_t>(i)]) rhs(i, d) = 0.0;
  }
  VelocityField vt(n, 2);
  parallel_invoke([&] { vt.col(0) = lu.solve(rhs.col(0)); }, [&] { vt.col(1) = lu.solve(rhs.col(1)); });
  if (!vt.allFinite()) throw SolverError("boussinesq: tentative velocity is not finite");

  // Projection.
  FlowState out;
  out.t = s.t + dt_;
  const Eigen::VectorXd div = ops.Dx.transpose() * vt.col(0) + ops.Dy.transpose() * vt.col(1);
  out.p = Eigen::VectorXd::Zero(n);
  if (div.norm() > 0.0) {
    Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(1e-14);
    cg.setMaxIterations(10 * n);
    cg.compute(pressure_);
    out.p = cg.solve((rho / dt_) * div);
    if (!out.p.allFinite()) throw SolverError("boussinesq: pressure solve failed");
    out.p.array() -= out.p.mean();
  }
  out.v.resize(n, 2);
  out.v.col(0) = vt.col(0) - (dt_ / rho) * inv_lumped_interior_.cwiseProduct(ops.Dx * out.p);
  out.v.col(1) = vt.col(1) - (dt_ / rho) * inv_lumped_interior_.cwiseProduct(ops.Dy * out.p);

  // Temperature with the new velocity.
  const SpMat Ey = ops.M + dt_ * (heat_static_ + ops.convection_matrix(out.v));
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> luy(Ey);
  if (luy.info() != Eigen::Success) throw SolverError("boussinesq: temperature matrix is singular");
  const Eigen::VectorXd ry =
      ops.M * s.y + dt_ * (params_.gamma * yout * ops.b_out + params_.gamma_c * u * ops.b_c);
  out.y = luy.solve(ry);
  if (!out.y.allFinite()) throw SolverError("boussinesq: temperature is not finite");
  return out;
}

std::vector<FlowState> BoussinesqSolver::solve(const FlowState& s0, const BoundaryData& bd,
                                               const TimeGrid& grid) const {
  if (std::abs(grid.dt - dt_) > 1e-12 * dt_) throw ConfigError("boussinesq: grid step differs from the solver step");
  if (bd.u.size() < grid.nodes() || bd.yout.size() < grid.nodes())
    throw DimensionError("boussinesq: boundary data shorter than the time grid");
  std::vector<FlowState> traj;
  traj.reserve(static_cast<std::size_t>(grid.nodes()));
  traj.push_back(s0);
  for (int j = 0; j < grid.steps; ++j) {
    try {
      traj.push_back(step(traj.back(), bd.u[j + 1], bd.yout[j + 1]));
    } catch (const SolverError& e) {
      throw SolverError(e.what(), j + 1);
    }
  }
  return traj;
}

double BoussinesqSolver::divergence_norm(const VelocityField& v) const {
  return (ops_->Dx.transpose() * v.col(0) + ops_->Dy.transpose() * v.col(1)).norm();
}

FlowState step_boussinesq(const FlowState& state, double u, double yout, double dt, const PhysicalParams& params,
                          const StructuredQuadMesh& mesh, const FEOperators& ops) {
  return BoussinesqSolver(mesh, ops, params, dt).step(state, u, yout);
}

std::vector<FlowState> solve_boussinesq(const FlowState& s0, const BoundaryData& bd, const TimeGrid& grid,
                                        const PhysicalParams& params, const StructuredQuadMesh& mesh,
                                        const FEOperators& ops) {
  return BoussinesqSolver(mesh, ops, params, grid.dt).solve(s0, bd, grid);
}

FrozenAdvection advection_from(const std::vector<FlowState>& traj, std::string provenance) {
  FrozenAdvection adv;
  adv.provenance = std::move(provenance);
  adv.fields.reserve(traj.size());
  for (const auto& s : traj) adv.fields.push_back(s.v);
  return adv;
}

Eigen::MatrixXd temperatures(const std::vector<FlowState>& traj) {
  if (traj.empty()) return {};
  Eigen::MatrixXd y(traj.front().y.size(), static_cast<Eigen::Index>(traj.size()));
  for (std::size_t j = 0; j < traj.size(); ++j) y.col(static_cast<Eigen::Index>(j)) = traj[j].y;
  return y;
}

void write_checkpoints(const std::filesystem::path& dir, const std::vector<FlowState>& traj, const TimeGrid& grid,
                       const PhysicalParams& params, const std::vector<int>& indices) {
  std::filesystem::create_directories(dir);
  std::vector<int> sel = indices;
  if (sel.empty())
    for (int j = 0; j < static_cast<int>(traj.size()); ++j) sel.push_back(j);
  nlohmann::json files = nlohmann::json::array();
  for (int j : sel) {
    if (j < 0 || j >= static_cast<int>(traj.size())) throw DimensionError("checkpoint index out of range");
    const auto& s = traj[static_cast<std::size_t>(j)];
    const std::string tag = std::to_string(j);
    mm::write_dense(dir / ("v_" + tag + ".mtx"), s.v, "velocity");
    mm::write_dense(dir / ("p_" + tag + ".mtx"), s.p, "pressure");
    mm::write_dense(dir / ("y_" + tag + ".mtx"), s.y, "temperature");
    files.push_back({{"index", j}, {"t", s.t}, {"v", "v_" + tag + ".mtx"}, {"p", "p_" + tag + ".mtx"},
                     {"y", "y_" + tag + ".mtx"}});
  }
  nlohmann::json doc;
  doc["time"] = {{"t0", grid.t0}, {"dt", grid.dt}, {"steps", grid.steps}};
  doc["physics"] = {{"rho", params.rho},         {"nu", params.nu},       {"alpha", params.alpha_exp},
                    {"kappa", params.kappa},     {"cp", params.cp},       {"g", {params.g[0], params.g[1]}},
                    {"y_ref", params.y_ref},     {"gamma", params.gamma}, {"gamma_c", params.gamma_c}};
  doc["checkpoints"] = files;
  mm::write_text_atomic(dir / "manifest.json", doc.dump(2) + "\n");
}

std::vector<FlowState> read_checkpoints(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ConfigError("checkpoints: missing manifest in " + dir.string());
  const auto doc = nlohmann::json::parse(in);
  std::vector<FlowState> out;
  for (const auto& f : doc.at("checkpoints")) {
    FlowState s;
    s.t = f.at("t").get<double>();
    s.v = mm::read_dense(dir / f.at("v").get<std::string>());
    s.p = mm::read_dense(dir / f.at("p").get<std::string>());
    s.y = mm::read_dense(dir / f.at("y").get<std::string>());
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace heatmpc
