#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "heatmpc/boussinesq.hpp"
#include "heatmpc/convdiff.hpp"
#include "heatmpc/error.hpp"

namespace heatmpc {
namespace {

PhysicalParams scenario_params() {
  PhysicalParams p;
  p.rho = p.cp = p.alpha_exp = 1.0;
  p.nu = 0.1;
  p.kappa = 0.025;
  p.g = {0.0, -9.8};
  p.y_ref = 20.0;
  p.gamma = 0.1;
  p.gamma_c = 1e5;
  return p;
}

Eigen::VectorXd outside(const TimeGrid& grid) {
  Eigen::VectorXd y(grid.nodes());
  for (int j = 0; j < grid.nodes(); ++j) y[j] = std::max(13.0, 16.0 - grid.time(j));
  return y;
}

TEST(Boussinesq, ConstantEquilibriumIsSteady) {
  const auto mesh = build_mesh(4, 4);
  const auto ops = assemble_operators(mesh);
  PhysicalParams p = scenario_params();
  p.alpha_exp = 0.0;
  const BoussinesqSolver solver(mesh, ops, p, 0.01);
  const FlowState s0 = FlowState::at_rest(mesh.num_nodes(), 20.0);
  FlowState s = s0;
  for (int j = 0; j < 5; ++j) s = solver.step(s, 20.0, 20.0);
  EXPECT_LT((s.y - s0.y).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(s.v.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_NEAR(s.t, 0.05, 1e-15);
}

TEST(Boussinesq, InsulatedPureDiffusionConservesHeat) {
  const auto mesh = build_mesh(5, 4);
  const auto ops = assemble_operators(mesh);
  PhysicalParams p = scenario_params();
  p.alpha_exp = 0.0;
  p.gamma = 0.0;
  p.gamma_c = 0.0;
  const BoussinesqSolver solver(mesh, ops, p, 0.05);
  FlowState s = FlowState::at_rest(mesh.num_nodes(), 0.0);
  std::mt19937 rng(3);
  s.y = test::random_vector(mesh.num_nodes(), rng, 5.0);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(mesh.num_nodes());
  double heat = ones.dot(ops.M * s.y);
  for (int j = 0; j < 10; ++j) {
    s = solver.step(s, 30.0, -10.0);
    const double h = ones.dot(ops.M * s.y);
    EXPECT_NEAR(h, heat, 1e-10);
    heat = h;
  }
}

TEST(Boussinesq, DecoupledTemperatureMatchesConvdiff) {
  const auto mesh = build_mesh(6, 6);
  const auto ops = assemble_operators(mesh);
  PhysicalParams p = scenario_params();
  p.alpha_exp = 0.0;
  p.gamma_c = 5.0;
  const TimeGrid grid{0.0, 0.02, 12};
  FlowState s0 = FlowState::at_rest(mesh.num_nodes(), 20.0);
  // Swirl vanishing on the boundary, decaying under viscosity while the temperature evolves.
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    const double x = mesh.nodes(i, 0), y = mesh.nodes(i, 1);
    const double sx = std::sin(M_PI * x), sy = std::sin(M_PI * y);
    s0.v(i, 0) = sx * sx * 2.0 * sy * std::cos(M_PI * y);
    s0.v(i, 1) = -2.0 * sx * std::cos(M_PI * x) * sy * sy;
  }
  std::mt19937 rng(11);
  s0.y += test::random_vector(mesh.num_nodes(), rng, 1.0);
  Eigen::VectorXd u(grid.nodes());
  for (int j = 0; j < grid.nodes(); ++j) u[j] = 21.0 + std::sin(3.0 * j);
  const BoundaryData bd{u, outside(grid)};
  const auto traj = solve_boussinesq(s0, bd, grid, p, mesh, ops);
  ASSERT_EQ(traj.size(), 13u);
  EXPECT_GT(traj.back().v.cwiseAbs().maxCoeff(), 1e-3);
  const auto ref = solve_state(s0.y, u, bd.yout, advection_from(traj), grid, p, ops);
  EXPECT_LT((temperatures(traj) - ref.values).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Boussinesq, ZeroStepsReturnsTheInitialState) {
  const auto mesh = build_mesh(3, 3);
  const auto ops = assemble_operators(mesh);
  const FlowState s0 = FlowState::at_rest(mesh.num_nodes(), 20.0);
  const TimeGrid grid{0.0, 0.01, 0};
  const auto traj = solve_boussinesq(s0, BoundaryData::constant_control(22.5, Eigen::VectorXd::Constant(1, 16.0)),
                                     grid, scenario_params(), mesh, ops);
  ASSERT_EQ(traj.size(), 1u);
  EXPECT_EQ(traj[0].y, s0.y);
}

class ScenarioRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    mesh_ = new StructuredQuadMesh(build_mesh(12, 12));
    ops_ = new FEOperators(assemble_operators(*mesh_));
    const TimeGrid grid{0.0, 0.01, 100};
    const BoundaryData bd = BoundaryData::constant_control(22.5, outside(grid));
    traj_ = new std::vector<FlowState>(
        solve_boussinesq(FlowState::at_rest(mesh_->num_nodes(), 20.0), bd, grid, scenario_params(), *mesh_, *ops_));
  }
  static void TearDownTestSuite() {
    delete traj_;
    delete ops_;
    delete mesh_;
  }
  static StructuredQuadMesh* mesh_;
  static FEOperators* ops_;
  static std::vector<FlowState>* traj_;
};
StructuredQuadMesh* ScenarioRun::mesh_ = nullptr;
FEOperators* ScenarioRun::ops_ = nullptr;
std::vector<FlowState>* ScenarioRun::traj_ = nullptr;

TEST_F(ScenarioRun, BuoyancyDrivesAFlowByTimeOne) {
  ASSERT_EQ(traj_->size(), 101u);
  EXPECT_NEAR(traj_->back().t, 1.0, 1e-12);
  EXPECT_GT(traj_->back().v.rowwise().norm().maxCoeff(), 1e-2);
  EXPECT_TRUE(traj_->back().y.allFinite());
}

TEST_F(ScenarioRun, ProjectedVelocityIsDiscretelyDivergenceFree) {
  const BoussinesqSolver solver(*mesh_, *ops_, scenario_params(), 0.01);
  for (const auto& s : *traj_) EXPECT_LT(solver.divergence_norm(s.v), 1e-8) << "t = " << s.t;
}

TEST_F(ScenarioRun, TemperatureStaysNearTheDataRange) {
  // Data range [13, 22.5]; allow 5% of it as FE overshoot.
  const double lo = 13.0 - 0.05 * 9.5, hi = 22.5 + 0.05 * 9.5;
  for (const auto& s : *traj_) {
    EXPECT_GE(s.y.minCoeff(), lo);
    EXPECT_LE(s.y.maxCoeff(), hi);
  }
}

TEST_F(ScenarioRun, VelocityVanishesOnTheBoundary) {
  for (int i = 0; i < mesh_->num_nodes(); ++i)
    if (mesh_->on_boundary(i)) EXPECT_EQ(traj_->back().v.row(i).norm(), 0.0);
}

TEST(Boussinesq, FirstOrderSelfConvergenceInTime) {
  const auto mesh = build_mesh(8, 8);
  const auto ops = assemble_operators(mesh);
  const PhysicalParams p = scenario_params();
  const double T = 0.4;
  std::vector<Eigen::VectorXd> finals;
  for (int steps : {20, 40, 80, 160}) {
    const TimeGrid grid{0.0, T / steps, steps};
    const auto traj = solve_boussinesq(FlowState::at_rest(mesh.num_nodes(), 20.0),
                                       BoundaryData::constant_control(22.5, outside(grid)), grid, p, mesh, ops);
    finals.push_back(traj.back().y);
  }
  const double d1 = (finals[0] - finals[1]).norm(), d2 = (finals[1] - finals[2]).norm(),
               d3 = (finals[2] - finals[3]).norm();
  EXPECT_GT(d1 / d2, 1.6);
  EXPECT_LT(d1 / d2, 2.5);
  EXPECT_GT(d2 / d3, 1.6);
  EXPECT_LT(d2 / d3, 2.5);
}

TEST(Boussinesq, CheckpointsRoundTrip) {
  const auto mesh = build_mesh(3, 3);
  const auto ops = assemble_operators(mesh);
  const TimeGrid grid{0.0, 0.01, 4};
  const auto traj = solve_boussinesq(FlowState::at_rest(mesh.num_nodes(), 20.0),
                                     BoundaryData::constant_control(22.5, Eigen::VectorXd::Constant(5, 16.0)), grid,
                                     scenario_params(), mesh, ops);
  const auto dir = std::filesystem::temp_directory_path() / "heatmpc_ckpt_test";
  std::filesystem::remove_all(dir);
  write_checkpoints(dir, traj, grid, scenario_params(), {0, 2, 4});
  const auto back = read_checkpoints(dir);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[1].y, traj[2].y);
  EXPECT_EQ(back[2].v, traj[4].v);
  EXPECT_EQ(back[2].t, traj[4].t);
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.json"));
  std::filesystem::remove_all(dir);
}

TEST(Boussinesq, RejectsBadInput) {
  const auto mesh = build_mesh(3, 3);
  const auto ops = assemble_operators(mesh);
  EXPECT_THROW(BoussinesqSolver bad(mesh, ops, scenario_params(), 0.0), ConfigError);
  const BoussinesqSolver solver(mesh, ops, scenario_params(), 0.01);
  EXPECT_THROW(solver.step(FlowState::at_rest(3, 20.0), 20.0, 20.0), DimensionError);
  EXPECT_THROW(solver.solve(FlowState::at_rest(16, 20.0), BoundaryData::constant_control(1.0, Eigen::VectorXd::Ones(2)),
                            TimeGrid{0.0, 0.01, 4}),
               DimensionError);
}

}  // namespace
}  // namespace heatmpc
