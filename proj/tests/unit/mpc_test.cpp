#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "heatmpc/mpc.hpp"

namespace heatmpc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Plantation {
  StructuredQuadMesh mesh;
  FEOperators ops;
  PhysicalParams params;
};

Plantation small_room(int cells = 4) {
  Plantation p{build_mesh(cells, cells), {}, {}};
  p.ops = assemble_operators(p.mesh);
  p.params.gamma_c = 50.0;
  return p;
}

MPCConfig short_config(int N, int M, int N_t, double tau2) {
  MPCConfig cfg;
  cfg.N = N;
  cfg.M = M;
  cfg.N_t = N_t;
  cfg.dt = 0.01;
  cfg.tau2 = tau2;
  cfg.u_a = [](double) { return 0.0; };
  cfg.u_b = [](double) { return 1e6; };
  cfg.y_a = [](double t) { return 19.5 + 20.0 * t; };
  cfg.y_b = [](double) { return 23.0; };
  cfg.yout = [](double t) { return std::max(13.0, 16.0 - t); };
  cfg.u_init = 22.5;
  cfg.eps = 0.05;
  return cfg;
}

TEST(Snapshots, WindowWithoutMarginHasHorizonPlusOneColumns) {
  const auto room = small_room();
  const BoussinesqPlant plant(room.mesh, room.ops, room.params, 0.01);
  const MPCConfig cfg = short_config(6, 0, 10, 1.0);
  const auto s0 = FlowState::at_rest(room.mesh.num_nodes(), 20.0);
  const auto win = generate_snapshots(plant, s0, 0, cfg.N + cfg.M, Eigen::VectorXd::Constant(7, 22.5), cfg);
  EXPECT_EQ(win.primal.cols(), 7);
  EXPECT_EQ(win.dual.cols(), 7);
  EXPECT_EQ(win.adv.size(), 7);
  EXPECT_EQ(win.primal.col(0), s0.y);
  EXPECT_EQ(win.heat->advection_nodes(), 7);
}

TEST(Snapshots, InactiveConstraintsGiveZeroDuals) {
  const auto room = small_room();
  const BoussinesqPlant plant(room.mesh, room.ops, room.params, 0.01);
  MPCConfig cfg = short_config(5, 2, 10, 1.0);
  cfg.y_a = [](double) { return 0.0; };
  cfg.y_b = [](double) { return 100.0; };
  const auto win = generate_snapshots(plant, FlowState::at_rest(room.mesh.num_nodes(), 20.0), 0, 7,
                                      Eigen::VectorXd::Constant(8, 22.5), cfg);
  EXPECT_EQ(win.dual.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(win.primal.norm(), 0.0);
}

TEST(Snapshots, ViolatedConstraintsGiveNonzeroDuals) {
  const auto room = small_room();
  const BoussinesqPlant plant(room.mesh, room.ops, room.params, 0.01);
  const MPCConfig cfg = short_config(5, 2, 10, 1.0);
  const auto win = generate_snapshots(plant, FlowState::at_rest(room.mesh.num_nodes(), 20.0), 0, 7,
                                      Eigen::VectorXd::Constant(8, 22.5), cfg);
  EXPECT_GT(win.dual.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(win.dual.allFinite());
}

TEST(Snapshots, RejectsAGuessOfTheWrongLength) {
  const auto room = small_room();
  const BoussinesqPlant plant(room.mesh, room.ops, room.params, 0.01);
  const MPCConfig cfg = short_config(5, 2, 10, 1.0);
  EXPECT_THROW(generate_snapshots(plant, FlowState::at_rest(room.mesh.num_nodes(), 20.0), 0, 7,
                                  Eigen::VectorXd::Constant(3, 22.5), cfg),
               DimensionError);
}

class Gate : public ::testing::Test {
 protected:
  MPCResult run(double tau2) const {
    const BoussinesqPlant plant(room_.mesh, room_.ops, room_.params, 0.01);
    return run_mpc(short_config(8, 2, 6, tau2), plant, FlowState::at_rest(room_.mesh.num_nodes(), 20.0));
  }
  static int updates_after_start(const MPCResult& r) {
    int n = 0;
    for (const auto& rec : r.log.records)
      if (rec.updated && rec.step > 0) ++n;
    return n;
  }
  Plantation room_ = small_room();
};

TEST_F(Gate, InfiniteToleranceNeverUpdatesAfterInitialization) {
  const auto r = run(kInf);
  ASSERT_EQ(r.log.records.size(), 6u);
  EXPECT_TRUE(r.log.records[0].updated);
  EXPECT_EQ(updates_after_start(r), 0);
  EXPECT_EQ(r.updates, 0);
}

TEST_F(Gate, ZeroToleranceUpdatesEveryStep) {
  const auto r = run(0.0);
  ASSERT_EQ(r.log.records.size(), 6u);
  for (const auto& rec : r.log.records) {
    EXPECT_TRUE(rec.updated) << "step " << rec.step;
    EXPECT_GT(rec.e, 0.0);
  }
  EXPECT_EQ(r.updates, 5);
}

TEST_F(Gate, FlagIsSetExactlyWhenTheEstimateExceedsTheTolerance) {
  const auto probe = run(kInf);
  // A tolerance between the observed estimates splits the steps.
  std::vector<double> e;
  for (const auto& rec : probe.log.records) e.push_back(rec.e);
  const double tau2 = 0.5 * (*std::min_element(e.begin(), e.end()) + *std::max_element(e.begin(), e.end()));
  const BoussinesqPlant plant(room_.mesh, room_.ops, room_.params, 0.01);
  MPCController ctl(short_config(8, 2, 6, tau2), plant);
  FlowState s = FlowState::at_rest(room_.mesh.num_nodes(), 20.0);
  for (int j = 0; j < 6; ++j) {
    const auto rec = ctl.step(j, s);
    EXPECT_EQ(ctl.flagged(), rec.e > tau2) << "step " << j;
  }
}

TEST_F(Gate, UpdateCountDoesNotGrowWithTheTolerance) {
  int previous = std::numeric_limits<int>::max();
  for (double tau2 : {0.0, 1.0, 3.5, kInf}) {
    const int n = run(tau2).updates;
    EXPECT_LE(n, previous) << "tau2 = " << tau2;
    previous = n;
  }
}

TEST(MPC, PerfectModelRecedingHorizonMatchesTheOpenLoopSolution) {
  const auto room = small_room(3);
  const int nodes = room.mesh.num_nodes(), N_t = 8;
  std::mt19937 rng(5);
  FrozenAdvection adv;
  for (int k = 0; k <= N_t; ++k) adv.fields.push_back(test::random_velocity(nodes, rng, 0.5));
  auto heat = std::make_shared<HeatModel>(room.ops, room.params, adv, 0.01);
  const FrozenFlowPlant plant(heat);
  MPCConfig cfg = short_config(N_t, 0, N_t, kInf);
  cfg.model = PredictionModel::Full;
  cfg.forecast_steps = N_t;
  cfg.y_a = [](double t) { return 19.5 + 30.0 * t; };
  FlowState s0 = FlowState::at_rest(nodes, 20.0);
  s0.v = adv.at(0);
  const auto res = run_mpc(cfg, plant, s0);

  const FullModel model(heat);
  const VirtualControlProblem prob = cfg.problem(0, N_t, nodes);
  const auto open = pdass_solve(model, prob, PrognosisData{s0.y, cfg.forecast(0, N_t), 0});
  ASSERT_GT(open.sets.counts().w_lower, 0);
  ASSERT_EQ(res.controls.size(), N_t);
  for (int j = 0; j < N_t; ++j) EXPECT_NEAR(res.controls[j], open.u[j + 1], 1e-8) << "step " << j;
  EXPECT_LT((res.trajectory.values - open.y).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(MPC, ZeroStepsReturnsTheInitialState) {
  const auto room = small_room(3);
  const BoussinesqPlant plant(room.mesh, room.ops, room.params, 0.01);
  const auto s0 = FlowState::at_rest(room.mesh.num_nodes(), 20.0);
  const auto r = run_mpc(short_config(4, 1, 0, 1.0), plant, s0);
  EXPECT_TRUE(r.log.records.empty());
  EXPECT_EQ(r.trajectory.values.cols(), 1);
  EXPECT_EQ(r.final_state.y, s0.y);
  EXPECT_EQ(r.controls.size(), 0);
}

TEST(MPC, LogHasOneRecordPerStepWithIncreasingTimes) {
  const auto room = small_room(3);
  const BoussinesqPlant plant(room.mesh, room.ops, room.params, 0.01);
  std::vector<StepRecord> streamed;
  const auto r = run_mpc(short_config(5, 1, 7, 3.5), plant, FlowState::at_rest(room.mesh.num_nodes(), 20.0),
                         [&](const StepRecord& rec) { streamed.push_back(rec); });
  ASSERT_EQ(r.log.records.size(), 7u);
  ASSERT_EQ(streamed.size(), 7u);
  for (std::size_t k = 0; k < r.log.records.size(); ++k) {
    const auto& rec = r.log.records[k];
    EXPECT_EQ(rec.step, static_cast<int>(k));
    if (k > 0) EXPECT_GT(rec.t, r.log.records[k - 1].t);
    EXPECT_GE(rec.active_lo, 0);
    EXPECT_GE(rec.active_hi, 0);
    EXPECT_GE(rec.ell, 1);
    EXPECT_GE(rec.pdass_iters, 1);
    EXPECT_LE(rec.y_min, rec.y_mean + 1e-12);
    EXPECT_LE(rec.y_mean, rec.y_max + 1e-12);
    EXPECT_EQ(rec.u_applied, r.controls[static_cast<Eigen::Index>(k)]);
  }
  EXPECT_EQ(r.trajectory.values.cols(), 8);
  std::ostringstream csv;
  r.log.write_csv(csv);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, MPCLog::csv_header());
  EXPECT_EQ(std::count(line.begin(), line.end(), ','), 14);
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 14);
    ++rows;
  }
  EXPECT_EQ(rows, 7);
}

TEST(MPC, RunsAreDeterministic) {
  const auto room = small_room(3);
  const BoussinesqPlant plant(room.mesh, room.ops, room.params, 0.01);
  const auto s0 = FlowState::at_rest(room.mesh.num_nodes(), 20.0);
  const auto a = run_mpc(short_config(5, 1, 4, 0.0), plant, s0);
  const auto b = run_mpc(short_config(5, 1, 4, 0.0), plant, s0);
  EXPECT_EQ(a.controls, b.controls);
  EXPECT_EQ(a.trajectory.values, b.trajectory.values);
  for (std::size_t k = 0; k < a.log.records.size(); ++k) EXPECT_EQ(a.log.records[k].e, b.log.records[k].e);
}

TEST(MPC, StopFlagEndsTheRunAfterTheCurrentStep) {
  const auto room = small_room(3);
  const BoussinesqPlant plant(room.mesh, room.ops, room.params, 0.01);
  std::atomic<bool> stop{false};
  const auto r = run_mpc(short_config(5, 1, 10, kInf), plant, FlowState::at_rest(room.mesh.num_nodes(), 20.0),
                         [&](const StepRecord& rec) {
                           if (rec.step == 2) stop = true;
                         },
                         &stop);
  EXPECT_TRUE(r.interrupted);
  EXPECT_EQ(r.log.records.size(), 3u);
  EXPECT_EQ(r.trajectory.values.cols(), 4);
  EXPECT_EQ(r.final_state.y, r.trajectory.values.col(3));
}

TEST(MPC, ExhaustedWindowIsRefreshedWithoutABasisUpdate) {
  const auto room = small_room(3);
  const BoussinesqPlant plant(room.mesh, room.ops, room.params, 0.01);
  MPCController ctl(short_config(4, 1, 8, kInf), plant);
  FlowState s = FlowState::at_rest(room.mesh.num_nodes(), 20.0);
  for (int j = 0; j < 8; ++j) ctl.step(j, s);
  EXPECT_EQ(ctl.updates(), 0);
  EXPECT_GE(ctl.window_refreshes(), 2);
}

TEST(MPC, AnUpdateThatCannotMeetTheToleranceAborts) {
  const auto room = small_room(3);
  const BoussinesqPlant plant(room.mesh, room.ops, room.params, 0.01);
  MPCConfig cfg = short_config(5, 1, 3, std::numeric_limits<double>::denorm_min());
  cfg.refinements = 1;
  MPCController ctl(cfg, plant);
  FlowState s = FlowState::at_rest(room.mesh.num_nodes(), 20.0);
  EXPECT_THROW(ctl.step(0, s), SolverError);
  EXPECT_EQ(ctl.refinements(), 1);
}

TEST(MPC, RejectsInvalidConfigurations) {
  const auto room = small_room(3);
  const BoussinesqPlant plant(room.mesh, room.ops, room.params, 0.01);
  MPCConfig cfg = short_config(0, 1, 3, 1.0);
  EXPECT_THROW(MPCController(cfg, plant), ConfigError);
  cfg = short_config(3, -1, 3, 1.0);
  EXPECT_THROW(MPCController(cfg, plant), ConfigError);
  cfg = short_config(3, 1, 3, -1.0);
  EXPECT_THROW(MPCController(cfg, plant), ConfigError);
  cfg = short_config(3, 1, 3, 1.0);
  cfg.yout = nullptr;
  EXPECT_THROW(MPCController(cfg, plant), ConfigError);
  cfg = short_config(3, 1, 3, 1.0);
  cfg.dt = 0.02;
  EXPECT_THROW(MPCController(cfg, plant), ConfigError);
  cfg = short_config(3, 1, 5, 1.0);
  cfg.forecast_steps = 4;
  EXPECT_THROW(MPCController(cfg, plant), ConfigError);
}

TEST(ClosedLoopSummaryTest, CountsViolationsAndActivePoints) {
  MPCConfig cfg = short_config(3, 1, 3, 1.0);
  cfg.y_a = [](double t) { return 18.0 + t; };
  MPCLog log;
  auto rec = [](double t, double lo, double hi, double mean, int alo, int ahi) {
    StepRecord r;
    r.t = t;
    r.y_min = lo;
    r.y_max = hi;
    r.y_mean = mean;
    r.active_lo = alo;
    r.active_hi = ahi;
    return r;
  };
  log.records.push_back(rec(0.0, 18.5, 22.0, 20.0, 0, 0));
  log.records.push_back(rec(1.0, 17.0, 23.4, 20.0, 3, 1));
  log.records.push_back(rec(2.0, 19.0, 23.1, 19.9, 2, 0));
  const auto c = summarize(log, cfg, 20);
  EXPECT_EQ(c.steps, 3);
  EXPECT_EQ(c.mean_violations, 1);
  EXPECT_EQ(c.active_total, 6);
  EXPECT_DOUBLE_EQ(c.active_fraction_mean, (0.0 + 0.2 + 0.1) / 3.0);
  EXPECT_DOUBLE_EQ(c.active_fraction_max, 0.2);
  EXPECT_DOUBLE_EQ(c.y_max, 23.4);
  EXPECT_NEAR(c.max_overshoot, 0.4, 1e-12);
  EXPECT_NEAR(c.max_undershoot, 2.0, 1e-12);
  EXPECT_THROW(summarize(log, cfg, 0), DimensionError);
  EXPECT_EQ(summarize(MPCLog{}, cfg, 5).active_total, 0);
}

}  // namespace
}  // namespace heatmpc
