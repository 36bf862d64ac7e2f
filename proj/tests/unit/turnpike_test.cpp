#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "heatmpc/parallel.hpp"
#include "heatmpc/turnpike.hpp"

namespace heatmpc {
namespace {

class Turnpike : public ::testing::Test {
 protected:
  void SetUp() override {
    mesh_ = build_mesh(3, 3);
    ops_ = assemble_operators(mesh_);
    PhysicalParams p;
    p.gamma_c = 50.0;
    std::mt19937 rng(17);
    FrozenAdvection adv;
    for (int k = 0; k <= 30; ++k) adv.fields.push_back(test::random_velocity(mesh_.num_nodes(), rng, 0.3));
    cfg_.heat = std::make_shared<HeatModel>(ops_, p, adv, 0.05);
    cfg_.u_a = [](double) { return 0.0; };
    cfg_.u_b = [](double) { return 1e6; };
    cfg_.y_a = [](double t) { return 17.5 + std::min(t, 2.0); };
    cfg_.y_b = [](double) { return 23.0; };
    cfg_.yout = [](double t) { return std::max(13.0, 16.0 - t); };
    cfg_.eps = 0.05;
  }
  Eigen::VectorXd uniform(double v) const { return Eigen::VectorXd::Constant(mesh_.num_nodes(), v); }

  StructuredQuadMesh mesh_;
  FEOperators ops_;
  TurnpikeConfig cfg_;
};

TEST(StageCostTest, IsNonnegativeAndVanishesAtZero) {
  StageCost l{0.5, Eigen::VectorXd::Constant(4, 0.25)};
  EXPECT_EQ(l(0.0, Eigen::VectorXd::Zero(4)), 0.0);
  EXPECT_DOUBLE_EQ(l(2.0, Eigen::VectorXd::Constant(4, 2.0)), 0.5 * (4.0 + 0.5 * 4.0));
  std::mt19937 rng(1);
  for (int k = 0; k < 20; ++k) EXPECT_GE(l(std::normal_distribution<double>()(rng), test::random_vector(4, rng)), 0.0);
}

TEST(StageCostTest, HNormOfAConstantIsItsValueOnTheUnitSquare) {
  const auto mesh = build_mesh(4, 3);
  const auto ops = assemble_operators(mesh);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Constant(mesh.num_nodes(), 2, 3.0);
  const Eigen::VectorXd n = h_norms(y, ops.M);
  EXPECT_NEAR(n[0], 3.0, 1e-12);
  EXPECT_NEAR(n[1], 3.0, 1e-12);
}

TEST(OverlapMetric, IsTheLargestPairwiseGapOnTheWindow) {
  const Eigen::VectorXd a = (Eigen::VectorXd(5) << 0, 1, 2, 3, 4).finished();
  const Eigen::VectorXd b = (Eigen::VectorXd(5) << 0, 1.5, 2, 2, 9).finished();
  const Eigen::VectorXd c = (Eigen::VectorXd(3) << 1, 1, 2).finished();
  EXPECT_DOUBLE_EQ(overlap_metric({&a, &b}, 1, 3), 1.0);
  EXPECT_DOUBLE_EQ(overlap_metric({&a, &b, &c}, 0, 2), 1.0);
  EXPECT_DOUBLE_EQ(overlap_metric({&a, &b}, 0, 4), 5.0);
  EXPECT_DOUBLE_EQ(series_range({&a, &b}), 9.0);
}

TEST_F(Turnpike, IdenticalRunsHaveZeroOverlap) {
  const auto study = open_loop_study(cfg_, {12, 12}, {uniform(20.0)});
  ASSERT_EQ(study.runs.size(), 2u);
  EXPECT_EQ(study.horizon_overlap(0), 0.0);
  EXPECT_EQ(study.runs[0].out_of_band, 0);
}

TEST_F(Turnpike, StageCostsSumToTheObjective) {
  const auto study = open_loop_study(cfg_, {10, 20}, {uniform(18.0), uniform(22.0)});
  for (const auto& r : study.runs) {
    EXPECT_GT(r.objective, 0.0);
    EXPECT_NEAR(r.cost_sum, r.objective, 1e-10 * r.objective) << "run " << r.id;
  }
}

TEST_F(Turnpike, GridSizesAndCsvRows) {
  EXPECT_EQ(open_loop_study(cfg_, {8}, {uniform(20.0)}).runs.size(), 1u);
  const auto study = open_loop_study(cfg_, {4, 8, 12}, {uniform(17.0), uniform(20.0), uniform(23.0)});
  ASSERT_EQ(study.runs.size(), 9u);
  int expected_rows = 0;
  for (int h = 0; h < 3; ++h)
    for (int i = 0; i < 3; ++i) {
      const auto& r = study.run(h, i);
      EXPECT_EQ(r.horizon, study.horizons[h]);
      EXPECT_EQ(r.init_id, i);
      EXPECT_EQ(r.y_norm.size(), r.horizon + 1);
      EXPECT_NEAR(r.y_norm[0], study.initial_states[i][0], 1e-12);
      expected_rows += r.horizon + 1;
    }
  std::ostringstream out;
  study.write_csv(out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "run_id,horizon,init_id,t,y_norm,stage_cost");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, expected_rows);
}

TEST_F(Turnpike, ResultsDoNotDependOnTheThreadCount) {
  const std::size_t saved = thread_count();
  set_thread_count(1);
  const auto a = open_loop_study(cfg_, {6, 10}, {uniform(19.0), uniform(21.0)});
  set_thread_count(3);
  const auto b = open_loop_study(cfg_, {6, 10}, {uniform(19.0), uniform(21.0)});
  set_thread_count(saved);
  for (std::size_t q = 0; q < a.runs.size(); ++q) {
    EXPECT_EQ(a.runs[q].y_norm, b.runs[q].y_norm);
    EXPECT_EQ(a.runs[q].u, b.runs[q].u);
  }
}

TEST_F(Turnpike, RejectsBadStudies) {
  EXPECT_THROW(open_loop_study(cfg_, {31}, {uniform(20.0)}), ConfigError);
  EXPECT_THROW(open_loop_study(cfg_, {}, {uniform(20.0)}), ConfigError);
  EXPECT_THROW(open_loop_study(cfg_, {5}, {Eigen::VectorXd::Zero(3)}), DimensionError);
  TurnpikeConfig bad = cfg_;
  bad.heat.reset();
  EXPECT_THROW(open_loop_study(bad, {5}, {uniform(20.0)}), ConfigError);
}

}  // namespace
}  // namespace heatmpc
