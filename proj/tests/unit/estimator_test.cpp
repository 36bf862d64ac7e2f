#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "heatmpc/estimator.hpp"
#include "heatmpc/pod.hpp"
#include "instances.hpp"
#include "oracles.hpp"

namespace heatmpc {
namespace {

using test::heating_instance;

double u_norm(const Eigen::VectorXd& u, const Eigen::VectorXd& alpha) {
  return std::sqrt((alpha.array() * u.array().square()).sum());
}

double w_norm(const Eigen::MatrixXd& w, const Eigen::VectorXd& alpha, const Eigen::VectorXd& m) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < w.cols(); ++j) s += alpha[j] * w.col(j).cwiseAbs2().dot(m);
  return std::sqrt(s);
}

TEST(Estimator, VanishesAtTheFullOrderOptimum) {
  for (unsigned seed : {7u, 8u, 21u}) {
    auto in = heating_instance(4, seed);
    const auto sol = pdass_solve(*in.model, in.prob, in.data);
    ASSERT_GT(sol.sets.counts().w_lower, 0);
    const auto r = aposteriori_estimate(*in.model, sol.u, sol.w, in.prob, in.data);
    EXPECT_LT(r.e, 1e-6) << "seed " << seed;
    EXPECT_DOUBLE_EQ(r.sigma_ap, 1.0);
  }
}

TEST(Estimator, InactiveRegionsCarryMinusXi) {
  auto in = heating_instance(4, 7);
  const int nt = 5, nx = 9;
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(nt, 27.0);
  const Eigen::MatrixXd w = restore_feasibility(*in.model, u, Eigen::MatrixXd::Constant(nx, nt, 0.5), in.prob, in.data);
  const auto r = aposteriori_estimate(*in.model, u, w, in.prob, in.data);
  const Eigen::MatrixXd y = in.model->forward(in.data.y0, u, in.data.yout);
  int inactive = 0;
  for (int j = 0; j < nt; ++j) {
    EXPECT_EQ(r.zeta_u[j], -r.xi_u[j]);
    for (int i = 0; i < nx; ++i) {
      const double v = y(i, j) + in.prob.eps * w(i, j);
      if (v > in.prob.y_a(i, j) + 1e-6 && v < in.prob.y_b(i, j) - 1e-6) {
        EXPECT_EQ(r.zeta_w(i, j), -r.xi_w(i, j));
        ++inactive;
      }
    }
  }
  EXPECT_GT(inactive, 0);
  EXPECT_LE((r.xi_w - (in.prob.sigma / in.prob.eps) * w).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Estimator, IsDeterministic) {
  auto in = heating_instance(4, 8);
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(5, 20.0);
  const Eigen::MatrixXd w = restore_feasibility(*in.model, u, Eigen::MatrixXd::Zero(9, 5), in.prob, in.data);
  const auto a = aposteriori_estimate(*in.model, u, w, in.prob, in.data);
  const auto b = aposteriori_estimate(*in.model, u, w, in.prob, in.data);
  EXPECT_EQ(a.e, b.e);
  EXPECT_EQ(a.zeta_w, b.zeta_w);
  EXPECT_GT(a.e, 0.0);
}

TEST(Estimator, RejectsInfeasiblePairs) {
  auto in = heating_instance(4, 7);
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(5, 20.0);
  const Eigen::MatrixXd w = Eigen::MatrixXd::Zero(9, 5);
  EXPECT_THROW(aposteriori_estimate(*in.model, u, w, in.prob, in.data), InfeasiblePair);
  Eigen::VectorXd bad = u;
  bad[2] = -1.0;
  const Eigen::MatrixXd wf = restore_feasibility(*in.model, bad, w, in.prob, in.data);
  try {
    aposteriori_estimate(*in.model, bad, wf, in.prob, in.data);
    FAIL() << "expected InfeasiblePair";
  } catch (const InfeasiblePair& e) {
    EXPECT_NEAR(e.violation(), 1.0, 1e-12);
  }
  EXPECT_THROW(aposteriori_estimate(*in.model, Eigen::VectorXd::Zero(4), w, in.prob, in.data), DimensionError);
}

TEST(Estimator, RestoreFeasibilityKeepsFeasibleFieldsAndFixesTheRest) {
  auto in = heating_instance(4, 21);
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(5, 18.0);
  const Eigen::MatrixXd w = restore_feasibility(*in.model, u, Eigen::MatrixXd::Zero(9, 5), in.prob, in.data);
  const Eigen::MatrixXd y = in.model->forward(in.data.y0, u, in.data.yout);
  EXPECT_LE(max_infeasibility(u, w, y, in.prob), 1e-12);
  EXPECT_EQ(restore_feasibility(*in.model, u, w, in.prob, in.data), w);
}

/// Random feasible pairs around the dense QP optimum; the true error is measured against it.
class EstimatorBound : public ::testing::TestWithParam<double> {};

TEST_P(EstimatorBound, HoldsOnRandomFeasiblePairs) {
  auto in = heating_instance(4, 7);
  in.prob.sigma = GetParam();
  const auto dm = test::dense_model(in.s.ops, in.s.params, in.s.adv, in.s.grid.dt);
  const auto opt = test::dense_relaxed_optimum(dm, in.prob, in.data.y0, in.data.yout);
  const auto sol = pdass_solve(*in.model, in.prob, in.data);
  ASSERT_LT((sol.u - opt.u).norm(), 1e-6);
  const Eigen::VectorXd alpha = in.model->weights(4);
  const Eigen::VectorXd& m = in.model->lumped_mass();
  std::mt19937 rng(99);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double scale = std::pow(10.0, -3.0 + 0.2 * trial);
    Eigen::VectorXd u = sol.u;
    for (Eigen::Index j = 0; j < u.size(); ++j)
      u[j] = std::clamp(u[j] + scale * nd(rng), in.prob.u_a[j], in.prob.u_b[j]);
    Eigen::MatrixXd w = sol.w;
    for (Eigen::Index q = 0; q < w.size(); ++q) w.data()[q] += scale * nd(rng);
    w = restore_feasibility(*in.model, u, w, in.prob, in.data);
    const auto r = aposteriori_estimate(*in.model, u, w, in.prob, in.data);
    const double du = u_norm(u - opt.u, alpha), dw = w_norm(w - opt.w, alpha, m);
    EXPECT_GE(r.e, std::hypot(du, dw) * (1.0 - 1e-9)) << "trial " << trial;
    EXPECT_GE(r.e, r.sigma_ap * (du + dw) * (1.0 - 1e-9)) << "trial " << trial;
  }
}

INSTANTIATE_TEST_SUITE_P(Sigma, EstimatorBound, ::testing::Values(1.0, 0.5));

TEST(Estimator, TrendDecreasesWithThePODRank) {
  auto in = heating_instance(8, 7);
  in.prob.y_b.setConstant(25.0);
  const auto sol = pdass_solve(*in.model, in.prob, in.data);
  SnapshotEnsemble primal{sol.y, in.model->weights(8), in.s.ops.W_V};
  SnapshotEnsemble dual{sol.p, in.model->weights(8), in.s.ops.W_V};
  PODBasis basis = compute_pod(stack_ensembles(primal, dual));
  std::vector<double> es;
  for (int ell : {1, 2, 4, 8}) {
    basis.ell = std::min(ell, basis.rank());
    auto red = std::make_shared<const ReducedOperators>(project_operators(basis, in.s.ops, in.s.adv));
    ReducedModel rm(red, in.s.params, in.s.grid.dt, in.s.ops.M_lumped);
    const auto rs = pdass_solve(rm, in.prob, in.data);
    const Eigen::MatrixXd w = restore_feasibility(*in.model, rs.u, rs.w, in.prob, in.data, &rs.sets);
    es.push_back(aposteriori_estimate(*in.model, rs.u, w, in.prob, in.data).e);
  }
  for (std::size_t k = 1; k < es.size(); ++k) EXPECT_LE(es[k], 1.1 * es[k - 1]) << "rank step " << k << " " << es[k - 1] << " -> " << es[k];
  EXPECT_LT(es.back(), es.front());
}

}  // namespace
}  // namespace heatmpc
