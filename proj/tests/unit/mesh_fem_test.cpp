#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "heatmpc/error.hpp"
#include "heatmpc/fem.hpp"
#include "heatmpc/mesh.hpp"

namespace heatmpc {
namespace {

Eigen::MatrixXd dense(const SpMat& a) { return Eigen::MatrixXd(a); }

// 1D linear-element mass and stiffness on a uniform grid, assembled by hand.
Eigen::MatrixXd mass_1d(int cells, double h) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(cells + 1, cells + 1);
  for (int e = 0; e < cells; ++e) {
    m(e, e) += h / 3.0;
    m(e + 1, e + 1) += h / 3.0;
    m(e, e + 1) += h / 6.0;
    m(e + 1, e) += h / 6.0;
  }
  return m;
}

Eigen::MatrixXd stiffness_1d(int cells, double h) {
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(cells + 1, cells + 1);
  for (int e = 0; e < cells; ++e) {
    k(e, e) += 1.0 / h;
    k(e + 1, e + 1) += 1.0 / h;
    k(e, e + 1) -= 1.0 / h;
    k(e + 1, e) -= 1.0 / h;
  }
  return k;
}

// Row-major node order j*(nx+1)+i is the Kronecker product (y-matrix) x (x-matrix).
Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd k(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return k;
}

// Convection oracle with a 5-point Gauss rule per axis and independently coded shape functions.
Eigen::MatrixXd convection_oracle(const StructuredQuadMesh& mesh, const VelocityField& v) {
  const std::array<double, 5> x{-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                0.9061798459386640};
  const std::array<double, 5> w{0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                                0.2369268850561891};
  const int n = mesh.num_nodes();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  const double hx = mesh.hx(), hy = mesh.hy();
  for (const auto& el : mesh.elements) {
    for (int qi = 0; qi < 5; ++qi) {
      for (int qj = 0; qj < 5; ++qj) {
        const double s = 0.5 * (x[qi] + 1.0), r = 0.5 * (x[qj] + 1.0);  // in [0,1]^2
        const double weight = w[qi] * w[qj] * 0.25 * hx * hy;
        // local nodes: (0,0), (1,0), (1,1), (0,1)
        const std::array<double, 4> phi{(1 - s) * (1 - r), s * (1 - r), s * r, (1 - s) * r};
        const std::array<double, 4> dphix{-(1 - r) / hx, (1 - r) / hx, r / hx, -r / hx};
        const std::array<double, 4> dphiy{-(1 - s) / hy, -s / hy, s / hy, (1 - s) / hy};
        double vx = 0.0, vy = 0.0;
        for (int a = 0; a < 4; ++a) {
          vx += phi[a] * v(el[a], 0);
          vy += phi[a] * v(el[a], 1);
        }
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) c(el[a], el[b]) += weight * (vx * dphix[b] + vy * dphiy[b]) * phi[a];
      }
    }
  }
  return c;
}

TEST(BuildMesh, SingleCell) {
  const auto mesh = build_mesh(1, 1);
  EXPECT_EQ(mesh.num_nodes(), 4);
  EXPECT_EQ(mesh.num_elements(), 1);
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(mesh.on_boundary(i));
}

TEST(BuildMesh, PaperScaleNodeCount) {
  EXPECT_EQ(build_mesh(40, 42).num_nodes(), 1763);
  EXPECT_EQ(build_mesh(28, 60).num_nodes(), 1769);
}

TEST(BuildMesh, BottomEdgeControlTags) {
  const auto mesh = build_mesh(5, 3);
  int control = 0;
  for (int k = 0; k < mesh.num_nodes(); ++k) {
    const bool bottom = mesh.nodes(k, 1) == 0.0;
    if (mesh.tags[k] == BoundaryTag::Control) {
      ++control;
      EXPECT_TRUE(bottom);
    }
    const bool boundary = bottom || mesh.nodes(k, 1) == 1.0 || mesh.nodes(k, 0) == 0.0 || mesh.nodes(k, 0) == 1.0;
    EXPECT_EQ(mesh.on_boundary(k), boundary) << k;
  }
  EXPECT_EQ(control, 6);
}

TEST(BuildMesh, RowMajorOrdering) {
  const auto mesh = build_mesh(3, 2, {0.0, 3.0, 0.0, 2.0});
  for (int j = 0; j <= 2; ++j)
    for (int i = 0; i <= 3; ++i) {
      EXPECT_DOUBLE_EQ(mesh.nodes(mesh.node_index(i, j), 0), i);
      EXPECT_DOUBLE_EQ(mesh.nodes(mesh.node_index(i, j), 1), j);
    }
}

TEST(BuildMesh, RejectsInvalidInput) {
  EXPECT_THROW(build_mesh(0, 3), ConfigError);
  EXPECT_THROW(build_mesh(3, -1), ConfigError);
  EXPECT_THROW(build_mesh(2, 2, {0.0, 1.0, 0.5, 0.5}), ConfigError);
  EXPECT_THROW(build_mesh(2, 2, {1.0, 0.0, 0.0, 1.0}), ConfigError);
}

TEST(BuildMesh, OtherControlEdges) {
  const auto mesh = build_mesh(4, 2, {}, Edge::Left);
  int control = 0;
  for (int k = 0; k < mesh.num_nodes(); ++k)
    if (mesh.tags[k] == BoundaryTag::Control) {
      ++control;
      EXPECT_EQ(mesh.nodes(k, 0), 0.0);
    }
  EXPECT_EQ(control, 3);
  EXPECT_EQ(edge_from_string(to_string(Edge::Top)), Edge::Top);
  EXPECT_THROW(edge_from_string("diagonal"), ConfigError);
}

TEST(MeshJson, RoundTrip) {
  const auto mesh = build_mesh(3, 4, {0.0, 2.0, -1.0, 1.0}, Edge::Right);
  const auto back = mesh_from_json(mesh_to_json(mesh));
  EXPECT_EQ(back.nx, 3);
  EXPECT_EQ(back.ny, 4);
  EXPECT_EQ(back.control_edge, Edge::Right);
  EXPECT_EQ(back.nodes, mesh.nodes);
  EXPECT_EQ(back.elements, mesh.elements);
  EXPECT_EQ(back.tags, mesh.tags);
}

TEST(MeshJson, RejectsTamperedNodes) {
  auto doc = mesh_to_json(build_mesh(2, 2));
  doc["nodes"][4][0] = 0.75;
  EXPECT_THROW(mesh_from_json(doc), ConfigError);
}

TEST(AssembleOperators, SingleElementMassPattern) {
  const auto ops = assemble_operators(build_mesh(1, 1, {0.0, 2.0, 0.0, 3.0}));
  const Eigen::MatrixXd m = dense(ops.M);
  const double area = 6.0;
  // node order (0,0), (1,0), (0,1), (1,1): (0,1) and (1,0) are adjacent, (0,3) opposite.
  EXPECT_NEAR(m(0, 0), area / 9.0, 1e-14);
  EXPECT_NEAR(m(0, 1), area / 18.0, 1e-14);
  EXPECT_NEAR(m(0, 2), area / 18.0, 1e-14);
  EXPECT_NEAR(m(0, 3), area / 36.0, 1e-14);
  EXPECT_NEAR(m(1, 2), area / 36.0, 1e-14);
}

TEST(AssembleOperators, TensorProductOracle) {
  const int nx = 4, ny = 3;
  const Rectangle dom{0.0, 2.0, 0.0, 1.5};
  const auto mesh = build_mesh(nx, ny, dom);
  const auto ops = assemble_operators(mesh);
  const double hx = mesh.hx(), hy = mesh.hy();
  const Eigen::MatrixXd mx = mass_1d(nx, hx), my = mass_1d(ny, hy);
  const Eigen::MatrixXd kx = stiffness_1d(nx, hx), ky = stiffness_1d(ny, hy);
  EXPECT_LT((dense(ops.M) - kron(my, mx)).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LT((dense(ops.K) - kron(my, kx) - kron(ky, mx)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AssembleOperators, PartitionOfUnity) {
  for (auto [nx, ny] : {std::pair{1, 1}, std::pair{3, 5}, std::pair{16, 16}}) {
    const auto ops = assemble_operators(build_mesh(nx, ny));
    EXPECT_NEAR(Eigen::MatrixXd(ops.M).sum(), 1.0, 1e-12);
    EXPECT_NEAR(ops.b_c.sum(), 1.0, 1e-13);
    EXPECT_NEAR(ops.b_out.sum(), 3.0, 1e-13);
    EXPECT_NEAR(ops.M_lumped.sum(), 1.0, 1e-12);
    EXPECT_NEAR(Eigen::MatrixXd(ops.B_c).sum(), 1.0, 1e-13);
    EXPECT_NEAR(Eigen::MatrixXd(ops.B_out).sum(), 3.0, 1e-13);
  }
}

TEST(AssembleOperators, SymmetryAndDefiniteness) {
  const auto ops = assemble_operators(build_mesh(6, 5));
  const Eigen::MatrixXd m = dense(ops.M), k = dense(ops.K), w = dense(ops.W_V);
  EXPECT_LT((m - m.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((k - k.transpose()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((w - m - k).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff(), 0.0);
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(w).eigenvalues().minCoeff(), 0.0);
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k).eigenvalues().minCoeff(), -1e-12);
  EXPECT_LT((k * Eigen::VectorXd::Ones(k.rows())).cwiseAbs().maxCoeff(), 1e-12);

  std::mt19937 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd x = test::random_vector(m.rows(), rng);
    EXPECT_GT(x.dot(m * x), 0.0);
    EXPECT_GT(x.dot(w * x), 0.0);
  }
}

TEST(AssembleOperators, LumpedMassAreRowSums) {
  const auto ops = assemble_operators(build_mesh(3, 3));
  const Eigen::VectorXd rows = dense(ops.M).rowwise().sum();
  EXPECT_LT((rows - ops.M_lumped).cwiseAbs().maxCoeff(), 1e-15);
  // corner quarter-cell, edge half-cell, interior full cell
  const double cell = 1.0 / 9.0;
  EXPECT_NEAR(ops.M_lumped[0], cell / 4.0, 1e-15);
  EXPECT_NEAR(ops.M_lumped[1], cell / 2.0, 1e-15);
  EXPECT_NEAR(ops.M_lumped[5], cell, 1e-15);
}

TEST(AssembleOperators, Deterministic) {
  const auto mesh = build_mesh(7, 4);
  const auto a = assemble_operators(mesh);
  const auto b = assemble_operators(mesh);
  auto same = [](const SpMat& x, const SpMat& y) {
    return x.nonZeros() == y.nonZeros() &&
           std::equal(x.valuePtr(), x.valuePtr() + x.nonZeros(), y.valuePtr()) &&
           std::equal(x.innerIndexPtr(), x.innerIndexPtr() + x.nonZeros(), y.innerIndexPtr());
  };
  EXPECT_TRUE(same(a.M, b.M));
  EXPECT_TRUE(same(a.K, b.K));
  EXPECT_TRUE(same(a.B_c, b.B_c));
  EXPECT_TRUE(same(a.B_out, b.B_out));
  EXPECT_EQ(a.b_c, b.b_c);
  std::mt19937 rng(5);
  const VelocityField v = test::random_velocity(mesh.num_nodes(), rng);
  EXPECT_TRUE(same(a.convection_matrix(v), b.convection_matrix(v)));
}

TEST(Convection, ZeroField) {
  const auto mesh = build_mesh(3, 3);
  const SpMat c = assemble_convection(mesh, VelocityField::Zero(mesh.num_nodes(), 2));
  EXPECT_EQ(dense(c).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Convection, ConstantFieldSingleElement) {
  const auto mesh = build_mesh(1, 1);
  VelocityField v = VelocityField::Zero(4, 2);
  v.col(0).setOnes();
  const Eigen::MatrixXd c = dense(assemble_convection(mesh, v));
  EXPECT_LT((c - convection_oracle(mesh, v)).cwiseAbs().maxCoeff(), 1e-12);
  // int phi_0 d_x phi_0 over the unit square = -1/6
  EXPECT_NEAR(c(0, 0), -1.0 / 6.0, 1e-13);
}

TEST(Convection, RandomBilinearFieldMatchesOracle) {
  const auto mesh = build_mesh(3, 2, {0.0, 1.5, 0.0, 1.0});
  std::mt19937 rng(11);
  const VelocityField v = test::random_velocity(mesh.num_nodes(), rng, 2.0);
  const Eigen::MatrixXd c = dense(assemble_convection(mesh, v));
  EXPECT_LT((c - convection_oracle(mesh, v)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Convection, LinearInVelocity) {
  const auto mesh = build_mesh(4, 4);
  const ConvectionAssembler conv(mesh);
  std::mt19937 rng(13);
  const VelocityField v1 = test::random_velocity(mesh.num_nodes(), rng);
  const VelocityField v2 = test::random_velocity(mesh.num_nodes(), rng);
  const double a = 0.7, b = -2.3;
  const Eigen::MatrixXd lhs = dense(conv.assemble(a * v1 + b * v2));
  const Eigen::MatrixXd rhs = a * dense(conv.assemble(v1)) + b * dense(conv.assemble(v2));
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Convection, SizeMismatch) {
  const auto mesh = build_mesh(2, 2);
  EXPECT_THROW(assemble_convection(mesh, VelocityField::Zero(5, 2)), DimensionError);
}

TEST(Convection, SkewSymmetryForSolenoidalField) {
  // v = curl of psi = sin^2(pi x) sin^2(pi y): divergence free, zero on the boundary.
  const double pi = std::acos(-1.0);
  double previous = 1.0;
  for (int n : {8, 16, 32}) {
    const auto mesh = build_mesh(n, n);
    VelocityField v(mesh.num_nodes(), 2);
    for (int k = 0; k < mesh.num_nodes(); ++k) {
      const double x = mesh.nodes(k, 0), y = mesh.nodes(k, 1);
      v(k, 0) = 2.0 * pi * std::pow(std::sin(pi * x), 2) * std::sin(pi * y) * std::cos(pi * y);
      v(k, 1) = -2.0 * pi * std::pow(std::sin(pi * y), 2) * std::sin(pi * x) * std::cos(pi * x);
    }
    const SpMat c = assemble_convection(mesh, v);
    const SpMat sym = SpMat(c + SpMat(c.transpose()));
    const double ratio = dense(sym).norm() / dense(c).norm();
    EXPECT_LT(ratio, previous);
    previous = ratio;
  }
  EXPECT_LT(previous, 0.05);
}

}  // namespace
}  // namespace heatmpc
