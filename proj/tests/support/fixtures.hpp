#pragma once

#include <random>

#include <Eigen/Core>

#include "heatmpc/convdiff.hpp"
#include "heatmpc/fem.hpp"
#include "heatmpc/mesh.hpp"
#include "heatmpc/time_grid.hpp"

namespace heatmpc::test {

/// 3x3-node problem used by the oracle comparisons.
struct TinySetup {
  StructuredQuadMesh mesh;
  FEOperators ops;
  PhysicalParams params;
  TimeGrid grid;
  FrozenAdvection adv;
};

/// nx = ny = 2 cells on the unit square, moderate gamma_c so the problem is well scaled.
/// With `advect` the velocity field is random and different at every time node.
TinySetup tiny_setup(int steps, double dt = 0.1, bool advect = true, unsigned seed = 7);

Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937& rng, double scale = 1.0);
Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937& rng, double scale = 1.0);
VelocityField random_velocity(int nodes, std::mt19937& rng, double scale = 1.0);

}  // namespace heatmpc::test
