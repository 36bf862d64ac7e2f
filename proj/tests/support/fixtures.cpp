#include "fixtures.hpp"

namespace heatmpc::test {

Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937& rng, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937& rng, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = d(rng);
  return m;
}

VelocityField random_velocity(int nodes, std::mt19937& rng, double scale) {
  return random_matrix(nodes, 2, rng, scale);
}

TinySetup tiny_setup(int steps, double dt, bool advect, unsigned seed) {
  TinySetup s;
  s.mesh = build_mesh(2, 2);
  s.ops = assemble_operators(s.mesh);
  s.params.gamma = 0.5;
  s.params.gamma_c = 2.0;
  s.params.kappa = 0.1;
  s.grid = TimeGrid{0.0, dt, steps};
  std::mt19937 rng(seed);
  s.adv.provenance = advect ? "random" : "zero";
  for (int j = 0; j <= steps; ++j)
    s.adv.fields.push_back(advect ? random_velocity(s.mesh.num_nodes(), rng, 0.5)
                                  : VelocityField::Zero(s.mesh.num_nodes(), 2));
  return s;
}

}  // namespace heatmpc::test
