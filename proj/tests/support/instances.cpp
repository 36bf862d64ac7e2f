#include "instances.hpp"

namespace heatmpc::test {

Instance heating_instance(int steps, unsigned seed, double eps) {
  Instance in;
  in.s = tiny_setup(steps, 0.1, true, seed);
  const int nx = in.s.mesh.num_nodes(), nt = steps + 1;
  in.heat = std::make_shared<HeatModel>(in.s.ops, in.s.params, in.s.adv, in.s.grid.dt);
  in.model = std::make_unique<FullModel>(in.heat);
  Eigen::VectorXd ya(nt), yb = Eigen::VectorXd::Constant(nt, 23.0);
  for (int j = 0; j < nt; ++j) ya[j] = 19.0 + 0.5 * j;
  in.prob = VirtualControlProblem::uniform(nx, Eigen::VectorXd::Constant(nt, 0.0), Eigen::VectorXd::Constant(nt, 30.0),
                                           ya, yb);
  in.prob.w_a = -1e3;
  in.prob.w_b = 1e3;
  in.prob.eps = eps;
  in.prob.sigma = 1.0;
  in.data.y0 = Eigen::VectorXd::Constant(nx, 20.0);
  in.data.yout = Eigen::VectorXd::Constant(nt, 14.0);
  return in;
}

}  // namespace heatmpc::test
