#pragma once

#include <Eigen/Core>

namespace heatmpc {

/// Uniform grid t_j = t0 + j dt, j = 0..steps.
struct TimeGrid {
  double t0 = 0.0;
  double dt = 0.01;
  int steps = 0;

  int nodes() const { return steps + 1; }
  double time(int j) const { return t0 + j * dt; }
  double end() const { return time(steps); }

  /// Trapezoidal weights: dt/2 at both ends, dt in between; a single node gets weight dt/2.
  Eigen::VectorXd trapezoid_weights() const {
    Eigen::VectorXd w = Eigen::VectorXd::Constant(nodes(), dt);
    w[0] = 0.5 * dt;
    w[steps] = 0.5 * dt;
    return w;
  }
};

}  // namespace heatmpc
