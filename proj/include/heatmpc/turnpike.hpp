#pragma once

#include <iosfwd>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "heatmpc/convdiff.hpp"
#include "heatmpc/mpc.hpp"
#include "heatmpc/pdass.hpp"

namespace heatmpc {

/// l(u, w) = (|u|^2 + sigma |w|_H^2) / 2 with the lumped-mass H norm.
struct StageCost {
  double sigma = 1.0;
  Eigen::VectorXd lumped_mass;

  double operator()(double u, const Eigen::VectorXd& w) const;
};

/// sqrt(y' M y) of every column, the consistent-mass H norm.
Eigen::VectorXd h_norms(const Eigen::MatrixXd& y, const SpMat& M);

struct TurnpikeConfig {
  /// Full-order model whose advection covers the longest horizon.
  std::shared_ptr<const HeatModel> heat;
  TimeFunction u_a, u_b, y_a, y_b, yout;
  double w_a = -1e9, w_b = 1e9;
  double eps = 0.025, sigma = 1.0, eta_u = 1.0, eta_w = 1.0;
  PDASSOptions pdass;
  /// Band, relative to the reference series range, that counts a point as close.
  double band = 0.02;

  VirtualControlProblem problem(int steps) const;
};

struct TurnpikeRun {
  int id = 0;
  int horizon = 0;
  int init_id = 0;
  Eigen::VectorXd t, y_norm, stage_cost;
  Eigen::VectorXd u;
  double objective = 0.0;  ///< J from the PDASS solution
  double cost_sum = 0.0;   ///< trapezoidal sum of stage_cost
  int iterations = 0;
  int out_of_band = -1;    ///< points outside the band around the reference run (-1 = no reference)
};

struct TurnpikeStudy {
  std::vector<int> horizons;
  std::vector<Eigen::VectorXd> initial_states;
  std::vector<TurnpikeRun> runs;  ///< horizon-major: id = h * inits + i

  const TurnpikeRun& run(int horizon_index, int init_id) const;
  /// max over [0.2, 0.8] T_min of the pairwise y_norm differences between horizons for one
  /// initial state, and the same value relative to the range of the compared series.
  double horizon_overlap(int init_id) const;
  double horizon_overlap_relative(int init_id) const;
  /// max over [start_fraction T, T] of the pairwise differences between initial states, relative
  /// to the range of the compared series.
  double init_spread_relative(int horizon_index, double start_fraction) const;

  static const char* csv_header();
  void write_csv(std::ostream& out) const;
};

/// Largest pairwise difference of the series on nodes [begin, end].
double overlap_metric(const std::vector<const Eigen::VectorXd*>& series, int begin, int end);
/// max - min over all entries of the series.
double series_range(const std::vector<const Eigen::VectorXd*>& series);

/// One full-order open-loop solve per (horizon, initial state), run concurrently. The reference
/// for the out-of-band count is the run of the longest horizon with the same initial state.
TurnpikeStudy open_loop_study(const TurnpikeConfig& cfg, const std::vector<int>& horizons,
                              const std::vector<Eigen::VectorXd>& initial_states);

}  // namespace heatmpc
