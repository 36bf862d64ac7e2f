#pragma once

#include <Eigen/Core>

#include "heatmpc/error.hpp"
#include "heatmpc/pdass.hpp"
#include "heatmpc/space_time.hpp"

namespace heatmpc {

/// Thrown when the pair handed to the estimator violates a bound by more than the tolerance.
class InfeasiblePair : public Error {
 public:
  InfeasiblePair(const std::string& what, double violation) : Error(what), violation_(violation) {}
  double violation() const { return violation_; }

 private:
  double violation_;
};

struct EstimateResult {
  double e = 0.0;
  Eigen::VectorXd zeta_u, xi_u;
  Eigen::MatrixXd zeta_w, xi_w;
  double sigma_ap = 1.0;
  double norm_u = 0.0;  ///< |zeta_u + S* zeta_w|_U
  double norm_w = 0.0;  ///< eps |zeta_w|_W
  double wall_ms = 0.0;
};

struct EstimatorOptions {
  /// Points within this distance of a bound count as active.
  double activity_tol = 1e-8;
  /// Largest admissible bound violation of the input pair.
  double feasibility_tol = 1e-8;
};

/// Certified bound on the distance of (u_ap, w_ap) to the relaxed optimum:
///   |u - u_ap|_U^2 + |w - w_ap|_W^2 <= e^2,  e = |T* zeta| / min(sigma, 1),
/// with T*(a, b) = (a + S* b, eps b). `model` should be the full-order model; both adjoint
/// sweeps run on it.
EstimateResult aposteriori_estimate(const SpaceTimeModel& model, const Eigen::VectorXd& u_ap,
                                    const Eigen::MatrixXd& w_ap, const VirtualControlProblem& prob,
                                    const PrognosisData& data, const EstimatorOptions& opts = {});

/// Feasible virtual control for u, with y the state of u under `model`: the point of
/// [w_a, w_b] nearest to w within the state band [(y_a - y)/eps, (y_b - y)/eps]. With `sets`
/// (typically the converged sets of a reduced solve) the state-active points are first moved
/// onto their bound, w = (y_a - y)/eps or (y_b - y)/eps, so the lifted pair keeps the activity
/// pattern of the reduced solution.
Eigen::MatrixXd restore_feasibility(const SpaceTimeModel& model, const Eigen::VectorXd& u, const Eigen::MatrixXd& w,
                                    const VirtualControlProblem& prob, const PrognosisData& data,
                                    const ActiveSets* sets = nullptr);

}  // namespace heatmpc
