#include "heatmpc/estimator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "heatmpc/parallel.hpp"

namespace heatmpc {

namespace {

void check_shapes(const SpaceTimeModel& model, const Eigen::VectorXd& u, const Eigen::MatrixXd& w,
                  const VirtualControlProblem& prob, const PrognosisData& data) {
  prob.validate();
  const int n = prob.steps();
  if (u.size() != n + 1) throw DimensionError("estimator: control length does not match the problem");
  if (w.rows() != model.space_dofs() || w.cols() != n + 1)
    throw DimensionError("estimator: virtual control does not match the space-time grid");
  if (prob.space_dofs() != model.space_dofs()) throw DimensionError("estimator: state bounds do not match the model");
  if (data.yout.size() != n + 1) throw DimensionError("estimator: outside temperature length mismatch");
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol * (1.0 + std::abs(b)); }

}  // namespace

EstimateResult aposteriori_estimate(const SpaceTimeModel& model, const Eigen::VectorXd& u_ap,
                                    const Eigen::MatrixXd& w_ap, const VirtualControlProblem& prob,
                                    const PrognosisData& data, const EstimatorOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  check_shapes(model, u_ap, w_ap, prob, data);
  const int n = prob.steps(), nx = model.space_dofs();
  const Eigen::MatrixXd y = model.forward(data.y0, u_ap, data.yout, data.offset);
  const double viol = max_infeasibility(u_ap, w_ap, y, prob);
  if (viol > opts.feasibility_tol) {
    std::ostringstream msg;
    msg << "estimator: pair violates the relaxed bounds by " << viol;
    throw InfeasiblePair(msg.str(), viol);
  }

  EstimateResult r;
  r.sigma_ap = std::min(prob.sigma, 1.0);
  r.xi_w = (prob.sigma / prob.eps) * w_ap;

  // Only the bounds on u and y + eps w define the sets; w-box activity is not used.
  r.zeta_w.resize(nx, n + 1);
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i < nx; ++i) {
      const double v = y(i, j) + prob.eps * w_ap(i, j), x = r.xi_w(i, j);
      if (near(v, prob.y_a(i, j), opts.activity_tol)) r.zeta_w(i, j) = -std::min(0.0, x);
      else if (near(v, prob.y_b(i, j), opts.activity_tol)) r.zeta_w(i, j) = -std::max(0.0, x);
      else r.zeta_w(i, j) = -x;
    }

  Eigen::VectorXd s_xi, s_zeta;
  parallel_invoke([&] { s_xi = model.s_star(r.xi_w, data.offset); },
                  [&] { s_zeta = model.s_star(r.zeta_w, data.offset); });
  r.xi_u = u_ap - s_xi;
  r.zeta_u.resize(n + 1);
  for (int j = 0; j <= n; ++j) {
    const double x = r.xi_u[j];
    if (near(u_ap[j], prob.u_a[j], opts.activity_tol)) r.zeta_u[j] = -std::min(0.0, x);
    else if (near(u_ap[j], prob.u_b[j], opts.activity_tol)) r.zeta_u[j] = -std::max(0.0, x);
    else r.zeta_u[j] = -x;
  }

  const Eigen::VectorXd tu = r.zeta_u + s_zeta;
  const Eigen::VectorXd alpha = model.weights(n);
  const Eigen::VectorXd& m = model.lumped_mass();
  double su = 0.0, sw = 0.0;
  for (int j = 0; j <= n; ++j) {
    su += alpha[j] * tu[j] * tu[j];
    sw += alpha[j] * r.zeta_w.col(j).cwiseAbs2().dot(m);
  }
  r.norm_u = std::sqrt(su);
  r.norm_w = prob.eps * std::sqrt(sw);
  r.e = std::hypot(r.norm_u, r.norm_w) / r.sigma_ap;
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

Eigen::MatrixXd restore_feasibility(const SpaceTimeModel& model, const Eigen::VectorXd& u, const Eigen::MatrixXd& w,
                                    const VirtualControlProblem& prob, const PrognosisData& data,
                                    const ActiveSets* sets) {
  check_shapes(model, u, w, prob, data);
  if (sets && (sets->nx != w.rows() || sets->nt != w.cols()))
    throw DimensionError("restore_feasibility: active sets do not match the space-time grid");
  const Eigen::MatrixXd y = model.forward(data.y0, u, data.yout, data.offset);
  Eigen::MatrixXd out(w.rows(), w.cols());
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      const double lo = (prob.y_a(i, j) - y(i, j)) / prob.eps, hi = (prob.y_b(i, j) - y(i, j)) / prob.eps;
      double v = w(i, j);
      if (sets) {
        const std::uint8_t f = sets->at(static_cast<int>(i), static_cast<int>(j));
        if (f & ActiveSets::kLowerW) v = lo;
        else if (f & ActiveSets::kUpperW) v = hi;
      }
      out(i, j) = std::clamp(std::clamp(v, lo, hi), prob.w_a, prob.w_b);
    }
  return out;
}

}  // namespace heatmpc
