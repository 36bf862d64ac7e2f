#include "heatmpc/turnpike.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "heatmpc/error.hpp"
#include "heatmpc/parallel.hpp"

namespace heatmpc {

double StageCost::operator()(double u, const Eigen::VectorXd& w) const {
  return 0.5 * (u * u + sigma * w.cwiseAbs2().dot(lumped_mass));
}

Eigen::VectorXd h_norms(const Eigen::MatrixXd& y, const SpMat& M) {
  const Eigen::MatrixXd my = M * y;
  Eigen::VectorXd out(y.cols());
  for (Eigen::Index j = 0; j < y.cols(); ++j) out[j] = std::sqrt(std::max(0.0, y.col(j).dot(my.col(j))));
  return out;
}

VirtualControlProblem TurnpikeConfig::problem(int steps) const {
  const double dt = heat->dt();
  Eigen::VectorXd ua(steps + 1), ub(steps + 1), ya(steps + 1), yb(steps + 1);
  for (int k = 0; k <= steps; ++k) {
    const double t = k * dt;
    ua[k] = u_a(t);
    ub[k] = u_b(t);
    ya[k] = y_a(t);
    yb[k] = y_b(t);
  }
  VirtualControlProblem p = VirtualControlProblem::uniform(heat->num_dofs(), ua, ub, ya, yb);
  p.w_a = w_a;
  p.w_b = w_b;
  p.eps = eps;
  p.sigma = sigma;
  p.eta_u = eta_u;
  p.eta_w = eta_w;
  p.validate();
  return p;
}

double overlap_metric(const std::vector<const Eigen::VectorXd*>& series, int begin, int end) {
  double d = 0.0;
  for (std::size_t a = 0; a < series.size(); ++a)
    for (std::size_t b = a + 1; b < series.size(); ++b) {
      const int hi = std::min({end, static_cast<int>(series[a]->size()) - 1, static_cast<int>(series[b]->size()) - 1});
      for (int j = std::max(begin, 0); j <= hi; ++j) d = std::max(d, std::abs((*series[a])[j] - (*series[b])[j]));
    }
  return d;
}

double series_range(const std::vector<const Eigen::VectorXd*>& series) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto* s : series) {
    if (s->size() == 0) continue;
    lo = std::min(lo, s->minCoeff());
    hi = std::max(hi, s->maxCoeff());
  }
  return hi >= lo ? hi - lo : 0.0;
}

const TurnpikeRun& TurnpikeStudy::run(int h, int i) const {
  const int inits = static_cast<int>(initial_states.size());
  if (h < 0 || h >= static_cast<int>(horizons.size()) || i < 0 || i >= inits)
    throw DimensionError("turnpike: run index out of range");
  return runs[static_cast<std::size_t>(h * inits + i)];
}

double TurnpikeStudy::horizon_overlap(int init_id) const {
  std::vector<const Eigen::VectorXd*> s;
  for (std::size_t h = 0; h < horizons.size(); ++h) s.push_back(&run(static_cast<int>(h), init_id).y_norm);
  const int n_min = *std::min_element(horizons.begin(), horizons.end());
  return overlap_metric(s, static_cast<int>(std::lround(0.2 * n_min)), static_cast<int>(std::lround(0.8 * n_min)));
}

double TurnpikeStudy::horizon_overlap_relative(int init_id) const {
  std::vector<const Eigen::VectorXd*> s;
  for (std::size_t h = 0; h < horizons.size(); ++h) s.push_back(&run(static_cast<int>(h), init_id).y_norm);
  const double r = series_range(s);
  return r > 0.0 ? horizon_overlap(init_id) / r : 0.0;
}

double TurnpikeStudy::init_spread_relative(int h, double start_fraction) const {
  std::vector<const Eigen::VectorXd*> s;
  for (std::size_t i = 0; i < initial_states.size(); ++i) s.push_back(&run(h, static_cast<int>(i)).y_norm);
  const int n = horizons[static_cast<std::size_t>(h)];
  const double r = series_range(s);
  const double d = overlap_metric(s, static_cast<int>(std::lround(start_fraction * n)), n);
  return r > 0.0 ? d / r : 0.0;
}

const char* TurnpikeStudy::csv_header() { return "run_id,horizon,init_id,t,y_norm,stage_cost"; }

void TurnpikeStudy::write_csv(std::ostream& out) const {
  out << csv_header() << '\n';
  char buf[256];
  for (const auto& r : runs)
    for (Eigen::Index j = 0; j < r.t.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%d,%d,%d,%.10g,%.15g,%.15g", r.id, r.horizon, r.init_id, r.t[j], r.y_norm[j],
                    r.stage_cost[j]);
      out << buf << '\n';
    }
}

TurnpikeStudy open_loop_study(const TurnpikeConfig& cfg, const std::vector<int>& horizons,
                              const std::vector<Eigen::VectorXd>& initial_states) {
  if (!cfg.heat) throw ConfigError("turnpike: model is not set");
  if (!cfg.u_a || !cfg.u_b || !cfg.y_a || !cfg.y_b || !cfg.yout)
    throw ConfigError("turnpike: bounds and outside temperature must be set");
  if (horizons.empty() || initial_states.empty()) throw ConfigError("turnpike: empty study grid");
  const int nx = cfg.heat->num_dofs();
  for (int n : horizons) {
    if (n < 1) throw ConfigError("turnpike: horizons must be >= 1");
    if (n + 1 > cfg.heat->advection_nodes()) throw ConfigError("turnpike: advection shorter than a horizon");
  }
  for (const auto& y0 : initial_states)
    if (y0.size() != nx) throw DimensionError("turnpike: initial state size does not match the mesh");

  TurnpikeStudy study;
  study.horizons = horizons;
  study.initial_states = initial_states;
  const int inits = static_cast<int>(initial_states.size());
  const int total = static_cast<int>(horizons.size()) * inits;
  study.runs.resize(static_cast<std::size_t>(total));
  const FullModel model(cfg.heat);
  const StageCost cost{cfg.sigma, cfg.heat->ops().M_lumped};
  const double dt = cfg.heat->dt();

  cfg.heat->prefactor(0, *std::max_element(horizons.begin(), horizons.end()) + 1);
  parallel_for(0, static_cast<std::size_t>(total), [&](std::size_t q) {
    const int h = static_cast<int>(q) / inits, i = static_cast<int>(q) % inits;
    const int n = horizons[static_cast<std::size_t>(h)];
    const VirtualControlProblem prob = cfg.problem(n);
    Eigen::VectorXd yout(n + 1);
    for (int k = 0; k <= n; ++k) yout[k] = cfg.yout(k * dt);
    const KKTSolution sol = pdass_solve(model, prob, PrognosisData{initial_states[static_cast<std::size_t>(i)], yout, 0},
                                        cfg.pdass);
    TurnpikeRun& r = study.runs[q];
    r.id = static_cast<int>(q);
    r.horizon = n;
    r.init_id = i;
    r.t = Eigen::VectorXd::LinSpaced(n + 1, 0.0, n * dt);
    r.y_norm = h_norms(sol.y, cfg.heat->ops().M);
    r.stage_cost.resize(n + 1);
    for (int k = 0; k <= n; ++k) r.stage_cost[k] = cost(sol.u[k], sol.w.col(k));
    r.cost_sum = model.weights(n).dot(r.stage_cost);
    r.objective = sol.objective;
    r.u = sol.u;
    r.iterations = sol.iterations;
  });

  const int longest = static_cast<int>(std::max_element(horizons.begin(), horizons.end()) - horizons.begin());
  for (auto& r : study.runs) {
    const TurnpikeRun& ref = study.run(longest, r.init_id);
    const double band = cfg.band * series_range({&ref.y_norm});
    r.out_of_band = 0;
    for (int j = 0; j <= r.horizon; ++j)
      if (std::abs(r.y_norm[j] - ref.y_norm[j]) > band) ++r.out_of_band;
  }
  return study;
}

}  // namespace heatmpc
