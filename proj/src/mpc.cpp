#include "heatmpc/mpc.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include <spdlog/spdlog.h>

#include "heatmpc/error.hpp"
#include "heatmpc/parallel.hpp"

namespace heatmpc {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

/// Control on window nodes start..start+steps from a solution that starts at node `u_start`;
/// the first usable entry covers earlier nodes, the last one is held beyond the end.
Eigen::VectorXd extend_control(const Eigen::VectorXd& u, int u_start, int start, int steps) {
  Eigen::VectorXd g(steps + 1);
  const int last = static_cast<int>(u.size()) - 1;
  for (int k = 0; k <= steps; ++k) g[k] = u[std::clamp(start + k - u_start, std::min(1, last), last)];
  return g;
}

SnapshotEnsemble ensemble(const std::vector<Eigen::VectorXd>& list, double dt, const SpMat& W) {
  SnapshotEnsemble e;
  e.W = W;
  e.Y.resize(W.rows(), static_cast<Eigen::Index>(list.size()));
  for (std::size_t j = 0; j < list.size(); ++j) e.Y.col(static_cast<Eigen::Index>(j)) = list[j];
  e.alpha = Eigen::VectorXd::Constant(e.Y.cols(), dt);
  return e;
}

}  // namespace

std::vector<Eigen::VectorXd> nonzero_columns(const Eigen::MatrixXd& x) {
  std::vector<Eigen::VectorXd> out;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    if (x.col(j).squaredNorm() > 0.0) out.emplace_back(x.col(j));
  return out;
}

PODBasis snapshot_basis(const std::vector<Eigen::VectorXd>& primal, const std::vector<Eigen::VectorXd>& dual,
                        double dt, double tau1_rel, const SpMat& W) {
  if (primal.empty()) throw SolverError("pod: no nonzero primal snapshots");
  SnapshotEnsemble ens = ensemble(primal, dt, W);
  if (!dual.empty()) ens = stack_ensembles(ens, ensemble(dual, dt, W));
  PODBasis basis = compute_pod(ens);
  basis.ell = select_rank(basis, tau1_rel * basis.lambda.sum());
  return basis;
}

void MPCConfig::validate() const {
  if (N < 1) throw ConfigError("mpc.N must be >= 1");
  if (M < 0) throw ConfigError("mpc.M must be >= 0");
  if (!(dt > 0.0)) throw ConfigError("time.dt must be > 0");
  if (N_t < 0) throw ConfigError("time.N_t must be >= 0");
  if (last_node() < N_t) throw ConfigError("mpc: forecast ends before the closed-loop run");
  if (!(tau1_rel > 0.0)) throw ConfigError("mpc.tau1_rel must be > 0");
  if (!(tau2 >= 0.0)) throw ConfigError("mpc.tau2 must be >= 0");
  if (!u_a || !u_b || !y_a || !y_b || !yout) throw ConfigError("mpc: bounds and forecast must be set");
  if (refinements < 0) throw ConfigError("mpc.refinements must be >= 0");
  if (pdass_max_iterations < 1) throw ConfigError("mpc.pdass_max_iterations must be >= 1");
  snapshots.validate();
  if (N_t > 0 && N >= N_t) spdlog::warn("mpc: horizon N = {} is not small against N_t = {}", N, N_t);
}

VirtualControlProblem MPCConfig::problem(int first, int steps, int space_dofs) const {
  Eigen::VectorXd ua(steps + 1), ub(steps + 1), ya(steps + 1), yb(steps + 1);
  for (int k = 0; k <= steps; ++k) {
    const double t = (first + k) * dt;
    ua[k] = u_a(t);
    ub[k] = u_b(t);
    ya[k] = y_a(t);
    yb[k] = y_b(t);
  }
  VirtualControlProblem p = VirtualControlProblem::uniform(space_dofs, ua, ub, ya, yb);
  p.w_a = w_a;
  p.w_b = w_b;
  p.eps = eps;
  p.sigma = sigma;
  p.eta_u = eta_u;
  p.eta_w = eta_w;
  p.validate();
  return p;
}

Eigen::VectorXd MPCConfig::forecast(int first, int steps) const {
  Eigen::VectorXd y(steps + 1);
  for (int k = 0; k <= steps; ++k) y[k] = yout((first + k) * dt);
  return y;
}

double MPCConfig::initial_control() const {
  if (std::isfinite(u_init)) return u_init;
  return 0.5 * (y_a(0.0) + y_b(0.0));
}

std::vector<FlowState> Plant::simulate(const FlowState& s, int j, const Eigen::VectorXd& u,
                                       const Eigen::VectorXd& yout) const {
  if (u.size() < 1 || yout.size() != u.size()) throw DimensionError("plant: control and forecast lengths differ");
  std::vector<FlowState> traj{s};
  traj.reserve(static_cast<std::size_t>(u.size()));
  for (Eigen::Index k = 1; k < u.size(); ++k) {
    try {
      traj.push_back(step(traj.back(), j + static_cast<int>(k) - 1, u[k], yout[k]));
    } catch (const SolverError& e) {
      throw SolverError(e.what(), j + static_cast<int>(k));
    }
  }
  return traj;
}

FlowState BoussinesqPlant::step(const FlowState& s, int, double u, double yout) const {
  return solver_.step(s, u, yout);
}

FlowState FrozenFlowPlant::step(const FlowState& s, int j, double u, double yout) const {
  FlowState out;
  out.y = heat_->forward(s.y, Eigen::Vector2d(u, u), Eigen::Vector2d(yout, yout), j).col(1);
  out.v = heat_->advection().at(j + 1);
  out.p = Eigen::VectorXd::Zero(s.y.size());
  out.t = s.t + heat_->dt();
  return out;
}

SnapshotWindow generate_snapshots(const Plant& plant, const FlowState& s, int start, int steps,
                                  const Eigen::VectorXd& u_guess, const MPCConfig& cfg) {
  const auto t0 = Clock::now();
  if (steps < 1) throw DimensionError("generate_snapshots: empty window");
  if (u_guess.size() != steps + 1) throw DimensionError("generate_snapshots: control guess does not cover the window");
  const int nx = plant.ops().size();
  if (s.y.size() != nx) throw DimensionError("generate_snapshots: state does not match the plant");

  SnapshotWindow win;
  win.start = start;
  win.steps = steps;
  win.traj = plant.simulate(s, start, u_guess, cfg.forecast(start, steps));
  win.adv = advection_from(win.traj, "window@" + std::to_string(start));
  win.primal = temperatures(win.traj);
  auto heat = std::make_shared<HeatModel>(plant.ops(), plant.params(), win.adv, plant.dt());

  const VirtualControlProblem prob = cfg.problem(start, steps, nx);
  const ControlIterate nu{u_guess, Eigen::MatrixXd::Zero(nx, steps + 1), Eigen::MatrixXd::Zero(nx, steps + 1)};
  const ActiveSets sets = compute_active_sets(nu, win.primal, Eigen::VectorXd::Zero(steps + 1), prob);
  const StateCoupling c = state_coupling(sets, prob);
  const Eigen::MatrixXd beta = prob.eta() * (c.g.cwiseProduct(win.primal) - c.r);
  if (beta.squaredNorm() > 0.0) {
    heat->prefactor(0, steps + 1);
    win.dual = heat->adjoint(beta, 0);
  } else {
    win.dual = Eigen::MatrixXd::Zero(nx, steps + 1);
  }
  win.heat = std::move(heat);
  win.ms = ms_since(t0);
  return win;
}

const char* MPCLog::csv_header() {
  return "step,t,u_applied,e,ell,updated,pdass_iters,y_min,y_max,y_mean,active_lo,active_hi,ms_snapshots,ms_"
         "pdass,ms_estimate";
}

std::string MPCLog::csv_row(const StepRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%.10g,%.12g,%.10g,%d,%d,%d,%.12g,%.12g,%.12g,%d,%d,%.3f,%.3f,%.3f", r.step, r.t,
                r.u_applied, r.e, r.ell, r.updated ? 1 : 0, r.pdass_iters, r.y_min, r.y_max, r.y_mean, r.active_lo,
                r.active_hi, r.ms_snapshots, r.ms_pdass, r.ms_estimate);
  return buf;
}

void MPCLog::write_csv(std::ostream& out) const {
  out << csv_header() << '\n';
  for (const auto& r : records) out << csv_row(r) << '\n';
}

MPCController::MPCController(const MPCConfig& cfg, const Plant& plant) : cfg_(cfg), plant_(&plant) {
  cfg_.validate();
  if (std::abs(plant.dt() - cfg_.dt) > 1e-12 * cfg_.dt) throw ConfigError("mpc: plant step differs from time.dt");
}

Eigen::VectorXd MPCController::control_guess(int start, int steps) const {
  if (last_start_ < 0) return Eigen::VectorXd::Constant(steps + 1, cfg_.initial_control());
  return extend_control(last_.u, last_start_, start, steps);
}

std::optional<ControlIterate> MPCController::warm_start(int j, int n) const {
  if (last_start_ < 0) return std::nullopt;
  const int shift = j - last_start_, last = static_cast<int>(last_.u.size()) - 1;
  ControlIterate nu;
  nu.u.resize(n + 1);
  nu.w.resize(last_.w.rows(), n + 1);
  nu.theta.resize(last_.theta.rows(), n + 1);
  for (int k = 0; k <= n; ++k) {
    const int src = std::min(k + shift, last);
    nu.u[k] = last_.u[src];
    nu.w.col(k) = last_.w.col(src);
    nu.theta.col(k) = last_.theta.col(src);
  }
  return nu;
}

void MPCController::build_prediction_model() {
  full_ = std::make_shared<FullModel>(window_.heat);
  if (cfg_.model == PredictionModel::Full) {
    predictor_ = full_;
    return;
  }
  auto red = std::make_shared<const ReducedOperators>(project_operators(basis_, plant_->ops(), window_.adv));
  predictor_ = std::make_shared<ReducedModel>(red, plant_->params(), cfg_.dt, plant_->ops().M_lumped);
}

void MPCController::rebuild_basis(const FlowState& s, int j, const Eigen::VectorXd& u_guess, StepRecord& rec) {
  const auto t0 = Clock::now();
  const int L = static_cast<int>(u_guess.size()) - 1;
  window_ = generate_snapshots(*plant_, s, j, L, u_guess, cfg_);
  if (cfg_.model == PredictionModel::Reduced) {
    const SpMat& W = plant_->ops().W_V;
    std::vector<Eigen::VectorXd> np = nonzero_columns(window_.primal), nd = nonzero_columns(window_.dual);
    parallel_invoke([&] { primal_list_ = select_snapshots(primal_list_, np, cfg_.snapshots, W); },
                    [&] { dual_list_ = select_snapshots(dual_list_, nd, cfg_.snapshots, W); });
    if (primal_list_.empty()) throw SolverError("mpc: no nonzero primal snapshots", j);
    basis_ = snapshot_basis(primal_list_, dual_list_, cfg_.dt, cfg_.tau1_rel, W);
    basis_.provenance = "mpc step " + std::to_string(j);
  }
  build_prediction_model();
  rec.ms_snapshots += ms_since(t0);
}

void MPCController::refresh_window(const FlowState& s, int j, StepRecord& rec) {
  const auto t0 = Clock::now();
  const int L = std::min(cfg_.N + cfg_.M, cfg_.last_node() - j);
  window_ = generate_snapshots(*plant_, s, j, L, control_guess(j, L), cfg_);
  build_prediction_model();
  ++refreshes_;
  rec.ms_snapshots += ms_since(t0);
}

StepRecord MPCController::step(int j, FlowState& s) {
  const int nx = plant_->ops().size();
  if (s.y.size() != nx) throw DimensionError("mpc: state does not match the plant");
  if (j < 0 || j >= cfg_.last_node()) throw DimensionError("mpc: step index outside the forecast");
  StepRecord rec;
  rec.step = j;
  rec.t = j * cfg_.dt;
  {
    const double ya = cfg_.y_a(rec.t), yb = cfg_.y_b(rec.t);
    const Eigen::VectorXd& m = plant_->ops().M_lumped;
    rec.y_min = s.y.minCoeff();
    rec.y_max = s.y.maxCoeff();
    rec.y_mean = m.dot(s.y) / m.sum();
    rec.active_lo = static_cast<int>((s.y.array() < ya).count());
    rec.active_hi = static_cast<int>((s.y.array() > yb).count());
  }

  const int n = std::min(cfg_.N, cfg_.last_node() - j);
  const int L = std::min(cfg_.N + cfg_.M, cfg_.last_node() - j);
  if (flag_) {
    if (last_start_ >= 0) ++updates_;
    rebuild_basis(s, j, control_guess(j, L), rec);
    rec.updated = true;
  } else if (j + n > window_.start + window_.steps) {
    refresh_window(s, j, rec);
  }

  const VirtualControlProblem prob = cfg_.problem(j, n, nx);
  const PrognosisData data{s.y, cfg_.forecast(j, n), j - window_.start};
  PDASSOptions opts;
  opts.max_iterations = cfg_.pdass_max_iterations;
  opts.initial = warm_start(j, n);
  const bool guarded = rec.updated && cfg_.tau2 > 0.0 && std::isfinite(cfg_.tau2);
  KKTSolution sol;
  EstimateResult est;
  for (int attempt = 0;; ++attempt) {
    auto t0 = Clock::now();
    sol = pdass_solve(*predictor_, prob, data, opts);
    rec.ms_pdass += ms_since(t0);
    rec.pdass_iters += sol.iterations;
    t0 = Clock::now();
    const Eigen::MatrixXd w = restore_feasibility(*full_, sol.u, sol.w, prob, data, &sol.sets);
    est = aposteriori_estimate(*full_, sol.u, w, prob, data);
    rec.ms_estimate += ms_since(t0);
    if (!guarded || est.e <= cfg_.tau2) break;
    if (attempt == cfg_.refinements)
      throw SolverError("mpc: estimate " + std::to_string(est.e) + " still exceeds tau2 = " +
                            std::to_string(cfg_.tau2) + " after " + std::to_string(attempt) +
                            " snapshot refinements",
                        j);
    spdlog::info("mpc step {}: estimate {:.4g} > tau2 after update, refining snapshots", j, est.e);
    rebuild_basis(s, j, extend_control(sol.u, j, j, L), rec);
    ++refinements_;
  }

  rec.e = est.e;
  rec.ell = cfg_.model == PredictionModel::Full ? nx : basis_.ell;
  rec.u_applied = sol.u[1];
  flag_ = est.e > cfg_.tau2;
  last_ = std::move(sol);
  last_start_ = j;
  s = plant_->step(s, j, rec.u_applied, cfg_.yout((j + 1) * cfg_.dt));
  return rec;
}

MPCResult run_mpc(const MPCConfig& cfg, const Plant& plant, const FlowState& initial,
                  const std::function<void(const StepRecord&)>& on_record, const std::atomic<bool>* stop) {
  MPCController ctl(cfg, plant);
  MPCResult res;
  const int nx = plant.ops().size();
  Eigen::MatrixXd y(nx, cfg.N_t + 1);
  y.col(0) = initial.y;
  res.controls = Eigen::VectorXd::Zero(cfg.N_t);
  FlowState s = initial;
  int done = 0;
  for (int j = 0; j < cfg.N_t; ++j) {
    if (stop && stop->load()) {
      res.interrupted = true;
      break;
    }
    StepRecord rec = ctl.step(j, s);
    res.controls[j] = rec.u_applied;
    y.col(j + 1) = s.y;
    res.log.records.push_back(rec);
    if (on_record) on_record(rec);
    done = j + 1;
  }
  res.trajectory.values = y.leftCols(done + 1);
  res.trajectory.grid = TimeGrid{0.0, cfg.dt, done};
  res.controls.conservativeResize(done);
  res.final_state = s;
  res.updates = ctl.updates();
  res.refinements = ctl.refinements();
  return res;
}

ClosedLoopSummary summarize(const MPCLog& log, const MPCConfig& cfg, int grid_points) {
  if (grid_points < 1) throw DimensionError("summarize: grid_points must be >= 1");
  ClosedLoopSummary c;
  c.steps = static_cast<int>(log.records.size());
  c.y_max = -std::numeric_limits<double>::infinity();
  for (const auto& r : log.records) {
    const double ya = cfg.y_a(r.t), yb = cfg.y_b(r.t);
    if (r.y_mean < ya || r.y_mean > yb) ++c.mean_violations;
    const int active = r.active_lo + r.active_hi;
    c.active_total += active;
    const double f = static_cast<double>(active) / grid_points;
    c.active_fraction_mean += f;
    c.active_fraction_max = std::max(c.active_fraction_max, f);
    c.y_max = std::max(c.y_max, r.y_max);
    c.max_overshoot = std::max(c.max_overshoot, r.y_max - yb);
    c.max_undershoot = std::max(c.max_undershoot, ya - r.y_min);
  }
  if (c.steps > 0) c.active_fraction_mean /= c.steps;
  else c.y_max = 0.0;
  return c;
}

}  // namespace heatmpc
