#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "heatmpc/boussinesq.hpp"
#include "heatmpc/config.hpp"
#include "heatmpc/error.hpp"
#include "heatmpc/matrix_market.hpp"
#include "heatmpc/mpc.hpp"
#include "heatmpc/parallel.hpp"
#include "heatmpc/pdass.hpp"
#include "heatmpc/turnpike.hpp"
#include "json.hpp"

namespace heatmpc::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void write_json(const fs::path& path, const json& doc) { mm::write_text_atomic(path, doc.dump(2) + "\n"); }

std::string fmt_row(const char* format, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

/// Everything a command needs from a config file.
struct Setup {
  ExperimentConfig cfg;
  StructuredQuadMesh mesh;
  FEOperators ops;
  fs::path out;

  Setup(const fs::path& config, const std::string& out_override)
      : cfg(ExperimentConfig::load(config)),
        mesh(cfg.build_mesh()),
        ops(assemble_operators(mesh)),
        out(out_override.empty() ? cfg.output_dir : fs::path(out_override)) {}

  FlowState initial_state() const { return cfg.initial_state(mesh.num_nodes()); }
  std::vector<FlowState> advection_run(int steps) const { return cfg.fixed_control_run(mesh, ops, steps); }
};

// simulate-boussinesq

int simulate(const Setup& st) {
  const ExperimentConfig& c = st.cfg;
  const int steps = c.time.N_t;
  std::vector<int> indices;
  for (double t : c.simulate.checkpoint_times) {
    const int j = static_cast<int>(std::lround(t / c.time.dt));
    if (j > steps) throw ConfigError("simulate.checkpoint_times: " + std::to_string(t) + " is beyond the run");
    indices.push_back(j);
  }
  const auto t0 = Clock::now();
  spdlog::info("simulate-boussinesq: {} nodes, {} steps", st.mesh.num_nodes(), steps);
  const auto traj = st.advection_run(steps);
  const double wall = seconds_since(t0);

  fs::create_directories(st.out);
  const TimeGrid grid{0.0, c.time.dt, steps};
  write_checkpoints(st.out, traj, grid, c.physics, indices);

  const BoussinesqSolver solver(st.mesh, st.ops, c.physics, c.time.dt);
  const Eigen::VectorXd& m = st.ops.M_lumped;
  std::ostringstream csv;
  csv << "step,t,y_min,y_max,y_mean,v_max,divergence\n";
  double v_peak = 0.0;
  for (int j = 0; j <= steps; ++j) {
    const FlowState& s = traj[static_cast<std::size_t>(j)];
    const double vmax = s.v.rowwise().norm().maxCoeff();
    v_peak = std::max(v_peak, vmax);
    csv << fmt_row("%d,%.10g,%.15g,%.15g,%.15g,%.15g,%.6e", j, grid.time(j), s.y.minCoeff(), s.y.maxCoeff(),
                   m.dot(s.y) / m.sum(), vmax, solver.divergence_norm(s.v))
        << '\n';
  }
  mm::write_text_atomic(st.out / "summary.csv", csv.str());
  const FlowState& last = traj.back();
  write_json(st.out / "summary.json", {{"command", "simulate-boussinesq"},
                                       {"nodes", st.mesh.num_nodes()},
                                       {"steps", steps},
                                       {"checkpoints", indices.empty() ? steps + 1 : static_cast<int>(indices.size())},
                                       {"final_y_min", last.y.minCoeff()},
                                       {"final_y_max", last.y.maxCoeff()},
                                       {"v_max", v_peak},
                                       {"wall_s", wall},
                                       {"config", c.to_json()}});
  spdlog::info("simulate-boussinesq: done in {:.1f} s, output in {}", wall, st.out.string());
  return kOk;
}

// pdass-solve

struct SolveOutput {
  KKTSolution sol;
  int ell = 0;
  double wall_s = 0.0;
};

void write_solution(const fs::path& dir, const SolveOutput& r, const std::string& model, int horizon, double dt) {
  fs::create_directories(dir);
  std::ostringstream csv;
  csv << "k,t,u\n";
  for (int k = 0; k <= horizon; ++k) csv << fmt_row("%d,%.10g,%.17g", k, k * dt, r.sol.u[k]) << '\n';
  mm::write_text_atomic(dir / "u.csv", csv.str());
  mm::write_dense(dir / "y.mtx", r.sol.y, "state, one column per time node");
  mm::write_dense(dir / "w.mtx", r.sol.w, "virtual control, one column per time node");
  write_json(dir / "summary.json", {{"command", "pdass-solve"},
                                    {"model", model},
                                    {"horizon", horizon},
                                    {"ell", r.ell},
                                    {"iterations", r.sol.iterations},
                                    {"converged", r.sol.converged},
                                    {"objective", r.sol.objective},
                                    {"wall_s", r.wall_s}});
}

int pdass_solve(const Setup& st, int horizon, bool reduced, bool compare, bool dump_kkt) {
  const ExperimentConfig& c = st.cfg;
  if (horizon < 1) throw ConfigError("--horizon: must be >= 1");
  MPCConfig m = c.mpc_config();
  m.N = horizon;
  m.M = 0;
  m.N_t = 0;
  m.forecast_steps = horizon;
  const BoussinesqPlant plant(st.mesh, st.ops, c.physics, c.time.dt);
  const FlowState s0 = st.initial_state();
  const int nx = st.mesh.num_nodes();

  spdlog::info("pdass-solve: generating the window of {} steps", horizon);
  const SnapshotWindow win =
      generate_snapshots(plant, s0, 0, horizon, Eigen::VectorXd::Constant(horizon + 1, m.initial_control()), m);
  const VirtualControlProblem prob = m.problem(0, horizon, nx);
  const PrognosisData data{s0.y, m.forecast(0, horizon), 0};

  auto solve = [&](bool use_reduced, const fs::path& dir) {
    SolveOutput r;
    const auto t0 = Clock::now();
    std::shared_ptr<const SpaceTimeModel> model;
    if (use_reduced) {
      PODBasis basis = snapshot_basis(nonzero_columns(win.primal), nonzero_columns(win.dual), c.time.dt,
                                      c.mpc.tau1_rel, st.ops.W_V);
      r.ell = basis.ell;
      auto red = std::make_shared<const ReducedOperators>(project_operators(basis, st.ops, win.adv));
      model = std::make_shared<ReducedModel>(red, c.physics, c.time.dt, st.ops.M_lumped);
    } else {
      r.ell = nx;
      model = std::make_shared<FullModel>(win.heat);
    }
    PDASSOptions opts;
    opts.max_iterations = c.pdass.max_iterations;
    opts.initial_control = m.initial_control();
    fs::create_directories(dir);
    opts.trace_path = dir / "trace.jsonl";
    if (dump_kkt) opts.dump_dir = dir / "kkt";
    r.sol = pdass_solve(*model, prob, data, opts);
    r.wall_s = seconds_since(t0);
    write_solution(dir, r, use_reduced ? "reduced" : "full", horizon, c.time.dt);
    spdlog::info("pdass-solve: {} model, ell = {}, {} iterations, J = {:.10g}", use_reduced ? "reduced" : "full",
                 r.ell, r.sol.iterations, r.sol.objective);
    return r;
  };

  if (!compare) {
    solve(reduced, st.out);
    return kOk;
  }
  const SolveOutput full = solve(false, st.out / "full");
  const SolveOutput red = solve(true, st.out / "reduced");
  const FullModel metric(win.heat);
  const Eigen::VectorXd du = red.sol.u - full.sol.u;
  const Eigen::MatrixXd dy = red.sol.y - full.sol.y;
  const double nu = std::sqrt(metric.heat().u_inner(full.sol.u, full.sol.u));
  const double ny = std::sqrt(metric.heat().w_inner(full.sol.y, full.sol.y));
  write_json(st.out / "diff.json",
             {{"command", "pdass-solve --compare"},
              {"horizon", horizon},
              {"ell", red.ell},
              {"u_error", std::sqrt(metric.heat().u_inner(du, du))},
              {"u_error_relative", nu > 0.0 ? std::sqrt(metric.heat().u_inner(du, du)) / nu : 0.0},
              {"y_error_relative", ny > 0.0 ? std::sqrt(metric.heat().w_inner(dy, dy)) / ny : 0.0},
              {"objective_full", full.sol.objective},
              {"objective_reduced", red.sol.objective},
              {"iterations_full", full.sol.iterations},
              {"iterations_reduced", red.sol.iterations},
              {"wall_s_full", full.wall_s},
              {"wall_s_reduced", red.wall_s}});
  return kOk;
}

// mpc-run

void finish_log(std::ofstream& log, const fs::path& part, const fs::path& final_path) {
  log.close();
  std::error_code ec;
  fs::rename(part, final_path, ec);
  if (ec) spdlog::error("mpc-run: cannot rename {}: {}", part.string(), ec.message());
}

int mpc_run(const Setup& st, bool dry_run) {
  const ExperimentConfig& c = st.cfg;
  const MPCConfig m = c.mpc_config();
  m.validate();
  if (dry_run) {
    std::cout << c.to_json().dump(2) << "\n";
    spdlog::info("mpc-run: configuration is valid ({} nodes, N_t = {}, N = {}, M = {})", st.mesh.num_nodes(), m.N_t,
                 m.N, m.M);
    return kOk;
  }
  const BoussinesqPlant plant(st.mesh, st.ops, c.physics, c.time.dt);
  fs::create_directories(st.out);
  const fs::path part = st.out / "mpc_log.csv.part", final_log = st.out / "mpc_log.csv";
  std::ofstream log(part, std::ios::trunc);
  if (!log) throw Error("cannot write " + part.string());
  log << MPCLog::csv_header() << '\n' << std::flush;

  g_stop.store(false);
  const auto previous = std::signal(SIGINT, on_sigint);
  const auto t0 = Clock::now();
  MPCResult res;
  try {
    res = run_mpc(m, plant, st.initial_state(), [&](const StepRecord& r) {
      log << MPCLog::csv_row(r) << '\n' << std::flush;
      if (r.step % 10 == 0 || r.updated)
        spdlog::info("mpc-run: step {} t = {:.2f} u = {:.4f} e = {:.3g} ell = {}{}", r.step, r.t, r.u_applied, r.e,
                     r.ell, r.updated ? " (basis updated)" : "");
    }, &g_stop);
  } catch (...) {
    std::signal(SIGINT, previous);
    finish_log(log, part, final_log);
    throw;
  }
  std::signal(SIGINT, previous);
  finish_log(log, part, final_log);
  const double wall = seconds_since(t0);

  mm::write_dense(st.out / "trajectory.mtx", res.trajectory.values, "plant temperature, one column per time node");
  std::ostringstream csv;
  csv << "step,t,u\n";
  for (Eigen::Index j = 0; j < res.controls.size(); ++j)
    csv << fmt_row("%d,%.10g,%.17g", static_cast<int>(j), static_cast<double>(j) * c.time.dt, res.controls[j]) << '\n';
  mm::write_text_atomic(st.out / "controls.csv", csv.str());

  const ClosedLoopSummary s = summarize(res.log, m, st.mesh.num_nodes());
  write_json(st.out / "summary.json", {{"command", "mpc-run"},
                                       {"nodes", st.mesh.num_nodes()},
                                       {"steps", s.steps},
                                       {"interrupted", res.interrupted},
                                       {"updates", res.updates},
                                       {"refinements", res.refinements},
                                       {"mean_violations", s.mean_violations},
                                       {"active_total", s.active_total},
                                       {"active_fraction_mean", s.active_fraction_mean},
                                       {"active_fraction_max", s.active_fraction_max},
                                       {"y_max", s.y_max},
                                       {"max_overshoot", s.max_overshoot},
                                       {"max_undershoot", s.max_undershoot},
                                       {"wall_s", wall},
                                       {"config", c.to_json()}});
  spdlog::info("mpc-run: {} steps in {:.1f} s, {} updates, active fraction {:.3f}, max overshoot {:.3f}", s.steps,
               wall, res.updates, s.active_fraction_mean, s.max_overshoot);
  if (res.interrupted) {
    spdlog::warn("mpc-run: interrupted after {} steps; partial log in {}", s.steps, final_log.string());
    return kInterrupted;
  }
  return kOk;
}

// turnpike-study

int turnpike_study(const Setup& st, std::vector<int> horizons, std::vector<double> inits) {
  const ExperimentConfig& c = st.cfg;
  if (horizons.empty()) horizons = c.turnpike.horizons;
  if (inits.empty()) inits = c.turnpike.inits;
  if (horizons.empty() || inits.empty()) throw ConfigError("turnpike: empty study grid");
  for (int h : horizons)
    if (h < 1) throw ConfigError("--horizons: entries must be >= 1");
  const int longest = *std::max_element(horizons.begin(), horizons.end());
  const auto t0 = Clock::now();
  spdlog::info("turnpike-study: advection over {} steps", longest);
  const auto traj = st.advection_run(longest);
  auto heat = std::make_shared<const HeatModel>(st.ops, c.physics, advection_from(traj), c.time.dt);
  std::vector<Eigen::VectorXd> states;
  for (double v : inits) states.push_back(Eigen::VectorXd::Constant(st.mesh.num_nodes(), v));
  spdlog::info("turnpike-study: {} runs on {} threads", horizons.size() * inits.size(), thread_count());
  const TurnpikeStudy study = open_loop_study(c.turnpike_config(heat), horizons, states);
  const double wall = seconds_since(t0);

  fs::create_directories(st.out);
  std::ostringstream csv;
  study.write_csv(csv);
  mm::write_text_atomic(st.out / "turnpike.csv", csv.str());
  json runs = json::array();
  for (const auto& r : study.runs)
    runs.push_back({{"run_id", r.id},
                    {"horizon", r.horizon},
                    {"init_id", r.init_id},
                    {"init", inits[static_cast<std::size_t>(r.init_id)]},
                    {"iterations", r.iterations},
                    {"objective", r.objective},
                    {"out_of_band", r.out_of_band}});
  json overlap = json::array(), spread = json::array();
  for (int i = 0; i < static_cast<int>(inits.size()); ++i)
    overlap.push_back({{"init_id", i},
                       {"horizon_overlap", study.horizon_overlap(i)},
                       {"relative", study.horizon_overlap_relative(i)}});
  for (int h = 0; h < static_cast<int>(horizons.size()); ++h)
    spread.push_back({{"horizon", horizons[static_cast<std::size_t>(h)]},
                      {"init_spread_relative_after_30pct", study.init_spread_relative(h, 0.3)}});
  write_json(st.out / "summary.json", {{"command", "turnpike-study"},
                                       {"horizons", horizons},
                                       {"inits", inits},
                                       {"runs", runs},
                                       {"horizon_overlap", overlap},
                                       {"init_spread", spread},
                                       {"wall_s", wall}});
  spdlog::info("turnpike-study: {} runs in {:.1f} s, output in {}", study.runs.size(), wall, st.out.string());
  return kOk;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const PDASSError& e) {
    spdlog::error("{}", e.what());
    return e.kind() == PDASSError::Kind::LinearSolve ? kSolver : kNonConvergence;
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kConfig;
  } catch (const DimensionError& e) {
    spdlog::error("config error: {}", e.what());
    return kConfig;
  } catch (const SolverError& e) {
    spdlog::error("solver failure at step {}: {}", e.step(), e.what());
    return kSolver;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kSolver;
  }
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Room-temperature MPC with POD reduced models and virtual state constraints", "heatmpc"};
  app.require_subcommand(1);
  int threads = 0;
  std::string level = "info";
  app.add_option("--threads", threads, "worker threads (default: HEATMPC_THREADS or all cores)")
      ->check(CLI::PositiveNumber);
  app.add_option("--log-level", level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::string config, out;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config, "experiment JSON")->required();
    sub->add_option("--out", out, "output directory (default: output_dir of the config)");
  };

  auto* sim = app.add_subcommand("simulate-boussinesq", "Boussinesq run under the fixed initial control");
  add_common(sim);

  int horizon = -1;
  bool full = false, reduced = false, compare = false, dump = false;
  auto* solve = app.add_subcommand("pdass-solve", "one open-loop PDASS solve from t = 0");
  add_common(solve);
  solve->add_option("--horizon", horizon, "time steps (default: mpc.N)");
  auto* f_full = solve->add_flag("--full", full, "full-order prediction model");
  auto* f_red = solve->add_flag("--reduced", reduced, "POD reduced prediction model");
  f_full->excludes(f_red);
  solve->add_flag("--compare", compare, "solve with both models and write diff.json");
  solve->add_flag("--dump-kkt", dump, "write every Newton matrix in Matrix Market format");

  bool dry_run = false;
  auto* mpc = app.add_subcommand("mpc-run", "closed-loop MPC with the POD gate");
  add_common(mpc);
  mpc->add_flag("--dry-run", dry_run, "validate the configuration and exit");

  std::vector<int> horizons;
  std::vector<double> inits;
  auto* tp = app.add_subcommand("turnpike-study", "open-loop solves over horizons and initial states");
  add_common(tp);
  tp->add_option("--horizons", horizons, "comma-separated horizons in steps")->delimiter(',');
  tp->add_option("--inits", inits, "comma-separated uniform initial temperatures")->delimiter(',');

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  spdlog::set_level(spdlog::level::from_str(level));
  if (threads > 0) set_thread_count(static_cast<std::size_t>(threads));

  return guarded([&] {
    const Setup st(config, out);
    if (sim->parsed()) return simulate(st);
    if (solve->parsed())
      return pdass_solve(st, horizon == -1 ? st.cfg.mpc.N : horizon, reduced || (!full && st.cfg.mpc.reduced), compare,
                         dump);
    if (mpc->parsed()) return mpc_run(st, dry_run);
    return turnpike_study(st, horizons, inits);
  });
}

}  // namespace heatmpc::cli
