#pragma once

#include <atomic>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "heatmpc/boussinesq.hpp"
#include "heatmpc/convdiff.hpp"
#include "heatmpc/estimator.hpp"
#include "heatmpc/pdass.hpp"
#include "heatmpc/pod.hpp"
#include "heatmpc/space_time.hpp"

namespace heatmpc {

using TimeFunction = std::function<double(double)>;

enum class PredictionModel { Reduced, Full };

struct MPCConfig {
  int N = 300;   ///< prediction horizon in steps
  int M = 60;    ///< snapshot look-ahead margin in steps
  double dt = 0.01;
  int N_t = 300; ///< closed-loop steps
  /// Last time node with forecast and bounds; horizons and windows end there. -1 means N_t + N.
  int forecast_steps = -1;
  double tau1_rel = 1e-8;  ///< tau1 = tau1_rel * sum(lambda)
  double tau2 = 3.5;

  TimeFunction u_a, u_b, y_a, y_b;
  double w_a = -1e9, w_b = 1e9;
  double eps = 0.025, sigma = 1.0, eta_u = 1.0, eta_w = 1.0;
  /// Outside temperature forecast, re-evaluated whenever a window is generated.
  TimeFunction yout;

  SnapshotSelectionConfig snapshots;
  /// Control of the first snapshot window; NaN selects the midpoint of [y_a(0), y_b(0)].
  double u_init = std::numeric_limits<double>::quiet_NaN();
  PredictionModel model = PredictionModel::Reduced;
  /// Extra snapshot rounds after an update whose estimate still exceeds tau2.
  int refinements = 2;
  int pdass_max_iterations = 50;

  void validate() const;
  int last_node() const { return forecast_steps < 0 ? N_t + N : forecast_steps; }
  /// Spatially uniform relaxed problem on time nodes first..first+steps.
  VirtualControlProblem problem(int first, int steps, int space_dofs) const;
  Eigen::VectorXd forecast(int first, int steps) const;
  double initial_control() const;
};

/// The controlled system. Time node j is t_j = j dt.
class Plant {
 public:
  virtual ~Plant() = default;
  virtual const FEOperators& ops() const = 0;
  virtual const PhysicalParams& params() const = 0;
  virtual double dt() const = 0;
  /// One step from node j, with control and outside temperature at node j + 1.
  virtual FlowState step(const FlowState& s, int j, double u, double yout) const = 0;
  /// States at nodes j..j+n for n = u.size() - 1; u[k] and yout[k] belong to node j + k.
  virtual std::vector<FlowState> simulate(const FlowState& s, int j, const Eigen::VectorXd& u,
                                          const Eigen::VectorXd& yout) const;
};

class BoussinesqPlant : public Plant {
 public:
  BoussinesqPlant(const StructuredQuadMesh& mesh, const FEOperators& ops, const PhysicalParams& params, double dt)
      : ops_(&ops), solver_(mesh, ops, params, dt) {}
  const FEOperators& ops() const override { return *ops_; }
  const PhysicalParams& params() const override { return solver_.params(); }
  double dt() const override { return solver_.dt(); }
  FlowState step(const FlowState& s, int j, double u, double yout) const override;

 private:
  const FEOperators* ops_;
  BoussinesqSolver solver_;
};

/// Convection-diffusion with prescribed velocity: the prediction model used as the plant.
class FrozenFlowPlant : public Plant {
 public:
  explicit FrozenFlowPlant(std::shared_ptr<const HeatModel> heat) : heat_(std::move(heat)) {}
  const FEOperators& ops() const override { return heat_->ops(); }
  const PhysicalParams& params() const override { return heat_->params(); }
  double dt() const override { return heat_->dt(); }
  FlowState step(const FlowState& s, int j, double u, double yout) const override;

 private:
  std::shared_ptr<const HeatModel> heat_;
};

/// Open-loop data of one snapshot window [t_start, t_start + steps dt].
struct SnapshotWindow {
  int start = 0;
  int steps = 0;
  std::vector<FlowState> traj;
  FrozenAdvection adv;
  std::shared_ptr<const HeatModel> heat;  ///< full-order model on the window advection
  Eigen::MatrixXd primal, dual;           ///< one column per window node
  double ms = 0.0;
};

/// Plant solve over the window from `s` with `u_guess` (one entry per window node), then the
/// adjoint of the state-constraint multiplier of the sets seen by (u_guess, w = 0, theta = 0).
SnapshotWindow generate_snapshots(const Plant& plant, const FlowState& s, int start, int steps,
                                  const Eigen::VectorXd& u_guess, const MPCConfig& cfg);

std::vector<Eigen::VectorXd> nonzero_columns(const Eigen::MatrixXd& x);
/// POD of the primal list stacked with the (possibly empty) dual list, every snapshot weighted
/// by dt; the rank is the smallest with tail <= tau1_rel * sum(lambda).
PODBasis snapshot_basis(const std::vector<Eigen::VectorXd>& primal, const std::vector<Eigen::VectorXd>& dual,
                        double dt, double tau1_rel, const SpMat& W);

struct StepRecord {
  int step = 0;
  double t = 0.0;
  double u_applied = 0.0;
  double e = 0.0;
  int ell = 0;
  bool updated = false;
  int pdass_iters = 0;
  double y_min = 0.0, y_max = 0.0, y_mean = 0.0;
  int active_lo = 0, active_hi = 0;
  double ms_snapshots = 0.0, ms_pdass = 0.0, ms_estimate = 0.0;
};

struct MPCLog {
  std::vector<StepRecord> records;

  static const char* csv_header();
  static std::string csv_row(const StepRecord& r);
  void write_csv(std::ostream& out) const;
};

/// Receding-horizon controller; holds the snapshot window, the snapshot lists, the basis and
/// the warm start between steps.
class MPCController {
 public:
  MPCController(const MPCConfig& cfg, const Plant& plant);

  /// Measures `s` at node j, (re)builds models when flagged, solves, applies the first control
  /// and estimates the open-loop error. Returns the record; `s` is advanced to node j + 1.
  StepRecord step(int j, FlowState& s);

  bool flagged() const { return flag_; }
  /// Basis rebuilds requested by the estimator; the initial build is not counted.
  int updates() const { return updates_; }
  int refinements() const { return refinements_; }
  int window_refreshes() const { return refreshes_; }
  const PODBasis& basis() const { return basis_; }
  const KKTSolution& last_solution() const { return last_; }

 private:
  void rebuild_basis(const FlowState& s, int j, const Eigen::VectorXd& u_guess, StepRecord& rec);
  void refresh_window(const FlowState& s, int j, StepRecord& rec);
  void build_prediction_model();
  Eigen::VectorXd control_guess(int start, int steps) const;
  std::optional<ControlIterate> warm_start(int j, int n) const;

  MPCConfig cfg_;
  const Plant* plant_;
  bool flag_ = true;
  SnapshotWindow window_;
  std::vector<Eigen::VectorXd> primal_list_, dual_list_;
  PODBasis basis_;
  std::shared_ptr<const SpaceTimeModel> predictor_;
  std::shared_ptr<const FullModel> full_;
  KKTSolution last_;
  int last_start_ = -1;
  int updates_ = 0, refinements_ = 0, refreshes_ = 0;
};

struct MPCResult {
  TemperatureTrajectory trajectory;  ///< plant temperatures at nodes 0..N_t
  Eigen::VectorXd controls;          ///< applied control on (t_j, t_{j+1}], j = 0..N_t-1
  MPCLog log;
  FlowState final_state;
  int updates = 0;  ///< rebuilds after the initial one
  int refinements = 0;
  bool interrupted = false;
};

/// Constraint statistics of a closed-loop log; counts are over grid points and logged steps.
struct ClosedLoopSummary {
  int steps = 0;
  int mean_violations = 0;  ///< steps whose lumped-mass mean leaves [y_a, y_b]
  long active_total = 0;    ///< sum over steps of active_lo + active_hi
  double active_fraction_mean = 0.0, active_fraction_max = 0.0;
  double y_max = 0.0;
  double max_overshoot = 0.0;  ///< max over steps of y_max - y_b(t), clipped at 0
  double max_undershoot = 0.0; ///< max over steps of y_a(t) - y_min, clipped at 0
};
ClosedLoopSummary summarize(const MPCLog& log, const MPCConfig& cfg, int grid_points);

/// Algorithm-3 loop over cfg.N_t steps. `on_record` is called after each step (for streaming);
/// a set `stop` flag ends the loop after the current step.
MPCResult run_mpc(const MPCConfig& cfg, const Plant& plant, const FlowState& initial,
                  const std::function<void(const StepRecord&)>& on_record = {},
                  const std::atomic<bool>* stop = nullptr);

}  // namespace heatmpc
