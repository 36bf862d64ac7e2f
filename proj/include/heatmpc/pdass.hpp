#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "heatmpc/error.hpp"
#include "heatmpc/fem.hpp"
#include "heatmpc/space_time.hpp"

namespace heatmpc {

/// Bounds below this magnitude are finite; larger ones behave as +-infinity.
inline constexpr double kInfiniteBound = 1e8;

/// Virtually relaxed problem: min 1/2 |u|_U^2 + sigma/2 |w|_W^2 subject to the state equation,
/// u_a <= u <= u_b, y_a <= y + eps w <= y_b and w_a <= w <= w_b. Time index j = 0..n.
struct VirtualControlProblem {
  Eigen::VectorXd u_a, u_b;  ///< per time node
  Eigen::MatrixXd y_a, y_b;  ///< per FE node and time node
  double w_a = -1e9, w_b = 1e9;
  double eps = 0.025;
  double sigma = 1.0;
  double eta_u = 1.0, eta_w = 1.0;

  int steps() const { return static_cast<int>(u_a.size()) - 1; }
  int space_dofs() const { return static_cast<int>(y_a.rows()); }
  /// Penalty constant of the state complementarity function.
  double eta() const { return sigma / (eps * eps); }
  void validate() const;

  /// Spatially constant bounds from per-time-node values.
  static VirtualControlProblem uniform(int space_dofs, const Eigen::VectorXd& u_a, const Eigen::VectorXd& u_b,
                                       const Eigen::VectorXd& y_a, const Eigen::VectorXd& y_b);
  /// Window [offset, offset + n] of a longer problem.
  VirtualControlProblem window(int offset, int n) const;
};

/// Initial field and outside temperature of one open-loop solve; the horizon starts at
/// advection node `offset` of the model.
struct PrognosisData {
  Eigen::VectorXd y0;
  Eigen::VectorXd yout;  ///< per time node
  int offset = 0;
};

/// Primal-dual iterate nu = (u, w, theta).
struct ControlIterate {
  Eigen::VectorXd u;
  Eigen::MatrixXd w, theta;
};

/// Six active families: control sets over time, state and w-box sets over space-time.
struct ActiveSets {
  enum : std::uint8_t { kLowerW = 1, kUpperW = 2, kLowerBox = 4, kUpperBox = 8 };
  enum : std::uint8_t { kInactive = 0, kLowerU = 1, kUpperU = 2 };

  int nx = 0, nt = 0;
  std::vector<std::uint8_t> control;  ///< per time node
  std::vector<std::uint8_t> state;    ///< flags at (i, j), index i + nx j

  struct Counts {
    int u_lower = 0, u_upper = 0, w_lower = 0, w_upper = 0, box_lower = 0, box_upper = 0;
  };

  std::uint8_t at(int i, int j) const { return state[static_cast<std::size_t>(i) + static_cast<std::size_t>(nx) * j]; }
  /// 0 for I^W, 1..6 for the intersections A_1..A_6 of state and box sets, 7/8 for
  /// I^W intersected with the lower/upper box set.
  int region(int i, int j) const;
  Counts counts() const;
  /// Points (time nodes and space-time points) whose classification differs.
  int changes(const ActiveSets& other) const;
  std::uint64_t signature() const;
  bool operator==(const ActiveSets& other) const = default;
};

/// Sets from the strict inequalities of the complementarity functions; equality is inactive.
/// `G` is the control trace of the current adjoint.
ActiveSets compute_active_sets(const ControlIterate& nu, const Eigen::MatrixXd& y, const Eigen::VectorXd& G,
                               const VirtualControlProblem& prob);

/// Multiplier beta = (sigma/eps^2)(g y - r^eps) on the state-active points.
struct StateCoupling {
  Eigen::MatrixXd g, r;  ///< g and r^eps, zero on I^W
};
StateCoupling state_coupling(const ActiveSets& sets, const VirtualControlProblem& prob);

/// Assembled Newton system in model coordinates, unknowns [x_1..x_n, p_1..p_n].
struct KKTSystem {
  SpMat A;
  Eigen::VectorXd rhs;
  int dim = 0, steps = 0;
};
KKTSystem assemble_kkt(const SpaceTimeModel& model, const ActiveSets& sets, const VirtualControlProblem& prob,
                       const PrognosisData& data);

enum class KKTBackend { Condensed, Assembled };

/// Control of the Newton step on fixed sets: u from the inactive-time Schur complement (or
/// from the assembled system), remaining fields by one forward and one adjoint sweep.
struct NewtonStep {
  Eigen::VectorXd u;
  Eigen::MatrixXd y, p;     ///< lifted, columns 0..n
  Eigen::MatrixXd p_coords; ///< model coordinates
  Eigen::MatrixXd beta;
  Eigen::VectorXd G;
};
NewtonStep solve_newton(const SpaceTimeModel& model, const ActiveSets& sets, const VirtualControlProblem& prob,
                        const PrognosisData& data, KKTBackend backend = KKTBackend::Condensed);

/// nu^{k+1} from a Newton step on `sets`.
ControlIterate recover_iterate(const ActiveSets& sets, const NewtonStep& step, const VirtualControlProblem& prob);

struct IterationRecord {
  int iteration = 0;
  ActiveSets::Counts counts;
  int changes = 0;
  double objective = 0.0;
  double ms = 0.0;
};

struct KKTSolution {
  Eigen::MatrixXd y, p;  ///< lifted, columns 0..n
  Eigen::VectorXd u;
  Eigen::MatrixXd w, beta, theta;
  Eigen::VectorXd alpha;  ///< control multiplier G(p) - u
  ActiveSets sets;
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;
  std::vector<IterationRecord> trace;
};

class PDASSError : public Error {
 public:
  enum class Kind { MaxIterations, Cycling, LinearSolve };
  PDASSError(Kind kind, const std::string& what, std::vector<IterationRecord> trace)
      : Error(what), kind_(kind), trace_(std::move(trace)) {}
  Kind kind() const { return kind_; }
  const std::vector<IterationRecord>& trace() const { return trace_; }

 private:
  Kind kind_;
  std::vector<IterationRecord> trace_;
};

struct PDASSOptions {
  int max_iterations = 50;
  KKTBackend backend = KKTBackend::Condensed;
  std::optional<ControlIterate> initial;   ///< nu^0; default from initial_control
  std::optional<double> initial_control;   ///< constant u^0; default midpoint of [u_a, u_b]
  std::filesystem::path trace_path;        ///< JSON lines, one per iteration (empty = off)
  std::filesystem::path dump_dir;          ///< Matrix Market KKT per iteration (empty = off)
};

/// Algorithm 1; stops when all sets repeat. Throws PDASSError on exhaustion, on a repeat of an
/// earlier non-consecutive set signature, or on a failed linear solve.
KKTSolution pdass_solve(const SpaceTimeModel& model, const VirtualControlProblem& prob, const PrognosisData& data,
                        const PDASSOptions& opts = {});

/// 1/2 |u|_U^2 + sigma/2 |w|_W^2 with lumped W.
double objective(const Eigen::VectorXd& u, const Eigen::MatrixXd& w, const VirtualControlProblem& prob,
                 const Eigen::VectorXd& lumped_mass, double dt);

/// Largest violation of u, w and y + eps w bounds (0 when feasible).
double max_infeasibility(const Eigen::VectorXd& u, const Eigen::MatrixXd& w, const Eigen::MatrixXd& y,
                         const VirtualControlProblem& prob);

/// max over grid of min(|multiplier|, |slack|) for the control, state and box pairs.
double complementarity_residual(const KKTSolution& sol, const VirtualControlProblem& prob);

}  // namespace heatmpc
