#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "heatmpc/boussinesq.hpp"
#include "heatmpc/fem.hpp"
#include "heatmpc/mesh.hpp"
#include "heatmpc/mpc.hpp"
#include "heatmpc/pod.hpp"
#include "heatmpc/turnpike.hpp"
#include "json.hpp"

namespace heatmpc {

/// Closed-form function of time over the grammar
///   expr := term (('+' | '-') term)*     term := unary (('*' | '/') unary)*
///   unary := '-' unary | primary         primary := number | 't' | '(' expr ')'
///                                                 | ('min' | 'max') '(' expr ',' expr ')'
class Expression {
 public:
  /// Throws ConfigError with the offending position.
  static Expression parse(const std::string& text);
  static Expression constant(double v);

  double operator()(double t) const;
  const std::string& text() const { return text_; }

  struct Node;

 private:
  std::string text_;
  std::shared_ptr<const Node> root_;
};

/// Experiment description; see configs/ for complete examples. Unknown keys and type
/// mismatches are rejected with the JSON path of the key.
struct ExperimentConfig {
  struct MeshSection {
    int nx = 16, ny = 16;
    Rectangle domain;
    Edge control_edge = Edge::Bottom;
  } mesh;
  PhysicalParams physics;
  struct BoundsSection {
    Expression u_a = Expression::constant(0.0);
    Expression u_b = Expression::constant(1e6);
    Expression y_a = Expression::parse("17.5 + min(t, 2)");
    Expression y_b = Expression::constant(23.0);
    double w_a = -1e9, w_b = 1e9;
  } bounds;
  struct RelaxationSection {
    double eps = 0.025, sigma = 1.0, eta_u = 1.0, eta_w = 1.0;
  } relaxation;
  struct TimeSection {
    double dt = 0.01;
    int N_t = 300;
  } time;
  struct MPCSection {
    int N = 300, M = 60;
    double tau1_rel = 1e-8, tau2 = 3.5;
    double u_init = 22.5;
    int refinements = 2;
    bool reduced = true;
  } mpc;
  SnapshotSelectionConfig snapshots;
  struct ForecastSection {
    Expression y_out = Expression::parse("max(13, 16 - t)");
  } forecast;
  struct InitialSection {
    double y0 = 20.0;
    double u = 22.5;  ///< fixed control of the advection run
  } initial;
  struct SimulateSection {
    std::vector<double> checkpoint_times;  ///< empty = every state
  } simulate;
  struct TurnpikeSection {
    std::vector<int> horizons{120, 240, 360};
    std::vector<double> inits{17.0, 20.0, 23.0};
  } turnpike;
  struct PDASSSection {
    int max_iterations = 50;
  } pdass;
  std::vector<int> seeds{0};
  std::filesystem::path output_dir = "out";

  /// Reads and validates a document; `mesh.nx`, `mesh.ny`, `time.dt` and `time.N_t` are required.
  static ExperimentConfig from_json(const nlohmann::json& doc);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;

  StructuredQuadMesh build_mesh() const;
  MPCConfig mpc_config() const;
  TurnpikeConfig turnpike_config(std::shared_ptr<const HeatModel> heat) const;
  /// Relaxed problem on nodes 0..steps with spatially uniform bounds.
  VirtualControlProblem problem(int steps, int space_dofs) const;
  Eigen::VectorXd outside_temperature(int steps) const;
  FlowState initial_state(int nodes) const;
  /// Boussinesq states at nodes 0..steps under the constant control initial.u, from rest.
  std::vector<FlowState> fixed_control_run(const StructuredQuadMesh& mesh, const FEOperators& ops, int steps) const;
};

}  // namespace heatmpc
