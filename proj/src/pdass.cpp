#include "heatmpc/pdass.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <Eigen/Cholesky>
#include <spdlog/spdlog.h>

#include "heatmpc/linalg.hpp"
#include "heatmpc/matrix_market.hpp"
#include "heatmpc/parallel.hpp"
#include "json.hpp"

namespace heatmpc {

void VirtualControlProblem::validate() const {
  const int n = steps();
  if (n < 0) throw ConfigError("problem: empty control bounds");
  if (u_b.size() != u_a.size()) throw DimensionError("problem: u_a and u_b lengths differ");
  if (y_a.cols() != n + 1 || y_b.cols() != n + 1 || y_a.rows() != y_b.rows())
    throw DimensionError("problem: state bounds do not match the time grid");
  if ((u_a.array() > u_b.array()).any()) throw ConfigError("problem: require u_a <= u_b");
  if ((y_a.array() >= y_b.array()).any()) throw ConfigError("problem: require y_a < y_b pointwise");
  if (!(w_a < 0.0 && 0.0 < w_b)) throw ConfigError("problem: require w_a < 0 < w_b");
  if (!(eps > 0.0)) throw ConfigError("problem: eps must be > 0");
  if (!(sigma > 0.0)) throw ConfigError("problem: sigma must be > 0");
  if (!(eta_u > 0.0 && eta_w > 0.0)) throw ConfigError("problem: eta_u, eta_w must be > 0");
}

VirtualControlProblem VirtualControlProblem::uniform(int space_dofs, const Eigen::VectorXd& u_a,
                                                     const Eigen::VectorXd& u_b, const Eigen::VectorXd& y_a,
                                                     const Eigen::VectorXd& y_b) {
  VirtualControlProblem p;
  p.u_a = u_a;
  p.u_b = u_b;
  p.y_a = Eigen::VectorXd::Ones(space_dofs) * y_a.transpose();
  p.y_b = Eigen::VectorXd::Ones(space_dofs) * y_b.transpose();
  return p;
}

VirtualControlProblem VirtualControlProblem::window(int offset, int n) const {
  VirtualControlProblem p = *this;
  const int last = steps();
  if (offset < 0 || last < 0) throw DimensionError("problem window: invalid offset");
  p.u_a.resize(n + 1);
  p.u_b.resize(n + 1);
  p.y_a.resize(y_a.rows(), n + 1);
  p.y_b.resize(y_b.rows(), n + 1);
  for (int j = 0; j <= n; ++j) {
    const int k = std::min(offset + j, last);
    p.u_a[j] = u_a[k];
    p.u_b[j] = u_b[k];
    p.y_a.col(j) = y_a.col(k);
    p.y_b.col(j) = y_b.col(k);
  }
  return p;
}

int ActiveSets::region(int i, int j) const {
  const std::uint8_t f = at(i, j);
  const bool lo = f & kLowerW, hi = f & kUpperW, blo = f & kLowerBox, bhi = f & kUpperBox;
  if (lo) return blo ? 3 : bhi ? 4 : 1;
  if (hi) return blo ? 5 : bhi ? 6 : 2;
  return blo ? 7 : bhi ? 8 : 0;
}

ActiveSets::Counts ActiveSets::counts() const {
  Counts c;
  for (auto s : control) {
    c.u_lower += s == kLowerU;
    c.u_upper += s == kUpperU;
  }
  for (auto f : state) {
    c.w_lower += (f & kLowerW) != 0;
    c.w_upper += (f & kUpperW) != 0;
    c.box_lower += (f & kLowerBox) != 0;
    c.box_upper += (f & kUpperBox) != 0;
  }
  return c;
}

int ActiveSets::changes(const ActiveSets& other) const {
  if (other.control.size() != control.size() || other.state.size() != state.size())
    throw DimensionError("ActiveSets::changes: different grids");
  int n = 0;
  for (std::size_t i = 0; i < control.size(); ++i) n += control[i] != other.control[i];
  for (std::size_t i = 0; i < state.size(); ++i) n += state[i] != other.state[i];
  return n;
}

std::uint64_t ActiveSets::signature() const {
  // FNV-1a over both masks.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint8_t b) {
    h ^= b;
    h *= 1099511628211ull;
  };
  for (auto b : control) mix(b);
  mix(0xff);
  for (auto b : state) mix(b);
  return h;
}

ActiveSets compute_active_sets(const ControlIterate& nu, const Eigen::MatrixXd& y, const Eigen::VectorXd& G,
                               const VirtualControlProblem& prob) {
  const int nt = prob.steps() + 1, nx = prob.space_dofs();
  if (nu.u.size() != nt || G.size() != nt) throw DimensionError("compute_active_sets: control size mismatch");
  if (y.rows() != nx || y.cols() != nt || nu.w.rows() != nx || nu.w.cols() != nt || nu.theta.rows() != nx ||
      nu.theta.cols() != nt)
    throw DimensionError("compute_active_sets: space-time field size mismatch");
  ActiveSets s;
  s.nx = nx;
  s.nt = nt;
  s.control.assign(nt, ActiveSets::kInactive);
  s.state.assign(static_cast<std::size_t>(nx) * nt, 0);
  const double eta = prob.eta();
  parallel_for(0, static_cast<std::size_t>(nt), [&](std::size_t jj) {
    const auto j = static_cast<Eigen::Index>(jj);
    // alpha(nu) + eta_u (u - u_x) with alpha(nu) = G - u.
    const double a = G[j] - nu.u[j];
    if (a + prob.eta_u * (nu.u[j] - prob.u_a[j]) < 0.0)
      s.control[jj] = ActiveSets::kLowerU;
    else if (a + prob.eta_u * (nu.u[j] - prob.u_b[j]) > 0.0)
      s.control[jj] = ActiveSets::kUpperU;
    for (Eigen::Index i = 0; i < nx; ++i) {
      const double w = nu.w(i, j), th = nu.theta(i, j);
      const double beta = -(prob.sigma * w + th) / prob.eps;
      const double v = y(i, j) + prob.eps * w;
      std::uint8_t f = 0;
      if (beta + eta * (v - prob.y_a(i, j)) < 0.0)
        f |= ActiveSets::kLowerW;
      else if (beta + eta * (v - prob.y_b(i, j)) > 0.0)
        f |= ActiveSets::kUpperW;
      if (th + prob.eta_w * (w - prob.w_a) < 0.0)
        f |= ActiveSets::kLowerBox;
      else if (th + prob.eta_w * (w - prob.w_b) > 0.0)
        f |= ActiveSets::kUpperBox;
      s.state[static_cast<std::size_t>(i) + static_cast<std::size_t>(nx) * jj] = f;
    }
  });
  return s;
}

StateCoupling state_coupling(const ActiveSets& sets, const VirtualControlProblem& prob) {
  const int nx = sets.nx, nt = sets.nt;
  StateCoupling c{Eigen::MatrixXd::Zero(nx, nt), Eigen::MatrixXd::Zero(nx, nt)};
  const double e = prob.eps, f = (e + 1.0) / e;
  for (int j = 0; j < nt; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double ya = prob.y_a(i, j), yb = prob.y_b(i, j);
      switch (sets.region(i, j)) {
        case 1: c.g(i, j) = 1.0; c.r(i, j) = ya; break;
        case 2: c.g(i, j) = 1.0; c.r(i, j) = yb; break;
        case 3: c.g(i, j) = 1.0 + 1.0 / e; c.r(i, j) = -prob.w_a + f * ya; break;
        case 4: c.g(i, j) = 1.0 + 1.0 / e; c.r(i, j) = -prob.w_b + f * ya; break;
        case 5: c.g(i, j) = 1.0 + 1.0 / e; c.r(i, j) = -prob.w_a + f * yb; break;
        case 6: c.g(i, j) = 1.0 + 1.0 / e; c.r(i, j) = -prob.w_b + f * yb; break;
        default: break;
      }
    }
  }
  return c;
}

namespace {

void check_inputs(const SpaceTimeModel& model, const VirtualControlProblem& prob, const PrognosisData& data) {
  prob.validate();
  if (prob.space_dofs() != model.space_dofs()) throw DimensionError("pdass: bounds do not match the mesh");
  if (data.y0.size() != model.space_dofs()) throw DimensionError("pdass: initial field size mismatch");
  if (data.yout.size() != prob.steps() + 1) throw DimensionError("pdass: yout does not match the horizon");
  if (prob.steps() < 1) throw ConfigError("pdass: horizon must have at least one step");
  if (data.offset < 0) throw ConfigError("pdass: negative offset");
}

/// Rows that are state-active at time node j.
std::vector<int> active_rows(const ActiveSets& sets, int j) {
  std::vector<int> rows;
  for (int i = 0; i < sets.nx; ++i)
    if (sets.at(i, j) & (ActiveSets::kLowerW | ActiveSets::kUpperW)) rows.push_back(i);
  return rows;
}

double fixed_control(const ActiveSets& sets, const VirtualControlProblem& prob, int j) {
  switch (sets.control[j]) {
    case ActiveSets::kLowerU: return prob.u_a[j];
    case ActiveSets::kUpperU: return prob.u_b[j];
    default: return 0.0;
  }
}

void add_sparse(std::vector<Eigen::Triplet<double>>& t, const SpMat& a, int row0, int col0, double scale,
                bool transpose) {
  for (int k = 0; k < a.outerSize(); ++k)
    for (SpMat::InnerIterator it(a, k); it; ++it) {
      const int r = transpose ? static_cast<int>(it.col()) : static_cast<int>(it.row());
      const int c = transpose ? static_cast<int>(it.row()) : static_cast<int>(it.col());
      t.emplace_back(row0 + r, col0 + c, scale * it.value());
    }
}

/// Controls on the inactive times from the condensed system
///   (diag(alpha_I) + sum_j alpha_j Z_j' diag(gm_j) Z_j) u_I = sum_j alpha_j Z_j' (rm_j - gm_j zF_j),
/// where Z_j are the lifted responses of the active rows to unit controls on I.
Eigen::VectorXd condensed_controls(const SpaceTimeModel& model, const ActiveSets& sets,
                                   const VirtualControlProblem& prob, const PrognosisData& data,
                                   const StateCoupling& coupling) {
  const int n = prob.steps();
  const Eigen::VectorXd alpha = model.weights(n);
  const Eigen::VectorXd& m = model.lumped_mass();
  const double eta = prob.eta();
  std::vector<int> inactive;
  for (int j = 1; j <= n; ++j)
    if (sets.control[j] == ActiveSets::kInactive) inactive.push_back(j);
  const int nI = static_cast<int>(inactive.size());

  Eigen::VectorXd u = Eigen::VectorXd::Zero(n + 1);
  for (int j = 0; j <= n; ++j) u[j] = fixed_control(sets, prob, j);
  if (nI == 0) return u;

  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(nI, nI);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nI);
  Eigen::MatrixXd X(model.dim(), 0);
  Eigen::VectorXd xF;
  int c = 0;
  for (int j = 1; j <= n; ++j) {
    const int k = data.offset + j;
    Eigen::VectorXd f = j == 1 ? model.initial_load(data.y0) : Eigen::VectorXd(model.apply_M(xF));
    f += data.yout[j] * model.outside_load() + u[j] * model.control_load();
    xF = model.solve_E(k, f);
    if (c > 0) X = model.solve_E(k, model.apply_M(X));
    if (sets.control[j] == ActiveSets::kInactive) {
      X.conservativeResize(Eigen::NoChange, c + 1);
      X.col(c) = model.solve_E(k, model.control_load());
      ++c;
    }
    const std::vector<int> rows = active_rows(sets, j);
    if (rows.empty() || c == 0) continue;
    const Eigen::MatrixXd Z = model.lift_rows(rows, X);
    const Eigen::VectorXd zF = model.lift_rows(rows, xF);
    Eigen::VectorXd gm(rows.size()), rm(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const int i = rows[r];
      gm[static_cast<Eigen::Index>(r)] = eta * m[i] * coupling.g(i, j);
      rm[static_cast<Eigen::Index>(r)] = eta * m[i] * coupling.r(i, j);
    }
    gamma.topLeftCorner(c, c).noalias() += alpha[j] * (Z.transpose() * gm.asDiagonal() * Z);
    rhs.head(c).noalias() += alpha[j] * (Z.transpose() * (rm - gm.cwiseProduct(zF)));
  }
  for (int a = 0; a < nI; ++a) gamma(a, a) += alpha[inactive[a]];
  Eigen::VectorXd uI;
  Eigen::LLT<Eigen::MatrixXd> llt(gamma);
  if (llt.info() == Eigen::Success) {
    uI = llt.solve(rhs);
  } else {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gamma);
    if (ldlt.info() != Eigen::Success) throw SolverError("condensed Newton system is singular");
    uI = ldlt.solve(rhs);
  }
  if (!uI.allFinite()) throw SolverError("condensed Newton system produced non-finite controls");
  for (int a = 0; a < nI; ++a) u[inactive[a]] = uI[a];
  return u;
}

Eigen::VectorXd assembled_controls(const SpaceTimeModel& model, const ActiveSets& sets,
                                   const VirtualControlProblem& prob, const PrognosisData& data) {
  const KKTSystem sys = assemble_kkt(model, sets, prob, data);
  const Eigen::VectorXd z = sparse_solve(sys.A, sys.rhs);
  const int n = prob.steps(), d = sys.dim;
  const Eigen::VectorXd alpha = model.weights(n);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n + 1);
  for (int j = 0; j <= n; ++j) u[j] = fixed_control(sets, prob, j);
  for (int j = 1; j <= n; ++j)
    if (sets.control[j] == ActiveSets::kInactive)
      u[j] = model.control_load().dot(z.segment(static_cast<Eigen::Index>(n + j - 1) * d, d)) / alpha[j];
  return u;
}

}  // namespace

KKTSystem assemble_kkt(const SpaceTimeModel& model, const ActiveSets& sets, const VirtualControlProblem& prob,
                       const PrognosisData& data) {
  check_inputs(model, prob, data);
  if (sets.nx != prob.space_dofs() || sets.nt != prob.steps() + 1)
    throw DimensionError("assemble_kkt: sets do not match the problem");
  const int n = prob.steps(), d = model.dim();
  const Eigen::VectorXd alpha = model.weights(n);
  const Eigen::VectorXd& m = model.lumped_mass();
  const Eigen::VectorXd& bhat = model.control_load();
  const double eta = prob.eta();
  const StateCoupling coupling = state_coupling(sets, prob);
  const SpMat M = model.M_matrix();

  KKTSystem sys;
  sys.dim = d;
  sys.steps = n;
  sys.rhs = Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(n) * d);
  std::vector<std::vector<Eigen::Triplet<double>>> blocks(n);
  std::vector<int> nz_b;
  for (int i = 0; i < d; ++i)
    if (bhat[i] != 0.0) nz_b.push_back(i);

  parallel_for(0, static_cast<std::size_t>(n), [&](std::size_t jj) {
    const int j = static_cast<int>(jj) + 1;
    const int k = data.offset + j;
    auto& t = blocks[jj];
    const int ys = (j - 1) * d, ps = (n + j - 1) * d;
    const SpMat E = model.E_matrix(k);
    // State row.
    add_sparse(t, E, ys, ys, 1.0, false);
    if (j > 1) add_sparse(t, M, ys, ys - d, -1.0, false);
    Eigen::VectorXd r = data.yout[j] * model.outside_load() + fixed_control(sets, prob, j) * bhat;
    if (j == 1) r += model.initial_load(data.y0);
    if (sets.control[j] == ActiveSets::kInactive)
      for (int a : nz_b)
        for (int b : nz_b) t.emplace_back(ys + a, ps + b, -bhat[a] * bhat[b] / alpha[j]);
    sys.rhs.segment(ys, d) = r;
    // Adjoint row.
    add_sparse(t, E, ps, ps, 1.0, true);
    if (j < n) add_sparse(t, M, ps, ps + d, -1.0, false);
    const std::vector<int> rows = active_rows(sets, j);
    if (!rows.empty()) {
      Eigen::VectorXd gm(rows.size());
      Eigen::VectorXd f = Eigen::VectorXd::Zero(sets.nx);
      for (std::size_t q = 0; q < rows.size(); ++q) {
        gm[static_cast<Eigen::Index>(q)] = eta * m[rows[q]] * coupling.g(rows[q], j);
        f[rows[q]] = eta * coupling.r(rows[q], j);
      }
      add_sparse(t, model.mixed_block(rows, gm), ps, ys, alpha[j], false);
      sys.rhs.segment(ps, d) = alpha[j] * model.project_lumped(f);
    }
  });
  std::size_t total = 0;
  for (const auto& b : blocks) total += b.size();
  std::vector<Eigen::Triplet<double>> all;
  all.reserve(total);
  for (auto& b : blocks) all.insert(all.end(), b.begin(), b.end());
  sys.A.resize(2 * n * d, 2 * n * d);
  sys.A.setFromTriplets(all.begin(), all.end());
  return sys;
}

NewtonStep solve_newton(const SpaceTimeModel& model, const ActiveSets& sets, const VirtualControlProblem& prob,
                        const PrognosisData& data, KKTBackend backend) {
  check_inputs(model, prob, data);
  if (sets.nx != prob.space_dofs() || sets.nt != prob.steps() + 1)
    throw DimensionError("solve_newton: sets do not match the problem");
  const StateCoupling coupling = state_coupling(sets, prob);
  NewtonStep s;
  s.u = backend == KKTBackend::Condensed ? condensed_controls(model, sets, prob, data, coupling)
                                         : assembled_controls(model, sets, prob, data);
  s.y = model.forward(data.y0, s.u, data.yout, data.offset);
  s.beta = Eigen::MatrixXd::Zero(sets.nx, sets.nt);
  const double eta = prob.eta();
  for (int j = 0; j < sets.nt; ++j)
    for (int i = 0; i < sets.nx; ++i)
      if (coupling.g(i, j) != 0.0) s.beta(i, j) = eta * (coupling.g(i, j) * s.y(i, j) - coupling.r(i, j));
  s.p_coords = model.adjoint_coords(s.beta, data.offset);
  s.p = model.lift(s.p_coords);
  s.G = model.control_trace(s.p_coords);
  return s;
}

ControlIterate recover_iterate(const ActiveSets& sets, const NewtonStep& step, const VirtualControlProblem& prob) {
  const int nx = sets.nx, nt = sets.nt;
  ControlIterate nu;
  nu.u.resize(nt);
  for (int j = 0; j < nt; ++j)
    nu.u[j] = sets.control[j] == ActiveSets::kInactive ? step.G[j] : fixed_control(sets, prob, j);
  nu.w = Eigen::MatrixXd::Zero(nx, nt);
  nu.theta = Eigen::MatrixXd::Zero(nx, nt);
  const double e = prob.eps, sg = prob.sigma;
  for (int j = 0; j < nt; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double y = step.y(i, j);
      double& w = nu.w(i, j);
      switch (sets.region(i, j)) {
        case 0: w = 0.0; break;
        case 1: w = (prob.y_a(i, j) - y) / e; break;
        case 2: w = (prob.y_b(i, j) - y) / e; break;
        case 3: case 5: case 7: w = prob.w_a; break;
        default: w = prob.w_b; break;
      }
      nu.theta(i, j) = -sg * w - e * step.beta(i, j);
    }
  }
  return nu;
}

double objective(const Eigen::VectorXd& u, const Eigen::MatrixXd& w, const VirtualControlProblem& prob,
                 const Eigen::VectorXd& m, double dt) {
  const int n = static_cast<int>(u.size()) - 1;
  const Eigen::VectorXd alpha = TimeGrid{0.0, dt, n}.trapezoid_weights();
  double ju = 0.0, jw = 0.0;
  for (int j = 0; j <= n; ++j) {
    ju += alpha[j] * u[j] * u[j];
    jw += alpha[j] * w.col(j).cwiseAbs2().dot(m);
  }
  return 0.5 * ju + 0.5 * prob.sigma * jw;
}

double max_infeasibility(const Eigen::VectorXd& u, const Eigen::MatrixXd& w, const Eigen::MatrixXd& y,
                         const VirtualControlProblem& prob) {
  double v = 0.0;
  v = std::max(v, (prob.u_a - u).maxCoeff());
  v = std::max(v, (u - prob.u_b).maxCoeff());
  v = std::max(v, (prob.w_a - w.array()).maxCoeff());
  v = std::max(v, (w.array() - prob.w_b).maxCoeff());
  const Eigen::MatrixXd s = y + prob.eps * w;
  v = std::max(v, (prob.y_a - s).maxCoeff());
  v = std::max(v, (s - prob.y_b).maxCoeff());
  return v;
}

double complementarity_residual(const KKTSolution& sol, const VirtualControlProblem& prob) {
  double res = 0.0;
  for (Eigen::Index j = 0; j < sol.u.size(); ++j) {
    const double slack = std::min(std::abs(sol.u[j] - prob.u_a[j]), std::abs(sol.u[j] - prob.u_b[j]));
    res = std::max(res, std::min(std::abs(sol.alpha[j]), slack));
  }
  for (Eigen::Index j = 0; j < sol.w.cols(); ++j)
    for (Eigen::Index i = 0; i < sol.w.rows(); ++i) {
      const double v = sol.y(i, j) + prob.eps * sol.w(i, j);
      const double ss = std::min(std::abs(v - prob.y_a(i, j)), std::abs(v - prob.y_b(i, j)));
      res = std::max(res, std::min(std::abs(sol.beta(i, j)), ss));
      const double sb = std::min(std::abs(sol.w(i, j) - prob.w_a), std::abs(sol.w(i, j) - prob.w_b));
      res = std::max(res, std::min(std::abs(sol.theta(i, j)), sb));
    }
  return res;
}

namespace {

double default_control(const VirtualControlProblem& prob, int j) {
  const double a = prob.u_a[j], b = prob.u_b[j];
  const bool fa = std::abs(a) < kInfiniteBound, fb = std::abs(b) < kInfiniteBound;
  if (fa && fb) return 0.5 * (a + b);
  if (fa) return a;
  if (fb) return b;
  return 0.0;
}

nlohmann::json record_json(const IterationRecord& r) {
  return {{"iteration", r.iteration},
          {"u_lower", r.counts.u_lower},
          {"u_upper", r.counts.u_upper},
          {"w_lower", r.counts.w_lower},
          {"w_upper", r.counts.w_upper},
          {"box_lower", r.counts.box_lower},
          {"box_upper", r.counts.box_upper},
          {"changes", r.changes},
          {"objective", r.objective},
          {"ms", r.ms}};
}

}  // namespace

KKTSolution pdass_solve(const SpaceTimeModel& model, const VirtualControlProblem& prob, const PrognosisData& data,
                        const PDASSOptions& opts) {
  check_inputs(model, prob, data);
  const int n = prob.steps(), nx = prob.space_dofs();
  ControlIterate nu;
  if (opts.initial) {
    nu = *opts.initial;
    if (nu.u.size() != n + 1 || nu.w.rows() != nx || nu.w.cols() != n + 1 || nu.theta.rows() != nx ||
        nu.theta.cols() != n + 1)
      throw DimensionError("pdass: initial iterate does not match the problem");
  } else {
    nu.u.resize(n + 1);
    for (int j = 0; j <= n; ++j)
      nu.u[j] = opts.initial_control ? std::clamp(*opts.initial_control, prob.u_a[j], prob.u_b[j])
                                     : default_control(prob, j);
    nu.w = Eigen::MatrixXd::Zero(nx, n + 1);
    nu.theta = Eigen::MatrixXd::Zero(nx, n + 1);
  }

  std::ofstream trace_out;
  if (!opts.trace_path.empty()) {
    if (opts.trace_path.has_parent_path()) std::filesystem::create_directories(opts.trace_path.parent_path());
    trace_out.open(opts.trace_path, std::ios::trunc);
  }
  std::vector<IterationRecord> trace;

  ActiveSets sets;
  try {
    const Eigen::MatrixXd y = model.forward(data.y0, nu.u, data.yout, data.offset);
    const Eigen::MatrixXd beta0 = -(prob.sigma * nu.w + nu.theta) / prob.eps;
    const Eigen::VectorXd G = model.control_trace(model.adjoint_coords(beta0, data.offset));
    sets = compute_active_sets(nu, y, G, prob);
  } catch (const SolverError& e) {
    throw PDASSError(PDASSError::Kind::LinearSolve, std::string("pdass initialization: ") + e.what(), trace);
  }

  std::vector<ActiveSets> history;
  for (int k = 1; k <= opts.max_iterations; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    NewtonStep step;
    try {
      if (!opts.dump_dir.empty()) {
        const KKTSystem sys = assemble_kkt(model, sets, prob, data);
        std::filesystem::create_directories(opts.dump_dir);
        mm::write_sparse(opts.dump_dir / ("kkt_" + std::to_string(k) + ".mtx"), sys.A, "PDASS Newton matrix");
        mm::write_dense(opts.dump_dir / ("rhs_" + std::to_string(k) + ".mtx"), sys.rhs, "PDASS Newton right-hand side");
      }
      step = solve_newton(model, sets, prob, data, opts.backend);
    } catch (const SolverError& e) {
      throw PDASSError(PDASSError::Kind::LinearSolve,
                       "pdass iteration " + std::to_string(k) + ": " + e.what(), trace);
    }
    ControlIterate next = recover_iterate(sets, step, prob);
    ActiveSets next_sets = compute_active_sets(next, step.y, step.G, prob);

    IterationRecord rec;
    rec.iteration = k;
    rec.counts = sets.counts();
    rec.changes = next_sets.changes(sets);
    rec.objective = objective(next.u, next.w, prob, model.lumped_mass(), model.dt());
    rec.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    trace.push_back(rec);
    if (trace_out) trace_out << record_json(rec).dump() << '\n' << std::flush;
    spdlog::debug("pdass iteration {}: {} set changes, J = {:.6e}", k, rec.changes, rec.objective);

    if (next_sets == sets) {
      KKTSolution sol;
      sol.y = std::move(step.y);
      sol.p = std::move(step.p);
      sol.u = next.u;
      sol.w = std::move(next.w);
      sol.theta = std::move(next.theta);
      sol.beta = std::move(step.beta);
      sol.alpha = step.G - sol.u;
      sol.sets = std::move(sets);
      sol.iterations = k;
      sol.converged = true;
      sol.objective = rec.objective;
      sol.trace = std::move(trace);
      return sol;
    }
    for (const auto& h : history)
      if (h.signature() == next_sets.signature() && h == next_sets)
        throw PDASSError(PDASSError::Kind::Cycling,
                         "pdass: active sets cycle at iteration " + std::to_string(k), trace);
    history.push_back(std::move(sets));
    sets = std::move(next_sets);
  }
  throw PDASSError(PDASSError::Kind::MaxIterations,
                   "pdass: no convergence within " + std::to_string(opts.max_iterations) + " iterations", trace);
}

}  // namespace heatmpc
