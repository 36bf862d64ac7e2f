#include "heatmpc/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include "heatmpc/error.hpp"

namespace heatmpc {

struct Expression::Node {
  enum class Op { Number, T, Neg, Add, Sub, Mul, Div, Min, Max } op = Op::Number;
  double value = 0.0;
  std::shared_ptr<const Node> a, b;

  double eval(double t) const {
    switch (op) {
      case Op::Number: return value;
      case Op::T: return t;
      case Op::Neg: return -a->eval(t);
      case Op::Add: return a->eval(t) + b->eval(t);
      case Op::Sub: return a->eval(t) - b->eval(t);
      case Op::Mul: return a->eval(t) * b->eval(t);
      case Op::Div: return a->eval(t) / b->eval(t);
      case Op::Min: return std::min(a->eval(t), b->eval(t));
      case Op::Max: return std::max(a->eval(t), b->eval(t));
    }
    return 0.0;
  }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Op = Expression::Node::Op;

class Parser {
 public:
  explicit Parser(const std::string& s) : s_(s) {}

  NodePtr parse() {
    NodePtr n = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("expression \"" + s_ + "\": " + what + " at position " + std::to_string(pos_));
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }
  static NodePtr make(Op op, NodePtr a = nullptr, NodePtr b = nullptr, double v = 0.0) {
    auto n = std::make_shared<Expression::Node>();
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    n->value = v;
    return n;
  }

  NodePtr expr() {
    NodePtr n = term();
    for (;;) {
      if (accept('+'))
        n = make(Op::Add, n, term());
      else if (accept('-'))
        n = make(Op::Sub, n, term());
      else
        return n;
    }
  }
  NodePtr term() {
    NodePtr n = unary();
    for (;;) {
      if (accept('*'))
        n = make(Op::Mul, n, unary());
      else if (accept('/'))
        n = make(Op::Div, n, unary());
      else
        return n;
    }
  }
  NodePtr unary() {
    if (accept('-')) return make(Op::Neg, unary());
    return primary();
  }
  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    const char c = s_[pos_];
    if (accept('(')) {
      NodePtr n = expr();
      expect(')');
      return n;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s_.substr(pos_), &used);
      } catch (const std::exception&) {
        fail("malformed number");
      }
      pos_ += used;
      return make(Op::Number, nullptr, nullptr, v);
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t end = pos_;
      while (end < s_.size() && std::isalnum(static_cast<unsigned char>(s_[end]))) ++end;
      const std::string name = s_.substr(pos_, end - pos_);
      if (name == "t") {
        pos_ = end;
        return make(Op::T);
      }
      if (name == "min" || name == "max") {
        pos_ = end;
        expect('(');
        NodePtr a = expr();
        expect(',');
        NodePtr b = expr();
        expect(')');
        return make(name == "min" ? Op::Min : Op::Max, a, b);
      }
      fail("unknown name '" + name + "'");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

// Schema helpers; `path` is the dotted key path used in messages.

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void check_keys(const nlohmann::json& obj, const std::string& path, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError(join(path, it.key()) + ": unknown key");
}

const nlohmann::json* find(const nlohmann::json& obj, const std::string& key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

double get_number(const nlohmann::json& obj, const std::string& path, const std::string& key, double fallback,
                  bool required = false) {
  const auto* v = find(obj, key);
  if (!v) {
    if (required) throw ConfigError(join(path, key) + ": required key is missing");
    return fallback;
  }
  if (!v->is_number()) throw ConfigError(join(path, key) + ": expected a number");
  return v->get<double>();
}

int get_int(const nlohmann::json& obj, const std::string& path, const std::string& key, int fallback,
            bool required = false) {
  const auto* v = find(obj, key);
  if (!v) {
    if (required) throw ConfigError(join(path, key) + ": required key is missing");
    return fallback;
  }
  if (!v->is_number_integer()) throw ConfigError(join(path, key) + ": expected an integer");
  return v->get<int>();
}

bool get_bool(const nlohmann::json& obj, const std::string& path, const std::string& key, bool fallback) {
  const auto* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_boolean()) throw ConfigError(join(path, key) + ": expected true or false");
  return v->get<bool>();
}

/// Number or expression string.
Expression get_expression(const nlohmann::json& obj, const std::string& path, const std::string& key,
                          const Expression& fallback) {
  const auto* v = find(obj, key);
  if (!v) return fallback;
  if (v->is_number()) return Expression::constant(v->get<double>());
  if (!v->is_string()) throw ConfigError(join(path, key) + ": expected a number or an expression string");
  try {
    return Expression::parse(v->get<std::string>());
  } catch (const ConfigError& e) {
    throw ConfigError(join(path, key) + ": " + e.what());
  }
}

template <class T>
std::vector<T> get_array(const nlohmann::json& obj, const std::string& path, const std::string& key,
                         std::vector<T> fallback) {
  const auto* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_array()) throw ConfigError(join(path, key) + ": expected an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < v->size(); ++i) {
    const auto& e = (*v)[i];
    const bool ok = std::is_integral_v<T> ? e.is_number_integer() : e.is_number();
    if (!ok) throw ConfigError(join(path, key) + "[" + std::to_string(i) + "]: expected a number");
    out.push_back(e.get<T>());
  }
  return out;
}

const nlohmann::json& section(const nlohmann::json& doc, const std::string& key, bool required = false) {
  static const nlohmann::json empty = nlohmann::json::object();
  const auto* v = find(doc, key);
  if (!v) {
    if (required) throw ConfigError(key + ": required section is missing");
    return empty;
  }
  if (!v->is_object()) throw ConfigError(key + ": expected an object");
  return *v;
}

}  // namespace

Expression Expression::parse(const std::string& text) {
  Expression e;
  e.text_ = text;
  e.root_ = Parser(text).parse();
  return e;
}

Expression Expression::constant(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  Expression e;
  e.text_ = buf;
  auto n = std::make_shared<Node>();
  n->value = v;
  e.root_ = n;
  return e;
}

double Expression::operator()(double t) const { return root_->eval(t); }

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc) {
  check_keys(doc, "", {"mesh", "physics", "bounds", "relaxation", "time", "mpc", "snapshots", "forecast", "initial",
                       "simulate", "turnpike", "pdass", "seeds", "output_dir", "description"});
  ExperimentConfig c;

  const auto& m = section(doc, "mesh", true);
  check_keys(m, "mesh", {"nx", "ny", "domain", "control_edge"});
  c.mesh.nx = get_int(m, "mesh", "nx", 0, true);
  c.mesh.ny = get_int(m, "mesh", "ny", 0, true);
  if (const auto* d = find(m, "domain")) {
    check_keys(*d, "mesh.domain", {"x0", "x1", "y0", "y1"});
    c.mesh.domain.x0 = get_number(*d, "mesh.domain", "x0", 0.0);
    c.mesh.domain.x1 = get_number(*d, "mesh.domain", "x1", 1.0);
    c.mesh.domain.y0 = get_number(*d, "mesh.domain", "y0", 0.0);
    c.mesh.domain.y1 = get_number(*d, "mesh.domain", "y1", 1.0);
  }
  if (const auto* e = find(m, "control_edge")) {
    if (!e->is_string()) throw ConfigError("mesh.control_edge: expected a string");
    try {
      c.mesh.control_edge = edge_from_string(e->get<std::string>());
    } catch (const Error& err) {
      throw ConfigError(std::string("mesh.control_edge: ") + err.what());
    }
  }

  const auto& p = section(doc, "physics");
  check_keys(p, "physics", {"rho", "nu", "alpha", "kappa", "cp", "g", "y_ref", "gamma", "gamma_c"});
  PhysicalParams& ph = c.physics;
  ph.rho = get_number(p, "physics", "rho", ph.rho);
  ph.nu = get_number(p, "physics", "nu", ph.nu);
  ph.alpha_exp = get_number(p, "physics", "alpha", ph.alpha_exp);
  ph.kappa = get_number(p, "physics", "kappa", ph.kappa);
  ph.cp = get_number(p, "physics", "cp", ph.cp);
  const auto g = get_array<double>(p, "physics", "g", {ph.g[0], ph.g[1]});
  if (g.size() != 2) throw ConfigError("physics.g: expected two components");
  ph.g = {g[0], g[1]};
  ph.y_ref = get_number(p, "physics", "y_ref", ph.y_ref);
  ph.gamma = get_number(p, "physics", "gamma", ph.gamma);
  ph.gamma_c = get_number(p, "physics", "gamma_c", ph.gamma_c);

  const auto& b = section(doc, "bounds");
  check_keys(b, "bounds", {"u_a", "u_b", "y_a_spec", "y_b_spec", "w_a", "w_b"});
  c.bounds.u_a = get_expression(b, "bounds", "u_a", c.bounds.u_a);
  c.bounds.u_b = get_expression(b, "bounds", "u_b", c.bounds.u_b);
  c.bounds.y_a = get_expression(b, "bounds", "y_a_spec", c.bounds.y_a);
  c.bounds.y_b = get_expression(b, "bounds", "y_b_spec", c.bounds.y_b);
  c.bounds.w_a = get_number(b, "bounds", "w_a", c.bounds.w_a);
  c.bounds.w_b = get_number(b, "bounds", "w_b", c.bounds.w_b);

  const auto& r = section(doc, "relaxation");
  check_keys(r, "relaxation", {"eps", "sigma", "eta", "eta_u", "eta_w"});
  c.relaxation.eps = get_number(r, "relaxation", "eps", c.relaxation.eps);
  c.relaxation.sigma = get_number(r, "relaxation", "sigma", c.relaxation.sigma);
  c.relaxation.eta_u = get_number(r, "relaxation", "eta_u", c.relaxation.eta_u);
  c.relaxation.eta_w = get_number(r, "relaxation", "eta_w", c.relaxation.eta_w);
  if (find(r, "eta")) {
    const double eta = get_number(r, "relaxation", "eta", 0.0);
    const double derived = c.relaxation.sigma / (c.relaxation.eps * c.relaxation.eps);
    if (std::abs(eta - derived) > 1e-10 * derived)
      throw ConfigError("relaxation.eta: must equal sigma / eps^2 = " + std::to_string(derived));
  }

  const auto& t = section(doc, "time", true);
  check_keys(t, "time", {"dt", "N_t"});
  c.time.dt = get_number(t, "time", "dt", 0.0, true);
  c.time.N_t = get_int(t, "time", "N_t", 0, true);

  const auto& mp = section(doc, "mpc");
  check_keys(mp, "mpc", {"N", "M", "tau1_rel", "tau2", "u_init", "refinements", "reduced"});
  c.mpc.N = get_int(mp, "mpc", "N", c.mpc.N);
  c.mpc.M = get_int(mp, "mpc", "M", c.mpc.M);
  c.mpc.tau1_rel = get_number(mp, "mpc", "tau1_rel", c.mpc.tau1_rel);
  if (const auto* v = find(mp, "tau2"); v && v->is_string()) {
    if (v->get<std::string>() != "inf") throw ConfigError("mpc.tau2: expected a number or \"inf\"");
    c.mpc.tau2 = std::numeric_limits<double>::infinity();
  } else {
    c.mpc.tau2 = get_number(mp, "mpc", "tau2", c.mpc.tau2);
  }
  c.mpc.u_init = get_number(mp, "mpc", "u_init", c.mpc.u_init);
  c.mpc.refinements = get_int(mp, "mpc", "refinements", c.mpc.refinements);
  c.mpc.reduced = get_bool(mp, "mpc", "reduced", c.mpc.reduced);

  const auto& s = section(doc, "snapshots");
  check_keys(s, "snapshots", {"rho", "varrho"});
  c.snapshots.rho = get_number(s, "snapshots", "rho", c.snapshots.rho);
  c.snapshots.varrho = get_number(s, "snapshots", "varrho", c.snapshots.varrho);

  const auto& f = section(doc, "forecast");
  check_keys(f, "forecast", {"y_out_spec"});
  c.forecast.y_out = get_expression(f, "forecast", "y_out_spec", c.forecast.y_out);

  const auto& in = section(doc, "initial");
  check_keys(in, "initial", {"y0", "u"});
  c.initial.y0 = get_number(in, "initial", "y0", c.initial.y0);
  c.initial.u = get_number(in, "initial", "u", c.initial.u);

  const auto& sim = section(doc, "simulate");
  check_keys(sim, "simulate", {"checkpoint_times"});
  c.simulate.checkpoint_times = get_array<double>(sim, "simulate", "checkpoint_times", c.simulate.checkpoint_times);

  const auto& tp = section(doc, "turnpike");
  check_keys(tp, "turnpike", {"horizons", "inits"});
  c.turnpike.horizons = get_array<int>(tp, "turnpike", "horizons", c.turnpike.horizons);
  c.turnpike.inits = get_array<double>(tp, "turnpike", "inits", c.turnpike.inits);

  const auto& pd = section(doc, "pdass");
  check_keys(pd, "pdass", {"max_iterations"});
  c.pdass.max_iterations = get_int(pd, "pdass", "max_iterations", c.pdass.max_iterations);

  c.seeds = get_array<int>(doc, "", "seeds", c.seeds);
  if (const auto* o = find(doc, "output_dir")) {
    if (!o->is_string()) throw ConfigError("output_dir: expected a string");
    c.output_dir = o->get<std::string>();
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(doc);
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json d;
  d["mesh"] = {{"nx", mesh.nx},
               {"ny", mesh.ny},
               {"domain", {{"x0", mesh.domain.x0}, {"x1", mesh.domain.x1}, {"y0", mesh.domain.y0}, {"y1", mesh.domain.y1}}},
               {"control_edge", to_string(mesh.control_edge)}};
  d["physics"] = {{"rho", physics.rho},     {"nu", physics.nu},       {"alpha", physics.alpha_exp},
                  {"kappa", physics.kappa}, {"cp", physics.cp},       {"g", {physics.g[0], physics.g[1]}},
                  {"y_ref", physics.y_ref}, {"gamma", physics.gamma}, {"gamma_c", physics.gamma_c}};
  d["bounds"] = {{"u_a", bounds.u_a.text()}, {"u_b", bounds.u_b.text()}, {"y_a_spec", bounds.y_a.text()},
                 {"y_b_spec", bounds.y_b.text()}, {"w_a", bounds.w_a}, {"w_b", bounds.w_b}};
  d["relaxation"] = {{"eps", relaxation.eps},
                     {"sigma", relaxation.sigma},
                     {"eta", relaxation.sigma / (relaxation.eps * relaxation.eps)},
                     {"eta_u", relaxation.eta_u},
                     {"eta_w", relaxation.eta_w}};
  d["time"] = {{"dt", time.dt}, {"N_t", time.N_t}};
  d["mpc"] = {{"N", mpc.N},
              {"M", mpc.M},
              {"tau1_rel", mpc.tau1_rel},
              {"u_init", mpc.u_init},
              {"refinements", mpc.refinements},
              {"reduced", mpc.reduced}};
  if (std::isfinite(mpc.tau2))
    d["mpc"]["tau2"] = mpc.tau2;
  else
    d["mpc"]["tau2"] = "inf";
  d["snapshots"] = {{"rho", snapshots.rho}, {"varrho", snapshots.varrho}};
  d["forecast"] = {{"y_out_spec", forecast.y_out.text()}};
  d["initial"] = {{"y0", initial.y0}, {"u", initial.u}};
  d["simulate"] = {{"checkpoint_times", simulate.checkpoint_times}};
  d["turnpike"] = {{"horizons", turnpike.horizons}, {"inits", turnpike.inits}};
  d["pdass"] = {{"max_iterations", pdass.max_iterations}};
  d["seeds"] = seeds;
  d["output_dir"] = output_dir.string();
  return d;
}

void ExperimentConfig::validate() const {
  if (mesh.nx < 1 || mesh.ny < 1) throw ConfigError("mesh.nx, mesh.ny: must be >= 1");
  if (!(mesh.domain.width() > 0.0 && mesh.domain.height() > 0.0)) throw ConfigError("mesh.domain: empty rectangle");
  try {
    physics.validate(true);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("physics: ") + e.what());
  }
  if (!(time.dt > 0.0)) throw ConfigError("time.dt: must be > 0");
  if (time.N_t < 0) throw ConfigError("time.N_t: must be >= 0");
  if (!(relaxation.eps > 0.0)) throw ConfigError("relaxation.eps: must be > 0");
  if (!(relaxation.sigma > 0.0)) throw ConfigError("relaxation.sigma: must be > 0");
  if (!(relaxation.eta_u > 0.0 && relaxation.eta_w > 0.0)) throw ConfigError("relaxation.eta_u, eta_w: must be > 0");
  if (!(bounds.w_a < 0.0 && 0.0 < bounds.w_b)) throw ConfigError("bounds.w_a, w_b: require w_a < 0 < w_b");
  if (mpc.N < 1) throw ConfigError("mpc.N: must be >= 1");
  if (mpc.M < 0) throw ConfigError("mpc.M: must be >= 0");
  if (!(mpc.tau1_rel > 0.0)) throw ConfigError("mpc.tau1_rel: must be > 0");
  if (!(mpc.tau2 >= 0.0)) throw ConfigError("mpc.tau2: must be >= 0");
  if (mpc.refinements < 0) throw ConfigError("mpc.refinements: must be >= 0");
  try {
    snapshots.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("snapshots: ") + e.what());
  }
  for (int h : turnpike.horizons)
    if (h < 1) throw ConfigError("turnpike.horizons: entries must be >= 1");
  for (double t : simulate.checkpoint_times)
    if (t < 0.0) throw ConfigError("simulate.checkpoint_times: entries must be >= 0");
  if (pdass.max_iterations < 1) throw ConfigError("pdass.max_iterations: must be >= 1");
}

StructuredQuadMesh ExperimentConfig::build_mesh() const {
  return heatmpc::build_mesh(mesh.nx, mesh.ny, mesh.domain, mesh.control_edge);
}

MPCConfig ExperimentConfig::mpc_config() const {
  MPCConfig m;
  m.N = mpc.N;
  m.M = mpc.M;
  m.dt = time.dt;
  m.N_t = time.N_t;
  m.tau1_rel = mpc.tau1_rel;
  m.tau2 = mpc.tau2;
  m.u_a = bounds.u_a;
  m.u_b = bounds.u_b;
  m.y_a = bounds.y_a;
  m.y_b = bounds.y_b;
  m.w_a = bounds.w_a;
  m.w_b = bounds.w_b;
  m.eps = relaxation.eps;
  m.sigma = relaxation.sigma;
  m.eta_u = relaxation.eta_u;
  m.eta_w = relaxation.eta_w;
  m.yout = forecast.y_out;
  m.snapshots = snapshots;
  m.u_init = mpc.u_init;
  m.model = mpc.reduced ? PredictionModel::Reduced : PredictionModel::Full;
  m.refinements = mpc.refinements;
  m.pdass_max_iterations = pdass.max_iterations;
  return m;
}

TurnpikeConfig ExperimentConfig::turnpike_config(std::shared_ptr<const HeatModel> heat) const {
  TurnpikeConfig t;
  t.heat = std::move(heat);
  t.u_a = bounds.u_a;
  t.u_b = bounds.u_b;
  t.y_a = bounds.y_a;
  t.y_b = bounds.y_b;
  t.yout = forecast.y_out;
  t.w_a = bounds.w_a;
  t.w_b = bounds.w_b;
  t.eps = relaxation.eps;
  t.sigma = relaxation.sigma;
  t.eta_u = relaxation.eta_u;
  t.eta_w = relaxation.eta_w;
  t.pdass.max_iterations = pdass.max_iterations;
  return t;
}

VirtualControlProblem ExperimentConfig::problem(int steps, int space_dofs) const {
  return mpc_config().problem(0, steps, space_dofs);
}

Eigen::VectorXd ExperimentConfig::outside_temperature(int steps) const {
  Eigen::VectorXd y(steps + 1);
  for (int k = 0; k <= steps; ++k) y[k] = forecast.y_out(k * time.dt);
  return y;
}

FlowState ExperimentConfig::initial_state(int nodes) const { return FlowState::at_rest(nodes, initial.y0); }

std::vector<FlowState> ExperimentConfig::fixed_control_run(const StructuredQuadMesh& mesh, const FEOperators& ops,
                                                           int steps) const {
  const BoussinesqSolver solver(mesh, ops, physics, time.dt);
  const auto bd = BoundaryData::constant_control(initial.u, outside_temperature(steps));
  return solver.solve(initial_state(mesh.num_nodes()), bd, TimeGrid{0.0, time.dt, steps});
}

}  // namespace heatmpc
