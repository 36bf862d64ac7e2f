#include "heatmpc/fem.hpp"

#include <algorithm>
#include <cmath>

#include "heatmpc/error.hpp"

namespace heatmpc {

void PhysicalParams::validate(bool allow_zero) const {
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  auto nonneg = [&](double v) { return allow_zero ? (v >= 0.0 && std::isfinite(v)) : positive(v); };
  if (!positive(rho)) throw ConfigError("physics.rho must be > 0");
  if (!positive(nu)) throw ConfigError("physics.nu must be > 0");
  if (!nonneg(alpha_exp)) throw ConfigError("physics.alpha must be > 0");
  if (!positive(kappa)) throw ConfigError("physics.kappa must be > 0");
  if (!positive(cp)) throw ConfigError("physics.cp must be > 0");
  if (!nonneg(gamma)) throw ConfigError("physics.gamma must be > 0");
  if (!nonneg(gamma_c)) throw ConfigError("physics.gamma_c must be > 0");
}

namespace {

constexpr std::array<double, 4> kXi{-1.0, 1.0, 1.0, -1.0};
constexpr std::array<double, 4> kEta{-1.0, -1.0, 1.0, 1.0};

struct GaussPoint {
  double xi, eta, weight;
};

std::array<GaussPoint, 4> gauss_2x2() {
  const double g = 1.0 / std::sqrt(3.0);
  return {{{-g, -g, 1.0}, {g, -g, 1.0}, {g, g, 1.0}, {-g, g, 1.0}}};
}

double shape(int a, double xi, double eta) { return 0.25 * (1.0 + kXi[a] * xi) * (1.0 + kEta[a] * eta); }
double dshape_dxi(int a, double eta) { return 0.25 * kXi[a] * (1.0 + kEta[a] * eta); }
double dshape_deta(int a, double xi) { return 0.25 * kEta[a] * (1.0 + kXi[a] * xi); }

using ElementMatrix = std::array<std::array<double, 4>, 4>;

struct ElementMatrices {
  ElementMatrix mass{}, stiffness{}, dx{}, dy{};
};

ElementMatrices reference_matrices(double hx, double hy) {
  ElementMatrices em;
  const double detj = 0.25 * hx * hy;
  for (const auto& gp : gauss_2x2()) {
    const double w = gp.weight * detj;
    for (int a = 0; a < 4; ++a) {
      const double pa = shape(a, gp.xi, gp.eta);
      const double ax = dshape_dxi(a, gp.eta) * 2.0 / hx;
      const double ay = dshape_deta(a, gp.xi) * 2.0 / hy;
      for (int b = 0; b < 4; ++b) {
        const double pb = shape(b, gp.xi, gp.eta);
        const double bx = dshape_dxi(b, gp.eta) * 2.0 / hx;
        const double by = dshape_deta(b, gp.xi) * 2.0 / hy;
        em.mass[a][b] += w * pa * pb;
        em.stiffness[a][b] += w * (ax * bx + ay * by);
        em.dx[a][b] += w * pa * bx;  // int phi_a d_x phi_b
        em.dy[a][b] += w * pa * by;
      }
    }
  }
  return em;
}

SpMat scatter(const StructuredQuadMesh& mesh, const ElementMatrix& local) {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(16 * mesh.elements.size());
  for (const auto& el : mesh.elements)
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) triplets.emplace_back(el[a], el[b], local[a][b]);
  SpMat m(mesh.num_nodes(), mesh.num_nodes());
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  return m;
}

}  // namespace

FEOperators assemble_operators(const StructuredQuadMesh& mesh) {
  if (mesh.num_nodes() != (mesh.nx + 1) * (mesh.ny + 1) || mesh.num_elements() != mesh.nx * mesh.ny)
    throw ConfigError("assemble_operators: inconsistent mesh");

  const ElementMatrices em = reference_matrices(mesh.hx(), mesh.hy());
  FEOperators ops;
  ops.M = scatter(mesh, em.mass);
  ops.K = scatter(mesh, em.stiffness);
  ops.Dx = scatter(mesh, em.dx);
  ops.Dy = scatter(mesh, em.dy);

  const int n = mesh.num_nodes();
  std::vector<Eigen::Triplet<double>> out_t, ctl_t;
  ops.b_out = Eigen::VectorXd::Zero(n);
  ops.b_c = Eigen::VectorXd::Zero(n);
  const double g = 1.0 / std::sqrt(3.0);
  for (const auto& [edge, tag] : mesh.boundary_edges()) {
    const Eigen::Vector2d p0 = mesh.nodes.row(edge[0]).transpose();
    const Eigen::Vector2d p1 = mesh.nodes.row(edge[1]).transpose();
    const double half_len = 0.5 * (p1 - p0).norm();
    auto& trip = tag == BoundaryTag::Control ? ctl_t : out_t;
    Eigen::VectorXd& load = tag == BoundaryTag::Control ? ops.b_c : ops.b_out;
    for (double s : {-g, g}) {
      const std::array<double, 2> phi{0.5 * (1.0 - s), 0.5 * (1.0 + s)};
      for (int a = 0; a < 2; ++a) {
        load[edge[a]] += half_len * phi[a];
        for (int b = 0; b < 2; ++b) trip.emplace_back(edge[a], edge[b], half_len * phi[a] * phi[b]);
      }
    }
  }
  ops.B_out.resize(n, n);
  ops.B_out.setFromTriplets(out_t.begin(), out_t.end());
  ops.B_out.makeCompressed();
  ops.B_c.resize(n, n);
  ops.B_c.setFromTriplets(ctl_t.begin(), ctl_t.end());
  ops.B_c.makeCompressed();

  ops.W_V = ops.M + ops.K;
  ops.W_V.makeCompressed();
  ops.M_lumped = ops.M * Eigen::VectorXd::Ones(n);
  ops.convection = std::make_shared<const ConvectionAssembler>(mesh);
  return ops;
}

ConvectionAssembler::ConvectionAssembler(const StructuredQuadMesh& mesh)
    : n_nodes_(mesh.num_nodes()), elements_(mesh.elements) {
  ElementMatrix ones{};
  for (auto& row : ones) row.fill(1.0);
  pattern_ = scatter(mesh, ones);

  scatter_.resize(elements_.size());
  for (std::size_t e = 0; e < elements_.size(); ++e) {
    const auto& el = elements_[e];
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) {
        const int col = el[b];
        const int start = pattern_.outerIndexPtr()[col];
        const int stop = pattern_.outerIndexPtr()[col + 1];
        int slot = -1;
        for (int k = start; k < stop; ++k) {
          if (pattern_.innerIndexPtr()[k] == el[a]) {
            slot = k;
            break;
          }
        }
        scatter_[e][static_cast<std::size_t>(4 * a + b)] = slot;
      }
    }
  }

  const double hx = mesh.hx(), hy = mesh.hy();
  const double detj = 0.25 * hx * hy;
  for (const auto& gp : gauss_2x2()) {
    const double w = gp.weight * detj;
    for (int c = 0; c < 4; ++c) {
      const double pc = shape(c, gp.xi, gp.eta);
      for (int a = 0; a < 4; ++a) {
        const double pa = shape(a, gp.xi, gp.eta);
        for (int b = 0; b < 4; ++b) {
          tensor_[c][0][a][b] += w * pc * pa * dshape_dxi(b, gp.eta) * 2.0 / hx;
          tensor_[c][1][a][b] += w * pc * pa * dshape_deta(b, gp.xi) * 2.0 / hy;
        }
      }
    }
  }
}

SpMat ConvectionAssembler::assemble(const VelocityField& v) const {
  if (v.rows() != n_nodes_) throw DimensionError("assemble_convection: velocity field size does not match mesh");
  SpMat c = pattern_;
  double* values = c.valuePtr();
  std::fill(values, values + c.nonZeros(), 0.0);
  for (std::size_t e = 0; e < elements_.size(); ++e) {
    const auto& el = elements_[e];
    ElementMatrix local{};
    for (int cn = 0; cn < 4; ++cn) {
      for (int d = 0; d < 2; ++d) {
        const double vc = v(el[cn], d);
        if (vc == 0.0) continue;
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) local[a][b] += vc * tensor_[cn][d][a][b];
      }
    }
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) values[scatter_[e][static_cast<std::size_t>(4 * a + b)]] += local[a][b];
  }
  return c;
}

SpMat FEOperators::convection_matrix(const VelocityField& v) const {
  if (!convection) throw Error("FEOperators: convection assembler missing");
  return convection->assemble(v);
}

SpMat assemble_convection(const StructuredQuadMesh& mesh, const VelocityField& v) {
  return ConvectionAssembler(mesh).assemble(v);
}

}  // namespace heatmpc
