#include "heatmpc/mesh.hpp"

#include <cmath>

#include "json.hpp"

#include "heatmpc/error.hpp"

namespace heatmpc {

Edge edge_from_string(const std::string& name) {
  if (name == "bottom") return Edge::Bottom;
  if (name == "right") return Edge::Right;
  if (name == "top") return Edge::Top;
  if (name == "left") return Edge::Left;
  throw ConfigError("unknown edge '" + name + "' (expected bottom|right|top|left)");
}

std::string to_string(Edge e) {
  switch (e) {
    case Edge::Bottom: return "bottom";
    case Edge::Right: return "right";
    case Edge::Top: return "top";
    case Edge::Left: return "left";
  }
  return "bottom";
}

namespace {

bool node_on_edge(int i, int j, int nx, int ny, Edge e) {
  switch (e) {
    case Edge::Bottom: return j == 0;
    case Edge::Right: return i == nx;
    case Edge::Top: return j == ny;
    case Edge::Left: return i == 0;
  }
  return false;
}

}  // namespace

StructuredQuadMesh build_mesh(int nx, int ny, const Rectangle& domain, Edge control_edge) {
  if (nx < 1 || ny < 1) throw ConfigError("mesh: nx and ny must be >= 1");
  if (!(domain.width() > 0.0) || !(domain.height() > 0.0) || !std::isfinite(domain.area()))
    throw ConfigError("mesh: degenerate rectangle (zero or negative area)");

  StructuredQuadMesh mesh;
  mesh.nx = nx;
  mesh.ny = ny;
  mesh.domain = domain;
  mesh.control_edge = control_edge;

  const int n_nodes = (nx + 1) * (ny + 1);
  mesh.nodes.resize(n_nodes, 2);
  mesh.tags.assign(static_cast<std::size_t>(n_nodes), BoundaryTag::None);
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      const int k = mesh.node_index(i, j);
      // Exact endpoints so boundary coordinates compare equal to the rectangle.
      mesh.nodes(k, 0) = (i == nx) ? domain.x1 : domain.x0 + i * domain.width() / nx;
      mesh.nodes(k, 1) = (j == ny) ? domain.y1 : domain.y0 + j * domain.height() / ny;
      const bool boundary = i == 0 || i == nx || j == 0 || j == ny;
      if (!boundary) continue;
      mesh.tags[static_cast<std::size_t>(k)] =
          node_on_edge(i, j, nx, ny, control_edge) ? BoundaryTag::Control : BoundaryTag::Outside;
    }
  }

  mesh.elements.reserve(static_cast<std::size_t>(nx * ny));
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      mesh.elements.push_back({mesh.node_index(i, j), mesh.node_index(i + 1, j), mesh.node_index(i + 1, j + 1),
                               mesh.node_index(i, j + 1)});
    }
  }
  return mesh;
}

std::vector<std::pair<std::array<int, 2>, BoundaryTag>> StructuredQuadMesh::boundary_edges() const {
  std::vector<std::pair<std::array<int, 2>, BoundaryTag>> edges;
  auto tag_for = [&](Edge e) { return e == control_edge ? BoundaryTag::Control : BoundaryTag::Outside; };
  for (int i = 0; i < nx; ++i) edges.push_back({{node_index(i, 0), node_index(i + 1, 0)}, tag_for(Edge::Bottom)});
  for (int j = 0; j < ny; ++j) edges.push_back({{node_index(nx, j), node_index(nx, j + 1)}, tag_for(Edge::Right)});
  for (int i = nx; i > 0; --i) edges.push_back({{node_index(i, ny), node_index(i - 1, ny)}, tag_for(Edge::Top)});
  for (int j = ny; j > 0; --j) edges.push_back({{node_index(0, j), node_index(0, j - 1)}, tag_for(Edge::Left)});
  return edges;
}

nlohmann::json mesh_to_json(const StructuredQuadMesh& mesh) {
  nlohmann::json doc;
  doc["nx"] = mesh.nx;
  doc["ny"] = mesh.ny;
  doc["domain"] = {{"x0", mesh.domain.x0}, {"x1", mesh.domain.x1}, {"y0", mesh.domain.y0}, {"y1", mesh.domain.y1}};
  doc["control_edge"] = to_string(mesh.control_edge);
  auto nodes = nlohmann::json::array();
  for (int k = 0; k < mesh.num_nodes(); ++k) nodes.push_back({mesh.nodes(k, 0), mesh.nodes(k, 1)});
  doc["nodes"] = std::move(nodes);
  doc["elements"] = mesh.elements;
  std::vector<int> control, outside;
  for (int k = 0; k < mesh.num_nodes(); ++k) {
    if (mesh.tags[static_cast<std::size_t>(k)] == BoundaryTag::Control) control.push_back(k);
    if (mesh.tags[static_cast<std::size_t>(k)] == BoundaryTag::Outside) outside.push_back(k);
  }
  doc["tags"] = {{"control", control}, {"outside", outside}};
  return doc;
}

StructuredQuadMesh mesh_from_json(const nlohmann::json& doc) {
  try {
    const auto& d = doc.at("domain");
    const Rectangle rect{d.at("x0").get<double>(), d.at("x1").get<double>(), d.at("y0").get<double>(),
                         d.at("y1").get<double>()};
    // The structured layout is fully determined by its parameters; the stored node list is
    // validated against the regenerated one rather than trusted.
    StructuredQuadMesh mesh = build_mesh(doc.at("nx").get<int>(), doc.at("ny").get<int>(), rect,
                                         edge_from_string(doc.at("control_edge").get<std::string>()));
    const auto& nodes = doc.at("nodes");
    if (static_cast<int>(nodes.size()) != mesh.num_nodes()) throw ConfigError("mesh json: node count mismatch");
    for (int k = 0; k < mesh.num_nodes(); ++k) {
      if (std::abs(nodes[static_cast<std::size_t>(k)][0].get<double>() - mesh.nodes(k, 0)) > 1e-12 ||
          std::abs(nodes[static_cast<std::size_t>(k)][1].get<double>() - mesh.nodes(k, 1)) > 1e-12)
        throw ConfigError("mesh json: node " + std::to_string(k) + " is not on the structured grid");
    }
    return mesh;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("mesh json: ") + e.what());
  }
}

}  // namespace heatmpc
