#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

namespace heatmpc {

struct Rectangle {
  double x0 = 0.0;
  double x1 = 1.0;
  double y0 = 0.0;
  double y1 = 1.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
};

enum class Edge : std::uint8_t { Bottom, Right, Top, Left };

enum class BoundaryTag : std::uint8_t { None, Control, Outside };

Edge edge_from_string(const std::string& name);
std::string to_string(Edge e);

/// Structured mesh of bilinear quadrilaterals on an axis-aligned rectangle.
///
/// Nodes are numbered row-major: node (i, j) with 0 <= i <= nx, 0 <= j <= ny has index
/// j * (nx + 1) + i. Elements are numbered the same way over cells; local node order is
/// counter-clockwise starting at the lower-left corner. Every boundary node carries exactly
/// one tag; nodes on the control edge (corners included) are tagged Control.
struct StructuredQuadMesh {
  int nx = 0;
  int ny = 0;
  Rectangle domain;
  Edge control_edge = Edge::Bottom;
  Eigen::MatrixX2d nodes;
  std::vector<std::array<int, 4>> elements;
  std::vector<BoundaryTag> tags;

  int num_nodes() const { return static_cast<int>(nodes.rows()); }
  int num_elements() const { return static_cast<int>(elements.size()); }
  double hx() const { return domain.width() / nx; }
  double hy() const { return domain.height() / ny; }
  int node_index(int i, int j) const { return j * (nx + 1) + i; }
  bool on_boundary(int node) const { return tags[static_cast<std::size_t>(node)] != BoundaryTag::None; }

  /// Boundary edges as node pairs, each tagged Control or Outside by the edge it lies on.
  std::vector<std::pair<std::array<int, 2>, BoundaryTag>> boundary_edges() const;
};

StructuredQuadMesh build_mesh(int nx, int ny, const Rectangle& domain = {}, Edge control_edge = Edge::Bottom);

/// JSON schema: {"nx", "ny", "domain": {"x0","x1","y0","y1"}, "control_edge",
/// "nodes": [[x, y], ...], "elements": [[n0, n1, n2, n3], ...],
/// "tags": {"control": [...], "outside": [...]}}.
nlohmann::json mesh_to_json(const StructuredQuadMesh& mesh);
StructuredQuadMesh mesh_from_json(const nlohmann::json& doc);

}  // namespace heatmpc
