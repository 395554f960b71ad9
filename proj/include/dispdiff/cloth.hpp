#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dispdiff/geom.hpp"
#include "dispdiff/rng.hpp"

// Procedural cloth: a node_density x node_density grid with rectangular
// holes cut by removing strictly-interior vertices. Hole corners are given
// in vertex-grid coordinates (i along the width, j along the height).

namespace dispdiff {

struct HoleSpec {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // bottom-left and top-right corners
};

struct ClothSpec {
  int node_density = 25;
  double width = 1.0;
  double height = 1.0;
  int num_holes = 1;
  std::vector<HoleSpec> holes;
};

// The fixed single-hole benchmark cloth.
inline ClothSpec fixed_cloth() {
  ClothSpec c;
  c.node_density = 25;
  c.width = 1.0;
  c.height = 1.0;
  c.num_holes = 1;
  c.holes = {HoleSpec{8, 9, 16, 13}};
  return c;
}

// Boundary check: the hole rectangle keeps a two-vertex margin to the cloth
// edge on every side and has a non-empty interior.
inline bool hole_within_bounds(const HoleSpec& h, int node_density) {
  return h.x0 >= 2 && h.y0 >= 2 && h.x1 <= node_density - 2 && h.y1 <= node_density - 2 &&
         h.x1 - h.x0 >= 2 && h.y1 - h.y0 >= 2;
}

// Overlap check: closed-rectangle intersection, so holes sharing an edge or
// corner also count as overlapping.
inline bool holes_overlap(const HoleSpec& a, const HoleSpec& b) {
  return a.x0 <= b.x1 && b.x0 <= a.x1 && a.y0 <= b.y1 && b.y0 <= a.y1;
}

inline bool cloth_spec_valid(const ClothSpec& c, std::string* reason = nullptr) {
  auto fail = [&](const std::string& r) {
    if (reason) *reason = r;
    return false;
  };
  if (c.node_density < 5) return fail("node_density too small");
  if (static_cast<int>(c.holes.size()) != c.num_holes) return fail("num_holes mismatch");
  for (std::size_t i = 0; i < c.holes.size(); ++i) {
    if (!hole_within_bounds(c.holes[i], c.node_density))
      return fail("hole " + std::to_string(i) + " outside boundary");
    for (std::size_t j = i + 1; j < c.holes.size(); ++j)
      if (holes_overlap(c.holes[i], c.holes[j]))
        return fail("holes " + std::to_string(i) + " and " + std::to_string(j) + " overlap");
  }
  return true;
}

struct ClothGenParams {
  int node_density = 25;
  double width_min = 0.8, width_max = 1.2;
  double height_min = 0.8, height_max = 1.2;
  int hole_extent_min = 5, hole_extent_max = 7;
  int max_attempts = 10000;
};

// Monte-Carlo hole placement: corners and extents are drawn uniformly and
// re-drawn until the boundary and overlap checks pass.
inline ClothSpec generate_cloth(Rng& rng, int num_holes, const ClothGenParams& p = {}) {
  if (num_holes < 1 || num_holes > 2)
    throw std::invalid_argument("generate_cloth: num_holes must be 1 or 2");
  ClothSpec c;
  c.node_density = p.node_density;
  c.width = rng.uniform(p.width_min, p.width_max);
  c.height = rng.uniform(p.height_min, p.height_max);
  c.num_holes = num_holes;

  int attempts = 0;
  while (static_cast<int>(c.holes.size()) < num_holes) {
    if (++attempts > p.max_attempts)
      throw std::runtime_error("generate_cloth: no valid hole placement after " +
                               std::to_string(p.max_attempts) + " attempts");
    HoleSpec h;
    h.x0 = rng.uniform_int(2, p.node_density - 3);
    h.y0 = rng.uniform_int(2, p.node_density - 3);
    h.x1 = h.x0 + rng.uniform_int(p.hole_extent_min, p.hole_extent_max);
    h.y1 = h.y0 + rng.uniform_int(p.hole_extent_min, p.hole_extent_max);
    if (!hole_within_bounds(h, p.node_density)) continue;
    bool clash = false;
    for (const HoleSpec& prev : c.holes)
      if (holes_overlap(prev, h)) clash = true;
    if (clash) continue;
    c.holes.push_back(h);
  }
  return c;
}

// ---------------------------------------------------------------------------
// mesh

enum class SpringClass { Structural, Shear, Bend };

struct Spring {
  int a = 0, b = 0;
  double rest_length = 0.0;
  SpringClass cls = SpringClass::Structural;
};

// Cloth mesh in its local plane: vertex (i, j) sits at
// x = (i/(nd-1) - 1/2) * width, y = (j/(nd-1) - 1/2) * height, z = 0.
// The scene transform later maps j = 0 to the top edge.
struct ClothMesh {
  ClothSpec spec;
  std::vector<Vec3> local_positions;          // per surviving vertex
  std::vector<std::pair<int, int>> grid_of;   // vertex -> (i, j)
  std::vector<int> vertex_at;                 // i * nd + j -> vertex id or -1
  std::vector<Spring> springs;
  std::vector<std::vector<int>> loop_vertex_ids;  // per hole, ordered around the perimeter

  int vertex_count() const { return static_cast<int>(local_positions.size()); }
  int vertex(int i, int j) const {
    return vertex_at[static_cast<std::size_t>(i) * spec.node_density + j];
  }
};

inline bool inside_hole_strict(const ClothSpec& spec, int i, int j) {
  for (const HoleSpec& h : spec.holes)
    if (i > h.x0 && i < h.x1 && j > h.y0 && j < h.y1) return true;
  return false;
}

inline ClothMesh build_mesh(const ClothSpec& spec) {
  std::string reason;
  if (!cloth_spec_valid(spec, &reason)) throw std::invalid_argument("build_mesh: " + reason);
  const int nd = spec.node_density;
  ClothMesh m;
  m.spec = spec;
  m.vertex_at.assign(static_cast<std::size_t>(nd) * nd, -1);

  for (int i = 0; i < nd; ++i)
    for (int j = 0; j < nd; ++j) {
      if (inside_hole_strict(spec, i, j)) continue;
      double x = (static_cast<double>(i) / (nd - 1) - 0.5) * spec.width;
      double y = (static_cast<double>(j) / (nd - 1) - 0.5) * spec.height;
      m.vertex_at[static_cast<std::size_t>(i) * nd + j] = m.vertex_count();
      m.local_positions.emplace_back(x, y, 0.0);
      m.grid_of.emplace_back(i, j);
    }

  auto add_spring = [&](int i0, int j0, int i1, int j1, SpringClass cls) {
    if (i1 < 0 || i1 >= nd || j1 < 0 || j1 >= nd) return;
    int a = m.vertex(i0, j0), b = m.vertex(i1, j1);
    if (a < 0 || b < 0) return;
    double rest = (m.local_positions[std::size_t(a)] - m.local_positions[std::size_t(b)]).norm();
    m.springs.push_back(Spring{a, b, rest, cls});
  };
  for (int i = 0; i < nd; ++i)
    for (int j = 0; j < nd; ++j) {
      if (m.vertex(i, j) < 0) continue;
      add_spring(i, j, i + 1, j, SpringClass::Structural);
      add_spring(i, j, i, j + 1, SpringClass::Structural);
      add_spring(i, j, i + 1, j + 1, SpringClass::Shear);
      if (i + 1 < nd && j + 1 < nd && m.vertex(i + 1, j) >= 0 && m.vertex(i, j + 1) >= 0)
        add_spring(i + 1, j, i, j + 1, SpringClass::Shear);
      add_spring(i, j, i + 2, j, SpringClass::Bend);
      add_spring(i, j, i, j + 2, SpringClass::Bend);
    }

  // loop vertices: walk the surviving perimeter ring of each hole
  // counterclockwise starting at the bottom-left corner
  for (const HoleSpec& h : spec.holes) {
    std::vector<int> loop;
    for (int i = h.x0; i <= h.x1; ++i) loop.push_back(m.vertex(i, h.y0));
    for (int j = h.y0 + 1; j <= h.y1; ++j) loop.push_back(m.vertex(h.x1, j));
    for (int i = h.x1 - 1; i >= h.x0; --i) loop.push_back(m.vertex(i, h.y1));
    for (int j = h.y1 - 1; j >= h.y0 + 1; --j) loop.push_back(m.vertex(h.x0, j));
    m.loop_vertex_ids.push_back(std::move(loop));
  }
  return m;
}

// Gripper attachment: the two corners of the top edge (j = 0).
inline std::pair<int, int> gripper_vertices(const ClothMesh& m) {
  int nd = m.spec.node_density;
  return {m.vertex(0, 0), m.vertex(nd - 1, 0)};
}

}  // namespace dispdiff
