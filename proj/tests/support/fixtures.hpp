#pragma once

// Test fixtures: structured meshes written as this project's mesh format.
// Mesh generation is not part of the library; these builders only exist to
// produce the reference geometries used by the tests and the data/ files.

#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "weakfind/fem.hpp"
#include "weakfind/mesh.hpp"
#include "weakfind/sensing.hpp"

namespace weakfind::fixtures {

struct RawMesh {
  ElementKind kind = ElementKind::tri3;
  std::vector<Vec3> nodes;
  std::vector<std::array<std::size_t, 4>> elements;
  std::vector<std::array<bool, 3>> fixed;

  Mesh build(double thickness = 0.1) const { return Mesh::build(kind, nodes, elements, fixed, thickness); }
};

inline void clamp_where(RawMesh& m, auto&& pred) {
  m.fixed.assign(m.nodes.size(), {false, false, false});
  for (std::size_t i = 0; i < m.nodes.size(); ++i)
    if (pred(m.nodes[i])) m.fixed[i] = {true, true, true};
}

inline void clamp_left(RawMesh& m, double x0 = 0.0) {
  clamp_where(m, [x0](const Vec3& p) { return std::abs(p.x() - x0) < 1e-9; });
}

/// Single unit tetrahedron (0,0,0),(1,0,0),(0,1,0),(0,0,1), base face clamped.
inline RawMesh unit_tet() {
  RawMesh m;
  m.kind = ElementKind::tet4;
  m.nodes = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  m.elements = {{0, 1, 2, 3}};
  m.fixed = {{true, true, true}, {true, true, true}, {true, true, true}, {false, false, false}};
  return m;
}

/// Unit right triangle (0,0),(1,0),(0,1), first two nodes clamped.
inline RawMesh unit_triangle() {
  RawMesh m;
  m.kind = ElementKind::tri3;
  m.nodes = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  m.elements = {{0, 1, 2, 0}};
  m.fixed = {{true, true, true}, {true, true, true}, {false, false, false}};
  return m;
}

/// nx x ny rectangle split into triangles. crossed = true inserts a centre
/// node per cell (4 triangles per cell, mirror symmetric in x and y).
inline RawMesh rectangle_tri(std::size_t nx, std::size_t ny, double lx, double ly, bool crossed = false) {
  RawMesh m;
  m.kind = ElementKind::tri3;
  auto id = [&](std::size_t i, std::size_t j) { return j * (nx + 1) + i; };
  for (std::size_t j = 0; j <= ny; ++j)
    for (std::size_t i = 0; i <= nx; ++i)
      m.nodes.emplace_back(lx * static_cast<double>(i) / static_cast<double>(nx),
                           ly * static_cast<double>(j) / static_cast<double>(ny), 0.0);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      const auto a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      if (crossed) {
        const std::size_t ctr = m.nodes.size();
        m.nodes.emplace_back(lx * (static_cast<double>(i) + 0.5) / static_cast<double>(nx),
                             ly * (static_cast<double>(j) + 0.5) / static_cast<double>(ny), 0.0);
        m.elements.push_back({a, b, ctr, 0});
        m.elements.push_back({b, c, ctr, 0});
        m.elements.push_back({c, d, ctr, 0});
        m.elements.push_back({d, a, ctr, 0});
      } else {
        m.elements.push_back({a, b, c, 0});
        m.elements.push_back({a, c, d, 0});
      }
    }
  clamp_left(m);
  return m;
}

/// Box split into Kuhn tetrahedra (6 per cell, conforming).
inline RawMesh box_tet(std::size_t nx, std::size_t ny, std::size_t nz, double lx, double ly, double lz) {
  RawMesh m;
  m.kind = ElementKind::tet4;
  auto id = [&](std::size_t i, std::size_t j, std::size_t k) { return (k * (ny + 1) + j) * (nx + 1) + i; };
  for (std::size_t k = 0; k <= nz; ++k)
    for (std::size_t j = 0; j <= ny; ++j)
      for (std::size_t i = 0; i <= nx; ++i)
        m.nodes.emplace_back(lx * static_cast<double>(i) / static_cast<double>(nx),
                             ly * static_cast<double>(j) / static_cast<double>(ny),
                             lz * static_cast<double>(k) / static_cast<double>(nz));
  // the six monotone paths from corner (0,0,0) to (1,1,1)
  const std::array<std::array<int, 3>, 6> perms = {{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  for (std::size_t k = 0; k < nz; ++k)
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i)
        for (const auto& p : perms) {
          std::array<std::size_t, 3> c{i, j, k};
          std::array<std::size_t, 4> tet{};
          tet[0] = id(c[0], c[1], c[2]);
          for (int s = 0; s < 3; ++s) {
            ++c[static_cast<std::size_t>(p[static_cast<std::size_t>(s)])];
            tet[static_cast<std::size_t>(s + 1)] = id(c[0], c[1], c[2]);
          }
          m.elements.push_back(tet);
        }
  clamp_left(m);
  return m;
}

namespace detail {

/// O-grid around a circular hole in the rectangle [0,lx]x[0,ly]. Returns the
/// ring points ring[j][k], j = 0 (hole) .. nr (outer boundary).
inline std::vector<std::vector<Eigen::Vector2d>> ogrid(double lx, double ly, double cx, double cy, double radius,
                                                       std::size_t n_bottom, std::size_t n_side, std::size_t nr) {
  std::vector<Eigen::Vector2d> outer;
  for (std::size_t k = 0; k < n_bottom; ++k) outer.emplace_back(lx * double(k) / double(n_bottom), 0.0);
  for (std::size_t k = 0; k < n_side; ++k) outer.emplace_back(lx, ly * double(k) / double(n_side));
  for (std::size_t k = 0; k < n_bottom; ++k) outer.emplace_back(lx - lx * double(k) / double(n_bottom), ly);
  for (std::size_t k = 0; k < n_side; ++k) outer.emplace_back(0.0, ly - ly * double(k) / double(n_side));
  const Eigen::Vector2d c(cx, cy);
  std::vector<std::vector<Eigen::Vector2d>> rings(nr + 1);
  for (std::size_t j = 0; j <= nr; ++j) {
    const double t = double(j) / double(nr);
    for (const auto& r : outer) {
      const Eigen::Vector2d dir = (r - c).normalized();
      const Eigen::Vector2d inner = c + radius * dir;
      rings[j].push_back(j == nr ? r : Eigen::Vector2d((1.0 - t) * inner + t * r));
    }
  }
  return rings;
}

/// Triangles of the O-grid as (j, k) index triples, alternating diagonals.
inline std::vector<std::array<std::pair<std::size_t, std::size_t>, 3>> ogrid_triangles(std::size_t nt, std::size_t nr) {
  std::vector<std::array<std::pair<std::size_t, std::size_t>, 3>> tris;
  for (std::size_t j = 0; j < nr; ++j)
    for (std::size_t k = 0; k < nt; ++k) {
      const std::size_t k1 = (k + 1) % nt;
      std::pair<std::size_t, std::size_t> a{j, k}, b{j, k1}, c{j + 1, k1}, d{j + 1, k};
      if ((j + k) % 2 == 0) {
        tris.push_back({a, b, c});
        tris.push_back({a, c, d});
      } else {
        tris.push_back({a, b, d});
        tris.push_back({b, c, d});
      }
    }
  return tris;
}

}  // namespace detail

/// Plate 60 x 30 with a hole of diameter 10 at (30, 15): 48 x 7 O-grid cells,
/// 672 triangles, left edge clamped.
inline RawMesh plate_with_hole() {
  const std::size_t nb = 16, ns = 8, nr = 7, nt = 2 * (nb + ns);
  const auto rings = detail::ogrid(60.0, 30.0, 30.0, 15.0, 5.0, nb, ns, nr);
  RawMesh m;
  m.kind = ElementKind::tri3;
  for (std::size_t j = 0; j <= nr; ++j)
    for (std::size_t k = 0; k < nt; ++k) m.nodes.emplace_back(rings[j][k].x(), rings[j][k].y(), 0.0);
  for (const auto& t : detail::ogrid_triangles(nt, nr)) {
    std::array<std::size_t, 4> e{};
    for (int v = 0; v < 3; ++v) e[static_cast<std::size_t>(v)] = t[static_cast<std::size_t>(v)].first * nt + t[static_cast<std::size_t>(v)].second;
    m.elements.push_back(e);
  }
  clamp_left(m);
  return m;
}

/// Thick plate 60 x 30 x 10 with a conical hole (diameter 5 at z = 0, 15 at
/// z = 10) at (30, 15). The O-grid is extruded in `layers` slabs and every
/// prism is split into three tets with the lowest-global-id diagonal rule.
inline RawMesh thick_plate(std::size_t nb = 12, std::size_t ns = 6, std::size_t nr = 5, std::size_t layers = 2) {
  const std::size_t nt = 2 * (nb + ns);
  const std::size_t per_layer = nt * (nr + 1);
  RawMesh m;
  m.kind = ElementKind::tet4;
  for (std::size_t l = 0; l <= layers; ++l) {
    const double z = 10.0 * double(l) / double(layers);
    const double radius = 2.5 + 0.5 * z;
    const auto rings = detail::ogrid(60.0, 30.0, 30.0, 15.0, radius, nb, ns, nr);
    for (std::size_t j = 0; j <= nr; ++j)
      for (std::size_t k = 0; k < nt; ++k) m.nodes.emplace_back(rings[j][k].x(), rings[j][k].y(), z);
  }
  // prism vertex permutations so that the smallest id becomes vertex 0
  static constexpr std::array<std::array<int, 6>, 6> rot = {{{0, 1, 2, 3, 4, 5},
                                                            {1, 2, 0, 4, 5, 3},
                                                            {2, 0, 1, 5, 3, 4},
                                                            {3, 5, 4, 0, 2, 1},
                                                            {4, 3, 5, 1, 0, 2},
                                                            {5, 4, 3, 2, 1, 0}}};
  const auto tris = detail::ogrid_triangles(nt, nr);
  for (std::size_t l = 0; l < layers; ++l)
    for (const auto& t : tris) {
      std::array<std::size_t, 6> v{};
      for (std::size_t q = 0; q < 3; ++q) {
        const std::size_t base = t[q].first * nt + t[q].second;
        v[q] = l * per_layer + base;
        v[q + 3] = (l + 1) * per_layer + base;
      }
      const auto imin = static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
      std::array<std::size_t, 6> p{};
      for (std::size_t q = 0; q < 6; ++q) p[q] = v[static_cast<std::size_t>(rot[imin][q])];
      if (std::min(p[1], p[5]) < std::min(p[2], p[4])) {
        m.elements.push_back({p[0], p[1], p[2], p[5]});
        m.elements.push_back({p[0], p[1], p[5], p[4]});
        m.elements.push_back({p[0], p[4], p[5], p[3]});
      } else {
        m.elements.push_back({p[0], p[1], p[2], p[4]});
        m.elements.push_back({p[0], p[4], p[2], p[5]});
        m.elements.push_back({p[0], p[4], p[5], p[3]});
      }
    }
  clamp_left(m);
  return m;
}

/// Total force spread over the boundary facets lying on the plane x = x0,
/// lumped by facet length (tri3) or area (tet4).
inline LoadCase face_load(const Mesh& mesh, double x0, const Vec3& total, int id = 1) {
  const auto npe = mesh.nodes_per_element();
  const std::size_t nf = npe - 1;
  std::map<std::array<std::size_t, 3>, int> facet_count;
  for (const auto& el : mesh.elements())
    for (std::size_t skip = 0; skip < npe; ++skip) {
      std::array<std::size_t, 3> key{0, 0, 0};
      std::size_t q = 0;
      for (std::size_t j = 0; j < npe; ++j)
        if (j != skip) key[q++] = el.nodes[j];
      std::sort(key.begin(), key.begin() + static_cast<std::ptrdiff_t>(nf));
      ++facet_count[key];
    }
  std::map<std::size_t, double> share;
  double measure_total = 0.0;
  for (const auto& [key, count] : facet_count) {
    if (count != 1) continue;
    bool on = true;
    for (std::size_t q = 0; q < nf; ++q) on = on && std::abs(mesh.node(key[q]).x() - x0) < 1e-9;
    if (!on) continue;
    double measure;
    if (nf == 2)
      measure = (mesh.node(key[0]) - mesh.node(key[1])).norm();
    else
      measure = 0.5 * (mesh.node(key[1]) - mesh.node(key[0])).cross(mesh.node(key[2]) - mesh.node(key[0])).norm();
    measure_total += measure;
    for (std::size_t q = 0; q < nf; ++q) share[key[q]] += measure / static_cast<double>(nf);
  }
  LoadCase lc;
  lc.id = id;
  for (const auto& [node, s] : share)
    for (int a = 0; a < mesh.dim(); ++a)
      if (total[a] != 0.0) lc.forces[{node, a}] = total[a] * s / measure_total;
  return lc;
}

inline MaterialParams steel_cgs() { return {2e12, 0.3, 7.8}; }

/// alpha = value inside the disc (cylinder for tet4) of given radius around c.
inline StrengthField weakened_patch(const Mesh& mesh, const Vec3& c, double radius, double value, double eps = 0.01) {
  auto a = StrengthField::uniform(mesh.element_count(), 1.0, eps);
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    Vec3 d = mesh.centroid(e) - c;
    d.z() = 0.0;
    if (d.norm() <= radius) a.alpha[static_cast<Eigen::Index>(e)] = value;
  }
  return a;
}

/// Displacement sensors (ux, uy[, uz]) at every node that is not clamped.
inline SensorSet dense_displacement_sensors(const Mesh& mesh) {
  SensorSet s;
  int id = 1;
  for (std::size_t n = 0; n < mesh.node_count(); ++n) {
    if (mesh.is_fixed(n, 0)) continue;
    Sensor sn;
    sn.id = id++;
    sn.kind = SensorKind::displacement;
    sn.position = mesh.node(n);
    sn.components = {Component::ux, Component::uy};
    if (mesh.dim() == 3) sn.components.push_back(Component::uz);
    s.sensors.push_back(sn);
  }
  return s;
}

/// Strain gauges (all in-plane or all 3D components) at every element centroid.
inline SensorSet centroid_strain_sensors(const Mesh& mesh, int first_id = 1) {
  SensorSet s;
  int id = first_id;
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    Sensor sn;
    sn.id = id++;
    sn.kind = SensorKind::strain;
    sn.position = mesh.centroid(e);
    if (mesh.dim() == 2)
      sn.components = {Component::exx, Component::eyy, Component::gxy};
    else
      sn.components = {Component::exx, Component::eyy, Component::ezz, Component::gxy, Component::gyz, Component::gzx};
    s.sensors.push_back(sn);
  }
  return s;
}

/// Sensors of one kind on the grid xs x ys at height z, ids row by row from 1.
inline SensorSet grid_sensors(const std::vector<double>& xs, const std::vector<double>& ys, double z, SensorKind kind,
                              std::vector<Component> components) {
  SensorSet s;
  int id = 1;
  for (double x : xs)
    for (double y : ys) {
      Sensor sn;
      sn.id = id++;
      sn.kind = kind;
      sn.position = Vec3(x, y, z);
      sn.components = components;
      s.sensors.push_back(sn);
    }
  return s;
}

}  // namespace weakfind::fixtures
