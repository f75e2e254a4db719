#pragma once

// Simplex meshes (tri3 plane stress, tet4), the text mesh format, point
// location and advancing-front element clustering.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "weakfind/common.hpp"

namespace weakfind {

using Vec3 = Eigen::Vector3d;

enum class ElementKind { tri3, tet4 };

inline std::string_view to_string(ElementKind k) { return k == ElementKind::tri3 ? "tri3" : "tet4"; }

struct Element {
  std::array<std::size_t, 4> nodes{};
  std::size_t node_count = 0;
  /// area * thickness for tri3, tet volume for tet4
  double volume = 0.0;

  std::span<const std::size_t> connectivity() const { return {nodes.data(), node_count}; }
};

struct ElementCluster {
  std::size_t id = 0;
  std::size_t seed = 0;
  std::vector<std::size_t> elements;
};

struct ClusterPolicy {
  enum class Kind { min_elements, min_radius };
  Kind kind = Kind::min_elements;
  std::size_t min_elements = 1;
  double radius = 0.0;

  static ClusterPolicy elements(std::size_t n) { return {Kind::min_elements, n, 0.0}; }
  static ClusterPolicy within_radius(double r) { return {Kind::min_radius, 0, r}; }
};

struct PointLocation {
  std::size_t element = 0;
  /// One weight per element node; unused trailing entry is zero for tri3.
  std::array<double, 4> barycentric{};
};

/// Compressed adjacency lists (CSR).
struct Adjacency {
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> items;

  std::span<const std::size_t> operator[](std::size_t i) const {
    return {items.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }
  std::size_t size() const { return offsets.size() - 1; }
};

/// Immutable simplex mesh. Built once through Mesh::build (or parse_mesh);
/// element orientation is normalized to positive signed volume.
class Mesh {
 public:
  /// Validates and assembles a mesh. Connectivity uses 0-based node ids;
  /// fixed[n][axis] marks a dof constrained to zero.
  static Mesh build(ElementKind kind, std::vector<Vec3> nodes,
                    std::vector<std::array<std::size_t, 4>> connectivity,
                    std::vector<std::array<bool, 3>> fixed, double thickness = 0.1) {
    Mesh m;
    m.kind_ = kind;
    m.nodes_ = std::move(nodes);
    m.thickness_ = thickness;
    const std::size_t nn = m.nodes_.size();
    const std::size_t npe = kind == ElementKind::tri3 ? 3 : 4;
    if (nn == 0) throw InputError("mesh has no nodes");
    if (connectivity.empty()) throw InputError("mesh has no elements");
    if (kind == ElementKind::tri3 && !(thickness > 0.0)) throw InputError("tri3 thickness must be positive");
    for (const auto& p : m.nodes_)
      if (!p.allFinite()) throw InputError("non-finite node coordinate");
    if (fixed.size() != nn) fixed.resize(nn, {false, false, false});
    m.fixed_ = std::move(fixed);
    if (kind == ElementKind::tri3)
      for (auto& f : m.fixed_) f[2] = true;  // out-of-plane dof never active

    Vec3 lo = m.nodes_[0], hi = m.nodes_[0];
    for (const auto& p : m.nodes_) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    m.bbox_lo_ = lo;
    m.bbox_hi_ = hi;
    const double diag = (hi - lo).norm();
    const double scale = kind == ElementKind::tri3 ? diag * diag : diag * diag * diag;

    m.elements_.reserve(connectivity.size());
    for (std::size_t e = 0; e < connectivity.size(); ++e) {
      Element el;
      el.node_count = npe;
      el.nodes = connectivity[e];
      for (std::size_t k = 0; k < npe; ++k)
        if (el.nodes[k] >= nn)
          throw InputError("element " + std::to_string(e + 1) + " references missing node " +
                           std::to_string(el.nodes[k] + 1));
      double measure = m.signed_measure(el);
      if (std::abs(measure) <= 1e-14 * scale)
        throw InputError("element " + std::to_string(e + 1) + " is degenerate and cannot be reoriented");
      if (measure < 0) {
        std::swap(el.nodes[npe - 2], el.nodes[npe - 1]);
        measure = -measure;
        ++m.reoriented_;
      }
      el.volume = kind == ElementKind::tri3 ? measure * thickness : measure;
      m.elements_.push_back(el);
    }
    if (m.reoriented_ > 0) warn(std::to_string(m.reoriented_) + " element(s) reoriented");

    // node -> elements
    std::vector<std::size_t> count(nn, 0);
    for (const auto& el : m.elements_)
      for (auto n : el.connectivity()) ++count[n];
    for (std::size_t n = 0; n < nn; ++n)
      if (count[n] == 0) throw InputError("node " + std::to_string(n + 1) + " is not referenced by any element");
    m.node_elements_.offsets.assign(nn + 1, 0);
    for (std::size_t n = 0; n < nn; ++n) m.node_elements_.offsets[n + 1] = m.node_elements_.offsets[n] + count[n];
    m.node_elements_.items.resize(m.node_elements_.offsets.back());
    std::vector<std::size_t> fill(m.node_elements_.offsets.begin(), m.node_elements_.offsets.end() - 1);
    for (std::size_t e = 0; e < m.elements_.size(); ++e)
      for (auto n : m.elements_[e].connectivity()) m.node_elements_.items[fill[n]++] = e;

    bool any_fixed = false;
    const int d = m.dim();
    for (const auto& f : m.fixed_)
      for (int a = 0; a < d; ++a) any_fixed = any_fixed || f[a];
    if (!any_fixed) throw InputError("mesh has no constrained dofs (rigid-body modes are unrestrained)");

    m.build_face_adjacency();
    return m;
  }

  ElementKind kind() const { return kind_; }
  /// Number of displacement components per node (2 for tri3, 3 for tet4).
  int dim() const { return kind_ == ElementKind::tri3 ? 2 : 3; }
  std::size_t nodes_per_element() const { return kind_ == ElementKind::tri3 ? 3 : 4; }
  std::size_t strain_components() const { return kind_ == ElementKind::tri3 ? 3 : 6; }

  const std::vector<Vec3>& nodes() const { return nodes_; }
  const std::vector<Element>& elements() const { return elements_; }
  const Vec3& node(std::size_t i) const { return nodes_[i]; }
  const Element& element(std::size_t e) const { return elements_[e]; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t element_count() const { return elements_.size(); }
  double thickness() const { return thickness_; }
  bool is_fixed(std::size_t node, int axis) const { return fixed_[node][axis]; }
  const std::vector<std::array<bool, 3>>& fixed() const { return fixed_; }
  std::size_t reoriented_count() const { return reoriented_; }

  const Adjacency& node_to_elements() const { return node_elements_; }
  /// Elements sharing an edge (tri3) or a face (tet4).
  const Adjacency& element_neighbors() const { return neighbors_; }

  Vec3 bbox_min() const { return bbox_lo_; }
  Vec3 bbox_max() const { return bbox_hi_; }
  double bbox_diagonal() const { return (bbox_hi_ - bbox_lo_).norm(); }
  double locate_tolerance() const { return 1e-8 * bbox_diagonal(); }

  double total_volume() const {
    double v = 0.0;
    for (const auto& el : elements_) v += el.volume;
    return v;
  }

  Vec3 centroid(std::size_t e) const {
    Vec3 c = Vec3::Zero();
    for (auto n : elements_[e].connectivity()) c += nodes_[n];
    return c / static_cast<double>(elements_[e].node_count);
  }

  double max_edge_length(std::size_t e) const {
    const auto& el = elements_[e];
    double h = 0.0;
    for (std::size_t a = 0; a < el.node_count; ++a)
      for (std::size_t b = a + 1; b < el.node_count; ++b)
        h = std::max(h, (nodes_[el.nodes[a]] - nodes_[el.nodes[b]]).norm());
    return h;
  }

  double mean_edge_length() const {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& el : elements_)
      for (std::size_t a = 0; a < el.node_count; ++a)
        for (std::size_t b = a + 1; b < el.node_count; ++b) {
          sum += (nodes_[el.nodes[a]] - nodes_[el.nodes[b]]).norm();
          ++count;
        }
    return sum / static_cast<double>(count);
  }

  /// Signed area (tri3, xy-plane) or signed volume (tet4) of the given connectivity.
  double signed_measure(const Element& el) const {
    const Vec3& a = nodes_[el.nodes[0]];
    const Vec3& b = nodes_[el.nodes[1]];
    const Vec3& c = nodes_[el.nodes[2]];
    if (kind_ == ElementKind::tri3)
      return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
    const Vec3& d = nodes_[el.nodes[3]];
    return (b - a).dot((c - a).cross(d - a)) / 6.0;
  }

  /// Gradients of the linear shape functions, one row per element node.
  /// The z column is zero for tri3.
  Eigen::Matrix<double, 4, 3> shape_gradients(std::size_t e) const {
    const auto& el = elements_[e];
    Eigen::Matrix<double, 4, 3> g = Eigen::Matrix<double, 4, 3>::Zero();
    if (kind_ == ElementKind::tri3) {
      const Vec3& p1 = nodes_[el.nodes[0]];
      const Vec3& p2 = nodes_[el.nodes[1]];
      const Vec3& p3 = nodes_[el.nodes[2]];
      const double two_a = (p2.x() - p1.x()) * (p3.y() - p1.y()) - (p3.x() - p1.x()) * (p2.y() - p1.y());
      g(0, 0) = (p2.y() - p3.y()) / two_a;
      g(1, 0) = (p3.y() - p1.y()) / two_a;
      g(2, 0) = (p1.y() - p2.y()) / two_a;
      g(0, 1) = (p3.x() - p2.x()) / two_a;
      g(1, 1) = (p1.x() - p3.x()) / two_a;
      g(2, 1) = (p2.x() - p1.x()) / two_a;
      return g;
    }
    Eigen::Matrix3d jac;
    for (int k = 0; k < 3; ++k) jac.col(k) = nodes_[el.nodes[k + 1]] - nodes_[el.nodes[0]];
    // rows of J^{-1} are the gradients of the barycentric coords 1..3
    const Eigen::Matrix3d inv = jac.inverse();
    for (int k = 0; k < 3; ++k) g.row(k + 1) = inv.row(k);
    g.row(0) = -(g.row(1) + g.row(2) + g.row(3));
    return g;
  }

  /// Barycentric coordinates of x with respect to element e (tri3 uses x,y only).
  std::array<double, 4> barycentric(std::size_t e, const Vec3& x) const {
    const auto& el = elements_[e];
    std::array<double, 4> w{};
    if (kind_ == ElementKind::tri3) {
      const Vec3& p1 = nodes_[el.nodes[0]];
      const Vec3& p2 = nodes_[el.nodes[1]];
      const Vec3& p3 = nodes_[el.nodes[2]];
      const double det = (p2.x() - p1.x()) * (p3.y() - p1.y()) - (p3.x() - p1.x()) * (p2.y() - p1.y());
      w[1] = ((x.x() - p1.x()) * (p3.y() - p1.y()) - (p3.x() - p1.x()) * (x.y() - p1.y())) / det;
      w[2] = ((p2.x() - p1.x()) * (x.y() - p1.y()) - (x.x() - p1.x()) * (p2.y() - p1.y())) / det;
      w[0] = 1.0 - w[1] - w[2];
      return w;
    }
    Eigen::Matrix3d jac;
    for (int k = 0; k < 3; ++k) jac.col(k) = nodes_[el.nodes[k + 1]] - nodes_[el.nodes[0]];
    const Vec3 l = jac.partialPivLu().solve(x - nodes_[el.nodes[0]]);
    w[1] = l[0];
    w[2] = l[1];
    w[3] = l[2];
    w[0] = 1.0 - l[0] - l[1] - l[2];
    return w;
  }

 private:
  Mesh() = default;

  void build_face_adjacency() {
    const std::size_t nf = kind_ == ElementKind::tri3 ? 2 : 3;  // nodes per face
    const std::size_t npe = nodes_per_element();
    // (sorted face nodes, element) pairs, sorted so shared faces are adjacent
    std::vector<std::pair<std::array<std::size_t, 3>, std::size_t>> faces;
    faces.reserve(elements_.size() * npe);
    for (std::size_t e = 0; e < elements_.size(); ++e) {
      const auto& el = elements_[e];
      for (std::size_t skip = 0; skip < npe; ++skip) {
        std::array<std::size_t, 3> key{0, 0, 0};
        std::size_t k = 0;
        for (std::size_t j = 0; j < npe; ++j)
          if (j != skip) key[k++] = el.nodes[j];
        std::sort(key.begin(), key.begin() + static_cast<std::ptrdiff_t>(nf));
        faces.emplace_back(key, e);
      }
    }
    std::sort(faces.begin(), faces.end());
    std::vector<std::vector<std::size_t>> nb(elements_.size());
    for (std::size_t i = 0; i < faces.size();) {
      std::size_t j = i;
      while (j < faces.size() && faces[j].first == faces[i].first) ++j;
      for (std::size_t a = i; a < j; ++a)
        for (std::size_t b = i; b < j; ++b)
          if (a != b) nb[faces[a].second].push_back(faces[b].second);
      i = j;
    }
    neighbors_.offsets.assign(1, 0);
    for (auto& list : nb) {
      std::sort(list.begin(), list.end());
      list.erase(std::unique(list.begin(), list.end()), list.end());
      neighbors_.items.insert(neighbors_.items.end(), list.begin(), list.end());
      neighbors_.offsets.push_back(neighbors_.items.size());
    }
  }

  ElementKind kind_ = ElementKind::tri3;
  std::vector<Vec3> nodes_;
  std::vector<Element> elements_;
  std::vector<std::array<bool, 3>> fixed_;
  double thickness_ = 0.1;
  std::size_t reoriented_ = 0;
  Adjacency node_elements_;
  Adjacency neighbors_;
  Vec3 bbox_lo_ = Vec3::Zero();
  Vec3 bbox_hi_ = Vec3::Zero();
};

// ---------------------------------------------------------------------------
// Mesh file format
//
//   nodes N
//   id x y z                 (N lines, ids 1..N)
//   elements E tri3|tet4
//   id n1 n2 n3 [n4]         (E lines, ids 1..E)
//   fixed F
//   node mx my mz            (F lines, m = 1 constrains the dof to zero)
//
// Lines starting with '#' are comments.

inline Mesh parse_mesh(std::string_view text, double thickness = 0.1) {
  LineReader in(text);
  std::vector<std::string_view> tok;

  auto expect_header = [&](std::string_view name) -> std::size_t {
    if (!in.next(tok)) throw ParseError(in.line(), "unexpected end of file, expected '" + std::string(name) + "'");
    if (tok[0] != name || tok.size() < 2) in.fail("expected '" + std::string(name) + " <count>'");
    const auto n = in.integer(tok[1]);
    if (n < 0) in.fail("negative count");
    return static_cast<std::size_t>(n);
  };

  const std::size_t nn = expect_header("nodes");
  std::vector<Vec3> nodes(nn, Vec3::Zero());
  std::vector<bool> seen(nn, false);
  for (std::size_t i = 0; i < nn; ++i) {
    if (!in.next(tok)) throw ParseError(in.line(), "unexpected end of file in node block");
    if (tok.size() != 4) in.fail("node line needs 'id x y z'");
    const auto id = in.integer(tok[0]);
    if (id < 1 || static_cast<std::size_t>(id) > nn) in.fail("node id " + std::string(tok[0]) + " out of range 1.." + std::to_string(nn));
    if (seen[id - 1]) in.fail("duplicate node id " + std::string(tok[0]));
    seen[id - 1] = true;
    nodes[id - 1] = Vec3(in.number(tok[1]), in.number(tok[2]), in.number(tok[3]));
  }

  if (!in.next(tok)) throw ParseError(in.line(), "unexpected end of file, expected 'elements'");
  if (tok[0] != "elements" || tok.size() != 3) in.fail("expected 'elements <count> <kind>'");
  const auto ne_raw = in.integer(tok[1]);
  if (ne_raw < 0) in.fail("negative count");
  const std::size_t ne = static_cast<std::size_t>(ne_raw);
  ElementKind kind;
  if (tok[2] == "tri3")
    kind = ElementKind::tri3;
  else if (tok[2] == "tet4")
    kind = ElementKind::tet4;
  else
    in.fail("unknown element kind '" + std::string(tok[2]) + "'");
  const std::size_t npe = kind == ElementKind::tri3 ? 3 : 4;

  std::vector<std::array<std::size_t, 4>> conn(ne, std::array<std::size_t, 4>{});
  std::vector<bool> seen_el(ne, false);
  for (std::size_t i = 0; i < ne; ++i) {
    if (!in.next(tok)) throw ParseError(in.line(), "unexpected end of file in element block");
    if (tok.size() != npe + 1) in.fail("element line needs id and " + std::to_string(npe) + " node ids");
    const auto id = in.integer(tok[0]);
    if (id < 1 || static_cast<std::size_t>(id) > ne) in.fail("element id " + std::string(tok[0]) + " out of range");
    if (seen_el[id - 1]) in.fail("duplicate element id " + std::string(tok[0]));
    seen_el[id - 1] = true;
    for (std::size_t k = 0; k < npe; ++k) {
      const auto n = in.integer(tok[k + 1]);
      if (n < 1 || static_cast<std::size_t>(n) > nn)
        in.fail("element " + std::string(tok[0]) + " references missing node " + std::string(tok[k + 1]));
      conn[id - 1][k] = static_cast<std::size_t>(n - 1);
    }
  }

  std::vector<std::array<bool, 3>> fixed(nn, {false, false, false});
  const std::size_t nfix = expect_header("fixed");
  for (std::size_t i = 0; i < nfix; ++i) {
    if (!in.next(tok)) throw ParseError(in.line(), "unexpected end of file in fixed block");
    if (tok.size() != 4) in.fail("fixed line needs 'node mx my mz'");
    const auto n = in.integer(tok[0]);
    if (n < 1 || static_cast<std::size_t>(n) > nn) in.fail("fixed dof references missing node " + std::string(tok[0]));
    for (int a = 0; a < 3; ++a) {
      const auto flag = in.integer(tok[a + 1]);
      if (flag != 0 && flag != 1) in.fail("constraint flags must be 0 or 1");
      fixed[n - 1][a] = fixed[n - 1][a] || flag == 1;
    }
  }
  if (in.next(tok)) in.fail("unexpected trailing content");
  return Mesh::build(kind, std::move(nodes), std::move(conn), std::move(fixed), thickness);
}

inline std::string serialize_mesh(const Mesh& mesh) {
  std::ostringstream os;
  os << "nodes " << mesh.node_count() << '\n';
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    const auto& p = mesh.node(i);
    os << i + 1 << ' ' << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z()) << '\n';
  }
  os << "elements " << mesh.element_count() << ' ' << to_string(mesh.kind()) << '\n';
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    os << e + 1;
    for (auto n : mesh.element(e).connectivity()) os << ' ' << n + 1;
    os << '\n';
  }
  std::vector<std::size_t> fixed_nodes;
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    const auto& f = mesh.fixed()[i];
    bool any = false;
    for (int a = 0; a < mesh.dim(); ++a) any = any || f[a];
    if (any) fixed_nodes.push_back(i);
  }
  os << "fixed " << fixed_nodes.size() << '\n';
  for (auto i : fixed_nodes) {
    const auto& f = mesh.fixed()[i];
    os << i + 1 << ' ' << int(f[0]) << ' ' << int(f[1]) << ' ' << int(f[2]) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Point location

/// Finds the lowest-id element containing x within the location tolerance.
/// Throws InputError when x lies outside the mesh.
inline PointLocation locate_point(const Mesh& mesh, const Vec3& x) {
  const double tol = mesh.locate_tolerance();
  const bool planar = mesh.kind() == ElementKind::tri3;
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const auto& el = mesh.element(e);
    Vec3 lo = mesh.node(el.nodes[0]), hi = lo;
    for (auto n : el.connectivity()) {
      lo = lo.cwiseMin(mesh.node(n));
      hi = hi.cwiseMax(mesh.node(n));
    }
    const int axes = planar ? 2 : 3;
    bool outside = false;
    for (int a = 0; a < axes; ++a) outside = outside || x[a] < lo[a] - tol || x[a] > hi[a] + tol;
    if (outside) continue;
    auto w = mesh.barycentric(e, x);
    // barycentric tolerance scaled to a length tolerance through the element size
    const double btol = tol / mesh.max_edge_length(e);
    bool inside = true;
    for (std::size_t k = 0; k < el.node_count; ++k) inside = inside && w[k] >= -btol;
    if (inside) return {e, w};
  }
  std::ostringstream os;
  os << "point (" << x.x() << ", " << x.y() << ", " << x.z() << ") lies outside the mesh";
  throw InputError(os.str());
}

// ---------------------------------------------------------------------------
// Advancing-front clustering

/// Partitions elements into connected clusters. Seeds are the lowest unclaimed
/// element id; each cluster grows breadth-first through face adjacency.
inline std::vector<ElementCluster> cluster_elements(const Mesh& mesh, const ClusterPolicy& policy) {
  if (policy.kind == ClusterPolicy::Kind::min_elements && policy.min_elements < 1)
    throw InputError("cluster policy needs at least one element per cluster");
  if (policy.kind == ClusterPolicy::Kind::min_radius && !(policy.radius > 0.0))
    throw InputError("cluster radius must be positive");

  const std::size_t ne = mesh.element_count();
  const auto& nb = mesh.element_neighbors();
  std::vector<bool> claimed(ne, false);
  std::vector<ElementCluster> clusters;
  std::size_t next_seed = 0;
  while (true) {
    while (next_seed < ne && claimed[next_seed]) ++next_seed;
    if (next_seed == ne) break;
    ElementCluster c;
    c.id = clusters.size();
    c.seed = next_seed;
    const Vec3 seed_centroid = mesh.centroid(next_seed);
    std::deque<std::size_t> front{next_seed};
    claimed[next_seed] = true;
    c.elements.push_back(next_seed);
    auto full = [&] {
      return policy.kind == ClusterPolicy::Kind::min_elements && c.elements.size() >= policy.min_elements;
    };
    while (!front.empty() && !full()) {
      const std::size_t cur = front.front();
      front.pop_front();
      for (auto n : nb[cur]) {
        if (claimed[n]) continue;
        if (policy.kind == ClusterPolicy::Kind::min_radius && (mesh.centroid(n) - seed_centroid).norm() > policy.radius)
          continue;
        claimed[n] = true;
        c.elements.push_back(n);
        front.push_back(n);
        if (full()) break;
      }
    }
    std::sort(c.elements.begin(), c.elements.end());
    clusters.push_back(std::move(c));
  }
  return clusters;
}

}  // namespace weakfind
