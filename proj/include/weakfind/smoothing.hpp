#pragma once

// Gradient regularization: volume averaging between elements and points,
// repeated point/element averaging, H1 Laplacian and pseudo-Laplacian filters.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <memory>
#include <string>
#include <vector>

#include "weakfind/common.hpp"
#include "weakfind/fem.hpp"
#include "weakfind/mesh.hpp"

namespace weakfind {

using ElementField = Eigen::VectorXd;
using PointField = Eigen::VectorXd;

/// alpha_p = sum_e alpha_e V_e / sum_e V_e over the elements around p.
inline PointField element_to_point(const Mesh& mesh, const ElementField& field) {
  PointField p(static_cast<Eigen::Index>(mesh.node_count()));
  const auto& adj = mesh.node_to_elements();
  for (std::size_t n = 0; n < mesh.node_count(); ++n) {
    double num = 0.0, den = 0.0;
    for (auto e : adj[n]) {
      const double v = mesh.element(e).volume;
      num += field[static_cast<Eigen::Index>(e)] * v;
      den += v;
    }
    p[static_cast<Eigen::Index>(n)] = num / den;
  }
  return p;
}

/// Arithmetic mean of the element's node values.
inline ElementField point_to_element(const Mesh& mesh, const PointField& field) {
  ElementField f(static_cast<Eigen::Index>(mesh.element_count()));
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const auto& el = mesh.element(e);
    double s = 0.0;
    for (auto n : el.connectivity()) s += field[static_cast<Eigen::Index>(n)];
    f[static_cast<Eigen::Index>(e)] = s / static_cast<double>(el.node_count);
  }
  return f;
}

inline ElementField smooth_simple(const Mesh& mesh, ElementField field, int iters) {
  if (iters < 1) throw InputError("smooth_iters must be at least 1");
  for (int i = 0; i < iters; ++i) field = point_to_element(mesh, element_to_point(mesh, field));
  return field;
}

// ---------------------------------------------------------------------------
// Point-based operators for linear simplices (exact integration).

inline SparseMatrix consistent_mass(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> trip;
  const double denom = mesh.kind() == ElementKind::tri3 ? 12.0 : 20.0;
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const auto& el = mesh.element(e);
    const double v = el.volume / denom;
    for (auto a : el.connectivity())
      for (auto b : el.connectivity())
        trip.emplace_back(static_cast<int>(a), static_cast<int>(b), a == b ? 2.0 * v : v);
  }
  const auto n = static_cast<Eigen::Index>(mesh.node_count());
  SparseMatrix m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

/// Row-sum lumping of the consistent mass matrix.
inline SparseMatrix lumped_mass(const Mesh& mesh) {
  const SparseMatrix mc = consistent_mass(mesh);
  Eigen::VectorXd rows = Eigen::VectorXd::Zero(mc.rows());
  for (int c = 0; c < mc.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(mc, c); it; ++it) rows[it.row()] += it.value();
  SparseMatrix ml(mc.rows(), mc.cols());
  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index i = 0; i < rows.size(); ++i) trip.emplace_back(static_cast<int>(i), static_cast<int>(i), rows[i]);
  ml.setFromTriplets(trip.begin(), trip.end());
  return ml;
}

/// Diffusion matrix of the Laplacian with natural boundary conditions.
inline SparseMatrix diffusion_matrix(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const auto& el = mesh.element(e);
    const auto g = mesh.shape_gradients(e);
    for (std::size_t a = 0; a < el.node_count; ++a)
      for (std::size_t b = 0; b < el.node_count; ++b)
        trip.emplace_back(static_cast<int>(el.nodes[a]), static_cast<int>(el.nodes[b]),
                          el.volume * g.row(static_cast<Eigen::Index>(a)).dot(g.row(static_cast<Eigen::Index>(b))));
  }
  const auto n = static_cast<Eigen::Index>(mesh.node_count());
  SparseMatrix k(n, n);
  k.setFromTriplets(trip.begin(), trip.end());
  return k;
}

/// Element-to-point projection M_p1p0: entry (p, e) = integral of N_p over e = V_e / n_e.
inline SparseMatrix projection_matrix(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const auto& el = mesh.element(e);
    for (auto n : el.connectivity())
      trip.emplace_back(static_cast<int>(n), static_cast<int>(e), el.volume / static_cast<double>(el.node_count));
  }
  SparseMatrix p(static_cast<Eigen::Index>(mesh.node_count()), static_cast<Eigen::Index>(mesh.element_count()));
  p.setFromTriplets(trip.begin(), trip.end());
  return p;
}

// ---------------------------------------------------------------------------

struct SmootherConfig {
  enum class Variant { none, simple, h1_laplacian, pseudo_laplacian };
  Variant variant = Variant::pseudo_laplacian;
  int iters = 1;        ///< simple averaging passes
  double lambda = 0.05; ///< length^2 for h1, dimensionless for pseudo-Laplacian

  void validate() const {
    if (variant == Variant::simple && iters < 1) throw InputError("smooth_iters must be at least 1");
    if (!(lambda >= 0.0)) throw InputError("smoothing lambda must be non-negative");
  }
};

/// Smoothing operator bound to a mesh. The system matrix of the Laplacian
/// variants is factorized once and reused for every apply.
class Smoother {
 public:
  Smoother(const Mesh& mesh, SmootherConfig cfg) : mesh_(&mesh), cfg_(cfg) {
    cfg_.validate();
    using V = SmootherConfig::Variant;
    if (cfg_.variant != V::h1_laplacian && cfg_.variant != V::pseudo_laplacian) return;
    const SparseMatrix mc = consistent_mass(mesh);
    SparseMatrix a;
    if (cfg_.variant == V::h1_laplacian)
      a = mc + cfg_.lambda * diffusion_matrix(mesh);
    else
      a = mc + cfg_.lambda * (SparseMatrix(lumped_mass(mesh)) - mc);
    proj_ = projection_matrix(mesh);
    llt_ = std::make_unique<Eigen::SimplicialLLT<SparseMatrix>>(a);
    if (llt_->info() != Eigen::Success) throw SolverError("smoothing system is not positive definite");
  }

  const SmootherConfig& config() const { return cfg_; }

  /// Point field solving the smoothing system with rhs M_p1p0 * field.
  PointField smooth_points(const ElementField& field) const {
    if (!llt_) throw InputError("smooth_points requires a Laplacian-type smoother");
    PointField x = llt_->solve(proj_ * field);
    if (llt_->info() != Eigen::Success) throw SolverError("smoothing solve failed");
    return x;
  }

  /// Element field in, element field out (points mapped back by averaging).
  ElementField apply(const ElementField& field) const {
    using V = SmootherConfig::Variant;
    switch (cfg_.variant) {
      case V::none: return field;
      case V::simple: return smooth_simple(*mesh_, field, cfg_.iters);
      default: return point_to_element(*mesh_, smooth_points(field));
    }
  }

 private:
  const Mesh* mesh_;
  SmootherConfig cfg_;
  SparseMatrix proj_;
  std::unique_ptr<Eigen::SimplicialLLT<SparseMatrix>> llt_;
};

inline PointField smooth_h1(const Mesh& mesh, const ElementField& field, double lambda) {
  return Smoother(mesh, {SmootherConfig::Variant::h1_laplacian, 1, lambda}).smooth_points(field);
}

inline PointField smooth_pseudo_laplacian(const Mesh& mesh, const ElementField& field, double lambda = 0.05) {
  return Smoother(mesh, {SmootherConfig::Variant::pseudo_laplacian, 1, lambda}).smooth_points(field);
}

}  // namespace weakfind
