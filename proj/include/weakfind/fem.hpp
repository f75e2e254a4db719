#pragma once

// Linear elasticity on simplex meshes: element matrices, alpha-scaled global
// assembly with Dirichlet elimination, forward/adjoint solves and strains.

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <atomic>
#include <cmath>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "weakfind/common.hpp"
#include "weakfind/mesh.hpp"

namespace weakfind {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct MaterialParams {
  double young_modulus = 1.0;
  double poisson = 0.0;
  double density = 0.0;  // not used by statics

  void validate() const {
    if (!(young_modulus > 0.0)) throw InputError("Young's modulus must be positive");
    if (!(poisson >= 0.0 && poisson < 0.5)) throw InputError("Poisson ratio must lie in [0, 0.5)");
  }
};

/// Per-element strength factor, kept inside [eps, 1].
struct StrengthField {
  Eigen::VectorXd alpha;
  double eps = 0.01;

  static StrengthField uniform(std::size_t n, double value = 1.0, double eps = 0.01) {
    return {Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), value), eps};
  }

  std::size_t size() const { return static_cast<std::size_t>(alpha.size()); }

  void validate(std::size_t element_count) const {
    if (!(eps > 0.0 && eps <= 1.0)) throw InputError("eps_alpha must lie in (0, 1]");
    if (size() != element_count)
      throw InputError("strength field has " + std::to_string(size()) + " values, mesh has " +
                       std::to_string(element_count) + " elements");
    for (Eigen::Index e = 0; e < alpha.size(); ++e)
      if (!(alpha[e] >= eps && alpha[e] <= 1.0))
        throw InputError("alpha of element " + std::to_string(e + 1) + " = " + format_double(alpha[e]) +
                         " is outside [eps_alpha, 1]");
  }

  void clamp() { alpha = alpha.cwiseMax(eps).cwiseMin(1.0); }
};

enum class SolverKind { direct, cg };

/// Counts linear solves issued against one or more systems.
struct SolveCounter {
  std::atomic<std::size_t> count{0};
  std::size_t value() const { return count.load(); }
  void reset() { count.store(0); }
};

struct LoadCase {
  int id = 0;
  /// (node, axis) -> force
  std::map<std::pair<std::size_t, int>, double> forces;
};

/// Engineering strains, one row per element: (exx, eyy, gxy) for tri3 and
/// (exx, eyy, ezz, gxy, gyz, gzx) for tet4.
using StrainField = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Element level

inline Eigen::MatrixXd constitutive_matrix(ElementKind kind, const MaterialParams& mat) {
  const double E = mat.young_modulus, nu = mat.poisson;
  if (kind == ElementKind::tri3) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(3, 3);
    const double c = E / (1.0 - nu * nu);
    d(0, 0) = d(1, 1) = c;
    d(0, 1) = d(1, 0) = c * nu;
    d(2, 2) = c * (1.0 - nu) / 2.0;
    return d;
  }
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(6, 6);
  const double lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
  const double mu = E / (2.0 * (1.0 + nu));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) d(i, j) = lam;
    d(i, i) = lam + 2.0 * mu;
    d(i + 3, i + 3) = mu;
  }
  return d;
}

/// Strain-displacement matrix of element e (3x6 tri3, 6x12 tet4).
inline Eigen::MatrixXd strain_displacement(const Mesh& mesh, std::size_t e) {
  const auto g = mesh.shape_gradients(e);
  if (mesh.kind() == ElementKind::tri3) {
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(3, 6);
    for (int k = 0; k < 3; ++k) {
      b(0, 2 * k) = g(k, 0);
      b(1, 2 * k + 1) = g(k, 1);
      b(2, 2 * k) = g(k, 1);
      b(2, 2 * k + 1) = g(k, 0);
    }
    return b;
  }
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(6, 12);
  for (int k = 0; k < 4; ++k) {
    const double gx = g(k, 0), gy = g(k, 1), gz = g(k, 2);
    b(0, 3 * k) = gx;
    b(1, 3 * k + 1) = gy;
    b(2, 3 * k + 2) = gz;
    b(3, 3 * k) = gy;
    b(3, 3 * k + 1) = gx;
    b(4, 3 * k + 1) = gz;
    b(4, 3 * k + 2) = gy;
    b(5, 3 * k) = gz;
    b(5, 3 * k + 2) = gx;
  }
  return b;
}

/// Unscaled element stiffness V * B^T C B.
inline Eigen::MatrixXd element_stiffness(const Mesh& mesh, std::size_t e, const MaterialParams& mat) {
  const auto& el = mesh.element(e);
  const double diag = mesh.bbox_diagonal();
  const double scale = mesh.kind() == ElementKind::tri3 ? diag * diag * mesh.thickness() : diag * diag * diag;
  if (!(el.volume > 1e-14 * scale)) throw InputError("element " + std::to_string(e + 1) + " is degenerate");
  const Eigen::MatrixXd b = strain_displacement(mesh, e);
  const Eigen::MatrixXd d = constitutive_matrix(mesh.kind(), mat);
  Eigen::MatrixXd k = el.volume * (b.transpose() * d * b);
  return 0.5 * (k + k.transpose());
}

/// Global (unreduced) dof numbers of element e, node-major.
inline std::vector<std::size_t> element_dofs(const Mesh& mesh, std::size_t e) {
  const auto d = static_cast<std::size_t>(mesh.dim());
  std::vector<std::size_t> dofs;
  dofs.reserve(mesh.nodes_per_element() * d);
  for (auto n : mesh.element(e).connectivity())
    for (std::size_t a = 0; a < d; ++a) dofs.push_back(n * d + a);
  return dofs;
}

// ---------------------------------------------------------------------------
// Dof numbering with Dirichlet elimination

class DofMap {
 public:
  explicit DofMap(const Mesh& mesh) : dim_(mesh.dim()) {
    const auto d = static_cast<std::size_t>(dim_);
    eq_.assign(mesh.node_count() * d, -1);
    Eigen::Index next = 0;
    for (std::size_t n = 0; n < mesh.node_count(); ++n)
      for (std::size_t a = 0; a < d; ++a)
        if (!mesh.is_fixed(n, static_cast<int>(a))) {
          eq_[n * d + a] = next;
          free_.push_back(n * d + a);
          ++next;
        }
  }

  int dim() const { return dim_; }
  std::size_t full_size() const { return eq_.size(); }
  std::size_t free_size() const { return free_.size(); }
  /// Equation index of a full dof, or -1 when constrained.
  Eigen::Index equation(std::size_t full_dof) const { return eq_[full_dof]; }
  std::size_t full_dof(Eigen::Index equation) const { return free_[static_cast<std::size_t>(equation)]; }

  Eigen::VectorXd restrict(const Eigen::VectorXd& full) const {
    Eigen::VectorXd r(static_cast<Eigen::Index>(free_.size()));
    for (std::size_t i = 0; i < free_.size(); ++i) r[static_cast<Eigen::Index>(i)] = full[static_cast<Eigen::Index>(free_[i])];
    return r;
  }

  Eigen::VectorXd expand(const Eigen::VectorXd& reduced) const {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(eq_.size()));
    for (std::size_t i = 0; i < free_.size(); ++i) f[static_cast<Eigen::Index>(free_[i])] = reduced[static_cast<Eigen::Index>(i)];
    return f;
  }

 private:
  int dim_;
  std::vector<Eigen::Index> eq_;
  std::vector<std::size_t> free_;
};

// ---------------------------------------------------------------------------
// Assembly

/// Per-mesh assembly context: unscaled element matrices, dof map and the
/// reduced sparsity pattern. Reassembly for a new alpha only refills values.
class StiffnessAssembler {
 public:
  StiffnessAssembler(const Mesh& mesh, const MaterialParams& mat) : mesh_(&mesh), mat_(mat), dofs_(mesh) {
    mat.validate();
    const std::size_t ne = mesh.element_count();
    ke_.reserve(ne);
    edofs_.reserve(ne);
    for (std::size_t e = 0; e < ne; ++e) {
      ke_.push_back(element_stiffness(mesh, e, mat));
      edofs_.push_back(element_dofs(mesh, e));
    }
    const auto n = static_cast<Eigen::Index>(dofs_.free_size());
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t e = 0; e < ne; ++e)
      for (auto i : edofs_[e])
        for (auto j : edofs_[e]) {
          const auto r = dofs_.equation(i), c = dofs_.equation(j);
          if (r >= 0 && c >= 0) trip.emplace_back(r, c, 1.0);
        }
    pattern_.resize(n, n);
    pattern_.setFromTriplets(trip.begin(), trip.end());
    pattern_.makeCompressed();
    // value slot of every (element, local i, local j) entry
    slots_.resize(ne);
    for (std::size_t e = 0; e < ne; ++e) {
      const auto& ed = edofs_[e];
      slots_[e].assign(ed.size() * ed.size(), -1);
      for (std::size_t a = 0; a < ed.size(); ++a)
        for (std::size_t b = 0; b < ed.size(); ++b) {
          const auto r = dofs_.equation(ed[a]), c = dofs_.equation(ed[b]);
          if (r < 0 || c < 0) continue;
          const auto* inner = pattern_.innerIndexPtr();
          const auto begin = pattern_.outerIndexPtr()[c], end = pattern_.outerIndexPtr()[c + 1];
          const auto* pos = std::lower_bound(inner + begin, inner + end, static_cast<int>(r));
          slots_[e][a * ed.size() + b] = pos - inner;
        }
    }
  }

  const Mesh& mesh() const { return *mesh_; }
  const MaterialParams& material() const { return mat_; }
  const DofMap& dofs() const { return dofs_; }
  const Eigen::MatrixXd& element_matrix(std::size_t e) const { return ke_[e]; }
  const std::vector<Eigen::MatrixXd>& element_matrices() const { return ke_; }
  const std::vector<std::size_t>& dofs_of(std::size_t e) const { return edofs_[e]; }

  /// K = sum_e alpha_e K_e over free dofs.
  SparseMatrix assemble(const Eigen::VectorXd& alpha) const {
    SparseMatrix k = pattern_;
    double* values = k.valuePtr();
    std::fill(values, values + k.nonZeros(), 0.0);
    for (std::size_t e = 0; e < ke_.size(); ++e) {
      const double s = alpha[static_cast<Eigen::Index>(e)];
      const auto& m = ke_[e];
      const auto nd = edofs_[e].size();
      for (std::size_t a = 0; a < nd; ++a)
        for (std::size_t b = 0; b < nd; ++b) {
          const auto slot = slots_[e][a * nd + b];
          if (slot >= 0) values[slot] += s * m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        }
    }
    return k;
  }

  /// Full-size nodal force vector of a load case; forces on constrained dofs are dropped.
  Eigen::VectorXd load_vector(const LoadCase& load) const {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dofs_.full_size()));
    const auto d = static_cast<std::size_t>(mesh_->dim());
    std::size_t dropped = 0;
    for (const auto& [key, value] : load.forces) {
      const auto [node, axis] = key;
      if (node >= mesh_->node_count()) throw InputError("load case " + std::to_string(load.id) + " references missing node " + std::to_string(node + 1));
      if (static_cast<std::size_t>(axis) >= d || mesh_->is_fixed(node, axis)) {
        if (value != 0.0) ++dropped;
        continue;
      }
      f[static_cast<Eigen::Index>(node * d + static_cast<std::size_t>(axis))] += value;
    }
    if (dropped > 0)
      warn("load case " + std::to_string(load.id) + ": " + std::to_string(dropped) + " force component(s) on constrained dofs ignored");
    return f;
  }

 private:
  const Mesh* mesh_;
  MaterialParams mat_;
  DofMap dofs_;
  std::vector<Eigen::MatrixXd> ke_;
  std::vector<std::vector<std::size_t>> edofs_;
  SparseMatrix pattern_;
  std::vector<std::vector<std::ptrdiff_t>> slots_;
};

/// Assembled, factorized system K(alpha) over free dofs. Immutable after
/// construction; solve() is const and may be called concurrently.
class GlobalSystem {
 public:
  static constexpr double tol_solve = 1e-10;

  GlobalSystem(const StiffnessAssembler& assembler, const StrengthField& alpha, SolverKind kind = SolverKind::direct,
               SolveCounter* counter = nullptr)
      : assembler_(&assembler), kind_(kind), external_(counter) {
    alpha.validate(assembler.mesh().element_count());
    k_ = assembler.assemble(alpha.alpha);
    if (k_.rows() == 0) throw SolverError("system has no free dofs");
    if (kind_ == SolverKind::direct) {
      ldlt_ = std::make_unique<Eigen::SimplicialLDLT<SparseMatrix>>();
      ldlt_->compute(k_);
      bool ok = ldlt_->info() == Eigen::Success;
      if (ok) {
        const auto& d = ldlt_->vectorD();
        const double dmax = d.cwiseAbs().maxCoeff();
        ok = d.minCoeff() > 1e-13 * dmax;
      }
      if (!ok) throw SolverError("stiffness matrix is singular or not positive definite" + null_space_diagnostic());
    } else {
      cg_ = std::make_unique<Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper>>();
      cg_->setTolerance(1e-13);
      cg_->setMaxIterations(20 * k_.rows() + 100);
      cg_->compute(k_);
    }
  }

  const StiffnessAssembler& assembler() const { return *assembler_; }
  const DofMap& dofs() const { return assembler_->dofs(); }
  const SparseMatrix& matrix() const { return k_; }
  std::size_t solve_count() const { return own_.value(); }

  /// Solves K x = b for a full-size rhs; constrained entries of b are ignored
  /// and constrained entries of the result are zero.
  Eigen::VectorXd solve(const Eigen::VectorXd& full_rhs) const {
    own_.count.fetch_add(1);
    if (external_) external_->count.fetch_add(1);
    const Eigen::VectorXd b = dofs().restrict(full_rhs);
    const double bnorm = b.norm();
    if (bnorm == 0.0) return Eigen::VectorXd::Zero(full_rhs.size());
    Eigen::VectorXd x = raw_solve(b);
    Eigen::VectorXd r = b - k_ * x;
    // iterative refinement reusing the factorization
    for (int it = 0; it < 3 && r.norm() > tol_solve * bnorm; ++it) {
      x += raw_solve(r);
      r = b - k_ * x;
    }
    if (!x.allFinite() || r.norm() > tol_solve * bnorm) {
      std::ostringstream os;
      os << "linear solve failed: relative residual " << r.norm() / bnorm << " exceeds " << tol_solve;
      throw SolverError(os.str());
    }
    return dofs().expand(x);
  }

 private:
  Eigen::VectorXd raw_solve(const Eigen::VectorXd& b) const {
    if (ldlt_) return ldlt_->solve(b);
    return cg_->solve(b);
  }

  std::string null_space_diagnostic() const {
    const Mesh& mesh = assembler_->mesh();
    const DofMap& dm = dofs();
    const int d = mesh.dim();
    std::vector<std::pair<std::string, Eigen::VectorXd>> modes;
    const auto nfull = static_cast<Eigen::Index>(dm.full_size());
    const char* axis_name[] = {"x", "y", "z"};
    for (int a = 0; a < d; ++a) {
      Eigen::VectorXd t = Eigen::VectorXd::Zero(nfull);
      for (std::size_t n = 0; n < mesh.node_count(); ++n) t[static_cast<Eigen::Index>(n * d + a)] = 1.0;
      modes.emplace_back(std::string("translation-") + axis_name[a], t);
    }
    const int rot_axes = d == 2 ? 1 : 3;
    for (int r = 0; r < rot_axes; ++r) {
      const int axis = d == 2 ? 2 : r;
      Eigen::VectorXd t = Eigen::VectorXd::Zero(nfull);
      for (std::size_t n = 0; n < mesh.node_count(); ++n) {
        Vec3 w = Vec3::Zero();
        w[axis] = 1.0;
        const Vec3 v = w.cross(mesh.node(n));
        for (int a = 0; a < d; ++a) t[static_cast<Eigen::Index>(n * d + a)] = v[a];
      }
      modes.emplace_back(std::string("rotation-") + axis_name[axis], t);
    }
    double kmax = 0.0;
    for (int c = 0; c < k_.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(k_, c); it; ++it) kmax = std::max(kmax, std::abs(it.value()));
    std::string found;
    for (const auto& [name, full] : modes) {
      const Eigen::VectorXd t = dm.restrict(full);
      if (t.norm() == 0.0) continue;
      const double ratio = (k_ * t).norm() / (kmax * t.norm());
      if (ratio < 1e-10) found += (found.empty() ? "" : ", ") + name;
    }
    if (found.empty()) return " (no unconstrained rigid-body mode detected; check alpha and element quality)";
    return "; near-null rigid-body mode(s): " + found;
  }

  const StiffnessAssembler* assembler_;
  SolverKind kind_;
  SolveCounter* external_;
  mutable SolveCounter own_;
  SparseMatrix k_;
  std::unique_ptr<Eigen::SimplicialLDLT<SparseMatrix>> ldlt_;
  std::unique_ptr<Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper>> cg_;
};

inline GlobalSystem assemble_global(const StiffnessAssembler& assembler, const StrengthField& alpha,
                                    SolverKind kind = SolverKind::direct, SolveCounter* counter = nullptr) {
  return GlobalSystem(assembler, alpha, kind, counter);
}

/// u with K u = f; constrained dofs are zero.
inline Eigen::VectorXd solve_forward(const GlobalSystem& sys, const LoadCase& load) {
  return sys.solve(sys.assembler().load_vector(load));
}

/// Adjoint solve. K is symmetric, so the forward factorization is reused.
inline Eigen::VectorXd solve_adjoint(const GlobalSystem& sys, const Eigen::VectorXd& rhs) { return sys.solve(rhs); }

inline Eigen::VectorXd element_values(const Eigen::VectorXd& u, const std::vector<std::size_t>& dofs) {
  Eigen::VectorXd ue(static_cast<Eigen::Index>(dofs.size()));
  for (std::size_t k = 0; k < dofs.size(); ++k) ue[static_cast<Eigen::Index>(k)] = u[static_cast<Eigen::Index>(dofs[k])];
  return ue;
}

/// Constant per-element strains B_e u_e.
inline StrainField compute_strains(const Mesh& mesh, const Eigen::VectorXd& u) {
  const auto ncomp = static_cast<Eigen::Index>(mesh.strain_components());
  if (static_cast<std::size_t>(u.size()) != mesh.node_count() * static_cast<std::size_t>(mesh.dim()))
    throw InputError("displacement vector size does not match the mesh");
  StrainField s(static_cast<Eigen::Index>(mesh.element_count()), ncomp);
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const Eigen::VectorXd ue = element_values(u, element_dofs(mesh, e));
    s.row(static_cast<Eigen::Index>(e)) = (strain_displacement(mesh, e) * ue).transpose();
  }
  return s;
}

// ---------------------------------------------------------------------------
// Load-case file: "case <id>" headers followed by "node fx fy fz" lines.

inline std::vector<LoadCase> parse_loads(std::string_view text) {
  LineReader in(text);
  std::vector<std::string_view> tok;
  std::vector<LoadCase> cases;
  while (in.next(tok)) {
    if (tok[0] == "case") {
      if (tok.size() != 2) in.fail("expected 'case <id>'");
      LoadCase lc;
      lc.id = static_cast<int>(in.integer(tok[1]));
      for (const auto& c : cases)
        if (c.id == lc.id) in.fail("duplicate load case id " + std::string(tok[1]));
      cases.push_back(std::move(lc));
      continue;
    }
    if (cases.empty()) in.fail("force line before any 'case' header");
    if (tok.size() != 4) in.fail("force line needs 'node fx fy fz'");
    const auto node = in.integer(tok[0]);
    if (node < 1) in.fail("node ids are 1-based");
    for (int a = 0; a < 3; ++a) {
      const double v = in.number(tok[a + 1]);
      if (v != 0.0) cases.back().forces[{static_cast<std::size_t>(node - 1), a}] += v;
    }
  }
  if (cases.empty()) throw InputError("load file contains no load cases");
  return cases;
}

inline std::string serialize_loads(const std::vector<LoadCase>& cases) {
  std::ostringstream os;
  for (const auto& lc : cases) {
    os << "case " << lc.id << '\n';
    std::map<std::size_t, std::array<double, 3>> by_node;
    for (const auto& [key, v] : lc.forces) by_node[key.first][key.second] += v;
    for (const auto& [node, f] : by_node)
      os << node + 1 << ' ' << format_double(f[0]) << ' ' << format_double(f[1]) << ' ' << format_double(f[2]) << '\n';
  }
  return os.str();
}

}  // namespace weakfind
