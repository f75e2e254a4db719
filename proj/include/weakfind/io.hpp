#pragma once

// Result files: legacy ASCII VTK, displacement/strain CSV, per-element alpha
// files and cost histories. All numbers use shortest round-trip formatting.

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "weakfind/common.hpp"
#include "weakfind/fem.hpp"
#include "weakfind/mesh.hpp"

namespace weakfind {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << content;
  if (!out) throw InputError("error writing " + path.string());
}

// ---------------------------------------------------------------------------
// Legacy VTK unstructured grid

struct VtkData {
  std::vector<std::pair<std::string, Eigen::VectorXd>> point_vectors;  ///< full dof layout (dim per node)
  std::vector<std::pair<std::string, Eigen::VectorXd>> point_scalars;
  std::vector<std::pair<std::string, Eigen::VectorXd>> cell_scalars;
};

inline std::string write_vtk(const Mesh& mesh, const VtkData& data, const std::string& title = "weakfind") {
  std::ostringstream os;
  os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << mesh.node_count() << " double\n";
  for (const auto& p : mesh.nodes())
    os << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z()) << '\n';
  const std::size_t npe = mesh.nodes_per_element();
  os << "CELLS " << mesh.element_count() << ' ' << mesh.element_count() * (npe + 1) << '\n';
  for (const auto& el : mesh.elements()) {
    os << npe;
    for (auto n : el.connectivity()) os << ' ' << n;
    os << '\n';
  }
  os << "CELL_TYPES " << mesh.element_count() << '\n';
  const int type = mesh.kind() == ElementKind::tri3 ? 5 : 10;
  for (std::size_t e = 0; e < mesh.element_count(); ++e) os << type << '\n';

  if (!data.point_vectors.empty() || !data.point_scalars.empty()) {
    os << "POINT_DATA " << mesh.node_count() << '\n';
    const auto d = static_cast<std::size_t>(mesh.dim());
    for (const auto& [name, v] : data.point_vectors) {
      if (v.size() != static_cast<Eigen::Index>(d * mesh.node_count())) throw InputError("vtk: point vector size mismatch");
      os << "VECTORS " << name << " double\n";
      for (std::size_t n = 0; n < mesh.node_count(); ++n) {
        for (std::size_t a = 0; a < 3; ++a)
          os << (a ? " " : "") << format_double(a < d ? v[static_cast<Eigen::Index>(n * d + a)] : 0.0);
        os << '\n';
      }
    }
    for (const auto& [name, v] : data.point_scalars) {
      if (v.size() != static_cast<Eigen::Index>(mesh.node_count())) throw InputError("vtk: point scalar size mismatch");
      os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (Eigen::Index i = 0; i < v.size(); ++i) os << format_double(v[i]) << '\n';
    }
  }
  if (!data.cell_scalars.empty()) {
    os << "CELL_DATA " << mesh.element_count() << '\n';
    for (const auto& [name, v] : data.cell_scalars) {
      if (v.size() != static_cast<Eigen::Index>(mesh.element_count())) throw InputError("vtk: cell scalar size mismatch");
      os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (Eigen::Index i = 0; i < v.size(); ++i) os << format_double(v[i]) << '\n';
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// CSV

/// `node,ux,uy,uz` with 1-based node ids; uz is 0 for plane meshes.
inline std::string displacement_csv(const Mesh& mesh, const Eigen::VectorXd& u) {
  const auto d = static_cast<std::size_t>(mesh.dim());
  if (u.size() != static_cast<Eigen::Index>(d * mesh.node_count())) throw InputError("displacement size mismatch");
  std::ostringstream os;
  os << "node,ux,uy,uz\n";
  for (std::size_t n = 0; n < mesh.node_count(); ++n) {
    os << n + 1;
    for (std::size_t a = 0; a < 3; ++a) os << ',' << format_double(a < d ? u[static_cast<Eigen::Index>(n * d + a)] : 0.0);
    os << '\n';
  }
  return os.str();
}

inline const char* const* strain_names(ElementKind kind, std::size_t& count) {
  static const char* const tri[] = {"exx", "eyy", "gxy"};
  static const char* const tet[] = {"exx", "eyy", "ezz", "gxy", "gyz", "gzx"};
  count = kind == ElementKind::tri3 ? 3 : 6;
  return kind == ElementKind::tri3 ? tri : tet;
}

/// `element,<components>` with 1-based element ids.
inline std::string strain_csv(const Mesh& mesh, const StrainField& s) {
  std::size_t nc = 0;
  const auto names = strain_names(mesh.kind(), nc);
  std::ostringstream os;
  os << "element";
  for (std::size_t c = 0; c < nc; ++c) os << ',' << names[c];
  os << '\n';
  for (Eigen::Index e = 0; e < s.rows(); ++e) {
    os << e + 1;
    for (Eigen::Index c = 0; c < s.cols(); ++c) os << ',' << format_double(s(e, c));
    os << '\n';
  }
  return os.str();
}

/// Largest absolute strain component per element.
inline Eigen::VectorXd strain_magnitude(const StrainField& s) { return s.cwiseAbs().rowwise().maxCoeff(); }

inline std::string cost_history_csv(const std::vector<double>& history) {
  std::ostringstream os;
  os << "iter,cost\n";
  for (std::size_t i = 0; i < history.size(); ++i) os << i + 1 << ',' << format_double(history[i]) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Alpha files: "element_id alpha" per line, every element exactly once.

inline std::string serialize_alpha(const StrengthField& alpha) {
  std::ostringstream os;
  for (Eigen::Index e = 0; e < alpha.alpha.size(); ++e) os << e + 1 << ' ' << format_double(alpha.alpha[e]) << '\n';
  return os.str();
}

inline StrengthField parse_alpha(std::string_view text, std::size_t element_count, double eps = 0.01) {
  LineReader in(text);
  std::vector<std::string_view> tok;
  StrengthField f;
  f.eps = eps;
  f.alpha = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(element_count), -1.0);
  std::vector<bool> seen(element_count, false);
  while (in.next(tok)) {
    if (tok.size() != 2) in.fail("alpha line needs 'element_id alpha'");
    const auto id = in.integer(tok[0]);
    if (id < 1 || static_cast<std::size_t>(id) > element_count) in.fail("element id " + std::string(tok[0]) + " out of range");
    const auto e = static_cast<std::size_t>(id - 1);
    if (seen[e]) in.fail("duplicate element id " + std::string(tok[0]));
    seen[e] = true;
    f.alpha[static_cast<Eigen::Index>(e)] = in.number(tok[1]);
  }
  for (std::size_t e = 0; e < element_count; ++e)
    if (!seen[e]) throw InputError("alpha file has no value for element " + std::to_string(e + 1));
  f.validate(element_count);
  return f;
}

}  // namespace weakfind
