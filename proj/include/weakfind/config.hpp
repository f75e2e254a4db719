#pragma once

// Project configuration: flat `key = value` text. Relative paths are taken
// relative to the directory of the config file.

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "weakfind/common.hpp"
#include "weakfind/fem.hpp"
#include "weakfind/inverse.hpp"
#include "weakfind/io.hpp"
#include "weakfind/mesh.hpp"
#include "weakfind/placement.hpp"
#include "weakfind/sensitivity.hpp"
#include "weakfind/smoothing.hpp"

namespace weakfind {

struct ProjectConfig {
  std::filesystem::path mesh, loads, sensors, measurements, alpha_target, alpha_initial, candidate_loads;
  std::filesystem::path output_dir = ".";

  MaterialParams material{2e12, 0.3, 7.8};
  double thickness = 0.1;
  double u0 = 0.0;
  double s0 = 0.0;
  double noise = 0.0;  ///< relative noise for synth
  std::uint64_t seed = 0;

  InverseConfig inverse;
  int vtk_stride = 0;

  ClusterPolicy clusters = ClusterPolicy::elements(1);
  SensitivityOptions sensitivity;
  bool region_placement = false;
  NeighbourhoodPolicy neighbourhood;
  bool load_coverage_by_count = false;
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  throw InputError("config: " + key + " expects true/false, got '" + v + "'");
}

inline double parse_number(const std::string& key, const std::string& v) {
  auto d = parse_double(v);
  if (!d) throw InputError("config: " + key + " expects a number, got '" + v + "'");
  return *d;
}

inline long long parse_integer(const std::string& key, const std::string& v) {
  auto d = parse_int(v);
  if (!d) throw InputError("config: " + key + " expects an integer, got '" + v + "'");
  return *d;
}

}  // namespace detail

inline ProjectConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = ".") {
  ProjectConfig cfg;
  std::map<std::string, std::string> kv;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty() || value.empty()) throw ParseError(line_no, "expected 'key = value'");
    if (!kv.emplace(key, value).second) throw ParseError(line_no, "duplicate key '" + key + "'");
  }

  using namespace detail;
  auto path = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_absolute() ? p : base_dir / p;
  };
  for (const auto& [key, v] : kv) {
    if (key == "mesh") cfg.mesh = path(v);
    else if (key == "loads") cfg.loads = path(v);
    else if (key == "sensors") cfg.sensors = path(v);
    else if (key == "measurements") cfg.measurements = path(v);
    else if (key == "alpha_target") cfg.alpha_target = path(v);
    else if (key == "alpha_initial") cfg.alpha_initial = path(v);
    else if (key == "candidate_loads") cfg.candidate_loads = path(v);
    else if (key == "output_dir") cfg.output_dir = path(v);
    else if (key == "E") cfg.material.young_modulus = parse_number(key, v);
    else if (key == "nu") cfg.material.poisson = parse_number(key, v);
    else if (key == "rho") cfg.material.density = parse_number(key, v);
    else if (key == "thickness") cfg.thickness = parse_number(key, v);
    else if (key == "u0") cfg.u0 = parse_number(key, v);
    else if (key == "s0") cfg.s0 = parse_number(key, v);
    else if (key == "noise") cfg.noise = parse_number(key, v);
    else if (key == "seed") {
      const auto s = parse_integer(key, v);
      if (s < 0) throw InputError("config: seed must be non-negative");
      cfg.seed = static_cast<std::uint64_t>(s);
    } else if (key == "weight_scheme") {
      using W = WeightScheme::Variant;
      if (v == "local") cfg.inverse.weights.variant = W::local;
      else if (v == "average") cfg.inverse.weights.variant = W::average;
      else if (v == "max") cfg.inverse.weights.variant = W::max;
      else if (v == "local_max") cfg.inverse.weights.variant = W::local_max;
      else throw InputError("config: unknown weight_scheme '" + v + "' (local, average, max, local_max)");
    } else if (key == "eps_w") cfg.inverse.weights.eps_w = parse_number(key, v);
    else if (key == "smoother") {
      using S = SmootherConfig::Variant;
      if (v == "none") cfg.inverse.smoother.variant = S::none;
      else if (v == "simple") cfg.inverse.smoother.variant = S::simple;
      else if (v == "h1") cfg.inverse.smoother.variant = S::h1_laplacian;
      else if (v == "pseudo_laplacian") cfg.inverse.smoother.variant = S::pseudo_laplacian;
      else throw InputError("config: unknown smoother '" + v + "' (none, simple, h1, pseudo_laplacian)");
    } else if (key == "lambda") cfg.inverse.smoother.lambda = parse_number(key, v);
    else if (key == "smooth_iters") cfg.inverse.smoother.iters = static_cast<int>(parse_integer(key, v));
    else if (key == "gamma0") cfg.inverse.gamma0 = parse_number(key, v);
    else if (key == "line_search") cfg.inverse.line_search = parse_bool(key, v);
    else if (key == "max_iters") cfg.inverse.max_iters = static_cast<int>(parse_integer(key, v));
    else if (key == "eps_alpha") cfg.inverse.eps_alpha = parse_number(key, v);
    else if (key == "tol_cost") cfg.inverse.tol_cost = parse_number(key, v);
    else if (key == "solver") {
      SolverKind k;
      if (v == "direct") k = SolverKind::direct;
      else if (v == "cg") k = SolverKind::cg;
      else throw InputError("config: unknown solver '" + v + "' (direct, cg)");
      cfg.inverse.solver = k;
      cfg.sensitivity.solver = k;
    } else if (key == "vtk_stride") cfg.vtk_stride = static_cast<int>(parse_integer(key, v));
    else if (key == "cluster_elements") cfg.clusters = ClusterPolicy::elements(static_cast<std::size_t>(std::max(0LL, parse_integer(key, v))));
    else if (key == "cluster_radius") cfg.clusters = ClusterPolicy::within_radius(parse_number(key, v));
    else if (key == "sensitivity_method") {
      if (v == "forward") cfg.sensitivity.method = SensitivityMethod::forward;
      else if (v == "adjoint") cfg.sensitivity.method = SensitivityMethod::adjoint;
      else throw InputError("config: unknown sensitivity_method '" + v + "' (forward, adjoint)");
    } else if (key == "delta_alpha") cfg.sensitivity.delta_alpha = parse_number(key, v);
    else if (key == "placement") {
      if (v == "plain") cfg.region_placement = false;
      else if (v == "regions") cfg.region_placement = true;
      else throw InputError("config: unknown placement '" + v + "' (plain, regions)");
    } else if (key == "neighbourhood") {
      using N = NeighbourhoodPolicy::Kind;
      if (v == "elements") cfg.neighbourhood.kind = N::elements;
      else if (v == "volume") cfg.neighbourhood.kind = N::volume;
      else if (v == "radius") cfg.neighbourhood.kind = N::radius;
      else throw InputError("config: unknown neighbourhood '" + v + "' (elements, volume, radius)");
    } else if (key == "neighbourhood_size") cfg.neighbourhood.value = parse_number(key, v);
    else if (key == "load_coverage") {
      if (v == "volume") cfg.load_coverage_by_count = false;
      else if (v == "count") cfg.load_coverage_by_count = true;
      else throw InputError("config: unknown load_coverage '" + v + "' (volume, count)");
    } else {
      throw InputError("config: unknown key '" + key + "'");
    }
  }
  if (kv.count("cluster_elements") && kv.count("cluster_radius"))
    throw InputError("config: cluster_elements and cluster_radius are exclusive");

  cfg.material.validate();
  if (!(cfg.thickness > 0.0)) throw InputError("config: thickness must be positive");
  if (!(cfg.u0 >= 0.0) || !(cfg.s0 >= 0.0)) throw InputError("config: thresholds u0, s0 must be non-negative");
  if (!(cfg.noise >= 0.0)) throw InputError("config: noise must be non-negative");
  if (cfg.vtk_stride < 0) throw InputError("config: vtk_stride must be non-negative");
  cfg.inverse.validate();
  return cfg;
}

inline ProjectConfig load_config(const std::filesystem::path& file) {
  return parse_config(read_file(file), file.parent_path().empty() ? std::filesystem::path(".") : file.parent_path());
}

}  // namespace weakfind
