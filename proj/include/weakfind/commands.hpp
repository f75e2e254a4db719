#pragma once

// File-based pipeline stages behind the weakfind command line.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "weakfind/config.hpp"
#include "weakfind/fem.hpp"
#include "weakfind/inverse.hpp"
#include "weakfind/io.hpp"
#include "weakfind/mesh.hpp"
#include "weakfind/placement.hpp"
#include "weakfind/sensing.hpp"
#include "weakfind/sensitivity.hpp"

namespace weakfind {

enum ExitCode : int { exit_ok = 0, exit_input = 2, exit_solver = 3, exit_not_converged = 4 };

namespace detail {

inline const std::filesystem::path& require(const std::filesystem::path& p, const char* key) {
  if (p.empty()) throw InputError(std::string("config: '") + key + "' is required for this command");
  if (!std::filesystem::exists(p)) throw InputError(std::string("config: ") + key + " file " + p.string() + " does not exist");
  return p;
}

inline void prepare_output(const ProjectConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec || !std::filesystem::is_directory(cfg.output_dir))
    throw InputError("cannot create output directory " + cfg.output_dir.string());
}

inline Mesh load_mesh(const ProjectConfig& cfg) { return parse_mesh(read_file(require(cfg.mesh, "mesh")), cfg.thickness); }

inline SensorSet load_sensors(const ProjectConfig& cfg, const Mesh& mesh) {
  SensorSet s = parse_sensors(read_file(require(cfg.sensors, "sensors")));
  s.u0 = cfg.u0;
  s.s0 = cfg.s0;
  return resolve_sensors(mesh, s);
}

inline void check_load_nodes(const Mesh& mesh, const std::vector<LoadCase>& loads) {
  for (const auto& lc : loads)
    for (const auto& [key, v] : lc.forces)
      if (key.first >= mesh.node_count())
        throw InputError("load case " + std::to_string(lc.id) + " references node " + std::to_string(key.first + 1) +
                         " outside the mesh");
}

inline std::vector<LoadCase> load_loads(const std::filesystem::path& p, const char* key, const Mesh& mesh) {
  auto loads = parse_loads(read_file(require(p, key)));
  check_load_nodes(mesh, loads);
  return loads;
}

inline StrengthField optional_alpha(const std::filesystem::path& p, const Mesh& mesh, double eps) {
  if (p.empty()) return StrengthField::uniform(mesh.element_count(), 1.0, eps);
  if (!std::filesystem::exists(p)) throw InputError("alpha file " + p.string() + " does not exist");
  return parse_alpha(read_file(p), mesh.element_count(), eps);
}

}  // namespace detail

/// Displacements and strains per load case, plus one VTK file holding all cases.
inline int cmd_forward(const ProjectConfig& cfg) {
  const Mesh mesh = detail::load_mesh(cfg);
  const auto loads = detail::load_loads(cfg.loads, "loads", mesh);
  const StrengthField alpha = detail::optional_alpha(cfg.alpha_target, mesh, cfg.inverse.eps_alpha);
  detail::prepare_output(cfg);
  const StiffnessAssembler as(mesh, cfg.material);
  const GlobalSystem sys(as, alpha, cfg.inverse.solver);
  std::vector<Eigen::VectorXd> u(loads.size());
  parallel_for(loads.size(), [&](std::size_t i) { u[i] = solve_forward(sys, loads[i]); });
  VtkData vtk;
  vtk.cell_scalars.emplace_back("alpha", alpha.alpha);
  for (std::size_t i = 0; i < loads.size(); ++i) {
    const std::string tag = "case_" + std::to_string(loads[i].id);
    const StrainField s = compute_strains(mesh, u[i]);
    write_file(cfg.output_dir / ("displacement_" + tag + ".csv"), displacement_csv(mesh, u[i]));
    write_file(cfg.output_dir / ("strain_" + tag + ".csv"), strain_csv(mesh, s));
    vtk.point_vectors.emplace_back("displacement_" + tag, u[i]);
    vtk.cell_scalars.emplace_back("strain_magnitude_" + tag, strain_magnitude(s));
  }
  write_file(cfg.output_dir / "forward.vtk", write_vtk(mesh, vtk, "weakfind forward"));
  return exit_ok;
}

/// Synthetic measurements from a target strength field.
inline int cmd_synth(const ProjectConfig& cfg) {
  const Mesh mesh = detail::load_mesh(cfg);
  const auto loads = detail::load_loads(cfg.loads, "loads", mesh);
  const SensorSet sensors = detail::load_sensors(cfg, mesh);
  const StrengthField target =
      parse_alpha(read_file(detail::require(cfg.alpha_target, "alpha_target")), mesh.element_count(), cfg.inverse.eps_alpha);
  detail::prepare_output(cfg);
  const StiffnessAssembler as(mesh, cfg.material);
  const auto m = synthesize_measurements(as, target, loads, sensors, {cfg.noise, cfg.seed});
  write_file(cfg.output_dir / "measurements.txt", serialize_measurements(m));
  return exit_ok;
}

namespace detail {

inline void write_inversion_outputs(const ProjectConfig& cfg, const InverseProblem& problem, const InversionResult& res,
                                    const MeasurementSet& measured, const std::string& prefix) {
  const Mesh& mesh = problem.mesh();
  write_file(cfg.output_dir / (prefix + "alpha.txt"), serialize_alpha(res.alpha));
  write_file(cfg.output_dir / (prefix + "cost_history.csv"), cost_history_csv(res.cost_history));

  // measured versus computed readings at the returned alpha
  const auto& obs = problem.observations();
  const auto& sensors = problem.sensors();
  const Weights& w = problem.weights();
  const GlobalSystem sys(problem.assembler(), res.alpha, cfg.inverse.solver);
  const auto ev = problem.evaluate(sys);
  std::ostringstream csv;
  csv << "case,sensor,component,measured,computed,difference\n";
  Eigen::VectorXd misfit = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.element_count()));
  for (std::size_t i = 0; i < problem.cases().size(); ++i) {
    const int case_id = problem.cases()[i].load.id;
    for (std::size_t c = 0; c < obs.size(); ++c) {
      const auto& ch = obs.channels()[c];
      const auto& s = sensors.sensors[ch.sensor];
      const ReadingKey key{case_id, s.id, ch.component};
      auto it = measured.values.find(key);
      if (it == measured.values.end()) continue;
      const double r = ev.readings[i][static_cast<Eigen::Index>(c)];
      csv << case_id << ',' << s.id << ',' << to_string(ch.component) << ',' << format_double(it->second) << ','
          << format_double(r) << ',' << format_double(it->second - r) << '\n';
      misfit[static_cast<Eigen::Index>(s.element)] += 0.5 * w.at(key) * (it->second - r) * (it->second - r);
    }
  }
  write_file(cfg.output_dir / (prefix + "misfit.csv"), csv.str());
  VtkData vtk;
  vtk.cell_scalars.emplace_back("alpha", res.alpha.alpha);
  vtk.cell_scalars.emplace_back("misfit", misfit);
  for (std::size_t i = 0; i < ev.displacements.size(); ++i)
    vtk.point_vectors.emplace_back("displacement_case_" + std::to_string(problem.cases()[i].load.id), ev.displacements[i]);
  write_file(cfg.output_dir / (prefix + "inversion.vtk"), write_vtk(mesh, vtk, "weakfind inversion"));
}

}  // namespace detail

/// Strength-field recovery. Exit 4 when the iteration budget ran out first.
inline int cmd_invert(const ProjectConfig& cfg) {
  const Mesh mesh = detail::load_mesh(cfg);
  const auto loads = detail::load_loads(cfg.loads, "loads", mesh);
  const SensorSet sensors = detail::load_sensors(cfg, mesh);
  const MeasurementSet measured = parse_measurements(read_file(detail::require(cfg.measurements, "measurements")));
  StrengthField initial = detail::optional_alpha(cfg.alpha_initial, mesh, cfg.inverse.eps_alpha);
  detail::prepare_output(cfg);
  const StiffnessAssembler as(mesh, cfg.material);
  const InverseProblem problem(as, loads, sensors, measured, cfg.inverse.weights);
  auto snapshot = [&](const IterationReport& r) {
    if (cfg.vtk_stride <= 0 || r.iteration % cfg.vtk_stride != 0) return;
    VtkData vtk;
    vtk.cell_scalars.emplace_back("alpha", r.alpha->alpha);
    write_file(cfg.output_dir / ("alpha_iter_" + std::to_string(r.iteration) + ".vtk"),
               write_vtk(mesh, vtk, "weakfind alpha iteration " + std::to_string(r.iteration)));
  };
  InversionResult res;
  try {
    res = run_inversion(problem, cfg.inverse, snapshot, &initial);
  } catch (const InversionAborted& e) {
    write_file(cfg.output_dir / "aborted_alpha.txt", serialize_alpha(e.state().alpha));
    write_file(cfg.output_dir / "aborted_cost_history.csv", cost_history_csv(e.state().cost_history));
    throw;
  }
  detail::write_inversion_outputs(cfg, problem, res, measured, "");
  if (res.reason == StopReason::line_search_failed)
    warn("line search found no further decrease; returning the last accepted strength field");
  if (!res.converged) {
    warn("inversion did not converge within " + std::to_string(cfg.inverse.max_iters) + " iterations");
    return exit_not_converged;
  }
  return exit_ok;
}

/// Clusters, sensitivity map, sensing code and greedy sensor selection.
inline int cmd_plan_sensors(const ProjectConfig& cfg) {
  const Mesh mesh = detail::load_mesh(cfg);
  const auto loads = detail::load_loads(cfg.loads, "loads", mesh);
  const SensorSet sensors = detail::load_sensors(cfg, mesh);
  if (sensors.size() == 0) throw InputError("candidate sensor file is empty");
  if (cfg.region_placement) cfg.neighbourhood.validate();
  detail::prepare_output(cfg);
  const StiffnessAssembler as(mesh, cfg.material);
  const auto clusters = cluster_elements(mesh, cfg.clusters);
  const auto map = build_sensitivity_map(as, loads, sensors, clusters, cfg.sensitivity);
  const SensingCode code = encode_sensing(map);
  const CoverageInstance inst = coverage_from_code(code, sensors);
  const SelectionResult sel = cfg.region_placement
                                  ? greedy_select_sensors_with_regions(inst, mesh, clusters, sensors, cfg.neighbourhood)
                                  : greedy_select_sensors(inst);

  std::ostringstream cl;
  cl << "cluster,element\n";
  for (const auto& c : clusters)
    for (auto e : c.elements) cl << c.id + 1 << ',' << e + 1 << '\n';
  write_file(cfg.output_dir / "clusters.csv", cl.str());
  write_file(cfg.output_dir / "sensitivity.csv", sensitivity_csv(map));
  {
    std::ofstream bin(cfg.output_dir / "sensing.wsc", std::ios::binary | std::ios::trunc);
    if (!bin) throw InputError("cannot write " + (cfg.output_dir / "sensing.wsc").string());
    code.write(bin);
  }
  std::ostringstream cov;
  for (std::size_t s = 0; s < inst.candidate_count(); ++s) {
    cov << inst.candidate_ids[s] << ':';
    for (auto c : inst.covers[s]) cov << ' ' << c + 1;
    cov << '\n';
  }
  write_file(cfg.output_dir / "sensor_coverage.txt", cov.str());
  write_file(cfg.output_dir / "sensor_selection.csv", selection_report(sel));
  if (sel.picks.empty()) warn("no candidate sensor senses any cluster at the given thresholds; selection is empty");
  return exit_ok;
}

/// Greedy load-case selection by strained volume.
inline int cmd_plan_loads(const ProjectConfig& cfg) {
  const Mesh mesh = detail::load_mesh(cfg);
  const auto& path = cfg.candidate_loads.empty() ? cfg.loads : cfg.candidate_loads;
  const auto loads = detail::load_loads(path, "candidate_loads", mesh);
  detail::prepare_output(cfg);
  const StiffnessAssembler as(mesh, cfg.material);
  const auto sel = greedy_select_loads(as, loads, cfg.s0, cfg.load_coverage_by_count, cfg.inverse.solver);
  write_file(cfg.output_dir / "load_selection.csv", selection_report(sel));
  if (sel.picks.empty()) warn("no candidate load strains any element above s0; selection is empty");
  return exit_ok;
}

}  // namespace weakfind
