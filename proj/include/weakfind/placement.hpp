#pragma once

// Greedy maximum-coverage selection of sensors (plain and region-aware) and
// of load cases.

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "weakfind/common.hpp"
#include "weakfind/fem.hpp"
#include "weakfind/mesh.hpp"
#include "weakfind/sensitivity.hpp"

namespace weakfind {

/// Candidates covering subsets of a universe {0..universe-1}. Item weights
/// default to 1 (counting); candidate ids are used for tie-breaking and reports.
struct CoverageInstance {
  std::size_t universe = 0;
  std::vector<int> candidate_ids;
  std::vector<std::vector<std::size_t>> covers;  ///< per candidate, sorted unique items
  std::vector<double> item_weights;              ///< empty means all 1

  std::size_t candidate_count() const { return covers.size(); }
  double weight(std::size_t item) const { return item_weights.empty() ? 1.0 : item_weights[item]; }

  double total_weight() const {
    double t = 0.0;
    for (std::size_t i = 0; i < universe; ++i) t += weight(i);
    return t;
  }

  void validate() const {
    if (candidate_ids.size() != covers.size()) throw InputError("coverage instance: candidate ids and subsets differ in length");
    if (!item_weights.empty() && item_weights.size() != universe)
      throw InputError("coverage instance: item weights do not match the universe");
    for (double w : item_weights)
      if (!(w > 0.0)) throw InputError("coverage instance: item weights must be positive");
    std::set<int> ids;
    for (std::size_t c = 0; c < covers.size(); ++c) {
      if (!ids.insert(candidate_ids[c]).second) throw InputError("coverage instance: duplicate candidate id");
      for (std::size_t k = 0; k < covers[c].size(); ++k) {
        if (covers[c][k] >= universe) throw InputError("coverage instance: covered item outside the universe");
        if (k > 0 && covers[c][k] <= covers[c][k - 1]) throw InputError("coverage instance: subsets must be sorted and unique");
      }
    }
  }
};

/// Sensor selection instance: universe = clusters, candidate = sensor.
inline CoverageInstance coverage_from_code(const SensingCode& code, const SensorSet& sensors) {
  if (code.sensor_count() != sensors.size()) throw InputError("sensing code does not match the sensor set");
  CoverageInstance inst;
  inst.universe = code.cluster_count();
  inst.covers.resize(sensors.size());
  for (std::size_t s = 0; s < sensors.size(); ++s) inst.candidate_ids.push_back(sensors.sensors[s].id);
  for (std::size_t c = 0; c < code.cluster_count(); ++c)
    for (auto s : code.sensors_of(c)) inst.covers[s].push_back(c);
  return inst;
}

struct SelectionResult {
  std::vector<std::size_t> picks;    ///< candidate indices in pick order
  std::vector<int> pick_ids;         ///< candidate ids in pick order
  std::vector<double> new_coverage;  ///< per pick, weight newly covered
  std::vector<std::size_t> residual; ///< items never covered (or never removed)
  double total = 0.0;                ///< universe weight

  double covered() const {
    double s = 0.0;
    for (double v : new_coverage) s += v;
    return s;
  }
};

namespace detail {

inline std::size_t best_candidate(const CoverageInstance& inst, const std::vector<bool>& remaining,
                                  const std::vector<bool>& picked, double& best_gain) {
  std::size_t best = inst.candidate_count();
  best_gain = 0.0;
  for (std::size_t c = 0; c < inst.candidate_count(); ++c) {
    if (picked[c]) continue;
    double gain = 0.0;
    for (auto item : inst.covers[c])
      if (remaining[item]) gain += inst.weight(item);
    if (gain > best_gain || (gain == best_gain && gain > 0.0 && inst.candidate_ids[c] < inst.candidate_ids[best])) {
      best = c;
      best_gain = gain;
    }
  }
  return best;
}

inline void finish(const CoverageInstance& inst, const std::vector<bool>& remaining, SelectionResult& res) {
  for (std::size_t i = 0; i < inst.universe; ++i)
    if (remaining[i]) res.residual.push_back(i);
  res.total = inst.total_weight();
}

}  // namespace detail

/// Classic greedy: take the candidate covering the most remaining weight,
/// ties to the lowest candidate id; stop when nothing is gained.
inline SelectionResult greedy_select(const CoverageInstance& inst) {
  inst.validate();
  SelectionResult res;
  std::vector<bool> remaining(inst.universe, true), picked(inst.candidate_count(), false);
  for (;;) {
    double gain = 0.0;
    const std::size_t best = detail::best_candidate(inst, remaining, picked, gain);
    if (best == inst.candidate_count()) break;
    picked[best] = true;
    for (auto item : inst.covers[best]) remaining[item] = false;
    res.picks.push_back(best);
    res.pick_ids.push_back(inst.candidate_ids[best]);
    res.new_coverage.push_back(gain);
  }
  detail::finish(inst, remaining, res);
  return res;
}

inline SelectionResult greedy_select_sensors(const CoverageInstance& inst) { return greedy_select(inst); }

// ---------------------------------------------------------------------------
// Region-aware placement: after a pick, only the clusters near the sensor are
// removed, so later sensors can still discriminate the rest.

struct NeighbourhoodPolicy {
  enum class Kind { elements, volume, radius };
  Kind kind = Kind::radius;
  double value = 0.0;  ///< element count, volume or distance

  void validate() const {
    if (!(value > 0.0)) throw InputError("neighbourhood size must be positive");
  }
};

/// Clusters in the neighbourhood of a point: clusters are ordered by the
/// distance of their nearest element centroid to the point, then taken until
/// the element count or volume budget is reached (the cluster that crosses
/// the budget is included); the radius policy takes clusters with an element
/// centroid within the distance. The cluster holding home_element (the
/// element containing x, if known) counts as distance 0.
inline std::vector<std::size_t> clusters_near(const Mesh& mesh, const std::vector<ElementCluster>& clusters, const Vec3& x,
                                              const NeighbourhoodPolicy& policy,
                                              std::optional<std::size_t> home_element = std::nullopt) {
  policy.validate();
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    double d = std::numeric_limits<double>::infinity();
    for (auto e : clusters[c].elements) d = std::min(d, e == home_element ? 0.0 : (mesh.centroid(e) - x).norm());
    order.emplace_back(d, c);
  }
  std::sort(order.begin(), order.end());
  std::vector<std::size_t> out;
  double used = 0.0;
  for (const auto& [d, c] : order) {
    if (policy.kind == NeighbourhoodPolicy::Kind::radius) {
      if (d > policy.value) break;
    } else if (used >= policy.value) {
      break;
    }
    out.push_back(c);
    for (auto e : clusters[c].elements) used += policy.kind == NeighbourhoodPolicy::Kind::volume ? mesh.element(e).volume : 1.0;
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Greedy with local exclusion. neighbourhoods[c] lists the items removed
/// when candidate c is picked; only items the pick also covers are removed.
/// A candidate's score is the weight of remaining items it covers.
inline SelectionResult greedy_select_with_regions(const CoverageInstance& inst,
                                                  const std::vector<std::vector<std::size_t>>& neighbourhoods) {
  inst.validate();
  if (neighbourhoods.size() != inst.candidate_count()) throw InputError("one neighbourhood per candidate is required");
  SelectionResult res;
  std::vector<bool> remaining(inst.universe, true), picked(inst.candidate_count(), false);
  for (;;) {
    double gain = 0.0;
    const std::size_t best = detail::best_candidate(inst, remaining, picked, gain);
    if (best == inst.candidate_count()) break;
    picked[best] = true;
    std::vector<bool> near(inst.universe, false);
    for (auto item : neighbourhoods[best]) {
      if (item >= inst.universe) throw InputError("neighbourhood item outside the universe");
      near[item] = true;
    }
    double removed = 0.0;
    for (auto item : inst.covers[best])
      if (remaining[item] && near[item]) {
        remaining[item] = false;
        removed += inst.weight(item);
      }
    // A pick that removes nothing near itself adds no localized coverage;
    // it is dropped and the search continues with the other candidates.
    if (removed == 0.0) continue;
    res.picks.push_back(best);
    res.pick_ids.push_back(inst.candidate_ids[best]);
    res.new_coverage.push_back(removed);
  }
  detail::finish(inst, remaining, res);
  return res;
}

inline SelectionResult greedy_select_sensors_with_regions(const CoverageInstance& inst, const Mesh& mesh,
                                                          const std::vector<ElementCluster>& clusters,
                                                          const SensorSet& sensors, const NeighbourhoodPolicy& policy) {
  policy.validate();
  if (inst.universe != clusters.size() || inst.candidate_count() != sensors.size())
    throw InputError("coverage instance does not match clusters and sensors");
  std::vector<std::vector<std::size_t>> near(sensors.size());
  for (std::size_t s = 0; s < sensors.size(); ++s)
    near[s] = clusters_near(mesh, clusters, sensors.sensors[s].position, policy,
                            sensors.sensors[s].resolved ? std::optional(sensors.sensors[s].element) : std::nullopt);
  return greedy_select_with_regions(inst, near);
}

// ---------------------------------------------------------------------------
// Load selection

struct LoadCoverage {
  CoverageInstance instance;
  std::vector<Eigen::VectorXd> max_strain;  ///< per candidate, per element max |strain component|
};

/// Element e is covered by a load if any strain component reaches s0 at
/// alpha = 1. Weights are element volumes unless by_count is set.
inline LoadCoverage load_coverage(const StiffnessAssembler& assembler, const std::vector<LoadCase>& candidates, double s0,
                                  bool by_count = false, SolverKind solver = SolverKind::direct) {
  if (!(s0 >= 0.0)) throw InputError("strain threshold s0 must be non-negative");
  const Mesh& mesh = assembler.mesh();
  const GlobalSystem sys(assembler, StrengthField::uniform(mesh.element_count()), solver);
  LoadCoverage out;
  auto& inst = out.instance;
  inst.universe = mesh.element_count();
  inst.covers.resize(candidates.size());
  out.max_strain.resize(candidates.size());
  for (const auto& lc : candidates) inst.candidate_ids.push_back(lc.id);
  if (!by_count) {
    inst.item_weights.resize(mesh.element_count());
    for (std::size_t e = 0; e < mesh.element_count(); ++e) inst.item_weights[e] = mesh.element(e).volume;
  }
  parallel_for(candidates.size(), [&](std::size_t c) {
    const StrainField s = compute_strains(mesh, solve_forward(sys, candidates[c]));
    out.max_strain[c] = s.cwiseAbs().rowwise().maxCoeff();
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
      const double v = out.max_strain[c][static_cast<Eigen::Index>(e)];
      if (v > 0.0 && v >= s0) inst.covers[c].push_back(e);
    }
  });
  return out;
}

inline SelectionResult greedy_select_loads(const StiffnessAssembler& assembler, const std::vector<LoadCase>& candidates,
                                           double s0, bool by_count = false, SolverKind solver = SolverKind::direct) {
  return greedy_select(load_coverage(assembler, candidates, s0, by_count, solver).instance);
}

/// Report table `rank,candidate,new_coverage,cumulative_coverage_fraction`.
inline std::string selection_report(const SelectionResult& res) {
  std::ostringstream os;
  os << "rank,candidate,new_coverage,cumulative_coverage_fraction\n";
  double cum = 0.0;
  for (std::size_t k = 0; k < res.picks.size(); ++k) {
    cum += res.new_coverage[k];
    os << k + 1 << ',' << res.pick_ids[k] << ',' << format_double(res.new_coverage[k]) << ','
       << format_double(res.total > 0.0 ? cum / res.total : 0.0) << '\n';
  }
  return os.str();
}

}  // namespace weakfind
