#pragma once

// Response of sensor readings to local weakening: linearized and iterated
// forward deltas, adjoint derivatives, thresholded sensing maps and their
// packed bitset encoding.

#include <Eigen/Dense>

#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "weakfind/common.hpp"
#include "weakfind/fem.hpp"
#include "weakfind/mesh.hpp"
#include "weakfind/sensing.hpp"

namespace weakfind {

struct WeakeningScenario {
  ElementCluster cluster;
  double delta_alpha = -0.5;

  /// Checks that alpha + delta_alpha stays inside [eps, 1] on the cluster.
  void validate(const StrengthField& alpha) const {
    for (auto e : cluster.elements) {
      if (e >= alpha.size()) throw InputError("weakening cluster references element " + std::to_string(e + 1) + " outside the mesh");
      const double a = alpha.alpha[static_cast<Eigen::Index>(e)] + delta_alpha;
      if (a < alpha.eps || a > 1.0)
        throw InputError("weakening of element " + std::to_string(e + 1) + " leaves alpha outside [eps, 1]");
    }
  }
};

/// Delta K * v with Delta K = sum over the cluster of delta_alpha * K_e.
inline Eigen::VectorXd delta_stiffness_apply(const StiffnessAssembler& assembler, const WeakeningScenario& sc,
                                             const Eigen::VectorXd& v) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size());
  for (auto e : sc.cluster.elements) {
    const auto& dofs = assembler.dofs_of(e);
    const Eigen::VectorXd f = sc.delta_alpha * (assembler.element_matrix(e) * element_values(v, dofs));
    for (std::size_t k = 0; k < dofs.size(); ++k) out[static_cast<Eigen::Index>(dofs[k])] += f[static_cast<Eigen::Index>(k)];
  }
  return out;
}

/// K du = -Delta K u (second-order terms dropped).
inline Eigen::VectorXd forward_delta_linear(const GlobalSystem& sys, const Eigen::VectorXd& u, const WeakeningScenario& sc) {
  return sys.solve(-delta_stiffness_apply(sys.assembler(), sc, u));
}

struct IterativeDelta {
  Eigen::VectorXd delta;
  int iterations = 0;
  double last_change = 0.0;  ///< |du^{i+1} - du^i|
};

/// Fixed point K du^{i+1} = -Delta K (u + du^i) from du^0 = 0. Runs at most
/// max_iters steps, stopping early once the change drops to tol. Throws
/// SolverError if the change grows twice in a row above the round-off floor.
inline IterativeDelta forward_delta_iterative(const GlobalSystem& sys, const Eigen::VectorXd& u, const WeakeningScenario& sc,
                                              int max_iters, double tol = 0.0) {
  if (max_iters < 1) throw InputError("iterative delta needs at least one iteration");
  IterativeDelta res;
  res.delta = Eigen::VectorXd::Zero(u.size());
  constexpr double noise_floor = 1e-12;
  double prev_change = -1.0;
  int growth = 0;
  for (int i = 1; i <= max_iters; ++i) {
    Eigen::VectorXd next = sys.solve(-delta_stiffness_apply(sys.assembler(), sc, u + res.delta));
    const double change = (next - res.delta).norm();
    res.delta = std::move(next);
    res.iterations = i;
    res.last_change = change;
    if (change <= tol) break;
    // near round-off the change fluctuates; only growth above it signals divergence
    const bool above_noise = change > noise_floor * res.delta.norm();
    if (above_noise && prev_change >= 0.0 && change > prev_change) {
      if (++growth >= 2)
        throw SolverError("iterative sensitivity diverges (update grew twice in a row at iteration " +
                          std::to_string(i) + "); the weakening is too strong for the fixed point");
    } else {
      growth = 0;
    }
    prev_change = change;
  }
  return res;
}

/// d(reading)/d(alpha_e) for every element, where reading = row . u.
/// One solve K w = -row, then the derivative is w^T K_e u.
inline Eigen::VectorXd adjoint_sensitivity(const GlobalSystem& sys, const Eigen::VectorXd& u, const Eigen::VectorXd& row) {
  const StiffnessAssembler& as = sys.assembler();
  const Eigen::VectorXd w = sys.solve(-row);
  const std::size_t ne = as.mesh().element_count();
  Eigen::VectorXd d(static_cast<Eigen::Index>(ne));
  for (std::size_t e = 0; e < ne; ++e) {
    const auto& dofs = as.dofs_of(e);
    d[static_cast<Eigen::Index>(e)] = element_values(w, dofs).dot(as.element_matrix(e) * element_values(u, dofs));
  }
  return d;
}

// ---------------------------------------------------------------------------

enum class SensitivityMethod { forward, adjoint };

struct SensitivityOptions {
  SensitivityMethod method = SensitivityMethod::forward;
  double delta_alpha = -0.5;
  SolverKind solver = SolverKind::direct;
};

/// Reading deltas of every channel for every (load case, cluster), computed
/// about the pristine structure alpha = 1.
class SensitivityMap {
 public:
  std::vector<int> case_ids;
  std::vector<ElementCluster> clusters;
  SensorSet sensors;
  std::vector<Channel> channels;
  std::vector<Eigen::MatrixXd> deltas;  ///< per case: clusters x channels

  std::size_t cluster_count() const { return clusters.size(); }
  std::size_t sensor_count() const { return sensors.size(); }

  double threshold(std::size_t sensor) const {
    return sensors.sensors[sensor].kind == SensorKind::strain ? sensors.s0 : sensors.u0;
  }

  /// Any declared component of the sensor changes by at least its threshold
  /// (and by a non-zero amount).
  bool sensed(std::size_t case_index, std::size_t cluster, std::size_t sensor) const {
    const double thr = threshold(sensor);
    const auto& m = deltas[case_index];
    for (std::size_t c = 0; c < channels.size(); ++c) {
      if (channels[c].sensor != sensor) continue;
      const double v = std::abs(m(static_cast<Eigen::Index>(cluster), static_cast<Eigen::Index>(c)));
      if (v > 0.0 && v >= thr) return true;
    }
    return false;
  }
};

inline SensitivityMap build_sensitivity_map(const StiffnessAssembler& assembler, const std::vector<LoadCase>& loads,
                                            const SensorSet& sensors, const std::vector<ElementCluster>& clusters,
                                            const SensitivityOptions& opt = {}, SolveCounter* counter = nullptr) {
  const Mesh& mesh = assembler.mesh();
  sensors.validate();
  if (sensors.size() == 0) throw InputError("sensitivity analysis needs at least one sensor");
  std::vector<bool> seen(mesh.element_count(), false);
  for (const auto& c : clusters)
    for (auto e : c.elements) {
      if (e >= seen.size() || seen[e]) throw InputError("clusters must partition the elements");
      seen[e] = true;
    }
  for (bool s : seen)
    if (!s) throw InputError("clusters must partition the elements");
  const StrengthField base = StrengthField::uniform(mesh.element_count(), 1.0);
  for (const auto& c : clusters) WeakeningScenario{c, opt.delta_alpha}.validate(base);

  const ObservationOperator obs(mesh, sensors);
  SensitivityMap map;
  map.clusters = clusters;
  map.sensors = sensors;
  map.channels = obs.channels();
  const GlobalSystem sys(assembler, base, opt.solver, counter);
  const auto nc = clusters.size();
  const auto nch = obs.size();
  const std::size_t full = assembler.dofs().full_size();

  std::vector<Eigen::VectorXd> u(loads.size());
  parallel_for(loads.size(), [&](std::size_t i) { u[i] = solve_forward(sys, loads[i]); });
  for (const auto& lc : loads) map.case_ids.push_back(lc.id);
  map.deltas.assign(loads.size(), Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nc), static_cast<Eigen::Index>(nch)));

  if (opt.method == SensitivityMethod::forward) {
    parallel_for(loads.size() * nc, [&](std::size_t k) {
      const std::size_t i = k / nc, c = k % nc;
      const Eigen::VectorXd du = forward_delta_linear(sys, u[i], {clusters[c], opt.delta_alpha});
      map.deltas[i].row(static_cast<Eigen::Index>(c)) = obs.apply(du).transpose();
    });
  } else {
    parallel_for(loads.size() * nch, [&](std::size_t k) {
      const std::size_t i = k / nch, ch = k % nch;
      const Eigen::VectorXd d = adjoint_sensitivity(sys, u[i], obs.row_vector(ch, full));
      for (std::size_t c = 0; c < nc; ++c) {
        double s = 0.0;
        for (auto e : clusters[c].elements) s += d[static_cast<Eigen::Index>(e)];
        map.deltas[i](static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(ch)) = opt.delta_alpha * s;
      }
    });
  }
  return map;
}

/// CSV rows `case,cluster,sensor,component,delta`; clusters numbered from 1.
inline std::string sensitivity_csv(const SensitivityMap& map) {
  std::ostringstream os;
  os << "case,cluster,sensor,component,delta\n";
  for (std::size_t i = 0; i < map.deltas.size(); ++i)
    for (std::size_t c = 0; c < map.cluster_count(); ++c)
      for (std::size_t ch = 0; ch < map.channels.size(); ++ch)
        os << map.case_ids[i] << ',' << map.clusters[c].id + 1 << ',' << map.sensors.sensors[map.channels[ch].sensor].id
           << ',' << to_string(map.channels[ch].component) << ','
           << format_double(map.deltas[i](static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(ch))) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Sensing code: one bitset over sensors per cluster, packed in 64-bit words.
// Bit i of a cluster's bitset is sensor i (position in the sensor set).

class SensingCode {
 public:
  SensingCode() = default;
  SensingCode(std::size_t clusters, std::size_t sensors)
      : clusters_(clusters), sensors_(sensors), stride_((sensors + 63) / 64), words_(clusters * stride_, 0) {
    if (sensors == 0) throw InputError("sensing code needs at least one sensor");
  }

  std::size_t cluster_count() const { return clusters_; }
  std::size_t sensor_count() const { return sensors_; }
  std::size_t words_per_cluster() const { return stride_; }
  const std::vector<std::uint64_t>& words() const { return words_; }

  std::uint64_t word(std::size_t cluster, std::size_t w) const { return words_[cluster * stride_ + w]; }

  bool test(std::size_t cluster, std::size_t sensor) const {
    check(cluster, sensor);
    return (words_[cluster * stride_ + sensor / 64] >> (sensor % 64)) & 1u;
  }

  void set(std::size_t cluster, std::size_t sensor, bool on = true) {
    check(cluster, sensor);
    auto& w = words_[cluster * stride_ + sensor / 64];
    const std::uint64_t bit = std::uint64_t{1} << (sensor % 64);
    w = on ? (w | bit) : (w & ~bit);
  }

  /// Sensors that sense the cluster, ascending.
  std::vector<std::size_t> sensors_of(std::size_t cluster) const {
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < sensors_; ++s)
      if (test(cluster, s)) out.push_back(s);
    return out;
  }

  bool operator==(const SensingCode&) const = default;

  void write(std::ostream& os) const {
    os.write("WSC1", 4);
    put(os, clusters_);
    put(os, sensors_);
    for (auto w : words_) put(os, w);
  }

  static SensingCode read(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "WSC1") throw InputError("not a sensing code file (bad header)");
    const auto clusters = get(is);
    const auto sensors = get(is);
    if (sensors == 0) throw InputError("sensing code file declares no sensors");
    SensingCode code(clusters, sensors);
    for (auto& w : code.words_) w = get(is);
    if (is.peek() != std::char_traits<char>::eof()) throw InputError("trailing bytes after sensing code");
    return code;
  }

 private:
  void check(std::size_t cluster, std::size_t sensor) const {
    if (cluster >= clusters_ || sensor >= sensors_) throw InputError("sensing code index out of range");
  }

  static void put(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(b, 8);
  }

  static std::uint64_t get(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw InputError("truncated sensing code file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
    return v;
  }

  std::size_t clusters_ = 0;
  std::size_t sensors_ = 0;
  std::size_t stride_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Bit set iff the sensor senses the cluster under at least one load case.
inline SensingCode encode_sensing(const SensitivityMap& map) {
  SensingCode code(map.cluster_count(), map.sensor_count());
  for (std::size_t i = 0; i < map.deltas.size(); ++i)
    for (std::size_t c = 0; c < map.cluster_count(); ++c)
      for (std::size_t s = 0; s < map.sensor_count(); ++s)
        if (map.sensed(i, c, s)) code.set(c, s);
  return code;
}

inline bool decode_sensing(const SensingCode& code, std::size_t cluster, std::size_t sensor) {
  return code.test(cluster, sensor);
}

/// Number of sensors activated by weakening the cluster each element belongs to.
inline std::vector<std::size_t> activated_sensors_per_element(const SensingCode& code,
                                                              const std::vector<ElementCluster>& clusters,
                                                              std::size_t element_count) {
  std::vector<std::size_t> out(element_count, 0);
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    const std::size_t n = code.sensors_of(c).size();
    for (auto e : clusters[c].elements) out[e] = n;
  }
  return out;
}

}  // namespace weakfind
