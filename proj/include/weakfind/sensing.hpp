#pragma once

// Displacement and strain sensors, the interpolation operators that map a
// nodal displacement field to sensor readings, and measurement sets.

#include <Eigen/Dense>

#include <compare>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "weakfind/common.hpp"
#include "weakfind/fem.hpp"
#include "weakfind/mesh.hpp"

namespace weakfind {

enum class SensorKind { displacement, strain };

enum class Component { ux, uy, uz, exx, eyy, ezz, gxy, gyz, gzx };

inline std::string_view to_string(Component c) {
  constexpr std::string_view names[] = {"ux", "uy", "uz", "exx", "eyy", "ezz", "gxy", "gyz", "gzx"};
  return names[static_cast<int>(c)];
}

inline std::optional<Component> parse_component(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(Component::gzx); ++i)
    if (to_string(static_cast<Component>(i)) == s) return static_cast<Component>(i);
  return std::nullopt;
}

inline bool is_strain(Component c) { return static_cast<int>(c) >= static_cast<int>(Component::exx); }

/// Row of the strain vector a strain component occupies on this element kind,
/// or -1 if the component does not exist there (e.g. ezz on plane stress).
inline int strain_index(ElementKind kind, Component c) {
  if (kind == ElementKind::tri3) {
    switch (c) {
      case Component::exx: return 0;
      case Component::eyy: return 1;
      case Component::gxy: return 2;
      default: return -1;
    }
  }
  switch (c) {
    case Component::exx: return 0;
    case Component::eyy: return 1;
    case Component::ezz: return 2;
    case Component::gxy: return 3;
    case Component::gyz: return 4;
    case Component::gzx: return 5;
    default: return -1;
  }
}

struct Sensor {
  int id = 0;
  SensorKind kind = SensorKind::displacement;
  Vec3 position = Vec3::Zero();
  std::vector<Component> components;
  // filled by resolve_sensors
  bool resolved = false;
  std::size_t element = 0;
  std::array<double, 4> weights{};
};

struct SensorSet {
  std::vector<Sensor> sensors;
  double u0 = 0.0;  ///< displacement sensing threshold
  double s0 = 0.0;  ///< strain sensing threshold

  std::size_t size() const { return sensors.size(); }

  void validate() const {
    if (!(u0 >= 0.0) || !(s0 >= 0.0)) throw InputError("sensing thresholds must be non-negative");
    std::set<int> ids;
    for (const auto& s : sensors) {
      if (!ids.insert(s.id).second) throw InputError("duplicate sensor id " + std::to_string(s.id));
      if (s.components.empty()) throw InputError("sensor " + std::to_string(s.id) + " has no components");
      for (auto c : s.components)
        if (is_strain(c) != (s.kind == SensorKind::strain))
          throw InputError("sensor " + std::to_string(s.id) + ": component " + std::string(to_string(c)) +
                           " does not match the sensor kind");
    }
  }

  std::size_t index_of(int id) const {
    for (std::size_t i = 0; i < sensors.size(); ++i)
      if (sensors[i].id == id) return i;
    throw InputError("unknown sensor id " + std::to_string(id));
  }
};

/// Attaches each sensor to its containing element (lowest id on shared
/// boundaries) and stores the barycentric interpolation weights.
inline SensorSet resolve_sensors(const Mesh& mesh, SensorSet sensors) {
  sensors.validate();
  for (auto& s : sensors.sensors) {
    for (auto c : s.components) {
      if (s.kind == SensorKind::strain && strain_index(mesh.kind(), c) < 0)
        throw InputError("sensor " + std::to_string(s.id) + ": strain component " + std::string(to_string(c)) +
                         " does not exist on " + std::string(to_string(mesh.kind())) + " meshes");
      if (c == Component::uz && mesh.dim() == 2)
        throw InputError("sensor " + std::to_string(s.id) + ": uz is not available on tri3 meshes");
    }
    PointLocation loc;
    try {
      loc = locate_point(mesh, s.position);
    } catch (const InputError& e) {
      throw InputError("sensor " + std::to_string(s.id) + ": " + e.what());
    }
    s.element = loc.element;
    s.weights = loc.barycentric;
    s.resolved = true;
  }
  return sensors;
}

// ---------------------------------------------------------------------------
// Observation operator: one sparse row per (sensor, component) channel.
// Displacement rows are rows of I^d, strain rows are rows of I^s D.

struct Channel {
  std::size_t sensor = 0;  ///< index into SensorSet::sensors
  Component component = Component::ux;
  std::vector<std::pair<std::size_t, double>> row;  ///< (full dof, coefficient)
};

class ObservationOperator {
 public:
  ObservationOperator(const Mesh& mesh, const SensorSet& sensors) {
    const auto d = static_cast<std::size_t>(mesh.dim());
    for (std::size_t si = 0; si < sensors.size(); ++si) {
      const auto& s = sensors.sensors[si];
      if (!s.resolved) throw InputError("sensor " + std::to_string(s.id) + " is not resolved against the mesh");
      const auto& el = mesh.element(s.element);
      Eigen::MatrixXd b;
      if (s.kind == SensorKind::strain) b = strain_displacement(mesh, s.element);
      const auto dofs = element_dofs(mesh, s.element);
      for (auto c : s.components) {
        Channel ch{si, c, {}};
        if (s.kind == SensorKind::displacement) {
          const auto axis = static_cast<std::size_t>(c);
          for (std::size_t k = 0; k < el.node_count; ++k)
            if (s.weights[k] != 0.0) ch.row.emplace_back(el.nodes[k] * d + axis, s.weights[k]);
        } else {
          const int r = strain_index(mesh.kind(), c);
          for (std::size_t k = 0; k < dofs.size(); ++k) {
            const double v = b(r, static_cast<Eigen::Index>(k));
            if (v != 0.0) ch.row.emplace_back(dofs[k], v);
          }
        }
        channels_.push_back(std::move(ch));
      }
    }
  }

  const std::vector<Channel>& channels() const { return channels_; }
  std::size_t size() const { return channels_.size(); }

  Eigen::VectorXd apply(const Eigen::VectorXd& u) const {
    Eigen::VectorXd r(static_cast<Eigen::Index>(channels_.size()));
    for (std::size_t i = 0; i < channels_.size(); ++i) r[static_cast<Eigen::Index>(i)] = apply_row(i, u);
    return r;
  }

  double apply_row(std::size_t i, const Eigen::VectorXd& u) const {
    double v = 0.0;
    for (const auto& [dof, c] : channels_[i].row) v += c * u[static_cast<Eigen::Index>(dof)];
    return v;
  }

  /// Transpose action: sum_i coeffs_i * row_i as a full-size vector.
  Eigen::VectorXd scatter(const Eigen::VectorXd& coeffs, std::size_t full_size) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(full_size));
    for (std::size_t i = 0; i < channels_.size(); ++i) {
      const double a = coeffs[static_cast<Eigen::Index>(i)];
      if (a == 0.0) continue;
      for (const auto& [dof, c] : channels_[i].row) out[static_cast<Eigen::Index>(dof)] += a * c;
    }
    return out;
  }

  Eigen::VectorXd row_vector(std::size_t i, std::size_t full_size) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(full_size));
    for (const auto& [dof, c] : channels_[i].row) out[static_cast<Eigen::Index>(dof)] += c;
    return out;
  }

 private:
  std::vector<Channel> channels_;
};

/// Readings per channel (sensor order, then declared component order):
/// barycentric interpolation of u for displacement sensors, the containing
/// element's strain for strain sensors.
inline Eigen::VectorXd read_sensors(const Mesh& mesh, const Eigen::VectorXd& u, const StrainField& strains,
                                    const SensorSet& sensors) {
  std::vector<double> out;
  const auto d = static_cast<std::size_t>(mesh.dim());
  for (const auto& s : sensors.sensors) {
    if (!s.resolved) throw InputError("sensor " + std::to_string(s.id) + " is not resolved against the mesh");
    const auto& el = mesh.element(s.element);
    for (auto c : s.components) {
      if (s.kind == SensorKind::displacement) {
        double v = 0.0;
        for (std::size_t k = 0; k < el.node_count; ++k)
          v += s.weights[k] * u[static_cast<Eigen::Index>(el.nodes[k] * d + static_cast<std::size_t>(c))];
        out.push_back(v);
      } else {
        out.push_back(strains(static_cast<Eigen::Index>(s.element), strain_index(mesh.kind(), c)));
      }
    }
  }
  return Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

// ---------------------------------------------------------------------------
// Measurements

struct ReadingKey {
  int case_id = 0;
  int sensor_id = 0;
  Component component = Component::ux;
  auto operator<=>(const ReadingKey&) const = default;
};

struct MeasurementSet {
  enum class Provenance { synthetic, file };
  std::map<ReadingKey, double> values;
  Provenance provenance = Provenance::file;

  bool empty() const { return values.empty(); }

  /// Every key must reference an existing load case, sensor and declared component.
  void validate(const std::vector<LoadCase>& loads, const SensorSet& sensors) const {
    for (const auto& [key, v] : values) {
      bool case_ok = false;
      for (const auto& lc : loads) case_ok = case_ok || lc.id == key.case_id;
      if (!case_ok) throw InputError("measurement references unknown load case " + std::to_string(key.case_id));
      const auto& s = sensors.sensors[sensors.index_of(key.sensor_id)];
      if (std::find(s.components.begin(), s.components.end(), key.component) == s.components.end())
        throw InputError("measurement references undeclared component " + std::string(to_string(key.component)) +
                         " of sensor " + std::to_string(key.sensor_id));
      if (!std::isfinite(v)) throw InputError("non-finite measurement value");
    }
  }
};

struct NoiseOptions {
  double relative = 0.0;  ///< uniform relative noise amplitude, off by default
  std::uint64_t seed = 0;
};

/// Forward solves with the target strength field and records sensor readings.
inline MeasurementSet synthesize_measurements(const StiffnessAssembler& assembler, const StrengthField& alpha_target,
                                              const std::vector<LoadCase>& loads, const SensorSet& sensors,
                                              const NoiseOptions& noise = {}) {
  const Mesh& mesh = assembler.mesh();
  const GlobalSystem sys(assembler, alpha_target);
  const ObservationOperator obs(mesh, sensors);
  std::vector<Eigen::VectorXd> readings(loads.size());
  parallel_for(loads.size(), [&](std::size_t i) { readings[i] = obs.apply(solve_forward(sys, loads[i])); });
  MeasurementSet m;
  m.provenance = MeasurementSet::Provenance::synthetic;
  std::mt19937_64 rng(noise.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (std::size_t i = 0; i < loads.size(); ++i)
    for (std::size_t c = 0; c < obs.size(); ++c) {
      const auto& ch = obs.channels()[c];
      double v = readings[i][static_cast<Eigen::Index>(c)];
      if (noise.relative > 0.0) v *= 1.0 + noise.relative * uni(rng);
      m.values[{loads[i].id, sensors.sensors[ch.sensor].id, ch.component}] = v;
    }
  return m;
}

// ---------------------------------------------------------------------------
// Sensor file: "id kind x y z components", kind in {displacement, strain},
// components comma separated (ux,uy,uz or exx,eyy,ezz,gxy,gyz,gzx).

inline SensorSet parse_sensors(std::string_view text) {
  LineReader in(text);
  std::vector<std::string_view> tok;
  SensorSet set;
  while (in.next(tok)) {
    if (tok.size() != 6) in.fail("sensor line needs 'id kind x y z components'");
    Sensor s;
    s.id = static_cast<int>(in.integer(tok[0]));
    if (tok[1] == "displacement")
      s.kind = SensorKind::displacement;
    else if (tok[1] == "strain")
      s.kind = SensorKind::strain;
    else
      in.fail("unknown sensor kind '" + std::string(tok[1]) + "'");
    s.position = Vec3(in.number(tok[2]), in.number(tok[3]), in.number(tok[4]));
    for (auto name : split(tok[5], ',')) {
      auto c = parse_component(name);
      if (!c) in.fail("unknown component '" + std::string(name) + "'");
      if (is_strain(*c) != (s.kind == SensorKind::strain))
        in.fail("component '" + std::string(name) + "' does not match sensor kind");
      if (std::find(s.components.begin(), s.components.end(), *c) != s.components.end())
        in.fail("duplicate component '" + std::string(name) + "'");
      s.components.push_back(*c);
    }
    for (const auto& other : set.sensors)
      if (other.id == s.id) in.fail("duplicate sensor id " + std::string(tok[0]));
    set.sensors.push_back(std::move(s));
  }
  return set;
}

inline std::string serialize_sensors(const SensorSet& set) {
  std::ostringstream os;
  for (const auto& s : set.sensors) {
    os << s.id << ' ' << (s.kind == SensorKind::displacement ? "displacement" : "strain") << ' '
       << format_double(s.position.x()) << ' ' << format_double(s.position.y()) << ' ' << format_double(s.position.z())
       << ' ';
    for (std::size_t k = 0; k < s.components.size(); ++k) os << (k ? "," : "") << to_string(s.components[k]);
    os << '\n';
  }
  return os.str();
}

// Measurement file: "case sensor component value".

inline MeasurementSet parse_measurements(std::string_view text) {
  LineReader in(text);
  std::vector<std::string_view> tok;
  MeasurementSet m;
  m.provenance = MeasurementSet::Provenance::file;
  while (in.next(tok)) {
    if (tok.size() != 4) in.fail("measurement line needs 'case sensor component value'");
    ReadingKey key;
    key.case_id = static_cast<int>(in.integer(tok[0]));
    key.sensor_id = static_cast<int>(in.integer(tok[1]));
    auto c = parse_component(tok[2]);
    if (!c) in.fail("unknown component '" + std::string(tok[2]) + "'");
    key.component = *c;
    if (m.values.count(key)) in.fail("duplicate measurement");
    m.values[key] = in.number(tok[3]);
  }
  return m;
}

inline std::string serialize_measurements(const MeasurementSet& m) {
  std::ostringstream os;
  for (const auto& [key, v] : m.values)
    os << key.case_id << ' ' << key.sensor_id << ' ' << to_string(key.component) << ' ' << format_double(v) << '\n';
  return os.str();
}

}  // namespace weakfind
