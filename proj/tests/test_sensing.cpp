#include <gtest/gtest.h>

#include <random>

#include "support/fixtures.hpp"
#include "weakfind/sensing.hpp"

using namespace weakfind;

namespace {

const MaterialParams steel = fixtures::steel_cgs();

Eigen::VectorXd linear_field(const Mesh& mesh, const Eigen::MatrixXd& g, const Eigen::VectorXd& c) {
  const int d = mesh.dim();
  Eigen::VectorXd u(static_cast<Eigen::Index>(mesh.node_count()) * d);
  for (std::size_t n = 0; n < mesh.node_count(); ++n)
    u.segment(static_cast<Eigen::Index>(n) * d, d) = g * mesh.node(n).head(d) + c;
  return u;
}

std::size_t line_of(const std::string& text) {
  try {
    parse_sensors(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST(SensorFile, ParseSerializeRoundTrip) {
  const std::string text =
      "# gauges\n4 strain 1.5 2 0 exx,gxy\n9 displacement 0.25 0.5 0 ux,uy\n";
  const SensorSet s = parse_sensors(text);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.sensors[0].id, 4);
  EXPECT_EQ(s.sensors[0].kind, SensorKind::strain);
  EXPECT_EQ(s.sensors[0].components, (std::vector<Component>{Component::exx, Component::gxy}));
  EXPECT_EQ(s.sensors[1].position, Vec3(0.25, 0.5, 0));
  const SensorSet again = parse_sensors(serialize_sensors(s));
  EXPECT_EQ(serialize_sensors(again), serialize_sensors(s));
  EXPECT_EQ(s.index_of(9), 1u);
  EXPECT_THROW(s.index_of(5), InputError);
}

TEST(SensorFile, MalformedLinesRejected) {
  EXPECT_EQ(line_of("1 strain 0 0 0\n"), 1u);
  EXPECT_EQ(line_of("1 laser 0 0 0 ux\n"), 1u);
  EXPECT_EQ(line_of("1 strain 0 0 0 ux\n"), 1u);
  EXPECT_EQ(line_of("1 displacement 0 0 0 ux,bogus\n"), 1u);
  EXPECT_EQ(line_of("1 displacement 0 0 0 ux,ux\n"), 1u);
  EXPECT_EQ(line_of("1 displacement 0 0 0 ux\n\n1 displacement 1 0 0 uy\n"), 3u);
}

TEST(SensorResolve, ComponentsMustExistOnTheMesh) {
  const Mesh tri = fixtures::rectangle_tri(2, 2, 1.0, 1.0).build();
  EXPECT_THROW(resolve_sensors(tri, parse_sensors("1 strain 0.5 0.5 0 ezz\n")), InputError);
  EXPECT_THROW(resolve_sensors(tri, parse_sensors("1 displacement 0.5 0.5 0 uz\n")), InputError);
  EXPECT_THROW(resolve_sensors(tri, parse_sensors("1 displacement 1.5 0.5 0 ux\n")), InputError);
  SensorSet neg = parse_sensors("1 displacement 0.5 0.5 0 ux\n");
  neg.u0 = -1.0;
  EXPECT_THROW(resolve_sensors(tri, neg), InputError);
  const auto ok = resolve_sensors(tri, parse_sensors("1 displacement 0.5 0.5 0 ux\n"));
  EXPECT_TRUE(ok.sensors[0].resolved);
}

TEST(Observation, ReproducesLinearFieldsExactly) {
  for (const auto& raw : {fixtures::plate_with_hole(), fixtures::box_tet(3, 2, 2, 3.0, 2.0, 2.0)}) {
    const Mesh mesh = raw.build();
    const int d = mesh.dim();
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> nd;
    SensorSet set;
    const Vec3 lo = mesh.bbox_min(), hi = mesh.bbox_max();
    int id = 1;
    while (set.size() < 40) {
      Vec3 p = lo + (hi - lo).cwiseProduct(Vec3(uni(rng), uni(rng), uni(rng)));
      if (d == 2) p.z() = 0.0;
      if ((p.head(2) - Eigen::Vector2d(30, 15)).norm() < 5.5) continue;  // plate hole
      Sensor s;
      s.id = id++;
      s.position = p;
      if (s.id % 2) {
        s.kind = SensorKind::displacement;
        s.components = d == 2 ? std::vector{Component::ux, Component::uy}
                              : std::vector{Component::ux, Component::uy, Component::uz};
      } else {
        s.kind = SensorKind::strain;
        s.components = d == 2 ? std::vector{Component::gxy, Component::exx}
                              : std::vector{Component::exx, Component::eyy, Component::ezz, Component::gxy,
                                            Component::gyz, Component::gzx};
      }
      set.sensors.push_back(s);
    }
    set = resolve_sensors(mesh, set);
    Eigen::MatrixXd g(d, d);
    for (auto& v : g.reshaped()) v = nd(rng);
    Eigen::VectorXd c(d);
    for (auto& v : c) v = nd(rng);
    const Eigen::VectorXd u = linear_field(mesh, g, c);

    // expected readings straight from the analytic field
    std::vector<double> expected;
    for (const auto& s : set.sensors)
      for (auto comp : s.components) {
        switch (comp) {
          case Component::ux: expected.push_back(g.row(0).dot(s.position.head(d)) + c[0]); break;
          case Component::uy: expected.push_back(g.row(1).dot(s.position.head(d)) + c[1]); break;
          case Component::uz: expected.push_back(g.row(2).dot(s.position.head(d)) + c[2]); break;
          case Component::exx: expected.push_back(g(0, 0)); break;
          case Component::eyy: expected.push_back(g(1, 1)); break;
          case Component::ezz: expected.push_back(g(2, 2)); break;
          case Component::gxy: expected.push_back(g(0, 1) + g(1, 0)); break;
          case Component::gyz: expected.push_back(g(1, 2) + g(2, 1)); break;
          case Component::gzx: expected.push_back(g(2, 0) + g(0, 2)); break;
        }
      }
    const ObservationOperator obs(mesh, set);
    ASSERT_EQ(obs.size(), expected.size());
    const Eigen::VectorXd r1 = obs.apply(u);
    const Eigen::VectorXd r2 = read_sensors(mesh, u, compute_strains(mesh, u), set);
    for (std::size_t i = 0; i < expected.size(); ++i) {
      const double tol = 1e-9 * (1.0 + std::abs(expected[i]));
      EXPECT_NEAR(r1[static_cast<Eigen::Index>(i)], expected[i], tol) << "channel " << i;
      EXPECT_NEAR(r2[static_cast<Eigen::Index>(i)], expected[i], tol) << "channel " << i;
    }
  }
}

TEST(Observation, ScatterIsTheTranspose) {
  const Mesh mesh = fixtures::plate_with_hole().build();
  auto set = resolve_sensors(mesh, fixtures::grid_sensors({10, 20, 50}, {5, 25}, 0.0, SensorKind::strain,
                                                          {Component::exx, Component::eyy, Component::gxy}));
  for (auto& s : set.sensors) s.id += 100;
  auto disp = resolve_sensors(mesh, fixtures::grid_sensors({15, 45}, {2, 28}, 0.0, SensorKind::displacement,
                                                           {Component::uy, Component::ux}));
  set.sensors.insert(set.sensors.end(), disp.sensors.begin(), disp.sensors.end());
  const ObservationOperator obs(mesh, set);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  const auto n = static_cast<Eigen::Index>(mesh.node_count() * 2);
  Eigen::VectorXd u(n), c(static_cast<Eigen::Index>(obs.size()));
  for (auto& v : u) v = nd(rng);
  for (auto& v : c) v = nd(rng);
  const double lhs = c.dot(obs.apply(u));
  const double rhs = obs.scatter(c, static_cast<std::size_t>(n)).dot(u);
  EXPECT_NEAR(lhs, rhs, 1e-12 * (std::abs(lhs) + 1.0));
  for (std::size_t i = 0; i < obs.size(); ++i)
    EXPECT_NEAR(obs.row_vector(i, static_cast<std::size_t>(n)).dot(u), obs.apply_row(i, u), 1e-12);
}

TEST(Observation, UnresolvedSensorsRejected) {
  const Mesh mesh = fixtures::unit_triangle().build();
  const SensorSet s = parse_sensors("1 displacement 0.1 0.1 0 ux\n");
  EXPECT_THROW(ObservationOperator(mesh, s), InputError);
}

TEST(Synthesis, MatchesDirectForwardSolve) {
  const Mesh mesh = fixtures::plate_with_hole().build();
  const StiffnessAssembler as(mesh, steel);
  const auto alpha = fixtures::weakened_patch(mesh, Vec3(45, 8, 0), 4.0, 0.5);
  const std::vector<LoadCase> loads = {fixtures::face_load(mesh, 60.0, Vec3(1e5, 0, 0), 1),
                                       fixtures::face_load(mesh, 60.0, Vec3(0, -1e5, 0), 2)};
  const auto sensors = resolve_sensors(
      mesh, fixtures::grid_sensors({10, 30, 50}, {5, 25}, 0.0, SensorKind::strain,
                                   {Component::exx, Component::eyy, Component::gxy}));
  const MeasurementSet m = synthesize_measurements(as, alpha, loads, sensors);
  EXPECT_EQ(m.provenance, MeasurementSet::Provenance::synthetic);
  EXPECT_EQ(m.values.size(), 2u * 6u * 3u);
  m.validate(loads, sensors);
  const GlobalSystem sys(as, alpha);
  for (const auto& lc : loads) {
    const Eigen::VectorXd u = solve_forward(sys, lc);
    const StrainField s = compute_strains(mesh, u);
    for (const auto& sn : sensors.sensors)
      for (auto c : sn.components) {
        const double ref = s(static_cast<Eigen::Index>(sn.element), strain_index(mesh.kind(), c));
        EXPECT_NEAR(m.values.at({lc.id, sn.id, c}), ref, 1e-12 * std::abs(ref) + 1e-30);
      }
  }
}

TEST(Synthesis, NoiseIsBoundedAndSeeded) {
  const Mesh mesh = fixtures::plate_with_hole().build();
  const StiffnessAssembler as(mesh, steel);
  const auto alpha = StrengthField::uniform(mesh.element_count());
  const std::vector<LoadCase> loads = {fixtures::face_load(mesh, 60.0, Vec3(1e5, 0, 0), 1)};
  const auto sensors = resolve_sensors(mesh, fixtures::dense_displacement_sensors(mesh));
  const auto clean = synthesize_measurements(as, alpha, loads, sensors);
  const auto a = synthesize_measurements(as, alpha, loads, sensors, {0.02, 17});
  const auto b = synthesize_measurements(as, alpha, loads, sensors, {0.02, 17});
  const auto c = synthesize_measurements(as, alpha, loads, sensors, {0.02, 18});
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.values, c.values);
  for (const auto& [key, v] : clean.values) {
    const double noisy = a.values.at(key);
    EXPECT_LE(std::abs(noisy - v), 0.02 * std::abs(v) * (1 + 1e-12));
  }
}

TEST(MeasurementFile, RoundTripAndValidation) {
  const std::string text = "# readings\n1 3 exx 1.25e-7\n1 3 gxy -4e-8\n2 5 ux 0.001\n";
  const MeasurementSet m = parse_measurements(text);
  EXPECT_EQ(m.provenance, MeasurementSet::Provenance::file);
  ASSERT_EQ(m.values.size(), 3u);
  EXPECT_EQ((m.values.at({1, 3, Component::gxy})), -4e-8);
  EXPECT_EQ(parse_measurements(serialize_measurements(m)).values, m.values);

  std::vector<LoadCase> loads(2);
  loads[0].id = 1;
  loads[1].id = 2;
  const SensorSet sensors = parse_sensors("3 strain 0 0 0 exx,gxy\n5 displacement 0 0 0 ux\n");
  m.validate(loads, sensors);
  loads.pop_back();
  EXPECT_THROW(m.validate(loads, sensors), InputError);
  loads.push_back(LoadCase{2, {}});
  EXPECT_THROW(parse_measurements("1 3 eyy 1\n").validate(loads, sensors), InputError);
  EXPECT_THROW(parse_measurements("1 4 exx 1\n").validate(loads, sensors), InputError);
}

TEST(MeasurementFile, MalformedLinesRejected) {
  EXPECT_THROW(parse_measurements("1 3 exx\n"), ParseError);
  EXPECT_THROW(parse_measurements("1 3 foo 1\n"), ParseError);
  EXPECT_THROW(parse_measurements("1 3 exx 1\n1 3 exx 2\n"), ParseError);
  EXPECT_THROW(parse_measurements("1 3 exx abc\n"), ParseError);
}
