#include <gtest/gtest.h>

#include <random>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "weakfind/smoothing.hpp"

using namespace weakfind;

namespace {

using V = SmootherConfig::Variant;

std::vector<Mesh> meshes() {
  std::vector<Mesh> out;
  out.push_back(fixtures::plate_with_hole().build());
  out.push_back(fixtures::box_tet(3, 2, 2, 3.0, 2.0, 1.0).build());
  return out;
}

Eigen::VectorXd random_field(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Eigen::VectorXd f(static_cast<Eigen::Index>(n));
  for (auto& v : f) v = nd(rng);
  return f;
}

using oracles::DenseOperators;
using oracles::dense_operators;

}  // namespace

TEST(SmoothingOperators, MatchDenseQuadrature) {
  for (const Mesh& mesh : meshes()) {
    const DenseOperators d = dense_operators(mesh);
    auto close = [](const Eigen::MatrixXd& x, const Eigen::MatrixXd& ref) {
      return (x - ref).cwiseAbs().maxCoeff() <= 1e-12 * ref.cwiseAbs().maxCoeff();
    };
    EXPECT_TRUE(close(Eigen::MatrixXd(consistent_mass(mesh)), d.mc));
    EXPECT_TRUE(close(Eigen::MatrixXd(lumped_mass(mesh)), d.ml));
    EXPECT_TRUE(close(Eigen::MatrixXd(diffusion_matrix(mesh)), d.kd));
    EXPECT_TRUE(close(Eigen::MatrixXd(projection_matrix(mesh)), d.proj));
  }
}

TEST(SmoothingOperators, ZeroRowSums) {
  for (const Mesh& mesh : meshes()) {
    const SparseMatrix diff = SparseMatrix(lumped_mass(mesh)) - consistent_mass(mesh);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(mesh.node_count()));
    const double scale = Eigen::MatrixXd(consistent_mass(mesh)).cwiseAbs().maxCoeff();
    EXPECT_LT((diff * ones).cwiseAbs().maxCoeff(), 1e-13 * scale);
    const SparseMatrix kd = diffusion_matrix(mesh);
    EXPECT_LT((kd * ones).cwiseAbs().maxCoeff(), 1e-12 * Eigen::MatrixXd(kd).cwiseAbs().maxCoeff());
  }
}

TEST(Smoothers, PseudoLaplacianMatchesDenseSolve) {
  for (const Mesh& mesh : meshes()) {
    const DenseOperators d = dense_operators(mesh);
    const Eigen::VectorXd f = random_field(mesh.element_count(), 3);
    for (double lambda : {0.05, 0.5}) {
      const Eigen::VectorXd ref = (d.mc + lambda * (d.ml - d.mc)).ldlt().solve(d.proj * f);
      const Eigen::VectorXd x = smooth_pseudo_laplacian(mesh, f, lambda);
      EXPECT_LT((x - ref).norm(), 1e-10 * ref.norm());
    }
    const Eigen::VectorXd ref = (d.mc + 0.3 * d.kd).ldlt().solve(d.proj * f);
    EXPECT_LT((smooth_h1(mesh, f, 0.3) - ref).norm(), 1e-10 * ref.norm());
  }
}

TEST(Smoothers, ConstantsArePreserved) {
  for (const Mesh& mesh : meshes()) {
    const Eigen::VectorXd c = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(mesh.element_count()), 0.37);
    for (auto v : {V::none, V::simple, V::h1_laplacian, V::pseudo_laplacian}) {
      const Smoother s(mesh, {v, 3, 0.2});
      EXPECT_LT((s.apply(c).array() - 0.37).abs().maxCoeff(), 1e-12) << static_cast<int>(v);
    }
  }
}

TEST(Smoothers, LaplacianVariantsConserveTheIntegral) {
  for (const Mesh& mesh : meshes()) {
    const Eigen::VectorXd f = random_field(mesh.element_count(), 8);
    double integral = 0.0;
    for (std::size_t e = 0; e < mesh.element_count(); ++e) integral += mesh.element(e).volume * f[static_cast<Eigen::Index>(e)];
    const SparseMatrix mc = consistent_mass(mesh);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(mesh.node_count()));
    for (const Eigen::VectorXd& x : {smooth_pseudo_laplacian(mesh, f), smooth_h1(mesh, f, 0.5)})
      EXPECT_NEAR(ones.dot(mc * x), integral, 1e-10 * mesh.total_volume());
  }
}

TEST(Smoothers, SpikeIsStrictlyReduced) {
  for (const Mesh& mesh : meshes()) {
    Eigen::VectorXd spike = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.element_count()));
    const Eigen::Index at = spike.size() / 2;
    spike[at] = 1.0;
    for (auto v : {V::simple, V::h1_laplacian, V::pseudo_laplacian}) {
      const Eigen::VectorXd s = Smoother(mesh, {v, 1, 0.05}).apply(spike);
      EXPECT_LT(s.maxCoeff(), 1.0) << static_cast<int>(v);
      EXPECT_GT(s[at], 0.0);
      // spreads to at least one neighbour
      double neighbour = 0.0;
      for (auto n : mesh.element_neighbors()[static_cast<std::size_t>(at)]) neighbour = std::max(neighbour, s[static_cast<Eigen::Index>(n)]);
      EXPECT_GT(neighbour, 0.0);
    }
  }
}

TEST(Smoothers, SimpleAveragingComposes) {
  for (const Mesh& mesh : meshes()) {
    const Eigen::VectorXd f = random_field(mesh.element_count(), 4);
    const Eigen::VectorXd once = smooth_simple(mesh, f, 1);
    EXPECT_LT((smooth_simple(mesh, f, 2) - smooth_simple(mesh, once, 1)).norm(), 1e-14 * f.norm());
    EXPECT_EQ(Smoother(mesh, {V::none, 1, 0.0}).apply(f), f);
  }
}

TEST(Smoothers, VolumeWeightedPointAverage) {
  // two triangles of areas 1/2 and 1 sharing the edge (1,0)-(0,1)
  fixtures::RawMesh raw;
  raw.kind = ElementKind::tri3;
  raw.nodes = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(2, 2, 0)};
  raw.elements = {{0, 1, 2, 0}, {1, 3, 2, 0}};
  raw.fixed = {{true, true, true}, {false, false, false}, {false, false, false}, {false, false, false}};
  const Mesh mesh = raw.build(1.0);
  ASSERT_NEAR(mesh.element(1).volume, 1.5, 1e-14);
  const Eigen::VectorXd p = element_to_point(mesh, Eigen::Vector2d(1.0, 4.0));
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_DOUBLE_EQ(p[1], (0.5 * 1.0 + 1.5 * 4.0) / 2.0);
  EXPECT_DOUBLE_EQ(p[3], 4.0);
  const Eigen::VectorXd e = point_to_element(mesh, p);
  EXPECT_DOUBLE_EQ(e[0], (p[0] + p[1] + p[2]) / 3.0);
}

TEST(Smoothers, InvalidSettingsRejected) {
  const Mesh mesh = fixtures::unit_tet().build();
  EXPECT_THROW(Smoother(mesh, {V::simple, 0, 0.05}), InputError);
  EXPECT_THROW(Smoother(mesh, {V::h1_laplacian, 1, -1.0}), InputError);
  EXPECT_THROW(smooth_simple(mesh, Eigen::VectorXd::Ones(1), 0), InputError);
  EXPECT_THROW(Smoother(mesh, {V::simple, 1, 0.0}).smooth_points(Eigen::VectorXd::Ones(1)), InputError);
}
