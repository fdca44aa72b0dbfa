#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "qlayer/layer_metric.hpp"
#include "qlayer/surface_analysis.hpp"

using namespace qlayer;

namespace {

// Parameter radius on the hyperboloid where |B| drops to `target`.
double radius_with_normB(const Surface& s, double target) {
  double lo = 0.0, hi = 1e3;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (sample(s, mid, 0.0).normB > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST(LayerConfig, KappaIsExact) {
  const LayerConfig cfg(0.5);
  EXPECT_DOUBLE_EQ(cfg.kappa(), pi);
  EXPECT_DOUBLE_EQ(cfg.kappa_sq(), pi * pi);
  EXPECT_THROW(LayerConfig(0.0), std::invalid_argument);
  EXPECT_THROW(LayerConfig(-1.0), std::invalid_argument);
}

TEST(LayerMetric, PlaneIsIdentity) {
  const GeomSample s = sample(Surface::plane(), 0.4, 2.0);
  for (double t : {-1.0, 0.0, 0.7}) {
    const LayerMetric m = layer_metric_at(s, t, LayerConfig(1.0));
    EXPECT_NEAR((m.G - Mat3::Identity()).norm(), 0.0, 1e-15);
    EXPECT_EQ(m.J, 1.0);
  }
}

TEST(LayerMetric, PrincipalFrameIsDiagonal) {
  // At the apex of a rotation surface the coordinate frame is principal and orthonormal.
  const Surface s = Surface::hyperboloid(0.8, 2.0);
  const GeomSample g = sample(s, 0.0, 0.0);
  const double t = 0.6;
  const LayerMetric m = layer_metric_at(g, t, LayerConfig(1.0));
  EXPECT_NEAR(m.G(0, 0), std::pow(1 - g.k1 * t, 2), 1e-12);
  EXPECT_NEAR(m.G(1, 1), std::pow(1 - g.k2 * t, 2), 1e-12);
  EXPECT_NEAR(m.G(0, 1), 0.0, 1e-14);
}

TEST(LayerMetric, HyperboloidApexVolumeFactor) {
  const GeomSample g = sample(Surface::hyperboloid(), 0.0, 0.0);
  const LayerMetric m = layer_metric_at(g, 0.3, LayerConfig(0.5));
  EXPECT_NEAR(m.J, 0.49, 1e-14);
  EXPECT_NEAR(std::sqrt(m.G.determinant()), 0.49, 1e-12);
}

TEST(LayerMetric, BlockStructureAndDeterminant) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-4.0, 4.0), T(-1.0, 1.0);
  const std::vector<Surface> surfaces{Surface::hyperboloid(), Surface::gaussian_bump(), Surface::paraboloid_cap(),
                                      make_surface("elliptic_bump", {})};
  for (const Surface& s : surfaces) {
    for (int k = 0; k < 1000; ++k) {
      const GeomSample g = sample(s, U(rng), U(rng));
      const double kmax = std::max(std::abs(g.k1), std::abs(g.k2));
      const LayerConfig cfg(0.45 / std::max(kmax, 0.1));
      const double t = cfg.a() * T(rng);
      const LayerMetric m = layer_metric_at(g, t, cfg);
      EXPECT_EQ(m.G(2, 2), 1.0);
      EXPECT_EQ(m.G(0, 2), 0.0);
      EXPECT_EQ(m.G(1, 2), 0.0);
      const double detG = m.G.determinant(), want = m.J * m.J * g.g.determinant();
      ASSERT_NEAR(detG, want, 1e-10 * want) << s.tag();
      ASSERT_NEAR(m.J, (1 - g.k1 * t) * (1 - g.k2 * t), 1e-12);
      EXPECT_NEAR((m.G_horiz_inv * m.G.topLeftCorner<2, 2>() - Mat2::Identity()).norm(), 0.0, 1e-10);
      EXPECT_GT((m.G.topLeftCorner<2, 2>().determinant()), 0.0);
    }
  }
}

TEST(LayerMetric, FoldThrows) {
  const GeomSample g = sample(Surface::hyperboloid(), 0.0, 0.0);
  EXPECT_THROW(layer_metric_at(g, 1.0, LayerConfig(1.0)), FoldError);
  EXPECT_THROW(layer_metric_at(g, 0.6, LayerConfig(0.5)), std::out_of_range);
}

TEST(LayerMetric, PositivityMatchesCurvatureBound) {
  // J > 0 on [-a, a] iff a max|k_i| < 1.
  const GeomSample g = sample(Surface::gaussian_bump(), 0.0, 0.0);  // k1 = k2 = -2
  EXPECT_NO_THROW(comparison_epsilon(g, LayerConfig(0.49)));
  const LayerConfig wide(0.51);
  EXPECT_THROW(layer_metric_at(g, -0.51, wide), FoldError);
}

TEST(Sandwich, PlaneIsTight) {
  const GeomSample g = sample(Surface::plane(), 1.0, 1.0);
  const SandwichWidth w = comparison_epsilon(g, LayerConfig(1.0));
  EXPECT_EQ(w.epsilon, 0.0);
  EXPECT_NEAR(w.eig_min, 1.0, 1e-15);
  EXPECT_NEAR(w.eig_max, 1.0, 1e-15);
  const VolumeSandwich v = volume_sandwich(g, LayerConfig(1.0));
  EXPECT_EQ(v.lower, 1.0);
  EXPECT_EQ(v.upper, 1.0);
  EXPECT_TRUE(v.holds);
}

TEST(Sandwich, HyperboloidApexIsVacuous) {
  const GeomSample g = sample(Surface::hyperboloid(), 0.0, 0.0);
  const SandwichWidth w = comparison_epsilon(g, LayerConfig(0.5));
  EXPECT_NEAR(w.epsilon, std::sqrt(2.0) + 0.5, 1e-12);
  EXPECT_TRUE(w.vacuous);
  EXPECT_TRUE(volume_sandwich(g, LayerConfig(0.5)).vacuous);
}

TEST(Sandwich, FarFieldPointIsInformative) {
  const Surface s = Surface::hyperboloid();
  const GeomSample g = sample(s, radius_with_normB(s, 0.1), 0.0);
  ASSERT_NEAR(g.normB, 0.1, 1e-10);
  const LayerConfig cfg(0.5);
  const SandwichWidth w = comparison_epsilon(g, cfg);
  EXPECT_NEAR(w.epsilon, 0.1025, 1e-10);
  EXPECT_GE(w.eig_min, 1 - 0.1025);
  EXPECT_LE(w.eig_max, 1 + 0.1025);
  const VolumeSandwich v = volume_sandwich(g, cfg);
  EXPECT_FALSE(v.vacuous);
  EXPECT_TRUE(v.holds);
  EXPECT_NEAR(v.lower, 0.8975 * 0.8975, 1e-12);
  EXPECT_NEAR(v.upper, 1.1025 * 1.1025, 1e-12);
  EXPECT_GE(v.J_min, v.lower);
  EXPECT_LE(v.J_max, v.upper);
}

TEST(Sandwich, RandomSamplesNeverViolate) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> U(-30.0, 30.0), A(0.05, 0.7);
  const std::vector<Surface> surfaces{Surface::hyperboloid(), Surface::gaussian_bump(0.3, 2.0),
                                      Surface::paraboloid_cap()};
  int informative = 0;
  for (int k = 0; k < 1000; ++k) {
    const Surface& s = surfaces[k % surfaces.size()];
    const GeomSample g = sample(s, U(rng), U(rng));
    const LayerConfig cfg(A(rng));
    const SandwichWidth w = comparison_epsilon(g, cfg);  // throws on violation
    if (!w.vacuous) {
      ++informative;
      EXPECT_TRUE(volume_sandwich(g, cfg).holds);
    }
  }
  EXPECT_GT(informative, 500);
}

TEST(MetricDump, Header) {
  std::ostringstream os;
  dump_metric_along_ray(os, Surface::hyperboloid(), LayerConfig(0.5), {0.0, 1.0}, 0.0, 3);
  const std::string text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "r,t,G11,G12,G22,J,density");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 7);
}
