#pragma once

// Fermi-coordinate metric of the layer Sigma x [-a, a] and the pointwise
// comparison between its horizontal block and the surface metric.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <vector>

#include "surface.hpp"

namespace qlayer {

/// Layer half-width a and the transverse threshold kappa = pi / (2a).
class LayerConfig {
 public:
  explicit LayerConfig(double a) : a_(a) {
    if (!(a > 0) || !std::isfinite(a)) throw std::invalid_argument("LayerConfig: half-width a must be > 0");
    kappa_ = pi / (2.0 * a);
  }
  double a() const { return a_; }
  double kappa() const { return kappa_; }
  double kappa_sq() const { return kappa_ * kappa_; }

 private:
  double a_;
  double kappa_;
};

inline constexpr double fold_threshold = 1e-8;

struct LayerMetric {
  Mat3 G;            // Fermi metric; G(2,2) = 1, G(0,2) = G(1,2) = 0
  Mat2 G_horiz_inv;  // inverse of the horizontal 2x2 block
  double J = 1.0;    // (1 - k1 t)(1 - k2 t) = 1 - H t + K t^2
  double density = 1.0;  // sqrt(det G) = J sqrt(det g)
};

/// G_ij = (p + tN)_i . (p + tN)_j assembled directly from the tangent and
/// Weingarten vectors; J from the curvature polynomial.
inline LayerMetric layer_metric_at(const GeomSample& s, double t, const LayerConfig& cfg) {
  if (std::abs(t) > cfg.a() * (1 + 1e-12)) throw std::out_of_range("layer_metric_at: |t| > a");
  const Vec3 e1 = s.pu + t * s.dnormal_u;
  const Vec3 e2 = s.pv + t * s.dnormal_v;
  LayerMetric m;
  m.G.setZero();
  m.G(0, 0) = e1.dot(e1);
  m.G(0, 1) = m.G(1, 0) = e1.dot(e2);
  m.G(1, 1) = e2.dot(e2);
  m.G(2, 2) = 1.0;
  m.J = 1.0 - s.H * t + s.K * t * t;
  // At umbilics J is a square and stays positive past the fold, so test each factor.
  if (std::min(1.0 - s.k1 * t, 1.0 - s.k2 * t) <= fold_threshold) {
    std::ostringstream os;
    os << "layer folds at (u, v, t) = (" << s.u << ", " << s.v << ", " << t << "): J = " << m.J;
    throw FoldError(os.str());
  }
  m.G_horiz_inv = m.G.topLeftCorner<2, 2>().inverse();
  m.density = m.J * std::sqrt(s.g.determinant());
  return m;
}

/// Relative eigenvalues of the horizontal block: spectrum of g^{-1/2} G g^{-1/2}.
inline Vec2 relative_eigenvalues(const GeomSample& s, const LayerMetric& m) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat2> es(m.G.topLeftCorner<2, 2>(), s.g, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

struct SandwichWidth {
  double epsilon = 0.0;  // 2 a |B| + a^2 |B|^2
  double eig_min = 1.0;  // over the t grid
  double eig_max = 1.0;
  bool vacuous = false;  // epsilon >= 1: the lower bound carries no information
};

/// Pointwise sandwich width and the measured relative eigenvalue range over
/// t in [-a, a]. Throws ConsistencyError if a measured eigenvalue escapes
/// [1 - eps, 1 + eps].
inline SandwichWidth comparison_epsilon(const GeomSample& s, const LayerConfig& cfg, int n_t = 33) {
  const double a = cfg.a();
  SandwichWidth w;
  w.epsilon = 2 * a * s.normB + a * a * s.normB * s.normB;
  w.vacuous = w.epsilon >= 1.0;
  w.eig_min = std::numeric_limits<double>::infinity();
  w.eig_max = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < n_t; ++k) {
    const double t = -a + 2 * a * k / (n_t - 1);
    // Fold points are skipped: the sandwich is only meaningful where J > 0.
    if (std::min(1.0 - s.k1 * t, 1.0 - s.k2 * t) <= fold_threshold) continue;
    const Vec2 ev = relative_eigenvalues(s, layer_metric_at(s, t, cfg));
    w.eig_min = std::min(w.eig_min, ev.minCoeff());
    w.eig_max = std::max(w.eig_max, ev.maxCoeff());
  }
  const double slack = 1e-12 * (1 + w.epsilon);
  if (w.eig_max > 1 + w.epsilon + slack || (!w.vacuous && w.eig_min < 1 - w.epsilon - slack)) {
    std::ostringstream os;
    os << "metric sandwich violated at (" << s.u << ", " << s.v << "): eigenvalues [" << w.eig_min << ", "
       << w.eig_max << "] vs eps = " << w.epsilon;
    throw ConsistencyError(os.str());
  }
  return w;
}

struct VolumeSandwich {
  double lower = 1.0;  // (1 - eps)^2
  double upper = 1.0;  // (1 + eps)^2
  double J_min = 1.0;
  double J_max = 1.0;
  bool vacuous = false;
  bool holds = true;   // J within [lower, upper] on the t grid (upper only when vacuous)
};

inline VolumeSandwich volume_sandwich(const GeomSample& s, const LayerConfig& cfg, int n_t = 33) {
  const double a = cfg.a();
  const double eps = 2 * a * s.normB + a * a * s.normB * s.normB;
  VolumeSandwich v;
  v.vacuous = eps >= 1.0;
  v.lower = (1 - eps) * (1 - eps);
  v.upper = (1 + eps) * (1 + eps);
  v.J_min = std::numeric_limits<double>::infinity();
  v.J_max = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < n_t; ++k) {
    const double t = -a + 2 * a * k / (n_t - 1);
    const double J = 1.0 - s.H * t + s.K * t * t;
    v.J_min = std::min(v.J_min, J);
    v.J_max = std::max(v.J_max, J);
  }
  const double slack = 1e-12;
  v.holds = v.J_max <= v.upper + slack && (v.vacuous || v.J_min >= v.lower - slack);
  return v;
}

/// Debug dump of G along the ray at angle theta: columns r,t,G11,G12,G22,J,density.
inline void dump_metric_along_ray(std::ostream& os, const Surface& surface, const LayerConfig& cfg,
                                  const std::vector<double>& param_radii, double theta = 0.0, int n_t = 5) {
  os << "r,t,G11,G12,G22,J,density\n";
  for (double r : param_radii) {
    const GeomSample s = sample(surface, r * std::cos(theta), r * std::sin(theta));
    for (int k = 0; k < n_t; ++k) {
      const double t = n_t == 1 ? 0.0 : -cfg.a() + 2 * cfg.a() * k / (n_t - 1);
      const LayerMetric m = layer_metric_at(s, t, cfg);
      os << r << ',' << t << ',' << m.G(0, 0) << ',' << m.G(0, 1) << ',' << m.G(1, 1) << ',' << m.J << ','
         << m.density << '\n';
    }
  }
}

}  // namespace qlayer
