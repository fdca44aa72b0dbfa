#pragma once

// Global diagnostics of a surface: total curvature over geodesic balls, the
// isoperimetric deficit of the end, the boundary integral of |B|, and the
// admissibility report that gates every layer computation.

#include <cmath>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "surface.hpp"

namespace qlayer {

namespace detail {

/// Panel edges in geodesic radius on [0, R]: uniform up to 32 length scales,
/// geometric beyond. `refine` doubles the panel density.
inline std::vector<double> radial_panel_edges(double R, double scale, bool refine) {
  std::vector<double> edges{0.0};
  const double near = std::min(R, 32.0 * scale);
  const int n_near = refine ? 128 : 64;
  for (int k = 1; k <= n_near; ++k) edges.push_back(near * k / n_near);
  const double ratio = refine ? 1.1 : 1.21;
  while (edges.back() < R) edges.push_back(std::min(R, edges.back() * ratio));
  return edges;
}

inline GeomSample sample_at_rho(const Surface& s, double rho) { return sample(s, s.r_of_rho(rho), 0.0); }

/// Integral of f(rho) over [0, R] using the radial panel layout.
inline double integrate_radial(const Surface& s, double R, bool refine, const std::function<double(double)>& f) {
  static const GaussRule rule = gauss_legendre(12);
  const auto edges = radial_panel_edges(R, s.length_scale(), refine);
  std::vector<double> parts, x, w;
  for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
    map_rule(rule, edges[p], edges[p + 1], x, w);
    for (std::size_t i = 0; i < x.size(); ++i) parts.push_back(w[i] * f(x[i]));
  }
  return pairwise_sum(parts);
}

}  // namespace detail

/// Points of the geodesic circle of radius R in parameter coordinates, one
/// per ray angle. Radial surfaces give exact parameter circles.
inline std::vector<Vec2> geodesic_circle(const Surface& surface, double R, int n_angles = 256) {
  std::vector<Vec2> pts;
  pts.reserve(n_angles);
  if (surface.is_radial()) {
    const double r = surface.r_of_rho(R);
    for (int k = 0; k < n_angles; ++k) {
      const double th = 2 * pi * k / n_angles;
      pts.emplace_back(r * std::cos(th), r * std::sin(th));
    }
    return pts;
  }
  const auto& field = surface.geodesic_field();
  const auto& box = field.box();
  for (int k = 0; k < n_angles; ++k) {
    const double th = 2 * pi * k / n_angles;
    const double c = std::cos(th), s = std::sin(th);
    double s_max = std::numeric_limits<double>::infinity();
    if (c > 0) s_max = std::min(s_max, box.u_max / c);
    if (c < 0) s_max = std::min(s_max, box.u_min / c);
    if (s > 0) s_max = std::min(s_max, box.v_max / s);
    if (s < 0) s_max = std::min(s_max, box.v_min / s);
    if (field.distance(s_max * c, s_max * s) < R)
      throw CoverageError("geodesic circle of radius " + std::to_string(R) + " leaves the parameter box");
    double lo = 0.0, hi = s_max;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      (field.distance(mid * c, mid * s) < R ? lo : hi) = mid;
    }
    pts.emplace_back(0.5 * (lo + hi) * c, 0.5 * (lo + hi) * s);
  }
  return pts;
}

/// Length of the geodesic circle and the line integral of |B| along it.
struct CircleIntegrals {
  double length = 0.0;
  double normB_integral = 0.0;
};

inline CircleIntegrals circle_integrals(const Surface& surface, double R, int n_angles = 256) {
  CircleIntegrals out;
  if (surface.is_radial()) {
    const GeomSample s = detail::sample_at_rho(surface, R);
    out.length = 2 * pi * surface.r_of_rho(R);
    out.normB_integral = out.length * s.normB;
    return out;
  }
  const auto pts = geodesic_circle(surface, R, n_angles);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const Vec2& a = pts[k];
    const Vec2& b = pts[(k + 1) % pts.size()];
    const Vec2 m = 0.5 * (a + b);
    const GeomSample s = sample(surface, m.x(), m.y());
    const double ds = ((b.x() - a.x()) * s.pu + (b.y() - a.y()) * s.pv).norm();
    out.length += ds;
    out.normB_integral += ds * s.normB;
  }
  return out;
}

struct TotalCurvature {
  double R = 0.0;
  double total_K = 0.0;          // int_{B(R)} K
  double total_abs_K = 0.0;      // int_{B(R)} |K|
  double quadrature_error = 0.0; // working vs half-resolution difference
  double tail_indicator = 0.0;   // int over B(R) \ B(R/2) of |K|
  bool converged = true;
};

/// Integrals of K and |K| over the geodesic ball B(R).
inline TotalCurvature total_curvature(const Surface& surface, double R, double tol = 1e-6) {
  if (!(R > 0)) throw std::invalid_argument("total_curvature: R must be > 0");
  TotalCurvature out;
  out.R = R;
  if (surface.is_radial()) {
    auto k_density = [&](double rho, bool absolute) {
      const double r = surface.r_of_rho(rho);
      const GeomSample s = sample(surface, r, 0.0);
      return 2 * pi * r * (absolute ? std::abs(s.K) : s.K);
    };
    auto run = [&](bool refine, bool absolute) {
      return detail::integrate_radial(surface, R, refine, [&](double x) { return k_density(x, absolute); });
    };
    out.total_K = run(true, false);
    out.total_abs_K = run(true, true);
    out.quadrature_error =
        std::max(std::abs(out.total_K - run(false, false)), std::abs(out.total_abs_K - run(false, true)));
    out.tail_indicator = out.total_abs_K - detail::integrate_radial(surface, 0.5 * R, true,
                                                                    [&](double x) { return k_density(x, true); });
  } else {
    const auto& field = surface.geodesic_field();
    const ParameterBox box = field.box();
    auto run = [&](int panels, double within) {
      static const GaussRule rule = gauss_legendre(4);
      std::vector<double> xs, ws, ys, wy;
      std::vector<double> pk, pa;
      const double du = (box.u_max - box.u_min) / panels, dv = (box.v_max - box.v_min) / panels;
      for (int i = 0; i < panels; ++i) {
        map_rule(rule, box.u_min + i * du, box.u_min + (i + 1) * du, xs, ws);
        for (int j = 0; j < panels; ++j) {
          map_rule(rule, box.v_min + j * dv, box.v_min + (j + 1) * dv, ys, wy);
          for (std::size_t a = 0; a < xs.size(); ++a)
            for (std::size_t b = 0; b < ys.size(); ++b) {
              if (field.distance(xs[a], ys[b]) > within) continue;
              const GeomSample s = sample(surface, xs[a], ys[b]);
              const double dA = ws[a] * wy[b] * std::sqrt(s.g.determinant());
              pk.push_back(dA * s.K);
              pa.push_back(dA * std::abs(s.K));
            }
        }
      }
      return std::pair{pairwise_sum(pk), pairwise_sum(pa)};
    };
    const auto [k1, a1] = run(96, R);
    const auto [k0, a0] = run(48, R);
    const auto [kh, ah] = run(96, 0.5 * R);
    (void)kh;
    out.total_K = k1;
    out.total_abs_K = a1;
    out.quadrature_error = std::max(std::abs(k1 - k0), std::abs(a1 - a0));
    out.tail_indicator = a1 - ah;
  }
  out.converged = out.quadrature_error <= tol * std::max(1.0, out.total_abs_K);
  return out;
}

struct HartmanDeficit {
  double lambda_estimate = 0.0;         // lim Length(dB(r)) / r
  double total_K = 0.0;                 // over the largest ball
  double residual = 0.0;                // |int K - (2 pi chi - lambda)|, chi = 1
  double relative_residual = 0.0;       // residual / 2 pi
  std::vector<double> lambda_sequence;  // extrapolated estimates, one per radius pair
  bool slow_convergence = false;
};

/// Isoperimetric constant of the single end by extrapolating the circumference
/// slope, and the residual of the total-curvature identity with chi = 1.
inline HartmanDeficit hartman_deficit(const Surface& surface, const std::vector<double>& radii, double tol = 1e-2) {
  if (radii.size() < 2) throw std::invalid_argument("hartman_deficit: need at least two radii");
  for (std::size_t i = 1; i < radii.size(); ++i)
    if (!(radii[i] > radii[i - 1])) throw std::invalid_argument("hartman_deficit: radii must increase");
  HartmanDeficit out;
  std::vector<double> lengths;
  for (double r : radii) lengths.push_back(circle_integrals(surface, r).length);
  for (std::size_t i = 1; i < radii.size(); ++i)
    out.lambda_sequence.push_back((lengths[i] - lengths[i - 1]) / (radii[i] - radii[i - 1]));
  out.lambda_estimate = out.lambda_sequence.back();
  if (out.lambda_sequence.size() >= 2) {
    const double prev = out.lambda_sequence[out.lambda_sequence.size() - 2];
    out.slow_convergence = std::abs(out.lambda_estimate - prev) > tol * std::abs(out.lambda_estimate);
  }
  out.total_K = total_curvature(surface, radii.back()).total_K;
  out.residual = std::abs(out.total_K - (2 * pi - out.lambda_estimate));
  out.relative_residual = out.residual / (2 * pi);
  return out;
}

/// Line integral of |B| over the geodesic circle of radius R.
inline double boundary_B_integral(const Surface& surface, double R) {
  if (!(R > 0)) throw std::invalid_argument("boundary_B_integral: R must be > 0");
  return circle_integrals(surface, R).normB_integral;
}

enum class CurvatureSign { nonnegative, mixed };

inline const char* to_string(CurvatureSign s) { return s == CurvatureSign::nonnegative ? "nonnegative" : "mixed"; }

struct AdmissibilityReport {
  double a = 0.0;
  double sup_normB = 0.0;  // C
  double Ca = 0.0;
  double argmax_rho = 0.0;
  double total_K = 0.0;
  double total_abs_K = 0.0;
  double total_curvature_radius = 0.0;
  CurvatureSign K_sign = CurvatureSign::nonnegative;
  double min_K = 0.0;
  bool totally_geodesic = false;
  bool asymptotically_flat = false;
  double flat_radius = 0.0;  // beyond it |B| stays under flat_tolerance * max(C, 1/scale)
  std::optional<double> decay_exponent;  // |B| ~ rho^-alpha; empty: faster than any power
  bool layer_admissible() const { return Ca < 1.0; }
};

/// Raised when C a >= 1: the layer may self-intersect, downstream modules refuse.
class AdmissibilityError : public Error {
 public:
  explicit AdmissibilityError(AdmissibilityReport report)
      : Error(message(report)), report_(std::move(report)) {}
  const AdmissibilityReport& report() const noexcept { return report_; }

 private:
  static std::string message(const AdmissibilityReport& r) {
    std::ostringstream os;
    os << "layer self-intersection risk: C*a = " << r.Ca << " >= 1 (C = " << r.sup_normB << ", a = " << r.a << ")";
    return os.str();
  }
  AdmissibilityReport report_;
};

struct AdmissibilityOptions {
  double flat_tolerance = 1e-3;
  double curvature_sign_tolerance = 1e-12;
};

/// Fills the admissibility report without enforcing C a < 1.
inline AdmissibilityReport assess(const Surface& surface, double a, const AdmissibilityOptions& opt = {}) {
  if (!(a > 0)) throw std::invalid_argument("admissibility: a must be > 0");
  AdmissibilityReport rep;
  rep.a = a;
  const double scale = surface.length_scale();
  std::vector<double> rhos, normB, Ks;
  if (surface.is_radial()) {
    for (int k = 0; k <= 512; ++k) rhos.push_back(32.0 * scale * k / 512.0);
    while (rhos.back() < 1e4 * scale) rhos.push_back(rhos.back() * 1.05);
    for (double rho : rhos) {
      const GeomSample s = detail::sample_at_rho(surface, rho);
      normB.push_back(s.normB);
      Ks.push_back(s.K);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < normB.size(); ++i)
      if (normB[i] > normB[best]) best = i;
    const double lo = best == 0 ? 0.0 : rhos[best - 1];
    const double hi = best + 1 < rhos.size() ? rhos[best + 1] : rhos[best];
    const double at = golden_section_max([&](double x) { return detail::sample_at_rho(surface, x).normB; }, lo, hi);
    rep.argmax_rho = at;
    rep.sup_normB = std::max(normB[best], detail::sample_at_rho(surface, at).normB);
    if (normB[best] >= rep.sup_normB) rep.argmax_rho = rhos[best];
    rep.total_curvature_radius = 1e6 * scale;
  } else {
    const ParameterBox box = surface.domain().value();
    const int n = 201;
    double best = -1.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double u = box.u_min + (box.u_max - box.u_min) * i / (n - 1);
        const double v = box.v_min + (box.v_max - box.v_min) * j / (n - 1);
        const GeomSample s = sample(surface, u, v);
        Ks.push_back(s.K);
        if (s.normB > best) best = s.normB, rep.argmax_rho = geodesic_radius(surface, u, v);
      }
    rep.sup_normB = best;
    // Ring maxima of |B| over geodesic circles stand in for the radial profile.
    const double reach = 0.95 * box.inscribed_radius();
    for (int k = 1; k <= 8; ++k) {
      const double r = reach * k / 8.0;
      const auto pts = geodesic_circle(surface, geodesic_radius(surface, r, 0.0), 64);
      double ring = 0.0;
      for (const auto& p : pts) ring = std::max(ring, sample(surface, p.x(), p.y()).normB);
      rhos.push_back(geodesic_radius(surface, r, 0.0));
      normB.push_back(ring);
    }
    rep.total_curvature_radius = rhos.back();
  }
  rep.Ca = rep.sup_normB * a;
  rep.totally_geodesic = rep.sup_normB <= 1e-12 / scale;
  rep.min_K = *std::min_element(Ks.begin(), Ks.end());
  const double k_floor = opt.curvature_sign_tolerance * std::max(rep.sup_normB * rep.sup_normB, 1e-300);
  rep.K_sign = rep.min_K >= -k_floor ? CurvatureSign::nonnegative : CurvatureSign::mixed;

  const double flat_level = opt.flat_tolerance * std::max(rep.sup_normB, 1.0 / scale);
  std::size_t first_flat = normB.size();
  for (std::size_t i = normB.size(); i-- > 0;) {
    if (normB[i] > flat_level) break;
    first_flat = i;
  }
  rep.asymptotically_flat = first_flat < normB.size();
  rep.flat_radius = rep.asymptotically_flat ? rhos[first_flat] : std::numeric_limits<double>::infinity();
  if (rep.asymptotically_flat && surface.is_radial()) {
    // Tail must be nonincreasing past the flat radius as well.
    for (std::size_t i = first_flat + 1; i < normB.size(); ++i)
      if (normB[i] > normB[i - 1] * (1 + 1e-9) + 1e-300) rep.asymptotically_flat = false;
  }

  std::vector<double> lx, ly;
  const double far_lo = surface.is_radial() ? 100.0 * scale : rhos[rhos.size() / 2];
  for (std::size_t i = 0; i < rhos.size(); ++i)
    if (rhos[i] >= far_lo && normB[i] > 1e-250) {
      lx.push_back(std::log(rhos[i]));
      ly.push_back(std::log(normB[i]));
    }
  if (lx.size() >= 3 && !rep.totally_geodesic) rep.decay_exponent = -fit_line(lx, ly).slope;

  const TotalCurvature tc = total_curvature(surface, rep.total_curvature_radius);
  rep.total_K = tc.total_K;
  rep.total_abs_K = tc.total_abs_K;
  return rep;
}

/// Admissibility gate: throws AdmissibilityError when C a >= 1.
inline AdmissibilityReport admissibility(const Surface& surface, double a, const AdmissibilityOptions& opt = {}) {
  AdmissibilityReport rep = assess(surface, a, opt);
  if (!rep.layer_admissible()) throw AdmissibilityError(rep);
  return rep;
}

/// CSV dump on an n x n parameter grid: header u,v,K,H,normB,nz.
inline void write_surface_samples(std::ostream& os, const Surface& surface, const ParameterBox& box, int n = 41) {
  if (n < 2) throw std::invalid_argument("write_surface_samples: need n >= 2");
  os.precision(12);
  os << "u,v,K,H,normB,nz\n";
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double u = box.u_min + (box.u_max - box.u_min) * i / (n - 1);
      const double v = box.v_min + (box.v_max - box.v_min) * j / (n - 1);
      const GeomSample s = sample(surface, u, v);
      os << u << ',' << v << ',' << s.K << ',' << s.H << ',' << s.normB << ',' << s.normal.z() << '\n';
    }
}

}  // namespace qlayer
