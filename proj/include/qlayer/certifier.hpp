#pragma once

// Variational certificates for sigma_0 < kappa^2. A certificate is a concrete
// field f = phi chi + eps psi chi1 with Q(f, f) + error budget < 0. The
// quadratic in eps is minimized in closed form from three Gram entries.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "layer_metric.hpp"
#include "quadratic_forms.hpp"
#include "surface.hpp"
#include "surface_analysis.hpp"

namespace qlayer {

enum class CutoffKind { parabolic_log, annulus_bump, curve_collar };

inline const char* to_string(CutoffKind k) {
  switch (k) {
    case CutoffKind::parabolic_log: return "parabolic_log";
    case CutoffKind::annulus_bump: return "annulus_bump";
    case CutoffKind::curve_collar: return "curve_collar";
  }
  return "?";
}

/// Radii in geodesic distance: zero on [0, r0] and [r3, inf), one on [r1, r2].
/// r0 = r1 = 0 drops the inner transition (the function is one on the core).
struct CutoffSpec {
  CutoffKind kind = CutoffKind::parabolic_log;
  double r0 = 0.0, r1 = 0.0, r2 = 1.0, r3 = 2.0;
  double collar_width = 0.0;  // curve_collar: width of the decay zone past r2
};

/// A radial cutoff u(rho) with derivative, its kinks, and measured integrals.
struct RadialCutoff {
  CutoffSpec spec;
  std::function<double(double)> value;
  std::function<double(double)> derivative;
  std::vector<double> breakpoints;
  double dirichlet_energy = 0.0;  // int |grad u|^2 dSigma
  double mass = 0.0;              // int u^2 dSigma
  double plateau_area = 0.0;      // Area(B(r2) \ B(r1))
  SurfaceFunction field() const { return radial_function(value, derivative); }
};

namespace detail {

inline double smoothstep(double s) {
  s = std::clamp(s, 0.0, 1.0);
  return s * s * (3 - 2 * s);
}

inline double smoothstep_slope(double s) { return s <= 0 || s >= 1 ? 0.0 : 6 * s * (1 - s); }

/// int_{lo}^{hi} f(rho) 2 pi r(rho) drho on Gauss panels sized like the polar grid.
inline double radial_area_integral(const Surface& s, std::vector<double> bp, const std::function<double(double)>& f) {
  std::sort(bp.begin(), bp.end());
  bp.erase(std::unique(bp.begin(), bp.end()), bp.end());
  static const GaussRule rule = gauss_legendre(12);
  std::vector<double> parts, x, w;
  for (std::size_t k = 0; k + 1 < bp.size(); ++k) {
    std::vector<double> edges{bp[k]};
    while (edges.back() < bp[k + 1]) {
      const double step = 0.1 * std::max(edges.back(), s.length_scale());
      edges.push_back(edges.back() + step >= bp[k + 1] * (1 - 1e-12) ? bp[k + 1] : edges.back() + step);
    }
    for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
      map_rule(rule, edges[p], edges[p + 1], x, w);
      for (std::size_t i = 0; i < x.size(); ++i) parts.push_back(w[i] * f(x[i]) * 2 * pi * s.r_of_rho(x[i]));
    }
  }
  return pairwise_sum(parts);
}

inline void fill_integrals(const Surface& surface, RadialCutoff& c) {
  std::vector<double> bp = c.breakpoints;
  bp.push_back(0.0);
  c.dirichlet_energy = radial_area_integral(surface, bp, [&](double x) { return std::pow(c.derivative(x), 2); });
  c.mass = radial_area_integral(surface, bp, [&](double x) { return std::pow(c.value(x), 2); });
  c.plateau_area = c.spec.r2 > c.spec.r1
                       ? radial_area_integral(surface, {c.spec.r1, c.spec.r2}, [](double) { return 1.0; })
                       : 0.0;
}

inline void check_radii(const CutoffSpec& s, double coverage) {
  const bool core = s.r0 == 0.0 && s.r1 == 0.0;
  if (!(s.r0 >= 0) || !(core || s.r0 < s.r1) || !(s.r1 <= s.r2) || !(s.r2 < s.r3) || !std::isfinite(s.r3))
    throw std::invalid_argument("cutoff radii must be finite with r0 < r1 <= r2 < r3 (or r0 = r1 = 0)");
  if (s.r3 > coverage * (1 + 1e-12))
    throw CoverageError("cutoff outer radius " + std::to_string(s.r3) + " exceeds coverage " + std::to_string(coverage));
}

}  // namespace detail

/// Log-linear cutoff in geodesic radius: log(rho/r0)/log(r1/r0) on [r0, r1],
/// log(r3/rho)/log(r3/r2) on [r2, r3]. On the plane each transition has
/// Dirichlet energy 2 pi / log(ratio).
inline RadialCutoff build_parabolic_cutoff(const CutoffSpec& spec, const Surface& surface,
                                           double coverage = std::numeric_limits<double>::infinity()) {
  surface.require_radial("build_parabolic_cutoff");
  detail::check_radii(spec, coverage);
  RadialCutoff c;
  c.spec = spec;
  c.spec.kind = CutoffKind::parabolic_log;
  const double r0 = spec.r0, r1 = spec.r1, r2 = spec.r2, r3 = spec.r3;
  const bool core = r1 == 0.0;
  const double Lin = core ? 0.0 : std::log(r1 / r0), Lout = std::log(r3 / r2);
  c.value = [=](double x) {
    if (x >= r3) return 0.0;
    if (x > r2) return std::log(r3 / x) / Lout;
    if (core || x >= r1) return 1.0;
    if (x > r0) return std::log(x / r0) / Lin;
    return 0.0;
  };
  c.derivative = [=](double x) {
    if (x >= r3) return 0.0;
    if (x > r2) return -1.0 / (x * Lout);
    if (core || x >= r1) return 0.0;
    if (x > r0) return 1.0 / (x * Lin);
    return 0.0;
  };
  c.breakpoints = core ? std::vector<double>{r2, r3} : std::vector<double>{r0, r1, r2, r3};
  detail::fill_integrals(surface, c);
  return c;
}

/// Smoothstep bump: 0 <= j <= 1, one on [r1, r2], supported in [r0, r3].
/// |grad j| <= 1.5 / (transition width).
inline RadialCutoff build_annulus_bump(const CutoffSpec& spec, const Surface& surface,
                                       double coverage = std::numeric_limits<double>::infinity()) {
  surface.require_radial("build_annulus_bump");
  detail::check_radii(spec, coverage);
  RadialCutoff c;
  c.spec = spec;
  c.spec.kind = CutoffKind::annulus_bump;
  const double r0 = spec.r0, r1 = spec.r1, r2 = spec.r2, r3 = spec.r3;
  const bool core = r1 == 0.0;
  c.value = [=](double x) {
    if (x >= r3) return 0.0;
    if (x > r2) return detail::smoothstep((r3 - x) / (r3 - r2));
    if (core || x >= r1) return 1.0;
    return detail::smoothstep((x - r0) / (r1 - r0));
  };
  c.derivative = [=](double x) {
    if (x >= r3) return 0.0;
    if (x > r2) return -detail::smoothstep_slope((r3 - x) / (r3 - r2)) / (r3 - r2);
    if (core || x >= r1) return 0.0;
    return detail::smoothstep_slope((x - r0) / (r1 - r0)) / (r1 - r0);
  };
  c.breakpoints = core ? std::vector<double>{r2, r3} : std::vector<double>{r0, r1, r2, r3};
  detail::fill_integrals(surface, c);
  return c;
}

/// Collar around the geodesic circle rho = r2: one inside, decreasing to zero
/// at r2 + collar_width (smoothstep of the signed distance over the width),
/// optionally with an inner smoothstep ramp on [r0, r1].
inline RadialCutoff build_curve_collar(const CutoffSpec& spec, const Surface& surface,
                                       double coverage = std::numeric_limits<double>::infinity()) {
  if (!(spec.collar_width > 0)) throw std::invalid_argument("curve collar needs collar_width > 0");
  CutoffSpec s = spec;
  s.r3 = spec.r2 + spec.collar_width;
  RadialCutoff c = build_annulus_bump(s, surface, coverage);
  c.spec.kind = CutoffKind::curve_collar;
  return c;
}

enum class CertificateFamily { nonneg_curvature, general_curve, flat_refusal };
enum class Verdict { certified, not_found, refused };

inline const char* to_string(CertificateFamily f) {
  switch (f) {
    case CertificateFamily::nonneg_curvature: return "nonneg_curvature";
    case CertificateFamily::general_curve: return "general_curve";
    case CertificateFamily::flat_refusal: return "flat_refusal";
  }
  return "?";
}

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::certified: return "certified";
    case Verdict::not_found: return "not_found";
    case Verdict::refused: return "refused";
  }
  return "?";
}

/// One evaluated (R, profile) candidate of the parameter search.
struct CandidateResult {
  std::string profile;     // "literal" or "core"
  double R = 0.0;
  double A = 0.0, b = 0.0, c = 0.0;  // Q(phi chi), Q(phi chi, psi chi1), Q(psi chi1)
  double A_err = 0.0, b_err = 0.0, c_err = 0.0;
  double Q1_cross = 0.0;   // Q1(phi chi, psi chi1); vanishes when psi sits where phi = 1
  double epsilon = 0.0;    // -b / c
  double Q_value = 0.0;    // A - b^2 / c
  double error_budget = 0.0;
  double norm_sq = 0.0;    // |f(eps)|^2
  double rayleigh = 0.0;   // (Q + kappa^2 |f|^2) / |f|^2
  double phi_energy = 0.0;
  double bound_envelope = 0.0;  // 4 a int|grad phi|^2 + 2 a pi^2 int K phi^2
  CutoffSpec phi, psi;
  double margin() const { return Q_value + error_budget; }
  bool certified() const { return margin() < 0; }
};

struct Certificate {
  std::string surface_tag;
  double a = 0.0;
  double kappa_sq = 0.0;
  CertificateFamily family = CertificateFamily::nonneg_curvature;
  Verdict verdict = Verdict::not_found;
  std::string reason;  // why refused / not found; empty when certified
  std::optional<CandidateResult> witness;  // best candidate over the search
  std::vector<CandidateResult> search;     // every candidate evaluated
  // general_curve diagnostics
  std::optional<double> delta2;            // min <gamma, direction> along the curve
  std::optional<double> curve_length;
  std::optional<double> enclosed_area;
  std::optional<double> alignment_integral;  // -int grad(z) . grad(rho~)
  std::optional<double> collar_width;
  double Q_value() const { return witness ? witness->Q_value : 0.0; }
  double error_budget() const { return witness ? witness->error_budget : 0.0; }
};

struct SearchBudget {
  std::vector<double> R_schedule{20, 40, 80, 160};  // in units of the curvature scale 1 / sup|B|
  double outer_log_ratio = 10.0;                    // log(r3 / r2) of the outer transition
  bool include_literal = true;
  PolarGridSpec grid;                               // breakpoints are filled per candidate
};

namespace detail {

/// H(rho) and dH/drho on a radial surface; H is even in rho so the central
/// difference reflects at the axis.
inline std::pair<double, double> mean_curvature_jet(const Surface& s, double rho) {
  const double h = 1e-4 * std::max(rho, s.length_scale());
  const double Hp = sample_at_rho(s, rho + h).H;
  const double Hm = sample_at_rho(s, std::abs(rho - h)).H;
  return {sample_at_rho(s, rho).H, (Hp - Hm) / (2 * h)};
}

inline SurfaceFunction curvature_weighted(const Surface& s, const RadialCutoff& j) {
  return [s, v = j.value, d = j.derivative](const SurfaceNode& n) {
    const double jv = v(n.rho), jd = d(n.rho);
    if (jv == 0.0 && jd == 0.0) return ScalarJet{};
    const auto [H, dH] = mean_curvature_jet(s, n.rho);
    return ScalarJet{n.geom.H * jv, (dH * jv + H * jd) * n.grad_rho};
  };
}

/// Projection of the unit normal on a fixed direction, times a radial cutoff.
inline SurfaceFunction normal_component_weighted(const RadialCutoff& c, const Vec3& dir) {
  return [v = c.value, d = c.derivative, dir](const SurfaceNode& n) {
    const double cv = v(n.rho), cd = d(n.rho);
    if (cv == 0.0 && cd == 0.0) return ScalarJet{};
    const double nd = n.geom.normal.dot(dir);
    const Vec2 grad_nd(n.geom.dnormal_u.dot(dir), n.geom.dnormal_v.dot(dir));
    return ScalarJet{nd * cv, cd * nd * n.grad_rho + cv * grad_nd};
  };
}

struct CandidateFields {
  LayerField base;     // phi chi
  LayerField perturb;  // psi chi1
  RadialCutoff phi, psi;
  std::string profile;
  double R = 0.0;
};

inline CandidateResult evaluate_candidate(const Surface& surface, const LayerConfig& cfg, const CandidateFields& f,
                                          const PolarGridSpec& grid_opts) {
  PolarGridSpec gs = grid_opts;
  gs.breakpoints = {0.0};
  for (const auto* lf : {&f.base, &f.perturb}) gs.breakpoints.insert(gs.breakpoints.end(), lf->breakpoints.begin(), lf->breakpoints.end());
  const QuadratureGrid grid = QuadratureGrid::polar(surface, gs, cfg);
  const LayerField fields[2] = {f.base, f.perturb};
  const GramWithError g = evaluate_gram_with_error(fields, grid);
  CandidateResult r;
  r.profile = f.profile;
  r.R = f.R;
  r.phi = f.phi.spec;
  r.psi = f.psi.spec;
  r.A = g.value.Q(0, 0);
  r.b = g.value.Q(0, 1);
  r.c = g.value.Q(1, 1);
  r.A_err = g.error.Q(0, 0);
  r.b_err = g.error.Q(0, 1);
  r.c_err = g.error.Q(1, 1);
  r.Q1_cross = g.value.Q1(0, 1);
  // The sign of eps follows the computed sign of b.
  if (r.c > r.c_err && std::abs(r.b) > 0) r.epsilon = -r.b / r.c;
  r.Q_value = r.A + 2 * r.epsilon * r.b + r.epsilon * r.epsilon * r.c;
  r.error_budget = r.A_err + 2 * std::abs(r.epsilon) * r.b_err + r.epsilon * r.epsilon * r.c_err;
  r.norm_sq = g.value.M(0, 0) + 2 * r.epsilon * g.value.M(0, 1) + r.epsilon * r.epsilon * g.value.M(1, 1);
  r.rayleigh = (r.Q_value + cfg.kappa_sq() * r.norm_sq) / r.norm_sq;
  r.phi_energy = f.phi.dirichlet_energy;
  double kphi = 0.0;
  {
    std::vector<double> parts;
    for (const auto& n : grid.nodes()) parts.push_back(n.area_weight * n.geom.K * std::pow(f.phi.value(n.rho), 2));
    kphi = pairwise_sum(parts);
  }
  r.bound_envelope = 4 * cfg.a() * r.phi_energy + 2 * cfg.a() * pi * pi * kphi;
  return r;
}

/// Pick the best candidate: smallest margin, ties by smaller R, then smaller |eps|.
inline const CandidateResult* best_of(const std::vector<CandidateResult>& v) {
  const CandidateResult* best = nullptr;
  for (const auto& c : v) {
    if (!best) { best = &c; continue; }
    const double m = c.margin(), mb = best->margin();
    if (m < mb - 1e-15 * std::max(1.0, std::abs(mb)) ||
        (std::abs(m - mb) <= 1e-15 * std::max(1.0, std::abs(mb)) &&
         (c.R < best->R || (c.R == best->R && std::abs(c.epsilon) < std::abs(best->epsilon)))))
      best = &c;
  }
  return best;
}

inline std::optional<std::string> refusal_reason(const AdmissibilityReport& rep) {
  if (rep.totally_geodesic) return "surface is totally geodesic (sup|B| = 0)";
  if (!rep.layer_admissible()) return "C*a = " + std::to_string(rep.Ca) + " >= 1: layer self-intersection risk";
  return std::nullopt;
}

}  // namespace detail

/// Fields of the nonnegative-curvature construction at scale R.
///   literal: phi log cutoff on [R/2, R] and [2R, 2R e^L], psi = j with j one
///            on [17R/12, 19R/12] and supported in [4R/3, 5R/3];
///   core:    phi one on B(2R) with outer log transition to 2R e^L, psi = H j
///            with j one on B(R) and a smoothstep down to zero at 5R/3.
inline detail::CandidateFields nonneg_candidate(const Surface& surface, const LayerConfig& cfg, const std::string& profile,
                                                double R, double outer_log_ratio) {
  detail::CandidateFields f;
  f.profile = profile;
  f.R = R;
  const double r3 = 2 * R * std::exp(outer_log_ratio);
  if (profile == "literal") {
    f.phi = build_parabolic_cutoff({CutoffKind::parabolic_log, R / 2, R, 2 * R, r3}, surface);
    f.psi = build_annulus_bump({CutoffKind::annulus_bump, 4 * R / 3, 17 * R / 12, 19 * R / 12, 5 * R / 3}, surface);
    f.perturb = separable(f.psi.field(), odd_mode(cfg), f.psi.spec.r0, f.psi.spec.r3, f.psi.breakpoints, "j*chi1");
  } else if (profile == "core") {
    f.phi = build_parabolic_cutoff({CutoffKind::parabolic_log, 0.0, 0.0, 2 * R, r3}, surface);
    f.psi = build_annulus_bump({CutoffKind::annulus_bump, 0.0, 0.0, R, 5 * R / 3}, surface);
    f.perturb = separable(detail::curvature_weighted(surface, f.psi), odd_mode(cfg), 0.0, f.psi.spec.r3,
                          f.psi.breakpoints, "H*j*chi1");
  } else {
    throw std::invalid_argument("unknown candidate profile '" + profile + "'");
  }
  f.base = separable(f.phi.field(), ground_mode(cfg), f.phi.spec.r0, f.phi.spec.r3, f.phi.breakpoints, "phi*chi");
  return f;
}

/// Searches R over the schedule; stops at the first R where some candidate
/// certifies.
inline Certificate certify_nonneg_curvature(const Surface& surface, const LayerConfig& cfg,
                                            const SearchBudget& budget = {}) {
  Certificate cert;
  cert.surface_tag = surface.tag();
  cert.a = cfg.a();
  cert.kappa_sq = cfg.kappa_sq();
  cert.family = CertificateFamily::nonneg_curvature;
  if (!surface.is_radial()) {
    cert.verdict = Verdict::refused;
    cert.reason = "the nonnegative-curvature search needs a radially symmetric surface";
    return cert;
  }
  const AdmissibilityReport rep = assess(surface, cfg.a());
  if (auto why = detail::refusal_reason(rep)) {
    cert.verdict = Verdict::refused;
    cert.family = rep.totally_geodesic ? CertificateFamily::flat_refusal : cert.family;
    cert.reason = *why;
    return cert;
  }
  if (rep.K_sign != CurvatureSign::nonnegative) {
    cert.verdict = Verdict::refused;
    cert.reason = "Gauss curvature changes sign (min K = " + std::to_string(rep.min_K) + ")";
    return cert;
  }
  const double scale = 1.0 / rep.sup_normB;
  std::vector<std::string> profiles{"core"};
  if (budget.include_literal) profiles.insert(profiles.begin(), "literal");
  for (double Rs : budget.R_schedule) {
    const double R = Rs * scale;
    std::vector<CandidateResult> round(profiles.size());
    for (std::size_t k = 0; k < profiles.size(); ++k)
      round[k] = detail::evaluate_candidate(surface, cfg, nonneg_candidate(surface, cfg, profiles[k], R, budget.outer_log_ratio),
                                            budget.grid);
    cert.search.insert(cert.search.end(), round.begin(), round.end());
    if (std::any_of(round.begin(), round.end(), [](const CandidateResult& c) { return c.certified(); })) break;
  }
  cert.witness = *detail::best_of(cert.search);
  cert.verdict = cert.witness->certified() ? Verdict::certified : Verdict::not_found;
  if (cert.verdict == Verdict::not_found)
    cert.reason = "no candidate reached Q + error budget < 0 over the R schedule (best margin " +
                  std::to_string(cert.witness->margin()) + ")";
  return cert;
}

struct CurveOptions {
  double curve_param_radius = 50.0;   // the curve is the parameter circle of this radius
  Vec3 direction = Vec3::UnitZ();
  double collar_fraction = 0.05;      // collar width eps1 as a fraction of the curve's geodesic radius
  double outer_log_ratio = 10.0;
  bool include_literal = true;
  PolarGridSpec grid;
};

/// Signed in-surface conormal alignment along a parameter circle of a radial
/// surface: min over angles of <gamma, direction>, gamma the outward unit conormal.
inline double curve_alignment(const Surface& surface, double r, const Vec3& direction, int n = 64) {
  double worst = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    const double th = 2 * pi * k / n;
    const GeomSample s = sample(surface, r * std::cos(th), r * std::sin(th));
    const Vec3 radial = std::cos(th) * s.pu + std::sin(th) * s.pv;
    // Conormal: the tangent direction orthogonal to the circle's tangent.
    const Vec3 tangent = (-std::sin(th) * s.pu + std::cos(th) * s.pv).normalized();
    const Vec3 gamma = (radial - radial.dot(tangent) * tangent).normalized();
    worst = std::min(worst, gamma.dot(direction.normalized()));
  }
  return worst;
}

namespace detail {

inline CandidateFields curve_candidate(const Surface& surface, const LayerConfig& cfg, const std::string& profile,
                                       double rho_c, double eps1, const Vec3& dir, double outer_log_ratio) {
  CandidateFields f;
  f.profile = profile;
  f.R = rho_c;
  if (profile == "literal") {
    // supp phi in B(Rb) \ B(r), phi = 1 on B(Rb/2) \ B(2r); C inside B(Rb/4) \ B(4r).
    const double Rb = 5 * rho_c, r = rho_c / 16;
    f.phi = build_parabolic_cutoff({CutoffKind::parabolic_log, r, 2 * r, Rb / 2, Rb}, surface);
    f.psi = build_curve_collar({CutoffKind::curve_collar, 2 * r, 4 * r, rho_c, 0.0, eps1}, surface);
  } else {
    f.phi = build_parabolic_cutoff({CutoffKind::parabolic_log, 0.0, 0.0, 2 * rho_c, 2 * rho_c * std::exp(outer_log_ratio)},
                                   surface);
    f.psi = build_curve_collar({CutoffKind::curve_collar, 0.0, 0.0, rho_c, 0.0, eps1}, surface);
  }
  f.base = separable(f.phi.field(), ground_mode(cfg), f.phi.spec.r0, f.phi.spec.r3, f.phi.breakpoints, "phi*chi");
  f.perturb = separable(normal_component_weighted(f.psi, dir), odd_mode(cfg), f.psi.spec.r0, f.psi.spec.r3,
                        f.psi.breakpoints, "rho~*n_a*chi1");
  return f;
}

}  // namespace detail

/// -int grad(<p, dir>) . grad(rho~) dSigma for a radial collar cutoff; positive
/// when the conormal of the curve leans toward `dir`.
inline double collar_alignment_integral(const Surface& surface, const RadialCutoff& collar, const Vec3& dir) {
  std::vector<double> bp = collar.breakpoints;
  bp.push_back(0.0);
  const int n_theta = 32;
  return detail::radial_area_integral(surface, bp, [&](double rho) {
    const double d = collar.derivative(rho);
    if (d == 0.0) return 0.0;
    const double r = surface.r_of_rho(rho);
    double acc = 0.0;
    for (int k = 0; k < n_theta; ++k) {
      const double th = 2 * pi * k / n_theta;
      const GeomSample s = sample(surface, r * std::cos(th), r * std::sin(th));
      // d<p, dir>/drho along the unit-speed meridian.
      const Vec3 radial = (std::cos(th) * s.pu + std::sin(th) * s.pv) / surface.meridian_stretch(r);
      acc += radial.dot(dir);
    }
    return -d * acc / n_theta;
  });
}

inline Certificate certify_general_curve(const Surface& surface, const LayerConfig& cfg, const CurveOptions& opt = {}) {
  Certificate cert;
  cert.surface_tag = surface.tag();
  cert.a = cfg.a();
  cert.kappa_sq = cfg.kappa_sq();
  cert.family = CertificateFamily::general_curve;
  if (!surface.is_radial()) {
    cert.verdict = Verdict::refused;
    cert.reason = "the curve construction is implemented for radially symmetric surfaces";
    return cert;
  }
  const AdmissibilityReport rep = assess(surface, cfg.a());
  if (!rep.layer_admissible()) {
    cert.verdict = Verdict::refused;
    cert.reason = *detail::refusal_reason(rep);
    return cert;
  }
  const Vec3 dir = opt.direction.normalized();
  const double rc = opt.curve_param_radius;
  const double rho_c = surface.rho_of_r(rc);
  const double eps1 = opt.collar_fraction * rho_c;
  cert.delta2 = curve_alignment(surface, rc, dir);
  cert.curve_length = 2 * pi * rc;
  cert.enclosed_area = detail::radial_area_integral(surface, {0.0, rho_c}, [](double) { return 1.0; });
  cert.collar_width = eps1;
  // On a totally geodesic surface the cross term vanishes identically; the
  // search runs anyway and reports not_found instead of an alignment failure.
  if (!(*cert.delta2 > 0) && !rep.totally_geodesic)
    throw AlignmentError("curve conormal does not lean toward the direction: min <gamma, a> = " +
                         std::to_string(*cert.delta2));

  std::vector<std::string> profiles{"core"};
  if (opt.include_literal) profiles.insert(profiles.begin(), "literal");
  for (const auto& p : profiles) {
    const auto f = detail::curve_candidate(surface, cfg, p, rho_c, eps1, dir, opt.outer_log_ratio);
    cert.search.push_back(detail::evaluate_candidate(surface, cfg, f, opt.grid));
    if (p == "core") cert.alignment_integral = collar_alignment_integral(surface, f.psi, dir);
  }
  cert.witness = *detail::best_of(cert.search);
  cert.verdict = cert.witness->certified() ? Verdict::certified : Verdict::not_found;
  if (cert.verdict == Verdict::not_found)
    cert.reason = std::abs(cert.witness->b) <= cert.witness->b_err
                      ? "cross term vanishes within quadrature error"
                      : "Q + error budget stays >= 0 (best margin " + std::to_string(cert.witness->margin()) + ")";
  return cert;
}

/// Rebuilds the witness field of a certificate.
inline LayerField witness_field(const Surface& surface, const LayerConfig& cfg, const Certificate& cert,
                                const CurveOptions& curve = {}) {
  if (!cert.witness) throw MissingResultError("certificate has no witness");
  const CandidateResult& w = *cert.witness;
  detail::CandidateFields f;
  if (cert.family == CertificateFamily::general_curve) {
    f = detail::curve_candidate(surface, cfg, w.profile, w.R, *cert.collar_width, curve.direction.normalized(),
                                std::log(w.phi.r3 / w.phi.r2));
  } else {
    f = nonneg_candidate(surface, cfg, w.profile, w.R, std::log(w.phi.r3 / w.phi.r2));
  }
  return combine(f.base, f.perturb, w.epsilon);
}

struct EssProbe {
  double rayleigh_value = 0.0;
  double gap = 0.0;               // rayleigh_value - kappa^2
  double relative_gap = 0.0;
  double kappa_sq = 0.0;
  double energy = 0.0;            // int |grad phi|^2 dSigma
  double mass = 0.0;              // int phi^2 dSigma
  double quadrature_error = 0.0;  // on Q, from the half-resolution grid
  CutoffSpec cutoff;
};

struct EssProbeOptions {
  double energy_budget = 0.5;       // target int |grad phi|^2 on the plane
  double inner_log_ratio = 0.0;     // > 0 overrides the split of the budget for the inner transition
  double outer_log_ratio = 0.0;     // > 0 overrides the split for the outer transition
  double plateau_factor = 0.0;      // > 0 fixes r2 = plateau_factor * r1 instead of growing to target_mass
  PolarGridSpec grid;
};

/// phi chi with phi a log cutoff supported outside B(compact_radius), one on
/// a plateau grown until int phi^2 >= target_mass. Its Rayleigh quotient
/// bounds sigma_ess of the truncated model from above.
inline EssProbe ess_spectrum_probe(const Surface& surface, const LayerConfig& cfg, double compact_radius,
                                   double target_mass, const EssProbeOptions& opt = {}) {
  surface.require_radial("ess_spectrum_probe");
  if (!(compact_radius > 0) || !(opt.energy_budget > 0)) throw std::invalid_argument("ess probe: bad radius or budget");
  const double Lin = opt.inner_log_ratio > 0 ? opt.inner_log_ratio : 4 * pi / opt.energy_budget;
  const double Lout = opt.outer_log_ratio > 0 ? opt.outer_log_ratio : 4 * pi / opt.energy_budget;
  CutoffSpec spec{CutoffKind::parabolic_log, compact_radius, compact_radius * std::exp(Lin), 0.0, 0.0};
  RadialCutoff phi;
  if (opt.plateau_factor > 0) {
    spec.r2 = spec.r1 * opt.plateau_factor;
    spec.r3 = spec.r2 * std::exp(Lout);
    phi = build_parabolic_cutoff(spec, surface);
  } else {
    spec.r2 = spec.r1;
    for (int it = 0; it < 200; ++it) {
      spec.r3 = spec.r2 * std::exp(Lout);
      phi = build_parabolic_cutoff(spec, surface);
      if (phi.mass >= target_mass) break;
      spec.r2 *= 2;
    }
  }
  if (phi.mass < target_mass) throw CoverageError("ess probe: could not reach the target mass");
  PolarGridSpec gs = opt.grid;
  gs.breakpoints = {0.0, spec.r0, spec.r1, spec.r2, spec.r3};
  const QuadratureGrid grid = QuadratureGrid::polar(surface, gs, cfg);
  const LayerField f = separable(phi.field(), ground_mode(cfg), spec.r0, spec.r3, phi.breakpoints, "phi*chi");
  const FormValue fv = eval_forms(f, grid);
  EssProbe out;
  out.kappa_sq = cfg.kappa_sq();
  out.rayleigh_value = (fv.Q + cfg.kappa_sq() * fv.L2_norm_sq) / fv.L2_norm_sq;
  out.gap = out.rayleigh_value - out.kappa_sq;
  out.relative_gap = out.gap / out.kappa_sq;
  out.energy = phi.dirichlet_energy;
  out.mass = phi.mass;
  out.quadrature_error = fv.quadrature_error_estimate;
  out.cutoff = spec;
  return out;
}

struct EssSweep {
  std::vector<EssProbe> probes;
  LinearFit fit;  // gap against cutoff energy
};

/// Varies the inner transition length only, so the energy budget changes
/// while the plateau and outer transition (and hence most of the mass) stay put.
inline EssSweep ess_energy_sweep(const Surface& surface, const LayerConfig& cfg, double compact_radius,
                                 const std::vector<double>& inner_log_ratios, double plateau_radius,
                                 double outer_log_ratio, const PolarGridSpec& grid = {}) {
  EssSweep sweep;
  std::vector<double> e, g;
  for (double L : inner_log_ratios) {
    EssProbeOptions o;
    o.inner_log_ratio = L;
    o.outer_log_ratio = outer_log_ratio;
    o.plateau_factor = plateau_radius / (compact_radius * std::exp(L));
    if (!(o.plateau_factor >= 1)) throw std::invalid_argument("ess sweep: plateau radius inside the inner transition");
    o.grid = grid;
    sweep.probes.push_back(ess_spectrum_probe(surface, cfg, compact_radius, 0.0, o));
    e.push_back(sweep.probes.back().energy);
    g.push_back(sweep.probes.back().gap);
  }
  if (e.size() >= 2) sweep.fit = fit_line(e, g);
  return sweep;
}

}  // namespace qlayer
