#pragma once

// Quadratic forms of separable test fields on the layer, evaluated by tensor
// quadrature over Sigma x [-a, a]:
//   Q1(f, h) = int G^{ij} d_i f d_j h dOmega
//   Q2(f, h) = int (d_t f d_t h - kappa^2 f h) dOmega
//   Q        = Q1 + Q2, accumulated from its own integrand
// with dOmega = J dSigma dt.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "layer_metric.hpp"
#include "surface.hpp"
#include "surface_analysis.hpp"

namespace qlayer {

/// Value and parameter-coordinate gradient of a scalar field on Sigma.
struct ScalarJet {
  double value = 0.0;
  Vec2 grad = Vec2::Zero();
};

/// A quadrature node on Sigma with everything a surface field may depend on.
struct SurfaceNode {
  double rho = 0.0;            // geodesic radius from the basepoint
  Vec2 grad_rho = Vec2::Zero();
  double area_weight = 0.0;    // dSigma weight
  GeomSample geom;
};

using SurfaceFunction = std::function<ScalarJet(const SurfaceNode&)>;

/// Smooth function of t with its derivative, in closed form.
struct TransverseProfile {
  std::string name;
  std::function<double(double)> value;
  std::function<double(double)> derivative;
};

/// chi(t) = cos(kappa t), the transverse ground mode.
inline TransverseProfile ground_mode(const LayerConfig& cfg) {
  const double k = cfg.kappa();
  return {"chi", [k](double t) { return std::cos(k * t); }, [k](double t) { return -k * std::sin(k * t); }};
}

/// chi1(t) = t cos(kappa t), the odd perturbation profile.
inline TransverseProfile odd_mode(const LayerConfig& cfg) {
  const double k = cfg.kappa();
  return {"chi1", [k](double t) { return t * std::cos(k * t); },
          [k](double t) { return std::cos(k * t) - k * t * std::sin(k * t); }};
}

/// sin(n kappa t) for even n, cos(n kappa t) for odd n: the n-th Dirichlet mode.
inline TransverseProfile dirichlet_mode(const LayerConfig& cfg, int n) {
  const double k = n * cfg.kappa();
  if (n % 2 == 0)
    return {"mode" + std::to_string(n), [k](double t) { return std::sin(k * t); },
            [k](double t) { return k * std::cos(k * t); }};
  return {"mode" + std::to_string(n), [k](double t) { return std::cos(k * t); },
          [k](double t) { return -k * std::sin(k * t); }};
}

struct SeparableTerm {
  SurfaceFunction surface;
  TransverseProfile transverse;
};

/// Sum of separable terms u(x) tau(t). Every term's surface part is supported
/// in the geodesic annulus [support_inner, support_outer]; `breakpoints` lists
/// geodesic radii where a surface part is only piecewise smooth.
struct LayerField {
  std::vector<SeparableTerm> terms;
  double support_inner = 0.0;
  double support_outer = std::numeric_limits<double>::infinity();
  std::vector<double> breakpoints;
  std::string label;

  /// Throws DirichletViolation if some transverse profile is nonzero at t = +-a.
  void check_dirichlet(const LayerConfig& cfg) const {
    for (const auto& term : terms) {
      const double scale = std::max({std::abs(term.transverse.value(0.0)), std::abs(term.transverse.value(0.5 * cfg.a())),
                                     std::abs(term.transverse.value(-0.5 * cfg.a())), 1e-300});
      for (double edge : {-cfg.a(), cfg.a()})
        if (std::abs(term.transverse.value(edge)) > 1e-12 * std::max(scale, 1.0))
          throw DirichletViolation("field '" + label + "': profile '" + term.transverse.name +
                                   "' does not vanish at t = " + std::to_string(edge));
    }
  }
};

/// Radial surface function u(rho) with derivative du/drho.
inline SurfaceFunction radial_function(std::function<double(double)> value, std::function<double(double)> derivative) {
  return [value = std::move(value), derivative = std::move(derivative)](const SurfaceNode& n) {
    return ScalarJet{value(n.rho), derivative(n.rho) * n.grad_rho};
  };
}

inline LayerField separable(SurfaceFunction u, TransverseProfile tau, double inner, double outer,
                            std::vector<double> breakpoints = {}, std::string label = {}) {
  LayerField f;
  f.terms.push_back({std::move(u), std::move(tau)});
  f.support_inner = inner;
  f.support_outer = outer;
  f.breakpoints = std::move(breakpoints);
  f.label = std::move(label);
  return f;
}

/// f + scale * h (supports merged).
inline LayerField combine(const LayerField& f, const LayerField& h, double scale) {
  LayerField out = f;
  for (const auto& term : h.terms) {
    auto u = term.surface;
    out.terms.push_back({[u, scale](const SurfaceNode& n) {
                           ScalarJet j = u(n);
                           j.value *= scale;
                           j.grad *= scale;
                           return j;
                         },
                         term.transverse});
  }
  out.support_inner = std::min(f.support_inner, h.support_inner);
  out.support_outer = std::max(f.support_outer, h.support_outer);
  out.breakpoints.insert(out.breakpoints.end(), h.breakpoints.begin(), h.breakpoints.end());
  out.label = f.label + "+eps*" + h.label;
  return out;
}

/// Polar grid for radial surfaces: Gauss panels in geodesic radius between
/// breakpoints (panel width ~ relative_width * max(rho, length scale), at
/// least min_panels per interval), trapezoid in angle.
struct PolarGridSpec {
  std::vector<double> breakpoints;  // geodesic radii; first and last bound the coverage
  double relative_width = 0.25;
  int min_panels = 4;
  int gauss_order = 8;
  int n_theta = 1;
  int t_order = 16;
};

/// Tensor Gauss grid over a parameter box (any surface).
struct TensorGridSpec {
  ParameterBox box;
  int panels_u = 32, panels_v = 32;
  int gauss_order = 4;
  int t_order = 16;
};

class QuadratureGrid {
 public:
  static QuadratureGrid polar(const Surface& surface, const PolarGridSpec& spec, const LayerConfig& cfg) {
    if (!surface.is_radial()) throw std::invalid_argument("polar quadrature grid needs a radial surface");
    std::vector<double> bp = spec.breakpoints;
    std::sort(bp.begin(), bp.end());
    bp.erase(std::unique(bp.begin(), bp.end()), bp.end());
    if (bp.size() < 2 || bp.front() < 0) throw std::invalid_argument("polar grid: need >= 2 nonnegative breakpoints");
    QuadratureGrid grid(surface, cfg, spec.t_order);
    grid.polar_spec_ = spec;
    grid.kind_ = "polar";
    grid.coverage_inner_ = bp.front();
    grid.coverage_outer_ = bp.back();
    const GaussRule rule = gauss_legendre(spec.gauss_order);
    const double scale = surface.length_scale();
    std::vector<double> x, w;
    for (std::size_t k = 0; k + 1 < bp.size(); ++k) {
      const double lo = bp[k], hi = bp[k + 1];
      std::vector<double> edges{lo};
      while (edges.back() < hi) {
        const double step = spec.relative_width * std::max(edges.back(), scale);
        edges.push_back(edges.back() + step >= hi * (1 - 1e-12) ? hi : edges.back() + step);
      }
      if (static_cast<int>(edges.size()) - 1 < spec.min_panels) {
        edges.clear();
        for (int p = 0; p <= spec.min_panels; ++p) edges.push_back(lo + (hi - lo) * p / spec.min_panels);
      }
      for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
        map_rule(rule, edges[p], edges[p + 1], x, w);
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double rho = x[i];
          const double r = surface.r_of_rho(rho);
          const double stretch = surface.meridian_stretch(r);
          for (int j = 0; j < spec.n_theta; ++j) {
            const double th = 2 * pi * j / spec.n_theta;
            SurfaceNode node;
            node.rho = rho;
            node.grad_rho = stretch * Vec2(std::cos(th), std::sin(th));
            node.area_weight = w[i] * r * (2 * pi / spec.n_theta);
            node.geom = sample(surface, r * std::cos(th), r * std::sin(th));
            grid.nodes_.push_back(std::move(node));
          }
        }
      }
    }
    return grid;
  }

  static QuadratureGrid tensor(const Surface& surface, const TensorGridSpec& spec, const LayerConfig& cfg) {
    QuadratureGrid grid(surface, cfg, spec.t_order);
    grid.tensor_spec_ = spec;
    grid.kind_ = "tensor";
    const GaussRule rule = gauss_legendre(spec.gauss_order);
    const ParameterBox& b = spec.box;
    const double du = (b.u_max - b.u_min) / spec.panels_u, dv = (b.v_max - b.v_min) / spec.panels_v;
    std::vector<double> xu, wu, xv, wv;
    for (int i = 0; i < spec.panels_u; ++i) {
      map_rule(rule, b.u_min + i * du, b.u_min + (i + 1) * du, xu, wu);
      for (int j = 0; j < spec.panels_v; ++j) {
        map_rule(rule, b.v_min + j * dv, b.v_min + (j + 1) * dv, xv, wv);
        for (std::size_t a = 0; a < xu.size(); ++a)
          for (std::size_t c = 0; c < xv.size(); ++c) {
            SurfaceNode node;
            node.geom = sample(surface, xu[a], xv[c]);
            node.area_weight = wu[a] * wv[c] * std::sqrt(node.geom.g.determinant());
            node.rho = geodesic_radius(surface, xu[a], xv[c]);
            if (surface.is_radial()) {
              const double r = std::hypot(xu[a], xv[c]);
              node.grad_rho = r > 0 ? Vec2(surface.meridian_stretch(r) * Vec2(xu[a], xv[c]) / r) : Vec2::Zero();
            } else {
              node.grad_rho = surface.geodesic_field().gradient(xu[a], xv[c]);
            }
            grid.nodes_.push_back(std::move(node));
          }
      }
    }
    // Coverage: largest geodesic disc inside the box, estimated on its boundary.
    double reach = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 256; ++k) {
      const double s = static_cast<double>(k) / 256;
      for (const auto& [u, v] : {std::pair{b.u_min + s * (b.u_max - b.u_min), b.v_min},
                                 std::pair{b.u_min + s * (b.u_max - b.u_min), b.v_max},
                                 std::pair{b.u_min, b.v_min + s * (b.v_max - b.v_min)},
                                 std::pair{b.u_max, b.v_min + s * (b.v_max - b.v_min)}})
        reach = std::min(reach, geodesic_radius(surface, u, v));
    }
    grid.coverage_inner_ = 0.0;
    grid.coverage_outer_ = b.contains(0.0, 0.0) ? reach : 0.0;
    return grid;
  }

  /// Reference t order: three quarters of the working order. Halving it would
  /// let the error of the cos(2 kappa t) moment, amplified by the far-field
  /// mass, swamp the surface quadrature error being estimated.
  static int coarse_t_order(int n) { return std::max(2, (3 * n) / 4); }

  /// Same layout at half resolution on the surface (the error reference).
  QuadratureGrid coarsened() const {
    if (polar_spec_) {
      PolarGridSpec s = *polar_spec_;
      s.relative_width *= 2;
      s.min_panels = std::max(1, s.min_panels / 2);
      s.n_theta = std::max(1, s.n_theta / 2);
      s.t_order = coarse_t_order(s.t_order);
      return polar(surface_, s, cfg_);
    }
    TensorGridSpec s = *tensor_spec_;
    s.panels_u = std::max(1, s.panels_u / 2);
    s.panels_v = std::max(1, s.panels_v / 2);
    s.t_order = coarse_t_order(s.t_order);
    return tensor(surface_, s, cfg_);
  }

  /// Same layout at double resolution.
  QuadratureGrid refined() const {
    if (polar_spec_) {
      PolarGridSpec s = *polar_spec_;
      s.relative_width *= 0.5;
      s.min_panels *= 2;
      s.n_theta = s.n_theta == 1 ? 1 : 2 * s.n_theta;
      s.t_order *= 2;
      return polar(surface_, s, cfg_);
    }
    TensorGridSpec s = *tensor_spec_;
    s.panels_u *= 2;
    s.panels_v *= 2;
    s.t_order *= 2;
    return tensor(surface_, s, cfg_);
  }

  const std::vector<SurfaceNode>& nodes() const { return nodes_; }
  const std::vector<double>& t_nodes() const { return t_nodes_; }
  const std::vector<double>& t_weights() const { return t_weights_; }
  double coverage_inner() const { return coverage_inner_; }
  double coverage_outer() const { return coverage_outer_; }
  const std::string& kind() const { return kind_; }
  const Surface& surface() const { return surface_; }
  const LayerConfig& layer() const { return cfg_; }

 private:
  QuadratureGrid(const Surface& surface, const LayerConfig& cfg, int t_order) : surface_(surface), cfg_(cfg) {
    map_rule(gauss_legendre(t_order), -cfg.a(), cfg.a(), t_nodes_, t_weights_);
  }

  Surface surface_;
  LayerConfig cfg_;
  std::optional<PolarGridSpec> polar_spec_;
  std::optional<TensorGridSpec> tensor_spec_;
  std::string kind_;
  std::vector<SurfaceNode> nodes_;
  std::vector<double> t_nodes_, t_weights_;
  double coverage_inner_ = 0.0, coverage_outer_ = 0.0;
};

/// Gram matrices of a family of fields: entry (p, q) is the bilinear form of
/// fields p and q. Q is accumulated from the full integrand, not as Q1 + Q2.
struct FormGram {
  Eigen::MatrixXd Q1, Q2, Q, M;
  // Sum of |w G df dh| + |w f_t h_t| + kappa^2 |w f h|: scale of the cancellation in Q.
  Eigen::MatrixXd magnitude;
};

namespace detail {

inline void check_coverage(const LayerField& f, const QuadratureGrid& grid) {
  const double tol = 1e-9 * std::max(1.0, grid.coverage_outer());
  if (f.support_outer > grid.coverage_outer() + tol || f.support_inner < grid.coverage_inner() - tol)
    throw CoverageError("field '" + f.label + "' support [" + std::to_string(f.support_inner) + ", " +
                        std::to_string(f.support_outer) + "] escapes grid coverage [" +
                        std::to_string(grid.coverage_inner()) + ", " + std::to_string(grid.coverage_outer()) + "]");
}

}  // namespace detail

inline FormGram evaluate_gram(std::span<const LayerField> fields, const QuadratureGrid& grid) {
  const LayerConfig& cfg = grid.layer();
  const std::size_t nf = fields.size();
  for (const auto& f : fields) {
    f.check_dirichlet(cfg);
    detail::check_coverage(f, grid);
  }
  const auto& nodes = grid.nodes();
  const auto& tn = grid.t_nodes();
  const auto& tw = grid.t_weights();
  const std::size_t nt = tn.size();
  const double k2 = cfg.kappa_sq();
  const std::size_t block = 5 * nf * nf;
  // Nodes are summed in fixed contiguous chunks; the chunking depends only on
  // the grid and the field count, never on the thread count.
  constexpr std::size_t max_doubles = std::size_t{1} << 25;
  const std::size_t chunks = std::max<std::size_t>(1, std::min(nodes.size(), max_doubles / block));
  const std::size_t per_chunk = (nodes.size() + chunks - 1) / chunks;
  std::vector<double> contrib(chunks * block, 0.0);

  // Transverse profiles sampled once per term.
  std::vector<std::vector<std::vector<double>>> tau(nf), dtau(nf);
  for (std::size_t p = 0; p < nf; ++p)
    for (const auto& term : fields[p].terms) {
      std::vector<double> v(nt), d(nt);
      for (std::size_t k = 0; k < nt; ++k) v[k] = term.transverse.value(tn[k]), d[k] = term.transverse.derivative(tn[k]);
      tau[p].push_back(std::move(v));
      dtau[p].push_back(std::move(d));
    }

  auto accumulate = [&](std::size_t i, double* out) {
    const SurfaceNode& node = nodes[i];
    std::vector<std::vector<ScalarJet>> jets(nf);
    bool any = false;
    for (std::size_t p = 0; p < nf; ++p)
      for (const auto& term : fields[p].terms) {
        jets[p].push_back(term.surface(node));
        any = any || jets[p].back().value != 0.0 || jets[p].back().grad.squaredNorm() != 0.0;
      }
    if (!any) return;
    std::vector<double> F(nf), Ft(nf);
    std::vector<Vec2> dF(nf);
    for (std::size_t k = 0; k < nt; ++k) {
      const LayerMetric m = layer_metric_at(node.geom, tn[k], cfg);
      const double w = node.area_weight * tw[k] * m.J;
      for (std::size_t p = 0; p < nf; ++p) {
        F[p] = 0.0;
        Ft[p] = 0.0;
        dF[p].setZero();
        for (std::size_t q = 0; q < jets[p].size(); ++q) {
          F[p] += jets[p][q].value * tau[p][q][k];
          Ft[p] += jets[p][q].value * dtau[p][q][k];
          dF[p] += jets[p][q].grad * tau[p][q][k];
        }
      }
      for (std::size_t p = 0; p < nf; ++p)
        for (std::size_t q = p; q < nf; ++q) {
          const double horiz = dF[p].dot(m.G_horiz_inv * dF[q]);
          const double vert = Ft[p] * Ft[q] - k2 * F[p] * F[q];
          const std::size_t e = p * nf + q;
          out[e] += w * horiz;
          out[nf * nf + e] += w * vert;
          out[2 * nf * nf + e] += w * (horiz + Ft[p] * Ft[q] - k2 * F[p] * F[q]);
          out[3 * nf * nf + e] += w * F[p] * F[q];
          out[4 * nf * nf + e] += std::abs(w) * (std::abs(horiz) + std::abs(Ft[p] * Ft[q]) + k2 * std::abs(F[p] * F[q]));
        }
    }
  };
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t hi = std::min(nodes.size(), (c + 1) * per_chunk);
    for (std::size_t i = c * per_chunk; i < hi; ++i) accumulate(i, &contrib[c * block]);
  });

  FormGram gram;
  gram.Q1.setZero(nf, nf);
  gram.Q2.setZero(nf, nf);
  gram.Q.setZero(nf, nf);
  gram.M.setZero(nf, nf);
  std::vector<double> column(chunks);
  gram.magnitude.setZero(nf, nf);
  Eigen::MatrixXd* mats[5] = {&gram.Q1, &gram.Q2, &gram.Q, &gram.M, &gram.magnitude};
  for (int m = 0; m < 5; ++m)
    for (std::size_t p = 0; p < nf; ++p)
      for (std::size_t q = p; q < nf; ++q) {
        const std::size_t e = m * nf * nf + p * nf + q;
        for (std::size_t c = 0; c < chunks; ++c) column[c] = contrib[c * block + e];
        const double s = pairwise_sum(column);
        (*mats[m])(p, q) = s;
        (*mats[m])(q, p) = s;
      }
  return gram;
}

/// Gram matrices with entrywise error estimates |working - half resolution|.
struct GramWithError {
  FormGram value;
  FormGram error;
};

inline GramWithError evaluate_gram_with_error(std::span<const LayerField> fields, const QuadratureGrid& grid) {
  GramWithError out;
  out.value = evaluate_gram(fields, grid);
  const FormGram coarse = evaluate_gram(fields, grid.coarsened());
  // Rounding in the cancellation kappa^2 M against int f_t^2 is invisible to
  // the grid comparison, so a floor proportional to the integrand magnitude is added.
  const Eigen::MatrixXd floor = 16 * std::numeric_limits<double>::epsilon() * out.value.magnitude;
  out.error.Q1 = (out.value.Q1 - coarse.Q1).cwiseAbs() + floor;
  out.error.Q2 = (out.value.Q2 - coarse.Q2).cwiseAbs() + floor;
  out.error.Q = (out.value.Q - coarse.Q).cwiseAbs() + floor;
  out.error.M = (out.value.M - coarse.M).cwiseAbs();
  out.error.magnitude = Eigen::MatrixXd::Zero(out.value.magnitude.rows(), out.value.magnitude.cols());
  return out;
}

struct FormValue {
  double Q = 0.0;
  double Q1 = 0.0;
  double Q2 = 0.0;
  double L2_norm_sq = 0.0;
  double quadrature_error_estimate = 0.0;
};

inline FormValue eval_forms(const LayerField& field, const QuadratureGrid& grid) {
  const GramWithError g = evaluate_gram_with_error(std::span(&field, 1), grid);
  FormValue v;
  v.Q = g.value.Q(0, 0);
  v.Q1 = g.value.Q1(0, 0);
  v.Q2 = g.value.Q2(0, 0);
  v.L2_norm_sq = g.value.M(0, 0);
  v.quadrature_error_estimate = std::max({g.error.Q(0, 0), g.error.Q1(0, 0), g.error.Q2(0, 0)});
  return v;
}

/// Q(f, h) with its error estimate.
inline FormValue bilinear_form(const LayerField& f, const LayerField& h, const QuadratureGrid& grid) {
  const LayerField both[2] = {f, h};
  const GramWithError g = evaluate_gram_with_error(both, grid);
  FormValue v;
  v.Q = g.value.Q(0, 1);
  v.Q1 = g.value.Q1(0, 1);
  v.Q2 = g.value.Q2(0, 1);
  v.L2_norm_sq = g.value.M(0, 1);
  v.quadrature_error_estimate = std::max({g.error.Q(0, 1), g.error.Q1(0, 1), g.error.Q2(0, 1)});
  return v;
}

/// int |grad f|^2 / int f^2 = (Q + kappa^2 |f|^2) / |f|^2.
inline double rayleigh_quotient(const LayerField& field, const QuadratureGrid& grid) {
  const FormGram g = evaluate_gram(std::span(&field, 1), grid);
  const double norm = g.M(0, 0);
  if (!(norm > 1e-300)) throw ZeroNormError("rayleigh_quotient: field '" + field.label + "' has zero norm");
  return (g.Q(0, 0) + grid.layer().kappa_sq() * norm) / norm;
}

struct TransverseIntegrals {
  double chi_norm_sq = 0.0;                  // int chi^2
  double chi_prime_sq = 0.0;                 // int chi'^2
  double chi_prime_identity_residual = 0.0;  // int chi'^2 - kappa^2 int chi^2
  double sigma = 0.0;                        // -int chi' chi t
  double C1_quadrature = 0.0;                // int (chi' chi1' t - kappa^2 chi chi1 t)
  double cross_moment = 0.0;                 // int (chi' chi1' - kappa^2 chi chi1) t: weight of -H in the cross term
  double odd_energy = 0.0;                   // int (chi1'^2 - kappa^2 chi1^2)
  double odd_norm_sq = 0.0;                  // int chi1^2
  double curvature_moment = 0.0;             // int (chi'^2 - kappa^2 chi^2) t^2: weight of K in Q(phi chi)
};

/// One-dimensional integrals of the transverse profiles by 4 x 32-point Gauss panels.
inline TransverseIntegrals transverse_integrals(const LayerConfig& cfg) {
  const TransverseProfile chi = ground_mode(cfg), chi1 = odd_mode(cfg);
  const double a = cfg.a(), k2 = cfg.kappa_sq();
  auto I = [&](const std::function<double(double)>& f) { return integrate(f, -a, a, 4, 32); };
  TransverseIntegrals out;
  out.chi_norm_sq = I([&](double t) { return std::pow(chi.value(t), 2); });
  out.chi_prime_sq = I([&](double t) { return std::pow(chi.derivative(t), 2); });
  out.chi_prime_identity_residual =
      I([&](double t) { return std::pow(chi.derivative(t), 2) - k2 * std::pow(chi.value(t), 2); });
  out.sigma = -I([&](double t) { return chi.derivative(t) * chi.value(t) * t; });
  out.C1_quadrature = I([&](double t) {
    return chi.derivative(t) * chi1.derivative(t) * t - k2 * chi.value(t) * chi1.value(t) * t;
  });
  out.cross_moment = out.C1_quadrature;
  out.odd_energy = I([&](double t) { return std::pow(chi1.derivative(t), 2) - k2 * std::pow(chi1.value(t), 2); });
  out.odd_norm_sq = I([&](double t) { return std::pow(chi1.value(t), 2); });
  out.curvature_moment = I([&](double t) {
    return (std::pow(chi.derivative(t), 2) - k2 * std::pow(chi.value(t), 2)) * t * t;
  });
  return out;
}

/// The value the source construction states for C1; reported next to the computed one.
inline constexpr double stated_C1 = -0.5;

}  // namespace qlayer
