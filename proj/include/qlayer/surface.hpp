#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "numerics.hpp"

namespace qlayer {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

enum class Symmetry { radial, general };

inline const char* to_string(Symmetry s) { return s == Symmetry::radial ? "radial" : "general"; }

/// Height profile z = f(r) of a surface of revolution written as a graph.
/// `df_over_r` is f'(r)/r with its limit f''(0) at the axis.
struct RadialJet {
  double f = 0.0;
  double df = 0.0;
  double d2f = 0.0;
  double df_over_r = 0.0;
};

struct ParameterBox {
  double u_min = -1.0, u_max = 1.0, v_min = -1.0, v_max = 1.0;

  bool contains(double u, double v) const {
    return u >= u_min && u <= u_max && v >= v_min && v <= v_max;
  }
  /// Largest parameter radius of a disc around the origin inside the box.
  double inscribed_radius() const {
    return std::max(0.0, std::min({u_max, -u_min, v_max, -v_min}));
  }
};

/// Parametrization and its derivatives up to order two at one parameter point.
struct ParamJet {
  Vec3 p, pu, pv, puu, puv, pvv;
};

/// Full pointwise differential-geometric state. Curvatures use the upward
/// normal for graphs, H = k1 + k2 (trace convention), K = k1 * k2.
struct GeomSample {
  double u = 0.0, v = 0.0;
  Vec3 point, pu, pv;
  Vec3 normal;
  Vec3 dnormal_u, dnormal_v;  // Weingarten: dN/dx_i = -S p_i
  double nz = 1.0;
  Mat2 g, b;
  Mat2 shape;  // S = g^{-1} b, mixed components S^i_j
  double k1 = 0.0, k2 = 0.0;
  double K = 0.0, H = 0.0, normB = 0.0;
};

namespace detail {

inline ParamJet graph_jet(double u, double v, double F, double Fu, double Fv, double Fuu, double Fuv,
                          double Fvv) {
  ParamJet j;
  j.p = Vec3(u, v, F);
  j.pu = Vec3(1.0, 0.0, Fu);
  j.pv = Vec3(0.0, 1.0, Fv);
  j.puu = Vec3(0.0, 0.0, Fuu);
  j.puv = Vec3(0.0, 0.0, Fuv);
  j.pvv = Vec3(0.0, 0.0, Fvv);
  return j;
}

inline ParamJet radial_graph_jet(const RadialJet& prof, double u, double v) {
  const double r = std::hypot(u, v);
  double c = 1.0, s = 0.0;
  if (r > 0.0) c = u / r, s = v / r;
  const double a = prof.d2f, q = prof.df_over_r;
  return graph_jet(u, v, prof.f, q * u, q * v, a * c * c + q * s * s, (a - q) * c * s,
                   q * c * c + a * s * s);
}

/// Cumulative arc length rho(r) = int_0^r sqrt(1 + f'^2) for a radial profile,
/// tabulated on panels (uniform near the axis, geometric further out) and
/// refined per query with a Gauss rule on the partial panel.
class ArcLengthTable {
 public:
  ArcLengthTable() = default;
  ArcLengthTable(std::function<RadialJet(double)> profile, double scale)
      : profile_(std::move(profile)), rule_(gauss_legendre(10)) {
    knots_.push_back(0.0);
    const double near = 32.0 * scale;
    for (int k = 1; k <= 256; ++k) knots_.push_back(near * k / 256.0);
    while (knots_.back() < 1e13 * scale) knots_.push_back(knots_.back() * 1.05);
    cumulative_.assign(knots_.size(), 0.0);
    for (std::size_t k = 1; k < knots_.size(); ++k)
      cumulative_[k] = cumulative_[k - 1] + segment(knots_[k - 1], knots_[k]);
  }

  double stretch(double r) const {
    const double d = profile_(r).df;
    return std::sqrt(1.0 + d * d);
  }

  double rho(double r) const {
    if (r <= 0.0) return 0.0;
    if (r >= knots_.back()) return cumulative_.back() + (r - knots_.back()) * stretch(knots_.back());
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), r);
    const std::size_t k = static_cast<std::size_t>(it - knots_.begin()) - 1;
    return cumulative_[k] + segment(knots_[k], r);
  }

  double r_of_rho(double rho_target) const {
    if (rho_target <= 0.0) return 0.0;
    if (rho_target >= cumulative_.back())
      return knots_.back() + (rho_target - cumulative_.back()) / stretch(knots_.back());
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), rho_target);
    const std::size_t k = static_cast<std::size_t>(it - cumulative_.begin()) - 1;
    double lo = knots_[k], hi = knots_[k + 1];
    double r = lo + (hi - lo) * (rho_target - cumulative_[k]) / (cumulative_[k + 1] - cumulative_[k]);
    for (int iter = 0; iter < 60; ++iter) {
      const double residual = rho(r) - rho_target;
      if (residual > 0) hi = r; else lo = r;
      double next = r - residual / stretch(r);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - r) <= 1e-15 * std::max(1.0, r)) return next;
      r = next;
    }
    return r;
  }

 private:
  double segment(double lo, double hi) const {
    std::vector<double> x, w;
    map_rule(rule_, lo, hi, x, w);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * stretch(x[i]);
    return s;
  }

  std::function<RadialJet(double)> profile_;
  GaussRule rule_;
  std::vector<double> knots_, cumulative_;
};

}  // namespace detail

class GeodesicField;

/// An embedded surface given by an analytic parametrization. Built-in
/// families are rotationally symmetric graphs with analytic derivatives;
/// plug-ins supply only the map and are differentiated by central differences
/// with step 1e-4 * length_scale. Copies share the immutable implementation.
class Surface {
 public:
  using Params = std::map<std::string, double>;

  static Surface plane() {
    return radial_graph("plane", {}, [](double) { return RadialJet{}; }, 1.0);
  }

  /// z = slope * sqrt(scale^2 + r^2): apex curvature slope/scale, asymptotic cone of the given slope.
  static Surface hyperboloid(double slope = 1.0, double scale = 1.0) {
    if (!(slope > 0 && scale > 0)) throw std::invalid_argument("hyperboloid: slope and scale must be > 0");
    return radial_graph("hyperboloid", {{"slope", slope}, {"scale", scale}},
                        [slope, scale](double r) {
                          const double s = std::sqrt(scale * scale + r * r);
                          return RadialJet{slope * s, slope * r / s, slope * scale * scale / (s * s * s),
                                           slope / s};
                        },
                        scale);
  }

  /// z = height * exp(-r^2 / width^2).
  static Surface gaussian_bump(double height = 1.0, double width = 1.0) {
    if (!(width > 0)) throw std::invalid_argument("gaussian_bump: width must be > 0");
    return radial_graph("gaussian_bump", {{"height", height}, {"width", width}},
                        [height, width](double r) {
                          const double w2 = width * width;
                          const double e = height * std::exp(-r * r / w2);
                          return RadialJet{e, -2.0 * r / w2 * e, (-2.0 / w2 + 4.0 * r * r / (w2 * w2)) * e,
                                           -2.0 / w2 * e};
                        },
                        width);
  }

  /// z = slope * scale * log cosh(r / scale): paraboloid near the axis, cone
  /// of the given slope far out. K >= 0 everywhere and B -> 0.
  static Surface paraboloid_cap(double slope = 1.0, double scale = 1.0) {
    if (!(slope > 0 && scale > 0)) throw std::invalid_argument("paraboloid_cap: slope and scale must be > 0");
    return radial_graph("paraboloid_cap", {{"slope", slope}, {"scale", scale}},
                        [slope, scale](double r) {
                          const double x = r / scale;
                          const double logcosh = x + std::log1p(std::exp(-2.0 * x)) - std::log(2.0);
                          const double th = std::tanh(x);
                          const double sech = 1.0 / std::cosh(std::min(x, 700.0));
                          const double over_r = x < 1e-8 ? slope / scale : slope * th / r;
                          return RadialJet{slope * scale * logcosh, slope * th, slope / scale * sech * sech, over_r};
                        },
                        scale);
  }

  static Surface radial_graph(std::string family, Params params, std::function<RadialJet(double)> profile,
                              double length_scale) {
    auto impl = std::make_shared<Impl>();
    impl->family = std::move(family);
    impl->params = std::move(params);
    impl->symmetry = Symmetry::radial;
    impl->length_scale = length_scale;
    impl->analytic = true;
    impl->profile = profile;
    impl->arc = std::make_shared<detail::ArcLengthTable>(profile, length_scale);
    impl->jet = [profile](double u, double v) { return detail::radial_graph_jet(profile(std::hypot(u, v)), u, v); };
    return Surface(std::move(impl));
  }

  /// Plug-in: arbitrary parametrization on a parameter box, differentiated by
  /// central differences. Orientation is fixed so that N_z > 0 at the basepoint.
  static Surface parametric(std::string family, Params params, std::function<Vec3(double, double)> map,
                            ParameterBox box, double length_scale, Symmetry symmetry = Symmetry::general) {
    auto impl = std::make_shared<Impl>();
    impl->family = std::move(family);
    impl->params = std::move(params);
    impl->symmetry = symmetry;
    impl->length_scale = length_scale;
    impl->analytic = false;
    impl->domain = box;
    const double h = 1e-4 * length_scale;
    impl->jet = [map, h](double u, double v) {
      ParamJet j;
      const Vec3 c = map(u, v);
      const Vec3 up = map(u + h, v), um = map(u - h, v), vp = map(u, v + h), vm = map(u, v - h);
      j.p = c;
      j.pu = (up - um) / (2 * h);
      j.pv = (vp - vm) / (2 * h);
      j.puu = (up - 2 * c + um) / (h * h);
      j.pvv = (vp - 2 * c + vm) / (h * h);
      j.puv = (map(u + h, v + h) - map(u + h, v - h) - map(u - h, v + h) + map(u - h, v - h)) / (4 * h * h);
      return j;
    };
    const ParamJet base = impl->jet(0.0, 0.0);
    impl->flip = base.pu.cross(base.pv).z() < 0.0;
    return Surface(std::move(impl));
  }

  /// Plug-in graph z = F(u, v) over a box, differentiated numerically.
  static Surface graph(std::string family, Params params, std::function<double(double, double)> height,
                       ParameterBox box, double length_scale, Symmetry symmetry = Symmetry::general) {
    return parametric(std::move(family), std::move(params),
                      [height](double u, double v) { return Vec3(u, v, height(u, v)); }, box, length_scale,
                      symmetry);
  }

  const std::string& family() const { return impl_->family; }
  const Params& params() const { return impl_->params; }
  Symmetry symmetry() const { return impl_->symmetry; }
  bool is_radial() const { return impl_->symmetry == Symmetry::radial && impl_->arc != nullptr; }
  bool analytic_derivatives() const { return impl_->analytic; }
  double length_scale() const { return impl_->length_scale; }
  const std::optional<ParameterBox>& domain() const { return impl_->domain; }
  bool orientation_flipped() const { return impl_->flip; }

  /// "family(key=value,...)" with keys in sorted order.
  std::string tag() const {
    std::ostringstream os;
    os << impl_->family << "(";
    bool first = true;
    for (const auto& [k, v] : impl_->params) {
      os << (first ? "" : ",") << k << "=" << v;
      first = false;
    }
    os << ")";
    return os.str();
  }

  bool contains(double u, double v) const { return !impl_->domain || impl_->domain->contains(u, v); }

  ParamJet jet(double u, double v) const { return impl_->jet(u, v); }

  RadialJet profile(double r) const {
    require_radial("profile");
    return impl_->profile(r);
  }
  /// Geodesic distance from the axis along a meridian, for parameter radius r.
  double rho_of_r(double r) const {
    require_radial("rho_of_r");
    return impl_->arc->rho(r);
  }
  double r_of_rho(double rho) const {
    require_radial("r_of_rho");
    return impl_->arc->r_of_rho(rho);
  }
  /// d rho / d r = sqrt(1 + f'(r)^2).
  double meridian_stretch(double r) const {
    require_radial("meridian_stretch");
    return impl_->arc->stretch(r);
  }

  /// Throws std::invalid_argument unless the surface is radial.
  void require_radial(const char* what) const {
    if (!is_radial()) throw std::invalid_argument(std::string(what) + ": surface '" + impl_->family + "' is not radial");
  }

  /// Shortest-path distance field for plug-ins; built once per surface.
  inline const GeodesicField& geodesic_field(int resolution = 201) const;

 private:
  struct Impl {
    std::string family;
    Params params;
    Symmetry symmetry = Symmetry::general;
    double length_scale = 1.0;
    bool analytic = false;
    bool flip = false;
    std::optional<ParameterBox> domain;
    std::function<ParamJet(double, double)> jet;
    std::function<RadialJet(double)> profile;
    std::shared_ptr<detail::ArcLengthTable> arc;
    mutable std::mutex geodesic_mutex;
    mutable std::shared_ptr<const GeodesicField> geodesic;
  };

  explicit Surface(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<const Impl> impl_;
};

/// Evaluates the complete GeomSample at (u, v).
inline GeomSample sample(const Surface& surface, double u, double v) {
  if (!surface.contains(u, v)) throw std::out_of_range("sample: (u, v) outside the parameter domain");
  const ParamJet j = surface.jet(u, v);
  GeomSample s;
  s.u = u;
  s.v = v;
  s.point = j.p;
  s.pu = j.pu;
  s.pv = j.pv;
  s.g << j.pu.dot(j.pu), j.pu.dot(j.pv), j.pu.dot(j.pv), j.pv.dot(j.pv);
  const double det_g = s.g.determinant();
  if (!(det_g > 1e-12)) {
    std::ostringstream os;
    os << "immersion failure at (" << u << ", " << v << "): det g = " << det_g;
    throw ImmersionError(os.str());
  }
  Vec3 n = j.pu.cross(j.pv);
  n /= n.norm();
  if (surface.orientation_flipped()) n = -n;
  s.normal = n;
  s.nz = n.z();
  s.b << j.puu.dot(n), j.puv.dot(n), j.puv.dot(n), j.pvv.dot(n);
  const Mat2 g_inv = s.g.inverse();
  s.shape = g_inv * s.b;
  s.H = s.shape.trace();
  s.K = s.b.determinant() / det_g;
  const double disc = std::sqrt(std::max(0.25 * s.H * s.H - s.K, 0.0));
  s.k1 = 0.5 * s.H + disc;
  s.k2 = 0.5 * s.H - disc;
  s.normB = std::sqrt(s.k1 * s.k1 + s.k2 * s.k2);
  s.dnormal_u = -(s.shape(0, 0) * j.pu + s.shape(1, 0) * j.pv);
  s.dnormal_v = -(s.shape(0, 1) * j.pu + s.shape(1, 1) * j.pv);
  return s;
}

/// Dijkstra distances from the parameter origin on the 8-connected grid over
/// the surface's parameter box. Edge lengths use g at the edge midpoint;
/// queries interpolate bilinearly. Expect ~1-2% error against true geodesics.
class GeodesicField {
 public:
  GeodesicField(const Surface& surface, int resolution) : n_(std::max(resolution, 3)) {
    if (!surface.domain()) throw std::invalid_argument("GeodesicField: surface has no parameter box");
    box_ = *surface.domain();
    if (!box_.contains(0.0, 0.0)) throw std::invalid_argument("GeodesicField: basepoint outside the box");
    du_ = (box_.u_max - box_.u_min) / (n_ - 1);
    dv_ = (box_.v_max - box_.v_min) / (n_ - 1);
    dist_.assign(static_cast<std::size_t>(n_) * n_, std::numeric_limits<double>::infinity());
    auto metric_length = [&](double u0, double v0, double u1, double v1) {
      const double um = 0.5 * (u0 + u1), vm = 0.5 * (v0 + v1);
      const ParamJet j = surface.jet(um, vm);
      const Vec3 d = (u1 - u0) * j.pu + (v1 - v0) * j.pv;
      return d.norm();
    };
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    const int i0 = std::clamp(static_cast<int>(std::floor((0.0 - box_.u_min) / du_)), 0, n_ - 2);
    const int j0 = std::clamp(static_cast<int>(std::floor((0.0 - box_.v_min) / dv_)), 0, n_ - 2);
    for (int di = 0; di <= 1; ++di)
      for (int dj = 0; dj <= 1; ++dj) {
        const int i = i0 + di, jj = j0 + dj;
        const double d = metric_length(0.0, 0.0, u_at(i), v_at(jj));
        dist_[index(i, jj)] = d;
        heap.emplace(d, index(i, jj));
      }
    static constexpr int offsets[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
    while (!heap.empty()) {
      const auto [d, id] = heap.top();
      heap.pop();
      if (d > dist_[id]) continue;
      const int i = id / n_, jj = id % n_;
      for (const auto& o : offsets) {
        const int ni = i + o[0], nj = jj + o[1];
        if (ni < 0 || nj < 0 || ni >= n_ || nj >= n_) continue;
        const double nd = d + metric_length(u_at(i), v_at(jj), u_at(ni), v_at(nj));
        if (nd < dist_[index(ni, nj)]) {
          dist_[index(ni, nj)] = nd;
          heap.emplace(nd, index(ni, nj));
        }
      }
    }
  }

  double distance(double u, double v) const {
    const double x = std::clamp((u - box_.u_min) / du_, 0.0, n_ - 1.0);
    const double y = std::clamp((v - box_.v_min) / dv_, 0.0, n_ - 1.0);
    const int i = std::min(static_cast<int>(x), n_ - 2), j = std::min(static_cast<int>(y), n_ - 2);
    const double fx = x - i, fy = y - j;
    return (1 - fx) * (1 - fy) * dist_[index(i, j)] + fx * (1 - fy) * dist_[index(i + 1, j)] +
           (1 - fx) * fy * dist_[index(i, j + 1)] + fx * fy * dist_[index(i + 1, j + 1)];
  }

  /// Central-difference gradient of the interpolated distance (parameter coordinates).
  Vec2 gradient(double u, double v) const {
    const double hu = 0.5 * du_, hv = 0.5 * dv_;
    return Vec2((distance(u + hu, v) - distance(u - hu, v)) / (2 * hu),
                (distance(u, v + hv) - distance(u, v - hv)) / (2 * hv));
  }

  const ParameterBox& box() const { return box_; }
  int resolution() const { return n_; }

 private:
  double u_at(int i) const { return box_.u_min + i * du_; }
  double v_at(int j) const { return box_.v_min + j * dv_; }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * n_ + j; }

  int n_;
  ParameterBox box_;
  double du_ = 0.0, dv_ = 0.0;
  std::vector<double> dist_;
};

inline const GeodesicField& Surface::geodesic_field(int resolution) const {
  std::lock_guard lock(impl_->geodesic_mutex);
  if (!impl_->geodesic || impl_->geodesic->resolution() != resolution)
    impl_->geodesic = std::make_shared<const GeodesicField>(*this, resolution);
  return *impl_->geodesic;
}

/// Geodesic distance from the basepoint (parameter origin). Exact meridian
/// arc length for radial surfaces, grid shortest path otherwise.
inline double geodesic_radius(const Surface& surface, double u, double v) {
  if (surface.is_radial()) return surface.rho_of_r(std::hypot(u, v));
  return surface.geodesic_field().distance(u, v);
}

/// Builds a surface from a family name and shape parameters (config files).
inline Surface make_surface(const std::string& family, const Surface::Params& p,
                            std::optional<ParameterBox> box = std::nullopt) {
  auto get = [&](const char* key, double fallback) {
    const auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
  };
  if (family == "plane") return Surface::plane();
  if (family == "hyperboloid") return Surface::hyperboloid(get("slope", 1.0), get("scale", 1.0));
  if (family == "gaussian_bump") return Surface::gaussian_bump(get("height", 1.0), get("width", 1.0));
  if (family == "paraboloid_cap") return Surface::paraboloid_cap(get("slope", 1.0), get("scale", 1.0));
  if (family == "elliptic_bump") {
    // Non-radial plug-in graph exercising the numerical-derivative path.
    const double h = get("height", 1.0), wx = get("width_u", 1.0), wy = get("width_v", 2.0);
    const ParameterBox b = box.value_or(ParameterBox{-8.0, 8.0, -8.0, 8.0});
    return Surface::graph("elliptic_bump", {{"height", h}, {"width_u", wx}, {"width_v", wy}},
                          [h, wx, wy](double u, double v) {
                            return h * std::exp(-(u * u) / (wx * wx) - (v * v) / (wy * wy));
                          },
                          b, std::min(wx, wy));
  }
  throw std::invalid_argument("unknown surface family '" + family + "'");
}

}  // namespace qlayer
