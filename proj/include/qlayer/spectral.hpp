#pragma once

// Discrete Dirichlet problems on truncated layers and their lowest
// eigenvalues. The lateral boundary is Dirichlet, so every lambda_min(R) is an
// upper bound for sigma_0 that decreases toward it as R grows.
//
// axisym_reduce: finite volumes in geodesic polar coordinates (rho, t) for one
//   angular mode, metric diag((1 - k_r t)^2, r^2 (1 - k_p t)^2, 1).
// assemble:      trilinear elements on a (u, v, t) parameter grid with 2x2x2
//   Gauss points; handles the full horizontal metric of any surface.

#include <Eigen/Sparse>

#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "layer_metric.hpp"
#include "lobpcg.hpp"
#include "surface.hpp"

namespace qlayer {

/// Axisymmetric truncation: radial spacing h up to R (rounded to a multiple
/// of h), n_t intervals across [-a, a].
struct TruncatedLayer {
  double R = 10.0;
  double h = 0.1;
  int n_t = 16;
};

/// Full 3-D truncation on the parameter square [-L, L]^2 with n_uv intervals
/// per side; nodes at geodesic radius >= R are Dirichlet.
struct TruncatedLayer3D {
  double R = 10.0;
  int n_uv = 64;
  int n_t = 8;
  std::optional<double> half_width;  // L; default: parameter radius of the geodesic circle R
};

inline constexpr std::size_t default_unknown_cap = 600000;

struct DiscreteProblem {
  SparseMatrix A, M;
  std::vector<double> rho, t;  // geodesic radius and t of every unknown
  std::vector<double> u, v;    // parameter coordinates (3-D only)
  double R = 0.0;
  double h = 0.0;
  int n_t = 0;
  int mode = 0;
  std::string kind;            // "axisym" or "full3d"
  Eigen::Index size() const { return A.rows(); }
};

/// Lowest eigenvalue of the 1-D Dirichlet second difference on n_t intervals:
/// the discrete counterpart of kappa^2.
inline double discrete_transverse_threshold(const LayerConfig& cfg, int n_t) {
  const double ht = 2 * cfg.a() / n_t;
  const double s = std::sin(pi * ht / (4 * cfg.a()));
  return 4 / (ht * ht) * s * s;
}

namespace detail {

/// Principal curvatures along the meridian and the parallel at geodesic radius
/// rho, in the orientation used by sample().
inline std::pair<double, double> meridian_parallel_curvatures(const Surface& s, double rho) {
  const double r = s.r_of_rho(rho);
  const RadialJet j = s.profile(r);
  const double w = std::sqrt(1 + j.df * j.df);
  const double sign = s.orientation_flipped() ? -1.0 : 1.0;
  return {sign * j.d2f / (w * w * w), sign * j.df_over_r / w};
}

inline void check_layer(const LayerConfig& cfg, double kr, double kp, double where) {
  for (double t : {-cfg.a(), cfg.a()})
    if ((1 - kr * t) * (1 - kp * t) <= fold_threshold)
      throw FoldError("layer folds at geodesic radius " + std::to_string(where));
}

}  // namespace detail

/// Angular mode m of a radial surface as a 2-D weighted problem in (rho, t).
/// Node i sits at rho = i h (i = 0 is the axis, dropped for m > 0), node
/// N = R / h is Dirichlet; t nodes are interior points of a uniform grid.
inline DiscreteProblem axisym_reduce(const Surface& surface, const LayerConfig& cfg, const TruncatedLayer& tr, int m = 0,
                                     std::size_t unknown_cap = default_unknown_cap) {
  if (!surface.is_radial()) throw std::invalid_argument("axisym_reduce: surface '" + surface.tag() + "' is not radial");
  if (m < 0) throw std::invalid_argument("axisym_reduce: mode must be >= 0");
  if (!(tr.h > 0) || !(tr.R > tr.h) || tr.n_t < 2) throw std::invalid_argument("axisym_reduce: bad truncation");
  const int N = static_cast<int>(std::lround(tr.R / tr.h));
  const double h = tr.h;
  const int nk = tr.n_t - 1;
  const int i0 = m == 0 ? 0 : 1;
  const std::size_t n = static_cast<std::size_t>(N - i0) * nk;
  if (n > unknown_cap)
    throw MemoryLimitError("axisymmetric problem has " + std::to_string(n) + " unknowns, cap " + std::to_string(unknown_cap));
  const double a = cfg.a(), ht = 2 * a / tr.n_t;

  struct RadialData { double r, kr, kp; };
  auto at = [&](double rho) {
    const auto [kr, kp] = detail::meridian_parallel_curvatures(surface, rho);
    detail::check_layer(cfg, kr, kp, rho);
    return RadialData{surface.r_of_rho(rho), kr, kp};
  };
  std::vector<RadialData> node(N), face(N);
  for (int i = 0; i < N; ++i) {
    node[i] = at(i * h);
    face[i] = at((i + 0.5) * h);
  }
  const RadialData axis_cell = at(0.25 * h);

  auto idx = [&](int i, int k) { return static_cast<Eigen::Index>(i - i0) * nk + (k - 1); };
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(n * 5);
  std::vector<Eigen::Triplet<double>> mass;
  mass.reserve(n);
  DiscreteProblem p;
  p.rho.resize(n);
  p.t.resize(n);
  for (int i = i0; i < N; ++i) {
    const double cw = i == 0 ? 0.5 * h : h;
    const RadialData& c = i == 0 ? axis_cell : node[i];
    for (int k = 1; k <= nk; ++k) {
      const double t = -a + k * ht;
      const Eigen::Index me = idx(i, k);
      p.rho[me] = i * h;
      p.t[me] = t;
      const double J = (1 - node[i].kr * t) * (1 - node[i].kp * t);
      mass.emplace_back(me, me, cw * ht * c.r * J);
      if (m > 0)
        trips.emplace_back(me, me, m * m * cw * ht * (1 - node[i].kr * t) / (node[i].r * (1 - node[i].kp * t)));
      // t faces
      for (int side : {-1, 1}) {
        const double tf = t + 0.5 * side * ht;
        const double w = cw * c.r * (1 - node[i].kr * tf) * (1 - node[i].kp * tf) / ht;
        trips.emplace_back(me, me, w);
        const int kk = k + side;
        if (kk >= 1 && kk <= nk) trips.emplace_back(me, idx(i, kk), -w);
      }
      // rho faces
      for (int side : {-1, 1}) {
        const int ii = i + side;
        if (ii < 0 || (side < 0 && i == 0)) continue;
        const RadialData& f = side > 0 ? face[i] : face[i - 1];
        const double w = f.r * (1 - f.kp * t) / (1 - f.kr * t) * ht / h;
        trips.emplace_back(me, me, w);
        if (ii >= i0 && ii < N) trips.emplace_back(me, idx(ii, k), -w);
      }
    }
  }
  p.A.resize(n, n);
  p.A.setFromTriplets(trips.begin(), trips.end());
  p.M.resize(n, n);
  p.M.setFromTriplets(mass.begin(), mass.end());
  p.R = N * h;
  p.h = h;
  p.n_t = tr.n_t;
  p.mode = m;
  p.kind = "axisym";
  return p;
}

/// Trilinear-element stiffness and consistent mass on the (u, v, t) grid.
inline DiscreteProblem assemble(const Surface& surface, const LayerConfig& cfg, const TruncatedLayer3D& tr,
                                std::size_t unknown_cap = default_unknown_cap) {
  if (tr.n_uv < 2 || tr.n_t < 2 || !(tr.R > 0)) throw std::invalid_argument("assemble: bad truncation");
  double L = tr.half_width.value_or(0.0);
  if (!tr.half_width) {
    if (surface.is_radial()) {
      L = surface.r_of_rho(tr.R);
    } else {
      L = surface.domain().value().inscribed_radius();
    }
  }
  const int n = tr.n_uv, nt = tr.n_t;
  const double hu = 2 * L / n, ht = 2 * cfg.a() / nt;
  auto coord = [&](int i) { return -L + i * hu; };

  // Unknown numbering: interior (u, v) nodes inside the geodesic ball, interior t nodes.
  std::vector<int> plane_id((n + 1) * (n + 1), -1);
  std::vector<double> node_rho((n + 1) * (n + 1));
  int n_plane = 0;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      const double rho = geodesic_radius(surface, coord(i), coord(j));
      node_rho[i * (n + 1) + j] = rho;
      if (i > 0 && i < n && j > 0 && j < n && rho < tr.R) plane_id[i * (n + 1) + j] = n_plane++;
    }
  const std::size_t unknowns = static_cast<std::size_t>(n_plane) * (nt - 1);
  if (unknowns > unknown_cap)
    throw MemoryLimitError("3-D problem has " + std::to_string(unknowns) + " unknowns, cap " + std::to_string(unknown_cap));
  auto id = [&](int i, int j, int k) -> Eigen::Index {
    if (k <= 0 || k >= nt) return -1;
    const int pid = plane_id[i * (n + 1) + j];
    return pid < 0 ? -1 : static_cast<Eigen::Index>(pid) * (nt - 1) + (k - 1);
  };

  const double g = 1.0 / std::sqrt(3.0);
  const double gp[2] = {-g, g};
  // Per (cell, Gauss point) geometry; the cell loop runs in parallel and
  // each cell writes only its own triplet block.
  const std::size_t cells = static_cast<std::size_t>(n) * n;
  std::vector<std::vector<Eigen::Triplet<double>>> kt(cells), mt(cells);
  parallel_for(cells, [&](std::size_t c) {
    const int i = static_cast<int>(c / n), j = static_cast<int>(c % n);
    bool touches = false;
    for (int di = 0; di < 2; ++di)
      for (int dj = 0; dj < 2; ++dj) touches = touches || plane_id[(i + di) * (n + 1) + j + dj] >= 0;
    if (!touches) return;
    GeomSample s[2][2];
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        s[a][b] = sample(surface, coord(i) + 0.5 * hu * (1 + gp[a]), coord(j) + 0.5 * hu * (1 + gp[b]));
    for (int k = 0; k < nt; ++k) {
      double Ke[8][8] = {}, Me[8][8] = {};
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          for (int e = 0; e < 2; ++e) {
            const double t = -cfg.a() + k * ht + 0.5 * ht * (1 + gp[e]);
            const LayerMetric lm = layer_metric_at(s[a][b], t, cfg);
            const double w = lm.density * (hu / 2) * (hu / 2) * (ht / 2);
            const double xi[3] = {gp[a], gp[b], gp[e]};
            double N[8];
            Vec3 dN[8];
            for (int q = 0; q < 8; ++q) {
              const double sx = (q & 1) ? 1 : -1, sy = (q & 2) ? 1 : -1, sz = (q & 4) ? 1 : -1;
              const double fx = 0.5 * (1 + sx * xi[0]), fy = 0.5 * (1 + sy * xi[1]), fz = 0.5 * (1 + sz * xi[2]);
              N[q] = fx * fy * fz;
              dN[q] = Vec3(0.5 * sx * fy * fz * 2 / hu, 0.5 * sy * fx * fz * 2 / hu, 0.5 * sz * fx * fy * 2 / ht);
            }
            for (int p = 0; p < 8; ++p)
              for (int q = 0; q < 8; ++q) {
                const Vec2 gp2(dN[p].x(), dN[p].y()), gq2(dN[q].x(), dN[q].y());
                Ke[p][q] += w * (gp2.dot(lm.G_horiz_inv * gq2) + dN[p].z() * dN[q].z());
                Me[p][q] += w * N[p] * N[q];
              }
          }
      Eigen::Index ids[8];
      for (int q = 0; q < 8; ++q) ids[q] = id(i + (q & 1), j + ((q >> 1) & 1), k + ((q >> 2) & 1));
      for (int p = 0; p < 8; ++p) {
        if (ids[p] < 0) continue;
        for (int q = 0; q < 8; ++q) {
          if (ids[q] < 0) continue;
          kt[c].emplace_back(ids[p], ids[q], Ke[p][q]);
          mt[c].emplace_back(ids[p], ids[q], Me[p][q]);
        }
      }
    }
  });
  std::vector<Eigen::Triplet<double>> K, Mv;
  for (std::size_t c = 0; c < cells; ++c) {
    K.insert(K.end(), kt[c].begin(), kt[c].end());
    Mv.insert(Mv.end(), mt[c].begin(), mt[c].end());
  }
  DiscreteProblem p;
  p.A.resize(unknowns, unknowns);
  p.A.setFromTriplets(K.begin(), K.end());
  p.M.resize(unknowns, unknowns);
  p.M.setFromTriplets(Mv.begin(), Mv.end());
  // Symmetrize exactly: element contributions are symmetric up to rounding.
  SparseMatrix At = p.A.transpose();
  p.A = 0.5 * (p.A + At);
  SparseMatrix Mt = p.M.transpose();
  p.M = 0.5 * (p.M + Mt);
  p.rho.resize(unknowns);
  p.t.resize(unknowns);
  p.u.resize(unknowns);
  p.v.resize(unknowns);
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j)
      for (int k = 1; k < nt; ++k) {
        const Eigen::Index q = id(i, j, k);
        if (q < 0) continue;
        p.rho[q] = node_rho[i * (n + 1) + j];
        p.u[q] = coord(i);
        p.v[q] = coord(j);
        p.t[q] = -cfg.a() + k * ht;
      }
  p.R = tr.R;
  p.h = hu;
  p.n_t = nt;
  p.kind = "full3d";
  return p;
}

struct SpectrumResult {
  double lambda_min = 0.0;
  std::vector<double> next_eigs;
  Eigen::VectorXd eigenvector;  // M-normalized
  double residual_norm = 0.0;
  double localization_fraction = 0.0;  // M-mass inside rho < R / 2
  int iterations = 0;
  double R = 0.0, h = 0.0;
  int n_t = 0;
  Eigen::Index unknowns = 0;
};

inline SpectrumResult smallest_eigs(const DiscreteProblem& p, int k = 1, double tol = 1e-8, EigenOptions opt = {}) {
  opt.count = k;
  opt.tol = tol;
  opt.block = std::max(opt.block, k);
  const EigenResult er = smallest_eigenpairs(p.A, p.M, opt);
  SpectrumResult s;
  s.lambda_min = er.values(0);
  for (int j = 1; j < er.values.size(); ++j) s.next_eigs.push_back(er.values(j));
  s.eigenvector = er.vectors.col(0);
  s.residual_norm = er.residuals.maxCoeff();
  s.iterations = er.iterations;
  const Eigen::VectorXd Mx = spmm(p.M, er.vectors.leftCols(1));
  double inside = 0.0, total = 0.0;
  for (Eigen::Index i = 0; i < Mx.size(); ++i) {
    const double w = s.eigenvector(i) * Mx(i);
    total += w;
    if (p.rho[i] < 0.5 * p.R) inside += w;
  }
  s.localization_fraction = inside / total;
  if (s.eigenvector.sum() < 0) s.eigenvector = -s.eigenvector;
  s.R = p.R;
  s.h = p.h;
  s.n_t = p.n_t;
  s.unknowns = p.size();
  return s;
}

struct StudyOptions {
  double h = 0.2;     // radial spacing of the coarsest level
  int n_t = 8;        // t intervals of the coarsest level
  int levels = 3;     // h, h/2, h/4, ... for Richardson extrapolation in h
  int mode = 0;
  double tol = 1e-9;
  EigenOptions eig;
  std::size_t unknown_cap = default_unknown_cap;
};

struct LevelResult {
  double h = 0.0;
  int n_t = 0;
  double lambda = 0.0;
};

struct TruncationEntry {
  double R = 0.0;
  std::vector<LevelResult> levels;
  double lambda_extrapolated = 0.0;  // Richardson in h
  double h_error = 0.0;              // |last two Richardson columns|
  std::optional<double> observed_order;
  SpectrumResult finest;
};

struct TruncationStudy {
  std::vector<TruncationEntry> entries;
  double kappa_sq = 0.0;
  double lambda_limit = 0.0;       // Richardson in 1/R^2 over the two largest radii
  double limit_error = 0.0;        // |lambda_limit - lambda(R_max)|
  double combined_tolerance = 0.0;
  bool monotone = true;            // every level nonincreasing in R
  double max_monotone_violation = 0.0;
  bool below_threshold = false;    // lambda_limit + combined_tolerance < kappa^2
  bool upper_bound_only = false;   // set when |B| decay was not verified
};

/// Romberg table on h, h/2, h/4, ... assuming an even expansion in h.
inline std::pair<double, double> richardson_h(const std::vector<double>& lam) {
  if (lam.size() == 1) return {lam[0], std::abs(lam[0]) * 1e-2};
  std::vector<std::vector<double>> T(lam.size());
  for (std::size_t l = 0; l < lam.size(); ++l) {
    T[l].push_back(lam[l]);
    for (std::size_t j = 1; j <= l; ++j) {
      const double f = std::pow(4.0, static_cast<double>(j));
      T[l].push_back(T[l][j - 1] + (T[l][j - 1] - T[l - 1][j - 1]) / (f - 1));
    }
  }
  const auto& last = T.back();
  return {last.back(), std::abs(last.back() - last[last.size() - 2])};
}

inline TruncationStudy truncation_study(const Surface& surface, const LayerConfig& cfg, const std::vector<double>& radii,
                                        const StudyOptions& opt = {}) {
  if (radii.size() < 3) throw std::invalid_argument("truncation_study: need at least 3 radii");
  if (!std::is_sorted(radii.begin(), radii.end())) throw std::invalid_argument("truncation_study: radii must increase");
  TruncationStudy st;
  st.kappa_sq = cfg.kappa_sq();
  for (double R : radii) {
    TruncationEntry e;
    e.R = R;
    std::vector<double> lam;
    for (int l = 0; l < opt.levels; ++l) {
      const double h = opt.h / std::pow(2.0, l);
      const int nt = opt.n_t << l;
      const DiscreteProblem p = axisym_reduce(surface, cfg, {R, h, nt}, opt.mode, opt.unknown_cap);
      SpectrumResult s = smallest_eigs(p, 1, opt.tol, opt.eig);
      e.levels.push_back({h, nt, s.lambda_min});
      lam.push_back(s.lambda_min);
      if (l + 1 == opt.levels) e.finest = std::move(s);
    }
    std::tie(e.lambda_extrapolated, e.h_error) = richardson_h(lam);
    if (lam.size() >= 3) {
      const double d1 = lam[lam.size() - 3] - lam[lam.size() - 2], d2 = lam[lam.size() - 2] - lam.back();
      if (d1 / d2 > 0) e.observed_order = std::log2(d1 / d2);
    }
    st.entries.push_back(std::move(e));
  }
  for (std::size_t j = 1; j < st.entries.size(); ++j)
    for (std::size_t l = 0; l < st.entries[j].levels.size(); ++l) {
      const double prev = st.entries[j - 1].levels[l].lambda, cur = st.entries[j].levels[l].lambda;
      const double slack = 10 * opt.tol * std::abs(prev);
      if (cur > prev + slack) {
        st.monotone = false;
        st.max_monotone_violation = std::max(st.max_monotone_violation, cur - prev);
      }
    }
  const auto& e1 = st.entries[st.entries.size() - 2];
  const auto& e2 = st.entries.back();
  const double w1 = e1.R * e1.R, w2 = e2.R * e2.R;
  st.lambda_limit = (w2 * e2.lambda_extrapolated - w1 * e1.lambda_extrapolated) / (w2 - w1);
  st.limit_error = std::abs(st.lambda_limit - e2.lambda_extrapolated);
  st.combined_tolerance = e2.h_error + st.limit_error + 10 * opt.tol * std::abs(e2.lambda_extrapolated);
  st.below_threshold = st.lambda_limit + st.combined_tolerance < st.kappa_sq;
  return st;
}

/// Coordinate (triplet) text: "# rows cols nnz" then "i j value" per entry, 0-based.
inline void write_triplets(std::ostream& os, const SparseMatrix& S) {
  os << "# " << S.rows() << ' ' << S.cols() << ' ' << S.nonZeros() << '\n';
  os.precision(17);
  for (Eigen::Index i = 0; i < S.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(S, i); it; ++it) os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

/// Eigenvector values as CSV rho,t,value (u,v,rho,t,value for 3-D problems).
inline void write_eigenvector_slice(std::ostream& os, const DiscreteProblem& p, const Eigen::VectorXd& x) {
  os.precision(12);
  if (p.kind == "full3d") {
    os << "u,v,rho,t,value\n";
    for (Eigen::Index i = 0; i < x.size(); ++i)
      os << p.u[i] << ',' << p.v[i] << ',' << p.rho[i] << ',' << p.t[i] << ',' << x(i) << '\n';
    return;
  }
  os << "rho,t,value\n";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << p.rho[i] << ',' << p.t[i] << ',' << x(i) << '\n';
}

}  // namespace qlayer
