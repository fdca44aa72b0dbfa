#include <gtest/gtest.h>

#include "qlayer/certifier.hpp"

using namespace qlayer;

namespace {

// 2 pi int f(rho) r(rho) drho by composite Gauss, independent of the polar grid.
double radial_integral(const Surface& s, double lo, double hi, const std::function<double(double)>& f) {
  return 2 * pi * integrate([&](double rho) { return f(rho) * s.r_of_rho(rho); }, lo, hi, 64, 16);
}

double mean_curvature(const Surface& s, double rho) { return detail::sample_at_rho(s, rho).H; }

QuadratureGrid grid_for(const Surface& s, const LayerConfig& cfg, const std::vector<const LayerField*>& fields) {
  PolarGridSpec spec;
  spec.breakpoints = {0.0};
  for (const auto* f : fields) spec.breakpoints.insert(spec.breakpoints.end(), f->breakpoints.begin(), f->breakpoints.end());
  return QuadratureGrid::polar(s, spec, cfg);
}

}  // namespace

TEST(Cutoff, FlatLogTransitionEnergy) {
  const double e = std::exp(1.0);
  const RadialCutoff c = build_parabolic_cutoff({CutoffKind::parabolic_log, 1.0, e, e, e * std::exp(10.0)}, Surface::plane());
  EXPECT_NEAR(c.dirichlet_energy, 2 * pi * (1 + 0.1), 1e-9);
  EXPECT_EQ(c.value(0.5), 0.0);
  EXPECT_EQ(c.value(e), 1.0);
  EXPECT_NEAR(c.value(std::sqrt(e)), 0.5, 1e-15);
}

TEST(Cutoff, HyperboloidInnerTransition) {
  // Far out the surface is a cone with r = rho / sqrt2, so the energy is 2 pi / (sqrt2 log 100).
  const Surface s = Surface::hyperboloid();
  const RadialCutoff c = build_parabolic_cutoff({CutoffKind::parabolic_log, 10, 1e3, 1e3, 1e3 * std::exp(10.0)}, s);
  const double inner = radial_integral(s, 10, 1e3, [&](double x) { return std::pow(c.derivative(x), 2); });
  EXPECT_NEAR(inner, 2 * pi / (std::sqrt(2.0) * std::log(100.0)), 0.05 * inner);
  EXPECT_NEAR(c.dirichlet_energy, inner + 2 * pi / (std::sqrt(2.0) * 10), 1e-3 * inner);
  EXPECT_THROW(build_parabolic_cutoff({CutoffKind::parabolic_log, 10, 1e3, 1e3, 1e3 * std::exp(1e3)}, s),
               std::invalid_argument);
}

TEST(Cutoff, PlateauMassBoundsArea) {
  const Surface s = Surface::hyperboloid();
  const RadialCutoff c = build_parabolic_cutoff({CutoffKind::parabolic_log, 5, 10, 40, 80}, s);
  EXPECT_GE(c.mass, c.plateau_area);
  EXPECT_NEAR(c.plateau_area, radial_integral(s, 10, 40, [](double) { return 1.0; }), 1e-9 * c.plateau_area);
}

TEST(Cutoff, AnnulusBumpBounds) {
  const Surface s = Surface::hyperboloid();
  for (double R : {14.0, 28.0, 113.0}) {
    const RadialCutoff j =
        build_annulus_bump({CutoffKind::annulus_bump, 4 * R / 3, 17 * R / 12, 19 * R / 12, 5 * R / 3}, s);
    for (int k = 0; k <= 2000; ++k) {
      const double x = 4 * R / 3 + (R / 3) * k / 2000.0;
      EXPECT_GE(j.value(x), 0.0);
      EXPECT_LE(j.value(x), 1.0);
      EXPECT_LT(std::abs(j.derivative(x)), 2.0);
    }
    EXPECT_EQ(j.value(1.5 * R), 1.0);
  }
}

TEST(Cutoff, RejectsBadRadii) {
  EXPECT_THROW(build_parabolic_cutoff({CutoffKind::parabolic_log, 2, 1, 3, 4}, Surface::plane()), std::invalid_argument);
  EXPECT_THROW(build_parabolic_cutoff({CutoffKind::parabolic_log, 1, 2, 3, 4}, Surface::plane(), 3.5), CoverageError);
  EXPECT_THROW(build_curve_collar({CutoffKind::curve_collar, 0, 0, 3, 0, 0.0}, Surface::plane()), std::invalid_argument);
}

TEST(NonnegCurvature, PlaneRefused) {
  const Certificate c = certify_nonneg_curvature(Surface::plane(), LayerConfig(1.0));
  EXPECT_EQ(c.verdict, Verdict::refused);
  EXPECT_EQ(c.family, CertificateFamily::flat_refusal);
  EXPECT_FALSE(c.witness.has_value());
}

TEST(NonnegCurvature, WideLayerRefused) {
  const Certificate c = certify_nonneg_curvature(Surface::hyperboloid(), LayerConfig(1.0));
  EXPECT_EQ(c.verdict, Verdict::refused);
  EXPECT_NE(c.reason.find(">= 1"), std::string::npos);
}

TEST(NonnegCurvature, MixedCurvatureAndNonRadialRefused) {
  EXPECT_EQ(certify_nonneg_curvature(Surface::gaussian_bump(), LayerConfig(0.2)).verdict, Verdict::refused);
  EXPECT_EQ(certify_nonneg_curvature(make_surface("elliptic_bump", {}), LayerConfig(0.2)).verdict, Verdict::refused);
}

TEST(NonnegCurvature, HyperboloidCertified) {
  const Surface s = Surface::hyperboloid();
  const LayerConfig cfg(0.5);
  const Certificate c = certify_nonneg_curvature(s, cfg);
  ASSERT_EQ(c.verdict, Verdict::certified) << c.reason;
  ASSERT_TRUE(c.witness);
  EXPECT_LT(c.witness->Q_value + c.witness->error_budget, 0.0);
  EXPECT_LT(c.witness->rayleigh, cfg.kappa_sq());
  EXPECT_DOUBLE_EQ(c.kappa_sq, pi * pi);
  EXPECT_NEAR(c.witness->epsilon, -c.witness->b / c.witness->c, 1e-15 * std::abs(c.witness->epsilon));
  // Q(phi chi) stays under the curvature envelope.
  EXPECT_LT(c.witness->A, c.witness->bound_envelope);
}

TEST(NonnegCurvature, WitnessSurvivesRefinement) {
  const Surface s = Surface::hyperboloid();
  const LayerConfig cfg(0.5);
  const Certificate c = certify_nonneg_curvature(s, cfg);
  ASSERT_EQ(c.verdict, Verdict::certified);
  const LayerField w = witness_field(s, cfg, c);
  const QuadratureGrid fine = grid_for(s, cfg, {&w}).refined();
  const FormValue v = eval_forms(w, fine);
  EXPECT_LT(v.Q, 0.0);
  EXPECT_NEAR(v.Q, c.witness->Q_value, c.witness->error_budget + v.quadrature_error_estimate);
  EXPECT_LT(rayleigh_quotient(w, fine), cfg.kappa_sq());
}

TEST(NonnegCurvature, CrossTermStructure) {
  const Surface s = Surface::hyperboloid();
  const LayerConfig cfg(0.5);
  const double C1 = transverse_integrals(cfg).C1_quadrature;
  for (const char* profile : {"literal", "core"}) {
    const auto f = nonneg_candidate(s, cfg, profile, 20.0, 10.0);
    const CandidateResult r = detail::evaluate_candidate(s, cfg, f, {});
    // psi lives where phi = 1, so the horizontal part of the cross term vanishes.
    EXPECT_LE(std::abs(r.Q1_cross), 1e-12 * std::max(1.0, std::abs(r.b))) << profile;
    // Odd chi1: only the -H t part of the volume factor survives.
    const double Hpsi = radial_integral(s, f.psi.spec.r0, f.psi.spec.r3, [&](double x) {
      const double H = mean_curvature(s, x);
      return (std::string(profile) == "core" ? H * H : H) * f.psi.value(x);
    });
    EXPECT_NEAR(r.b, -C1 * Hpsi, 10 * r.b_err + 1e-8 * std::abs(r.b)) << profile;
    EXPECT_LT(r.b * r.b / r.c, std::abs(r.b) * 1e3);  // finite optimum
  }
}

TEST(NonnegCurvature, EvenProfileKillsCrossTerm) {
  // An even transverse profile with vanishing t^2 moment against chi: every
  // term of the volume polynomial then integrates to zero.
  const Surface s = Surface::hyperboloid();
  const LayerConfig cfg(0.5);
  const TransverseProfile chi = ground_mode(cfg), m3 = dirichlet_mode(cfg, 3), m5 = dirichlet_mode(cfg, 5);
  const double a = cfg.a(), k2 = cfg.kappa_sq();
  auto moment = [&](const TransverseProfile& tau) {
    return integrate([&](double t) { return (chi.derivative(t) * tau.derivative(t) - k2 * chi.value(t) * tau.value(t)) * t * t; },
                     -a, a, 4, 32);
  };
  const double w = -moment(m3) / moment(m5);
  const TransverseProfile even{"even", [=](double t) { return m3.value(t) + w * m5.value(t); },
                               [=](double t) { return m3.derivative(t) + w * m5.derivative(t); }};
  auto f = nonneg_candidate(s, cfg, "literal", 20.0, 10.0);
  const CandidateResult odd = detail::evaluate_candidate(s, cfg, f, {});
  f.perturb = separable(f.psi.field(), even, f.psi.spec.r0, f.psi.spec.r3, f.psi.breakpoints, "j*even");
  const CandidateResult ev = detail::evaluate_candidate(s, cfg, f, {});
  EXPECT_LT(std::abs(ev.b), std::max(ev.error_budget, 1e-12 * std::abs(odd.b)));
  EXPECT_GT(std::abs(odd.b), 1e3 * std::abs(ev.b));
}

TEST(NonnegCurvature, LiteralScalingInR) {
  const Surface s = Surface::hyperboloid();
  const LayerConfig cfg(0.5);
  std::vector<double> lr, lb, lc;
  for (double R : {20.0, 40.0, 80.0}) {
    const CandidateResult r = detail::evaluate_candidate(s, cfg, nonneg_candidate(s, cfg, "literal", R, 10.0), {});
    lr.push_back(std::log(R));
    lb.push_back(std::log(std::abs(r.b)));
    lc.push_back(std::log(r.c));
    EXPECT_LT(r.epsilon * r.b, 0.0);  // -b^2/c < 0 strictly
  }
  EXPECT_NEAR(fit_line(lr, lb).slope, 1.0, 0.1);
  EXPECT_NEAR(fit_line(lr, lc).slope, 2.0, 0.1);
}

TEST(NonnegCurvature, ScheduleIsRecorded) {
  SearchBudget b;
  b.R_schedule = {20};
  const Certificate c = certify_nonneg_curvature(Surface::hyperboloid(), LayerConfig(0.5), b);
  EXPECT_EQ(c.search.size(), 2u);
  EXPECT_NEAR(c.search.front().R, 20 / std::sqrt(2.0), 1e-9);
}

TEST(GeneralCurve, HyperboloidAlignment) {
  const Surface s = Surface::hyperboloid();
  const double d2 = curve_alignment(s, 50.0, Vec3::UnitZ());
  EXPECT_NEAR(d2, std::sqrt(0.5), 0.01);
  const Certificate c = certify_general_curve(s, LayerConfig(0.5));
  ASSERT_TRUE(c.delta2 && c.alignment_integral && c.curve_length);
  EXPECT_NEAR(*c.curve_length, 2 * pi * 50, 1e-9);
  // -int grad z . grad rho~ approaches delta2 times the length as the collar thins.
  EXPECT_NEAR(*c.alignment_integral, *c.delta2 * *c.curve_length, 0.05 * *c.alignment_integral);
  EXPECT_NE(c.verdict, Verdict::refused);
  EXPECT_TRUE(c.witness);
}

TEST(GeneralCurve, CollarConsistency) {
  const Surface s = Surface::hyperboloid();
  const double rho_c = s.rho_of_r(50.0);
  std::vector<double> vals;
  for (double frac : {0.05, 0.025}) {
    const RadialCutoff col =
        build_curve_collar({CutoffKind::curve_collar, 0, 0, rho_c, 0, frac * rho_c}, s);
    vals.push_back(collar_alignment_integral(s, col, Vec3::UnitZ()));
  }
  EXPECT_LT(std::abs(vals[0] - vals[1]), 0.05 * std::abs(vals[0]));
}

TEST(GeneralCurve, PlaneHasNoCrossTerm) {
  const Certificate c = certify_general_curve(Surface::plane(), LayerConfig(1.0));
  EXPECT_EQ(c.verdict, Verdict::not_found);
  ASSERT_TRUE(c.witness);
  EXPECT_LE(std::abs(c.witness->b), c.witness->b_err + 1e-12);
}

TEST(GeneralCurve, MisalignedDirectionThrows) {
  CurveOptions o;
  o.direction = -Vec3::UnitZ();
  EXPECT_THROW(certify_general_curve(Surface::hyperboloid(), LayerConfig(0.5), o), AlignmentError);
}

TEST(EssProbe, PlaneClosedForm) {
  const LayerConfig cfg(1.0);
  EssProbeOptions o;
  o.energy_budget = 0.1;
  const EssProbe p = ess_spectrum_probe(Surface::plane(), cfg, 10.0, 1e6, o);
  EXPECT_NEAR(p.rayleigh_value, cfg.kappa_sq() + p.energy / p.mass, 1e-9 * cfg.kappa_sq());
  EXPECT_LT(p.relative_gap, 0.01);
  EXPECT_GE(p.mass, 1e6);
}

TEST(EssProbe, HyperboloidFarField) {
  const LayerConfig cfg(0.5);
  const EssProbe p = ess_spectrum_probe(Surface::hyperboloid(), cfg, 100.0, 1e6);
  EXPECT_NEAR(p.rayleigh_value, cfg.kappa_sq(), 0.02 * cfg.kappa_sq());
  EXPECT_GE(p.gap, -p.quadrature_error / p.mass - 1e-12);
}

TEST(EssProbe, GapLinearInEnergy) {
  const LayerConfig cfg(0.5);
  const EssSweep sw = ess_energy_sweep(Surface::hyperboloid(), cfg, 100.0, {1, 2, 3, 4}, 1e4, 2.0);
  ASSERT_EQ(sw.probes.size(), 4u);
  EXPECT_GE(sw.fit.r_squared, 0.98);
  EXPECT_GT(sw.fit.slope, 0.0);
  for (std::size_t i = 1; i < sw.probes.size(); ++i) EXPECT_LT(sw.probes[i].energy, sw.probes[i - 1].energy);
}
