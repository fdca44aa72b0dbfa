#pragma once

// Pipeline driver behind the command-line tool: runs a RunConfig, collects a
// RunReport, serializes it to JSON and writes plot columns.

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "certifier.hpp"
#include "config.hpp"
#include "quadratic_forms.hpp"
#include "spectral.hpp"
#include "surface_analysis.hpp"

namespace qlayer {

inline constexpr const char* version = "0.1.0";

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  exit_ok = 0,              // success, or verdict certified
  exit_config = 1,          // bad command line or config file
  exit_refused = 2,         // certifier refused the surface
  exit_not_found = 3,       // no certificate within the search budget
  exit_admissibility = 4,   // C a >= 1
  exit_numerical = 5,       // any other module error
};

/// A value checked against a reference: holds iff value `relation` reference
/// once the tolerance is applied in the unfavourable direction.
struct Comparison {
  std::string name;
  double value = 0.0;
  std::string relation;  // "<", ">", "~"
  double reference = 0.0;
  double tolerance = 0.0;
  bool holds = false;
};

inline Comparison compare(std::string name, double value, std::string relation, double reference, double tolerance) {
  Comparison c{std::move(name), value, std::move(relation), reference, tolerance, false};
  if (c.relation == "<") c.holds = value + tolerance < reference;
  else if (c.relation == ">") c.holds = value - tolerance > reference;
  else c.holds = std::abs(value - reference) <= tolerance;
  return c;
}

struct SurfaceDescription {
  HartmanDeficit hartman;
  std::vector<double> hartman_radii;
  double boundary_B = 0.0;  // over the largest Hartman circle
  TransverseIntegrals transverse;
};

struct SweepRow {
  double a = 0.0;
  double Ca = 0.0;
  double kappa_sq = 0.0;
  std::string verdict;
  std::optional<double> Q_value, error_budget, R;
  std::string reason;
};

/// Coordinates and values of the eigenvector kept for the slice plot.
struct EigenSlice {
  double R = 0.0, h = 0.0;
  int n_t = 0;
  std::vector<double> rho, t, value;
};

struct RunReport {
  RunConfig config;
  std::string surface_tag;
  int exit_code = exit_ok;
  std::string status = "ok";
  std::optional<std::string> error;
  double kappa_sq = 0.0;
  std::optional<AdmissibilityReport> admissibility;
  std::optional<SurfaceDescription> description;
  std::optional<Certificate> certificate;
  std::optional<TruncationStudy> spectrum;
  std::vector<SweepRow> sweep;
  std::optional<EssProbe> ess_probe;
  std::optional<EssSweep> ess_sweep;
  std::vector<Comparison> comparisons;
  std::vector<std::string> notes;
  std::vector<std::pair<std::string, double>> timings;  // seconds per stage
  std::optional<EigenSlice> slice;
  std::vector<std::string> written;  // files produced by the run
};

namespace detail {

using json = nlohmann::ordered_json;

inline json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

template <class T>
json opt_num(const std::optional<T>& x) {
  return x ? num(static_cast<double>(*x)) : json(nullptr);
}

inline json to_json(const AdmissibilityReport& r) {
  return json{{"a", num(r.a)},
              {"sup_normB", num(r.sup_normB)},
              {"Ca", num(r.Ca)},
              {"layer_admissible", r.layer_admissible()},
              {"argmax_rho", num(r.argmax_rho)},
              {"total_K", num(r.total_K)},
              {"total_abs_K", num(r.total_abs_K)},
              {"total_curvature_radius", num(r.total_curvature_radius)},
              {"K_sign", to_string(r.K_sign)},
              {"min_K", num(r.min_K)},
              {"totally_geodesic", r.totally_geodesic},
              {"asymptotically_flat", r.asymptotically_flat},
              {"flat_radius", num(r.flat_radius)},
              {"decay_exponent", opt_num(r.decay_exponent)}};
}

inline json to_json(const CutoffSpec& c) {
  return json{{"kind", to_string(c.kind)}, {"r0", num(c.r0)}, {"r1", num(c.r1)},
              {"r2", num(c.r2)},           {"r3", num(c.r3)}, {"collar_width", num(c.collar_width)}};
}

inline json to_json(const CandidateResult& c) {
  return json{{"profile", c.profile},
              {"R", num(c.R)},
              {"A", num(c.A)},
              {"b", num(c.b)},
              {"c", num(c.c)},
              {"A_err", num(c.A_err)},
              {"b_err", num(c.b_err)},
              {"c_err", num(c.c_err)},
              {"Q1_cross", num(c.Q1_cross)},
              {"epsilon", num(c.epsilon)},
              {"Q_value", num(c.Q_value)},
              {"error_budget", num(c.error_budget)},
              {"margin", num(c.margin())},
              {"norm_sq", num(c.norm_sq)},
              {"rayleigh", num(c.rayleigh)},
              {"phi_energy", num(c.phi_energy)},
              {"bound_envelope", num(c.bound_envelope)},
              {"phi", to_json(c.phi)},
              {"psi", to_json(c.psi)}};
}

inline json to_json(const Certificate& c) {
  json j{{"surface", c.surface_tag},
         {"a", num(c.a)},
         {"kappa_sq", num(c.kappa_sq)},
         {"family", to_string(c.family)},
         {"verdict", to_string(c.verdict)},
         {"reason", c.reason},
         {"Q_value", c.witness ? num(c.witness->Q_value) : json(nullptr)},
         {"error_budget", c.witness ? num(c.witness->error_budget) : json(nullptr)},
         {"witness", c.witness ? to_json(*c.witness) : json(nullptr)}};
  json search = json::array();
  for (const auto& s : c.search) search.push_back(to_json(s));
  j["search"] = std::move(search);
  if (c.family == CertificateFamily::general_curve) {
    j["delta2"] = opt_num(c.delta2);
    j["curve_length"] = opt_num(c.curve_length);
    j["enclosed_area"] = opt_num(c.enclosed_area);
    j["alignment_integral"] = opt_num(c.alignment_integral);
    j["collar_width"] = opt_num(c.collar_width);
  }
  return j;
}

inline json to_json(const TruncationStudy& s) {
  json entries = json::array();
  for (const auto& e : s.entries) {
    json levels = json::array();
    for (const auto& l : e.levels) levels.push_back(json{{"h", num(l.h)}, {"n_t", l.n_t}, {"lambda", num(l.lambda)}});
    json next = json::array();
    for (double x : e.finest.next_eigs) next.push_back(num(x));
    entries.push_back(json{{"R", num(e.R)},
                           {"levels", std::move(levels)},
                           {"lambda_extrapolated", num(e.lambda_extrapolated)},
                           {"h_error", num(e.h_error)},
                           {"observed_order", opt_num(e.observed_order)},
                           {"lambda_min_finest", num(e.finest.lambda_min)},
                           {"next_eigs", std::move(next)},
                           {"residual_norm", num(e.finest.residual_norm)},
                           {"localization_fraction", num(e.finest.localization_fraction)},
                           {"unknowns", static_cast<long long>(e.finest.unknowns)}});
  }
  return json{{"kappa_sq", num(s.kappa_sq)},
              {"lambda_limit", num(s.lambda_limit)},
              {"limit_error", num(s.limit_error)},
              {"combined_tolerance", num(s.combined_tolerance)},
              {"below_threshold", s.below_threshold},
              {"monotone", s.monotone},
              {"max_monotone_violation", num(s.max_monotone_violation)},
              {"upper_bound_only", s.upper_bound_only},
              {"entries", std::move(entries)}};
}

inline json to_json(const EssProbe& p) {
  return json{{"rayleigh_value", num(p.rayleigh_value)},
              {"gap", num(p.gap)},
              {"relative_gap", num(p.relative_gap)},
              {"kappa_sq", num(p.kappa_sq)},
              {"energy", num(p.energy)},
              {"mass", num(p.mass)},
              {"quadrature_error", num(p.quadrature_error)},
              {"cutoff", to_json(p.cutoff)}};
}

inline json to_json(const SurfaceDescription& d) {
  json radii = json::array(), seq = json::array();
  for (double r : d.hartman_radii) radii.push_back(num(r));
  for (double x : d.hartman.lambda_sequence) seq.push_back(num(x));
  const auto& t = d.transverse;
  return json{{"hartman",
               {{"radii", std::move(radii)},
                {"lambda_estimate", num(d.hartman.lambda_estimate)},
                {"lambda_sequence", std::move(seq)},
                {"total_K", num(d.hartman.total_K)},
                {"residual", num(d.hartman.residual)},
                {"relative_residual", num(d.hartman.relative_residual)},
                {"slow_convergence", d.hartman.slow_convergence}}},
              {"boundary_B_integral", num(d.boundary_B)},
              {"transverse",
               {{"chi_norm_sq", num(t.chi_norm_sq)},
                {"chi_prime_sq", num(t.chi_prime_sq)},
                {"chi_prime_identity_residual", num(t.chi_prime_identity_residual)},
                {"sigma", num(t.sigma)},
                {"C1_quadrature", num(t.C1_quadrature)},
                {"C1_stated", num(stated_C1)},
                {"odd_energy", num(t.odd_energy)},
                {"odd_norm_sq", num(t.odd_norm_sq)},
                {"curvature_moment", num(t.curvature_moment)}}}};
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

/// JSON document of a report. Everything except "timings" is a function of
/// the config and the tool version.
inline nlohmann::ordered_json report_json(const RunReport& r, bool include_timings = true) {
  using detail::json;
  json echo = json::object();
  for (const auto& [k, v] : config_echo(r.config)) echo[k] = v;
  json j{{"tool", "qlayer"},
         {"version", version},
         {"command", to_string(r.config.command)},
         {"surface", r.surface_tag},
         {"a", detail::num(r.config.a)},
         {"kappa_sq", detail::num(r.kappa_sq)},
         {"status", r.status},
         {"exit_code", r.exit_code},
         {"error", r.error ? json(*r.error) : json(nullptr)},
         {"config", std::move(echo)}};
  j["admissibility"] = r.admissibility ? detail::to_json(*r.admissibility) : json(nullptr);
  if (r.description) j["description"] = detail::to_json(*r.description);
  j["certificate"] = r.certificate ? detail::to_json(*r.certificate) : json(nullptr);
  j["spectrum"] = r.spectrum ? detail::to_json(*r.spectrum) : json(nullptr);
  if (!r.sweep.empty()) {
    json rows = json::array();
    for (const auto& s : r.sweep)
      rows.push_back(json{{"a", detail::num(s.a)},
                          {"Ca", detail::num(s.Ca)},
                          {"kappa_sq", detail::num(s.kappa_sq)},
                          {"verdict", s.verdict},
                          {"Q_value", detail::opt_num(s.Q_value)},
                          {"error_budget", detail::opt_num(s.error_budget)},
                          {"R", detail::opt_num(s.R)},
                          {"reason", s.reason}});
    j["sweep"] = std::move(rows);
  }
  if (r.ess_probe) j["ess_probe"] = detail::to_json(*r.ess_probe);
  if (r.ess_sweep) {
    json probes = json::array();
    for (const auto& p : r.ess_sweep->probes) probes.push_back(detail::to_json(p));
    j["ess_sweep"] = json{{"probes", std::move(probes)},
                          {"slope", detail::num(r.ess_sweep->fit.slope)},
                          {"intercept", detail::num(r.ess_sweep->fit.intercept)},
                          {"r_squared", detail::num(r.ess_sweep->fit.r_squared)}};
  }
  json comps = json::array();
  for (const auto& c : r.comparisons)
    comps.push_back(json{{"name", c.name},
                         {"value", detail::num(c.value)},
                         {"relation", c.relation},
                         {"reference", detail::num(c.reference)},
                         {"tolerance", detail::num(c.tolerance)},
                         {"holds", c.holds}});
  j["comparisons"] = std::move(comps);
  j["notes"] = r.notes;
  if (include_timings) {
    json t = json::object();
    for (const auto& [stage, sec] : r.timings) t[stage] = sec;
    j["timings"] = std::move(t);
  }
  return j;
}

namespace detail {

inline Certificate run_certifier(const Surface& s, const RunConfig& cfg, double a) {
  return certify_nonneg_curvature(s, LayerConfig(a), cfg.budget);
}

inline int verdict_exit(const Certificate& c) {
  switch (c.verdict) {
    case Verdict::certified: return exit_ok;
    case Verdict::refused: return exit_refused;
    case Verdict::not_found: return exit_not_found;
  }
  return exit_numerical;
}

inline void describe_stage(RunReport& r, const Surface& s) {
  Stopwatch w;
  r.admissibility = assess(s, r.config.a);
  SurfaceDescription d;
  const double L = s.length_scale();
  d.hartman_radii = {250 * L, 500 * L, 1000 * L};
  d.hartman = hartman_deficit(s, d.hartman_radii);
  d.boundary_B = boundary_B_integral(s, d.hartman_radii.back());
  d.transverse = transverse_integrals(LayerConfig(r.config.a));
  r.description = d;
  const auto& adm = *r.admissibility;
  r.comparisons.push_back(compare("Ca_below_one", adm.Ca, "<", 1.0, 0.0));
  if (adm.totally_geodesic) r.notes.push_back("refusal: the surface is totally geodesic, no bound state is expected");
  else if (!adm.layer_admissible()) r.notes.push_back("refusal: C a >= 1, the layer may self-intersect");
  else if (adm.K_sign != CurvatureSign::nonnegative) r.notes.push_back("Gauss curvature changes sign");
  r.timings.emplace_back("describe", w.seconds());
}

inline void solve_stage(RunReport& r, const Surface& s) {
  if (!s.is_radial()) {
    r.notes.push_back("solver skipped: the axisymmetric reduction needs a radial surface");
    return;
  }
  Stopwatch w;
  const LayerConfig layer(r.config.a);
  r.spectrum = truncation_study(s, layer, r.config.radii, r.config.study);
  const auto& st = *r.spectrum;
  r.comparisons.push_back(compare("lambda_limit_below_kappa_sq", st.lambda_limit, "<", st.kappa_sq, st.combined_tolerance));
  const TruncationEntry& last = st.entries.back();
  const DiscreteProblem p =
      axisym_reduce(s, layer, {last.R, last.finest.h, last.finest.n_t}, r.config.study.mode, r.config.study.unknown_cap);
  EigenSlice slice{last.R, last.finest.h, last.finest.n_t, {}, {}, {}};
  for (Eigen::Index i = 0; i < last.finest.eigenvector.size(); ++i) {
    slice.rho.push_back(p.rho[i]);
    slice.t.push_back(p.t[i]);
    slice.value.push_back(last.finest.eigenvector(i));
  }
  r.slice = std::move(slice);
  r.timings.emplace_back("solve", w.seconds());
}

inline void certify_stage(RunReport& r, const Surface& s) {
  Stopwatch w;
  r.admissibility = admissibility(s, r.config.a);  // throws AdmissibilityError
  r.certificate = run_certifier(s, r.config, r.config.a);
  r.timings.emplace_back("certify", w.seconds());
  const Certificate& c = *r.certificate;
  r.exit_code = verdict_exit(c);
  r.status = to_string(c.verdict);
  if (c.witness) {
    const auto& wit = *c.witness;
    r.comparisons.push_back(compare("certificate_Q_value_below_zero", wit.Q_value, "<", 0.0, wit.error_budget));
    r.comparisons.push_back(
        compare("witness_rayleigh_below_kappa_sq", wit.rayleigh, "<", c.kappa_sq, wit.error_budget / wit.norm_sq));
  }
  if (c.verdict != Verdict::refused) solve_stage(r, s);
}

inline void sweep_stage(RunReport& r, const Surface& s) {
  Stopwatch w;
  const double C = assess(s, r.config.a).sup_normB;
  std::vector<double> widths = r.config.sweep_a;
  if (widths.empty()) {
    if (!(C > 0)) throw ConfigError("sweep.Ca needs a curved surface; give sweep.a instead", 0, "sweep.Ca");
    for (double x : r.config.sweep_Ca) widths.push_back(x / C);
  }
  for (double a : widths) {
    SweepRow row;
    row.a = a;
    row.Ca = C * a;
    row.kappa_sq = LayerConfig(a).kappa_sq();
    if (!(row.Ca < 1)) {
      row.verdict = "refused";
      row.reason = "C a >= 1";
    } else {
      const Certificate c = run_certifier(s, r.config, a);
      row.verdict = to_string(c.verdict);
      row.reason = c.reason;
      if (c.witness) {
        row.Q_value = c.witness->Q_value;
        row.error_budget = c.witness->error_budget;
        row.R = c.witness->R;
      }
    }
    r.sweep.push_back(std::move(row));
  }
  r.timings.emplace_back("sweep", w.seconds());
}

inline void probe_stage(RunReport& r, const Surface& s) {
  Stopwatch w;
  const LayerConfig layer(r.config.a);
  const auto& p = r.config.probe;
  EssProbeOptions opt;
  opt.energy_budget = p.energy_budget;
  r.ess_probe = ess_spectrum_probe(s, layer, p.compact_radius, p.target_mass, opt);
  r.comparisons.push_back(compare("ess_rayleigh_near_kappa_sq", r.ess_probe->rayleigh_value, "~", layer.kappa_sq(),
                                  0.02 * layer.kappa_sq()));
  r.ess_sweep = ess_energy_sweep(s, layer, p.compact_radius, p.inner_log_ratios, p.plateau_radius, p.outer_log_ratio);
  r.comparisons.push_back(compare("ess_gap_linear_in_energy_r_squared", r.ess_sweep->fit.r_squared, ">", 0.98, 0.0));
  r.timings.emplace_back("probe-ess", w.seconds());
}

}  // namespace detail

/// Executes the configured command. Config problems throw ConfigError; module
/// errors are caught and recorded in the report with a matching exit code.
inline RunReport run(const RunConfig& config) {
  validate(config);
  if (config.threads > 0) set_thread_count(config.threads);
  RunReport r;
  r.config = config;
  r.kappa_sq = LayerConfig(config.a).kappa_sq();
  const Surface s = config.surface();
  r.surface_tag = s.tag();
  detail::Stopwatch total;
  std::string stage = to_string(config.command);
  try {
    switch (config.command) {
      case Command::describe: detail::describe_stage(r, s); break;
      case Command::certify: detail::certify_stage(r, s); break;
      case Command::solve: detail::solve_stage(r, s); break;
      case Command::sweep: detail::sweep_stage(r, s); break;
      case Command::probe_ess: detail::probe_stage(r, s); break;
      case Command::report:
        stage = "describe";
        detail::describe_stage(r, s);
        stage = "certify";
        detail::certify_stage(r, s);
        if (s.is_radial() && !r.admissibility->totally_geodesic) {
          stage = "probe-ess";
          detail::probe_stage(r, s);
        }
        break;
    }
  } catch (const AdmissibilityError& e) {
    r.admissibility = e.report();
    r.exit_code = exit_admissibility;
    r.status = "admissibility_error";
    r.error = stage + ": " + e.what();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    r.exit_code = exit_numerical;
    r.status = "error";
    r.error = stage + ": " + e.what();
  }
  r.timings.emplace_back("total", total.seconds());
  return r;
}

/// Writes one plot file into `dir` and returns its path. Columns are
/// whitespace separated under a '#' header line.
inline std::filesystem::path emit_plot_data(const RunReport& r, const std::string& kind,
                                            const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::filesystem::path path;
  std::ofstream os;
  auto open = [&](const char* name) {
    path = dir / name;
    os.open(path);
    if (!os) throw Error("cannot write " + path.string());
    os.precision(12);
  };
  if (kind == "eigenfunction-slice") {
    if (!r.slice) throw MissingResultError("eigenfunction-slice needs a spectrum result");
    open("eigenfunction_slice.txt");
    os << "# rho t value\n";
    for (std::size_t i = 0; i < r.slice->rho.size(); ++i)
      os << r.slice->rho[i] << ' ' << r.slice->t[i] << ' ' << r.slice->value[i] << '\n';
  } else if (kind == "lambda-vs-R") {
    if (!r.spectrum) throw MissingResultError("lambda-vs-R needs a spectrum result");
    open("lambda_vs_R.txt");
    os << "# R lambda_min\n";
    for (const auto& e : r.spectrum->entries) os << e.R << ' ' << e.lambda_extrapolated << '\n';
  } else if (kind == "margin-vs-a") {
    if (r.sweep.empty()) throw MissingResultError("margin-vs-a needs a sweep result");
    open("margin_vs_a.txt");
    os << "# a Ca Q_value kappa_sq\n";
    for (const auto& s : r.sweep)
      os << s.a << ' ' << s.Ca << ' ' << (s.Q_value ? *s.Q_value : std::nan("")) << ' ' << s.kappa_sq << '\n';
  } else {
    throw std::invalid_argument("unknown plot kind '" + kind + "'");
  }
  return path;
}

/// report.json plus the configured plots into the output directory.
inline void write_outputs(RunReport& r) {
  if (r.config.out_dir.empty()) return;
  const std::filesystem::path dir(r.config.out_dir);
  std::filesystem::create_directories(dir);
  for (const auto& kind : r.config.plots) r.written.push_back(emit_plot_data(r, kind, dir).string());
  if (r.config.command == Command::describe || r.config.command == Command::report) {
    const Surface s = r.config.surface();
    const double reach = s.domain() ? s.domain()->inscribed_radius() : 10 * s.length_scale();
    const ParameterBox box = s.domain().value_or(ParameterBox{-reach, reach, -reach, reach});
    std::ofstream os(dir / "surface_samples.csv");
    write_surface_samples(os, s, box);
    r.written.push_back((dir / "surface_samples.csv").string());
  }
  std::ofstream os(dir / "report.json");
  os << report_json(r).dump(2) << '\n';
  r.written.push_back((dir / "report.json").string());
}

}  // namespace qlayer
