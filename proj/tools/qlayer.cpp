#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <iostream>

#include "qlayer/qlayer.hpp"

namespace {

// "family" or "family:key=value,key=value".
void apply_surface(qlayer::RunConfig& cfg, const std::string& spec) {
  const auto colon = spec.find(':');
  qlayer::apply_setting(cfg, "surface.family", spec.substr(0, colon));
  if (colon == std::string::npos) return;
  for (const auto& item : qlayer::detail::split_list(spec.substr(colon + 1))) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw qlayer::ConfigError("expected key=value in '" + item + "'", 0, "--surface");
    qlayer::apply_setting(cfg, "surface." + item.substr(0, eq), item.substr(eq + 1));
  }
}

// "h=0.2,n_t=8,radii=40/80/160": solve.* keys, '/' separates list items.
void apply_grid(qlayer::RunConfig& cfg, const std::string& spec) {
  for (const auto& item : qlayer::detail::split_list(spec)) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw qlayer::ConfigError("expected key=value in '" + item + "'", 0, "--grid");
    std::string value = item.substr(eq + 1);
    std::replace(value.begin(), value.end(), '/', ' ');
    qlayer::apply_setting(cfg, "solve." + item.substr(0, eq), value);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bound states of Dirichlet layers along surfaces in R^3"};
  std::string config_path, surface, command, out, grid, budget;
  std::optional<double> a;
  std::optional<int> threads;
  std::vector<std::string> plots;
  bool quiet = false;
  app.add_option("config", config_path, "Config file (section.key = value lines)");
  app.add_option("--surface", surface, "Surface family, optionally family:key=value,...");
  app.add_option("--a", a, "Layer half-width");
  app.add_option("--command", command, "describe, certify, solve, sweep, probe-ess or report");
  app.add_option("--out", out, "Output directory for report.json and plot files");
  app.add_option("--grid", grid, "Solver grid, e.g. h=0.2,n_t=8,levels=3,radii=40/80/160");
  app.add_option("--budget", budget, "Certifier R schedule in units of 1/sup|B|, e.g. 20,40,80");
  app.add_option("--threads", threads, "Worker threads (overrides QLAYER_THREADS)");
  app.add_option("--plot", plots, "Plot file to write: eigenfunction-slice, lambda-vs-R, margin-vs-a");
  app.add_flag("--quiet", quiet, "Do not print the report to stdout");
  CLI11_PARSE(app, argc, argv);

  qlayer::RunReport report;
  try {
    qlayer::RunConfig cfg = config_path.empty() ? qlayer::RunConfig{} : qlayer::load_config(config_path);
    if (!surface.empty()) apply_surface(cfg, surface);
    if (a) cfg.a = *a;
    if (!command.empty()) qlayer::apply_setting(cfg, "command", command);
    if (!out.empty()) cfg.out_dir = out;
    if (!grid.empty()) apply_grid(cfg, grid);
    if (!budget.empty()) qlayer::apply_setting(cfg, "certify.R_schedule", budget);
    for (const auto& p : plots) cfg.plots.push_back(p);
    if (threads) cfg.threads = *threads;
    else if (std::getenv("QLAYER_THREADS")) cfg.threads = 0;
    report = qlayer::run(cfg);
    qlayer::write_outputs(report);
  } catch (const qlayer::ConfigError& e) {
    std::cerr << "qlayer: " << e.what() << '\n';
    return qlayer::exit_config;
  } catch (const std::exception& e) {
    std::cerr << "qlayer: " << e.what() << '\n';
    return qlayer::exit_numerical;
  }
  if (!quiet) std::cout << qlayer::report_json(report).dump(2) << '\n';
  if (report.error) std::cerr << "qlayer: " << *report.error << '\n';
  return report.exit_code;
}
