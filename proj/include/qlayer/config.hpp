#pragma once

// Run configuration: a flat "section.key = value" file. Lines starting with
// '#' are comments, lists are whitespace or comma separated. Every accepted
// key has a canonical echo so a report can be replayed from its config block.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "certifier.hpp"
#include "errors.hpp"
#include "spectral.hpp"
#include "surface.hpp"

namespace qlayer {

enum class Command { describe, certify, solve, sweep, probe_ess, report };

inline const char* to_string(Command c) {
  switch (c) {
    case Command::describe: return "describe";
    case Command::certify: return "certify";
    case Command::solve: return "solve";
    case Command::sweep: return "sweep";
    case Command::probe_ess: return "probe-ess";
    case Command::report: return "report";
  }
  return "?";
}

inline std::optional<Command> parse_command(std::string_view s) {
  for (Command c : {Command::describe, Command::certify, Command::solve, Command::sweep, Command::probe_ess,
                    Command::report})
    if (s == to_string(c)) return c;
  return std::nullopt;
}

struct ProbeSettings {
  double compact_radius = 100.0;
  double target_mass = 1e6;
  double energy_budget = 2.0;
  std::vector<double> inner_log_ratios{1, 2, 3, 4};
  double plateau_radius = 1e4;
  double outer_log_ratio = 2.0;
};

struct RunConfig {
  Command command = Command::describe;
  std::string family = "plane";
  Surface::Params params;
  std::optional<ParameterBox> box;
  double a = 1.0;
  std::vector<double> radii{40, 80, 160};
  StudyOptions study;
  SearchBudget budget;
  std::vector<double> sweep_a;                              // explicit widths
  std::vector<double> sweep_Ca{0.2, 0.3, 0.4, 0.5, 0.6, 0.69};  // used when sweep_a is empty
  ProbeSettings probe;
  std::string out_dir;
  std::vector<std::string> plots;
  int threads = 0;

  Surface surface() const { return make_surface(family, params, box); }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string format_number(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline double parse_number(const std::string& s, int line, const std::string& key) {
  double x = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(x))
    throw ConfigError("expected a number, got '" + s + "'", line, key);
  return x;
}

inline int parse_int(const std::string& s, int line, const std::string& key) {
  int x = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ConfigError("expected an integer, got '" + s + "'", line, key);
  return x;
}

inline bool parse_bool(const std::string& s, int line, const std::string& key) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("expected true or false, got '" + s + "'", line, key);
}

inline std::vector<double> parse_numbers(const std::string& s, int line, const std::string& key) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(parse_number(item, line, key));
  if (out.empty()) throw ConfigError("empty list", line, key);
  return out;
}

inline std::string join(const std::vector<double>& xs) {
  std::string out;
  for (double x : xs) out += (out.empty() ? "" : " ") + format_number(x);
  return out;
}

struct KeyHandler {
  std::function<void(RunConfig&, const std::string&, int)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline const std::map<std::string, KeyHandler>& key_table() {
  using S = const std::string&;
  auto num = [](double RunConfig::*field, const char* key) {
    return KeyHandler{[field, key](RunConfig& c, S v, int line) { c.*field = parse_number(v, line, key); },
                      [field](const RunConfig& c) { return format_number(c.*field); }};
  };
  static const std::map<std::string, KeyHandler> table = {
      {"command",
       {[](RunConfig& c, S v, int line) {
          const auto cmd = parse_command(v);
          if (!cmd) throw ConfigError("unknown command '" + v + "'", line, "command");
          c.command = *cmd;
        },
        [](const RunConfig& c) { return std::string(to_string(c.command)); }}},
      {"surface.family", {[](RunConfig& c, S v, int) { c.family = v; }, [](const RunConfig& c) { return c.family; }}},
      {"surface.box",
       {[](RunConfig& c, S v, int line) {
          const auto xs = parse_numbers(v, line, "surface.box");
          if (xs.size() != 4 || !(xs[0] < xs[1]) || !(xs[2] < xs[3]))
            throw ConfigError("expected u_min u_max v_min v_max", line, "surface.box");
          c.box = ParameterBox{xs[0], xs[1], xs[2], xs[3]};
        },
        [](const RunConfig& c) {
          return c.box ? join({c.box->u_min, c.box->u_max, c.box->v_min, c.box->v_max}) : std::string();
        }}},
      {"layer.a", num(&RunConfig::a, "layer.a")},
      {"solve.radii",
       {[](RunConfig& c, S v, int line) { c.radii = parse_numbers(v, line, "solve.radii"); },
        [](const RunConfig& c) { return join(c.radii); }}},
      {"solve.h",
       {[](RunConfig& c, S v, int line) { c.study.h = parse_number(v, line, "solve.h"); },
        [](const RunConfig& c) { return format_number(c.study.h); }}},
      {"solve.n_t",
       {[](RunConfig& c, S v, int line) { c.study.n_t = parse_int(v, line, "solve.n_t"); },
        [](const RunConfig& c) { return std::to_string(c.study.n_t); }}},
      {"solve.levels",
       {[](RunConfig& c, S v, int line) { c.study.levels = parse_int(v, line, "solve.levels"); },
        [](const RunConfig& c) { return std::to_string(c.study.levels); }}},
      {"solve.mode",
       {[](RunConfig& c, S v, int line) { c.study.mode = parse_int(v, line, "solve.mode"); },
        [](const RunConfig& c) { return std::to_string(c.study.mode); }}},
      {"solve.tol",
       {[](RunConfig& c, S v, int line) { c.study.tol = parse_number(v, line, "solve.tol"); },
        [](const RunConfig& c) { return format_number(c.study.tol); }}},
      {"solve.unknown_cap",
       {[](RunConfig& c, S v, int line) {
          const double x = parse_number(v, line, "solve.unknown_cap");
          if (!(x >= 1)) throw ConfigError("must be >= 1", line, "solve.unknown_cap");
          c.study.unknown_cap = static_cast<std::size_t>(x);
        },
        [](const RunConfig& c) { return std::to_string(c.study.unknown_cap); }}},
      {"certify.R_schedule",
       {[](RunConfig& c, S v, int line) { c.budget.R_schedule = parse_numbers(v, line, "certify.R_schedule"); },
        [](const RunConfig& c) { return join(c.budget.R_schedule); }}},
      {"certify.outer_log_ratio",
       {[](RunConfig& c, S v, int line) { c.budget.outer_log_ratio = parse_number(v, line, "certify.outer_log_ratio"); },
        [](const RunConfig& c) { return format_number(c.budget.outer_log_ratio); }}},
      {"certify.include_literal",
       {[](RunConfig& c, S v, int line) { c.budget.include_literal = parse_bool(v, line, "certify.include_literal"); },
        [](const RunConfig& c) { return std::string(c.budget.include_literal ? "true" : "false"); }}},
      {"quadrature.gauss_order",
       {[](RunConfig& c, S v, int line) { c.budget.grid.gauss_order = parse_int(v, line, "quadrature.gauss_order"); },
        [](const RunConfig& c) { return std::to_string(c.budget.grid.gauss_order); }}},
      {"quadrature.t_order",
       {[](RunConfig& c, S v, int line) { c.budget.grid.t_order = parse_int(v, line, "quadrature.t_order"); },
        [](const RunConfig& c) { return std::to_string(c.budget.grid.t_order); }}},
      {"quadrature.relative_width",
       {[](RunConfig& c, S v, int line) {
          c.budget.grid.relative_width = parse_number(v, line, "quadrature.relative_width");
        },
        [](const RunConfig& c) { return format_number(c.budget.grid.relative_width); }}},
      {"sweep.a",
       {[](RunConfig& c, S v, int line) { c.sweep_a = parse_numbers(v, line, "sweep.a"); },
        [](const RunConfig& c) { return join(c.sweep_a); }}},
      {"sweep.Ca",
       {[](RunConfig& c, S v, int line) { c.sweep_Ca = parse_numbers(v, line, "sweep.Ca"); },
        [](const RunConfig& c) { return join(c.sweep_Ca); }}},
      {"probe.compact_radius",
       {[](RunConfig& c, S v, int line) { c.probe.compact_radius = parse_number(v, line, "probe.compact_radius"); },
        [](const RunConfig& c) { return format_number(c.probe.compact_radius); }}},
      {"probe.energy_budget",
       {[](RunConfig& c, S v, int line) { c.probe.energy_budget = parse_number(v, line, "probe.energy_budget"); },
        [](const RunConfig& c) { return format_number(c.probe.energy_budget); }}},
      {"probe.target_mass",
       {[](RunConfig& c, S v, int line) { c.probe.target_mass = parse_number(v, line, "probe.target_mass"); },
        [](const RunConfig& c) { return format_number(c.probe.target_mass); }}},
      {"probe.inner_log_ratios",
       {[](RunConfig& c, S v, int line) { c.probe.inner_log_ratios = parse_numbers(v, line, "probe.inner_log_ratios"); },
        [](const RunConfig& c) { return join(c.probe.inner_log_ratios); }}},
      {"probe.plateau_radius",
       {[](RunConfig& c, S v, int line) { c.probe.plateau_radius = parse_number(v, line, "probe.plateau_radius"); },
        [](const RunConfig& c) { return format_number(c.probe.plateau_radius); }}},
      {"probe.outer_log_ratio",
       {[](RunConfig& c, S v, int line) { c.probe.outer_log_ratio = parse_number(v, line, "probe.outer_log_ratio"); },
        [](const RunConfig& c) { return format_number(c.probe.outer_log_ratio); }}},
      {"output.dir", {[](RunConfig& c, S v, int) { c.out_dir = v; }, [](const RunConfig& c) { return c.out_dir; }}},
      {"output.plots",
       {[](RunConfig& c, S v, int) { c.plots = split_list(v); },
        [](const RunConfig& c) {
          std::string out;
          for (const auto& p : c.plots) out += (out.empty() ? "" : " ") + p;
          return out;
        }}},
      {"run.threads",
       {[](RunConfig& c, S v, int line) { c.threads = parse_int(v, line, "run.threads"); },
        [](const RunConfig& c) { return std::to_string(c.threads); }}},
  };
  return table;
}

}  // namespace detail

/// Applies one key. `surface.<name>` keys other than family and box are shape
/// parameters of the family.
inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value, int line = 0) {
  const auto& table = detail::key_table();
  if (const auto it = table.find(key); it != table.end()) {
    it->second.set(cfg, value, line);
    return;
  }
  if (key.rfind("surface.", 0) == 0 && key.size() > 8) {
    cfg.params[key.substr(8)] = detail::parse_number(value, line, key);
    return;
  }
  throw ConfigError("unknown key", line, key);
}

inline RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = detail::trim(raw.substr(0, raw.find('#')));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line);
    const std::string key = detail::trim(s.substr(0, eq));
    const std::string value = detail::trim(s.substr(eq + 1));
    if (key.empty()) throw ConfigError("missing key", line);
    apply_setting(cfg, key, value, line);
  }
  return cfg;
}

inline RunConfig parse_config_text(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'", 0);
  return parse_config(in);
}

/// Every effective setting, sorted by key. Shape parameters appear as surface.<name>.
inline std::vector<std::pair<std::string, std::string>> config_echo(const RunConfig& cfg) {
  std::map<std::string, std::string> all;
  for (const auto& [key, h] : detail::key_table()) {
    std::string v = h.get(cfg);
    if (!v.empty()) all[key] = std::move(v);
  }
  for (const auto& [name, value] : cfg.params) all["surface." + name] = detail::format_number(value);
  return {all.begin(), all.end()};
}

inline std::string config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_echo(cfg)) out += k + " = " + v + "\n";
  return out;
}

/// Checks the invariants parsing alone cannot: a > 0, a known family, sane
/// grids, a writable output directory (created when missing).
inline void validate(const RunConfig& cfg) {
  if (!(cfg.a > 0)) throw ConfigError("must be > 0", 0, "layer.a");
  try {
    (void)cfg.surface();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), 0, "surface.family");
  }
  if (!(cfg.study.h > 0)) throw ConfigError("must be > 0", 0, "solve.h");
  if (cfg.study.n_t < 2) throw ConfigError("must be >= 2", 0, "solve.n_t");
  if (cfg.study.levels < 1) throw ConfigError("must be >= 1", 0, "solve.levels");
  if (cfg.radii.size() < 3 || !std::is_sorted(cfg.radii.begin(), cfg.radii.end()) || !(cfg.radii.front() > 0))
    throw ConfigError("need at least three increasing positive radii", 0, "solve.radii");
  for (double R : cfg.budget.R_schedule)
    if (!(R > 0)) throw ConfigError("radii must be > 0", 0, "certify.R_schedule");
  for (double a : cfg.sweep_a)
    if (!(a > 0)) throw ConfigError("widths must be > 0", 0, "sweep.a");
  for (const auto& p : cfg.plots)
    if (p != "eigenfunction-slice" && p != "lambda-vs-R" && p != "margin-vs-a")
      throw ConfigError("unknown plot kind '" + p + "'", 0, "output.plots");
  if (!cfg.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    const auto probe = std::filesystem::path(cfg.out_dir) / ".qlayer-write-test";
    std::ofstream f(probe);
    if (ec || !f) throw ConfigError("output directory is not writable", 0, "output.dir");
    f.close();
    std::filesystem::remove(probe, ec);
  }
}

}  // namespace qlayer
