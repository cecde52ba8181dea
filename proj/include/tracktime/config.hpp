#pragma once

#include <charconv>
#include <cstddef>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tracktime/error.hpp"
#include "tracktime/experiments.hpp"

namespace tracktime {

/// Scenario plus the sweep lists and detector pair used by the commands.
/// The list keys (s, sigma, d) also set the single-run values from their
/// first element.
struct Settings {
  Scenario scenario{};
  std::vector<double> s_values{1.0, 10.0};
  std::vector<double> sigma_values = default_sigma_values();
  std::vector<double> d_values = default_d_values();
  Detector detector1{50.0, 1.0, 4.5, true};
  Detector detector2{50.0, 1.0, 0.2, true};
  bool refine = false;
  bool above_barrier_check = false;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
    throw Error(ErrorCode::config, "key '" + key + "': not a number: '" + text + "'");
  }
  return v;
}

inline std::size_t parse_count(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
    throw Error(ErrorCode::config, "key '" + key + "': not a non-negative integer: '" + text + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  throw Error(ErrorCode::config, "key '" + key + "': not a boolean: '" + text + "'");
}

/// Comma-separated numbers.
inline std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
  if (out.empty()) throw Error(ErrorCode::config, "key '" + key + "': empty list");
  return out;
}

}  // namespace detail

struct ConfigKey {
  std::string name;
  std::string unit;
  std::string help;
  std::function<void(Settings&, const std::string&)> apply;
};

/// Every key accepted in config files and --set overrides.  Atomic units
/// (hbar = m = 1) throughout.
inline const std::vector<ConfigKey>& config_keys() {
  using namespace detail;
  static const std::vector<ConfigKey> keys = {
      {"x0", "length", "initial packet centre",
       [](Settings& s, const std::string& v) { s.scenario.prep.x0 = parse_double("x0", v); }},
      {"p0", "momentum", "initial mean momentum",
       [](Settings& s, const std::string& v) { s.scenario.prep.p0 = parse_double("p0", v); }},
      {"var_x", "length^2", "initial spatial variance",
       [](Settings& s, const std::string& v) { s.scenario.prep.var_x = parse_double("var_x", v); }},
      {"x_min", "length", "left grid edge",
       [](Settings& s, const std::string& v) { s.scenario.x_min = parse_double("x_min", v); }},
      {"x_max", "length", "right grid edge",
       [](Settings& s, const std::string& v) { s.scenario.x_max = parse_double("x_max", v); }},
      {"n_points", "count", "lattice points",
       [](Settings& s, const std::string& v) { s.scenario.n_points = parse_count("n_points", v); }},
      {"barrier_left", "length", "left barrier edge",
       [](Settings& s, const std::string& v) {
         s.scenario.barrier_left = parse_double("barrier_left", v);
       }},
      {"V0", "energy", "barrier height",
       [](Settings& s, const std::string& v) { s.scenario.barrier_height = parse_double("V0", v); }},
      {"d", "length", "barrier width; list for figure2, first value for single",
       [](Settings& s, const std::string& v) {
         s.d_values = parse_list("d", v);
         s.scenario.barrier_width = s.d_values.front();
       }},
      {"a", "length", "passage detector position (both detectors)",
       [](Settings& s, const std::string& v) {
         const double a = parse_double("a", v);
         s.scenario.detector.a = s.detector1.a = s.detector2.a = a;
       }},
      {"s", "energy^1/2", "detector intensity; list for figure1, first value for single",
       [](Settings& s, const std::string& v) {
         s.s_values = parse_list("s", v);
         s.scenario.detector.s = s.s_values.front();
       }},
      {"sigma", "length", "detector width; list for figure1, first value for single",
       [](Settings& s, const std::string& v) {
         s.sigma_values = parse_list("sigma", v);
         s.scenario.detector.sigma = s.sigma_values.front();
       }},
      {"s1", "energy^1/2", "intensity of figure2 detector 1",
       [](Settings& s, const std::string& v) { s.detector1.s = parse_double("s1", v); }},
      {"sigma1", "length", "width of figure2 detector 1",
       [](Settings& s, const std::string& v) { s.detector1.sigma = parse_double("sigma1", v); }},
      {"s2", "energy^1/2", "intensity of figure2 detector 2",
       [](Settings& s, const std::string& v) { s.detector2.s = parse_double("s2", v); }},
      {"sigma2", "length", "width of figure2 detector 2",
       [](Settings& s, const std::string& v) { s.detector2.sigma = parse_double("sigma2", v); }},
      {"dt", "time", "propagation step",
       [](Settings& s, const std::string& v) { s.scenario.propagator.dt = parse_double("dt", v); }},
      {"dt_dx2_limit", "time/length^2", "dt/dx^2 above which runs are flagged",
       [](Settings& s, const std::string& v) {
         s.scenario.propagator.dt_dx2_limit = parse_double("dt_dx2_limit", v);
       }},
      {"resolution_check", "bool", "reject states with norm at unresolved momenta |p| dx > pi/2",
       [](Settings& s, const std::string& v) {
         s.scenario.propagator.resolution_check = parse_bool("resolution_check", v);
       }},
      {"resolution_tolerance", "probability", "norm fraction allowed at unresolved momenta",
       [](Settings& s, const std::string& v) {
         s.scenario.propagator.resolution_tolerance = parse_double("resolution_tolerance", v);
       }},
      {"detection_t_end", "time", "length of the passage-detector record",
       [](Settings& s, const std::string& v) {
         s.scenario.detection_t_end = parse_double("detection_t_end", v);
       }},
      {"M", "count", "click-time quadrature intervals",
       [](Settings& s, const std::string& v) { s.scenario.click_intervals = parse_count("M", v); }},
      {"click_window", "1", "click density (relative to peak) bounding the click window",
       [](Settings& s, const std::string& v) {
         s.scenario.click_window = parse_double("click_window", v);
       }},
      {"horizon", "time", "post-click branch propagation time",
       [](Settings& s, const std::string& v) {
         s.scenario.branch_horizon = parse_double("horizon", v);
       }},
      {"branch_x_max", "length", "right grid edge for post-click branches",
       [](Settings& s, const std::string& v) {
         s.scenario.branch_x_max = parse_double("branch_x_max", v);
       }},
      {"tau_T_t_end", "time", "length of the detector-free flux run",
       [](Settings& s, const std::string& v) {
         s.scenario.tau_T_t_end = parse_double("tau_T_t_end", v);
       }},
      {"tau_stride", "steps", "tau grid spacing in propagation steps",
       [](Settings& s, const std::string& v) {
         s.scenario.tau_stride = parse_count("tau_stride", v);
       }},
      {"min_transmittance", "probability", "branches below this are left out of P(tau|E_b)",
       [](Settings& s, const std::string& v) {
         s.scenario.min_transmittance = parse_double("min_transmittance", v);
       }},
      {"refine", "bool", "also evaluate with 2M click intervals",
       [](Settings& s, const std::string& v) { s.refine = parse_bool("refine", v); }},
      {"above_barrier_check", "bool", "split transmission at p = sqrt(2 m V0) (figure2: second detector)",
       [](Settings& s, const std::string& v) {
         s.above_barrier_check = parse_bool("above_barrier_check", v);
       }},
  };
  return keys;
}

inline const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

/// Applies one `key=value` assignment.
inline void apply_assignment(Settings& s, const std::string& assignment,
                             const std::string& origin = "override") {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw Error(ErrorCode::config, origin + ": expected key=value, got '" + assignment + "'");
  }
  const std::string key = detail::trim(std::string_view(assignment).substr(0, eq));
  const std::string value = detail::trim(std::string_view(assignment).substr(eq + 1));
  const ConfigKey* k = find_key(key);
  if (!k) throw Error(ErrorCode::config, origin + ": unknown key '" + key + "'");
  k->apply(s, value);
}

/// Flat key=value text with '#' comments.
inline void apply_config_text(Settings& s, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    apply_assignment(s, t, origin + ":" + std::to_string(line_no));
  }
}

inline void apply_config_file(Settings& s, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::config, "cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  apply_config_text(s, buf.str(), path);
}

}  // namespace tracktime
