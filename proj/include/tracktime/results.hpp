#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracktime/error.hpp"
#include "tracktime/experiments.hpp"

#ifndef TRACKTIME_VERSION
#define TRACKTIME_VERSION "unknown"
#endif

namespace tracktime {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = TRACKTIME_VERSION;

/// Column-ordered table of sweep outputs; the last column is a status string.
struct SweepTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> values;
  std::vector<std::string> status;
};

/// 17 significant digits; non-finite values as nan/inf.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string to_csv(const SweepTable& table) {
  std::string out;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c) out += ',';
    out += table.header[c];
  }
  out += '\n';
  for (std::size_t r = 0; r < table.values.size(); ++r) {
    for (double v : table.values[r]) {
      out += format_number(v);
      out += ',';
    }
    out += table.status[r];
    out += '\n';
  }
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  f << text;
  f.close();
  if (!f) throw Error(ErrorCode::io, "failed writing " + path.string());
}

inline SweepTable to_table(const Figure1Result& r) {
  SweepTable t;
  t.header = {"s", "sigma", "dq_mean_p", "delta_dq", "efficiency", "status"};
  for (const auto& row : r.rows) {
    t.values.push_back({row.s, row.sigma, row.dq_mean_p, row.delta_dq, row.efficiency});
    t.status.push_back(row.status);
  }
  return t;
}

inline SweepTable to_table(const Figure2Result& r) {
  SweepTable t;
  t.header = {"d",           "tau1",       "tau2",       "tau_T",  "p_b_given_a_1",
              "p_b_given_a_2", "clip_frac_1", "clip_frac_2", "status"};
  for (const auto& row : r.rows) {
    t.values.push_back({row.d, row.det1.tau, row.det2.tau, row.tau_T, row.det1.p_b_given_a,
                        row.det2.p_b_given_a, row.det1.clipped_fraction,
                        row.det2.clipped_fraction});
    t.status.push_back(row.status());
  }
  return t;
}

/// JSON has no NaN; absent values are written as null.
inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json number_or_null(const std::optional<double>& v) {
  return v ? number_or_null(*v) : json(nullptr);
}

inline json to_json(const Detector& d) {
  return {{"a", d.a}, {"s", d.s}, {"sigma", d.sigma}};
}

inline json to_json(const Scenario& sc) {
  const Grid g = sc.grid();
  return {
      {"prep", {{"x0", sc.prep.x0}, {"p0", sc.prep.p0}, {"var_x", sc.prep.var_x}}},
      {"units", {{"hbar", units::hbar}, {"mass", units::mass}}},
      {"grid", {{"x_min", g.x_min}, {"x_max", g.x_max}, {"n_points", g.n_points}, {"dx", g.dx}}},
      {"barrier",
       {{"left", sc.barrier_left}, {"height", sc.barrier_height}, {"width", sc.barrier_width}}},
      {"detector_a", to_json(sc.detector)},
      {"b", sc.b()},
      {"propagation",
       {{"dt", sc.propagator.dt},
        {"dt_over_dx2", sc.propagator.dt / (g.dx * g.dx)},
        {"dt_dx2_limit", sc.propagator.dt_dx2_limit},
        {"resolution_check", sc.propagator.resolution_check},
        {"resolution_limit", sc.propagator.resolution_limit},
        {"resolution_tolerance", sc.propagator.resolution_tolerance},
        {"boundary", "hard_wall"}}},
      {"detection_t_end", sc.detection_t_end},
      {"M", sc.click_intervals},
      {"click_window", sc.click_window},
      {"branch_horizon", sc.branch_horizon},
      {"branch_x_max", sc.branch_x_max},
      {"tau_T_t_end", sc.tau_T_t_end},
      {"tau_stride", sc.tau_stride},
      {"min_transmittance", sc.min_transmittance},
  };
}

inline json tolerances_json() {
  return {{"norm_drift", kNormDriftTolerance},
          {"plateau", kPlateauTolerance},
          {"min_efficiency", kMinEfficiency},
          {"max_clipped_fraction", kMaxClippedFraction},
          {"horizon_decay", kHorizonDecay},
          {"tau_coverage", kTauCoverageTolerance},
          {"boundary_mass_warn", kBoundaryWarnMass},
          {"prep_boundary", kPrepBoundaryTolerance}};
}

inline json sidecar(const Figure1Result& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"s", row.s},
                    {"sigma", row.sigma},
                    {"efficiency", number_or_null(row.efficiency)},
                    {"click_converged", row.click_converged},
                    {"status", row.status}});
  }
  return {{"kind", "figure1"},
          {"tool_version", kToolVersion},
          {"scenario", to_json(r.base)},
          {"tolerances", tolerances_json()},
          {"reference", {{"mean_p", r.reference_mean_p}, {"delta_p", r.reference_delta_p}}},
          {"rows", rows}};
}

inline json to_json(const DetectorColumn& c) {
  return {{"tau", number_or_null(c.tau)},
          {"tau_refined", number_or_null(c.tau_refined)},
          {"p_b_given_a", number_or_null(c.p_b_given_a)},
          {"clipped_fraction", number_or_null(c.clipped_fraction)},
          {"efficiency", number_or_null(c.efficiency)},
          {"flux_norm_mismatch", number_or_null(c.flux_norm_mismatch)},
          {"click_converged", c.click_converged},
          {"horizon_ok", c.horizon_ok},
          {"boundary_ok", c.boundary_ok},
          {"above_barrier", number_or_null(c.above_barrier)},
          {"below_barrier", number_or_null(c.below_barrier)},
          {"status", c.status}};
}

inline json sidecar(const Figure2Result& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"d", row.d},
                    {"detector1", to_json(row.det1)},
                    {"detector2", to_json(row.det2)},
                    {"tau_T", number_or_null(row.tau_T)},
                    {"tau_T_horizon_ok", row.tau_T_horizon_ok},
                    {"tau_T_status", row.tau_T_status},
                    {"status", row.status()}});
  }
  return {{"kind", "figure2"},
          {"tool_version", kToolVersion},
          {"scenario", to_json(r.base)},
          {"detector1", to_json(r.detector1)},
          {"detector2", to_json(r.detector2)},
          {"refine", r.options.refine},
          {"above_barrier_check", r.options.above_barrier_check},
          {"tolerances", tolerances_json()},
          {"rows", rows}};
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
template <class Result>
void write_results(const Result& result, const std::filesystem::path& dir,
                   const std::string& stem) {
  write_text(dir / (stem + ".csv"), to_csv(to_table(result)));
  write_text(dir / (stem + ".json"), sidecar(result).dump(2) + "\n");
}

}  // namespace tracktime
