#pragma once

#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tracktime/config.hpp"
#include "tracktime/error.hpp"
#include "tracktime/experiments.hpp"
#include "tracktime/results.hpp"

namespace tracktime::cli {

enum ExitCode : int { kOk = 0, kFlagged = 1, kConfigError = 2, kIoError = 3 };

struct RunConfig {
  std::string config_path;
  std::string out_dir = ".";
  std::vector<std::string> overrides;
  std::size_t workers = 1;
  bool verbose = false;
  bool create_out = false;
};

inline std::string keys_help() {
  std::ostringstream os;
  os << "Override keys (--set KEY=VALUE, or KEY=VALUE lines in --config; atomic units):\n";
  for (const auto& k : config_keys()) {
    os << "  " << k.name;
    for (std::size_t pad = k.name.size(); pad < 22; ++pad) os << ' ';
    os << '[' << k.unit << "] " << k.help << '\n';
  }
  return os.str();
}

inline Settings load_settings(const RunConfig& rc) {
  Settings s;
  if (!rc.config_path.empty()) apply_config_file(s, rc.config_path);
  for (const auto& o : rc.overrides) apply_assignment(s, o);
  // Structural problems with the scenario are configuration errors, not
  // per-row scientific failures.
  const Grid g = s.scenario.grid();
  prepare_gaussian(g, s.scenario.prep);
  if (!(s.scenario.propagator.dt > 0.0)) throw Error(ErrorCode::config, "dt must be positive");
  if (s.scenario.click_intervals == 0) throw Error(ErrorCode::config, "M must be positive");
  if (s.scenario.tau_stride == 0) throw Error(ErrorCode::config, "tau_stride must be positive");
  const double tol = s.scenario.propagator.resolution_tolerance;
  if (!(tol >= 0.0 && tol < 1.0)) {
    throw Error(ErrorCode::config, "resolution_tolerance must lie in [0, 1)");
  }
  return s;
}

inline std::filesystem::path prepare_out_dir(const RunConfig& rc) {
  std::filesystem::path dir(rc.out_dir);
  std::error_code ec;
  if (std::filesystem::is_directory(dir, ec)) return dir;
  if (!rc.create_out) {
    throw Error(ErrorCode::io, "output directory '" + rc.out_dir + "' does not exist (use --mkdir)");
  }
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create '" + rc.out_dir + "': " + ec.message());
  return dir;
}

inline int cmd_figure1(const RunConfig& rc, std::ostream& out) {
  const Settings s = load_settings(rc);
  const auto dir = prepare_out_dir(rc);
  const auto res = run_figure1(s.scenario, s.sigma_values, s.s_values, rc.workers);
  write_results(res, dir, "figure1");
  int flagged = 0;
  for (const auto& row : res.rows) flagged += row.status != "ok";
  out << "figure1: " << res.rows.size() << " rows, " << flagged << " flagged -> "
      << (dir / "figure1.csv").string() << '\n';
  return flagged ? kFlagged : kOk;
}

inline int cmd_figure2(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const Settings s = load_settings(rc);
  const auto dir = prepare_out_dir(rc);
  std::mutex log_mutex;
  Figure2Options opts;
  opts.refine = s.refine;
  opts.above_barrier_check = s.above_barrier_check;
  opts.workers = rc.workers;
  if (rc.verbose) {
    opts.progress = [&](const std::string& line) {
      std::lock_guard lock(log_mutex);
      err << line << '\n';
    };
  }
  const auto res = run_figure2(s.scenario, s.detector1, s.detector2, s.d_values, opts);
  write_results(res, dir, "figure2");
  int flagged = 0;
  for (const auto& row : res.rows) flagged += row.status() != "ok";
  out << "figure2: " << res.rows.size() << " rows, " << flagged << " flagged -> "
      << (dir / "figure2.csv").string() << '\n';
  return flagged ? kFlagged : kOk;
}

inline int cmd_single(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const Settings s = load_settings(rc);
  const auto dir = prepare_out_dir(rc);
  std::mutex log_mutex;
  TraversalOptions opts;
  opts.intervals = s.scenario.click_intervals;
  opts.refine = s.refine;
  opts.above_barrier_check = s.above_barrier_check;
  opts.workers = rc.workers;
  if (rc.verbose) {
    opts.log = [&](const std::string& line) {
      std::lock_guard lock(log_mutex);
      err << line << '\n';
    };
  }

  const auto t = run_traversal(s.scenario, opts);
  const auto tt = run_tau_T(s.scenario);

  std::string csv = "tau,density\n";
  for (std::size_t k = 0; k < t.result.tau_grid.size(); ++k) {
    csv += format_number(t.result.tau_grid[k]) + ',' + format_number(t.result.density[k]) + '\n';
  }
  write_text(dir / "single.csv", csv);

  json branches = json::array();
  for (const auto& smp : t.samples) {
    branches.push_back({{"t_a", smp.t_a},
                        {"weight", smp.weight},
                        {"transmittance", smp.transmittance},
                        {"reaches_b", smp.arrival.has_value()}});
  }
  const json doc = {
      {"kind", "single"},
      {"tool_version", kToolVersion},
      {"scenario", to_json(s.scenario)},
      {"tolerances", tolerances_json()},
      {"mean_tau", t.result.mean_tau},
      {"mean_tau_refined", t.refined ? json(t.refined->mean_tau) : json(nullptr)},
      {"p_b_given_a", t.result.p_b_given_a},
      {"tau_T", tt.tau_T},
      {"tau_T_t_c", tt.t_c},
      {"tau_T_horizon_ok", tt.horizon_ok},
      {"efficiency", t.efficiency},
      {"click_converged", t.click_converged},
      {"dq_mean_p", t.dq_mean_p},
      {"delta_dq", t.delta_dq},
      {"max_clipped_fraction", t.max_clipped_fraction},
      {"max_flux_norm_mismatch", t.max_flux_norm_mismatch},
      {"horizon_ok", t.horizon_ok},
      {"boundary_ok", t.boundary_ok},
      {"tau_coverage", t.result.coverage},
      {"branches_included", t.result.included},
      {"above_barrier", number_or_null(t.above_barrier)},
      {"below_barrier", number_or_null(t.below_barrier)},
      {"branches", branches},
  };
  write_text(dir / "single.json", doc.dump(2) + "\n");

  out << "mean_tau " << format_number(t.result.mean_tau) << '\n'
      << "p_b_given_a " << format_number(t.result.p_b_given_a) << '\n'
      << "tau_T " << format_number(tt.tau_T) << '\n'
      << "efficiency " << format_number(t.efficiency) << '\n'
      << "max_clipped_fraction " << format_number(t.max_clipped_fraction) << '\n'
      << "max_flux_norm_mismatch " << format_number(t.max_flux_norm_mismatch) << '\n';
  return kOk;
}

/// Entry point shared by the executable and the tests.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout,
                std::ostream& err = std::cerr) {
  CLI::App app{"Two-detector barrier traversal-time simulator"};
  app.footer(keys_help());
  app.require_subcommand(1);

  RunConfig rc;
  auto add_common = [&rc](CLI::App* cmd) {
    cmd->add_option("--config", rc.config_path, "flat key=value scenario file");
    cmd->add_option("--out", rc.out_dir, "output directory")->capture_default_str();
    cmd->add_option("--set", rc.overrides, "KEY=VALUE override, repeatable, applied last");
    cmd->add_option("--workers", rc.workers, "worker threads")->check(CLI::PositiveNumber);
    cmd->add_flag("--verbose", rc.verbose, "progress and per-branch log on stderr");
    cmd->add_flag("--mkdir", rc.create_out, "create the output directory if missing");
  };
  auto* f1 = app.add_subcommand("figure1", "momentum width after detection vs detector width");
  auto* f2 = app.add_subcommand("figure2", "mean traversal times vs barrier width");
  auto* single = app.add_subcommand("single", "tau density for one barrier and detector");
  for (auto* c : {f1, f2, single}) {
    add_common(c);
    c->footer(keys_help());
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kConfigError;
  }

  try {
    if (*f1) return cmd_figure1(rc, out);
    if (*f2) return cmd_figure2(rc, out, err);
    return cmd_single(rc, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    switch (e.code()) {
      case ErrorCode::config:
      case ErrorCode::invalid_extent:
      case ErrorCode::support_violation:
        return kConfigError;
      case ErrorCode::io:
        return kIoError;
      default:
        return kFlagged;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFlagged;
  }
}

}  // namespace tracktime::cli
