// Command-line front end: scenario validation, Monte Carlo runs with CSV/JSON
// artifacts, cross-run comparison and observability reports.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dkf/harness.hpp"
#include "dkf/observability.hpp"
#include "dkf/scenario.hpp"
#include "dkf/topology.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitChecks = 3;

int env_threads() {
  const char* value = std::getenv("DKF_THREADS");
  if (value == nullptr) return 0;
  return std::max(0, std::atoi(value));
}

struct ValidationOutcome {
  bool hard_fail = false;
  bool warnings = false;
};

/// Run every validator over the scenario and print a findings report.
ValidationOutcome validate_scenario(const dkf::ScenarioConfig& cfg, std::ostream& out) {
  ValidationOutcome outcome;
  const dkf::RegularityWindow* window = cfg.window ? &*cfg.window : nullptr;
  const dkf::ValidationReport report =
      dkf::validate_assumptions(cfg.model, cfg.sensors, window);

  auto print = [&](const std::string& name, bool pass, bool hard,
                   const std::string& detail) {
    out << (pass ? "  [pass] " : (hard ? "  [FAIL] " : "  [warn] ")) << name;
    if (!detail.empty()) out << " — " << detail;
    out << "\n";
    if (!pass && hard) outcome.hard_fail = true;
    if (!pass && !hard) outcome.warnings = true;
  };

  out << "scenario: " << cfg.name << " (horizon " << cfg.horizon << ", "
      << cfg.sensors.size() << " sensors)\n";
  for (const auto& finding : report.findings) {
    print(finding.assumption, finding.pass, finding.hard, finding.detail);
  }
  if (!report.singular_steps.empty()) {
    std::ostringstream os;
    os << "dynamics singular at k =";
    for (std::size_t i = 0; i < report.singular_steps.size(); ++i) {
      if (i == 12) {
        os << " ...";
        break;
      }
      os << ' ' << report.singular_steps[i];
    }
    os << " (" << report.singular_steps.size()
       << " steps; legal, noted for the record)";
    out << "  [note] " << os.str() << "\n";
  }

  const bool connected = dkf::is_strongly_connected(cfg.topology);
  print("network strongly connected", connected, false, "");
  if (connected && cfg.topology.size > 1) {
    const bool primitive = dkf::check_primitivity(cfg.topology, cfg.topology.size - 1);
    print("adjacency power N-1 strictly positive", primitive, false, "");
  }

  // Uniform complete observability: use the pinned window, or sweep small
  // windows and report the first that works. Pointless once the noise model
  // is already unusable.
  if (outcome.hard_fail) {
    out << "  [skip] uniform complete observability — model is unusable\n";
    return outcome;
  }
  int window_len = cfg.uco_window;
  dkf::UcoReport uco;
  if (window_len > 0) {
    uco = dkf::check_uco(cfg.model, cfg.sensors, window_len, 0,
                         std::max(0, cfg.horizon - window_len));
  } else {
    for (window_len = 1; window_len <= std::min(24, cfg.horizon); ++window_len) {
      uco = dkf::check_uco(cfg.model, cfg.sensors, window_len, 0,
                           std::max(0, cfg.horizon - window_len));
      if (uco.uniformly_observable) break;
    }
  }
  {
    std::ostringstream os;
    os << "window " << window_len << ", alpha " << uco.min_alpha << ", beta "
       << uco.max_beta << ", worst start k=" << uco.worst_window_start;
    print("uniform complete observability", uco.uniformly_observable, false, os.str());
  }
  return outcome;
}

int cmd_validate(const std::string& path) {
  const dkf::ScenarioConfig cfg = dkf::load_scenario(path);
  const ValidationOutcome outcome = validate_scenario(cfg, std::cout);
  if (outcome.hard_fail) {
    std::cout << "validation: HARD FAILURE\n";
    return kExitValidation;
  }
  std::cout << (outcome.warnings ? "validation: passed with warnings\n"
                                 : "validation: passed\n");
  return kExitOk;
}

int cmd_run(const std::string& path, int trials_override, long seed_override,
            const std::vector<std::string>& filters_override, std::string out_dir,
            bool verbose_weights, bool force) {
  dkf::ScenarioConfig cfg = dkf::load_scenario(path);
  if (trials_override > 0) cfg.trials = trials_override;
  if (seed_override >= 0) {
    dkf::apply_seed(cfg, static_cast<std::uint64_t>(seed_override));
  }
  if (!filters_override.empty()) {
    for (const auto& f : filters_override) {
      bool known = false;
      for (const auto& k : dkf::known_filter_names()) known = known || k == f;
      if (!known) throw dkf::ConfigError("--filters: unknown filter \"" + f + "\"");
    }
    cfg.filters = filters_override;
  }
  if (!out_dir.empty()) cfg.output_dir = out_dir;

  const ValidationOutcome outcome = validate_scenario(cfg, std::cout);
  if (outcome.hard_fail && !force) {
    std::cout << "refusing to run (hard validation failure; --force overrides)\n";
    return kExitValidation;
  }

  dkf::RunOptions opt;
  opt.threads = env_threads();
  opt.verbose_weights = verbose_weights;

  const dkf::ExperimentResult result = dkf::run_experiment(cfg, opt);

  std::filesystem::create_directories(cfg.output_dir);
  const auto artifact = [&](const std::string& name) {
    return (std::filesystem::path(cfg.output_dir) / name).string();
  };
  dkf::write_mse_csv(artifact("mse.csv"), result);

  const auto* adaptive = result.find("cdkf-adaptive");
  const auto* constant = result.find("cdkf-constant");
  const auto* consistency_target = adaptive != nullptr ? adaptive : constant;
  if (consistency_target != nullptr && result.trials >= 100) {
    dkf::write_consistency_csv(
        artifact("consistency.csv"),
        dkf::consistency_report(*consistency_target, result.seed, opt.bootstrap_resamples));
  }
  if (adaptive != nullptr && constant != nullptr) {
    dkf::write_dominance_csv(artifact("dominance.csv"),
                             dkf::dominance_trace(*constant, *adaptive));
  }
  if (verbose_weights && consistency_target != nullptr) {
    dkf::write_weights_csv(artifact("weights.csv"), *consistency_target);
  }
  if (cfg.dump_state) {
    for (const auto& metrics : result.filters) {
      dkf::write_state_dump_csv(artifact("states_" + metrics.filter + ".csv"), metrics);
    }
  }

  const std::vector<dkf::RunCheck> checks = dkf::run_checks(result, opt);
  const dkf::Json summary = dkf::run_summary(result, checks, opt);
  {
    std::ofstream out(artifact("summary.json"));
    out << summary.dump(2) << "\n";
  }

  for (const auto& metrics : result.filters) {
    std::cout << "  " << metrics.filter
              << ": steady-state MSE " << dkf::steady_state_mse(metrics);
    if (metrics.filter.rfind("cdkf", 0) == 0) {
      std::cout << ", fallbacks " << metrics.fallback_count;
    }
    std::cout << "\n";
  }
  bool all_pass = true;
  for (const auto& check : checks) {
    std::cout << (check.pass ? "  [pass] " : "  [FAIL] ") << check.name << " — "
              << check.detail << "\n";
    all_pass = all_pass && check.pass;
  }
  std::cout << "artifacts written to " << cfg.output_dir << "\n";
  return all_pass ? kExitOk : kExitChecks;
}

struct MseTable {
  // (filter, k) -> mse; ks per filter assumed dense from 0.
  std::map<std::string, std::vector<double>> series;
};

MseTable read_mse_csv(const std::string& dir) {
  const std::string path = (std::filesystem::path(dir) / "mse.csv").string();
  std::ifstream in(path);
  if (!in) throw dkf::Error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw dkf::Error(path + ": empty file");
  MseTable table;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string k_str, filter, mse_str, se_str;
    if (!std::getline(ss, k_str, ',') || !std::getline(ss, filter, ',') ||
        !std::getline(ss, mse_str, ',') || !std::getline(ss, se_str, ',')) {
      throw dkf::Error(path + ": malformed row \"" + line + "\"");
    }
    auto& series = table.series[filter];
    const int k = std::stoi(k_str);
    if (k != static_cast<int>(series.size())) {
      throw dkf::Error(path + ": non-contiguous steps for filter " + filter);
    }
    series.push_back(std::stod(mse_str));
  }
  return table;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out_path) {
  std::vector<MseTable> tables;
  for (const auto& dir : dirs) tables.push_back(read_mse_csv(dir));

  // One joined table aligned on k; every series must share the horizon.
  std::size_t steps = 0;
  for (const auto& table : tables) {
    for (const auto& [filter, series] : table.series) {
      if (steps == 0) steps = series.size();
      if (series.size() != steps) {
        throw dkf::Error("horizon mismatch across runs (filter " + filter + ")");
      }
    }
  }

  struct Column {
    std::size_t run;
    std::string filter;
  };
  std::vector<Column> columns;
  for (std::size_t r = 0; r < tables.size(); ++r) {
    for (const auto& [filter, series] : tables[r].series) columns.push_back({r, filter});
  }

  std::ofstream out(out_path);
  if (!out) throw dkf::Error("cannot write " + out_path);
  out << "k";
  for (const auto& col : columns) out << ",mse_run" << col.run << "_" << col.filter;
  // Per-filter differences against run 0 where the same filter appears.
  std::vector<Column> diffs;
  for (std::size_t r = 1; r < tables.size(); ++r) {
    for (const auto& [filter, series] : tables[r].series) {
      if (tables[0].series.count(filter)) {
        diffs.push_back({r, filter});
        out << ",diff_run" << r << "_" << filter;
      }
    }
  }
  // Exactly two single-filter runs with different filters: the paired
  // cross-filter gap (run1 minus run0) on common random numbers.
  const bool cross_gap = tables.size() == 2 && columns.size() == 2 &&
                         columns[0].filter != columns[1].filter;
  if (cross_gap) out << ",gap";
  out << "\n";

  for (std::size_t k = 0; k < steps; ++k) {
    out << k;
    for (const auto& col : columns) {
      out << ','
          << dkf::detail::format_number(tables[col.run].series.at(col.filter)[k]);
    }
    for (const auto& col : diffs) {
      out << ','
          << dkf::detail::format_number(tables[col.run].series.at(col.filter)[k] -
                                        tables[0].series.at(col.filter)[k]);
    }
    if (cross_gap) {
      out << ','
          << dkf::detail::format_number(
                 tables[1].series.at(columns[1].filter)[k] -
                 tables[0].series.at(columns[0].filter)[k]);
    }
    out << '\n';
  }
  for (std::size_t r = 0; r < dirs.size(); ++r) {
    std::cout << "run" << r << " = " << dirs[r] << "\n";
  }
  std::cout << "comparison written to " << out_path << "\n";
  return kExitOk;
}

int cmd_observability(const std::string& path, int window, const std::string& out_path) {
  const dkf::ScenarioConfig cfg = dkf::load_scenario(path);
  int chosen = window > 0 ? window : cfg.uco_window;
  if (chosen <= 0) {
    for (chosen = 1; chosen <= std::min(24, cfg.horizon); ++chosen) {
      const auto uco = dkf::check_uco(cfg.model, cfg.sensors, chosen, 0,
                                      std::max(0, cfg.horizon - chosen));
      if (uco.uniformly_observable) break;
    }
    std::cout << "selected window " << chosen << " (smallest with alpha > 0)\n";
  }
  std::ofstream out(out_path);
  if (!out) throw dkf::Error("cannot write " + out_path);
  out << "k,alpha_hat,beta_hat,cond\n";
  for (int k = 0; k + chosen <= cfg.horizon; ++k) {
    const auto g = dkf::observability_gramian(cfg.model, cfg.sensors, k, chosen);
    out << k << ',' << dkf::detail::format_number(g.alpha_hat) << ','
        << dkf::detail::format_number(g.beta_hat) << ','
        << dkf::detail::format_number(g.condition) << '\n';
  }
  std::cout << "report written to " << out_path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed Kalman filter simulator"};
  app.require_subcommand(1);

  std::string scenario_path;
  auto* validate = app.add_subcommand("validate", "Check a scenario's assumptions");
  validate->add_option("scenario", scenario_path, "Scenario JSON file")->required();

  int trials = 0;
  long seed = -1;
  std::vector<std::string> filters;
  std::string out_dir;
  bool verbose_weights = false;
  bool force = false;
  auto* run = app.add_subcommand("run", "Run the Monte Carlo experiment");
  run->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  run->add_option("--trials", trials, "Override the trial count");
  run->add_option("--seed", seed, "Override the root seed");
  run->add_option("--filters", filters, "Filters to run")->delimiter(',');
  run->add_option("--out", out_dir, "Output directory");
  run->add_flag("--verbose-weights", verbose_weights, "Write the per-step weight log");
  run->add_flag("--force", force, "Run even if validation hard-fails");

  std::vector<std::string> compare_dirs;
  std::string compare_out = "comparison.csv";
  auto* compare = app.add_subcommand("compare", "Join MSE tables from finished runs");
  compare->add_option("runs", compare_dirs, "Run output directories")
      ->required()
      ->expected(-1);
  compare->add_option("--out", compare_out, "Comparison CSV path");

  int obs_window = 0;
  std::string obs_out = "observability.csv";
  auto* obs = app.add_subcommand("observability-report",
                                 "Per-step Gramian eigenvalue report");
  obs->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  obs->add_option("--window", obs_window, "Gramian window length");
  obs->add_option("--out", obs_out, "Report CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (validate->parsed()) return cmd_validate(scenario_path);
    if (run->parsed()) {
      return cmd_run(scenario_path, trials, seed, filters, out_dir, verbose_weights,
                     force);
    }
    if (compare->parsed()) return cmd_compare(compare_dirs, compare_out);
    if (obs->parsed()) return cmd_observability(scenario_path, obs_window, obs_out);
  } catch (const dkf::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const dkf::NumericalError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const dkf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
