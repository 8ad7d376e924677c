#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dkf/ci_weights.hpp"
#include "dkf/errors.hpp"
#include "dkf/model.hpp"
#include "dkf/topology.hpp"

namespace dkf {

using Json = nlohmann::json;

/// Canonical filter names, ordered by expected steady-state accuracy.
inline const std::vector<std::string>& known_filter_names() {
  static const std::vector<std::string> names = {"ckf", "table1", "cdkf-adaptive",
                                                 "cdkf-constant"};
  return names;
}

/// Everything needed to run one experiment: model, sensors, network, prior,
/// horizon/trial counts and filter selection.
struct ScenarioConfig {
  std::string name;
  SystemModel model;
  std::vector<SensorModel> sensors;
  NetworkTopology topology;
  Matrix p0;
  double p0_inflation = 1.0;  // filters start from p0_inflation * P0 (>= 1)
  int horizon = 0;
  int trials = 500;
  std::uint64_t seed = 0;
  std::vector<std::string> filters = known_filter_names();
  AdaptiveWeightSettings weight_settings;
  std::optional<RegularityWindow> window;
  int uco_window = -1;  // -1: sweep small windows and report the first passing
  bool dump_state = false;
  std::string output_dir = "out";
  Json notes = Json::object();  // realized randomized choices, for the summary

  /// Filter-side initial covariance; the truth is still sampled from P0.
  Matrix initial_covariance() const { return p0_inflation * p0; }
};

namespace detail {

inline void check_keys(const Json& obj, const std::set<std::string>& allowed,
                       const std::string& context) {
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) {
      throw ConfigError(context + ": unknown key \"" + item.key() + "\"");
    }
  }
}

inline Matrix parse_matrix(const Json& j, const std::string& context) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) {
    throw ConfigError(context + ": expected a 2-D array");
  }
  const long rows = static_cast<long>(j.size());
  const long cols = static_cast<long>(j.front().size());
  Matrix m(rows, cols);
  for (long r = 0; r < rows; ++r) {
    if (static_cast<long>(j[r].size()) != cols) {
      throw ConfigError(context + ": ragged rows");
    }
    for (long c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw ConfigError(context + ": non-numeric entry");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

/// A time-indexed matrix: either one constant matrix or a per-step table.
inline std::function<Matrix(int)> parse_matrix_map(const Json& j, int needed,
                                                   const std::string& context) {
  if (j.is_array()) {
    Matrix constant = parse_matrix(j, context);
    return [constant](int) { return constant; };
  }
  if (j.is_object() && j.contains("table")) {
    check_keys(j, {"table"}, context);
    std::vector<Matrix> table;
    for (std::size_t i = 0; i < j["table"].size(); ++i) {
      table.push_back(parse_matrix(j["table"][i], context + ".table"));
    }
    if (static_cast<int>(table.size()) < needed) {
      throw ConfigError(context + ": table has " + std::to_string(table.size()) +
                        " entries, horizon needs " + std::to_string(needed));
    }
    return [table](int k) { return table.at(static_cast<std::size_t>(k)); };
  }
  throw ConfigError(context + ": expected a matrix or {\"table\": [...]}");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Named analytic presets. The trigonometric definitions are exact, not
// transcribed tables.

/// Second-order time-varying plant with four sensors on a directed 4-cycle.
/// The dynamics are singular at k = 1, 5 (mod 12); two sensors observe
/// nothing at all, so only the network as a whole is observable.
inline ScenarioConfig make_paper_example_1(int horizon = 100, int trials = 500,
                                           std::uint64_t seed = 2025) {
  ScenarioConfig cfg;
  cfg.name = "paper-example-1";
  cfg.horizon = horizon;
  cfg.trials = trials;
  cfg.seed = seed;

  cfg.model.state_dim = 2;
  cfg.model.horizon = horizon;
  cfg.model.A = [](int k) {
    Matrix a(2, 2);
    a << 1.1, 0.05, 1.1, 0.1 * std::sin(k * M_PI / 6.0);
    return a;
  };
  cfg.model.Q = [](int) {
    Matrix q(2, 2);
    q << 0.5, 0.0, 0.0, 0.7;
    return q;
  };
  cfg.model.a_spectral_bound = 2.5;
  cfg.model.q_eig_lower = 0.5;
  cfg.model.q_eig_upper = 0.7;

  const auto sensor = [](int id, std::function<Matrix(int)> h, double r) {
    SensorModel s;
    s.sensor_id = id;
    s.meas_dim = 1;
    s.H = std::move(h);
    s.R = [r](int) { return Matrix::Constant(1, 1, r); };
    return s;
  };
  cfg.sensors.push_back(sensor(
      1,
      [](int k) {
        Matrix h(1, 2);
        h << 1.0 + std::sin(k * M_PI / 12.0), 0.0;
        return h;
      },
      0.5));
  cfg.sensors.push_back(sensor(2, [](int) { return Matrix::Zero(1, 2); }, 0.6));
  cfg.sensors.push_back(sensor(
      3,
      [](int k) {
        Matrix h(1, 2);
        h << -1.0, 1.0 + std::cos(k * M_PI / 12.0);
        return h;
      },
      0.4));
  cfg.sensors.push_back(sensor(4, [](int) { return Matrix::Zero(1, 2); }, 0.3));

  // Directed 4-cycle: each node hears exactly one other node plus itself.
  cfg.topology = uniform_weights({{0, 3}, {1, 0}, {2, 1}, {3, 2}}, 4);
  cfg.p0 = Matrix::Identity(2, 2);

  // The dynamics are nonsingular on [6, 11) of every period of 12.
  RegularityWindow window;
  for (int anchor = 6; anchor + 5 <= horizon; anchor += 12) {
    window.anchors.push_back(anchor);
  }
  window.window_len = 5;
  window.lower_bound = 1e-4;
  if (!window.anchors.empty()) cfg.window = window;

  return cfg;
}

inline const std::vector<std::pair<int, int>>& twenty_node_edges() {
  // Undirected stand-in topology: a ring plus one chord per node. Connected,
  // every node of degree 3.
  static const std::vector<std::pair<int, int>> edges = [] {
    std::vector<std::pair<int, int>> list;
    for (int i = 0; i < 20; ++i) list.emplace_back(i, (i + 1) % 20);
    const std::vector<std::pair<int, int>> chords = {
        {0, 5}, {2, 9}, {4, 13}, {7, 15}, {10, 17},
        {12, 19}, {3, 16}, {6, 11}, {8, 14}, {1, 18}};
    list.insert(list.end(), chords.begin(), chords.end());
    return list;
  }();
  return edges;
}

inline NetworkTopology make_topology_preset(const std::string& name) {
  if (name == "fig2_4cycle") {
    return uniform_weights({{0, 3}, {1, 0}, {2, 1}, {3, 2}}, 4);
  }
  if (name == "fig7_20node") {
    std::vector<std::pair<int, int>> directed;
    for (const auto& [u, v] : twenty_node_edges()) {
      directed.emplace_back(u, v);
      directed.emplace_back(v, u);
    }
    return uniform_weights(directed, 20);
  }
  throw ConfigError("unknown topology preset \"" + name + "\"");
}

/// Time-invariant plant observed by 20 sensors whose observation rows are
/// drawn once (from the scenario seed) out of a fixed candidate set; half
/// the candidates observe nothing. The realized draw is recorded in notes.
inline ScenarioConfig make_paper_example_2(int horizon = 100, int trials = 500,
                                           std::uint64_t seed = 2025) {
  ScenarioConfig cfg;
  cfg.name = "paper-example-2";
  cfg.horizon = horizon;
  cfg.trials = trials;
  cfg.seed = seed;

  cfg.model.state_dim = 2;
  cfg.model.horizon = horizon;
  cfg.model.A = [](int) {
    Matrix a(2, 2);
    a << 1.0, 0.05, 0.0, 1.0;
    return a;
  };
  cfg.model.Q = [](int) { return Matrix::Identity(2, 2); };
  cfg.model.a_spectral_bound = 1.1;
  cfg.model.q_eig_lower = 1.0;
  cfg.model.q_eig_upper = 1.0;

  const std::vector<Eigen::RowVector2d> candidates = {
      {1.0, 1.0}, {0.0, 0.0}, {0.0, 0.0}, {1.0, 0.0}};
  GaussianStream pick(derive_stream_seed(seed, 0, StreamKind::SensorAssignment));
  std::vector<int> assignment(20);
  for (int i = 0; i < 20; ++i) {
    assignment[i] = static_cast<int>(pick.uniform_index(candidates.size()));
    SensorModel s;
    s.sensor_id = i + 1;
    s.meas_dim = 1;
    const Eigen::RowVector2d row = candidates[assignment[i]];
    s.H = [row](int) {
      Matrix h(1, 2);
      h << row(0), row(1);
      return h;
    };
    s.R = [](int) { return Matrix::Identity(1, 1); };
    cfg.sensors.push_back(std::move(s));
  }
  cfg.notes["sensor_assignment"] = assignment;

  cfg.topology = make_topology_preset("fig7_20node");
  cfg.p0 = Matrix::Identity(2, 2);

  RegularityWindow window;
  for (int anchor = 0; anchor + 10 <= horizon; anchor += 10) {
    window.anchors.push_back(anchor);
  }
  window.window_len = 10;
  window.lower_bound = 0.9;
  if (!window.anchors.empty()) cfg.window = window;

  return cfg;
}

inline ScenarioConfig make_model_preset(const std::string& name, int horizon,
                                        int trials, std::uint64_t seed) {
  if (name == "paper_example_1") return make_paper_example_1(horizon, trials, seed);
  if (name == "paper_example_2") return make_paper_example_2(horizon, trials, seed);
  throw ConfigError("unknown model preset \"" + name + "\"");
}

/// Reseed a loaded scenario. Seed-derived randomized pieces (the sensor
/// assignment of the 20-node preset) are redrawn; everything else is kept.
inline void apply_seed(ScenarioConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  if (cfg.notes.contains("sensor_assignment")) {
    ScenarioConfig redrawn = make_paper_example_2(cfg.horizon, cfg.trials, seed);
    cfg.sensors = std::move(redrawn.sensors);
    cfg.notes["sensor_assignment"] = redrawn.notes["sensor_assignment"];
  }
}

// ---------------------------------------------------------------------------
// JSON scenario files.

inline ScenarioConfig scenario_from_json(const Json& root) {
  if (!root.is_object()) throw ConfigError("scenario: expected a JSON object");
  detail::check_keys(root,
                     {"name", "model", "sensors", "topology", "P0", "p0_inflation",
                      "horizon", "trials", "seed", "filters", "weights",
                      "assumptions", "dump_state", "output"},
                     "scenario");
  if (!root.contains("horizon")) throw ConfigError("scenario: missing \"horizon\"");
  if (!root.contains("seed")) throw ConfigError("scenario: missing \"seed\"");
  if (!root.contains("model")) throw ConfigError("scenario: missing \"model\"");
  const int horizon = root["horizon"].get<int>();
  if (horizon < 0) throw ConfigError("scenario: horizon must be nonnegative");
  const int trials = root.value("trials", 500);
  const std::uint64_t seed = root["seed"].get<std::uint64_t>();

  ScenarioConfig cfg;
  const Json& model = root["model"];
  if (!model.is_object()) throw ConfigError("scenario.model: expected an object");
  const bool preset_model = model.contains("preset");
  if (preset_model) {
    detail::check_keys(model, {"preset"}, "scenario.model");
    cfg = make_model_preset(model["preset"].get<std::string>(), horizon, trials, seed);
  } else {
    detail::check_keys(model, {"A", "Q", "state_dim"}, "scenario.model");
    if (!model.contains("state_dim") || !model.contains("A") || !model.contains("Q")) {
      throw ConfigError("scenario.model: needs state_dim, A and Q (or a preset)");
    }
    cfg.model.state_dim = model["state_dim"].get<int>();
    cfg.model.horizon = horizon;
    cfg.model.A = detail::parse_matrix_map(model["A"], horizon + 1, "scenario.model.A");
    cfg.model.Q = detail::parse_matrix_map(model["Q"], horizon + 1, "scenario.model.Q");
    cfg.horizon = horizon;
    cfg.trials = trials;
    cfg.seed = seed;
  }
  cfg.horizon = horizon;
  cfg.model.horizon = horizon;
  cfg.trials = trials;
  cfg.seed = seed;
  cfg.name = root.value("name", cfg.name);

  if (root.contains("sensors")) {
    const Json& sensors = root["sensors"];
    if (!sensors.is_array() || sensors.empty()) {
      throw ConfigError("scenario.sensors: expected a nonempty array");
    }
    cfg.sensors.clear();
    for (std::size_t i = 0; i < sensors.size(); ++i) {
      const Json& sj = sensors[i];
      const std::string ctx = "scenario.sensors[" + std::to_string(i) + "]";
      detail::check_keys(sj, {"H", "R"}, ctx);
      if (!sj.contains("H") || !sj.contains("R")) {
        throw ConfigError(ctx + ": needs H and R");
      }
      SensorModel s;
      s.sensor_id = static_cast<int>(i) + 1;
      s.H = detail::parse_matrix_map(sj["H"], horizon + 1, ctx + ".H");
      s.R = detail::parse_matrix_map(sj["R"], horizon + 1, ctx + ".R");
      s.meas_dim = static_cast<int>(s.H(0).rows());
      cfg.sensors.push_back(std::move(s));
    }
  } else if (!preset_model) {
    throw ConfigError("scenario: missing \"sensors\"");
  }

  if (root.contains("topology")) {
    const Json& topo = root["topology"];
    if (!topo.is_object()) throw ConfigError("scenario.topology: expected an object");
    if (topo.contains("preset")) {
      detail::check_keys(topo, {"preset"}, "scenario.topology");
      cfg.topology = make_topology_preset(topo["preset"].get<std::string>());
    } else {
      detail::check_keys(topo, {"nodes", "edges"}, "scenario.topology");
      if (!topo.contains("nodes") || !topo.contains("edges")) {
        throw ConfigError("scenario.topology: needs nodes and edges (or a preset)");
      }
      const int nodes = topo["nodes"].get<int>();
      std::vector<std::pair<int, int>> edges;
      for (const auto& e : topo["edges"]) {
        if (!e.is_array() || e.size() != 2) {
          throw ConfigError("scenario.topology.edges: each edge is [receiver, sender]");
        }
        // 1-based in the file, matching sensor ids.
        edges.emplace_back(e[0].get<int>() - 1, e[1].get<int>() - 1);
      }
      cfg.topology = uniform_weights(edges, nodes);
    }
  } else if (!preset_model) {
    throw ConfigError("scenario: missing \"topology\"");
  }

  if (root.contains("P0")) {
    cfg.p0 = detail::parse_matrix(root["P0"], "scenario.P0");
  } else if (!preset_model) {
    throw ConfigError("scenario: missing \"P0\"");
  }

  if (root.contains("filters")) {
    cfg.filters.clear();
    for (const auto& f : root["filters"]) {
      const std::string name = f.get<std::string>();
      bool known = false;
      for (const auto& k : known_filter_names()) known = known || k == name;
      if (!known) throw ConfigError("scenario.filters: unknown filter \"" + name + "\"");
      cfg.filters.push_back(name);
    }
    if (cfg.filters.empty()) throw ConfigError("scenario.filters: empty");
  }

  if (root.contains("weights")) {
    const Json& w = root["weights"];
    detail::check_keys(w, {"tolerance", "max_iterations", "probes"}, "scenario.weights");
    cfg.weight_settings.tolerance = w.value("tolerance", cfg.weight_settings.tolerance);
    cfg.weight_settings.max_iterations =
        w.value("max_iterations", cfg.weight_settings.max_iterations);
    cfg.weight_settings.probe_count = w.value("probes", cfg.weight_settings.probe_count);
  }

  if (root.contains("assumptions")) {
    const Json& a = root["assumptions"];
    detail::check_keys(a, {"spectral_bound", "q_eig_lower", "q_eig_upper", "window",
                           "uco_window"},
                       "scenario.assumptions");
    cfg.model.a_spectral_bound = a.value("spectral_bound", cfg.model.a_spectral_bound);
    cfg.model.q_eig_lower = a.value("q_eig_lower", cfg.model.q_eig_lower);
    cfg.model.q_eig_upper = a.value("q_eig_upper", cfg.model.q_eig_upper);
    cfg.uco_window = a.value("uco_window", cfg.uco_window);
    if (a.contains("window")) {
      const Json& w = a["window"];
      detail::check_keys(w, {"anchors", "length", "lower_bound"},
                         "scenario.assumptions.window");
      RegularityWindow window;
      for (const auto& anchor : w["anchors"]) window.anchors.push_back(anchor.get<int>());
      window.window_len = w["length"].get<int>();
      window.lower_bound = w["lower_bound"].get<double>();
      cfg.window = window;
    }
  }

  cfg.p0_inflation = root.value("p0_inflation", 1.0);
  if (cfg.p0_inflation < 1.0) {
    throw ConfigError("scenario.p0_inflation: must be >= 1");
  }
  cfg.dump_state = root.value("dump_state", false);
  cfg.output_dir = root.value("output", cfg.output_dir);

  // Cross-checks that make later stages' dimension errors impossible.
  if (static_cast<int>(cfg.sensors.size()) != cfg.topology.size) {
    throw ConfigError("scenario: " + std::to_string(cfg.sensors.size()) +
                      " sensors but topology has " + std::to_string(cfg.topology.size) +
                      " nodes");
  }
  require_square(cfg.p0, "scenario.P0");
  if (cfg.p0.rows() != cfg.model.state_dim) {
    throw ConfigError("scenario.P0: dimension does not match state_dim");
  }
  for (const auto& s : cfg.sensors) {
    if (s.H(0).cols() != cfg.model.state_dim) {
      throw ConfigError("scenario.sensors[" + std::to_string(s.sensor_id - 1) +
                        "].H: column count does not match state_dim");
    }
  }
  return cfg;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path);
  Json root;
  try {
    root = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("scenario parse error in " + path + ": " + e.what());
  }
  try {
    return scenario_from_json(root);
  } catch (const Json::exception& e) {
    throw ConfigError("scenario schema error in " + path + ": " + e.what());
  }
}

}  // namespace dkf
