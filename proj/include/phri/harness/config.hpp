#pragma once

// Experiment configuration: a JSON document with a fixed schema. Unknown keys
// are rejected so that typos fail loudly instead of silently using defaults.

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "phri/errors.hpp"
#include "phri/human_sim.hpp"
#include "phri/session.hpp"

namespace phri::harness {

using nlohmann::json;

inline constexpr int kConfigSchemaVersion = 1;

enum class Relevance { kRelevant, kIrrelevant };
inline std::string to_string(Relevance r) { return r == Relevance::kRelevant ? "relevant" : "irrelevant"; }
inline Relevance relevance_from_string(const std::string& s) {
  if (s == "relevant") return Relevance::kRelevant;
  if (s == "irrelevant") return Relevance::kIrrelevant;
  throw ConfigurationError("relevance must be 'relevant' or 'irrelevant', got '" + s + "'");
}

/// One experimental task: the robot starts from theta0 (known features) and
/// the human pushes according to theta_true (all features).
struct TaskSpec {
  std::string name;
  Relevance relevance = Relevance::kRelevant;
  Vec theta0;
  Vec theta_true;
};

struct HumanSpec {
  HumanFactory factory;
  /// calibration humans scale their target weight by U[1 - j, 1 + j]
  double weight_jitter = 0.25;
  MetropolisOptions metropolis;
};

struct CalibrationSpec {
  /// weights (known features) of the fixed trajectory the humans correct
  Vec theta;
  int trials_per_feature = 100;
  std::uint64_t seed = 1;
  int index_min = 2;
  int index_max = 8;
  std::size_t min_samples_per_cell = 30;
};

struct ExperimentSpec {
  int episodes_per_task = 50;
  std::uint64_t seed = 7;
  std::vector<int> correction_indices{3, 5, 7};
  std::vector<TaskSpec> tasks;
};

struct ServerSpec {
  int tick_ms = 100;
  /// ticks spent on each waypoint before advancing (playback speed)
  int ticks_per_waypoint = 5;
};

struct ExperimentConfig {
  Scene scene;
  LearnerSettings learner;
  double prior_relevant = 0.5;
  HumanSpec human;
  CalibrationSpec calibration;
  ExperimentSpec experiment;
  ServerSpec server;
};

namespace detail {

inline void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigurationError("'" + where + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) throw ConfigurationError("unknown key '" + where + "." + it.key() + "'");
  }
}

template <typename T>
T get_or(const json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("bad value for '") + key + "': " + e.what());
  }
}

inline Vec to_vec(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigurationError("'" + what + "' must be an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigurationError("'" + what + "' must be an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline json from_vec(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& root) {
  using detail::get_or;
  using detail::reject_unknown;
  using detail::to_vec;
  reject_unknown(root, "config", {"schema_version", "arm", "features", "trajectory", "planner", "rationality",
                                  "learner", "human", "calibration", "experiment", "server"});
  const int version = get_or<int>(root, "schema_version", kConfigSchemaVersion);
  if (version != kConfigSchemaVersion) {
    throw ConfigurationError("unsupported config schema_version " + std::to_string(version));
  }
  ExperimentConfig cfg;

  const json arm = root.value("arm", json::object());
  reject_unknown(arm, "arm", {"link_lengths", "base"});
  {
    const auto lengths = get_or<std::vector<double>>(arm, "link_lengths", {0.5, 0.4, 0.3});
    const Vec base = arm.contains("base") ? to_vec(arm["base"], "arm.base") : Vec::Zero(2);
    if (base.size() != 2) throw ConfigurationError("arm.base must have two entries");
    cfg.scene.model = ArmModel(lengths, Point2(base[0], base[1]));
  }

  const json feat = root.value("features", json::object());
  reject_unknown(feat, "features", {"table_height", "human_position", "upright_angle", "known"});
  {
    const Vec human = feat.contains("human_position") ? to_vec(feat["human_position"], "features.human_position")
                                                      : Vec::Zero(2);
    if (human.size() != 2) throw ConfigurationError("features.human_position must have two entries");
    cfg.scene.features = FeatureSet::standard(get_or<double>(feat, "table_height", 0.0), Point2(human[0], human[1]),
                                              get_or<double>(feat, "upright_angle", 0.0),
                                              get_or<std::vector<std::string>>(feat, "known", {"table", "orientation"}));
    for (const auto& name : get_or<std::vector<std::string>>(feat, "known", {}))
      cfg.scene.features.index_of(name);
  }
  const int n_known = static_cast<int>(cfg.scene.features.known_indices().size());
  const int n_all = cfg.scene.features.size();

  const json traj = root.value("trajectory", json::object());
  reject_unknown(traj, "trajectory", {"horizon", "dt", "mu", "start", "goal"});
  cfg.scene.horizon = get_or<int>(traj, "horizon", 10);
  cfg.scene.dt = get_or<double>(traj, "dt", 0.1);
  cfg.scene.mu = get_or<double>(traj, "mu", 0.1);
  if (cfg.scene.horizon < 2) throw ConfigurationError("trajectory.horizon must be at least 2");
  if (!(cfg.scene.dt > 0.0)) throw ConfigurationError("trajectory.dt must be positive");
  if (!(cfg.scene.mu > 0.0)) throw ConfigurationError("trajectory.mu must be positive");
  if (!traj.contains("start") || !traj.contains("goal")) {
    throw ConfigurationError("trajectory.start and trajectory.goal are required");
  }
  cfg.scene.start = to_vec(traj["start"], "trajectory.start");
  cfg.scene.goal = to_vec(traj["goal"], "trajectory.goal");
  cfg.scene.model.check(cfg.scene.start);
  cfg.scene.model.check(cfg.scene.goal);

  const json pl = root.value("planner", json::object());
  reject_unknown(pl, "planner", {"smoothness_weight", "max_iterations", "gradient_tolerance"});
  cfg.scene.planner.smoothness_weight = get_or<double>(pl, "smoothness_weight", cfg.scene.planner.smoothness_weight);
  cfg.scene.planner.max_iterations = get_or<int>(pl, "max_iterations", cfg.scene.planner.max_iterations);
  cfg.scene.planner.gradient_tolerance = get_or<double>(pl, "gradient_tolerance", cfg.scene.planner.gradient_tolerance);
  if (!(cfg.scene.planner.smoothness_weight >= 0.0)) throw ConfigurationError("planner.smoothness_weight must be >= 0");

  const json ra = root.value("rationality", json::object());
  reject_unknown(ra, "rationality", {"beta_max", "penalty_weights", "residual_tolerance", "prior_relevant"});
  cfg.scene.rationality.beta.beta_max = get_or<double>(ra, "beta_max", 1e3);
  cfg.scene.rationality.schedule.weights =
      get_or<std::vector<double>>(ra, "penalty_weights", cfg.scene.rationality.schedule.weights);
  cfg.scene.rationality.schedule.residual_tolerance =
      get_or<double>(ra, "residual_tolerance", cfg.scene.rationality.schedule.residual_tolerance);
  cfg.prior_relevant = get_or<double>(ra, "prior_relevant", 0.5);
  if (!(cfg.scene.rationality.beta.beta_max > 0.0)) throw ConfigurationError("rationality.beta_max must be positive");
  if (!(cfg.prior_relevant > 0.0 && cfg.prior_relevant < 1.0)) {
    throw ConfigurationError("rationality.prior_relevant must be in (0,1)");
  }

  const json le = root.value("learner", json::object());
  reject_unknown(le, "learner", {"alpha", "lambda", "strategy", "beta_mode", "gate_mode"});
  cfg.learner.alpha = get_or<double>(le, "alpha", 0.05);
  cfg.learner.lambda = get_or<double>(le, "lambda", 10.0);
  cfg.learner.strategy = strategy_from_string(get_or<std::string>(le, "strategy", "adaptive"));
  cfg.learner.beta_mode = beta_mode_from_string(get_or<std::string>(le, "beta_mode", "per_feature"));
  cfg.learner.gate_mode = gate_mode_from_string(get_or<std::string>(le, "gate_mode", "component"));
  if (!(cfg.learner.alpha > 0.0)) throw ConfigurationError("learner.alpha must be positive");
  if (!(cfg.learner.lambda > 0.0)) throw ConfigurationError("learner.lambda must be positive");

  const json hu = root.value("human", json::object());
  reject_unknown(hu, "human", {"target_weights", "beta_true", "effort_weight", "weight_jitter", "mh_steps",
                               "mh_burn_in", "mh_proposal_scale"});
  cfg.human.factory.target_weights = get_or<std::map<std::string, double>>(hu, "target_weights", {});
  for (const auto& [name, w] : cfg.human.factory.target_weights) cfg.scene.features.index_of(name);
  cfg.human.factory.beta_true = hu.contains("beta_true") && hu["beta_true"].is_string() &&
                                        hu["beta_true"].get<std::string>() == "inf"
                                    ? std::numeric_limits<double>::infinity()
                                    : get_or<double>(hu, "beta_true", 20.0);
  cfg.human.factory.effort_weight = get_or<double>(hu, "effort_weight", 1.0);
  cfg.human.weight_jitter = get_or<double>(hu, "weight_jitter", 0.25);
  cfg.human.metropolis.steps = get_or<int>(hu, "mh_steps", 500);
  cfg.human.metropolis.burn_in = get_or<int>(hu, "mh_burn_in", 200);
  cfg.human.metropolis.proposal_scale = get_or<double>(hu, "mh_proposal_scale", 1.0);
  if (!(cfg.human.factory.beta_true > 0.0)) throw ConfigurationError("human.beta_true must be positive");
  if (!(cfg.human.factory.effort_weight > 0.0)) throw ConfigurationError("human.effort_weight must be positive");
  if (!(cfg.human.weight_jitter >= 0.0 && cfg.human.weight_jitter < 1.0)) {
    throw ConfigurationError("human.weight_jitter must be in [0,1)");
  }
  if (cfg.human.metropolis.burn_in >= cfg.human.metropolis.steps) {
    throw ConfigurationError("human.mh_burn_in must be below human.mh_steps");
  }

  const json ca = root.value("calibration", json::object());
  reject_unknown(ca, "calibration", {"theta", "trials_per_feature", "seed", "index_range", "min_samples_per_cell"});
  cfg.calibration.theta = ca.contains("theta") ? to_vec(ca["theta"], "calibration.theta") : Vec::Zero(n_known);
  if (cfg.calibration.theta.size() != n_known) throw ConfigurationError("calibration.theta must cover the known features");
  cfg.calibration.trials_per_feature = get_or<int>(ca, "trials_per_feature", 100);
  cfg.calibration.seed = get_or<std::uint64_t>(ca, "seed", 1);
  {
    const auto range = get_or<std::vector<int>>(ca, "index_range", {2, cfg.scene.horizon - 2});
    if (range.size() != 2 || range[0] < 1 || range[1] > cfg.scene.horizon - 1 || range[0] > range[1]) {
      throw ConfigurationError("calibration.index_range must be [lo, hi] inside [1, horizon-1]");
    }
    cfg.calibration.index_min = range[0];
    cfg.calibration.index_max = range[1];
  }
  cfg.calibration.min_samples_per_cell = get_or<std::size_t>(ca, "min_samples_per_cell", 30);
  if (cfg.calibration.trials_per_feature < 1) throw ConfigurationError("calibration.trials_per_feature must be positive");

  const json ex = root.value("experiment", json::object());
  reject_unknown(ex, "experiment", {"episodes_per_task", "seed", "correction_indices", "tasks"});
  cfg.experiment.episodes_per_task = get_or<int>(ex, "episodes_per_task", 50);
  cfg.experiment.seed = get_or<std::uint64_t>(ex, "seed", 7);
  cfg.experiment.correction_indices = get_or<std::vector<int>>(ex, "correction_indices", {3, 5, 7});
  for (int idx : cfg.experiment.correction_indices) {
    if (idx < 1 || idx > cfg.scene.horizon - 1) {
      throw ConfigurationError("experiment.correction_indices must lie in [1, horizon-1]");
    }
  }
  if (ex.contains("tasks")) {
    if (!ex["tasks"].is_array()) throw ConfigurationError("experiment.tasks must be an array");
    for (const auto& t : ex["tasks"]) {
      reject_unknown(t, "experiment.tasks[]", {"name", "relevance", "theta0", "theta_true"});
      TaskSpec task;
      task.name = get_or<std::string>(t, "name", "");
      if (task.name.empty()) throw ConfigurationError("every task needs a name");
      task.relevance = relevance_from_string(get_or<std::string>(t, "relevance", "relevant"));
      if (!t.contains("theta0") || !t.contains("theta_true")) {
        throw ConfigurationError("task '" + task.name + "' needs theta0 and theta_true");
      }
      task.theta0 = to_vec(t["theta0"], "theta0");
      task.theta_true = to_vec(t["theta_true"], "theta_true");
      if (task.theta0.size() != n_known) throw ConfigurationError("task '" + task.name + "': theta0 must cover the known features");
      if (task.theta_true.size() != n_all) throw ConfigurationError("task '" + task.name + "': theta_true must cover every feature");
      cfg.experiment.tasks.push_back(std::move(task));
    }
  }
  if (cfg.experiment.episodes_per_task < 1) throw ConfigurationError("experiment.episodes_per_task must be positive");

  const json sv = root.value("server", json::object());
  reject_unknown(sv, "server", {"tick_ms", "ticks_per_waypoint"});
  cfg.server.tick_ms = get_or<int>(sv, "tick_ms", 100);
  cfg.server.ticks_per_waypoint = get_or<int>(sv, "ticks_per_waypoint", 5);
  if (cfg.server.tick_ms < 1 || cfg.server.ticks_per_waypoint < 1) {
    throw ConfigurationError("server timing values must be positive");
  }
  return cfg;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigurationError("'" + path + "' is not valid JSON: " + e.what());
  }
}

/// Applies a dotted-path override such as "learner.alpha=0.5". The value is
/// parsed as JSON when possible and taken as a string otherwise.
inline void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigurationError("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &root;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!(*node).contains(parts[i])) (*node)[parts[i]] = json::object();
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = value;
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  json root = read_json_file(path);
  for (const auto& o : overrides) apply_override(root, o);
  return config_from_json(root);
}

}  // namespace phri::harness
