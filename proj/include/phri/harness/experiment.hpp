#pragma once

// Headless experiment: every task is run under both learning strategies with
// the same seeded humans. Each episode plans with theta0, takes one push per
// configured waypoint, and is scored against the plan for the true weights.

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "phri/harness/config.hpp"
#include "phri/harness/io.hpp"
#include "phri/human_sim.hpp"
#include "phri/planner.hpp"
#include "phri/session.hpp"

namespace phri::harness {

struct TrialRecord {
  std::string task;
  Relevance relevance = Relevance::kRelevant;
  Strategy strategy = Strategy::kFixed;
  int episode = 0;
  std::uint64_t seed = 0;
  /// "ok" or "quarantined"
  std::string status = "ok";
  std::string error;
  std::vector<AuditRecord> corrections;
  std::vector<Vec> theta_trace;
  double regret = 0.0;
  double path_length = 0.0;

  bool ok() const { return status == "ok"; }
};

inline json to_json(const TrialRecord& t) {
  json corrections = json::array();
  for (const auto& c : t.corrections) corrections.push_back(to_json(c));
  json trace = json::array();
  for (const auto& th : t.theta_trace) trace.push_back(detail::from_vec(th));
  return json{{"schema_version", kRecordSchemaVersion},
              {"task", t.task},
              {"relevance", to_string(t.relevance)},
              {"strategy", to_string(t.strategy)},
              {"episode", t.episode},
              {"seed", t.seed},
              {"status", t.status},
              {"error", t.error},
              {"corrections", corrections},
              {"theta_trace", trace},
              {"regret", t.regret},
              {"path_length", t.path_length}};
}

/// The fields export_report needs, read back from a trials.jsonl line.
inline TrialRecord trial_from_json(const json& j) {
  try {
    if (j.at("schema_version").get<int>() != kRecordSchemaVersion) {
      throw ConfigurationError("unsupported trial record schema_version");
    }
    TrialRecord t;
    t.task = j.at("task").get<std::string>();
    t.relevance = relevance_from_string(j.at("relevance").get<std::string>());
    t.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    t.episode = j.at("episode").get<int>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.status = j.at("status").get<std::string>();
    t.error = j.at("error").get<std::string>();
    for (const auto& th : j.at("theta_trace")) t.theta_trace.push_back(detail::to_vec(th, "theta_trace"));
    t.regret = j.at("regret").get<double>();
    t.path_length = j.at("path_length").get<double>();
    return t;
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("malformed trial record: ") + e.what());
  }
}

/// Known-feature part of the true weights: what a perfect learner would reach.
inline Vec task_target_theta(const FeatureSet& fs, const TaskSpec& task) { return fs.known_part(task.theta_true); }

/// |Phi(xi_theta*) - Phi(xi_actual)| over the known features, both plans made
/// from scratch with the same planner settings.
inline double feature_regret(const Scene& sc, const Trajectory& reference, const Vec& theta_final) {
  const PlanResult actual = plan(sc.features, sc.model, theta_final, sc.start, sc.goal, sc.horizon, sc.dt, sc.planner);
  const Vec a = sc.features.known_part(total_features(sc.features, sc.model, actual.trajectory));
  const Vec b = sc.features.known_part(total_features(sc.features, sc.model, reference));
  return (a - b).norm();
}

inline std::uint64_t episode_seed(const ExperimentConfig& cfg, int task_index, int episode) {
  return derive_seed(cfg.experiment.seed,
                     static_cast<std::uint64_t>(task_index) * 1000003ULL + static_cast<std::uint64_t>(episode));
}

inline SimHuman task_human(const ExperimentConfig& cfg, const TaskSpec& task, std::uint64_t seed) {
  SimHuman h;
  h.theta_true = task.theta_true;
  h.beta_true = cfg.human.factory.beta_true;
  h.effort_weight = cfg.human.factory.effort_weight;
  h.seed = seed;
  return h;
}

/// Drives one session through the configured correction waypoints. The push
/// at each waypoint is sampled against the session's current trajectory.
inline void run_corrections(LearningSession& session, const SimHuman& human, const ExperimentConfig& cfg) {
  const Scene& sc = session.scene();
  std::uint64_t stream = 0;
  for (int index : cfg.experiment.correction_indices) {
    session.advance(index - session.current_index());
    const Correction u = sample_correction(human, sc.features, sc.model, session.deformer(), session.trajectory(),
                                           index, stream++, cfg.human.metropolis);
    session.process_correction(u);
  }
}

inline TrialRecord run_episode(const ExperimentConfig& cfg, const std::optional<RationalityModel>& model,
                               int task_index, Strategy strategy, int episode, const Trajectory& reference) {
  const TaskSpec& task = cfg.experiment.tasks.at(static_cast<std::size_t>(task_index));
  TrialRecord rec;
  rec.task = task.name;
  rec.relevance = task.relevance;
  rec.strategy = strategy;
  rec.episode = episode;
  rec.seed = episode_seed(cfg, task_index, episode);
  try {
    LearnerSettings settings = cfg.learner;
    settings.strategy = strategy;
    LearningSession session(cfg.scene, settings, task.theta0, model);
    run_corrections(session, task_human(cfg, task, rec.seed), cfg);
    rec.corrections = session.audit();
    rec.theta_trace = session.theta_trace();
    rec.path_length = session.theta_path_length();
    for (const auto& c : rec.corrections) {
      if (!c.error.empty()) throw Error("correction " + std::to_string(c.sequence) + " failed: " + c.error);
    }
    rec.regret = feature_regret(cfg.scene, reference, session.theta());
  } catch (const Error& e) {
    rec.status = "quarantined";
    rec.error = e.what();
  }
  return rec;
}

struct ExperimentResult {
  std::vector<TrialRecord> trials;
  int quarantined() const {
    int n = 0;
    for (const auto& t : trials) n += t.ok() ? 0 : 1;
    return n;
  }
};

/// strategies defaults to both; adaptive requires `model`.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::optional<RationalityModel>& model,
                                       std::vector<Strategy> strategies = {Strategy::kAdaptive, Strategy::kFixed}) {
  if (cfg.experiment.tasks.empty()) throw ConfigurationError("experiment.tasks is empty");
  for (Strategy s : strategies) {
    if (s == Strategy::kAdaptive && !model) throw ConfigurationError("adaptive runs need a rationality model");
  }
  const Scene& sc = cfg.scene;
  ExperimentResult out;
  for (std::size_t t = 0; t < cfg.experiment.tasks.size(); ++t) {
    const TaskSpec& task = cfg.experiment.tasks[t];
    const Trajectory reference = plan(sc.features, sc.model, task_target_theta(sc.features, task), sc.start, sc.goal,
                                      sc.horizon, sc.dt, sc.planner)
                                     .trajectory;
    for (Strategy s : strategies) {
      for (int e = 0; e < cfg.experiment.episodes_per_task; ++e) {
        out.trials.push_back(run_episode(cfg, model, static_cast<int>(t), s, e, reference));
      }
    }
  }
  return out;
}

inline std::string trials_jsonl(const std::vector<TrialRecord>& trials) {
  std::string text;
  for (const auto& t : trials) {
    text += to_json(t).dump();
    text += '\n';
  }
  return text;
}

}  // namespace phri::harness
