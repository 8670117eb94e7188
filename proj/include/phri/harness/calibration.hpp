#pragma once

// Offline calibration: synthetic humans each correct one target feature of a
// fixed trajectory (their weights are the trajectory's own plus a push on the
// target); for every known feature the correction's beta_hat is
// labelled relevant when that feature was the target and irrelevant otherwise.
// A scaled chi-squared density is fitted to each (feature, label) cell.

#include <json.hpp>

#include <random>
#include <string>
#include <vector>

#include "phri/harness/config.hpp"
#include "phri/harness/io.hpp"
#include "phri/human_sim.hpp"
#include "phri/planner.hpp"
#include "phri/rationality.hpp"
#include "phri/relevance.hpp"

namespace phri::harness {

struct CalibrationSample {
  int trial = 0;
  std::string target;
  int waypoint_index = 0;
  std::string feature;
  int relevant = 0;
  double beta_hat = 0.0;
  double effort_observed = 0.0;
  double effort_optimal = 0.0;
  bool converged = false;
  double residual = 0.0;
};

struct CellSummary {
  std::string feature;
  int relevant = 0;
  std::size_t used = 0;
  std::size_t excluded = 0;
  ChiSquaredFit fit;
};

struct CalibrationResult {
  RationalityModel model;
  std::vector<CalibrationSample> samples;
  std::vector<CellSummary> cells;
  /// corrections whose sampling or estimation threw
  int failed_trials = 0;

  std::size_t excluded() const {
    std::size_t n = 0;
    for (const auto& c : cells) n += c.excluded;
    return n;
  }
  double exclusion_rate() const {
    return samples.empty() ? 0.0 : static_cast<double>(excluded()) / static_cast<double>(samples.size());
  }
};

/// Human used for calibration trial `trial` of target feature `target`.
inline SimHuman calibration_human(const ExperimentConfig& cfg, const std::string& target, int target_index, int trial) {
  const std::uint64_t seed = derive_seed(cfg.calibration.seed, static_cast<std::uint64_t>(target_index) * 1000003ULL +
                                                                   static_cast<std::uint64_t>(trial));
  std::mt19937_64 rng(derive_seed(seed, 0xCA1ULL));
  std::uniform_real_distribution<double> jitter(1.0 - cfg.human.weight_jitter, 1.0 + cfg.human.weight_jitter);
  SimHuman h = make_human_on(cfg.scene.features, target, cfg.human.factory, seed, jitter(rng));
  // The human otherwise agrees with the trajectory being corrected.
  const auto known = cfg.scene.features.known_indices();
  for (std::size_t i = 0; i < known.size(); ++i) h.theta_true[known[i]] += cfg.calibration.theta[static_cast<Eigen::Index>(i)];
  return h;
}

inline int calibration_index(const ExperimentConfig& cfg, const SimHuman& h) {
  std::mt19937_64 rng(derive_seed(h.seed, 0x1D8ULL));
  std::uniform_int_distribution<int> pick(cfg.calibration.index_min, cfg.calibration.index_max);
  return pick(rng);
}

inline CalibrationResult run_calibration(const ExperimentConfig& cfg) {
  const Scene& sc = cfg.scene;
  const FeatureSet& fs = sc.features;
  const auto known = fs.known_indices();
  const DeformationOperator deformer(sc.horizon, sc.model.n_links(), sc.mu);
  const PlanResult base = plan(fs, sc.model, cfg.calibration.theta, sc.start, sc.goal, sc.horizon, sc.dt, sc.planner);

  CalibrationResult out;
  for (int target = 0; target < fs.size(); ++target) {
    const std::string& target_name = fs.spec(target).name;
    if (!cfg.human.factory.target_weights.count(target_name)) continue;
    for (int trial = 0; trial < cfg.calibration.trials_per_feature; ++trial) {
      const SimHuman h = calibration_human(cfg, target_name, target, trial);
      const int index = calibration_index(cfg, h);
      std::vector<BetaEstimate> betas;
      Correction u;
      try {
        u = sample_correction(h, fs, sc.model, deformer, base.trajectory, index, 0, cfg.human.metropolis);
        betas = estimate_betas_per_feature(fs, sc.model, deformer, base.trajectory, u, known, sc.rationality);
      } catch (const Error&) {
        ++out.failed_trials;
        continue;
      }
      for (std::size_t i = 0; i < known.size(); ++i) {
        CalibrationSample s;
        s.trial = trial;
        s.target = target_name;
        s.waypoint_index = index;
        s.feature = fs.spec(known[i]).name;
        s.relevant = known[i] == target ? 1 : 0;
        s.beta_hat = betas[i].beta_hat;
        s.effort_observed = betas[i].effort_observed;
        s.effort_optimal = betas[i].effort_optimal;
        s.converged = betas[i].converged;
        s.residual = betas[i].residual;
        out.samples.push_back(std::move(s));
      }
    }
  }

  std::map<std::string, RelevanceCell> cells;
  for (int i : known) {
    const std::string& name = fs.spec(i).name;
    RelevanceCell cell;
    for (int r : {0, 1}) {
      CellSummary summary;
      summary.feature = name;
      summary.relevant = r;
      std::vector<double> xs;
      for (const auto& s : out.samples) {
        if (s.feature != name || s.relevant != r) continue;
        if (s.converged) {
          xs.push_back(s.beta_hat);
        } else {
          ++summary.excluded;
        }
      }
      summary.used = xs.size();
      if (xs.size() < cfg.calibration.min_samples_per_cell) {
        throw CalibrationError("calibration cell (" + name + ", r=" + std::to_string(r) + ") has only " +
                               std::to_string(xs.size()) + " converged samples, needs " +
                               std::to_string(cfg.calibration.min_samples_per_cell));
      }
      try {
        summary.fit = fit_scaled_chi_squared(xs, cfg.calibration.min_samples_per_cell);
      } catch (const FitError& e) {
        throw CalibrationError("calibration cell (" + name + ", r=" + std::to_string(r) + "): " + e.what());
      }
      (r ? cell.relevant : cell.irrelevant) = summary.fit.dist;
      out.cells.push_back(std::move(summary));
    }
    cells[name] = cell;
  }
  out.model = RationalityModel(std::move(cells), cfg.prior_relevant, sc.rationality.beta.beta_max);
  return out;
}

inline std::string calibration_samples_csv(const CalibrationResult& r) {
  CsvWriter csv({"trial", "target", "waypoint_index", "feature", "r", "beta_hat", "effort_observed", "effort_optimal",
                 "converged", "residual"});
  for (const auto& s : r.samples) {
    csv.row({std::to_string(s.trial), s.target, std::to_string(s.waypoint_index), s.feature, std::to_string(s.relevant),
             fmt_double(s.beta_hat), fmt_double(s.effort_observed), fmt_double(s.effort_optimal),
             s.converged ? "1" : "0", fmt_double(s.residual)});
  }
  return csv.str();
}

/// Model document plus the calibration bookkeeping (sample counts, exclusions).
inline json calibration_model_json(const CalibrationResult& r) {
  json j = to_json(r.model);
  json cells = json::array();
  for (const auto& c : r.cells) {
    cells.push_back(json{{"feature", c.feature},
                         {"r", c.relevant},
                         {"used", c.used},
                         {"excluded", c.excluded},
                         {"log_likelihood", c.fit.log_likelihood},
                         {"mean", c.fit.dist.mean()}});
  }
  j["calibration"] = json{{"samples", r.samples.size()},
                          {"excluded", r.excluded()},
                          {"exclusion_rate", r.exclusion_rate()},
                          {"failed_trials", r.failed_trials},
                          {"cells", cells}};
  return j;
}

}  // namespace phri::harness
