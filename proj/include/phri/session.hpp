#pragma once

// A single-writer learning session: the robot's current objective estimate,
// its trajectory, and the audited correction pipeline
//   deform -> minimal-effort solve -> beta_hat -> P(r|beta_hat) -> update -> replan.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "phri/arm_model.hpp"
#include "phri/errors.hpp"
#include "phri/features.hpp"
#include "phri/learner.hpp"
#include "phri/planner.hpp"
#include "phri/rationality.hpp"
#include "phri/relevance.hpp"
#include "phri/trajectory.hpp"

namespace phri {

enum class Strategy { kAdaptive, kFixed };
/// kPerFeature constrains one feature per solve; kJoint constrains all known
/// features at once and shares the resulting beta_hat.
enum class BetaMode { kPerFeature, kJoint };
/// kComponent gates each feature by its own posterior; kShared applies the
/// mean posterior to every feature.
enum class GateMode { kComponent, kShared };

inline std::string to_string(Strategy s) { return s == Strategy::kAdaptive ? "adaptive" : "fixed"; }
inline Strategy strategy_from_string(const std::string& s) {
  if (s == "adaptive") return Strategy::kAdaptive;
  if (s == "fixed") return Strategy::kFixed;
  throw ConfigurationError("unknown learning strategy '" + s + "'");
}
inline std::string to_string(BetaMode m) { return m == BetaMode::kPerFeature ? "per_feature" : "joint"; }
inline BetaMode beta_mode_from_string(const std::string& s) {
  if (s == "per_feature") return BetaMode::kPerFeature;
  if (s == "joint") return BetaMode::kJoint;
  throw ConfigurationError("unknown beta mode '" + s + "'");
}
inline std::string to_string(GateMode m) { return m == GateMode::kComponent ? "component" : "shared"; }
inline GateMode gate_mode_from_string(const std::string& s) {
  if (s == "component") return GateMode::kComponent;
  if (s == "shared") return GateMode::kShared;
  throw ConfigurationError("unknown gate mode '" + s + "'");
}

/// Geometry and numerical settings shared by every session of an experiment.
struct Scene {
  ArmModel model;
  FeatureSet features;
  JointConfig start;
  JointConfig goal;
  int horizon = 10;
  double dt = 0.1;
  double mu = 0.1;
  PlannerOptions planner;
  RationalityOptions rationality;
};

struct LearnerSettings {
  double alpha = 0.05;
  double lambda = 10.0;
  Strategy strategy = Strategy::kAdaptive;
  BetaMode beta_mode = BetaMode::kPerFeature;
  GateMode gate_mode = GateMode::kComponent;
  MapUpdateOptions solver;
};

struct FeatureAudit {
  std::string name;
  double beta_hat = 0.0;
  double effort_optimal = 0.0;
  bool converged = true;
  /// absent when no rationality model is loaded (fixed strategy only)
  std::optional<double> p_relevant;
  double gate = 1.0;
};

struct AuditRecord {
  int sequence = 0;
  int waypoint_index = 0;
  std::string rule;
  Vec torque;
  double effort_observed = 0.0;
  std::vector<FeatureAudit> features;
  Vec delta_phi;
  Vec theta_before;
  Vec theta_after;
  std::string update_method;
  double update_residual = 0.0;
  bool update_fell_back = false;
  bool replan_converged = true;
  /// empty when the pipeline succeeded; otherwise theta and the trajectory
  /// were left untouched
  std::string error;
};

class LearningSession {
 public:
  LearningSession(Scene scene, LearnerSettings settings, Vec theta0,
                  std::optional<RationalityModel> rationality = std::nullopt)
      : scene_(std::move(scene)),
        settings_(settings),
        theta0_(std::move(theta0)),
        rationality_(std::move(rationality)),
        deformer_(scene_.horizon, scene_.model.n_links(), scene_.mu) {
    check_theta(scene_.features, theta0_);
    require_model(settings_.strategy);
    if (rationality_) {
      for (int i : scene_.features.known_indices()) rationality_->cell(scene_.features.spec(i).name);
    }
    reset();
  }

  void reset() {
    theta_ = theta0_;
    const PlanResult p = plan(scene_.features, scene_.model, theta_, scene_.start, scene_.goal, scene_.horizon,
                              scene_.dt, scene_.planner);
    trajectory_ = p.trajectory;
    current_index_ = 0;
    audit_.clear();
    theta_trace_ = {theta_};
  }

  void set_strategy(Strategy s) {
    require_model(s);
    settings_.strategy = s;
  }

  /// Moves execution forward, stopping at the goal.
  void advance(int steps = 1) { current_index_ = std::min(current_index_ + std::max(0, steps), trajectory_.horizon()); }
  bool finished() const { return current_index_ >= trajectory_.horizon(); }

  const Scene& scene() const { return scene_; }
  const LearnerSettings& settings() const { return settings_; }
  const DeformationOperator& deformer() const { return deformer_; }
  const Vec& theta() const { return theta_; }
  const Vec& theta0() const { return theta0_; }
  const Trajectory& trajectory() const { return trajectory_; }
  int current_index() const { return current_index_; }
  const std::vector<AuditRecord>& audit() const { return audit_; }
  const std::vector<Vec>& theta_trace() const { return theta_trace_; }
  const std::optional<RationalityModel>& rationality() const { return rationality_; }

  double theta_path_length() const {
    double len = 0.0;
    for (std::size_t i = 1; i < theta_trace_.size(); ++i) len += (theta_trace_[i] - theta_trace_[i - 1]).norm();
    return len;
  }

  const AuditRecord& process_correction(const Correction& u) {
    const FeatureSet& fs = scene_.features;
    const auto known = fs.known_indices();
    AuditRecord rec;
    rec.sequence = static_cast<int>(audit_.size());
    rec.waypoint_index = u.waypoint_index;
    rec.rule = to_string(settings_.strategy);
    rec.torque = u.torque;
    rec.effort_observed = u.torque.allFinite() ? u.effort() : 0.0;
    rec.theta_before = theta_;
    rec.theta_after = theta_;

    try {
      const Trajectory xi_h = deformer_.deform(trajectory_, u);
      const Vec delta_full = total_features(fs, scene_.model, xi_h) - total_features(fs, scene_.model, trajectory_);
      rec.delta_phi = fs.known_part(delta_full);

      std::vector<BetaEstimate> betas;
      if (settings_.beta_mode == BetaMode::kPerFeature) {
        betas = estimate_betas_per_feature(fs, scene_.model, deformer_, trajectory_, u, known, scene_.rationality);
      } else {
        const BetaEstimate joint =
            estimate_correction_beta(fs, scene_.model, deformer_, trajectory_, u, known, scene_.rationality);
        betas.assign(known.size(), joint);
      }

      Vec p(static_cast<Eigen::Index>(known.size()));
      rec.features.resize(known.size());
      for (std::size_t i = 0; i < known.size(); ++i) {
        FeatureAudit& fa = rec.features[i];
        fa.name = fs.spec(known[i]).name;
        fa.beta_hat = betas[i].beta_hat;
        fa.effort_optimal = betas[i].effort_optimal;
        fa.converged = betas[i].converged;
        if (rationality_) {
          fa.p_relevant = relevance_posterior(*rationality_, betas[i].beta_hat, fa.name).p_relevant;
          p[static_cast<Eigen::Index>(i)] = *fa.p_relevant;
        }
      }
      if (rationality_ && settings_.gate_mode == GateMode::kShared) p.setConstant(p.mean());

      Vec next;
      if (settings_.strategy == Strategy::kAdaptive) {
        const UpdateContext ctx{rec.delta_phi, p, settings_.lambda};
        const UpdateResult ur = map_update(theta_, settings_.alpha, ctx, settings_.solver);
        next = ur.theta;
        rec.update_method = ur.method;
        rec.update_residual = ur.residual;
        rec.update_fell_back = ur.fell_back;
        for (std::size_t i = 0; i < known.size(); ++i) rec.features[i].gate = ur.gates[static_cast<Eigen::Index>(i)];
      } else {
        next = fixed_update(theta_, settings_.alpha, rec.delta_phi);
        rec.update_method = "fixed";
      }

      Trajectory replanned = trajectory_;
      const bool nothing_changed = delta_full.isZero(0.0) && next == theta_;
      if (!nothing_changed) {
        const PlanResult pr = replan_after_update(fs, scene_.model, next, xi_h, u.waypoint_index, scene_.planner);
        replanned = pr.trajectory;
        rec.replan_converged = pr.converged;
      }
      rec.theta_after = next;
      theta_ = std::move(next);
      trajectory_ = std::move(replanned);
    } catch (const Error& e) {
      rec.error = e.what();
      rec.theta_after = theta_;
    }
    theta_trace_.push_back(theta_);
    audit_.push_back(std::move(rec));
    return audit_.back();
  }

 private:
  void require_model(Strategy s) const {
    if (s == Strategy::kAdaptive && !rationality_) {
      throw ConfigurationError("adaptive learning needs a calibrated rationality model");
    }
  }

  Scene scene_;
  LearnerSettings settings_;
  Vec theta0_;
  std::optional<RationalityModel> rationality_;
  DeformationOperator deformer_;
  Vec theta_;
  Trajectory trajectory_;
  int current_index_ = 0;
  std::vector<AuditRecord> audit_;
  std::vector<Vec> theta_trace_;
};

}  // namespace phri
