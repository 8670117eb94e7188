#pragma once

// Synthetic noisily-rational humans. A human with weights theta_true over the
// full feature set and rationality beta_true pushes with density
//   P(u) ~ exp(-beta_true (theta_true^T Phi(xi_R + mu A^{-1} U) + lambda_h |u|^2)),
// sampled here by Metropolis-Hastings started at the mode.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "phri/arm_model.hpp"
#include "phri/errors.hpp"
#include "phri/features.hpp"
#include "phri/optim.hpp"
#include "phri/rationality.hpp"
#include "phri/trajectory.hpp"

namespace phri {

struct SimHuman {
  /// weights over every feature, hidden ones included
  Vec theta_true;
  /// +infinity means the human always applies the optimal push
  double beta_true = std::numeric_limits<double>::infinity();
  double effort_weight = 1.0;
  std::uint64_t seed = 0;
};

struct MetropolisOptions {
  int steps = 500;
  int burn_in = 200;
  /// proposal std relative to the effort-only posterior std 1/sqrt(2 beta lambda_h)
  double proposal_scale = 1.0;
};

/// Mixes a human seed with a per-call stream id (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace detail {

inline std::vector<int> all_features(const FeatureSet& fs) {
  std::vector<int> idx(fs.size());
  for (int i = 0; i < fs.size(); ++i) idx[i] = i;
  return idx;
}

}  // namespace detail

/// The human's cost theta_true^T Phi(xi_H(u)) + lambda_h |u|^2 as a function of u.
class HumanCost {
 public:
  HumanCost(const SimHuman& h, const FeatureSet& fs, const ArmModel& model, const DeformationOperator& deformer,
            const Trajectory& xi_r, int waypoint_index)
      : human_(&h), map_(fs, model, deformer, xi_r, waypoint_index, detail::all_features(fs)) {
    if (h.theta_true.size() != fs.size()) {
      throw ConfigurationError("human weights must cover every feature (" + std::to_string(fs.size()) + ")");
    }
  }

  double operator()(const Vec& u) const {
    return human_->theta_true.dot(map_(u)) + human_->effort_weight * u.squaredNorm();
  }
  Vec gradient(const Vec& u) const {
    return map_.jacobian(u).transpose() * human_->theta_true + 2.0 * human_->effort_weight * u;
  }
  int dof() const { return map_.dof(); }

 private:
  const SimHuman* human_;
  CorrectionFeatureMap map_;
};

inline Vec optimal_push(const HumanCost& cost) {
  auto fn = [&](const Vec& u, Vec& g) {
    g = cost.gradient(u);
    return cost(u);
  };
  MinimizeOptions mo;
  mo.gradient_tolerance = 1e-9;
  mo.max_iterations = 2000;
  const MinimizeResult r = minimize_lbfgs(fn, Vec::Zero(cost.dof()), mo);
  if (!r.x.allFinite()) throw SolverError("human push optimization diverged");
  // Line search can stall within rounding of the optimum.
  if (!r.converged && r.gradient_norm > 1e-5) {
    throw SolverError("human push optimization stalled with gradient norm " + std::to_string(r.gradient_norm));
  }
  return r.x;
}

/// Post-burn-in Metropolis-Hastings states targeting exp(-beta cost(u)),
/// starting from `start`.
inline std::vector<Vec> metropolis_chain(const HumanCost& cost, double beta, double effort_weight,
                                         const Vec& start, std::mt19937_64& rng,
                                         const MetropolisOptions& opts = {}) {
  const int k = cost.dof();
  const double sigma = opts.proposal_scale * 2.38 / std::sqrt(static_cast<double>(k)) /
                       std::sqrt(2.0 * beta * effort_weight);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vec u = start;
  double e = cost(u);
  std::vector<Vec> kept;
  kept.reserve(static_cast<std::size_t>(std::max(0, opts.steps - opts.burn_in)));
  for (int step = 0; step < opts.steps; ++step) {
    Vec prop(k);
    for (int j = 0; j < k; ++j) prop[j] = u[j] + sigma * normal(rng);
    const double ep = cost(prop);
    const double log_accept = -beta * (ep - e);
    if (log_accept >= 0.0 || std::log(unif(rng)) < log_accept) {
      u = std::move(prop);
      e = ep;
    }
    if (step >= opts.burn_in) kept.push_back(u);
  }
  return kept;
}

/// One push from the human at `waypoint_index`. `stream` distinguishes
/// successive pushes from the same human; identical arguments give identical
/// pushes.
inline Correction sample_correction(const SimHuman& h, const FeatureSet& fs, const ArmModel& model,
                                    const DeformationOperator& deformer, const Trajectory& xi_r, int waypoint_index,
                                    std::uint64_t stream = 0, const MetropolisOptions& opts = {}) {
  if (!(h.beta_true >= 0.0)) throw ConfigurationError("beta_true must be nonnegative");
  if (!(h.effort_weight > 0.0)) throw ConfigurationError("effort weight must be positive");
  const HumanCost cost(h, fs, model, deformer, xi_r, waypoint_index);
  Vec u = optimal_push(cost);
  if (std::isfinite(h.beta_true)) {
    if (h.beta_true == 0.0) throw ConfigurationError("beta_true = 0 has no proper push distribution");
    std::mt19937_64 rng(derive_seed(h.seed, stream));
    const auto chain = metropolis_chain(cost, h.beta_true, h.effort_weight, u, rng, opts);
    if (!chain.empty()) u = chain.back();
  }
  return {u, waypoint_index};
}

/// Per-feature weight, sign included, that a human "correcting" that feature
/// places on it (e.g. positive to approach the table, negative to move away
/// from the person).
struct HumanFactory {
  std::map<std::string, double> target_weights;
  double beta_true = 20.0;
  double effort_weight = 1.0;
};

inline SimHuman make_human_on(const FeatureSet& fs, const std::string& feature, const HumanFactory& f,
                              std::uint64_t seed, double weight_multiplier = 1.0) {
  const int idx = fs.index_of(feature);
  auto it = f.target_weights.find(feature);
  if (it == f.target_weights.end()) {
    throw ConfigurationError("human factory has no target weight for feature '" + feature + "'");
  }
  SimHuman h;
  h.theta_true = Vec::Zero(fs.size());
  h.theta_true[idx] = it->second * weight_multiplier;
  h.beta_true = f.beta_true;
  h.effort_weight = f.effort_weight;
  h.seed = seed;
  return h;
}

/// Human correcting a feature the robot knows about.
inline SimHuman make_relevant_human(const FeatureSet& fs, const std::string& target_feature, const HumanFactory& f,
                                    std::uint64_t seed, double weight_multiplier = 1.0) {
  return make_human_on(fs, target_feature, f, seed, weight_multiplier);
}

/// Human correcting a feature outside the robot's hypothesis space.
inline SimHuman make_irrelevant_human(const FeatureSet& fs, const std::string& hidden_feature,
                                      const HumanFactory& f, std::uint64_t seed, double weight_multiplier = 1.0) {
  if (fs.spec(fs.index_of(hidden_feature)).known) {
    throw ConfigurationError("feature '" + hidden_feature + "' is known to the robot, not hidden");
  }
  return make_human_on(fs, hidden_feature, f, seed, weight_multiplier);
}

}  // namespace phri
