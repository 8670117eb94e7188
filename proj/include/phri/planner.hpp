#pragma once

// Endpoint-constrained trajectory optimization:
//   minimize  theta^T Phi_known(xi) + w_s * sum_t |x_{t+1} - x_t|^2
// over the interior waypoints. The path-efficiency term carries a fixed
// weight so that the magnitude of theta, not only its direction, shapes the
// plan.

#include <Eigen/Dense>

#include <string>

#include "phri/arm_model.hpp"
#include "phri/errors.hpp"
#include "phri/features.hpp"
#include "phri/optim.hpp"
#include "phri/trajectory.hpp"

namespace phri {

struct PlannerOptions {
  double smoothness_weight = 1.0;
  int max_iterations = 2000;
  /// stationarity threshold on the interior gradient norm
  double gradient_tolerance = 1e-4;
};

struct PlanResult {
  Trajectory trajectory;
  double cost = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

inline void check_theta(const FeatureSet& fs, const Vec& theta) {
  if (theta.size() != static_cast<Eigen::Index>(fs.known_indices().size())) {
    throw ConfigurationError("theta has " + std::to_string(theta.size()) + " entries but " +
                             std::to_string(fs.known_indices().size()) + " features are known");
  }
  if (!theta.allFinite()) throw ConfigurationError("theta is not finite");
}

inline double planner_cost(const FeatureSet& fs, const ArmModel& model, const Vec& theta,
                           const Trajectory& xi, const PlannerOptions& opts = {}) {
  check_theta(fs, theta);
  double cost = theta.dot(fs.known_part(total_features(fs, model, xi)));
  for (int t = 0; t + 1 < xi.size(); ++t) {
    cost += opts.smoothness_weight * (xi.waypoints().row(t + 1) - xi.waypoints().row(t)).squaredNorm();
  }
  return cost;
}

/// Gradient of planner_cost with respect to the stacked waypoints; endpoint
/// entries are zero.
inline Vec planner_gradient(const FeatureSet& fs, const ArmModel& model, const Vec& theta,
                            const Trajectory& xi, const PlannerOptions& opts = {}) {
  check_theta(fs, theta);
  const auto known = fs.known_indices();
  const int n = xi.dof();
  const int last = xi.horizon();
  Vec grad = Vec::Zero(xi.size() * n);
  for (int t = 1; t < last; ++t) {
    const Mat jac = phi_jacobian(fs, model, xi.waypoint(t));
    Vec g = Vec::Zero(n);
    for (std::size_t i = 0; i < known.size(); ++i) g += theta[static_cast<Eigen::Index>(i)] * jac.row(known[i]).transpose();
    const Vec x = xi.waypoint(t);
    g += 2.0 * opts.smoothness_weight * (2.0 * x - xi.waypoint(t - 1) - xi.waypoint(t + 1));
    grad.segment(t * n, n) = g;
  }
  return grad;
}

/// Optimizes the interior of `seed`, keeping its first and last waypoints.
inline PlanResult plan_from_seed(const FeatureSet& fs, const ArmModel& model, const Vec& theta,
                                 const Trajectory& seed, const PlannerOptions& opts = {}) {
  check_theta(fs, theta);
  if (seed.horizon() < 2) {
    PlanResult r{seed, planner_cost(fs, model, theta, seed, opts), 0.0, 0, true};
    return r;
  }
  const int n = seed.dof();
  const int interior = seed.horizon() - 1;
  Trajectory work = seed;

  auto unpack = [&](const Vec& x) {
    for (int t = 0; t < interior; ++t) work.waypoints().row(t + 1) = x.segment(t * n, n).transpose();
  };
  auto fn = [&](const Vec& x, Vec& g) {
    unpack(x);
    g = planner_gradient(fs, model, theta, work, opts).segment(n, interior * n);
    return planner_cost(fs, model, theta, work, opts);
  };

  Vec x0(interior * n);
  for (int t = 0; t < interior; ++t) x0.segment(t * n, n) = seed.waypoint(t + 1);

  MinimizeOptions mo;
  mo.max_iterations = opts.max_iterations;
  mo.gradient_tolerance = opts.gradient_tolerance;
  const MinimizeResult mr = minimize_lbfgs(fn, x0, mo);
  unpack(mr.x);
  PlanResult res;
  res.trajectory = work;
  res.cost = mr.value;
  res.gradient_norm = mr.gradient_norm;
  res.iterations = mr.iterations;
  res.converged = mr.converged;
  return res;
}

/// Plans from a straight-line joint-space seed.
inline PlanResult plan(const FeatureSet& fs, const ArmModel& model, const Vec& theta,
                       const JointConfig& start, const JointConfig& goal, int horizon, double dt,
                       const PlannerOptions& opts = {}) {
  model.check(start);
  model.check(goal);
  if (horizon < 2) throw ConfigurationError("planning horizon must be at least 2");
  return plan_from_seed(fs, model, theta, Trajectory::straight_line(start, goal, horizon, dt), opts);
}

/// Replans the waypoints after `current_index` of the deformed trajectory
/// `xi_h`, keeping everything up to and including the current waypoint and
/// the goal. The deformed segment is the warm start; the straight-line seed
/// from the current waypoint to the goal is also tried and the cheaper plan
/// is kept.
inline PlanResult replan_after_update(const FeatureSet& fs, const ArmModel& model, const Vec& theta,
                                      const Trajectory& xi_h, int current_index,
                                      const PlannerOptions& opts = {}) {
  check_theta(fs, theta);
  const int last = xi_h.horizon();
  if (current_index < 0 || current_index > last) {
    throw CorrectionPlacementError("replanning index outside the trajectory");
  }
  const int seg_len = last - current_index;
  if (seg_len < 2) {
    return {xi_h, planner_cost(fs, model, theta, xi_h, opts), 0.0, 0, true};
  }
  const Trajectory warm_seed(xi_h.waypoints().bottomRows(seg_len + 1), xi_h.dt());
  const Trajectory cold_seed = Trajectory::straight_line(xi_h.waypoint(current_index),
                                                         xi_h.waypoint(last), seg_len, xi_h.dt());
  PlanResult warm = plan_from_seed(fs, model, theta, warm_seed, opts);
  PlanResult cold = plan_from_seed(fs, model, theta, cold_seed, opts);
  const PlanResult& best = cold.cost < warm.cost ? cold : warm;

  Trajectory out = xi_h;
  out.waypoints().bottomRows(seg_len + 1) = best.trajectory.waypoints();
  PlanResult res = best;
  res.trajectory = out;
  res.cost = planner_cost(fs, model, theta, out, opts);
  return res;
}

}  // namespace phri
