#pragma once

// Rationality estimation for a single correction.
//
// Given the robot trajectory xi_R and an observed push u_H producing xi_H, the
// minimal-effort push u* reproducing the same feature counts (on a chosen
// feature subset) is found by penalty continuation. The excess effort
// |u_H|^2 - |u*|^2 then gives the maximum-likelihood rationality
//   beta_hat = k / (2 (|u_H|^2 - |u*|^2))
// under the Laplace-approximated likelihood
//   log P = -beta (|u_H|^2 - |u*|^2) + (k/2) log beta + (1/2) log|H| - (k/2) log(2 pi).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "phri/arm_model.hpp"
#include "phri/errors.hpp"
#include "phri/features.hpp"
#include "phri/trajectory.hpp"

namespace phri {

/// Feature counts of xi_R + mu A^{-1} U as a function of the torque u at a
/// fixed waypoint, restricted to `subset`.
class CorrectionFeatureMap {
 public:
  CorrectionFeatureMap(const FeatureSet& fs, const ArmModel& model, const DeformationOperator& deformer,
                       const Trajectory& xi_r, int waypoint_index, std::vector<int> subset)
      : fs_(&fs), model_(&model), xi_r_(&xi_r), subset_(std::move(subset)) {
    deformer.check_index(waypoint_index);
    if (xi_r.horizon() != deformer.horizon() || xi_r.dof() != deformer.dof()) {
      throw ConfigurationError("trajectory shape does not match the deformation operator");
    }
    if (subset_.empty()) throw ConfigurationError("feature subset is empty");
    for (int i : subset_)
      if (i < 0 || i >= fs.size()) throw ConfigurationError("feature index out of range");
    influence_ = deformer.influence(waypoint_index);
  }

  int dof() const { return xi_r_->dof(); }
  int n_constraints() const { return static_cast<int>(subset_.size()); }
  const std::vector<int>& subset() const { return subset_; }

  Vec operator()(const Vec& u) const {
    Vec out = Vec::Zero(n_constraints());
    for (int t = 0; t < xi_r_->size(); ++t) {
      if (influence_[t] == 0.0) {
        out += FeatureSet::select(phi(*fs_, *model_, xi_r_->waypoint(t)), subset_);
      } else {
        out += FeatureSet::select(phi(*fs_, *model_, xi_r_->waypoint(t) + influence_[t] * u), subset_);
      }
    }
    return out;
  }

  /// d/du of operator(), n_constraints x dof.
  Mat jacobian(const Vec& u) const {
    Mat jac = Mat::Zero(n_constraints(), dof());
    for (int t = 0; t < xi_r_->size(); ++t) {
      if (influence_[t] == 0.0) continue;
      const Mat pj = phi_jacobian(*fs_, *model_, xi_r_->waypoint(t) + influence_[t] * u);
      for (int c = 0; c < n_constraints(); ++c) jac.row(c) += influence_[t] * pj.row(subset_[c]);
    }
    return jac;
  }

 private:
  const FeatureSet* fs_;
  const ArmModel* model_;
  const Trajectory* xi_r_;
  std::vector<int> subset_;
  Vec influence_;
};

struct PenaltySchedule {
  std::vector<double> weights{1e2, 1e3, 1e4, 1e5, 1e6};
  /// max |Phi_i(u*) - target_i| accepted at exit
  double residual_tolerance = 1e-5;
  int inner_iterations = 200;
  int polish_iterations = 50;
};

struct OptimalCorrectionResult {
  Vec torque;
  double effort = 0.0;
  /// max-abs constraint residual at exit
  double residual = 0.0;
  bool converged = false;
};

namespace detail {

// Levenberg-Marquardt on |u|^2 + rho |c(u)|^2 written as a least-squares
// residual [u; sqrt(rho) c(u)].
template <typename Map>
Vec penalty_solve(const Map& map, const Vec& target, Vec u, double rho, int max_iter) {
  const int n = map.dof();
  const double sr = std::sqrt(rho);
  auto cost = [&](const Vec& v) { return v.squaredNorm() + rho * (map(v) - target).squaredNorm(); };
  double f = cost(u);
  double nu = 1e-3;
  for (int it = 0; it < max_iter; ++it) {
    const Vec c = map(u) - target;
    const Mat jc = map.jacobian(u);
    Mat jr(n + jc.rows(), n);
    jr << Mat::Identity(n, n), sr * jc;
    Vec r(n + c.size());
    r << u, sr * c;
    const Vec grad = jr.transpose() * r;
    if (grad.norm() <= 1e-14 * (1.0 + std::sqrt(f))) break;
    const Mat jtj = jr.transpose() * jr;
    bool improved = false;
    for (int tries = 0; tries < 30; ++tries) {
      Mat lhs = jtj;
      lhs.diagonal().array() += nu * (1.0 + jtj.diagonal().array());
      const Vec step = lhs.ldlt().solve(-grad);
      const Vec cand = u + step;
      const double fc = cost(cand);
      if (std::isfinite(fc) && fc < f) {
        const double rel = (f - fc) / std::max(f, 1e-300);
        u = cand;
        f = fc;
        nu = std::max(nu * 0.3, 1e-12);
        improved = true;
        if (rel < 1e-15) it = max_iter;
        break;
      }
      nu *= 10.0;
    }
    if (!improved) break;
  }
  return u;
}

// Gauss-Newton feasibility restoration: u <- J^+ (J u - c). Fixed points
// satisfy c = 0 and u in range(J^T), i.e. the KKT conditions of
// min |u|^2 s.t. c(u) = 0.
template <typename Map>
Vec polish(const Map& map, const Vec& target, Vec u, int iterations) {
  double best_res = (map(u) - target).cwiseAbs().maxCoeff();
  for (int it = 0; it < iterations && best_res > 1e-13; ++it) {
    const Vec c = map(u) - target;
    const Mat j = map.jacobian(u);
    Mat jjt = j * j.transpose();
    jjt.diagonal().array() += 1e-14 * (1.0 + jjt.diagonal().array());
    const Vec cand = j.transpose() * jjt.ldlt().solve(j * u - c);
    // halve toward the candidate until the residual does not grow
    Vec next = cand;
    double res = (map(next) - target).cwiseAbs().maxCoeff();
    for (int h = 0; h < 20 && !(res <= best_res); ++h) {
      next = 0.5 * (u + next);
      res = (map(next) - target).cwiseAbs().maxCoeff();
    }
    if (!(res <= best_res)) break;
    const bool stalled = (next - u).norm() <= 1e-15 * (1.0 + u.norm());
    u = next;
    best_res = res;
    if (stalled) break;
  }
  return u;
}

}  // namespace detail

/// Minimal-effort torque reproducing `target` on the map's feature subset.
/// `observed` (the actual push, feasible by construction when target was
/// induced by it) is used as a second seed and as a feasible fallback.
template <typename Map>
OptimalCorrectionResult optimal_correction(const Map& map, const Vec& target, const Vec& observed,
                                           const PenaltySchedule& schedule = {}) {
  if (target.size() != map.n_constraints()) throw ConfigurationError("target size mismatch");
  const int n = map.dof();

  auto finish = [&](const Vec& u) {
    OptimalCorrectionResult r;
    r.torque = u;
    r.effort = u.squaredNorm();
    r.residual = (map(u) - target).cwiseAbs().maxCoeff();
    r.converged = r.residual <= schedule.residual_tolerance;
    return r;
  };

  std::vector<Vec> seeds{Vec::Zero(n)};
  if (observed.size() == n && observed.allFinite() && observed.squaredNorm() > 0.0) seeds.push_back(observed);

  std::vector<OptimalCorrectionResult> candidates;
  for (Vec u : seeds) {
    for (double rho : schedule.weights) u = detail::penalty_solve(map, target, u, rho, schedule.inner_iterations);
    u = detail::polish(map, target, u, schedule.polish_iterations);
    candidates.push_back(finish(u));
  }
  if (observed.size() == n && observed.allFinite()) candidates.push_back(finish(observed));

  const OptimalCorrectionResult* best = nullptr;
  for (const auto& c : candidates) {
    if (!c.converged) continue;
    if (!best || c.effort < best->effort) best = &c;
  }
  if (!best) {
    for (const auto& c : candidates)
      if (!best || c.residual < best->residual) best = &c;
  }
  return *best;
}

/// Hessian of |u|^2 + penalty |c(u)|^2 at u by central differences of the
/// analytic gradient, symmetrized.
template <typename Map>
Mat penalized_hessian(const Map& map, const Vec& target, const Vec& u, double penalty, double step = 1e-5) {
  const int n = map.dof();
  auto grad = [&](const Vec& v) -> Vec {
    return 2.0 * v + 2.0 * penalty * map.jacobian(v).transpose() * (map(v) - target);
  };
  Mat h(n, n);
  for (int j = 0; j < n; ++j) {
    Vec up = u, dn = u;
    up[j] += step;
    dn[j] -= step;
    h.col(j) = (grad(up) - grad(dn)) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

/// log|H| for a symmetric positive-definite H.
inline double spd_logdet(const Mat& h) {
  Eigen::LLT<Mat> llt(h);
  if (llt.info() != Eigen::Success) throw DomainError("Hessian is not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

/// Laplace estimate of log \int exp(-beta c(u)) du given the minimum value
/// c(u*) and log|Hessian of c at u*|.
inline double laplace_log_partition(double beta, double cost_at_min, double hessian_logdet, int k) {
  if (!(beta > 0.0)) throw DomainError("beta must be positive");
  return -beta * cost_at_min + 0.5 * k * std::log(2.0 * std::numbers::pi) - 0.5 * k * std::log(beta) -
         0.5 * hessian_logdet;
}

/// Log of the Laplace-approximated correction likelihood.
inline double laplace_log_likelihood(double beta, double effort_observed, double effort_optimal,
                                     double hessian_logdet, int k) {
  if (!(beta > 0.0)) throw DomainError("beta must be positive");
  return -beta * (effort_observed - effort_optimal) + 0.5 * k * std::log(beta) + 0.5 * hessian_logdet -
         0.5 * k * std::log(2.0 * std::numbers::pi);
}

inline double laplace_log_likelihood(double beta, const Vec& u_h, const Vec& u_star, double hessian_logdet,
                                     int k) {
  return laplace_log_likelihood(beta, u_h.squaredNorm(), u_star.squaredNorm(), hessian_logdet, k);
}

struct BetaEstimate {
  double beta_hat = 0.0;
  double effort_observed = 0.0;
  double effort_optimal = 0.0;
  int k = 0;
  /// feature index for per-feature estimates, -1 for a joint estimate
  int feature = -1;
  bool converged = true;
  bool capped = false;
  /// constraint residual of the minimal-effort solve
  double residual = 0.0;
};

struct BetaOptions {
  double beta_max = 1e3;
  /// gaps below this count as zero (perfectly efficient)
  double zero_gap = 1e-9;
  /// negative gaps within this are rounding, beyond it a failed solve
  double gap_tolerance = 1e-6;
};

/// Closed-form maximizer of laplace_log_likelihood over beta.
inline BetaEstimate estimate_beta(double effort_observed, double effort_optimal, int k,
                                  const BetaOptions& opts = {}) {
  if (k < 1) throw DomainError("action dimension must be positive");
  BetaEstimate e;
  e.effort_observed = effort_observed;
  e.effort_optimal = effort_optimal;
  e.k = k;
  const double gap = effort_observed - effort_optimal;
  if (gap < -opts.gap_tolerance) {
    throw SolverError("minimal effort exceeds observed effort by " + std::to_string(-gap) +
                      "; the constrained solve failed");
  }
  if (gap < opts.zero_gap) {
    e.beta_hat = opts.beta_max;
    e.capped = true;
    return e;
  }
  e.beta_hat = k / (2.0 * gap);
  if (e.beta_hat >= opts.beta_max) {
    e.beta_hat = opts.beta_max;
    e.capped = true;
  }
  return e;
}

inline BetaEstimate estimate_beta(const Vec& u_h, const Vec& u_star, int k, const BetaOptions& opts = {}) {
  return estimate_beta(u_h.squaredNorm(), u_star.squaredNorm(), k, opts);
}

struct RationalityOptions {
  BetaOptions beta;
  PenaltySchedule schedule;
};

/// Full estimate for one observed push on one feature subset: deform, take
/// the induced counts as the constraint target, solve for u*, apply the closed
/// form.
inline BetaEstimate estimate_correction_beta(const FeatureSet& fs, const ArmModel& model,
                                             const DeformationOperator& deformer, const Trajectory& xi_r,
                                             const Correction& u_h, const std::vector<int>& subset,
                                             const RationalityOptions& opts = {}) {
  const CorrectionFeatureMap map(fs, model, deformer, xi_r, u_h.waypoint_index, subset);
  const Vec target = map(u_h.torque);
  const OptimalCorrectionResult opt = optimal_correction(map, target, u_h.torque, opts.schedule);
  BetaEstimate e = estimate_beta(u_h.effort(), opt.effort, static_cast<int>(u_h.torque.size()), opts.beta);
  e.converged = opt.converged;
  e.residual = opt.residual;
  e.feature = subset.size() == 1 ? subset.front() : -1;
  return e;
}

/// One estimate per index in `features`, each constraining that feature alone.
inline std::vector<BetaEstimate> estimate_betas_per_feature(const FeatureSet& fs, const ArmModel& model,
                                                            const DeformationOperator& deformer,
                                                            const Trajectory& xi_r, const Correction& u_h,
                                                            const std::vector<int>& features,
                                                            const RationalityOptions& opts = {}) {
  std::vector<BetaEstimate> out;
  out.reserve(features.size());
  for (int f : features) out.push_back(estimate_correction_beta(fs, model, deformer, xi_r, u_h, {f}, opts));
  return out;
}

}  // namespace phri
