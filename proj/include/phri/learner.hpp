#pragma once

// Relevance-gated MAP weight update. For feature i with relevance posterior
// p_i the update is
//   theta'_i = theta_hat_i - alpha * g_i(theta') * dPhi_i,
//   g_i = p_i L1(theta') / (p_i L1(theta') + (1 - p_i) L0),
// where L1 = exp(-theta'^T dPhi) and L0 = (lambda/pi)^{k/2} exp(-lambda |dPhi|^2).
// All gates depend on theta' only through s = theta'^T dPhi, so the implicit
// equation reduces to a scalar root in s when fixed-point iteration stalls.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "phri/arm_model.hpp"
#include "phri/errors.hpp"

namespace phri {

struct UpdateContext {
  /// Phi(xi_H) - Phi(xi_R) over the known features
  Vec delta_phi;
  /// P(r = 1 | beta_hat) per known feature
  Vec p_relevant;
  double lambda = 10.0;

  int k() const { return static_cast<int>(delta_phi.size()); }

  void check(const Vec& theta) const {
    if (theta.size() != delta_phi.size() || p_relevant.size() != delta_phi.size()) {
      throw ConfigurationError("update context dimensions do not match theta");
    }
    if (!delta_phi.allFinite() || !theta.allFinite()) throw ConfigurationError("update inputs must be finite");
    if (!(lambda > 0.0)) throw DomainError("lambda must be positive");
    for (Eigen::Index i = 0; i < p_relevant.size(); ++i) {
      if (!(p_relevant[i] >= 0.0 && p_relevant[i] <= 1.0)) throw DomainError("p_relevant outside [0,1]");
    }
  }
};

inline double log_irrelevant_likelihood(const UpdateContext& ctx) {
  if (!(ctx.lambda > 0.0)) throw DomainError("lambda must be positive");
  return 0.5 * ctx.k() * std::log(ctx.lambda / std::numbers::pi) - ctx.lambda * ctx.delta_phi.squaredNorm();
}

/// (lambda/pi)^{k/2} exp(-lambda |dPhi|^2)
inline double irrelevant_likelihood(const UpdateContext& ctx) { return std::exp(log_irrelevant_likelihood(ctx)); }

inline double log_relevant_likelihood(const Vec& theta, const UpdateContext& ctx) {
  if (theta.size() != ctx.delta_phi.size()) throw ConfigurationError("theta/delta_phi dimension mismatch");
  return -theta.dot(ctx.delta_phi);
}

/// exp(-theta^T dPhi)
inline double relevant_likelihood(const Vec& theta, const UpdateContext& ctx) {
  return std::exp(log_relevant_likelihood(theta, ctx));
}

/// Per-feature gate factors at s = theta'^T dPhi.
inline Vec gate_factors(double s, const UpdateContext& ctx) {
  const double log_l0 = log_irrelevant_likelihood(ctx);
  Vec g(ctx.k());
  for (int i = 0; i < ctx.k(); ++i) {
    const double p = ctx.p_relevant[i];
    if (p >= 1.0) {
      g[i] = 1.0;
    } else if (p <= 0.0) {
      g[i] = 0.0;
    } else {
      const double d = (std::log(p) - s) - (std::log1p(-p) + log_l0);
      g[i] = d >= 0.0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
    }
  }
  return g;
}

/// Right-hand side of the implicit update evaluated at `theta`.
inline Vec map_update_rhs(const Vec& theta_hat, double alpha, const UpdateContext& ctx, const Vec& theta) {
  const Vec g = gate_factors(theta.dot(ctx.delta_phi), ctx);
  return theta_hat - alpha * g.cwiseProduct(ctx.delta_phi);
}

struct UpdateResult {
  Vec theta;
  Vec gates;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  /// non-convergence: the fixed full step was returned instead
  bool fell_back = false;
  /// "fixed_point", "newton" or "fallback"
  std::string method;
};

struct MapUpdateOptions {
  double damping = 0.5;
  int max_iterations = 200;
  double tolerance = 1e-10;
};

/// theta_hat - alpha * dPhi
inline Vec fixed_update(const Vec& theta_hat, double alpha, const Vec& delta_phi) {
  if (theta_hat.size() != delta_phi.size()) throw ConfigurationError("theta/delta_phi dimension mismatch");
  return theta_hat - alpha * delta_phi;
}

inline UpdateResult map_update(const Vec& theta_hat, double alpha, const UpdateContext& ctx,
                               const MapUpdateOptions& opts = {}) {
  ctx.check(theta_hat);
  if (!(alpha >= 0.0)) throw DomainError("step size alpha must be nonnegative");

  auto residual_at = [&](const Vec& th) { return (th - map_update_rhs(theta_hat, alpha, ctx, th)).norm(); };

  UpdateResult res;
  // damped fixed point
  Vec theta = theta_hat;
  for (int it = 0; it < opts.max_iterations; ++it) {
    res.iterations = it + 1;
    const Vec rhs = map_update_rhs(theta_hat, alpha, ctx, theta);
    const double r = (theta - rhs).norm();
    if (r <= opts.tolerance) break;
    theta = (1.0 - opts.damping) * theta + opts.damping * rhs;
  }
  // One undamped step lands exactly on the gate-weighted form.
  Vec polished = map_update_rhs(theta_hat, alpha, ctx, theta);
  if (residual_at(polished) <= residual_at(theta)) theta = polished;
  res.residual = residual_at(theta);
  res.method = "fixed_point";

  if (!(res.residual <= opts.tolerance)) {
    // h(s) = s - theta_hat.dPhi + alpha sum_i g_i(s) dPhi_i^2 has a root in
    // [theta_hat.dPhi - alpha |dPhi|^2, theta_hat.dPhi] since g in [0,1].
    const Vec d2 = ctx.delta_phi.cwiseAbs2();
    const double s0 = theta_hat.dot(ctx.delta_phi);
    auto h = [&](double s) { return s - s0 + alpha * gate_factors(s, ctx).dot(d2); };
    auto dh = [&](double s) {
      const Vec g = gate_factors(s, ctx);
      return 1.0 - alpha * (g.array() * (1.0 - g.array()) * d2.array()).sum();
    };
    double lo = s0 - alpha * d2.sum();
    double hi = s0;
    double s = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
      res.iterations += 1;
      const double hs = h(s);
      if (hs == 0.0) break;
      if (hs < 0.0) lo = s; else hi = s;
      const double slope = dh(s);
      double next = slope != 0.0 ? s - hs / slope : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - s) <= 1e-16 * (1.0 + std::abs(s))) {
        s = next;
        break;
      }
      s = next;
    }
    const Vec candidate = theta_hat - alpha * gate_factors(s, ctx).cwiseProduct(ctx.delta_phi);
    const double r = residual_at(candidate);
    if (r < res.residual) {
      theta = candidate;
      res.residual = r;
      res.method = "newton";
    }
  }

  res.converged = res.residual <= opts.tolerance;
  if (!res.converged) {
    res.theta = fixed_update(theta_hat, alpha, ctx.delta_phi);
    res.gates = Vec::Ones(ctx.k());
    res.fell_back = true;
    res.method = "fallback";
    return res;
  }
  res.theta = theta;
  res.gates = gate_factors(theta.dot(ctx.delta_phi), ctx);
  return res;
}

}  // namespace phri
