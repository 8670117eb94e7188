#pragma once

// Scaled chi-squared likelihoods P(beta_hat | r) and the relevance posterior
// P(r = 1 | beta_hat).

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "phri/errors.hpp"

namespace phri {

/// X = scale * Y with Y ~ chi^2(df); equivalently Gamma(df/2, 2 * scale).
struct ScaledChiSquared {
  double df = 1.0;
  double scale = 1.0;

  double log_pdf(double x) const {
    const double a = 0.5 * df;
    const double theta = 2.0 * scale;
    if (x < 0.0 || std::isnan(x)) return -std::numeric_limits<double>::infinity();
    if (x == 0.0) {
      if (a < 1.0) return std::numeric_limits<double>::infinity();
      if (a > 1.0) return -std::numeric_limits<double>::infinity();
      return -std::log(theta);
    }
    return (a - 1.0) * std::log(x) - x / theta - a * std::log(theta) - std::lgamma(a);
  }
  double pdf(double x) const { return std::exp(log_pdf(x)); }
  double mean() const { return df * scale; }
  double variance() const { return 2.0 * df * scale * scale; }

  double log_likelihood(std::span<const double> xs) const {
    double ll = 0.0;
    for (double x : xs) ll += log_pdf(x);
    return ll;
  }
};

struct ChiSquaredFit {
  ScaledChiSquared dist;
  double log_likelihood = 0.0;
  /// log-likelihood of the method-of-moments starting point
  double seed_log_likelihood = 0.0;
  int iterations = 0;
};

inline constexpr std::size_t kMinFitSamples = 30;

/// Maximum-likelihood scaled chi-squared fit. The shape solves
/// log a - digamma(a) = log(mean) - mean(log x) by Newton's method; the scale
/// follows in closed form.
inline ChiSquaredFit fit_scaled_chi_squared(std::span<const double> xs, std::size_t min_samples = kMinFitSamples) {
  if (xs.size() < min_samples) {
    throw FitError("chi-squared fit needs at least " + std::to_string(min_samples) + " samples, got " +
                   std::to_string(xs.size()));
  }
  double sum = 0.0, sum_log = 0.0;
  for (double x : xs) {
    if (!(x > 0.0) || !std::isfinite(x)) throw FitError("chi-squared samples must be positive and finite");
    sum += x;
    sum_log += std::log(x);
  }
  const double n = static_cast<double>(xs.size());
  const double mean = sum / n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= n;
  const double s = std::log(mean) - sum_log / n;
  if (!(var > 0.0) || !(s > 1e-14)) {
    throw FitError("degenerate chi-squared samples: all " + std::to_string(xs.size()) +
                   " values equal " + std::to_string(mean));
  }

  ChiSquaredFit fit;
  // method of moments: shape = mean^2 / var
  const double a_mom = mean * mean / var;
  const ScaledChiSquared mom{2.0 * a_mom, 0.5 * mean / a_mom};
  fit.seed_log_likelihood = mom.log_likelihood(xs);

  double a = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
  for (int it = 0; it < 100; ++it) {
    fit.iterations = it + 1;
    const double f = std::log(a) - boost::math::digamma(a) - s;
    const double fp = 1.0 / a - boost::math::trigamma(a);
    double next = a - f / fp;
    if (!(next > 0.0)) next = 0.5 * a;
    const bool done = std::abs(next - a) <= 1e-14 * a;
    a = next;
    if (done) break;
  }
  fit.dist = {2.0 * a, 0.5 * mean / a};
  fit.log_likelihood = fit.dist.log_likelihood(xs);
  if (fit.log_likelihood < fit.seed_log_likelihood) {
    // Newton landed on a worse point than the seed; keep the seed.
    fit.dist = mom;
    fit.log_likelihood = fit.seed_log_likelihood;
  }
  return fit;
}

/// Fitted P(beta_hat | r) for one feature.
struct RelevanceCell {
  ScaledChiSquared irrelevant;  // r = 0
  ScaledChiSquared relevant;    // r = 1
};

class RationalityModel {
 public:
  RationalityModel() = default;
  RationalityModel(std::map<std::string, RelevanceCell> cells, double prior_relevant, double beta_max)
      : cells_(std::move(cells)), prior_relevant_(prior_relevant), beta_max_(beta_max) {
    if (!(prior_relevant_ > 0.0 && prior_relevant_ < 1.0)) throw ConfigurationError("prior P(r=1) must be in (0,1)");
    if (!(beta_max_ > 0.0)) throw ConfigurationError("beta_max must be positive");
    for (const auto& [name, c] : cells_) {
      for (const auto* d : {&c.irrelevant, &c.relevant}) {
        if (!(d->df > 0.0) || !(d->scale > 0.0)) {
          throw ConfigurationError("chi-squared cell for '" + name + "' needs positive df and scale");
        }
      }
    }
  }

  const std::map<std::string, RelevanceCell>& cells() const { return cells_; }
  const RelevanceCell& cell(const std::string& feature) const {
    auto it = cells_.find(feature);
    if (it == cells_.end()) throw ConfigurationError("rationality model has no cell for feature '" + feature + "'");
    return it->second;
  }
  bool has(const std::string& feature) const { return cells_.count(feature) > 0; }
  double prior_relevant() const { return prior_relevant_; }
  double beta_max() const { return beta_max_; }

 private:
  std::map<std::string, RelevanceCell> cells_;
  double prior_relevant_ = 0.5;
  double beta_max_ = 1e3;
};

struct RelevanceBelief {
  double p_relevant = 0.5;
  /// set when both likelihoods vanished and the prior was returned
  bool fell_back_to_prior = false;
};

/// P(r=1 | beta_hat) via Bayes' rule with the cell's chi-squared densities.
/// Values at or above the model cap are evaluated at the cap.
inline RelevanceBelief relevance_posterior(const RationalityModel& m, double beta_hat, const std::string& feature) {
  if (!(beta_hat >= 0.0)) throw DomainError("beta_hat must be nonnegative");
  const RelevanceCell& c = m.cell(feature);
  const double b = std::min(beta_hat, m.beta_max());
  const double l1 = c.relevant.log_pdf(b) + std::log(m.prior_relevant());
  const double l0 = c.irrelevant.log_pdf(b) + std::log1p(-m.prior_relevant());
  RelevanceBelief out;
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (l1 == -inf && l0 == -inf) {
    out.p_relevant = m.prior_relevant();
    out.fell_back_to_prior = true;
    return out;
  }
  if (l1 == inf) {
    out.p_relevant = l0 == inf ? m.prior_relevant() : 1.0;
    return out;
  }
  if (l0 == inf) {
    out.p_relevant = 0.0;
    return out;
  }
  // logistic of the log-odds, stable in both tails
  const double d = l1 - l0;
  out.p_relevant = d >= 0.0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
  return out;
}

}  // namespace phri
