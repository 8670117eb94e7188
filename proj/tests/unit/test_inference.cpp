// Rationality estimation, relevance posterior, MAP update and the simulated human.

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "phri/harness/config.hpp"
#include "phri/human_sim.hpp"
#include "phri/learner.hpp"
#include "phri/planner.hpp"
#include "phri/rationality.hpp"
#include "phri/relevance.hpp"

using namespace phri;

namespace {

constexpr double kPi = std::numbers::pi;

struct Fixture {
  harness::ExperimentConfig cfg = harness::load_config(PHRI_SOURCE_DIR "/configs/default.json");
  const Scene& sc = cfg.scene;
  DeformationOperator deformer{sc.horizon, sc.model.n_links(), sc.mu};
  Trajectory xi = plan(sc.features, sc.model, cfg.calibration.theta, sc.start, sc.goal, sc.horizon, sc.dt).trajectory;
};

// c(u) = A u, a linear stand-in for the feature map
struct LinearMap {
  Mat a;
  int dof() const { return static_cast<int>(a.cols()); }
  int n_constraints() const { return static_cast<int>(a.rows()); }
  Vec operator()(const Vec& u) const { return a * u; }
  Mat jacobian(const Vec&) const { return a; }
};

double gamma_log_pdf(double x, double shape, double theta) {
  return (shape - 1.0) * std::log(x) - x / theta - std::lgamma(shape) - shape * std::log(theta);
}

}  // namespace

TEST(OptimalCorrection, TargetAtRestGivesZeroTorque) {
  Fixture f;
  const CorrectionFeatureMap map(f.sc.features, f.sc.model, f.deformer, f.xi, 5, {0});
  const auto r = optimal_correction(map, map(Vec::Zero(3)), Vec::Zero(3));
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.torque.norm(), 1e-12);
}

TEST(OptimalCorrection, RoundTripReachesTargetWithNoMoreEffort) {
  Fixture f;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec u(Eigen::Vector3d(n(rng), n(rng), n(rng)));
    for (const std::vector<int>& subset : {std::vector<int>{0}, std::vector<int>{2}, std::vector<int>{0, 2}}) {
      const CorrectionFeatureMap map(f.sc.features, f.sc.model, f.deformer, f.xi, 2 + trial % 7, subset);
      const Vec target = map(u);
      const auto r = optimal_correction(map, target, u);
      EXPECT_TRUE(r.converged);
      EXPECT_LE((map(r.torque) - target).cwiseAbs().maxCoeff(), 1e-5);
      EXPECT_LE(r.effort, u.squaredNorm() + 1e-9);
    }
  }
}

TEST(OptimalCorrection, OneJointMatchesGridSearch) {
  const ArmModel arm({1.0});
  const FeatureSet fs = FeatureSet::standard(-0.3, Point2(2.0, 2.0), 0.0, {"table"});
  const DeformationOperator d(4, 1, 0.5);
  const Trajectory xi = Trajectory::straight_line(Vec::Constant(1, 0.1), Vec::Constant(1, 0.9), 4, 0.1);
  const CorrectionFeatureMap map(fs, arm, d, xi, 2, {0});
  for (double u0 : {-2.0, -0.7, 0.4, 1.5}) {
    const Vec target = map(Vec::Constant(1, u0));
    const auto r = optimal_correction(map, target, Vec::Constant(1, u0));
    // smallest |u| on a fine grid whose constraint changes sign
    const int n = 400001;
    double best = std::abs(u0);
    double prev_u = -std::abs(u0);
    double prev_c = map(Vec::Constant(1, prev_u))[0] - target[0];
    for (int i = 1; i < n; ++i) {
      const double u = -std::abs(u0) + 2.0 * std::abs(u0) * i / (n - 1);
      const double c = map(Vec::Constant(1, u))[0] - target[0];
      if (c == 0.0 || (c > 0.0) != (prev_c > 0.0)) best = std::min(best, std::min(std::abs(u), std::abs(prev_u)));
      prev_u = u;
      prev_c = c;
    }
    EXPECT_NEAR(std::abs(r.torque[0]), best, 1e-4) << "u0 = " << u0;
  }
}

TEST(Laplace, ExactForQuadraticCosts) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    LinearMap map{Mat(2, 3)};
    for (int i = 0; i < 6; ++i) map.a.data()[i] = n(rng);
    const Vec b(Eigen::Vector2d(n(rng), n(rng)));
    const double rho = 3.0, beta = 0.5 + trial;
    // |u|^2 + rho |Au - b|^2 = u'Mu - 2 q'u + c
    const Mat m = Mat::Identity(3, 3) + rho * map.a.transpose() * map.a;
    const Vec q = rho * map.a.transpose() * b;
    const double c = rho * b.squaredNorm();
    const Vec umin = m.ldlt().solve(q);
    const double cmin = c - q.dot(umin);
    const double exact = -beta * cmin + 1.5 * std::log(kPi / beta) - 0.5 * std::log(m.determinant());

    const Mat h = penalized_hessian(map, b, umin, rho);
    EXPECT_LT((h - 2.0 * m).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(laplace_log_partition(beta, cmin, spd_logdet(2.0 * m), 3), exact, 1e-10);
  }
}

TEST(Laplace, LikelihoodPeaksAtClosedForm) {
  const double logdet = 0.7;
  for (auto [obs, opt, k] : {std::tuple{2.0, 1.0, 2}, std::tuple{5.0, 4.9, 3}, std::tuple{1.3, 0.2, 1}}) {
    const double closed = estimate_beta(obs, opt, k).beta_hat;
    double best = 0.0, best_ll = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < 20001; ++i) {
      const double beta = std::pow(10.0, -3.0 + 6.0 * i / 20000.0);
      const double ll = laplace_log_likelihood(beta, obs, opt, logdet, k);
      if (ll > best_ll) {
        best_ll = ll;
        best = beta;
      }
    }
    EXPECT_NEAR(best / closed, 1.0, 1e-3);
  }
}

TEST(EstimateBeta, ClosedFormAndEdges) {
  EXPECT_DOUBLE_EQ(estimate_beta(2.0, 1.0, 2).beta_hat, 1.0);
  EXPECT_DOUBLE_EQ(estimate_beta(3.0, 2.5, 3).beta_hat, 3.0);
  const BetaEstimate capped = estimate_beta(1.0, 1.0, 3);
  EXPECT_EQ(capped.beta_hat, 1e3);
  EXPECT_TRUE(capped.capped);
  EXPECT_THROW(estimate_beta(1.0, 2.0, 3), SolverError);
  EXPECT_THROW(estimate_beta(1.0, 0.5, 0), DomainError);
}

TEST(ScaledChiSquared, DensityIsAScaledGamma) {
  const ScaledChiSquared d{3.0, 0.7};
  for (double x : {0.01, 0.5, 2.0, 9.0}) EXPECT_NEAR(d.log_pdf(x), gamma_log_pdf(x, 1.5, 1.4), 1e-12);
  EXPECT_NEAR(d.mean(), 2.1, 1e-12);
  EXPECT_NEAR(d.variance(), 2.0 * 3.0 * 0.49, 1e-12);
}

TEST(ScaledChiSquared, FitRecoversParameters) {
  std::mt19937_64 rng(7);
  std::gamma_distribution<double> g(1.5, 2.0 * 4.0);  // df 3, scale 4
  std::vector<double> xs(10000);
  for (double& x : xs) x = g(rng);
  const ChiSquaredFit fit = fit_scaled_chi_squared(xs);
  EXPECT_NEAR(fit.dist.df, 3.0, 0.3);
  EXPECT_NEAR(fit.dist.scale, 4.0, 0.4);
  EXPECT_GE(fit.log_likelihood, fit.seed_log_likelihood);

  std::vector<double> scaled(xs);
  for (double& x : scaled) x *= 10.0;
  const ChiSquaredFit fit10 = fit_scaled_chi_squared(scaled);
  EXPECT_NEAR(fit10.dist.df, fit.dist.df, 1e-8);
  EXPECT_NEAR(fit10.dist.scale, 10.0 * fit.dist.scale, 1e-7);
}

TEST(ScaledChiSquared, FitRejectsBadSamples) {
  EXPECT_THROW(fit_scaled_chi_squared(std::vector<double>(50, 2.0)), FitError);
  EXPECT_THROW(fit_scaled_chi_squared(std::vector<double>{1.0, 2.0, 3.0}), FitError);
  std::vector<double> with_zero(40, 1.0);
  with_zero[3] = 0.0;
  with_zero[4] = 3.0;
  EXPECT_THROW(fit_scaled_chi_squared(with_zero), FitError);
}

TEST(Relevance, PosteriorFollowsBayesRule) {
  const RelevanceCell same{{2.0, 1.0}, {2.0, 1.0}};
  const RationalityModel flat({{"table", same}}, 0.3, 100.0);
  EXPECT_NEAR(relevance_posterior(flat, 4.0, "table").p_relevant, 0.3, 1e-15);

  const RelevanceCell cell{{2.0, 5.0}, {4.0, 30.0}};
  const RationalityModel m({{"table", cell}}, 0.4, 1000.0);
  for (double b : {1.0, 10.0, 80.0, 300.0}) {
    const double l1 = std::exp(gamma_log_pdf(b, 2.0, 60.0)) * 0.4;
    const double l0 = std::exp(gamma_log_pdf(b, 1.0, 10.0)) * 0.6;
    EXPECT_NEAR(relevance_posterior(m, b, "table").p_relevant, l1 / (l1 + l0), 1e-12);
  }
  EXPECT_LT(relevance_posterior(m, 0.01, "table").p_relevant, 0.01);
  EXPECT_GT(relevance_posterior(m, 999.0, "table").p_relevant, 0.99);
  EXPECT_EQ(relevance_posterior(m, 5000.0, "table").p_relevant, relevance_posterior(m, 1000.0, "table").p_relevant);
  EXPECT_THROW(relevance_posterior(m, 1.0, "human"), ConfigurationError);
}

TEST(Learner, LikelihoodValues) {
  const UpdateContext at_rest{Vec::Zero(2), Vec::Constant(2, 0.5), kPi};
  EXPECT_NEAR(irrelevant_likelihood(at_rest), 1.0, 1e-15);
  const UpdateContext ctx{Eigen::Vector2d(std::log(2.0), 0.0), Vec::Constant(2, 0.5), 1.0};
  EXPECT_NEAR(relevant_likelihood(Eigen::Vector2d(-1.0, 5.0), ctx), 2.0, 1e-15);
}

TEST(Learner, CertainGatesReduceToKnownRules) {
  const Vec theta(Eigen::Vector2d(1.0, -0.5));
  const Vec dphi(Eigen::Vector2d(0.3, -0.2));
  const UpdateResult full = map_update(theta, 0.4, {dphi, Vec::Ones(2), 2.0});
  EXPECT_LT((full.theta - fixed_update(theta, 0.4, dphi)).norm(), 1e-12);
  const UpdateResult none = map_update(theta, 0.4, {dphi, Vec::Zero(2), 2.0});
  EXPECT_EQ(none.theta, theta);
  const UpdateResult mixed = map_update(theta, 0.4, {dphi, Eigen::Vector2d(1.0, 0.0), 2.0});
  EXPECT_NEAR(mixed.theta[0], 1.0 - 0.4 * 0.3, 1e-12);
  EXPECT_EQ(mixed.theta[1], -0.5);
  EXPECT_EQ(fixed_update(theta, 0.0, dphi), theta);
}

TEST(Learner, ScalarUpdateMatchesBisection) {
  for (double lambda : {0.1, 1.0, 10.0}) {
    for (double d : {-1.5, -0.2, 0.3, 2.0}) {
      const double theta_hat = 0.8, alpha = 0.7, p = 0.5;
      auto gate = [&](double th) {
        const double l1 = std::exp(-th * d);
        const double l0 = std::sqrt(lambda / kPi) * std::exp(-lambda * d * d);
        return p * l1 / (p * l1 + (1 - p) * l0);
      };
      // th - theta_hat + alpha g(th) d is increasing in th
      double lo = theta_hat - 10.0, hi = theta_hat + 10.0;
      for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (mid - theta_hat + alpha * gate(mid) * d > 0.0 ? hi : lo) = mid;
      }
      const UpdateResult r = map_update(Vec::Constant(1, theta_hat), alpha, {Vec::Constant(1, d), Vec::Constant(1, p), lambda});
      EXPECT_TRUE(r.converged);
      EXPECT_NEAR(r.theta[0], 0.5 * (lo + hi), 1e-9) << "lambda " << lambda << " d " << d;
      EXPECT_LE(r.residual, 1e-10);
    }
  }
}

TEST(Learner, StepGrowsWithRelevanceAndPointsAgainstDeltaPhi) {
  const Vec theta(Eigen::Vector3d(0.5, 1.0, -0.3));
  const Vec dphi(Eigen::Vector3d(0.4, -0.6, 0.2));
  double prev = -1.0;
  for (double p : {0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
    const UpdateResult r = map_update(theta, 0.5, {dphi, Vec::Constant(3, p), 1.0});
    const Vec step = r.theta - theta;
    EXPECT_GE(step.norm(), prev - 1e-15);
    EXPECT_LE(step.dot(dphi), 1e-15);
    prev = step.norm();
  }
}

TEST(Learner, RejectsBadContext) {
  EXPECT_THROW(map_update(Vec::Zero(2), 0.1, {Vec::Zero(3), Vec::Zero(3), 1.0}), ConfigurationError);
  EXPECT_THROW(map_update(Vec::Zero(2), 0.1, {Vec::Zero(2), Vec::Constant(2, 1.5), 1.0}), DomainError);
  EXPECT_THROW(map_update(Vec::Zero(2), -0.1, {Vec::Zero(2), Vec::Zero(2), 1.0}), DomainError);
}

TEST(SimHuman, PushesAreDeterministicPerSeedAndStream) {
  Fixture f;
  const SimHuman h = make_relevant_human(f.sc.features, "table", f.cfg.human.factory, 99);
  const Correction a = sample_correction(h, f.sc.features, f.sc.model, f.deformer, f.xi, 4, 0);
  const Correction b = sample_correction(h, f.sc.features, f.sc.model, f.deformer, f.xi, 4, 0);
  const Correction c = sample_correction(h, f.sc.features, f.sc.model, f.deformer, f.xi, 4, 1);
  EXPECT_EQ(a.torque, b.torque);
  EXPECT_NE(a.torque, c.torque);
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 1));
}

TEST(SimHuman, IndifferentHumanDoesNotPush) {
  Fixture f;
  SimHuman h;
  h.theta_true = Vec::Zero(3);
  const Correction u = sample_correction(h, f.sc.features, f.sc.model, f.deformer, f.xi, 5);
  EXPECT_LT(u.torque.norm(), 1e-12);
}

TEST(SimHuman, OptimalHumanIsMaximallyRational) {
  Fixture f;
  HumanFactory factory = f.cfg.human.factory;
  factory.beta_true = std::numeric_limits<double>::infinity();
  for (const std::string name : {"table", "orientation"}) {
    const SimHuman h = make_relevant_human(f.sc.features, name, factory, 3);
    const Correction u = sample_correction(h, f.sc.features, f.sc.model, f.deformer, f.xi, 5);
    const BetaEstimate e =
        estimate_correction_beta(f.sc.features, f.sc.model, f.deformer, f.xi, u, {f.sc.features.index_of(name)}, f.sc.rationality);
    EXPECT_EQ(e.beta_hat, f.sc.rationality.beta.beta_max) << name;
  }
}

TEST(SimHuman, OneJointChainMatchesQuadrature) {
  const ArmModel arm({1.0});
  const FeatureSet fs = FeatureSet::standard(0.2, Point2(2.0, 2.0), 0.0, {"table"});
  const DeformationOperator d(4, 1, 0.5);
  const Trajectory xi = Trajectory::straight_line(Vec::Constant(1, -0.4), Vec::Constant(1, 0.6), 4, 0.1);
  SimHuman h;
  h.theta_true = Vec::Zero(3);
  h.theta_true[0] = 3.0;
  const HumanCost cost(h, fs, arm, d, xi, 2);
  const double beta = 4.0;
  double z = 0.0, m1 = 0.0, m2 = 0.0;
  const double c0 = cost(Vec::Zero(1));
  for (int i = 0; i <= 200000; ++i) {
    const double u = -6.0 + 12.0 * i / 200000.0;
    const double w = std::exp(-beta * (cost(Vec::Constant(1, u)) - c0));
    z += w;
    m1 += w * u;
    m2 += w * u * u;
  }
  const double mean = m1 / z, sd = std::sqrt(m2 / z - mean * mean);
  std::mt19937_64 rng(8);
  MetropolisOptions mo;
  mo.steps = 400000;
  mo.burn_in = 1000;
  const auto chain = metropolis_chain(cost, beta, 1.0, Vec::Zero(1), rng, mo);
  double s = 0.0, s2 = 0.0;
  for (const Vec& u : chain) {
    s += u[0];
    s2 += u[0] * u[0];
  }
  const double cm = s / chain.size(), csd = std::sqrt(s2 / chain.size() - cm * cm);
  EXPECT_NEAR(cm, mean, 0.03 * sd + 0.01);
  EXPECT_NEAR(csd, sd, 0.05 * sd);
}

TEST(SimHuman, NoisierHumansLeaveLargerEffortGaps) {
  Fixture f;
  const int table = f.sc.features.index_of("table");
  auto mean_gap = [&](double beta) {
    HumanFactory factory = f.cfg.human.factory;
    factory.beta_true = beta;
    double gap = 0.0;
    for (int s = 0; s < 20; ++s) {
      const SimHuman h = make_relevant_human(f.sc.features, "table", factory, 100 + s);
      const Correction u = sample_correction(h, f.sc.features, f.sc.model, f.deformer, f.xi, 5, 0, f.cfg.human.metropolis);
      const BetaEstimate e = estimate_correction_beta(f.sc.features, f.sc.model, f.deformer, f.xi, u, {table});
      gap += e.effort_observed - e.effort_optimal;
    }
    return gap / 20.0;
  };
  EXPECT_LT(mean_gap(1e4), mean_gap(10.0));
}

TEST(SimHuman, RelevantPushIsMostEfficientForItsTarget) {
  Fixture f;
  const auto known = f.sc.features.known_indices();
  int hits = 0, total = 0;
  for (std::size_t ti = 0; ti < known.size(); ++ti) {
    const std::string name = f.sc.features.spec(known[ti]).name;
    for (int s = 0; s < 25; ++s) {
      const SimHuman h = make_relevant_human(f.sc.features, name, f.cfg.human.factory, 500 + s);
      const Correction u = sample_correction(h, f.sc.features, f.sc.model, f.deformer, f.xi, 3 + s % 5, 0, f.cfg.human.metropolis);
      const auto b = estimate_betas_per_feature(f.sc.features, f.sc.model, f.deformer, f.xi, u, known, f.sc.rationality);
      bool top = true;
      for (std::size_t j = 0; j < known.size(); ++j)
        if (j != ti && b[j].beta_hat > b[ti].beta_hat) top = false;
      hits += top;
      ++total;
    }
  }
  EXPECT_GE(hits, 0.8 * total);
}

TEST(SimHuman, HiddenFeaturePushStillMovesKnownFeatures) {
  Fixture f;
  const auto known = f.sc.features.known_indices();
  int moved = 0;
  for (int s = 0; s < 25; ++s) {
    const SimHuman h = make_irrelevant_human(f.sc.features, "human", f.cfg.human.factory, 900 + s);
    const Correction u = sample_correction(h, f.sc.features, f.sc.model, f.deformer, f.xi, 3 + s % 5, 0, f.cfg.human.metropolis);
    const Trajectory xi_h = f.deformer.deform(f.xi, u);
    const Vec dphi = f.sc.features.known_part(total_features(f.sc.features, f.sc.model, xi_h) -
                                              total_features(f.sc.features, f.sc.model, f.xi));
    moved += dphi.norm() > 1e-6;
  }
  EXPECT_GE(moved, 20);
  EXPECT_THROW(make_irrelevant_human(f.sc.features, "table", f.cfg.human.factory, 1), ConfigurationError);
}

TEST(Rationality, JointConstraintCostsAtLeastEachSingleOne) {
  Fixture f;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto known = f.sc.features.known_indices();
  for (int trial = 0; trial < 10; ++trial) {
    const Correction u{Eigen::Vector3d(n(rng), n(rng), n(rng)), 2 + trial % 7};
    const BetaEstimate joint = estimate_correction_beta(f.sc.features, f.sc.model, f.deformer, f.xi, u, known);
    for (const auto& single : estimate_betas_per_feature(f.sc.features, f.sc.model, f.deformer, f.xi, u, known)) {
      EXPECT_GE(joint.effort_optimal, single.effort_optimal - 1e-6);
    }
  }
}
