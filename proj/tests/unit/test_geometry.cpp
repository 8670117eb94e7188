// Kinematics, features, deformation and planning.

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <random>

#include "phri/arm_model.hpp"
#include "phri/features.hpp"
#include "phri/planner.hpp"
#include "phri/trajectory.hpp"

using namespace phri;

namespace {

constexpr double kPi = std::numbers::pi;

// Chained homogeneous transforms, one rotation then one translation per link.
Eigen::Matrix3d chain_oracle(const std::vector<double>& lengths, const Point2& base, const Vec& q) {
  Eigen::Matrix3d T = Eigen::Matrix3d::Identity();
  T(0, 2) = base.x();
  T(1, 2) = base.y();
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
    rot(0, 0) = std::cos(q[i]);
    rot(0, 1) = -std::sin(q[i]);
    rot(1, 0) = std::sin(q[i]);
    rot(1, 1) = std::cos(q[i]);
    Eigen::Matrix3d tr = Eigen::Matrix3d::Identity();
    tr(0, 2) = lengths[i];
    T = T * rot * tr;
  }
  return T;
}

Vec random_q(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-kPi, kPi);
  Vec q(n);
  for (int i = 0; i < n; ++i) q[i] = u(rng);
  return q;
}

FeatureSet test_features() { return FeatureSet::standard(-0.1, Point2(0.3, 0.7), 0.2, {"table", "orientation"}); }

Trajectory random_trajectory(std::mt19937_64& rng, int horizon, int dof) {
  Mat w(horizon + 1, dof);
  for (int t = 0; t <= horizon; ++t) w.row(t) = random_q(rng, dof).transpose();
  return {w, 0.1};
}

}  // namespace

TEST(ArmModel, StraightArmAlongX) {
  const ArmModel arm({1.0, 1.0}, Point2(0.5, -0.25));
  const ArmPose pose = forward_kinematics(arm, Vec::Zero(2));
  ASSERT_EQ(pose.points.size(), 3u);
  EXPECT_NEAR(pose.ee().x(), 2.5, 1e-15);
  EXPECT_NEAR(pose.ee().y(), -0.25, 1e-15);
  EXPECT_EQ(pose.ee_angle, 0.0);
}

TEST(ArmModel, QuarterTurnPointsUp) {
  const ArmModel arm({1.0, 1.0});
  const ArmPose pose = forward_kinematics(arm, Eigen::Vector2d(kPi / 2, 0.0));
  EXPECT_NEAR(pose.ee().x(), 0.0, 1e-15);
  EXPECT_NEAR(pose.ee().y(), 2.0, 1e-15);
  EXPECT_NEAR(pose.ee_angle, kPi / 2, 1e-15);
}

TEST(ArmModel, MatchesChainedTransforms) {
  std::mt19937_64 rng(11);
  const std::vector<double> lengths{0.5, 0.4, 0.3};
  const ArmModel arm(lengths, Point2(0.1, 0.2));
  for (int trial = 0; trial < 200; ++trial) {
    const Vec q = random_q(rng, 3);
    const ArmPose pose = forward_kinematics(arm, q);
    const Eigen::Matrix3d T = chain_oracle(lengths, arm.base(), q);
    EXPECT_NEAR(pose.ee().x(), T(0, 2), 1e-12);
    EXPECT_NEAR(pose.ee().y(), T(1, 2), 1e-12);
    EXPECT_NEAR(wrap_angle(pose.ee_angle), wrap_angle(std::atan2(T(1, 0), T(0, 0))), 1e-12);
    EXPECT_LE((pose.ee() - arm.base()).norm(), arm.reach() + 1e-12);
  }
}

TEST(ArmModel, PeriodicInEveryJoint) {
  std::mt19937_64 rng(12);
  const ArmModel arm({0.5, 0.4, 0.3});
  for (int trial = 0; trial < 50; ++trial) {
    const Vec q = random_q(rng, 3);
    for (int j = 0; j < 3; ++j) {
      Vec q2 = q;
      q2[j] += 2.0 * kPi;
      EXPECT_LT((forward_kinematics(arm, q).ee() - forward_kinematics(arm, q2).ee()).norm(), 1e-12);
    }
  }
}

TEST(ArmModel, JacobianAtZero) {
  const ArmModel arm({1.0, 1.0});
  const Mat j = ee_jacobian(arm, Vec::Zero(2));
  EXPECT_NEAR(j(1, 0), 2.0, 1e-15);
  EXPECT_NEAR(j(1, 1), 1.0, 1e-15);
  EXPECT_EQ(j(2, 0), 1.0);
  EXPECT_EQ(j(2, 1), 1.0);
}

TEST(ArmModel, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  const ArmModel arm({0.5, 0.4, 0.3});
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const Vec q = random_q(rng, 3);
    const Mat j = ee_jacobian(arm, q);
    for (int c = 0; c < 3; ++c) {
      Vec qp = q, qm = q;
      qp[c] += h;
      qm[c] -= h;
      const ArmPose a = forward_kinematics(arm, qp), b = forward_kinematics(arm, qm);
      EXPECT_NEAR(j(0, c), (a.ee().x() - b.ee().x()) / (2 * h), 1e-5);
      EXPECT_NEAR(j(1, c), (a.ee().y() - b.ee().y()) / (2 * h), 1e-5);
      EXPECT_NEAR(j(2, c), (a.ee_angle - b.ee_angle) / (2 * h), 1e-5);
    }
  }
}

TEST(ArmModel, LastColumnSeesOnlyTheLastLink) {
  const ArmModel arm({0.5, 0.4, 0.3});
  const Vec q(Eigen::Vector3d(0.3, -0.7, 1.1));
  const Mat j = ee_jacobian(arm, q);
  const double a = q.sum();
  EXPECT_NEAR(j(0, 2), -0.3 * std::sin(a), 1e-15);
  EXPECT_NEAR(j(1, 2), 0.3 * std::cos(a), 1e-15);
}

TEST(ArmModel, RejectsBadInput) {
  EXPECT_THROW(ArmModel(std::vector<double>{}), ConfigurationError);
  EXPECT_THROW(ArmModel({1.0, -1.0}), ConfigurationError);
  const ArmModel arm({1.0, 1.0});
  EXPECT_THROW(forward_kinematics(arm, Vec::Zero(3)), ConfigurationError);
  EXPECT_NEAR(wrap_angle(3 * kPi), kPi, 1e-12);
  EXPECT_NEAR(wrap_angle(-kPi), kPi, 1e-12);
}

TEST(Features, ZeroCases) {
  const ArmModel arm({1.0, 1.0});
  // EE at (2, 0): straight along x
  const FeatureSet at_table = FeatureSet::standard(0.0, Point2(2.0, 0.0), 0.0, {"table"});
  const Vec f = phi(at_table, arm, Vec::Zero(2));
  EXPECT_EQ(f[at_table.index_of("table")], 0.0);
  EXPECT_EQ(f[at_table.index_of("human")], 0.0);
  EXPECT_EQ(f[at_table.index_of("orientation")], 0.0);
}

TEST(Features, MatchKinematicRecomputation) {
  std::mt19937_64 rng(21);
  const ArmModel arm({0.5, 0.4, 0.3});
  const FeatureSet fs = test_features();
  for (int trial = 0; trial < 100; ++trial) {
    const Vec q = random_q(rng, 3);
    const Eigen::Matrix3d T = chain_oracle(arm.link_lengths(), arm.base(), q);
    const double ang = std::atan2(T(1, 0), T(0, 0));
    const Vec f = phi(fs, arm, q);
    EXPECT_NEAR(f[0], std::pow(T(1, 2) + 0.1, 2), 1e-12);
    EXPECT_NEAR(f[1], std::pow(T(0, 2) - 0.3, 2) + std::pow(T(1, 2) - 0.7, 2), 1e-12);
    // 2(1 - cos d) = 4 sin^2(d/2)
    EXPECT_NEAR(f[2], 4.0 * std::pow(std::sin((ang - 0.2) / 2.0), 2), 1e-12);
    EXPECT_GE(f.minCoeff(), 0.0);
  }
}

TEST(Features, TotalsSumWaypoints) {
  std::mt19937_64 rng(22);
  const ArmModel arm({0.5, 0.4, 0.3});
  const FeatureSet fs = test_features();
  const Trajectory a = random_trajectory(rng, 6, 3);
  const Trajectory b = random_trajectory(rng, 4, 3);
  Vec naive = Vec::Zero(fs.size());
  for (int t = 0; t < a.size(); ++t) naive += phi(fs, arm, a.waypoint(t));
  EXPECT_LT((total_features(fs, arm, a) - naive).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((total_features(fs, arm, a.concat(b)) - total_features(fs, arm, a) - total_features(fs, arm, b))
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
  const Trajectory single(a.waypoints().topRows(1), 0.1);
  EXPECT_EQ(total_features(fs, arm, single), phi(fs, arm, a.waypoint(0)));
}

TEST(Features, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(23);
  const ArmModel arm({0.5, 0.4, 0.3});
  const FeatureSet fs = test_features();
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const Trajectory xi = random_trajectory(rng, 10, 3);
    const Mat g = features_gradient(fs, arm, xi, false);
    const Mat g_fixed = features_gradient(fs, arm, xi, true);
    for (int t = 0; t < xi.size(); ++t) {
      for (int j = 0; j < 3; ++j) {
        Trajectory p = xi, m = xi;
        p.waypoints()(t, j) += h;
        m.waypoints()(t, j) -= h;
        const Vec fd = (total_features(fs, arm, p) - total_features(fs, arm, m)) / (2 * h);
        const int col = t * 3 + j;
        EXPECT_LT((g.col(col) - fd).cwiseAbs().maxCoeff(), 1e-5);
        if (t == 0 || t == xi.horizon()) {
          EXPECT_TRUE(g_fixed.col(col).isZero(0.0));
        }
      }
    }
  }
}

TEST(Features, TableGradientVanishesAtTableHeight) {
  const ArmModel arm({1.0, 1.0});
  const FeatureSet fs = FeatureSet::standard(0.0, Point2(1.0, 1.0), 0.0, {"table"});
  const Mat j = phi_jacobian(fs, arm, Vec::Zero(2));
  EXPECT_TRUE(j.row(fs.index_of("table")).isZero(1e-15));
}

TEST(Features, Validation) {
  EXPECT_THROW(FeatureSet::standard(0.0, Point2::Zero(), 0.0, {}), ConfigurationError);
  const FeatureSet fs = test_features();
  EXPECT_THROW(fs.index_of("elbow"), ConfigurationError);
  EXPECT_EQ(fs.known_indices(), (std::vector<int>{0, 2}));
  EXPECT_EQ(fs.known_part(Eigen::Vector3d(1, 2, 3)), Eigen::Vector2d(1, 3));
}

TEST(Deformation, NormMatrixIsSymmetricPositiveDefinite) {
  const DeformationOperator d(10, 3, 0.1);
  const Mat a = d.matrix();
  EXPECT_EQ((a - a.transpose()).norm(), 0.0);
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  EXPECT_THROW(DeformationOperator(1, 3, 0.1), ConfigurationError);
  EXPECT_THROW(DeformationOperator(10, 3, 0.0), ConfigurationError);
}

TEST(Deformation, ZeroPushAndLinearity) {
  std::mt19937_64 rng(31);
  const DeformationOperator d(10, 3, 0.1);
  const Trajectory xi = random_trajectory(rng, 10, 3);
  EXPECT_EQ(d.deform(xi, {Vec::Zero(3), 4}).waypoints(), xi.waypoints());
  const Vec u = random_q(rng, 3);
  const Mat one = d.deform(xi, {u, 4}).waypoints() - xi.waypoints();
  const Mat two = d.deform(xi, {2.0 * u, 4}).waypoints() - xi.waypoints();
  EXPECT_LT((two - 2.0 * one).cwiseAbs().maxCoeff(), 1e-12);
  const Vec v = random_q(rng, 3);
  const Mat sum = d.deform(d.deform(xi, {u, 4}), {v, 7}).waypoints() - xi.waypoints();
  const Mat parts = one + (d.deform(xi, {v, 7}).waypoints() - xi.waypoints());
  EXPECT_LT((sum - parts).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Deformation, EndpointsNeverMove) {
  std::mt19937_64 rng(32);
  const DeformationOperator d(10, 3, 0.1);
  const Trajectory xi = random_trajectory(rng, 10, 3);
  for (int idx = 1; idx <= 9; ++idx) {
    const Trajectory out = d.deform(xi, {10.0 * random_q(rng, 3), idx});
    EXPECT_EQ(out.waypoint(0), xi.waypoint(0));
    EXPECT_EQ(out.waypoint(10), xi.waypoint(10));
  }
  EXPECT_THROW(d.deform(xi, {Vec::Ones(3), 0}), CorrectionPlacementError);
  EXPECT_THROW(d.deform(xi, {Vec::Ones(3), 10}), CorrectionPlacementError);
}

TEST(Deformation, MatchesDenseInverseColumn) {
  const int T = 10, n = 2;
  const double mu = 0.1;
  const DeformationOperator d(T, n, mu);
  // independent construction: clamped second differences over all waypoints
  Mat k = Mat::Zero((T + 1) * n, (T + 1) * n);
  for (int j = 0; j < n; ++j) {
    k(0 * n + j, 0 * n + j) = 1.0;
    k(T * n + j, T * n + j) = 1.0;
    for (int t = 1; t < T; ++t) {
      k(t * n + j, t * n + j) = -2.0;
      if (t - 1 >= 1) k(t * n + j, (t - 1) * n + j) = 1.0;
      if (t + 1 <= T - 1) k(t * n + j, (t + 1) * n + j) = 1.0;
    }
  }
  const Mat a = k.transpose() * k;
  EXPECT_LT((a - d.matrix()).cwiseAbs().maxCoeff(), 1e-12);
  const Mat inv = a.inverse();
  const Trajectory xi(Mat::Zero(T + 1, n), 0.1);
  for (int j = 0; j < n; ++j) {
    Vec u = Vec::Zero(n);
    u[j] = 1.0;
    const Trajectory out = d.deform(xi, {u, 5});
    for (int t = 0; t <= T; ++t)
      for (int c = 0; c < n; ++c) EXPECT_NEAR(out.waypoints()(t, c), mu * inv(t * n + c, 5 * n + j), 1e-9);
  }
}

TEST(Deformation, DisplacementRisesThenFalls) {
  const DeformationOperator d(10, 3, 0.1);
  const Trajectory xi(Mat::Zero(11, 3), 0.1);
  for (int idx = 1; idx <= 9; ++idx) {
    const Mat w = d.deform(xi, {Vec::Ones(3), idx}).waypoints();
    int t = 0;
    while (t < 10 && w(t + 1, 0) >= w(t, 0)) ++t;
    while (t < 10 && w(t + 1, 0) <= w(t, 0)) ++t;
    EXPECT_EQ(t, 10) << "push at " << idx;
    EXPECT_GT(w.col(0).segment(1, 9).minCoeff(), 0.0);
  }
}

TEST(Planner, ZeroWeightsGiveTheStraightLine) {
  const ArmModel arm({0.5, 0.4, 0.3});
  const FeatureSet fs = test_features();
  const Vec start(Eigen::Vector3d(2.3, -1.3, -0.9)), goal(Eigen::Vector3d(1.0, -1.5, 0.5));
  const PlanResult p = plan(fs, arm, Vec::Zero(2), start, goal, 10, 0.1);
  const Trajectory line = Trajectory::straight_line(start, goal, 10, 0.1);
  EXPECT_LT((p.trajectory.waypoints() - line.waypoints()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Planner, DescendsAndKeepsEndpoints) {
  std::mt19937_64 rng(41);
  const ArmModel arm({0.5, 0.4, 0.3});
  const FeatureSet fs = test_features();
  std::uniform_real_distribution<double> w(0.0, 3.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec start = random_q(rng, 3), goal = random_q(rng, 3);
    const Vec theta(Eigen::Vector2d(w(rng), w(rng)));
    const PlanResult p = plan(fs, arm, theta, start, goal, 10, 0.1);
    const Trajectory line = Trajectory::straight_line(start, goal, 10, 0.1);
    EXPECT_LE(p.cost, planner_cost(fs, arm, theta, line) + 1e-9);
    EXPECT_EQ(p.trajectory.waypoint(0), start);
    EXPECT_EQ(p.trajectory.waypoint(10), goal);
    EXPECT_TRUE(p.converged);
    EXPECT_LE(planner_gradient(fs, arm, theta, p.trajectory).norm(), 1e-4);
  }
}

TEST(Planner, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(42);
  const ArmModel arm({0.5, 0.4, 0.3});
  const FeatureSet fs = test_features();
  const Vec theta(Eigen::Vector2d(0.7, 1.3));
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const Trajectory xi = random_trajectory(rng, 10, 3);
    const Vec g = planner_gradient(fs, arm, theta, xi);
    for (int t = 1; t < 10; ++t) {
      for (int j = 0; j < 3; ++j) {
        Trajectory p = xi, m = xi;
        p.waypoints()(t, j) += h;
        m.waypoints()(t, j) -= h;
        const double fd = (planner_cost(fs, arm, theta, p) - planner_cost(fs, arm, theta, m)) / (2 * h);
        EXPECT_NEAR(g[t * 3 + j], fd, 1e-5);
      }
    }
  }
}

TEST(Planner, OneJointTableToyMatchesGridSearch) {
  // one link, T = 2: a single free waypoint q1
  const ArmModel arm({1.0});
  const FeatureSet fs = FeatureSet::standard(-0.5, Point2(5.0, 5.0), 0.0, {"table"});
  const Vec start = Vec::Constant(1, 0.2), goal = Vec::Constant(1, 1.2);
  const Vec theta = Vec::Constant(1, 2.0);
  const PlanResult p = plan(fs, arm, theta, start, goal, 2, 0.1);
  auto cost = [&](double q1) {
    Mat w(3, 1);
    w << 0.2, q1, 1.2;
    return planner_cost(fs, arm, theta, Trajectory(w, 0.1));
  };
  const int n = 200001;
  double best = 0.0, best_cost = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const double q1 = -kPi + 2.0 * kPi * i / (n - 1);
    const double c = cost(q1);
    if (c < best_cost) {
      best_cost = c;
      best = q1;
    }
  }
  EXPECT_NEAR(p.trajectory.waypoints()(1, 0), best, 2.0 * kPi / (n - 1));
  const double seed_height = std::sin(0.7), planned_height = std::sin(p.trajectory.waypoints()(1, 0));
  EXPECT_LE(std::abs(planned_height + 0.5), std::abs(seed_height + 0.5));
}

TEST(Planner, ReplanKeepsTheExecutedPrefix) {
  const ArmModel arm({0.5, 0.4, 0.3});
  const FeatureSet fs = test_features();
  const Vec start(Eigen::Vector3d(2.3, -1.3, -0.9)), goal(Eigen::Vector3d(1.0, -1.5, 0.5));
  const PlanResult p = plan(fs, arm, Eigen::Vector2d(0.5, 0.5), start, goal, 10, 0.1);
  const DeformationOperator d(10, 3, 0.01);
  const Trajectory xi_h = d.deform(p.trajectory, {Eigen::Vector3d(0.5, -0.3, 0.2), 4});
  const PlanResult r = replan_after_update(fs, arm, Eigen::Vector2d(1.0, 0.5), xi_h, 4);
  EXPECT_EQ(r.trajectory.waypoints().topRows(5), xi_h.waypoints().topRows(5));
  EXPECT_EQ(r.trajectory.waypoint(10), goal);
  EXPECT_LE(r.cost, planner_cost(fs, arm, Eigen::Vector2d(1.0, 0.5), xi_h) + 1e-9);
}
