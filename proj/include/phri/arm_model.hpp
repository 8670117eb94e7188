#pragma once

// Planar serial-chain kinematics. Joint i rotates link i relative to link i-1;
// all angles in radians, lengths in meters.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "phri/errors.hpp"

namespace phri {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Point2 = Eigen::Vector2d;

/// Joint angles of an n-link planar arm.
using JointConfig = Eigen::VectorXd;

/// Wraps a single angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a + std::numbers::pi, two_pi);
  if (w <= 0.0) w += two_pi;
  return w - std::numbers::pi;
}

inline JointConfig normalize_angles(const JointConfig& q) {
  return q.unaryExpr([](double a) { return wrap_angle(a); });
}

class ArmModel {
 public:
  ArmModel() = default;

  ArmModel(std::vector<double> link_lengths, Point2 base = Point2::Zero())
      : link_lengths_(std::move(link_lengths)), base_(std::move(base)) {
    if (link_lengths_.empty()) {
      throw ConfigurationError("arm needs at least one link");
    }
    for (double l : link_lengths_) {
      if (!(l > 0.0) || !std::isfinite(l)) {
        throw ConfigurationError("link lengths must be positive and finite");
      }
    }
    if (!base_.allFinite()) throw ConfigurationError("arm base must be finite");
  }

  int n_links() const { return static_cast<int>(link_lengths_.size()); }
  const std::vector<double>& link_lengths() const { return link_lengths_; }
  const Point2& base() const { return base_; }

  double reach() const {
    double r = 0.0;
    for (double l : link_lengths_) r += l;
    return r;
  }

  void check(const JointConfig& q) const {
    if (q.size() != n_links()) {
      throw ConfigurationError("joint config has " + std::to_string(q.size()) +
                               " entries, arm has " + std::to_string(n_links()) + " links");
    }
    if (!q.allFinite()) throw ConfigurationError("joint config is not finite");
  }

 private:
  std::vector<double> link_lengths_;
  Point2 base_ = Point2::Zero();
};

struct ArmPose {
  /// base, each joint after the first, then the end effector (n_links + 1 points)
  std::vector<Point2> points;
  /// absolute end-effector heading, the sum of joint angles
  double ee_angle = 0.0;

  const Point2& ee() const { return points.back(); }
};

inline ArmPose forward_kinematics(const ArmModel& model, const JointConfig& q) {
  model.check(q);
  ArmPose pose;
  pose.points.reserve(model.n_links() + 1);
  Point2 p = model.base();
  pose.points.push_back(p);
  double angle = 0.0;
  for (int i = 0; i < model.n_links(); ++i) {
    angle += q[i];
    p += model.link_lengths()[i] * Point2(std::cos(angle), std::sin(angle));
    pose.points.push_back(p);
  }
  pose.ee_angle = angle;
  return pose;
}

/// Rows: d(ee_x), d(ee_y), d(ee_angle) with respect to each joint.
inline Mat ee_jacobian(const ArmModel& model, const JointConfig& q) {
  model.check(q);
  const int n = model.n_links();
  Mat jac(3, n);
  // Accumulate link contributions from the tip backwards: column j sees every
  // link at or beyond joint j.
  std::vector<double> cum(n);
  double angle = 0.0;
  for (int i = 0; i < n; ++i) {
    angle += q[i];
    cum[i] = angle;
  }
  double sx = 0.0, sy = 0.0;
  for (int j = n - 1; j >= 0; --j) {
    const double l = model.link_lengths()[j];
    sx += l * std::cos(cum[j]);
    sy += l * std::sin(cum[j]);
    jac(0, j) = -sy;
    jac(1, j) = sx;
    jac(2, j) = 1.0;
  }
  return jac;
}

}  // namespace phri
