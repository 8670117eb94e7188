#pragma once

// Waypoint trajectories and the acceleration-norm deformation that turns a
// single-waypoint torque push into a smooth trajectory displacement.

#include <Eigen/Dense>

#include <string>
#include <utility>

#include "phri/arm_model.hpp"
#include "phri/errors.hpp"

namespace phri {

/// T+1 waypoints stored row-wise, one joint configuration per row.
class Trajectory {
 public:
  Trajectory() = default;

  Trajectory(Mat waypoints, double dt) : waypoints_(std::move(waypoints)), dt_(dt) {
    if (waypoints_.rows() < 1 || waypoints_.cols() < 1) {
      throw ConfigurationError("trajectory needs at least one waypoint");
    }
    if (!(dt_ > 0.0)) throw ConfigurationError("trajectory dt must be positive");
  }

  /// Straight-line joint-space interpolation with `horizon` steps.
  static Trajectory straight_line(const JointConfig& start, const JointConfig& goal,
                                  int horizon, double dt) {
    if (start.size() != goal.size()) {
      throw ConfigurationError("start and goal dimensions differ");
    }
    if (horizon < 1) throw ConfigurationError("horizon must be at least 1");
    Mat w(horizon + 1, start.size());
    for (int t = 0; t <= horizon; ++t) {
      const double s = static_cast<double>(t) / horizon;
      w.row(t) = ((1.0 - s) * start + s * goal).transpose();
    }
    return {std::move(w), dt};
  }

  /// Index of the last waypoint.
  int horizon() const { return static_cast<int>(waypoints_.rows()) - 1; }
  int size() const { return static_cast<int>(waypoints_.rows()); }
  int dof() const { return static_cast<int>(waypoints_.cols()); }
  double dt() const { return dt_; }

  JointConfig waypoint(int t) const { return waypoints_.row(t).transpose(); }
  const Mat& waypoints() const { return waypoints_; }
  Mat& waypoints() { return waypoints_; }

  /// Waypoints stacked time-major: index t * dof + j.
  Vec stacked() const {
    Vec v(waypoints_.size());
    for (int t = 0; t < size(); ++t) v.segment(t * dof(), dof()) = waypoints_.row(t).transpose();
    return v;
  }

  /// Concatenation; waypoints of `other` follow those of this trajectory.
  Trajectory concat(const Trajectory& other) const {
    if (other.dof() != dof()) throw ConfigurationError("concatenating trajectories of different dof");
    Mat w(size() + other.size(), dof());
    w << waypoints_, other.waypoints_;
    return {std::move(w), dt_};
  }

 private:
  Mat waypoints_;
  double dt_ = 0.1;
};

/// Joint torque pushed at one interior waypoint.
struct Correction {
  Vec torque;
  int waypoint_index = 1;

  double effort() const { return torque.squaredNorm(); }
};

/// xi_H = xi_R + mu * A^{-1} U_H, where A = K^T K is the squared
/// second-difference norm over the interior waypoints and identity on the two
/// clamped endpoints. A is block diagonal across joints, so only the
/// (T+1)x(T+1) single-joint block is factored.
class DeformationOperator {
 public:
  DeformationOperator(int horizon, int dof, double mu) : horizon_(horizon), dof_(dof), mu_(mu) {
    if (horizon < 2) {
      throw ConfigurationError("deformation needs a horizon of at least 2, got " +
                               std::to_string(horizon));
    }
    if (dof < 1) throw ConfigurationError("deformation needs at least one joint");
    if (!(mu > 0.0)) throw ConfigurationError("deformation gain mu must be positive");

    const int m = horizon - 1;  // interior waypoints
    Mat k = Mat::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      k(i, i) = -2.0;
      if (i > 0) k(i, i - 1) = 1.0;
      if (i + 1 < m) k(i, i + 1) = 1.0;
    }
    const Mat interior = k.transpose() * k;
    block_ = Mat::Identity(horizon + 1, horizon + 1);
    block_.block(1, 1, m, m) = interior;
    Eigen::LLT<Mat> llt(interior);
    if (llt.info() != Eigen::Success) throw SolverError("acceleration norm is not positive definite");
    // Endpoint rows/columns of the inverse stay exactly zero off the diagonal.
    inverse_ = Mat::Identity(horizon + 1, horizon + 1);
    inverse_.block(1, 1, m, m) = llt.solve(Mat::Identity(m, m));
  }

  int horizon() const { return horizon_; }
  int dof() const { return dof_; }
  double mu() const { return mu_; }

  /// Full (T+1)*dof norm matrix in stacked time-major ordering.
  Mat matrix() const {
    const int n = horizon_ + 1;
    Mat full = Mat::Zero(n * dof_, n * dof_);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (block_(a, b) != 0.0)
          full.block(a * dof_, b * dof_, dof_, dof_).diagonal().setConstant(block_(a, b));
    return full;
  }

  const Mat& block() const { return block_; }

  /// Scalar weights g_t with displacement of waypoint t equal to mu * g_t * torque.
  Vec influence(int waypoint_index) const {
    check_index(waypoint_index);
    return mu_ * inverse_.col(waypoint_index);
  }

  void check_index(int waypoint_index) const {
    if (waypoint_index < 1 || waypoint_index > horizon_ - 1) {
      throw CorrectionPlacementError("correction index " + std::to_string(waypoint_index) +
                                     " outside interior range [1, " +
                                     std::to_string(horizon_ - 1) + "]");
    }
  }

  Trajectory deform(const Trajectory& xi, const Correction& u) const {
    if (xi.horizon() != horizon_ || xi.dof() != dof_) {
      throw ConfigurationError("trajectory shape does not match the deformation operator");
    }
    if (u.torque.size() != dof_) throw ConfigurationError("torque dimension mismatch");
    if (!u.torque.allFinite()) throw ConfigurationError("torque is not finite");
    const Vec g = influence(u.waypoint_index);
    Trajectory out = xi;
    out.waypoints().noalias() += g * u.torque.transpose();
    return out;
  }

 private:
  int horizon_;
  int dof_;
  double mu_;
  Mat block_;
  Mat inverse_;
};

}  // namespace phri
