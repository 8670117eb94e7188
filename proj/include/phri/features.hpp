#pragma once

// State features phi(x), trajectory feature counts Phi(xi) = sum_t phi(x_t),
// and their waypoint gradients. Every feature is a smooth squared distance.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "phri/arm_model.hpp"
#include "phri/errors.hpp"
#include "phri/trajectory.hpp"

namespace phri {

enum class FeatureKind {
  /// (ee_y - table_height)^2
  kTable,
  /// |ee - human_position|^2
  kHumanDistance,
  /// squared chord between the ee heading and the upright heading,
  /// |e^{i a} - e^{i a_up}|^2 = 2 (1 - cos(a - a_up))
  kOrientation,
};

inline std::string to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::kTable: return "table";
    case FeatureKind::kHumanDistance: return "human";
    case FeatureKind::kOrientation: return "orientation";
  }
  return "?";
}

inline FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "table") return FeatureKind::kTable;
  if (s == "human") return FeatureKind::kHumanDistance;
  if (s == "orientation") return FeatureKind::kOrientation;
  throw ConfigurationError("unknown feature kind '" + s + "'");
}

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::kTable;
  /// true when the robot's hypothesis space contains this feature
  bool known = true;
};

/// Per-waypoint feature values (one entry per feature).
using FeatureVector = Eigen::VectorXd;
/// Trajectory sums of FeatureVector.
using FeatureCount = Eigen::VectorXd;

class FeatureSet {
 public:
  FeatureSet() = default;

  FeatureSet(std::vector<FeatureSpec> specs, double table_height, Point2 human_position,
             double upright_angle)
      : specs_(std::move(specs)),
        table_height_(table_height),
        human_position_(std::move(human_position)),
        upright_angle_(upright_angle) {
    if (specs_.empty()) throw ConfigurationError("feature set is empty");
    std::set<std::string> names;
    for (const auto& s : specs_) {
      if (!names.insert(s.name).second) {
        throw ConfigurationError("duplicate feature name '" + s.name + "'");
      }
    }
    if (known_indices().empty()) throw ConfigurationError("at least one feature must be known");
    if (!std::isfinite(table_height_) || !human_position_.allFinite() ||
        !std::isfinite(upright_angle_)) {
      throw ConfigurationError("feature parameters must be finite");
    }
  }

  /// The three standard features, with `known` naming the ones in the
  /// hypothesis space.
  static FeatureSet standard(double table_height, Point2 human_position, double upright_angle,
                             const std::vector<std::string>& known) {
    std::vector<FeatureSpec> specs;
    for (auto kind : {FeatureKind::kTable, FeatureKind::kHumanDistance, FeatureKind::kOrientation}) {
      const std::string name = to_string(kind);
      const bool is_known = std::find(known.begin(), known.end(), name) != known.end();
      specs.push_back({name, kind, is_known});
    }
    return {std::move(specs), table_height, std::move(human_position), upright_angle};
  }

  int size() const { return static_cast<int>(specs_.size()); }
  const std::vector<FeatureSpec>& specs() const { return specs_; }
  const FeatureSpec& spec(int i) const { return specs_.at(i); }
  double table_height() const { return table_height_; }
  const Point2& human_position() const { return human_position_; }
  double upright_angle() const { return upright_angle_; }

  int index_of(const std::string& name) const {
    for (int i = 0; i < size(); ++i)
      if (specs_[i].name == name) return i;
    throw ConfigurationError("unknown feature '" + name + "'");
  }

  std::vector<int> known_indices() const {
    std::vector<int> idx;
    for (int i = 0; i < size(); ++i)
      if (specs_[i].known) idx.push_back(i);
    return idx;
  }

  std::vector<std::string> names(bool known_only = false) const {
    std::vector<std::string> out;
    for (const auto& s : specs_)
      if (!known_only || s.known) out.push_back(s.name);
    return out;
  }

  /// Copy with a different hypothesis space.
  FeatureSet with_known(const std::vector<int>& known) const {
    FeatureSet fs = *this;
    for (int i = 0; i < size(); ++i)
      fs.specs_[i].known = std::find(known.begin(), known.end(), i) != known.end();
    if (fs.known_indices().empty()) throw ConfigurationError("at least one feature must be known");
    return fs;
  }

  /// Restricts a full-length feature vector to the known entries.
  Vec known_part(const Vec& full) const { return select(full, known_indices()); }

  static Vec select(const Vec& full, const std::vector<int>& idx) {
    Vec out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = full[idx[i]];
    return out;
  }

 private:
  std::vector<FeatureSpec> specs_;
  double table_height_ = 0.0;
  Point2 human_position_ = Point2::Zero();
  double upright_angle_ = 0.0;
};

namespace detail {

/// Derivative of one feature with respect to (ee_x, ee_y, ee_angle).
inline Eigen::RowVector3d feature_task_gradient(const FeatureSet& fs, const FeatureSpec& s,
                                                const ArmPose& pose) {
  const Point2& ee = pose.ee();
  switch (s.kind) {
    case FeatureKind::kTable: return {0.0, 2.0 * (ee.y() - fs.table_height()), 0.0};
    case FeatureKind::kHumanDistance: {
      const Point2 d = ee - fs.human_position();
      return {2.0 * d.x(), 2.0 * d.y(), 0.0};
    }
    case FeatureKind::kOrientation:
      return {0.0, 0.0, 2.0 * std::sin(pose.ee_angle - fs.upright_angle())};
  }
  return Eigen::RowVector3d::Zero();
}

inline double feature_value(const FeatureSet& fs, const FeatureSpec& s, const ArmPose& pose) {
  const Point2& ee = pose.ee();
  switch (s.kind) {
    case FeatureKind::kTable: {
      const double dy = ee.y() - fs.table_height();
      return dy * dy;
    }
    case FeatureKind::kHumanDistance: return (ee - fs.human_position()).squaredNorm();
    case FeatureKind::kOrientation:
      return 2.0 * (1.0 - std::cos(pose.ee_angle - fs.upright_angle()));
  }
  return 0.0;
}

}  // namespace detail

inline FeatureVector phi(const FeatureSet& fs, const ArmModel& model, const JointConfig& q) {
  const ArmPose pose = forward_kinematics(model, q);
  FeatureVector v(fs.size());
  for (int i = 0; i < fs.size(); ++i) v[i] = detail::feature_value(fs, fs.spec(i), pose);
  return v;
}

/// d phi / d q, one row per feature.
inline Mat phi_jacobian(const FeatureSet& fs, const ArmModel& model, const JointConfig& q) {
  const ArmPose pose = forward_kinematics(model, q);
  const Mat jac = ee_jacobian(model, q);
  Mat out(fs.size(), model.n_links());
  for (int i = 0; i < fs.size(); ++i) out.row(i) = detail::feature_task_gradient(fs, fs.spec(i), pose) * jac;
  return out;
}

inline FeatureCount total_features(const FeatureSet& fs, const ArmModel& model, const Trajectory& traj) {
  if (traj.size() < 1) throw ConfigurationError("trajectory is empty");
  FeatureCount sum = FeatureCount::Zero(fs.size());
  for (int t = 0; t < traj.size(); ++t) sum += phi(fs, model, traj.waypoint(t));
  return sum;
}

/// d Phi / d(stacked waypoints), nf x ((T+1) * dof). Endpoint columns are
/// zero when `fixed_endpoints` is set.
inline Mat features_gradient(const FeatureSet& fs, const ArmModel& model, const Trajectory& traj,
                             bool fixed_endpoints = true) {
  if (traj.size() < 1) throw ConfigurationError("trajectory is empty");
  const int n = traj.dof();
  Mat grad = Mat::Zero(fs.size(), traj.size() * n);
  for (int t = 0; t < traj.size(); ++t) {
    if (fixed_endpoints && (t == 0 || t == traj.horizon())) continue;
    grad.middleCols(t * n, n) = phi_jacobian(fs, model, traj.waypoint(t));
  }
  return grad;
}

}  // namespace phri
