#pragma once

// Serial-arm models and kinematics: forward kinematics over a fixed joint
// chain, geometric Jacobian, and damped-least-squares inverse kinematics with
// reach-limit reporting.  Models are value types loaded from coenv-model/1
// JSON files.

#include "coenv/geometry.hpp"

#include <optional>
#include <string>
#include <vector>

namespace coenv {

/// One revolute joint: fixed transform from the parent link frame, then a
/// rotation of the joint angle about `axis` (unit vector, local frame).
struct Joint {
  std::string name;
  Vec3 axis{0.0, 0.0, 1.0};
  Pose origin;
  double limit_lower = -3.1;
  double limit_upper = 3.1;
};

/// Parallel gripper parameters.  Commands live in [-1, 1]: +1 fully open,
/// -1 fully closed; width maps linearly onto [0, max_width].
struct Gripper {
  double max_width = 0.08;
  double open_command = 1.0;
  double close_command = -0.6;
};

/// Collision capsule attached to link `link` (0-based joint frame index).
struct LinkCapsule {
  int link = 0;
  Capsule capsule;
};

struct RobotModel {
  std::string name;
  std::vector<Joint> joints;
  Pose tcp_offset;           // last joint frame -> tool centre point
  Pose base_pose;            // default placement; scenes usually override it
  std::vector<LinkCapsule> capsules;
  Gripper gripper;
  double reach = 0.0;        // documented maximum tcp distance from base
  std::vector<double> stretched_config;  // config attaining `reach`

  int dof() const { return static_cast<int>(joints.size()); }
  /// Commanded gripper width in metres for a command in [-1, 1].
  double gripper_width(double command) const;
};

/// Joint-space configuration: one angle per joint plus the gripper command.
struct JointConfig {
  std::vector<double> values;
  double gripper = 1.0;
};

/// Parses a coenv-model/1 JSON document.  Throws EngineError
/// (SerializationError) on schema violations.
RobotModel parse_model(const std::string& json_text);
std::string serialize_model(const RobotModel& model);
RobotModel load_model_file(const std::string& path);

struct FkResult {
  std::vector<Pose> frames;  // world pose of each joint frame, in chain order
  Pose tcp;                  // world tool-centre-point pose
};

/// Forward kinematics.  Throws DimensionMismatch if config.values.size()
/// differs from the model's dof.
FkResult forward_kinematics(const RobotModel& model, const Pose& base,
                            const JointConfig& config);

/// World-frame geometric Jacobian at the TCP, 6 x dof: rows 0-2 linear,
/// rows 3-5 angular.
Eigen::MatrixXd tcp_jacobian(const RobotModel& model, const Pose& base,
                             const JointConfig& config);

/// All model capsules transformed into the world frame for `config`.
/// Order is the model's capsule order, so index k always names the same
/// physical capsule across configurations.
std::vector<Capsule> link_capsules_world(const RobotModel& model,
                                         const Pose& base,
                                         const JointConfig& config);

struct IkTarget {
  Vec3 position{0.0, 0.0, 0.0};
  std::optional<Quat> orientation;  // empty = position-only solve
};

struct IkOptions {
  double lambda = 0.05;      // damping factor
  int max_iters = 200;       // iteration budget per attempt
  double pos_tol = 1e-4;     // metres
  double rot_tol = 1e-3;     // radians
  int restarts = 4;          // deterministic perturbed re-seeds after a stall
};

struct IkResult {
  bool success = false;
  JointConfig config;        // solution, or closest configuration found
  double residual_gap = 0.0; // position error (m) at `config` after a
                             // position-only polish; ~0 on success
  double rot_residual = 0.0; // orientation error (rad) at `config`
  int iterations = 0;        // total iterations spent across restarts
};

/// Damped-least-squares IK.  Joint values are clamped to their limits every
/// iteration.  A stall (best error improving by < 1e-8 for 10 consecutive
/// iterations) triggers a deterministic restart from a perturbed seed; when
/// all attempts are exhausted the result carries the closest configuration
/// and its residual gap.
IkResult solve_ik(const RobotModel& model, const Pose& base,
                  const IkTarget& target, const JointConfig& seed,
                  const IkOptions& opts = {});

}  // namespace coenv
