#pragma once

// Rigid-body primitives shared by every other module: poses (translation +
// unit quaternion), capsules for link/obstacle geometry, and the small set of
// distance/intersection queries the engine relies on.

#include <Eigen/Dense>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace coenv {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

/// Engine-wide error with a machine-readable kind.  Thrown by operations whose
/// contracts call out a failure case; callers that want to branch on the cause
/// should switch on kind() rather than parse the message.
class EngineError : public std::runtime_error {
public:
  enum class Kind {
    DimensionMismatch,
    EmptyInput,
    DegenerateSpectrum,
    MissingExtrinsic,
    MixedObjects,
    TooFewPoints,
    DegenerateGeometry,
    UnknownObject,
    InvalidAgent,
    UnknownPrimitive,
    UnknownTask,
    ParamRange,
    MalformedPlan,
    MalformedPredicate,
    MalformedResponse,
    ValidationFailed,
    PlannerUnavailable,
    CodeGenUnavailable,
    TooManyViews,
    ViewBudgetExhausted,
    CheckpointNotExecutable,
    BadStepCount,
    ScriptError,
    SerializationError,
    StorageFull,
    TaskNotFound,
    RecordNotFound,
    IoError,
  };

  EngineError(Kind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  Kind kind() const { return kind_; }
  /// Stable lower_snake name of the kind, used in logs and CLI output.
  const char* kind_name() const;

private:
  Kind kind_;
};

/// Returns q normalized and sign-canonicalized: w >= 0, and if w == 0 the
/// first nonzero of (x, y, z) is made positive.  Every quaternion stored in a
/// Pose goes through this, so equal rotations compare bit-equal.
Quat canonical_quat(const Quat& q);

/// Rigid transform.  The rotation is always kept unit-norm and canonical
/// (see canonical_quat); constructors and operators re-canonicalize.
struct Pose {
  Vec3 translation{0.0, 0.0, 0.0};
  Quat rotation{1.0, 0.0, 0.0, 0.0};  // w, x, y, z

  Pose() = default;
  Pose(const Vec3& t, const Quat& q) : translation(t), rotation(canonical_quat(q)) {}

  static Pose identity() { return Pose(); }
  /// Rotation of `angle` radians about `axis` (normalized internally).
  static Pose rotation_about(const Vec3& axis, double angle);
  /// Pure translation.
  static Pose from_translation(const Vec3& t) { return Pose(t, Quat::Identity()); }
  /// Translation plus intrinsic roll-pitch-yaw (applied as Rz(yaw)*Ry(pitch)*Rx(roll)).
  static Pose from_rpy(const Vec3& t, double roll, double pitch, double yaw);

  /// Composition: result maps child-frame coordinates through `this`.
  Pose operator*(const Pose& child) const;
  /// Applies the transform to a point.
  Vec3 operator*(const Vec3& p) const;

  Pose inverse() const;
  Eigen::Matrix3d rotation_matrix() const { return rotation.toRotationMatrix(); }
  /// Extrinsic XYZ (roll, pitch, yaw) angles of the rotation.
  Vec3 rpy() const;
};

/// Angle in [0, pi] between two rotations.
double quat_angle(const Quat& a, const Quat& b);

/// Capsule: segment ab swept by a sphere of `radius`.
struct Capsule {
  Vec3 a{0.0, 0.0, 0.0};
  Vec3 b{0.0, 0.0, 0.0};
  double radius = 0.0;

  Capsule() = default;
  Capsule(const Vec3& a_, const Vec3& b_, double r) : a(a_), b(b_), radius(r) {}

  Capsule transformed(const Pose& pose) const {
    return Capsule(pose * a, pose * b, radius);
  }
};

/// Closest distance between segments [p1,q1] and [p2,q2].
double segment_segment_distance(const Vec3& p1, const Vec3& q1, const Vec3& p2,
                                const Vec3& q2);

/// Closest distance from point p to segment [a,b].
double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b);

/// Signed distance between two capsules: negative values measure penetration
/// depth.  Exactly symmetric in its arguments.
double capsule_distance(const Capsule& a, const Capsule& b);

/// Shape of a manipulable object.  `size` encoding:
///   box      -> full extents (sx, sy, sz)
///   cylinder -> (radius, height, 0)
///   sphere   -> (radius, 0, 0)
enum class ShapeType { Box, Cylinder, Sphere };

struct Shape {
  ShapeType type = ShapeType::Box;
  Vec3 size{0.0, 0.0, 0.0};

  static Shape box(double sx, double sy, double sz) {
    return Shape{ShapeType::Box, Vec3(sx, sy, sz)};
  }
  static Shape cylinder(double radius, double height) {
    return Shape{ShapeType::Cylinder, Vec3(radius, height, 0.0)};
  }
  static Shape sphere(double radius) {
    return Shape{ShapeType::Sphere, Vec3(radius, 0.0, 0.0)};
  }

  /// Radius of the bounding sphere around the shape's own origin.
  double bounding_radius() const;
  /// Distance from the shape centre to its lowest point when upright.
  double rest_half_height() const;
  /// Default width a parallel gripper must span to hold the shape.
  double default_graspable_width() const;
};

/// Distance from world point p to the surface of `shape` posed at `pose`
/// (0 for points inside).
double point_shape_distance(const Vec3& p, const Shape& shape, const Pose& pose);

/// True if open segment (o, p) passes through `shape` posed at `pose`.
/// Endpoints touching the surface do not count as blocking.
bool segment_hits_shape(const Vec3& o, const Vec3& p, const Shape& shape,
                        const Pose& pose);

/// True if segment [o, p] comes within `cap.radius` of cap's axis segment.
bool segment_hits_capsule(const Vec3& o, const Vec3& p, const Capsule& cap);

}  // namespace coenv
