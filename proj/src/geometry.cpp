#include "coenv/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace coenv {

const char* EngineError::kind_name() const {
  switch (kind_) {
    case Kind::DimensionMismatch: return "dimension_mismatch";
    case Kind::EmptyInput: return "empty_input";
    case Kind::DegenerateSpectrum: return "degenerate_spectrum";
    case Kind::MissingExtrinsic: return "missing_extrinsic";
    case Kind::MixedObjects: return "mixed_objects";
    case Kind::TooFewPoints: return "too_few_points";
    case Kind::DegenerateGeometry: return "degenerate_geometry";
    case Kind::UnknownObject: return "unknown_object";
    case Kind::InvalidAgent: return "invalid_agent";
    case Kind::UnknownPrimitive: return "unknown_primitive";
    case Kind::UnknownTask: return "unknown_task";
    case Kind::ParamRange: return "param_range";
    case Kind::MalformedPlan: return "malformed_plan";
    case Kind::MalformedPredicate: return "malformed_predicate";
    case Kind::MalformedResponse: return "malformed_response";
    case Kind::ValidationFailed: return "validation_failed";
    case Kind::PlannerUnavailable: return "planner_unavailable";
    case Kind::CodeGenUnavailable: return "codegen_unavailable";
    case Kind::TooManyViews: return "too_many_views";
    case Kind::ViewBudgetExhausted: return "view_budget_exhausted";
    case Kind::CheckpointNotExecutable: return "checkpoint_not_executable";
    case Kind::BadStepCount: return "bad_step_count";
    case Kind::ScriptError: return "script_error";
    case Kind::SerializationError: return "serialization_error";
    case Kind::StorageFull: return "storage_full";
    case Kind::TaskNotFound: return "task_not_found";
    case Kind::RecordNotFound: return "record_not_found";
    case Kind::IoError: return "io_error";
  }
  return "unknown";
}

Quat canonical_quat(const Quat& q) {
  Quat n = q.normalized();
  double lead = n.w();
  if (lead == 0.0) lead = n.x();
  if (lead == 0.0) lead = n.y();
  if (lead == 0.0) lead = n.z();
  if (lead < 0.0) n.coeffs() = -n.coeffs();
  return n;
}

Pose Pose::rotation_about(const Vec3& axis, double angle) {
  return Pose(Vec3::Zero(), Quat(Eigen::AngleAxisd(angle, axis.normalized())));
}

Pose Pose::from_rpy(const Vec3& t, double roll, double pitch, double yaw) {
  Quat q = Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
           Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
           Eigen::AngleAxisd(roll, Vec3::UnitX());
  return Pose(t, q);
}

Pose Pose::operator*(const Pose& child) const {
  return Pose(translation + rotation * child.translation,
              rotation * child.rotation);
}

Vec3 Pose::operator*(const Vec3& p) const { return translation + rotation * p; }

Pose Pose::inverse() const {
  Quat qi = rotation.conjugate();
  return Pose(-(qi * translation), qi);
}

Vec3 Pose::rpy() const {
  // Extrinsic XYZ convention: R = Rz(yaw) Ry(pitch) Rx(roll).
  Eigen::Matrix3d r = rotation.toRotationMatrix();
  double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  double roll, yaw;
  if (std::abs(r(2, 0)) < 1.0 - 1e-12) {
    roll = std::atan2(r(2, 1), r(2, 2));
    yaw = std::atan2(r(1, 0), r(0, 0));
  } else {
    // Gimbal lock: fold everything into roll.
    roll = std::atan2(-r(1, 2), r(1, 1));
    yaw = 0.0;
  }
  return Vec3(roll, pitch, yaw);
}

double quat_angle(const Quat& a, const Quat& b) {
  double d = std::abs(a.normalized().dot(b.normalized()));
  return 2.0 * std::acos(std::clamp(d, -1.0, 1.0));
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  Vec3 ab = b - a;
  double len2 = ab.squaredNorm();
  if (len2 <= 0.0) return (p - a).norm();
  double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

// Closest distance between two segments, after Ericson, "Real-Time Collision
// Detection" 5.1.9.  Handles every degeneracy (points, parallel segments).
double segment_segment_distance(const Vec3& p1, const Vec3& q1, const Vec3& p2,
                                const Vec3& q2) {
  const Vec3 d1 = q1 - p1;
  const Vec3 d2 = q2 - p2;
  const Vec3 r = p1 - p2;
  const double a = d1.squaredNorm();
  const double e = d2.squaredNorm();
  const double f = d2.dot(r);
  constexpr double kEps = 1e-30;

  double s, t;
  if (a <= kEps && e <= kEps) {
    return r.norm();
  }
  if (a <= kEps) {
    s = 0.0;
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= kEps) {
      t = 0.0;
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > kEps ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  const Vec3 c1 = p1 + s * d1;
  const Vec3 c2 = p2 + t * d2;
  return (c1 - c2).norm();
}

namespace {

// Lexicographic order on (a, b, radius) used to canonicalize capsule pairs so
// capsule_distance(a, b) and capsule_distance(b, a) run the identical code
// path and return bit-equal results.
bool capsule_less(const Capsule& x, const Capsule& y) {
  for (int i = 0; i < 3; ++i) {
    if (x.a[i] != y.a[i]) return x.a[i] < y.a[i];
  }
  for (int i = 0; i < 3; ++i) {
    if (x.b[i] != y.b[i]) return x.b[i] < y.b[i];
  }
  return x.radius < y.radius;
}

}  // namespace

double capsule_distance(const Capsule& a, const Capsule& b) {
  const Capsule& first = capsule_less(b, a) ? b : a;
  const Capsule& second = capsule_less(b, a) ? a : b;
  double axis = segment_segment_distance(first.a, first.b, second.a, second.b);
  return axis - first.radius - second.radius;
}

double Shape::bounding_radius() const {
  switch (type) {
    case ShapeType::Box: return 0.5 * size.norm();
    case ShapeType::Cylinder: return std::hypot(size[0], 0.5 * size[1]);
    case ShapeType::Sphere: return size[0];
  }
  return 0.0;
}

double Shape::rest_half_height() const {
  switch (type) {
    case ShapeType::Box: return 0.5 * size[2];
    case ShapeType::Cylinder: return 0.5 * size[1];
    case ShapeType::Sphere: return size[0];
  }
  return 0.0;
}

double Shape::default_graspable_width() const {
  switch (type) {
    case ShapeType::Box: return std::min(size[0], size[1]);
    case ShapeType::Cylinder: return 2.0 * size[0];
    case ShapeType::Sphere: return 2.0 * size[0];
  }
  return 0.0;
}

double point_shape_distance(const Vec3& p, const Shape& shape, const Pose& pose) {
  const Vec3 local = pose.inverse() * p;
  switch (shape.type) {
    case ShapeType::Box: {
      Vec3 d = local.cwiseAbs() - 0.5 * shape.size;
      Vec3 outside = d.cwiseMax(0.0);
      return outside.norm();
    }
    case ShapeType::Cylinder: {
      double dr = std::hypot(local.x(), local.y()) - shape.size[0];
      double dz = std::abs(local.z()) - 0.5 * shape.size[1];
      double qr = std::max(dr, 0.0);
      double qz = std::max(dz, 0.0);
      return std::hypot(qr, qz);
    }
    case ShapeType::Sphere:
      return std::max(local.norm() - shape.size[0], 0.0);
  }
  return 0.0;
}

namespace {

// Slab test for a parametric segment against an axis-aligned box centred at
// the origin; hit interval is intersected with (t0, t1).
bool segment_hits_aabb(const Vec3& o, const Vec3& d, const Vec3& half,
                       double t0, double t1) {
  double tmin = t0, tmax = t1;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-15) {
      if (std::abs(o[i]) > half[i]) return false;
      continue;
    }
    double inv = 1.0 / d[i];
    double lo = (-half[i] - o[i]) * inv;
    double hi = (half[i] - o[i]) * inv;
    if (lo > hi) std::swap(lo, hi);
    tmin = std::max(tmin, lo);
    tmax = std::min(tmax, hi);
    if (tmin > tmax) return false;
  }
  return true;
}

}  // namespace

bool segment_hits_shape(const Vec3& o, const Vec3& p, const Shape& shape,
                        const Pose& pose) {
  // Shrink the segment a hair so endpoints lying on the surface do not count.
  constexpr double kTrim = 1e-6;
  const Pose inv = pose.inverse();
  const Vec3 lo = inv * o;
  const Vec3 lp = inv * p;
  const Vec3 d = lp - lo;
  switch (shape.type) {
    case ShapeType::Box:
      return segment_hits_aabb(lo, d, 0.5 * shape.size, kTrim, 1.0 - kTrim);
    case ShapeType::Cylinder: {
      // Conservative: treat the cylinder as the capsule of equal radius over
      // its axis, which slightly rounds the rim.
      const Vec3 a(0.0, 0.0, -0.5 * shape.size[1]);
      const Vec3 b(0.0, 0.0, 0.5 * shape.size[1]);
      const Vec3 s0 = lo + kTrim * d;
      const Vec3 s1 = lo + (1.0 - kTrim) * d;
      return segment_segment_distance(s0, s1, a, b) < shape.size[0];
    }
    case ShapeType::Sphere: {
      const Vec3 s0 = lo + kTrim * d;
      const Vec3 s1 = lo + (1.0 - kTrim) * d;
      return point_segment_distance(Vec3::Zero(), s0, s1) < shape.size[0];
    }
  }
  return false;
}

bool segment_hits_capsule(const Vec3& o, const Vec3& p, const Capsule& cap) {
  return segment_segment_distance(o, p, cap.a, cap.b) < cap.radius;
}

}  // namespace coenv
