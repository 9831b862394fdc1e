#include "coenv/robot.hpp"

#include "coenv/json_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace coenv {

double RobotModel::gripper_width(double command) const {
  double f = std::clamp(0.5 * (command + 1.0), 0.0, 1.0);
  return gripper.max_width * f;
}

FkResult forward_kinematics(const RobotModel& model, const Pose& base,
                            const JointConfig& config) {
  if (config.values.size() != model.joints.size()) {
    throw EngineError(EngineError::Kind::DimensionMismatch,
                      "config has " + std::to_string(config.values.size()) +
                          " joints, model '" + model.name + "' expects " +
                          std::to_string(model.joints.size()));
  }
  FkResult out;
  out.frames.reserve(model.joints.size());
  Pose frame = base;
  for (size_t i = 0; i < model.joints.size(); ++i) {
    const Joint& joint = model.joints[i];
    frame = frame * joint.origin *
            Pose::rotation_about(joint.axis, config.values[i]);
    out.frames.push_back(frame);
  }
  out.tcp = frame * model.tcp_offset;
  return out;
}

Eigen::MatrixXd tcp_jacobian(const RobotModel& model, const Pose& base,
                             const JointConfig& config) {
  FkResult fk = forward_kinematics(model, base, config);
  const int n = model.dof();
  Eigen::MatrixXd jac(6, n);
  const Vec3 p = fk.tcp.translation;
  for (int i = 0; i < n; ++i) {
    // The joint's rotation is about its own axis, so the axis is the same
    // before and after applying the joint angle; frames[i] already carries it.
    Vec3 axis_w = fk.frames[i].rotation * model.joints[i].axis;
    Vec3 origin = fk.frames[i].translation;
    jac.block<3, 1>(0, i) = axis_w.cross(p - origin);
    jac.block<3, 1>(3, i) = axis_w;
  }
  return jac;
}

std::vector<Capsule> link_capsules_world(const RobotModel& model,
                                         const Pose& base,
                                         const JointConfig& config) {
  FkResult fk = forward_kinematics(model, base, config);
  std::vector<Capsule> out;
  out.reserve(model.capsules.size());
  for (const LinkCapsule& lc : model.capsules) {
    out.push_back(lc.capsule.transformed(fk.frames[lc.link]));
  }
  return out;
}

namespace {

// Deterministic pseudo-random unit value in [-1, 1] for IK restart seeds.
double hash_unit(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  x = x ^ (x >> 31);
  return 2.0 * (static_cast<double>(x >> 11) * 0x1.0p-53) - 1.0;
}

void clamp_to_limits(const RobotModel& model, std::vector<double>& q) {
  for (size_t i = 0; i < q.size(); ++i) {
    q[i] = std::clamp(q[i], model.joints[i].limit_lower,
                      model.joints[i].limit_upper);
  }
}

// Rotation error as a world-frame rotation vector taking `cur` onto `target`.
Vec3 rotation_error(const Quat& target, const Quat& cur) {
  Quat err = target * cur.conjugate();
  err.normalize();
  if (err.w() < 0.0) err.coeffs() = -err.coeffs();
  Eigen::AngleAxisd aa(err);
  return aa.angle() * aa.axis();
}

struct Attempt {
  JointConfig best;
  double best_pos_err = 0.0;
  double best_rot_err = 0.0;
  bool converged = false;
  int iterations = 0;
};

// One damped-least-squares descent from `start`.  `use_orientation` selects a
// 6-row or 3-row Jacobian.  Stops on convergence, iteration budget, or stall.
Attempt dls_descend(const RobotModel& model, const Pose& base,
                    const IkTarget& target, const JointConfig& start,
                    const IkOptions& opts, int max_iters,
                    bool use_orientation) {
  const int n = model.dof();
  Attempt at;
  at.best = start;
  clamp_to_limits(model, at.best.values);
  JointConfig q = at.best;

  double best_metric = std::numeric_limits<double>::infinity();
  int stall = 0;
  constexpr double kStallEps = 1e-8;
  constexpr int kStallIters = 10;
  constexpr double kMaxStep = 0.3;

  for (int iter = 0; iter < max_iters; ++iter) {
    at.iterations = iter + 1;
    FkResult fk = forward_kinematics(model, base, q);
    Vec3 pos_err = target.position - fk.tcp.translation;
    Vec3 rot_err = Vec3::Zero();
    if (use_orientation && target.orientation) {
      rot_err = rotation_error(*target.orientation, fk.tcp.rotation);
    }
    double pe = pos_err.norm();
    double re = rot_err.norm();
    double metric = pe + 0.1 * re;
    if (metric < best_metric - kStallEps) {
      stall = 0;
    } else {
      ++stall;
    }
    if (metric < best_metric) {
      best_metric = metric;
      at.best = q;
      at.best_pos_err = pe;
      at.best_rot_err = re;
    }
    bool pos_ok = pe <= opts.pos_tol;
    bool rot_ok = !use_orientation || !target.orientation || re <= opts.rot_tol;
    if (pos_ok && rot_ok) {
      at.converged = true;
      at.best = q;
      at.best_pos_err = pe;
      at.best_rot_err = re;
      return at;
    }
    if (stall >= kStallIters) break;

    Eigen::MatrixXd full = tcp_jacobian(model, base, q);
    const int rows = (use_orientation && target.orientation) ? 6 : 3;
    Eigen::MatrixXd jac = full.topRows(rows);
    Eigen::VectorXd e(rows);
    e.head<3>() = pos_err;
    if (rows == 6) e.tail<3>() = rot_err;

    Eigen::MatrixXd jjt = jac * jac.transpose();
    jjt.diagonal().array() += opts.lambda * opts.lambda;
    Eigen::VectorXd dq = jac.transpose() * jjt.ldlt().solve(e);
    for (int i = 0; i < n; ++i) {
      q.values[i] += std::clamp(dq[i], -kMaxStep, kMaxStep);
    }
    clamp_to_limits(model, q.values);
  }
  return at;
}

}  // namespace

IkResult solve_ik(const RobotModel& model, const Pose& base,
                  const IkTarget& target, const JointConfig& seed,
                  const IkOptions& opts) {
  if (seed.values.size() != model.joints.size()) {
    throw EngineError(EngineError::Kind::DimensionMismatch,
                      "IK seed has " + std::to_string(seed.values.size()) +
                          " joints, model '" + model.name + "' expects " +
                          std::to_string(model.joints.size()));
  }
  const int n = model.dof();
  IkResult out;
  out.config = seed;

  Attempt best;
  best.best = seed;
  best.best_pos_err = std::numeric_limits<double>::infinity();
  bool have_best = false;

  for (int attempt = 0; attempt <= opts.restarts; ++attempt) {
    JointConfig start = seed;
    if (attempt > 0) {
      // Perturb the seed by a fixed per-attempt pattern so retries explore
      // different basins but the whole solve stays deterministic.
      double amp = 0.35 * attempt;
      for (int i = 0; i < n; ++i) {
        start.values[i] +=
            amp * hash_unit(static_cast<uint64_t>(attempt) * 131ULL +
                            static_cast<uint64_t>(i));
      }
    }
    Attempt at = dls_descend(model, base, target, start, opts, opts.max_iters,
                             /*use_orientation=*/true);
    out.iterations += at.iterations;
    double at_metric = at.best_pos_err + 0.1 * at.best_rot_err;
    double best_metric = best.best_pos_err + 0.1 * best.best_rot_err;
    if (!have_best || at.converged || at_metric < best_metric) {
      best = at;
      have_best = true;
    }
    if (at.converged) break;
  }

  if (best.converged) {
    out.success = true;
    out.config = best.best;
    out.config.gripper = seed.gripper;
    out.residual_gap = best.best_pos_err;
    out.rot_residual = best.best_rot_err;
    return out;
  }

  // No convergence: polish the closest configuration position-only so the
  // reported gap measures true positional reach, not an orientation trade-off.
  Attempt polish = dls_descend(model, base, target, best.best, opts, 100,
                               /*use_orientation=*/false);
  out.iterations += polish.iterations;
  out.success = false;
  out.config = polish.best;
  out.config.gripper = seed.gripper;
  out.residual_gap = polish.best_pos_err;
  FkResult fk = forward_kinematics(model, base, out.config);
  out.rot_residual = target.orientation
                         ? quat_angle(*target.orientation, fk.tcp.rotation)
                         : 0.0;
  return out;
}

RobotModel parse_model(const std::string& json_text) {
  Json j = parse_json(json_text, "model");
  require_schema(j, "coenv-model/1");
  RobotModel m;
  m.name = require_string(j, "name", "model");
  const Json& joints = require_field(j, "joints", "model");
  if (!joints.is_array() || joints.empty()) {
    throw EngineError(EngineError::Kind::SerializationError,
                      "model: joints must be a non-empty array");
  }
  for (size_t i = 0; i < joints.size(); ++i) {
    const Json& jj = joints[i];
    std::string where = "model.joints[" + std::to_string(i) + "]";
    Joint joint;
    joint.name = jj.contains("name") ? require_string(jj, "name", where)
                                     : "j" + std::to_string(i + 1);
    joint.axis = vec3_from_json(require_field(jj, "axis", where), where + ".axis");
    if (joint.axis.norm() < 1e-9) {
      throw EngineError(EngineError::Kind::SerializationError,
                        where + ": axis must be nonzero");
    }
    joint.axis.normalize();
    joint.origin = pose_from_json(require_field(jj, "origin", where),
                                  where + ".origin");
    const Json& lim = require_field(jj, "limit", where);
    if (!lim.is_array() || lim.size() != 2 || !lim[0].is_number() ||
        !lim[1].is_number()) {
      throw EngineError(EngineError::Kind::SerializationError,
                        where + ": limit must be [lower, upper]");
    }
    joint.limit_lower = lim[0].get<double>();
    joint.limit_upper = lim[1].get<double>();
    if (joint.limit_lower >= joint.limit_upper) {
      throw EngineError(EngineError::Kind::SerializationError,
                        where + ": limit lower bound must be below upper");
    }
    m.joints.push_back(joint);
  }
  m.tcp_offset = pose_from_json(require_field(j, "tcp_offset", "model"),
                                "model.tcp_offset");
  if (j.contains("base_pose")) {
    m.base_pose = pose_from_json(j["base_pose"], "model.base_pose");
  }
  const Json& caps = require_field(j, "capsules", "model");
  if (!caps.is_array()) {
    throw EngineError(EngineError::Kind::SerializationError,
                      "model: capsules must be an array");
  }
  for (size_t i = 0; i < caps.size(); ++i) {
    const Json& jc = caps[i];
    std::string where = "model.capsules[" + std::to_string(i) + "]";
    LinkCapsule lc;
    lc.link = static_cast<int>(require_number(jc, "link", where));
    if (lc.link < 0 || lc.link >= m.dof()) {
      throw EngineError(EngineError::Kind::SerializationError,
                        where + ": link index out of range");
    }
    lc.capsule.a = vec3_from_json(require_field(jc, "a", where), where + ".a");
    lc.capsule.b = vec3_from_json(require_field(jc, "b", where), where + ".b");
    lc.capsule.radius = require_number(jc, "radius", where);
    if (lc.capsule.radius <= 0.0) {
      throw EngineError(EngineError::Kind::SerializationError,
                        where + ": radius must be positive");
    }
    m.capsules.push_back(lc);
  }
  const Json& grip = require_field(j, "gripper", "model");
  m.gripper.max_width = require_number(grip, "max_width", "model.gripper");
  m.gripper.open_command = require_number(grip, "open_command", "model.gripper");
  m.gripper.close_command =
      require_number(grip, "close_command", "model.gripper");
  if (m.gripper.max_width <= 0.0) {
    throw EngineError(EngineError::Kind::SerializationError,
                      "model.gripper: max_width must be positive");
  }
  m.reach = require_number(j, "reach", "model");
  if (j.contains("stretched_config")) {
    for (const auto& v : j["stretched_config"]) {
      m.stretched_config.push_back(v.get<double>());
    }
    if (m.stretched_config.size() != m.joints.size()) {
      throw EngineError(EngineError::Kind::SerializationError,
                        "model: stretched_config length mismatch");
    }
  }
  return m;
}

std::string serialize_model(const RobotModel& m) {
  Json j;
  j["schema"] = "coenv-model/1";
  j["name"] = m.name;
  j["joints"] = Json::array();
  for (const Joint& joint : m.joints) {
    Json jj;
    jj["name"] = joint.name;
    jj["axis"] = vec3_to_json(joint.axis);
    jj["origin"] = pose_to_json(joint.origin);
    jj["limit"] = Json::array({joint.limit_lower, joint.limit_upper});
    j["joints"].push_back(jj);
  }
  j["tcp_offset"] = pose_to_json(m.tcp_offset);
  j["base_pose"] = pose_to_json(m.base_pose);
  j["capsules"] = Json::array();
  for (const LinkCapsule& lc : m.capsules) {
    Json jc;
    jc["link"] = lc.link;
    jc["a"] = vec3_to_json(lc.capsule.a);
    jc["b"] = vec3_to_json(lc.capsule.b);
    jc["radius"] = lc.capsule.radius;
    j["capsules"].push_back(jc);
  }
  j["gripper"] = Json{{"max_width", m.gripper.max_width},
                      {"open_command", m.gripper.open_command},
                      {"close_command", m.gripper.close_command}};
  j["reach"] = m.reach;
  if (!m.stretched_config.empty()) j["stretched_config"] = m.stretched_config;
  return j.dump(2) + "\n";
}

RobotModel load_model_file(const std::string& path) {
  return parse_model(read_text_file(path));
}

}  // namespace coenv
