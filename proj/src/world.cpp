#include "coenv/world.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

namespace coenv {

namespace {

constexpr double kGoldenSectionIters = 48;  // segment-vs-box distance search

// Min distance from a segment to a shape surface via golden-section search
// (the point-to-convex-shape distance is convex along the segment).
double segment_shape_distance(const Vec3& a, const Vec3& b, const Shape& shape,
                              const Pose& pose) {
  double lo = 0.0, hi = 1.0;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  auto f = [&](double t) {
    return point_shape_distance(a + t * (b - a), shape, pose);
  };
  double x1 = hi - phi * (hi - lo);
  double x2 = lo + phi * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < kGoldenSectionIters; ++i) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = f(x2);
    }
  }
  return std::min({f(lo), f1, f2, f(hi)});
}

// Object shape reduced to a capsule where that is exact (cylinder, sphere).
std::optional<Capsule> shape_as_capsule(const SceneObject& o) {
  switch (o.shape.type) {
    case ShapeType::Sphere:
      return Capsule(o.pose.translation, o.pose.translation, o.shape.size[0]);
    case ShapeType::Cylinder: {
      Vec3 axis = o.pose.rotation * Vec3(0, 0, 0.5 * o.shape.size[1]);
      return Capsule(o.pose.translation - axis, o.pose.translation + axis,
                     o.shape.size[0]);
    }
    case ShapeType::Box:
      return std::nullopt;
  }
  return std::nullopt;
}

double capsule_object_distance(const Capsule& cap, const SceneObject& o) {
  if (auto oc = shape_as_capsule(o)) return capsule_distance(cap, *oc);
  // Box: search along the capsule axis.  Inside-the-box points read as 0, so
  // penetration is reported down to -cap.radius (enough for onset checks).
  return segment_shape_distance(cap.a, cap.b, o.shape, o.pose) - cap.radius;
}

// XY half-extents of the upright footprint (yaw ignored for boxes; task
// objects stay near-upright, and supports only gate snap decisions).
void footprint(const SceneObject& o, double& hx, double& hy) {
  switch (o.shape.type) {
    case ShapeType::Box:
      hx = 0.5 * o.shape.size[0];
      hy = 0.5 * o.shape.size[1];
      break;
    case ShapeType::Cylinder:
    case ShapeType::Sphere:
      hx = hy = o.shape.size[0];
      break;
  }
}

bool xy_over(const SceneObject& lower, const Vec3& p) {
  double hx, hy;
  footprint(lower, hx, hy);
  return std::abs(p.x() - lower.pose.translation.x()) <= hx &&
         std::abs(p.y() - lower.pose.translation.y()) <= hy;
}

}  // namespace

const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::GraspAttached: return "GraspAttached";
    case EventKind::GraspMissed: return "GraspMissed";
    case EventKind::Released: return "Released";
    case EventKind::Dropped: return "Dropped";
    case EventKind::InterAgentContact: return "InterAgentContact";
    case EventKind::ReachLimit: return "ReachLimit";
  }
  return "?";
}

EventKind event_kind_from_name(const std::string& name) {
  if (name == "GraspAttached") return EventKind::GraspAttached;
  if (name == "GraspMissed") return EventKind::GraspMissed;
  if (name == "Released") return EventKind::Released;
  if (name == "Dropped") return EventKind::Dropped;
  if (name == "InterAgentContact") return EventKind::InterAgentContact;
  if (name == "ReachLimit") return EventKind::ReachLimit;
  throw EngineError(EngineError::Kind::SerializationError,
                    "unknown event kind '" + name + "'");
}

void ModelLibrary::add(RobotModel model) {
  models_[model.name] = std::move(model);
}

bool ModelLibrary::has(const std::string& name) const {
  return models_.count(name) > 0;
}

const RobotModel& ModelLibrary::get(const std::string& name) const {
  auto it = models_.find(name);
  if (it == models_.end()) {
    throw EngineError(EngineError::Kind::InvalidAgent,
                      "no robot model named '" + name + "'");
  }
  return it->second;
}

ModelLibrary ModelLibrary::from_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  ModelLibrary lib;
  if (!fs::is_directory(dir)) {
    throw EngineError(EngineError::Kind::IoError,
                      "model directory '" + dir + "' does not exist");
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& p : files) lib.add(load_model_file(p.string()));
  return lib;
}

World::World(const ModelLibrary& models, WorldConfig cfg)
    : models_(&models), cfg_(cfg) {}

const RobotModel& World::model_of(const SceneState& scene, int agent_id) const {
  if (agent_id < 0 || agent_id >= static_cast<int>(scene.agents.size())) {
    throw EngineError(EngineError::Kind::InvalidAgent,
                      "agent " + std::to_string(agent_id) + " does not exist");
  }
  return models_->get(scene.agents[agent_id].model_ref);
}

Pose World::agent_tcp(const SceneState& scene, int agent_id) const {
  const AgentState& a = scene.agents.at(agent_id);
  return forward_kinematics(model_of(scene, agent_id), a.base_pose, a.config)
      .tcp;
}

double World::object_distance(const SceneObject& a, const SceneObject& b) {
  auto ca = shape_as_capsule(a);
  auto cb = shape_as_capsule(b);
  if (ca && cb) return capsule_distance(*ca, *cb);
  if (ca) return capsule_object_distance(*ca, b);
  if (cb) return capsule_object_distance(*cb, a);
  // Box vs box: sample each box's corners and centre against the other.
  // Upper bound on the true distance; adequate for contact-onset detection.
  double best = std::numeric_limits<double>::infinity();
  auto probe = [&](const SceneObject& pts, const SceneObject& target) {
    const Vec3 h = 0.5 * pts.shape.size;
    for (int sx = -1; sx <= 1; sx += 1) {
      for (int sy = -1; sy <= 1; sy += 1) {
        for (int sz = -1; sz <= 1; sz += 1) {
          Vec3 corner(h.x() * sx, h.y() * sy, h.z() * sz);
          best = std::min(best, point_shape_distance(pts.pose * corner,
                                                     target.shape, target.pose));
        }
      }
    }
  };
  probe(a, b);
  probe(b, a);
  return best;
}

double World::inter_agent_distance(const SceneState& scene, int a, int b) const {
  const AgentState& sa = scene.agents.at(a);
  const AgentState& sb = scene.agents.at(b);
  std::vector<Capsule> ca =
      link_capsules_world(models_->get(sa.model_ref), sa.base_pose, sa.config);
  std::vector<Capsule> cb =
      link_capsules_world(models_->get(sb.model_ref), sb.base_pose, sb.config);

  double best = std::numeric_limits<double>::infinity();
  for (const Capsule& x : ca) {
    for (const Capsule& y : cb) {
      best = std::min(best, capsule_distance(x, y));
    }
  }

  // Objects held by exactly one of the pair count as part of that agent's
  // body; an object both arms touch (bimanual grasp, handover) is excluded.
  auto involves = [](const SceneObject& o, int agent) {
    if (o.attached_to && o.attached_to->agent_id == agent) return true;
    for (const Attachment& sc : o.secondary_contacts) {
      if (sc.agent_id == agent) return true;
    }
    return false;
  };
  std::vector<const SceneObject*> held_a, held_b;
  for (const auto& [id, obj] : scene.objects) {
    bool ia = involves(obj, a), ib = involves(obj, b);
    if (ia && !ib) held_a.push_back(&obj);
    if (ib && !ia) held_b.push_back(&obj);
  }
  for (const SceneObject* oa : held_a) {
    for (const Capsule& y : cb) best = std::min(best, capsule_object_distance(y, *oa));
    for (const SceneObject* ob : held_b) {
      best = std::min(best, object_distance(*oa, *ob));
    }
  }
  for (const SceneObject* ob : held_b) {
    for (const Capsule& x : ca) best = std::min(best, capsule_object_distance(x, *ob));
  }
  return best;
}

SceneState World::step(const SceneState& scene, const JointAction& action) const {
  SceneState next = scene;
  next.step = scene.step + 1;

  for (const auto& [agent_id, target] : action.per_agent) {
    if (agent_id < 0 || agent_id >= static_cast<int>(next.agents.size())) {
      throw EngineError(EngineError::Kind::InvalidAgent,
                        "step: agent " + std::to_string(agent_id) +
                            " does not exist");
    }
    AgentState& a = next.agents[agent_id];
    const RobotModel& model = models_->get(a.model_ref);
    if (target.values.size() != model.joints.size()) {
      throw EngineError(EngineError::Kind::DimensionMismatch,
                        "step: target config dimension mismatch for agent " +
                            std::to_string(agent_id));
    }
    for (size_t j = 0; j < target.values.size(); ++j) {
      double cur = a.config.values[j];
      double want = std::clamp(target.values[j], model.joints[j].limit_lower,
                               model.joints[j].limit_upper);
      double diff = want - cur;
      // Within one step of the target: land exactly (bit-exact settling).
      a.config.values[j] = std::abs(diff) <= cfg_.max_joint_step
                               ? want
                               : cur + std::copysign(cfg_.max_joint_step, diff);
    }
    double gdiff = std::clamp(target.gripper, -1.0, 1.0) - a.config.gripper;
    a.config.gripper = std::abs(gdiff) <= cfg_.max_joint_step
                           ? std::clamp(target.gripper, -1.0, 1.0)
                           : a.config.gripper +
                                 std::copysign(cfg_.max_joint_step, gdiff);
  }

  // One FK pass per agent, reused below.
  std::vector<Pose> tcps(next.agents.size());
  for (size_t i = 0; i < next.agents.size(); ++i) {
    const AgentState& a = next.agents[i];
    tcps[i] = forward_kinematics(models_->get(a.model_ref), a.base_pose,
                                 a.config)
                  .tcp;
  }

  // Attached objects ride their primary agent's TCP.
  for (auto& [id, obj] : next.objects) {
    if (obj.attached_to) {
      obj.pose = tcps[obj.attached_to->agent_id] * obj.attached_to->grasp_offset;
    }
    double clearance = obj.bottom_z();
    auto it = next.peak_clearance.find(id);
    if (it == next.peak_clearance.end() || clearance > it->second) {
      next.peak_clearance[id] = clearance;
    }
  }

  // Secondary contacts: if a second arm's contact frame drifts off the
  // object, the bimanual hold failed and everything detaches.
  for (auto& [id, obj] : next.objects) {
    if (obj.secondary_contacts.empty()) continue;
    double drift = 0.0;
    for (const Attachment& sc : obj.secondary_contacts) {
      Vec3 expected = (tcps[sc.agent_id] * sc.grasp_offset).translation;
      drift = std::max(drift, (expected - obj.pose.translation).norm());
    }
    if (drift > cfg_.drop_tol) {
      Event e;
      e.step = next.step;
      e.kind = EventKind::Dropped;
      e.payload = Json{{"object", id}, {"drift_m", drift}};
      next.events.push_back(e);
      obj.attached_to.reset();
      obj.secondary_contacts.clear();
      // Fall to the highest support under the object's footprint.
      double support = 0.0;
      for (const auto& [oid, other] : next.objects) {
        if (oid == id) continue;
        if (xy_over(other, obj.pose.translation) &&
            other.top_z() <= obj.bottom_z() + 1e-9) {
          support = std::max(support, other.top_z());
        }
      }
      obj.pose.translation.z() = support + obj.shape.rest_half_height();
    }
  }

  // Inter-agent contact onset detection (hysteresis between touch/release).
  for (size_t i = 0; i < next.agents.size(); ++i) {
    for (size_t j = i + 1; j < next.agents.size(); ++j) {
      std::string key = std::to_string(i) + ":" + std::to_string(j);
      double d = inter_agent_distance(next, static_cast<int>(i),
                                      static_cast<int>(j));
      bool active = false;
      if (auto it = next.contact_active.find(key);
          it != next.contact_active.end()) {
        active = it->second;
      }
      if (!active && d < cfg_.contact_touch_tol) {
        Event e;
        e.step = next.step;
        e.kind = EventKind::InterAgentContact;
        e.payload = Json{{"agents", Json::array({i, j})}, {"distance_m", d}};
        next.events.push_back(e);
        next.contact_active[key] = true;
      } else if (active && d > cfg_.contact_release_tol) {
        next.contact_active[key] = false;
      }
    }
  }
  return next;
}

namespace {

double action_param(const ActionElement& act, const std::string& key,
                    size_t slot, double fallback) {
  return act.param(key, slot, fallback);
}

}  // namespace

PrimitiveOutcome World::apply_primitive(const SceneState& scene,
                                        const PlanElement& element,
                                        const IkOptions& ik) const {
  if (!element.is_action()) {
    throw EngineError(EngineError::Kind::CheckpointNotExecutable,
                      "apply_primitive: element " +
                          std::to_string(element.index) +
                          " is a checkpoint, not an action");
  }
  const ActionElement& act = element.action();
  if (act.agents.empty()) {
    throw EngineError(EngineError::Kind::InvalidAgent,
                      "apply_primitive: no agents given");
  }
  for (const auto& [key, values] : act.params) {
    if (values.size() != 1 && values.size() != act.agents.size()) {
      throw EngineError(EngineError::Kind::DimensionMismatch,
                        "apply_primitive: param '" + key + "' has " +
                            std::to_string(values.size()) +
                            " values for " + std::to_string(act.agents.size()) +
                            " agents");
    }
  }

  SceneState cur = scene;
  const size_t base_events = scene.events.size();
  JointAction targets;

  for (size_t slot = 0; slot < act.agents.size(); ++slot) {
    int agent_id = act.agents[slot];
    if (agent_id < 0 || agent_id >= static_cast<int>(cur.agents.size())) {
      throw EngineError(EngineError::Kind::InvalidAgent,
                        "apply_primitive: agent " + std::to_string(agent_id) +
                            " does not exist");
    }
    const AgentState& a = cur.agents[agent_id];
    const RobotModel& model = models_->get(a.model_ref);
    FkResult fk = forward_kinematics(model, a.base_pose, a.config);

    JointConfig target = a.config;
    // Move, Rotate, and Release run the IK leg.  A Release carrying deltas is
    // the Place spelling: translate first, then open (Move-then-Release).
    if (act.primitive != Primitive::Grasp) {
      IkTarget ik_target;
      if (act.primitive == Primitive::Rotate) {
        double droll = action_param(act, "delta_roll", slot, 0.0);
        double dpitch = action_param(act, "delta_pitch", slot, 0.0);
        double dyaw = action_param(act, "delta_yaw", slot, 0.0);
        Pose dq = Pose::from_rpy(Vec3::Zero(), droll, dpitch, dyaw);
        ik_target.position = fk.tcp.translation;
        ik_target.orientation = canonical_quat(dq.rotation * fk.tcp.rotation);
      } else {
        Vec3 delta(action_param(act, "delta_x", slot, 0.0),
                   action_param(act, "delta_y", slot, 0.0),
                   action_param(act, "delta_z", slot, 0.0));
        ik_target.position = fk.tcp.translation + delta;
        ik_target.orientation = fk.tcp.rotation;
      }
      IkResult sol = solve_ik(model, a.base_pose, ik_target, a.config, ik);
      if (!sol.success) {
        // The arm stops at the closest reachable configuration; the event
        // carries the diagnostics planners need to notice that it did.
        FkResult closest = forward_kinematics(model, a.base_pose, sol.config);
        Event e;
        e.step = cur.step;
        e.kind = EventKind::ReachLimit;
        e.payload = Json{
            {"agent", agent_id},
            {"target", vec3_to_json(ik_target.position)},
            {"actual", vec3_to_json(closest.tcp.translation)},
            {"gap_m", sol.residual_gap},
        };
        cur.events.push_back(e);
      }
      target = sol.config;
      target.gripper = a.config.gripper;
    }
    if (act.primitive == Primitive::Grasp) {
      double width = action_param(act, "target_width", slot,
                                  model.gripper.close_command);
      target.gripper = std::clamp(width, -1.0, 1.0);
    } else if (act.primitive == Primitive::Release) {
      target.gripper = model.gripper.open_command;
    }
    targets.per_agent[agent_id] = target;
  }

  // Idle agents hold their configuration (commanded every step).
  for (size_t i = 0; i < cur.agents.size(); ++i) {
    int id = static_cast<int>(i);
    if (!targets.per_agent.count(id)) {
      targets.per_agent[id] = cur.agents[i].config;
    }
  }

  for (int iter = 0; iter < cfg_.max_steps_per_primitive; ++iter) {
    cur = step(cur, targets);
    bool settled = true;
    for (const auto& [agent_id, target] : targets.per_agent) {
      const JointConfig& c = cur.agents[agent_id].config;
      for (size_t j = 0; j < target.values.size() && settled; ++j) {
        const Joint& joint = models_->get(cur.agents[agent_id].model_ref).joints[j];
        double want = std::clamp(target.values[j], joint.limit_lower,
                                 joint.limit_upper);
        if (c.values[j] != want) settled = false;
      }
      if (c.gripper != std::clamp(target.gripper, -1.0, 1.0)) settled = false;
      if (!settled) break;
    }
    if (settled) break;
  }

  // Post-motion primitive resolution.
  for (size_t slot = 0; slot < act.agents.size(); ++slot) {
    int agent_id = act.agents[slot];
    const AgentState& a = cur.agents[agent_id];
    const RobotModel& model = models_->get(a.model_ref);
    Pose tcp = forward_kinematics(model, a.base_pose, a.config).tcp;

    if (act.primitive == Primitive::Grasp) {
      std::string nearest_id;
      double nearest_dist = std::numeric_limits<double>::infinity();
      std::string capture_id;
      double capture_dist = std::numeric_limits<double>::infinity();
      for (const auto& [id, obj] : cur.objects) {
        double d = point_shape_distance(tcp.translation, obj.shape, obj.pose);
        if (d < nearest_dist) {
          nearest_dist = d;
          nearest_id = id;
        }
        bool already_mine =
            (obj.attached_to && obj.attached_to->agent_id == agent_id) ||
            std::any_of(obj.secondary_contacts.begin(),
                        obj.secondary_contacts.end(),
                        [&](const Attachment& sc) {
                          return sc.agent_id == agent_id;
                        });
        if (d <= cfg_.grasp_capture_tol && !already_mine &&
            obj.graspable_width() <= model.gripper.max_width &&
            d < capture_dist) {
          capture_dist = d;
          capture_id = id;
        }
      }
      Event e;
      e.step = cur.step;
      if (!capture_id.empty()) {
        SceneObject& obj = cur.objects[capture_id];
        Attachment att{agent_id, tcp.inverse() * obj.pose};
        const char* role = "primary";
        if (!obj.attached_to) {
          obj.attached_to = att;
        } else {
          obj.secondary_contacts.push_back(att);
          role = "secondary";
        }
        e.kind = EventKind::GraspAttached;
        e.payload = Json{{"agent", agent_id},
                         {"object", capture_id},
                         {"role", role},
                         {"distance_m", capture_dist}};
      } else {
        e.kind = EventKind::GraspMissed;
        e.payload = Json{{"agent", agent_id},
                         {"nearest_object", nearest_id},
                         {"distance_m", nearest_dist}};
      }
      cur.events.push_back(e);
    } else if (act.primitive == Primitive::Release) {
      for (auto& [id, obj] : cur.objects) {
        // Secondary contact by this agent simply lets go.
        obj.secondary_contacts.erase(
            std::remove_if(obj.secondary_contacts.begin(),
                           obj.secondary_contacts.end(),
                           [&](const Attachment& sc) {
                             return sc.agent_id == agent_id;
                           }),
            obj.secondary_contacts.end());
        if (!obj.attached_to || obj.attached_to->agent_id != agent_id) {
          continue;
        }
        obj.attached_to.reset();
        Event e;
        e.step = cur.step;
        e.kind = EventKind::Released;
        Json payload{{"agent", agent_id}, {"object", id}};
        if (!obj.secondary_contacts.empty()) {
          // Handover: the first remaining contact becomes the new primary.
          obj.attached_to = obj.secondary_contacts.front();
          obj.secondary_contacts.erase(obj.secondary_contacts.begin());
          payload["promoted_to"] = obj.attached_to->agent_id;
        } else {
          settle_release(cur, obj, payload);
        }
        e.payload = payload;
        cur.events.push_back(e);
      }
    }
  }

  PrimitiveOutcome out;
  out.events.assign(cur.events.begin() + static_cast<long>(base_events),
                    cur.events.end());
  for (size_t i = 0; i < cur.agents.size(); ++i) {
    out.end_configs[static_cast<int>(i)] = cur.agents[i].config;
  }
  out.scene = std::move(cur);
  return out;
}

void World::settle_release(SceneState& scene, SceneObject& obj,
                           Json& payload) const {
  // Open container first: a release with the object's bottom near or above
  // an uncovered rim, footprint inside the opening, drops it to the floor.
  for (const auto& [cid, cont] : scene.objects) {
    if (!cont.is_container || cid == obj.id) continue;
    double opening = 0.0, dummy = 0.0;
    footprint(cont, opening, dummy);
    Vec3 d = obj.pose.translation - cont.pose.translation;
    if (std::hypot(d.x(), d.y()) > opening * 0.75) continue;
    double rim = cont.top_z();
    if (obj.bottom_z() < cont.bottom_z() ||
        obj.bottom_z() > rim + cfg_.container_insert_tol) {
      continue;
    }
    bool covered = false;
    for (const auto& [oid, other] : scene.objects) {
      if (oid == cid || oid == obj.id || other.attached_to) continue;
      if (xy_over(cont, other.pose.translation) &&
          std::abs(other.bottom_z() - rim) < 0.02) {
        covered = true;
        break;
      }
    }
    if (covered) continue;
    double floor = cont.bottom_z() + 0.01;  // interior floor above the base
    obj.pose.translation.z() = floor + obj.shape.rest_half_height();
    payload["placed_in"] = cid;
    return;
  }

  // Otherwise snap to the closest support when within snap_tol.
  double support = 0.0;
  for (const auto& [oid, other] : scene.objects) {
    if (oid == obj.id) continue;
    if (other.is_container) continue;  // rims handled above
    if (xy_over(other, obj.pose.translation) &&
        other.top_z() <= obj.bottom_z() + cfg_.snap_tol) {
      support = std::max(support, other.top_z());
    }
  }
  if (std::abs(obj.bottom_z() - support) <= cfg_.snap_tol) {
    obj.pose.translation.z() = support + obj.shape.rest_half_height();
    payload["rested_on"] = support;
  }
}

Vec3 CameraParams::position() const {
  return center + radius * Vec3(std::cos(pitch) * std::cos(yaw),
                                std::cos(pitch) * std::sin(yaw),
                                std::sin(pitch));
}

ViewObservation World::observe(const SceneState& scene,
                               const CameraParams& camera) const {
  if (camera.radius <= 0.0) {
    throw EngineError(EngineError::Kind::ParamRange,
                      "observe: camera radius must be positive");
  }
  ViewObservation out;
  out.camera = camera;
  const Vec3 origin = camera.position();

  std::vector<std::vector<Capsule>> arm_capsules;
  for (const AgentState& a : scene.agents) {
    arm_capsules.push_back(
        link_capsules_world(models_->get(a.model_ref), a.base_pose, a.config));
    out.agent_tcps.push_back(
        forward_kinematics(models_->get(a.model_ref), a.base_pose, a.config)
            .tcp);
  }

  for (const auto& [id, obj] : scene.objects) {
    const Vec3 c = obj.pose.translation;
    Vec3 dir = c - origin;
    if (dir.norm() < 1e-9) dir = Vec3(0, 0, -1);
    dir.normalize();
    // Two directions spanning the plane normal to the view ray.
    Vec3 up = std::abs(dir.z()) > 0.99 ? Vec3(1, 0, 0) : Vec3(0, 0, 1);
    Vec3 u = dir.cross(up).normalized();
    Vec3 v = dir.cross(u).normalized();
    double rho = 0.5 * obj.shape.bounding_radius();
    const Vec3 samples[5] = {c, c + rho * u, c - rho * u, c + rho * v,
                             c - rho * v};

    int blocked = 0;
    for (const Vec3& p : samples) {
      bool hit = false;
      for (const auto& [oid, other] : scene.objects) {
        if (oid == id) continue;
        if (segment_hits_shape(origin, p, other.shape, other.pose)) {
          hit = true;
          break;
        }
      }
      for (size_t ai = 0; ai < arm_capsules.size() && !hit; ++ai) {
        for (const Capsule& cap : arm_capsules[ai]) {
          if (segment_hits_capsule(origin, p, cap)) {
            hit = true;
            break;
          }
        }
      }
      if (hit) ++blocked;
    }
    double fraction = static_cast<double>(blocked) / 5.0;
    if (fraction < 1.0) {
      out.visible.push_back(VisibleObject{id, obj.pose, fraction});
    }
  }
  return out;
}

AggregatedObservation World::aggregate_views(
    const SceneState& scene, const std::vector<CameraParams>& cameras,
    int max_views) const {
  if (static_cast<int>(cameras.size()) > max_views) {
    throw EngineError(EngineError::Kind::TooManyViews,
                      "aggregate_views: " + std::to_string(cameras.size()) +
                          " cameras exceed the budget of " +
                          std::to_string(max_views));
  }
  AggregatedObservation out;
  std::vector<ViewObservation> views;
  views.reserve(cameras.size());
  for (const CameraParams& cam : cameras) views.push_back(observe(scene, cam));

  for (const auto& [id, obj] : scene.objects) {
    AggregatedObservation::Entry entry;
    for (size_t k = 0; k < views.size(); ++k) {
      for (const VisibleObject& vis : views[k].visible) {
        if (vis.object_id == id) {
          if (entry.seen_in_views.empty()) entry.pose = vis.pose;
          // View numbers are 1-based: "view 1" is the first camera.
          entry.seen_in_views.push_back(static_cast<int>(k) + 1);
          break;
        }
      }
    }
    if (entry.seen_in_views.empty()) {
      out.unresolved.push_back(id);
    } else {
      out.per_object[id] = entry;
    }
  }
  return out;
}

// --- serialization ---------------------------------------------------------

Json event_to_json(const Event& e) {
  return Json{{"step", e.step},
              {"kind", event_kind_name(e.kind)},
              {"payload", e.payload}};
}

Event event_from_json(const Json& j, const std::string& where) {
  Event e;
  e.step = static_cast<int>(require_number(j, "step", where));
  e.kind = event_kind_from_name(require_string(j, "kind", where));
  e.payload = j.contains("payload") ? j["payload"] : Json::object();
  return e;
}

Json scene_to_json(const SceneState& scene) {
  Json j;
  j["step"] = scene.step;
  j["rng_seed"] = scene.rng_seed;
  Json objects = Json::object();
  for (const auto& [id, obj] : scene.objects) {
    Json jo;
    jo["name"] = obj.name;
    jo["description"] = obj.description;
    jo["pose"] = pose_to_json(obj.pose);
    jo["shape"] = shape_to_json(obj.shape);
    jo["physical"] = Json{{"mass", obj.physical.mass},
                          {"friction", obj.physical.friction}};
    if (obj.attached_to) {
      jo["attached_to"] = Json{{"agent", obj.attached_to->agent_id},
                               {"offset", pose_to_json(obj.attached_to->grasp_offset)}};
    }
    if (!obj.secondary_contacts.empty()) {
      Json arr = Json::array();
      for (const Attachment& sc : obj.secondary_contacts) {
        arr.push_back(Json{{"agent", sc.agent_id},
                           {"offset", pose_to_json(sc.grasp_offset)}});
      }
      jo["secondary_contacts"] = arr;
    }
    if (obj.graspable_width_override) {
      jo["graspable_width"] = *obj.graspable_width_override;
    }
    if (obj.is_container) jo["container"] = true;
    objects[id] = jo;
  }
  j["objects"] = objects;
  Json agents = Json::array();
  for (const AgentState& a : scene.agents) {
    agents.push_back(Json{{"model", a.model_ref},
                          {"name", a.name},
                          {"role", a.role},
                          {"base_pose", pose_to_json(a.base_pose)},
                          {"config", a.config.values},
                          {"gripper", a.config.gripper}});
  }
  j["agents"] = agents;
  Json events = Json::array();
  for (const Event& e : scene.events) events.push_back(event_to_json(e));
  j["events"] = events;
  j["peak_clearance"] = scene.peak_clearance;
  j["contact_active"] = scene.contact_active;
  return j;
}

SceneState scene_from_json(const Json& j, const std::string& where) {
  SceneState scene;
  scene.step = static_cast<int>(require_number(j, "step", where));
  scene.rng_seed = require_field(j, "rng_seed", where).get<std::uint64_t>();
  const Json& objects = require_field(j, "objects", where);
  for (auto it = objects.begin(); it != objects.end(); ++it) {
    const Json& jo = it.value();
    std::string ow = where + ".objects." + it.key();
    SceneObject obj;
    obj.id = it.key();
    obj.name = jo.contains("name") ? jo["name"].get<std::string>() : obj.id;
    obj.description =
        jo.contains("description") ? jo["description"].get<std::string>() : "";
    obj.pose = pose_from_json(require_field(jo, "pose", ow), ow + ".pose");
    obj.shape = shape_from_json(require_field(jo, "shape", ow), ow + ".shape");
    if (jo.contains("physical")) {
      obj.physical.mass = require_number(jo["physical"], "mass", ow);
      obj.physical.friction = require_number(jo["physical"], "friction", ow);
    }
    if (jo.contains("attached_to")) {
      obj.attached_to = Attachment{
          static_cast<int>(require_number(jo["attached_to"], "agent", ow)),
          pose_from_json(require_field(jo["attached_to"], "offset", ow),
                         ow + ".offset")};
    }
    if (jo.contains("secondary_contacts")) {
      for (const Json& sc : jo["secondary_contacts"]) {
        obj.secondary_contacts.push_back(Attachment{
            static_cast<int>(require_number(sc, "agent", ow)),
            pose_from_json(require_field(sc, "offset", ow), ow + ".offset")});
      }
    }
    if (jo.contains("graspable_width")) {
      obj.graspable_width_override = jo["graspable_width"].get<double>();
    }
    if (jo.contains("container")) obj.is_container = jo["container"].get<bool>();
    scene.objects[obj.id] = obj;
  }
  const Json& agents = require_field(j, "agents", where);
  for (const Json& ja : agents) {
    AgentState a;
    a.model_ref = require_string(ja, "model", where + ".agents");
    a.name = ja.contains("name") ? ja["name"].get<std::string>() : "";
    a.role = ja.contains("role") ? ja["role"].get<std::string>() : "";
    a.base_pose = pose_from_json(require_field(ja, "base_pose", where),
                                 where + ".base_pose");
    a.config.values = ja.at("config").get<std::vector<double>>();
    a.config.gripper = require_number(ja, "gripper", where + ".agents");
    scene.agents.push_back(a);
  }
  if (j.contains("events")) {
    for (const Json& je : j["events"]) {
      scene.events.push_back(event_from_json(je, where + ".events"));
    }
  }
  if (j.contains("peak_clearance")) {
    scene.peak_clearance =
        j["peak_clearance"].get<std::map<std::string, double>>();
  }
  if (j.contains("contact_active")) {
    scene.contact_active =
        j["contact_active"].get<std::map<std::string, bool>>();
  }
  return scene;
}

Json view_observation_to_json(const ViewObservation& view) {
  Json visible = Json::array();
  for (const VisibleObject& v : view.visible) {
    visible.push_back(Json{{"object_id", v.object_id},
                           {"pose", pose_to_json(v.pose)},
                           {"occluded_fraction", v.occluded_fraction}});
  }
  Json tcps = Json::array();
  for (const Pose& p : view.agent_tcps) tcps.push_back(pose_to_json(p));
  return Json{{"camera", camera_to_json(view.camera)},
              {"visible", visible},
              {"agent_tcps", tcps}};
}

Json aggregated_observation_to_json(const AggregatedObservation& agg) {
  Json per_object = Json::object();
  for (const auto& [id, entry] : agg.per_object) {
    per_object[id] = Json{{"pose", pose_to_json(entry.pose)},
                          {"seen_in_views", entry.seen_in_views}};
  }
  return Json{{"per_object", per_object}, {"unresolved", agg.unresolved}};
}

Json structured_state_json(const World& world, const SceneState& scene) {
  Json robots = Json::array();
  for (size_t i = 0; i < scene.agents.size(); ++i) {
    const AgentState& a = scene.agents[i];
    Pose tcp = world.agent_tcp(scene, static_cast<int>(i));
    Vec3 rpy = tcp.rpy();
    robots.push_back(Json{
        {"robot_id", i},
        {"name", a.name},
        {"type", a.model_ref},
        {"role", a.role},
        {"position", vec3_to_json(tcp.translation)},
        {"orientation", quat_to_json(tcp.rotation)},
        {"euler_rpy", vec3_to_json(rpy)},
        {"gripper", a.config.gripper},
    });
  }
  Json objects = Json::object();
  for (const auto& [id, obj] : scene.objects) {
    Vec3 rpy = obj.pose.rpy();
    Json jo{
        {"name", obj.name},
        {"position", vec3_to_json(obj.pose.translation)},
        {"orientation", quat_to_json(obj.pose.rotation)},
        {"euler_rpy", vec3_to_json(rpy)},
        {"size", shape_to_json(obj.shape)},
    };
    jo["attached_to"] =
        obj.attached_to ? Json(obj.attached_to->agent_id) : Json(nullptr);
    objects[id] = jo;
  }
  return Json{{"step", scene.step}, {"robots", robots}, {"objects", objects}};
}

}  // namespace coenv
