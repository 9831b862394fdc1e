#include "coenv/task.hpp"

#include "coenv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace coenv {

namespace {

[[noreturn]] void bad_predicate(const std::string& why) {
  throw EngineError(EngineError::Kind::MalformedPredicate, why);
}

const SceneObject& predicate_object(const SceneState& scene, const Json& c,
                                    const char* field = "object") {
  if (!c.contains(field) || !c[field].is_string()) {
    bad_predicate("predicate lacks string field '" + std::string(field) +
                  "': " + c.dump());
  }
  const std::string id = c[field].get<std::string>();
  auto it = scene.objects.find(id);
  if (it == scene.objects.end()) {
    bad_predicate("predicate references unknown object '" + id + "'");
  }
  return it->second;
}

/// Highest support surface under the object's XY position: the table (z = 0)
/// or the top of any other object whose upright footprint contains it.
double support_under(const SceneState& scene, const SceneObject& obj) {
  double support = 0.0;
  for (const auto& [oid, other] : scene.objects) {
    if (oid == obj.id) continue;
    double hx = 0.0, hy = 0.0;
    switch (other.shape.type) {
      case ShapeType::Box:
        hx = 0.5 * other.shape.size[0];
        hy = 0.5 * other.shape.size[1];
        break;
      case ShapeType::Cylinder:
      case ShapeType::Sphere:
        hx = hy = other.shape.size[0];
        break;
    }
    if (std::abs(obj.pose.translation.x() - other.pose.translation.x()) <= hx &&
        std::abs(obj.pose.translation.y() - other.pose.translation.y()) <= hy &&
        other.top_z() <= obj.bottom_z() + 1e-6) {
      support = std::max(support, other.top_z());
    }
  }
  return support;
}

bool eval_one(const Json& c, const World& world, const SceneState& scene,
              std::string* why) {
  if (!c.is_object() || !c.contains("kind") || !c["kind"].is_string()) {
    bad_predicate("condition must be an object with a 'kind': " + c.dump());
  }
  const std::string kind = c["kind"].get<std::string>();

  if (kind == "attached") {
    const SceneObject& obj = predicate_object(scene, c);
    if (!obj.attached_to) {
      *why = obj.id + " is not attached";
      return false;
    }
    if (c.contains("agent") &&
        obj.attached_to->agent_id != c["agent"].get<int>()) {
      *why = obj.id + " is attached to agent " +
             std::to_string(obj.attached_to->agent_id) + ", not " +
             c["agent"].dump();
      return false;
    }
    return true;
  }

  if (kind == "detached") {
    const SceneObject& obj = predicate_object(scene, c);
    if (obj.attached_to || !obj.secondary_contacts.empty()) {
      *why = obj.id + " is still held";
      return false;
    }
    return true;
  }

  if (kind == "ever_grasped") {
    const SceneObject& obj = predicate_object(scene, c);
    for (const Event& e : scene.events) {
      if (e.kind != EventKind::GraspAttached) continue;
      if (e.payload.value("object", std::string()) != obj.id) continue;
      if (c.contains("agent") && e.payload.value("agent", -1) != c["agent"].get<int>()) {
        continue;
      }
      return true;
    }
    *why = obj.id + " was never grasped" +
           (c.contains("agent") ? " by agent " + c["agent"].dump() : "");
    return false;
  }

  if (kind == "clearance" || kind == "peak_clearance") {
    const SceneObject& obj = predicate_object(scene, c);
    if (!c.contains("min") || !c["min"].is_number()) {
      bad_predicate("'" + kind + "' needs a numeric 'min'");
    }
    double min_z = c["min"].get<double>();
    double z = obj.bottom_z();
    if (kind == "peak_clearance") {
      auto it = scene.peak_clearance.find(obj.id);
      if (it != scene.peak_clearance.end()) z = it->second;
    }
    if (z < min_z) {
      *why = obj.id + " " + kind + " " + std::to_string(z) + " < " +
             std::to_string(min_z);
      return false;
    }
    return true;
  }

  if (kind == "stacked_on") {
    const SceneObject& obj = predicate_object(scene, c);
    const SceneObject& base = predicate_object(scene, c, "base");
    double xy_tol = c.value("xy_tol", 0.015);
    double z_gap_tol = c.value("z_gap_tol", 0.005);
    double dx = obj.pose.translation.x() - base.pose.translation.x();
    double dy = obj.pose.translation.y() - base.pose.translation.y();
    if (std::hypot(dx, dy) > xy_tol) {
      *why = obj.id + " is off-centre of " + base.id + " by " +
             std::to_string(std::hypot(dx, dy)) + " m";
      return false;
    }
    double gap = obj.bottom_z() - base.top_z();
    if (std::abs(gap) > z_gap_tol) {
      *why = obj.id + " z-gap over " + base.id + " is " + std::to_string(gap);
      return false;
    }
    return true;
  }

  if (kind == "near_xy") {
    const SceneObject& obj = predicate_object(scene, c);
    double tx = 0.0, ty = 0.0;
    if (c.contains("target")) {
      Vec3 t(0, 0, 0);
      const Json& jt = c["target"];
      if (!jt.is_array() || jt.size() < 2) {
        bad_predicate("'near_xy' target must be [x, y]");
      }
      tx = jt[0].get<double>();
      ty = jt[1].get<double>();
      (void)t;
    } else if (c.contains("other")) {
      const SceneObject& other = predicate_object(scene, c, "other");
      tx = other.pose.translation.x();
      ty = other.pose.translation.y();
    } else {
      bad_predicate("'near_xy' needs 'target' or 'other'");
    }
    double tol = c.value("tol", 0.05);
    double d = std::hypot(obj.pose.translation.x() - tx,
                          obj.pose.translation.y() - ty);
    if (d > tol) {
      *why = obj.id + " is " + std::to_string(d) + " m from the XY target";
      return false;
    }
    return true;
  }

  if (kind == "resting") {
    const SceneObject& obj = predicate_object(scene, c);
    double tol = c.value("z_tol", 0.01);
    double gap = obj.bottom_z() - support_under(scene, obj);
    if (std::abs(gap) > tol) {
      *why = obj.id + " floats " + std::to_string(gap) + " m above support";
      return false;
    }
    return true;
  }

  if (kind == "in_container") {
    const SceneObject& obj = predicate_object(scene, c);
    const SceneObject& cont = predicate_object(scene, c, "container");
    double opening = cont.shape.type == ShapeType::Box
                         ? 0.5 * std::min(cont.shape.size[0], cont.shape.size[1])
                         : cont.shape.size[0];
    double dx = obj.pose.translation.x() - cont.pose.translation.x();
    double dy = obj.pose.translation.y() - cont.pose.translation.y();
    if (std::hypot(dx, dy) > opening) {
      *why = obj.id + " is outside " + cont.id + "'s opening";
      return false;
    }
    if (obj.bottom_z() < cont.bottom_z() - 1e-6 ||
        obj.bottom_z() > cont.top_z()) {
      *why = obj.id + " is not inside " + cont.id + " vertically";
      return false;
    }
    return true;
  }

  if (kind == "contact_events") {
    if (!c.contains("a") || !c.contains("b")) {
      bad_predicate("'contact_events' needs agent fields 'a' and 'b'");
    }
    int a = c["a"].get<int>();
    int b = c["b"].get<int>();
    if (a > b) std::swap(a, b);
    int min_count = c.value("min_count", 1);
    int count = 0;
    for (const Event& e : scene.events) {
      if (e.kind != EventKind::InterAgentContact) continue;
      const Json& agents = e.payload["agents"];
      if (agents.is_array() && agents.size() == 2 &&
          agents[0].get<int>() == a && agents[1].get<int>() == b) {
        ++count;
      }
    }
    if (count < min_count) {
      *why = "only " + std::to_string(count) + " contact events between agents " +
             std::to_string(a) + " and " + std::to_string(b) + " (need " +
             std::to_string(min_count) + ")";
      return false;
    }
    return true;
  }

  (void)world;
  bad_predicate("unknown condition kind '" + kind + "'");
}

SceneObject parse_task_object(const Json& j, const std::string& where) {
  SceneObject obj;
  obj.id = require_string(j, "id", where);
  obj.name = j.contains("name") ? j["name"].get<std::string>() : obj.id;
  obj.description =
      j.contains("description") ? j["description"].get<std::string>() : "";
  obj.shape = shape_from_json(require_field(j, "shape", where), where + ".shape");
  obj.pose = pose_from_json(require_field(j, "pose", where), where + ".pose");
  if (j.contains("physical")) {
    obj.physical.mass = require_number(j["physical"], "mass", where);
    obj.physical.friction = require_number(j["physical"], "friction", where);
  }
  if (j.contains("graspable_width")) {
    obj.graspable_width_override = j["graspable_width"].get<double>();
  }
  if (j.contains("container")) obj.is_container = j["container"].get<bool>();
  return obj;
}

std::optional<PoseSampling> parse_sampling(const Json& j,
                                           const std::string& where) {
  if (!j.contains("sampling")) return std::nullopt;
  const Json& s = j["sampling"];
  PoseSampling p;
  auto range = [&](const char* key, double& lo, double& hi) {
    if (!s.contains(key)) return;
    const Json& r = s[key];
    if (!r.is_array() || r.size() != 2) {
      throw EngineError(EngineError::Kind::SerializationError,
                        where + ".sampling." + key + " must be [min, max]");
    }
    lo = r[0].get<double>();
    hi = r[1].get<double>();
    if (hi < lo) {
      throw EngineError(EngineError::Kind::SerializationError,
                        where + ".sampling." + key + " has max < min");
    }
  };
  range("dx", p.dx_min, p.dx_max);
  range("dy", p.dy_min, p.dy_max);
  range("dyaw", p.dyaw_min, p.dyaw_max);
  return p;
}

}  // namespace

TaskSpec parse_task(const std::string& json_text) {
  Json j = parse_json(json_text, "task");
  require_schema(j, "coenv-task/1");
  TaskSpec task;
  task.id = require_string(j, "id", "task");
  task.name = j.value("name", task.id);
  task.description = require_string(j, "description", "task");
  task.success_criteria = j.value("success_criteria", std::string());
  if (j.contains("hints")) {
    for (const Json& h : j["hints"]) task.hints.push_back(h.get<std::string>());
  }

  const Json& robots = require_field(j, "robots", "task");
  int idx = 0;
  for (const Json& jr : robots) {
    std::string where = "task.robots[" + std::to_string(idx) + "]";
    TaskRobotSpec r;
    r.agent_id = static_cast<int>(require_number(jr, "agent_id", where));
    if (r.agent_id != idx) {
      throw EngineError(EngineError::Kind::SerializationError,
                        where + ": agent_id must equal position (" +
                            std::to_string(idx) + ")");
    }
    r.model = require_string(jr, "model", where);
    r.name = jr.value("name", r.model);
    r.role = jr.value("role", std::string());
    r.base_pose = pose_from_json(require_field(jr, "base_pose", where),
                                 where + ".base_pose");
    r.initial_config.values =
        require_field(jr, "initial_config", where).get<std::vector<double>>();
    r.initial_config.gripper = jr.value("initial_gripper", 1.0);
    task.robots.push_back(std::move(r));
    ++idx;
  }
  if (task.robots.empty()) {
    throw EngineError(EngineError::Kind::SerializationError,
                      "task: at least one robot required");
  }

  const Json& objects = require_field(j, "objects", "task");
  idx = 0;
  for (const Json& jo : objects) {
    std::string where = "task.objects[" + std::to_string(idx) + "]";
    TaskObjectSpec spec;
    spec.object = parse_task_object(jo, where);
    spec.sampling = parse_sampling(jo, where);
    task.objects.push_back(std::move(spec));
    ++idx;
  }

  if (j.contains("cameras")) {
    idx = 0;
    for (const Json& jc : j["cameras"]) {
      task.cameras.push_back(
          camera_from_json(jc, "task.cameras[" + std::to_string(idx) + "]"));
      ++idx;
    }
  }

  if (j.contains("milestones")) {
    idx = 0;
    for (const Json& jm : j["milestones"]) {
      std::string where = "task.milestones[" + std::to_string(idx) + "]";
      MilestoneSpec m;
      m.id = require_string(jm, "id", where);
      m.description = jm.value("description", std::string());
      m.conditions = require_field(jm, "conditions", where);
      if (!m.conditions.is_array() || m.conditions.empty()) {
        throw EngineError(EngineError::Kind::SerializationError,
                          where + ": 'conditions' must be a non-empty array");
      }
      task.milestones.push_back(std::move(m));
      ++idx;
    }
  }
  return task;
}

TaskSpec load_task_file(const std::string& path) {
  return parse_task(read_text_file(path));
}

std::vector<std::string> list_tasks(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> ids;
  if (!fs::is_directory(dir)) {
    throw EngineError(EngineError::Kind::IoError,
                      "task directory '" + dir + "' does not exist");
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") {
      ids.push_back(entry.path().stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

TaskSpec load_task(const std::string& dir, const std::string& task_id) {
  namespace fs = std::filesystem;
  fs::path path = fs::path(dir) / (task_id + ".json");
  if (!fs::exists(path)) {
    throw EngineError(EngineError::Kind::TaskNotFound,
                      "no task '" + task_id + "' in " + dir);
  }
  TaskSpec task = load_task_file(path.string());
  if (task.id != task_id) {
    throw EngineError(EngineError::Kind::TaskNotFound,
                      "file " + path.string() + " declares id '" + task.id +
                          "', expected '" + task_id + "'");
  }
  return task;
}

TaskGoal task_goal(const TaskSpec& task) {
  TaskGoal goal;
  goal.id = task.id;
  goal.description = task.description;
  goal.success_criteria = task.success_criteria;
  goal.hints = task.hints;
  return goal;
}

SceneState instantiate_scene(const TaskSpec& task, const ModelLibrary& models,
                             std::uint64_t seed, std::uint64_t trial) {
  SceneState scene;
  scene.rng_seed = trial_seed(seed, trial);
  std::mt19937_64 rng(scene.rng_seed);

  // Draw order is part of the contract: per object, in spec order, dx then
  // dy then dyaw; objects without sampling ranges consume no draws.
  for (const TaskObjectSpec& spec : task.objects) {
    SceneObject obj = spec.object;
    if (spec.sampling) {
      const PoseSampling& s = *spec.sampling;
      double dx = uniform_range(rng, s.dx_min, s.dx_max);
      double dy = uniform_range(rng, s.dy_min, s.dy_max);
      double dyaw = uniform_range(rng, s.dyaw_min, s.dyaw_max);
      obj.pose.translation.x() += dx;
      obj.pose.translation.y() += dy;
      obj.pose.rotation = canonical_quat(
          Pose::rotation_about(Vec3(0, 0, 1), dyaw).rotation * obj.pose.rotation);
    }
    scene.peak_clearance[obj.id] = obj.bottom_z();
    scene.objects[obj.id] = std::move(obj);
  }

  for (const TaskRobotSpec& r : task.robots) {
    const RobotModel& model = models.get(r.model);
    if (r.initial_config.values.size() != model.joints.size()) {
      throw EngineError(EngineError::Kind::DimensionMismatch,
                        "task robot " + std::to_string(r.agent_id) +
                            ": initial_config has " +
                            std::to_string(r.initial_config.values.size()) +
                            " values, model '" + model.name + "' has " +
                            std::to_string(model.joints.size()) + " joints");
    }
    AgentState a;
    a.model_ref = r.model;
    a.name = r.name;
    a.role = r.role;
    a.base_pose = r.base_pose;
    a.config = r.initial_config;
    scene.agents.push_back(std::move(a));
  }
  return scene;
}

bool eval_conditions(const Json& conditions, const World& world,
                     const SceneState& scene, std::vector<std::string>* unmet) {
  if (!conditions.is_array()) {
    bad_predicate("conditions must be a JSON array");
  }
  bool all = true;
  for (const Json& c : conditions) {
    std::string why;
    if (!eval_one(c, world, scene, &why)) {
      all = false;
      if (unmet) unmet->push_back(why);
    }
  }
  return all;
}

std::vector<MilestoneResult> eval_milestones(const TaskSpec& task,
                                             const World& world,
                                             const SceneState& scene) {
  if (task.milestones.empty()) {
    throw EngineError(EngineError::Kind::UnknownTask,
                      "task '" + task.id + "' declares no milestones");
  }
  std::vector<MilestoneResult> results;
  bool prefix_ok = true;
  for (const MilestoneSpec& m : task.milestones) {
    bool raw = eval_conditions(m.conditions, world, scene, nullptr);
    bool satisfied = prefix_ok && raw;
    results.push_back(MilestoneResult{m.id, satisfied});
    prefix_ok = satisfied;
  }
  return results;
}

}  // namespace coenv
