#pragma once

// Deterministic kinematic multi-agent world: scene state, joint-space
// stepping with rate limiting, primitive execution (IK + grasp bookkeeping),
// and occlusion-aware structured observation.

#include "coenv/plan.hpp"
#include "coenv/robot.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace coenv {

struct Physical {
  double mass = 0.1;      // kg; stored for export, unused by kinematics
  double friction = 0.5;
};

struct Attachment {
  int agent_id = -1;
  Pose grasp_offset;  // TCP frame -> object frame at capture time
};

struct SceneObject {
  std::string id;
  std::string name;         // human label shown to planners
  std::string description;
  Pose pose;
  Shape shape;
  Physical physical;
  std::optional<Attachment> attached_to;        // primary grasp
  std::vector<Attachment> secondary_contacts;   // extra arms on the object
  std::optional<double> graspable_width_override;
  bool is_container = false;  // open-topped; objects can rest inside

  double graspable_width() const {
    return graspable_width_override ? *graspable_width_override
                                    : shape.default_graspable_width();
  }
  /// z of the lowest point, assuming the object is upright.
  double bottom_z() const { return pose.translation.z() - shape.rest_half_height(); }
  double top_z() const { return pose.translation.z() + shape.rest_half_height(); }
};

struct AgentState {
  std::string model_ref;  // name in the ModelLibrary
  std::string name;
  std::string role;
  Pose base_pose;
  JointConfig config;
};

enum class EventKind {
  GraspAttached,
  GraspMissed,
  Released,
  Dropped,
  InterAgentContact,
  ReachLimit,
};

const char* event_kind_name(EventKind k);
EventKind event_kind_from_name(const std::string& name);

struct Event {
  int step = 0;
  EventKind kind = EventKind::GraspAttached;
  Json payload;  // structured detail, kind-specific
};

/// Immutable scene value.  Stepping returns a new state; `events` is
/// append-only and `step` strictly increases.  peak_clearance and
/// contact_active are derived trackers maintained by step() so milestone
/// predicates stay pure functions of a single state.
struct SceneState {
  int step = 0;
  std::map<std::string, SceneObject> objects;
  std::vector<AgentState> agents;
  std::vector<Event> events;
  std::uint64_t rng_seed = 0;
  std::map<std::string, double> peak_clearance;   // object id -> max bottom z
  std::map<std::string, bool> contact_active;     // "i:j" -> in contact now
};

struct JointAction {
  std::map<int, JointConfig> per_agent;  // absent agents hold position
};

struct WorldConfig {
  double max_joint_step = 0.05;      // rad per joint per step
  double grasp_capture_tol = 0.03;   // m, TCP to object surface
  double snap_tol = 0.01;            // m, release z-snap to support
  double drop_tol = 0.02;            // m, secondary-contact drift
  double contact_touch_tol = 0.005;  // m, inter-agent contact onset
  double contact_release_tol = 0.015;  // m, contact considered broken
  double container_insert_tol = 0.03;  // m above the rim that still inserts
  int max_steps_per_primitive = 2000;
};

struct PrimitiveOutcome {
  SceneState scene;
  std::vector<Event> events;             // events emitted by this element
  std::map<int, JointConfig> end_configs;  // every agent's config after
};

/// Structured render of the scene from one camera: per-object visibility by
/// ray casting against arm capsules and other objects.
struct VisibleObject {
  std::string object_id;
  Pose pose;
  double occluded_fraction = 0.0;  // of 5 sample rays; 1.0 entries excluded
};

struct ViewObservation {
  CameraParams camera;
  std::vector<VisibleObject> visible;
  std::vector<Pose> agent_tcps;
};

struct AggregatedObservation {
  struct Entry {
    Pose pose;
    std::vector<int> seen_in_views;  // 1-based view numbers, ascending
  };
  std::map<std::string, Entry> per_object;
  std::vector<std::string> unresolved;  // catalog objects never seen
};

class ModelLibrary {
public:
  void add(RobotModel model);
  bool has(const std::string& name) const;
  const RobotModel& get(const std::string& name) const;  // throws InvalidAgent
  /// Loads every *.json model in a directory.
  static ModelLibrary from_dir(const std::string& dir);

private:
  std::map<std::string, RobotModel> models_;
};

/// Binds a model library and tolerances; all methods are pure functions of
/// their SceneState argument.
class World {
public:
  World(const ModelLibrary& models, WorldConfig cfg = {});

  const WorldConfig& config() const { return cfg_; }
  const ModelLibrary& models() const { return *models_; }
  const RobotModel& model_of(const SceneState& scene, int agent_id) const;
  Pose agent_tcp(const SceneState& scene, int agent_id) const;

  /// One rate-limited step toward the commanded targets; attached objects
  /// follow their primary agent's TCP; drop and contact events are detected.
  SceneState step(const SceneState& scene, const JointAction& action) const;

  /// Runs one action element to completion: IK for the commanded agents,
  /// stepping until targets are reached, then grasp/release resolution.
  PrimitiveOutcome apply_primitive(const SceneState& scene,
                                   const PlanElement& element,
                                   const IkOptions& ik = {}) const;

  ViewObservation observe(const SceneState& scene,
                          const CameraParams& camera) const;

  /// Fuses up to `max_views` observations: each object takes its pose from
  /// the first view that sees it.  Throws TooManyViews.
  AggregatedObservation aggregate_views(const SceneState& scene,
                                        const std::vector<CameraParams>& cameras,
                                        int max_views = 6) const;

  /// Minimum capsule distance between two agents' bodies, counting objects
  /// held exclusively by one of them as part of that agent's body.
  double inter_agent_distance(const SceneState& scene, int a, int b) const;

  /// Distance between two objects' shapes (conservative for box-box).
  static double object_distance(const SceneObject& a, const SceneObject& b);

private:
  void settle_release(SceneState& scene, SceneObject& obj, Json& payload) const;

  const ModelLibrary* models_;
  WorldConfig cfg_;
};

/// Scene canonical JSON (used in knowledge records and episode logs).
Json scene_to_json(const SceneState& scene);
SceneState scene_from_json(const Json& j, const std::string& where);
Json event_to_json(const Event& e);
Event event_from_json(const Json& j, const std::string& where);

/// The numeric state block planners and scripts see: robots (TCP pose, rpy,
/// gripper) and objects (position, rpy, size, attachment).
Json structured_state_json(const World& world, const SceneState& scene);

/// Observation payloads embedded in planner requests.
Json view_observation_to_json(const ViewObservation& view);
Json aggregated_observation_to_json(const AggregatedObservation& agg);

}  // namespace coenv
