#pragma once

// Task specifications ("coenv-task/1"): robots, objects with sampling ranges,
// cameras, and ordered milestone predicates; plus scene instantiation and
// milestone evaluation.

#include "coenv/world.hpp"

#include <optional>
#include <string>
#include <vector>

namespace coenv {

struct TaskRobotSpec {
  int agent_id = 0;
  std::string model;  // ModelLibrary name
  std::string name;
  std::string role;
  Pose base_pose;
  JointConfig initial_config;
};

/// Uniform sampling offsets applied per trial to the object's initial pose.
struct PoseSampling {
  double dx_min = 0.0, dx_max = 0.0;
  double dy_min = 0.0, dy_max = 0.0;
  double dyaw_min = 0.0, dyaw_max = 0.0;
};

struct TaskObjectSpec {
  SceneObject object;  // id, name, shape, physical, initial pose
  std::optional<PoseSampling> sampling;
};

struct MilestoneSpec {
  std::string id;           // "S1", "S2", ...
  std::string description;
  Json conditions = Json::array();  // predicate objects, all must hold
};

struct TaskSpec {
  std::string id;
  std::string name;
  std::string description;
  std::string success_criteria;
  std::vector<std::string> hints;
  std::vector<TaskRobotSpec> robots;
  std::vector<TaskObjectSpec> objects;
  std::vector<CameraParams> cameras;
  std::vector<MilestoneSpec> milestones;
};

TaskSpec parse_task(const std::string& json_text);
TaskSpec load_task_file(const std::string& path);
/// Task ids available in a directory of *.json specs, sorted.
std::vector<std::string> list_tasks(const std::string& dir);
/// Loads `<dir>/<task_id>.json`; throws TaskNotFound.
TaskSpec load_task(const std::string& dir, const std::string& task_id);

TaskGoal task_goal(const TaskSpec& task);

/// Builds the trial's initial scene: robots at their bases and initial
/// configs, objects at sampled poses.  Sampling draws, in object order,
/// (dx, dy, dyaw) uniformly from each object's ranges, seeded by
/// trial_seed(seed, trial); objects without ranges consume no draws.
SceneState instantiate_scene(const TaskSpec& task, const ModelLibrary& models,
                             std::uint64_t seed, std::uint64_t trial);

struct MilestoneResult {
  std::string milestone_id;
  bool satisfied = false;
};

/// Evaluates milestones in order with prefix gating: S_i can only report
/// satisfied when S_{i-1} does.  Predicates are pure functions of the scene
/// (event history and peak trackers included).  Throws UnknownTask when the
/// task declares no milestones and MalformedPredicate for bad conditions.
std::vector<MilestoneResult> eval_milestones(const TaskSpec& task,
                                             const World& world,
                                             const SceneState& scene);

/// True when every condition in the array holds.  Exposed for checkpoint
/// evaluation, which shares the predicate vocabulary.
bool eval_conditions(const Json& conditions, const World& world,
                     const SceneState& scene, std::vector<std::string>* unmet);

}  // namespace coenv
