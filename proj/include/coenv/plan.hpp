#pragma once

// Plan vocabulary: goals, sub-goals, plan elements (actions and checkpoints),
// execution plans, and the planner-agent decision type.  Pure data; the
// executors and the world module consume these.

#include "coenv/geometry.hpp"
#include "coenv/json_util.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace coenv {

struct TaskGoal {
  std::string id;
  std::string description;
  std::string success_criteria;
  std::vector<std::string> hints;
};

struct SubGoal {
  int index = 0;  // 1-based, contiguous
  std::string description;
};

/// Orbit camera specification: the camera sits on a sphere of `radius`
/// around `center`, at azimuth `yaw` and elevation `pitch` (radians),
/// looking at the center.
struct CameraParams {
  double yaw = 0.0;
  double pitch = 1.3;
  double radius = 1.2;
  Vec3 center{0.0, 0.0, 0.1};

  Vec3 position() const;
};

enum class Primitive { Move, Rotate, Grasp, Release };

const char* primitive_name(Primitive p);
/// Accepts canonical upper-case names plus "PLACE" (alias for Release per the
/// engine's Move-then-Release realization).  Throws UnknownPrimitive.
Primitive primitive_from_name(const std::string& name);

/// One action: a primitive applied to one or more agents.  Param values hold
/// either a single scalar (broadcast to all agents) or one value per agent.
struct ActionElement {
  std::vector<int> agents;
  Primitive primitive = Primitive::Move;
  std::map<std::string, std::vector<double>> params;
  Json annotation;  // opaque planner metadata, carried through serialization

  /// Param for the agent at position `slot` in `agents`, honouring broadcast.
  double param(const std::string& key, size_t slot, double fallback) const;
};

enum class CheckpointType { Grasp, Lift, Handover, Place, Generic };

const char* checkpoint_type_name(CheckpointType t);
CheckpointType checkpoint_type_from_name(const std::string& name);

/// Verification gate.  `conditions` is a JSON array of predicate objects
/// evaluated by eval_checkpoint; see docs/FORMATS.md for the vocabulary.
struct CheckpointElement {
  std::string name;
  CheckpointType type = CheckpointType::Generic;
  Json conditions = Json::array();
  std::optional<CameraParams> recommended_view;
  std::string notes;
};

struct PlanElement {
  int index = 0;  // 1-based position within the plan
  std::variant<ActionElement, CheckpointElement> body;

  bool is_action() const { return std::holds_alternative<ActionElement>(body); }
  const ActionElement& action() const { return std::get<ActionElement>(body); }
  const CheckpointElement& checkpoint() const {
    return std::get<CheckpointElement>(body);
  }
};

struct PlanProvenance {
  std::string planner_id;
  int round = 0;
};

struct ExecutionPlan {
  std::string goal_id;
  std::vector<PlanElement> elements;
  std::string key_observations;
  PlanProvenance provenance;
};

/// Actions a planner emits for the current plan element.  `step_done[i]`
/// marks whether action i completes the element.
struct NextActions {
  std::vector<ActionElement> actions;
  std::vector<bool> step_done;
};

/// One planner reply; exactly one variant is meaningful for `kind`.
struct PlannerDecision {
  enum class Kind { RequestView, PlanComplete, NextActions, Replan };

  Kind kind = Kind::Replan;
  // RequestView
  CameraParams view;
  std::string reason;
  // PlanComplete
  std::vector<SubGoal> subgoals;
  ExecutionPlan plan;
  // NextActions
  NextActions next;
};

/// What the engine sends a planner.  structured_state carries the full
/// numeric scene block; observation the latest rendered view; plan_progress
/// the execution cursor plus any verification/checkpoint feedback.  This is
/// also the wire request body ("coenv-planner/1").
struct PlannerRequest {
  std::string phase;  // "planning" | "execution"
  TaskGoal goal;
  Json structured_state;
  Json observation;
  Json plan_progress;
  int round = 0;
};

class PlannerAgent {
public:
  virtual ~PlannerAgent() = default;
  virtual std::string id() const = 0;
  /// One decision per call.  Planning phase must answer RequestView or
  /// PlanComplete; execution phase NextActions or Replan (RequestView is
  /// honoured there too, budget permitting).
  virtual PlannerDecision decide(const PlannerRequest& request) = 0;
};

struct Issue {
  std::string code;     // e.g. "InvalidAgent", "ParamRange", "WorkspaceExceeded"
  int element_index = 0;
  std::string detail;
};

// --- serialization ---------------------------------------------------------

Json action_to_json(const ActionElement& a);
ActionElement action_from_json(const Json& j, const std::string& where);
Json plan_element_to_json(const PlanElement& e);
PlanElement plan_element_from_json(const Json& j, const std::string& where);

/// Canonical plan document ("coenv-plan/1").  parse(serialize(p)) == p and
/// serialize(parse(text)) is byte-stable.
std::string serialize_plan(const ExecutionPlan& plan);
ExecutionPlan parse_plan(const std::string& json_text);

Json camera_to_json(const CameraParams& c);
CameraParams camera_from_json(const Json& j, const std::string& where);

/// Parses the tagged-block planner response format: a `<next_action>` block
/// holding either a CAMERA_ORBIT request or PLANNING_COMPLETE followed by
/// `<key_observations>`, optional `<subgoals>`, and `<execution_plan>` (JSON
/// array of plan elements); or, in the execution phase, an `<action>` block
/// holding one action object or an array of them ({"type", "params",
/// "step_done"}, agent_id inside params).  Throws MalformedResponse with the
/// raw text attached.
PlannerDecision parse_planner_response(const std::string& text,
                                       const std::string& phase);

}  // namespace coenv
