#pragma once

// Interactive mode: the closed-loop execute -> observe -> verify -> adapt
// cycle.  A planner agent drives execution element by element; checkpoints
// gate progress; failed verifications trigger bounded correction and replans.

#include "coenv/episode.hpp"

#include <functional>
#include <optional>

namespace coenv {

struct InteractiveConfig {
  double pos_check_tol = 0.02;   // m   (verification and checkpoint gates)
  double rot_check_tol = 0.1;    // rad
  int stuck_window = 3;
  double stuck_eps = 0.005;      // m of TCP motion
  int max_corrections_per_element = 3;
  int max_replans = 2;
  int j_max = 6;                 // planning-phase view budget
  double drift_correct_max = 0.05;  // m; auto-correct residuals up to this
};

/// Post-primitive verification V(element, before, after).
VerifyResult verify_outcome(const World& world, const PlanElement& element,
                            const SceneState& before, const SceneState& after,
                            const InteractiveConfig& cfg);

/// Checkpoint predicate.  Returns phi (0/1) plus a report listing each
/// condition with its measured value.  Throws MalformedPredicate.
struct CheckpointEval {
  int phi = 0;
  Json report;
};
CheckpointEval eval_checkpoint(const World& world, const PlanElement& ckpt,
                               const SceneState& scene,
                               const InteractiveConfig& cfg);

/// Stuck pattern: the last `stuck_window` actions of some agent each moved
/// its TCP less than `stuck_eps`.
struct ActionTrace {
  int agent_id = 0;
  double tcp_displacement = 0.0;
};
bool detect_stuck(const std::vector<ActionTrace>& history,
                  const InteractiveConfig& cfg);

/// Multi-round planning: loops RequestView -> observe -> planner until
/// PlanComplete, within the view budget.  Throws ViewBudgetExhausted and
/// PlannerUnavailable.
struct PlanningSessionResult {
  ExecutionPlan plan;
  std::vector<SubGoal> subgoals;
  int views_requested = 0;
  int planner_calls = 0;
};
PlanningSessionResult planning_session(const World& world,
                                       const TaskGoal& goal,
                                       const SceneState& scene,
                                       const std::vector<CameraParams>& cameras,
                                       PlannerAgent& planner, int j_max = 6);

/// Planner-mediated goal decomposition (Eq.-1-style convenience wrapper over
/// planning_session).  Throws MalformedResponse on an empty decomposition.
std::vector<SubGoal> decompose(const World& world, const TaskGoal& goal,
                               const SceneState& scene, PlannerAgent& planner);

/// Planner-mediated plan synthesis; the returned plan has passed
/// validate_plan.  Throws ValidationFailed with the issue list serialized
/// into the message.
ExecutionPlan assign(const World& world, const TaskGoal& goal,
                     const std::vector<SubGoal>& subgoals,
                     const SceneState& scene, PlannerAgent& planner);

/// Structural pre-flight: agent existence, param ranges, coarse reachability
/// of cumulative Move targets, checkpoint name uniqueness and condition
/// well-formedness.  Returns issues instead of throwing.
std::vector<Issue> validate_plan(const World& world, const ExecutionPlan& plan,
                                 const SceneState& scene);

/// Optional per-step observer for episode logging.
struct InteractiveHooks {
  std::function<void(const TrajectoryStep&)> on_step;
  std::function<void(const PlannerDecision&, const PlannerRequest&)> on_decision;
};

EpisodeResult run_interactive(const World& world, const TaskSpec& task,
                              const SceneState& scene0, PlannerAgent& planner,
                              const std::vector<CameraParams>& cameras,
                              const InteractiveConfig& cfg,
                              const IkOptions& ik = {},
                              const InteractiveHooks* hooks = nullptr);

}  // namespace coenv
