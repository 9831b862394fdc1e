#pragma once

// Episode-level types shared by both executors, the transfer stage, and the
// knowledge base: executed-element records, trajectories, verification
// verdicts, and episode results.

#include "coenv/task.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace coenv {

struct VerifyResult {
  enum class Verdict { Success, Fail };
  Verdict verdict = Verdict::Success;
  double pose_error_m = 0.0;
  double pose_error_rad = 0.0;
  std::vector<Event> events_since;
  std::vector<std::string> unmet_conditions;

  bool ok() const { return verdict == Verdict::Success; }
};

/// One executed element: the resolved action (concrete per-agent params),
/// the joint configurations bracketing it, and what happened during it.
struct TrajectoryStep {
  int element_index = 0;        // plan index; corrective insertions repeat it
  PlanElement element;
  std::map<int, JointConfig> start_configs;
  std::map<int, JointConfig> end_configs;
  std::vector<Event> events;
  std::optional<VerifyResult> verify;    // actions, interactive mode
  std::optional<Json> checkpoint_report;  // checkpoint elements
};

struct Trajectory {
  SceneState initial;
  std::vector<TrajectoryStep> steps;
  /// States visited: initial, then one per executed step, plus contact-onset
  /// snapshots flagged by `extra_states` (used by collision analysis).
  std::vector<SceneState> states;

  const SceneState& final_state() const {
    return states.empty() ? initial : states.back();
  }
};

enum class Outcome { Success, Fail, Aborted };

const char* outcome_name(Outcome o);

struct EpisodeResult {
  Outcome outcome = Outcome::Fail;
  Trajectory trajectory;
  std::vector<MilestoneResult> milestones;
  int replans = 0;
  int planner_calls = 0;
  int reset_count = 0;  // interactive: 0; iterative: rounds attempted
};

Json joint_config_to_json(const JointConfig& c);
JointConfig joint_config_from_json(const Json& j, const std::string& where);
Json trajectory_step_to_json(const TrajectoryStep& s);
TrajectoryStep trajectory_step_from_json(const Json& j, const std::string& where);

}  // namespace coenv
