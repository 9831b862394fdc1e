#pragma once

// Bundled planner and code-generation agents: deterministic scripted agents
// for each bundled task (these drive the test suites), a replay agent that
// re-issues recorded decisions, wire agents speaking the "coenv-planner/1"
// HTTP protocol, and fault-injection wrappers for failure-path tests.

#include "coenv/iterative.hpp"
#include "coenv/plan.hpp"

#include <memory>
#include <string>
#include <vector>

namespace coenv {

/// Deterministic per-task planner.  Planning phase: requests each configured
/// camera once, then completes with the task's plan.  Execution phase:
/// recomputes concrete deltas for the current element from live state (plan
/// params may be stale by design).  Throws TaskNotFound for tasks it does not
/// know.
std::unique_ptr<PlannerAgent> make_scripted_planner(const std::string& task_id);

/// Wraps a planner, corrupting the approach before the first Grasp so it
/// misses, then behaving normally; on the resulting verification failure it
/// answers Replan.  Exercises the replan path deterministically.
std::unique_ptr<PlannerAgent> make_misgrasp_planner(
    std::unique_ptr<PlannerAgent> inner);

/// Replays decisions from an episode log ("coenv-episode/1").  Throws
/// MalformedResponse when the log runs out or diverges from the requests.
std::unique_ptr<PlannerAgent> make_replay_planner(const std::string& log_path);

/// HTTP client agent: POSTs "coenv-planner/1" requests to <url>/decide and
/// parses tagged-block responses.  Throws PlannerUnavailable on transport
/// errors and MalformedResponse on unparseable replies.
std::unique_ptr<PlannerAgent> make_wire_planner(const std::string& url,
                                                double timeout_s = 30.0);

/// Deterministic per-task code generators emitting "coenv-script/1" programs
/// that query live state and compute deltas arithmetically (no hardcoded
/// absolute targets).
std::unique_ptr<CodeGenAgent> make_scripted_codegen(const std::string& task_id);

/// Two-round fixture: round 1 overshoots its hover height beyond reach;
/// round 2 reads the ReachLimit gap from feedback and lowers the target by
/// it.  Succeeds at m = 2 on the cube_stacking task.
std::unique_ptr<CodeGenAgent> make_two_round_codegen();

/// Emits a script that never advances the task; every round fails.
std::unique_ptr<CodeGenAgent> make_failing_codegen();

/// HTTP code generator: POSTs the request to <url>/generate; the response
/// body is a "coenv-script/1" document.  Throws CodeGenUnavailable.
std::unique_ptr<CodeGenAgent> make_wire_codegen(const std::string& url,
                                                double timeout_s = 60.0);

/// Serializes a PlannerRequest to the "coenv-planner/1" wire body.
Json planner_request_to_json(const PlannerRequest& request);

/// Decision round trip used by the episode log and the replay planner.
Json planner_decision_to_json(const PlannerDecision& decision);
PlannerDecision planner_decision_from_json(const Json& j);

}  // namespace coenv
