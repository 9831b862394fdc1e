#pragma once

// Iterative mode: whole-program generation in a closed, loop-free statement
// language ("coenv-script/1"), sandboxed execution against a fresh scene
// copy, structured failure feedback, and the stateless refinement loop.

#include "coenv/episode.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace coenv {

/// Expression tree over scalars and small vectors.  add/sub are element-wise;
/// mul/div accept scalar*scalar, scalar*vector, vector*scalar; min/max are
/// scalar-only; norm maps vector -> scalar; index picks one component.
struct ScriptExpr {
  enum class Op { Const, VecConst, Var, Add, Sub, Mul, Div, Min, Max, Norm, Index };
  Op op = Op::Const;
  double constant = 0.0;
  std::vector<double> vec_constant;
  std::string var;
  std::vector<ScriptExpr> args;

  static ScriptExpr number(double v);
  static ScriptExpr vec(std::vector<double> v);
  static ScriptExpr ref(std::string name);
  static ScriptExpr call(Op op, std::vector<ScriptExpr> args);
};

struct ScriptStatement {
  enum class Kind { Query, Let, Act, Checkpoint, Print };
  Kind kind = Kind::Query;
  // Query: var <- state path ("objects.<id>.position", "robots.<i>.tcp_position", ...)
  // Let:   var <- expr
  std::string var;
  std::string path;
  ScriptExpr expr;
  // Act: primitive + agents + params as expressions (scalar broadcasts,
  // vector gives one value per agent)
  Primitive primitive = Primitive::Move;
  std::vector<int> agents;
  std::map<std::string, ScriptExpr> act_params;
  // Checkpoint
  std::string cp_name;
  CheckpointType cp_type = CheckpointType::Generic;
  std::string cp_notes;
};

struct PlanScript {
  int round = 1;
  std::vector<ScriptStatement> statements;
};

std::string serialize_script(const PlanScript& script);
PlanScript parse_script(const std::string& json_text);

/// Static checks: variables defined before use, operator arity, index bounds
/// known at parse time, act params well-formed.  Empty result = valid.
std::vector<Issue> validate_script(const PlanScript& script);

struct ScriptErrorInfo {
  std::string what;  // "script_error" | "timeout"
  int statement_index = -1;
  std::string message;
};

struct CheckpointSnapshot {
  std::string name;
  CheckpointType type = CheckpointType::Generic;
  std::string notes;
  Json state_summary;  // structured scene at the call
};

struct RunOutput {
  Trajectory trajectory;
  std::vector<Event> events;
  std::vector<CheckpointSnapshot> checkpoints;
  std::string stdout_text;
  std::optional<ScriptErrorInfo> error;
};

struct IterativeConfig {
  int m_max = 8;            // refinement rounds
  int step_budget = 200000; // world steps per run; exhausted -> Timeout
  double wall_budget_s = 300.0;
};

/// Interprets the script against a fresh copy of scene0.  Statement errors
/// and budget exhaustion are returned in `error` with the trajectory built so
/// far (the run output is a value, not an exception).  Scripts that fail
/// static validation error at statement 0 before executing anything.
RunOutput execute_script(const World& world, const PlanScript& script,
                         const SceneState& scene0, const IterativeConfig& cfg,
                         const IkOptions& ik = {});

struct FailureMode {
  enum class Kind {
    CollisionEvent,
    UnachievedSubgoal,
    PoseError,
    GraspMiss,
    ReachLimit,
    Timeout,
    ScriptError,
  };
  Kind kind = Kind::UnachievedSubgoal;
  Json detail;
};

const char* failure_mode_name(FailureMode::Kind k);

struct Feedback {
  int round = 0;
  std::vector<FailureMode> failure_modes;  // empty only on success rounds
  std::vector<CheckpointSnapshot> checkpoint_snapshots;
  std::string stdout_text;
  std::string suggestions;
};

Json feedback_to_json(const Feedback& f);

/// Post-run analysis: achieved = final milestone on the last state; failure
/// modes derived from events, milestones, and a re-scan of trajectory states
/// for inter-agent penetration.
struct AnalyzeResult {
  bool achieved = false;
  Feedback feedback;
};
AnalyzeResult analyze_run(const World& world, const TaskSpec& task,
                          const RunOutput& run);

struct CodeGenRequest {
  TaskGoal goal;
  Json structured_state;
  Json task_info;  // robots/objects/hints block
  int round = 1;
  std::optional<Feedback> feedback;  // empty for round 1
};

class CodeGenAgent {
public:
  virtual ~CodeGenAgent() = default;
  virtual std::string id() const = 0;
  virtual PlanScript generate(const CodeGenRequest& request) = 0;
};

struct IterativeHooks {
  /// Called after each round with the script, its output, and the analysis.
  std::function<void(int round, const PlanScript&, const RunOutput&,
                     const AnalyzeResult&)> on_round;
};

struct IterativeResult {
  EpisodeResult episode;
  std::vector<Feedback> feedbacks;  // one per attempted round
  std::vector<PlanScript> scripts;
  std::vector<RunOutput> runs;
};

/// The refinement loop: for m = 1..M_max, reset to scene0, generate with the
/// previous round's feedback, execute, analyze; stops at the first achieving
/// round.  reset_count equals rounds attempted.
IterativeResult run_iterative(const World& world, const TaskSpec& task,
                              const SceneState& scene0, CodeGenAgent& codegen,
                              const IterativeConfig& cfg,
                              const IkOptions& ik = {},
                              const IterativeHooks* hooks = nullptr);

/// Writes the run artifact directory: summary.json, execution_stdout.txt,
/// checkpoints/<name>/states.json.
void write_run_artifacts(const std::string& dir, const World& world,
                         const TaskSpec& task, const RunOutput& run);

}  // namespace coenv
