#pragma once

// Knowledge base ("coenv-kb/1", append-only newline-delimited JSON), session
// statistics, and the session driver that ties sampling, execution,
// validation, and storage together.

#include "coenv/agents.hpp"
#include "coenv/config.hpp"
#include "coenv/episode.hpp"
#include "coenv/transfer.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace coenv {

struct KnowledgeRecord {
  std::int64_t record_id = -1;  // assigned by store_record
  std::int64_t created_at = -1;  // logical timestamp == record_id (see docs)
  std::string goal_id;
  std::string goal_description;
  std::string mode;  // "interactive" | "iterative"
  std::string planner_id;
  std::uint64_t seed = 0;
  std::uint64_t trial = 0;
  SceneState initial_state;
  std::vector<TrajectoryStep> trajectory;
  std::vector<MilestoneResult> milestones;
};

/// Canonical single-line JSON (sorted keys, no whitespace).  Stable across
/// serialize/parse round trips.
std::string serialize_record(const KnowledgeRecord& record);
KnowledgeRecord parse_record(const std::string& line);

/// Appends one record under an advisory file lock; ids are assigned
/// monotonically from the current line count.  Throws SerializationError for
/// invalid records (empty trajectory), StorageFull/IoError on write failure.
std::int64_t store_record(const std::string& db_path, KnowledgeRecord record);

std::vector<KnowledgeRecord> load_records(const std::string& db_path);

/// Up to k most recent successful records for the goal, newest first.
std::vector<KnowledgeRecord> query_demonstrations(const std::string& db_path,
                                                  const std::string& goal_id,
                                                  int k);

/// Re-executes a stored trajectory's elements through the world module and
/// re-evaluates milestones; replay matches iff every stored flag reproduces.
struct ReplayCheck {
  bool milestones_match = false;
  std::vector<MilestoneResult> recomputed;
};
ReplayCheck replay_record(const World& world, const TaskSpec& task,
                          const KnowledgeRecord& record,
                          const IkOptions& ik = {});

struct SessionStats {
  std::string task_id;
  std::string mode;
  int episodes_attempted = 0;
  int episodes_collected = 0;
  int reset_count = 0;
  int planner_calls = 0;
  double wall_time_s = 0.0;  // informational; excluded from determinism
};

Json session_stats_to_json(const SessionStats& stats);

/// Where episode artifacts and the knowledge base go; any empty path
/// disables that output.
struct SessionOutput {
  std::string kb_path;
  std::string episode_log_dir;  // interactive episode logs, per trial
  std::string artifact_dir;     // iterative run artifacts, per trial/round
};

using PlannerFactory = std::function<std::unique_ptr<PlannerAgent>()>;
using CodeGenFactory = std::function<std::unique_ptr<CodeGenAgent>()>;

/// Runs `trials` seeded episodes of the task in one mode; successful
/// episodes must pass validate_trajectory before they are stored.  Episode
/// errors are recorded as failed trials and the session continues.
SessionStats run_session(const World& world, const TaskSpec& task,
                         const std::string& mode, const PlannerFactory& planner,
                         const CodeGenFactory& codegen, int trials,
                         std::uint64_t seed, const EngineConfig& cfg,
                         const SessionOutput& out);

}  // namespace coenv
