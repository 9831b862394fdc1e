#include "coenv/datastore.hpp"

#include "coenv/interactive.hpp"
#include "coenv/iterative.hpp"
#include "coenv/rng.hpp"

#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

namespace coenv {

namespace {

namespace fs = std::filesystem;

Json milestones_to_json(const std::vector<MilestoneResult>& ms) {
  Json out = Json::array();
  for (const MilestoneResult& m : ms) {
    out.push_back(Json{{"id", m.milestone_id}, {"satisfied", m.satisfied}});
  }
  return out;
}

std::vector<MilestoneResult> milestones_from_json(const Json& j,
                                                  const std::string& where) {
  if (!j.is_array()) {
    throw EngineError(EngineError::Kind::SerializationError,
                      where + ": milestones must be an array");
  }
  std::vector<MilestoneResult> out;
  for (const Json& m : j) {
    MilestoneResult r;
    r.milestone_id = require_string(m, "id", where);
    r.satisfied = require_field(m, "satisfied", where).get<bool>();
    out.push_back(std::move(r));
  }
  return out;
}

/// RAII advisory lock on <db_path>.lock; a single writer at a time, readers
/// unaffected.
class StoreLock {
 public:
  explicit StoreLock(const std::string& db_path) {
    std::string lock_path = db_path + ".lock";
    fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) {
      throw EngineError(EngineError::Kind::IoError,
                        "cannot open lock file " + lock_path + ": " +
                            std::strerror(errno));
    }
    if (::flock(fd_, LOCK_EX) != 0) {
      int err = errno;
      ::close(fd_);
      fd_ = -1;
      throw EngineError(EngineError::Kind::IoError,
                        "cannot lock " + lock_path + ": " + std::strerror(err));
    }
  }
  ~StoreLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }
  StoreLock(const StoreLock&) = delete;
  StoreLock& operator=(const StoreLock&) = delete;

 private:
  int fd_ = -1;
};

std::int64_t count_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return 0;
  std::int64_t lines = 0;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    lines += std::count(buf, buf + in.gcount(), '\n');
  }
  return lines;
}

void append_line(const std::string& path, const std::string& line) {
  errno = 0;
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) {
    throw EngineError(EngineError::Kind::IoError,
                      "cannot open " + path + " for append: " +
                          std::strerror(errno));
  }
  out << line << '\n';
  out.flush();
  if (!out) {
    EngineError::Kind kind = errno == ENOSPC
                                 ? EngineError::Kind::StorageFull
                                 : EngineError::Kind::IoError;
    throw EngineError(kind, "write to " + path + " failed: " +
                                std::strerror(errno));
  }
}

/// One ndjson sink for episode logs ("coenv-episode/1"); an empty path
/// swallows everything.
class EpisodeLog {
 public:
  EpisodeLog() = default;
  explicit EpisodeLog(const std::string& path) {
    if (path.empty()) return;
    out_.open(path, std::ios::trunc | std::ios::binary);
    if (!out_) {
      throw EngineError(EngineError::Kind::IoError,
                        "cannot open episode log " + path);
    }
  }

  void write(const Json& record) {
    if (!out_.is_open()) return;
    out_ << record.dump() << '\n';
    if (!out_) {
      throw EngineError(EngineError::Kind::IoError, "episode log write failed");
    }
  }

 private:
  std::ofstream out_;
};

}  // namespace

std::string serialize_record(const KnowledgeRecord& record) {
  Json traj = Json::array();
  for (const TrajectoryStep& s : record.trajectory) {
    traj.push_back(trajectory_step_to_json(s));
  }
  Json j{{"schema", "coenv-kb/1"},
         {"record_id", record.record_id},
         {"created_at", record.created_at},
         {"goal_id", record.goal_id},
         {"goal_description", record.goal_description},
         {"mode", record.mode},
         {"planner_id", record.planner_id},
         {"seed", record.seed},
         {"trial", record.trial},
         {"initial_state", scene_to_json(record.initial_state)},
         {"trajectory", traj},
         {"milestones", milestones_to_json(record.milestones)}};
  return j.dump();
}

KnowledgeRecord parse_record(const std::string& line) {
  Json j = parse_json(line, "knowledge record");
  require_schema(j, "coenv-kb/1");
  KnowledgeRecord r;
  r.record_id = require_field(j, "record_id", "record").get<std::int64_t>();
  r.created_at = require_field(j, "created_at", "record").get<std::int64_t>();
  r.goal_id = require_string(j, "goal_id", "record");
  r.goal_description = require_string(j, "goal_description", "record");
  r.mode = require_string(j, "mode", "record");
  r.planner_id = require_string(j, "planner_id", "record");
  r.seed = require_field(j, "seed", "record").get<std::uint64_t>();
  r.trial = require_field(j, "trial", "record").get<std::uint64_t>();
  r.initial_state =
      scene_from_json(require_field(j, "initial_state", "record"), "record");
  const Json& traj = require_field(j, "trajectory", "record");
  for (const Json& s : traj) {
    r.trajectory.push_back(trajectory_step_from_json(s, "record.trajectory"));
  }
  r.milestones =
      milestones_from_json(require_field(j, "milestones", "record"), "record");
  return r;
}

std::int64_t store_record(const std::string& db_path, KnowledgeRecord record) {
  if (record.trajectory.empty()) {
    throw EngineError(EngineError::Kind::SerializationError,
                      "knowledge record has an empty trajectory");
  }
  fs::path parent = fs::path(db_path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    fs::create_directories(parent, ec);
    if (ec) {
      throw EngineError(EngineError::Kind::IoError,
                        "cannot create " + parent.string() + ": " +
                            ec.message());
    }
  }
  StoreLock lock(db_path);
  std::int64_t id = count_lines(db_path);
  record.record_id = id;
  record.created_at = id;
  append_line(db_path, serialize_record(record));
  return id;
}

std::vector<KnowledgeRecord> load_records(const std::string& db_path) {
  std::vector<KnowledgeRecord> out;
  std::ifstream in(db_path, std::ios::binary);
  if (!in) return out;  // absent store == empty store
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_record(line));
  }
  return out;
}

std::vector<KnowledgeRecord> query_demonstrations(const std::string& db_path,
                                                  const std::string& goal_id,
                                                  int k) {
  std::vector<KnowledgeRecord> out;
  if (k < 1) return out;
  std::vector<KnowledgeRecord> all = load_records(db_path);
  for (auto it = all.rbegin(); it != all.rend(); ++it) {
    if (it->goal_id != goal_id) continue;
    if (it->milestones.empty() || !it->milestones.back().satisfied) continue;
    out.push_back(std::move(*it));
    if (static_cast<int>(out.size()) == k) break;
  }
  return out;
}

ReplayCheck replay_record(const World& world, const TaskSpec& task,
                          const KnowledgeRecord& record, const IkOptions& ik) {
  SceneState scene = record.initial_state;
  for (const TrajectoryStep& s : record.trajectory) {
    if (!s.element.is_action()) continue;  // checkpoints observe, never move
    PrimitiveOutcome out = world.apply_primitive(scene, s.element, ik);
    scene = std::move(out.scene);
  }
  ReplayCheck check;
  check.recomputed = eval_milestones(task, world, scene);
  check.milestones_match =
      check.recomputed.size() == record.milestones.size();
  if (check.milestones_match) {
    for (size_t i = 0; i < check.recomputed.size(); ++i) {
      if (check.recomputed[i].milestone_id !=
              record.milestones[i].milestone_id ||
          check.recomputed[i].satisfied != record.milestones[i].satisfied) {
        check.milestones_match = false;
        break;
      }
    }
  }
  return check;
}

Json session_stats_to_json(const SessionStats& stats) {
  return Json{{"task_id", stats.task_id},
              {"mode", stats.mode},
              {"episodes_attempted", stats.episodes_attempted},
              {"episodes_collected", stats.episodes_collected},
              {"reset_count", stats.reset_count},
              {"planner_calls", stats.planner_calls},
              {"wall_time_s", stats.wall_time_s}};
}

SessionStats run_session(const World& world, const TaskSpec& task,
                         const std::string& mode, const PlannerFactory& planner,
                         const CodeGenFactory& codegen, int trials,
                         std::uint64_t seed, const EngineConfig& cfg,
                         const SessionOutput& out) {
  if (trials < 1) {
    throw EngineError(EngineError::Kind::ParamRange,
                      "run_session: trials must be >= 1, got " +
                          std::to_string(trials));
  }
  bool interactive = mode == "interactive";
  if (!interactive && mode != "iterative") {
    throw EngineError(EngineError::Kind::ParamRange,
                      "run_session: unknown mode '" + mode + "'");
  }
  if (interactive && !planner) {
    throw EngineError(EngineError::Kind::ParamRange,
                      "run_session: interactive mode needs a planner");
  }
  if (!interactive && !codegen) {
    throw EngineError(EngineError::Kind::ParamRange,
                      "run_session: iterative mode needs a code generator");
  }
  if (!out.episode_log_dir.empty()) {
    fs::create_directories(out.episode_log_dir);
  }

  SessionStats stats;
  stats.task_id = task.id;
  stats.mode = mode;
  auto start = std::chrono::steady_clock::now();

  for (int trial = 0; trial < trials; ++trial) {
    SceneState scene0 = instantiate_scene(task, world.models(), seed,
                                          static_cast<std::uint64_t>(trial));
    ++stats.episodes_attempted;

    std::string log_path;
    if (!out.episode_log_dir.empty()) {
      log_path = out.episode_log_dir + "/trial_" + std::to_string(trial) +
                 ".ndjson";
    }
    EpisodeLog log(log_path);
    log.write(Json{{"type", "header"},
                   {"schema", "coenv-episode/1"},
                   {"task", task.id},
                   {"mode", mode},
                   {"seed", seed},
                   {"trial", trial},
                   {"initial_state", scene_to_json(scene0)}});

    EpisodeResult episode;
    std::string agent_id;
    try {
      if (interactive) {
        std::unique_ptr<PlannerAgent> agent = planner();
        agent_id = agent->id();
        InteractiveHooks hooks;
        hooks.on_decision = [&](const PlannerDecision& d,
                                const PlannerRequest& req) {
          log.write(Json{{"type", "decision"},
                         {"phase", req.phase},
                         {"round", req.round},
                         {"decision", planner_decision_to_json(d)}});
        };
        hooks.on_step = [&](const TrajectoryStep& s) {
          log.write(Json{{"type", "step"},
                         {"step", trajectory_step_to_json(s)}});
        };
        episode = run_interactive(world, task, scene0, *agent, task.cameras,
                                  cfg.interactive, cfg.ik, &hooks);
      } else {
        std::unique_ptr<CodeGenAgent> agent = codegen();
        agent_id = agent->id();
        IterativeHooks hooks;
        hooks.on_round = [&](int round, const PlanScript& script,
                             const RunOutput& run, const AnalyzeResult&) {
          log.write(Json{{"type", "script"},
                         {"round", round},
                         {"script", parse_json(serialize_script(script),
                                               "round script")}});
          if (!out.artifact_dir.empty()) {
            std::string dir = out.artifact_dir + "/trial_" +
                              std::to_string(trial) + "/round_" +
                              std::to_string(round);
            write_run_artifacts(dir, world, task, run);
          }
        };
        IterativeResult result = run_iterative(world, task, scene0, *agent,
                                               cfg.iterative, cfg.ik, &hooks);
        episode = std::move(result.episode);
      }
    } catch (const EngineError& e) {
      // A failed trial is data too; record it and move on.
      log.write(Json{{"type", "result"},
                     {"outcome", "error"},
                     {"error", Json{{"kind", e.kind_name()},
                                    {"message", e.what()}}}});
      continue;
    }

    stats.planner_calls += episode.planner_calls;
    stats.reset_count += episode.reset_count;

    bool stored = false;
    Json validation_json;
    if (episode.outcome == Outcome::Success) {
      // The collision gate: only trajectories whose swept volumes stay
      // disjoint are worth keeping.
      std::map<int, AgentBody> bodies;
      for (size_t i = 0; i < scene0.agents.size(); ++i) {
        bodies[static_cast<int>(i)] =
            AgentBody{world.models().get(scene0.agents[i].model_ref),
                      scene0.agents[i].base_pose};
      }
      std::vector<PrimitiveRecord> records =
          trajectory_records(episode.trajectory);
      TrajectoryValidation validation = validate_trajectory(
          records, bodies, cfg.transfer.steps, cfg.transfer.margin);
      validation_json = Json{{"safe", !validation.first_violation.has_value()},
                             {"min_distance", validation.min_distance}};
      if (validation.first_violation) {
        validation_json["first_violation"] = *validation.first_violation;
      }
      if (!validation.first_violation && !out.kb_path.empty() &&
          !episode.trajectory.steps.empty()) {
        KnowledgeRecord record;
        record.goal_id = task.id;
        record.goal_description = task.description;
        record.mode = mode;
        record.planner_id = agent_id;
        record.seed = seed;
        record.trial = static_cast<std::uint64_t>(trial);
        record.initial_state = scene0;
        record.trajectory = episode.trajectory.steps;
        record.milestones = episode.milestones;
        store_record(out.kb_path, std::move(record));
        stored = true;
      }
      if (!validation.first_violation) ++stats.episodes_collected;
    }

    Json result{{"type", "result"},
                {"outcome", outcome_name(episode.outcome)},
                {"milestones", milestones_to_json(episode.milestones)},
                {"planner_calls", episode.planner_calls},
                {"replans", episode.replans},
                {"reset_count", episode.reset_count},
                {"stored", stored}};
    if (!validation_json.is_null()) result["validation"] = validation_json;
    log.write(result);
  }

  stats.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return stats;
}

}  // namespace coenv
