#include "coenv/interactive.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace coenv {

namespace {

Json verify_report_json(const VerifyResult& v) {
  Json events = Json::array();
  for (const Event& e : v.events_since) events.push_back(event_to_json(e));
  return Json{{"verdict", v.ok() ? "Success" : "Fail"},
              {"pose_error_m", v.pose_error_m},
              {"pose_error_rad", v.pose_error_rad},
              {"unmet_conditions", v.unmet_conditions},
              {"events", events}};
}

bool has_event(const std::vector<Event>& events, EventKind kind, int agent) {
  for (const Event& e : events) {
    if (e.kind == kind && e.payload.value("agent", -1) == agent) return true;
  }
  return false;
}

bool any_event(const std::vector<Event>& events, EventKind kind) {
  return std::any_of(events.begin(), events.end(),
                     [&](const Event& e) { return e.kind == kind; });
}

}  // namespace

VerifyResult verify_outcome(const World& world, const PlanElement& element,
                            const SceneState& before, const SceneState& after,
                            const InteractiveConfig& cfg) {
  if (!element.is_action()) {
    throw EngineError(EngineError::Kind::CheckpointNotExecutable,
                      "verify_outcome: element is not an action");
  }
  const ActionElement& act = element.action();
  VerifyResult v;
  v.events_since.assign(after.events.begin() + static_cast<long>(before.events.size()),
                        after.events.end());

  for (size_t slot = 0; slot < act.agents.size(); ++slot) {
    int agent = act.agents[slot];
    Pose tcp_before = world.agent_tcp(before, agent);
    Pose tcp_after = world.agent_tcp(after, agent);

    switch (act.primitive) {
      case Primitive::Move:
      case Primitive::Rotate: {
        Vec3 target_pos = tcp_before.translation;
        Quat target_rot = tcp_before.rotation;
        if (act.primitive == Primitive::Move) {
          target_pos += Vec3(act.param("delta_x", slot, 0.0),
                             act.param("delta_y", slot, 0.0),
                             act.param("delta_z", slot, 0.0));
        } else {
          Pose dq = Pose::from_rpy(Vec3::Zero(),
                                   act.param("delta_roll", slot, 0.0),
                                   act.param("delta_pitch", slot, 0.0),
                                   act.param("delta_yaw", slot, 0.0));
          target_rot = canonical_quat(dq.rotation * tcp_before.rotation);
        }
        double pe = (tcp_after.translation - target_pos).norm();
        double re = quat_angle(tcp_after.rotation, target_rot);
        v.pose_error_m = std::max(v.pose_error_m, pe);
        v.pose_error_rad = std::max(v.pose_error_rad, re);
        if (pe > cfg.pos_check_tol) {
          v.unmet_conditions.push_back(
              "agent " + std::to_string(agent) + " TCP position error " +
              std::to_string(pe) + " m exceeds " +
              std::to_string(cfg.pos_check_tol));
        }
        if (re > cfg.rot_check_tol) {
          v.unmet_conditions.push_back(
              "agent " + std::to_string(agent) + " TCP rotation error " +
              std::to_string(re) + " rad exceeds " +
              std::to_string(cfg.rot_check_tol));
        }
        break;
      }
      case Primitive::Grasp:
        if (!has_event(v.events_since, EventKind::GraspAttached, agent)) {
          v.unmet_conditions.push_back("agent " + std::to_string(agent) +
                                       " did not attach an object");
        }
        break;
      case Primitive::Release: {
        bool released =
            has_event(v.events_since, EventKind::Released, agent);
        if (!released) {
          v.unmet_conditions.push_back("agent " + std::to_string(agent) +
                                       " released nothing");
        }
        if (any_event(v.events_since, EventKind::Dropped)) {
          v.unmet_conditions.push_back("an object was dropped during release");
        }
        break;
      }
    }
  }
  v.verdict = v.unmet_conditions.empty() ? VerifyResult::Verdict::Success
                                         : VerifyResult::Verdict::Fail;
  return v;
}

CheckpointEval eval_checkpoint(const World& world, const PlanElement& ckpt,
                               const SceneState& scene,
                               const InteractiveConfig& cfg) {
  if (ckpt.is_action()) {
    throw EngineError(EngineError::Kind::MalformedPredicate,
                      "eval_checkpoint: element is an action");
  }
  const CheckpointElement& c = ckpt.checkpoint();
  CheckpointEval out;
  Json conditions = Json::array();
  bool all = true;

  for (const Json& cond : c.conditions) {
    if (!cond.is_object() || !cond.contains("kind")) {
      throw EngineError(EngineError::Kind::MalformedPredicate,
                        "checkpoint '" + c.name + "': condition must be an "
                        "object with a 'kind': " + cond.dump());
    }
    const std::string kind = cond["kind"].get<std::string>();
    Json entry{{"condition", cond}};

    if (kind == "tcp_near") {
      // Pre-grasp style gate: TCP close to the object surface, optionally
      // with a commanded orientation.
      if (!cond.contains("agent") || !cond.contains("object")) {
        throw EngineError(EngineError::Kind::MalformedPredicate,
                          "'tcp_near' needs 'agent' and 'object'");
      }
      int agent = cond["agent"].get<int>();
      std::string object_id = cond["object"].get<std::string>();
      auto it = scene.objects.find(object_id);
      if (it == scene.objects.end()) {
        throw EngineError(EngineError::Kind::MalformedPredicate,
                          "'tcp_near' references unknown object '" +
                              object_id + "'");
      }
      if (agent < 0 || agent >= static_cast<int>(scene.agents.size())) {
        throw EngineError(EngineError::Kind::MalformedPredicate,
                          "'tcp_near' references unknown agent " +
                              std::to_string(agent));
      }
      Pose tcp = world.agent_tcp(scene, agent);
      double d = point_shape_distance(tcp.translation, it->second.shape,
                                      it->second.pose);
      double pos_tol = cond.value("pos_tol", cfg.pos_check_tol);
      bool ok = d <= pos_tol;
      entry["measured_m"] = d;
      if (cond.contains("rpy")) {
        Vec3 rpy = vec3_from_json(cond["rpy"], "tcp_near.rpy");
        Quat want = Pose::from_rpy(Vec3::Zero(), rpy.x(), rpy.y(), rpy.z()).rotation;
        double re = quat_angle(tcp.rotation, want);
        entry["measured_rad"] = re;
        ok = ok && re <= cond.value("rot_tol", cfg.rot_check_tol);
      }
      entry["satisfied"] = ok;
      all = all && ok;
    } else if (kind == "visible") {
      // Ray-cast confirmation from the checkpoint's recommended view.
      if (!cond.contains("object")) {
        throw EngineError(EngineError::Kind::MalformedPredicate,
                          "'visible' needs 'object'");
      }
      std::string object_id = cond["object"].get<std::string>();
      if (!scene.objects.count(object_id)) {
        throw EngineError(EngineError::Kind::MalformedPredicate,
                          "'visible' references unknown object '" +
                              object_id + "'");
      }
      CameraParams view = c.recommended_view ? *c.recommended_view
                                             : CameraParams{};
      ViewObservation obs = world.observe(scene, view);
      double fraction = 1.0;
      for (const VisibleObject& vis : obs.visible) {
        if (vis.object_id == object_id) {
          fraction = vis.occluded_fraction;
          break;
        }
      }
      double max_fraction = cond.value("max_occluded", 0.5);
      bool ok = fraction <= max_fraction;
      entry["measured_fraction"] = fraction;
      entry["satisfied"] = ok;
      all = all && ok;
    } else {
      // Everything else shares the milestone predicate vocabulary.
      std::vector<std::string> unmet;
      bool ok = eval_conditions(Json::array({cond}), world, scene, &unmet);
      entry["satisfied"] = ok;
      if (!unmet.empty()) entry["detail"] = unmet.front();
      all = all && ok;
    }
    conditions.push_back(entry);
  }

  out.phi = all ? 1 : 0;
  out.report = Json{{"checkpoint", c.name},
                    {"type", checkpoint_type_name(c.type)},
                    {"phi", out.phi},
                    {"conditions", conditions}};
  return out;
}

bool detect_stuck(const std::vector<ActionTrace>& history,
                  const InteractiveConfig& cfg) {
  if (cfg.stuck_window <= 0) return false;
  std::map<int, std::vector<double>> per_agent;
  for (const ActionTrace& t : history) {
    per_agent[t.agent_id].push_back(t.tcp_displacement);
  }
  for (const auto& [agent, moves] : per_agent) {
    if (static_cast<int>(moves.size()) < cfg.stuck_window) continue;
    bool stuck = true;
    for (size_t i = moves.size() - cfg.stuck_window; i < moves.size(); ++i) {
      if (moves[i] >= cfg.stuck_eps) {
        stuck = false;
        break;
      }
    }
    if (stuck) return true;
  }
  return false;
}

PlanningSessionResult planning_session(const World& world, const TaskGoal& goal,
                                       const SceneState& scene,
                                       const std::vector<CameraParams>& cameras,
                                       PlannerAgent& planner, int j_max) {
  if (j_max < 1) {
    throw EngineError(EngineError::Kind::ParamRange,
                      "planning_session: j_max must be >= 1");
  }
  PlanningSessionResult result;

  PlannerRequest request;
  request.phase = "planning";
  request.goal = goal;
  request.structured_state = structured_state_json(world, scene);
  if (!cameras.empty()) {
    request.observation =
        aggregated_observation_to_json(world.aggregate_views(scene, cameras, j_max));
  } else {
    request.observation = Json::object();
  }
  request.plan_progress = Json{{"views_requested", 0}};

  for (;;) {
    request.round = result.planner_calls;
    PlannerDecision decision = planner.decide(request);
    ++result.planner_calls;

    switch (decision.kind) {
      case PlannerDecision::Kind::RequestView: {
        ++result.views_requested;
        if (result.views_requested > j_max) {
          throw EngineError(EngineError::Kind::ViewBudgetExhausted,
                            "planning_session: view budget of " +
                                std::to_string(j_max) + " exhausted");
        }
        ViewObservation view = world.observe(scene, decision.view);
        request.observation = view_observation_to_json(view);
        request.plan_progress =
            Json{{"views_requested", result.views_requested}};
        break;
      }
      case PlannerDecision::Kind::PlanComplete:
        result.plan = decision.plan;
        result.plan.goal_id = goal.id;
        result.subgoals = decision.subgoals;
        return result;
      default:
        throw EngineError(EngineError::Kind::MalformedResponse,
                          "planning_session: planner answered with an "
                          "execution-phase decision");
    }
  }
}

std::vector<SubGoal> decompose(const World& world, const TaskGoal& goal,
                               const SceneState& scene, PlannerAgent& planner) {
  PlanningSessionResult session =
      planning_session(world, goal, scene, {}, planner);
  if (session.subgoals.empty()) {
    throw EngineError(EngineError::Kind::MalformedResponse,
                      "decompose: planner produced no sub-goals");
  }
  return session.subgoals;
}

ExecutionPlan assign(const World& world, const TaskGoal& goal,
                     const std::vector<SubGoal>& subgoals,
                     const SceneState& scene, PlannerAgent& planner) {
  if (subgoals.empty()) {
    throw EngineError(EngineError::Kind::EmptyInput,
                      "assign: sub-goal list is empty");
  }
  PlanningSessionResult session =
      planning_session(world, goal, scene, {}, planner);
  std::vector<Issue> issues = validate_plan(world, session.plan, scene);
  if (!issues.empty()) {
    std::ostringstream msg;
    msg << "assign: plan failed validation:";
    for (const Issue& issue : issues) {
      msg << " [" << issue.code << " at element " << issue.element_index << ": "
          << issue.detail << "]";
    }
    throw EngineError(EngineError::Kind::ValidationFailed, msg.str());
  }
  return session.plan;
}

std::vector<Issue> validate_plan(const World& world, const ExecutionPlan& plan,
                                 const SceneState& scene) {
  std::vector<Issue> issues;
  std::map<std::string, int> checkpoint_names;

  // Coarse reachability: track each agent's cumulative TCP target and check
  // it stays within the model's reach sphere around the base.
  std::map<int, Vec3> cursor;
  for (size_t i = 0; i < scene.agents.size(); ++i) {
    cursor[static_cast<int>(i)] =
        world.agent_tcp(scene, static_cast<int>(i)).translation;
  }

  for (const PlanElement& e : plan.elements) {
    if (!e.is_action()) {
      const CheckpointElement& c = e.checkpoint();
      auto [it, fresh] = checkpoint_names.emplace(c.name, e.index);
      if (!fresh) {
        issues.push_back(Issue{"DuplicateCheckpoint", e.index,
                               "checkpoint name '" + c.name +
                                   "' already used at element " +
                                   std::to_string(it->second)});
      }
      if (!c.conditions.is_array()) {
        issues.push_back(Issue{"MalformedPredicate", e.index,
                               "checkpoint conditions must be an array"});
      }
      continue;
    }
    const ActionElement& act = e.action();
    bool agents_ok = true;
    for (int agent : act.agents) {
      if (agent < 0 || agent >= static_cast<int>(scene.agents.size())) {
        issues.push_back(Issue{"InvalidAgent", e.index,
                               "agent " + std::to_string(agent) +
                                   " does not exist"});
        agents_ok = false;
      }
    }
    if (!agents_ok) continue;

    for (const auto& [key, values] : act.params) {
      if (values.size() != 1 && values.size() != act.agents.size()) {
        issues.push_back(Issue{"ParamRange", e.index,
                               "param '" + key + "' has " +
                                   std::to_string(values.size()) +
                                   " values for " +
                                   std::to_string(act.agents.size()) +
                                   " agents"});
      }
    }

    for (size_t slot = 0; slot < act.agents.size(); ++slot) {
      int agent = act.agents[slot];
      const RobotModel& model = world.model_of(scene, agent);
      if (act.primitive == Primitive::Grasp) {
        double width = act.param("target_width", slot, model.gripper.close_command);
        if (width > 0.0) {
          issues.push_back(Issue{"ParamRange", e.index,
                                 "Grasp target_width " + std::to_string(width) +
                                     " is positive; close commands are negative"});
        }
        if (width < -1.0 || width > 1.0) {
          issues.push_back(Issue{"ParamRange", e.index,
                                 "Grasp target_width " + std::to_string(width) +
                                     " outside [-1, 1]"});
        }
      } else if (act.primitive != Primitive::Rotate) {
        Vec3 delta(act.param("delta_x", slot, 0.0),
                   act.param("delta_y", slot, 0.0),
                   act.param("delta_z", slot, 0.0));
        cursor[agent] += delta;
        const Pose& base = scene.agents[agent].base_pose;
        double dist = (cursor[agent] - base.translation).norm();
        if (dist > model.reach) {
          issues.push_back(Issue{"WorkspaceExceeded", e.index,
                                 "agent " + std::to_string(agent) +
                                     " cumulative target " +
                                     std::to_string(dist) +
                                     " m from base exceeds reach " +
                                     std::to_string(model.reach)});
        }
      }
    }
  }
  return issues;
}

namespace {

struct Executor {
  const World& world;
  const TaskSpec& task;
  PlannerAgent& planner;
  const std::vector<CameraParams>& cameras;
  const InteractiveConfig& cfg;
  const IkOptions& ik;
  const InteractiveHooks* hooks;

  EpisodeResult result;
  SceneState scene;
  TaskGoal goal;
  ExecutionPlan plan;
  std::vector<ActionTrace> traces;
  bool stuck_flag = false;
  int planner_budget = 0;
  bool aborted = false;
  bool failed = false;

  void record_step(TrajectoryStep step) {
    result.trajectory.states.push_back(scene);
    if (hooks && hooks->on_step) hooks->on_step(step);
    result.trajectory.steps.push_back(std::move(step));
  }

  bool budget_left() {
    if (result.planner_calls >= planner_budget) {
      aborted = true;
      return false;
    }
    return true;
  }

  PlannerDecision consult(const Json& plan_progress) {
    PlannerRequest request;
    request.phase = "execution";
    request.goal = goal;
    request.structured_state = structured_state_json(world, scene);
    request.observation = Json::object();
    request.plan_progress = plan_progress;
    request.round = result.planner_calls;

    for (;;) {
      PlannerDecision decision = planner.decide(request);
      ++result.planner_calls;
      if (decision.kind != PlannerDecision::Kind::RequestView) return decision;
      // Execution-phase view request: render and ask again.
      if (!budget_left()) {
        PlannerDecision replan;
        replan.kind = PlannerDecision::Kind::Replan;
        replan.reason = "planner budget exhausted";
        return replan;
      }
      request.observation =
          view_observation_to_json(world.observe(scene, decision.view));
      request.round = result.planner_calls;
    }
  }

  /// Runs one concrete action, recording the trajectory step.  Returns the
  /// verification result (recomputed against `verify_like` when the action is
  /// corrective, so corrections are judged against the original target).
  VerifyResult run_action(const PlanElement& element,
                          const Json& annotation_note) {
    SceneState before = scene;
    PlanElement to_run = element;
    if (!annotation_note.is_null()) {
      ActionElement act = element.action();
      act.annotation = annotation_note;
      to_run.body = act;
    }
    PrimitiveOutcome out = world.apply_primitive(scene, to_run, ik);
    scene = out.scene;

    TrajectoryStep step;
    step.element_index = element.index;
    step.element = to_run;
    for (size_t i = 0; i < before.agents.size(); ++i) {
      step.start_configs[static_cast<int>(i)] = before.agents[i].config;
    }
    step.end_configs = out.end_configs;
    step.events = out.events;
    VerifyResult v = verify_outcome(world, to_run, before, scene, cfg);
    step.verify = v;
    record_step(std::move(step));

    for (size_t slot = 0; slot < element.action().agents.size(); ++slot) {
      int agent = element.action().agents[slot];
      double moved = (world.agent_tcp(scene, agent).translation -
                      world.agent_tcp(before, agent).translation)
                         .norm();
      traces.push_back(ActionTrace{agent, moved});
    }
    stuck_flag = detect_stuck(traces, cfg);
    return v;
  }

  /// One automatic drift-correcting Move toward the original target, allowed
  /// once per element for residuals in (pos_check_tol, drift_correct_max].
  bool try_drift_correction(const PlanElement& element,
                            const SceneState& before, VerifyResult& v) {
    if (element.action().primitive != Primitive::Move) return false;
    if (v.pose_error_m <= cfg.pos_check_tol ||
        v.pose_error_m > cfg.drift_correct_max) {
      return false;
    }
    const ActionElement& act = element.action();
    ActionElement fix;
    fix.agents = act.agents;
    fix.primitive = Primitive::Move;
    std::vector<double> dx, dy, dz;
    for (size_t slot = 0; slot < act.agents.size(); ++slot) {
      int agent = act.agents[slot];
      Vec3 target = world.agent_tcp(before, agent).translation +
                    Vec3(act.param("delta_x", slot, 0.0),
                         act.param("delta_y", slot, 0.0),
                         act.param("delta_z", slot, 0.0));
      Vec3 residual = target - world.agent_tcp(scene, agent).translation;
      dx.push_back(residual.x());
      dy.push_back(residual.y());
      dz.push_back(residual.z());
    }
    fix.params["delta_x"] = dx;
    fix.params["delta_y"] = dy;
    fix.params["delta_z"] = dz;

    PlanElement corrective;
    corrective.index = element.index;
    corrective.body = fix;
    run_action(corrective, Json{{"auto", "drift_correction"}});
    // Judge the correction against the original element's target.
    v = verify_outcome(world, element, before, scene, cfg);
    if (!result.trajectory.steps.empty()) {
      result.trajectory.steps.back().verify = v;
    }
    return true;
  }

  /// Asks the planner to fix a failed element.  Returns true when execution
  /// of the element may be retried (corrective actions ran), false when the
  /// caller should fall through to replan-or-terminate.
  bool corrective_round(const PlanElement& element, const Json& diagnostics,
                        int* corrections, bool* replan_requested) {
    if (*corrections >= cfg.max_corrections_per_element) return false;
    if (!budget_left()) return false;
    Json progress{{"element_index", element.index},
                  {"element", plan_element_to_json(element)},
                  {"diagnostics", diagnostics},
                  {"corrections_used", *corrections},
                  {"plan_elements", static_cast<int>(plan.elements.size())}};
    if (stuck_flag) progress["stuck"] = true;
    PlannerDecision decision = consult(progress);
    if (decision.kind == PlannerDecision::Kind::Replan) {
      *replan_requested = true;
      return false;
    }
    if (decision.kind != PlannerDecision::Kind::NextActions ||
        decision.next.actions.empty()) {
      throw EngineError(EngineError::Kind::MalformedResponse,
                        "corrective consultation must answer NextActions or "
                        "REPLAN");
    }
    ++*corrections;
    for (const ActionElement& act : decision.next.actions) {
      PlanElement corrective;
      corrective.index = element.index;
      corrective.body = act;
      run_action(corrective, Json{{"auto", "planner_correction"}});
      if (aborted) return false;
    }
    return true;
  }

  bool replan(const std::string& reason) {
    if (result.replans >= cfg.max_replans) return false;
    ++result.replans;
    PlanningSessionResult session =
        planning_session(world, goal, scene, cameras, planner, cfg.j_max);
    result.planner_calls += session.planner_calls;
    std::vector<Issue> issues = validate_plan(world, session.plan, scene);
    if (!issues.empty()) return false;
    plan = session.plan;
    plan.provenance.round = result.replans;
    planner_budget += cfg.j_max + 1 +
                      static_cast<int>(plan.elements.size()) *
                          (1 + cfg.max_corrections_per_element);
    (void)reason;
    return true;
  }

  void run() {
    goal = task_goal(task);

    PlanningSessionResult session =
        planning_session(world, goal, scene, cameras, planner, cfg.j_max);
    result.planner_calls = session.planner_calls;
    plan = session.plan;
    std::vector<Issue> issues = validate_plan(world, plan, scene);
    if (!issues.empty()) {
      std::ostringstream msg;
      for (const Issue& i : issues) {
        msg << "[" << i.code << " at " << i.element_index << "] ";
      }
      if (!replan(msg.str())) {
        failed = true;
        finish();
        return;
      }
    }
    planner_budget = result.planner_calls + cfg.j_max + 1 +
                     static_cast<int>(plan.elements.size()) *
                         (1 + cfg.max_corrections_per_element) +
                     cfg.max_replans * (cfg.j_max + 1);

    size_t cursor = 0;
    int corrections = 0;
    while (cursor < plan.elements.size() && !aborted && !failed) {
      const PlanElement element = plan.elements[cursor];

      if (element.is_action()) {
        SceneState before = scene;
        VerifyResult v = run_action(element, Json());
        if (!v.ok()) try_drift_correction(element, before, v);
        bool replan_requested = false;
        while (!v.ok() && !aborted) {
          if (!corrective_round(element, verify_report_json(v), &corrections,
                                &replan_requested)) {
            break;
          }
          v = verify_outcome(world, element, before, scene, cfg);
          if (!result.trajectory.steps.empty()) {
            result.trajectory.steps.back().verify = v;
          }
        }
        if (v.ok()) {
          ++cursor;
          corrections = 0;
          continue;
        }
        if (aborted) break;
        if (replan(replan_requested ? "planner requested replan"
                                    : "verification failed")) {
          cursor = 0;
          corrections = 0;
          continue;
        }
        failed = true;
        break;
      }

      // Checkpoint: execution proceeds only when phi == 1.
      CheckpointEval eval = eval_checkpoint(world, element, scene, cfg);
      TrajectoryStep step;
      step.element_index = element.index;
      step.element = element;
      for (size_t i = 0; i < scene.agents.size(); ++i) {
        step.start_configs[static_cast<int>(i)] = scene.agents[i].config;
        step.end_configs[static_cast<int>(i)] = scene.agents[i].config;
      }
      step.checkpoint_report = eval.report;
      record_step(std::move(step));

      bool replan_requested = false;
      while (eval.phi == 0 && !aborted) {
        if (!corrective_round(element, eval.report, &corrections,
                              &replan_requested)) {
          break;
        }
        eval = eval_checkpoint(world, element, scene, cfg);
        if (!result.trajectory.steps.empty() &&
            !result.trajectory.steps.back().element.is_action()) {
          result.trajectory.steps.back().checkpoint_report = eval.report;
        }
      }
      if (eval.phi == 1) {
        ++cursor;
        corrections = 0;
        continue;
      }
      if (aborted) break;
      if (replan(replan_requested ? "planner requested replan"
                                  : "checkpoint failed")) {
        cursor = 0;
        corrections = 0;
        continue;
      }
      failed = true;
      break;
    }

    finish();
  }

  void finish() {
    result.milestones = eval_milestones(task, world, scene);
    if (aborted) {
      result.outcome = Outcome::Aborted;
    } else if (failed || result.milestones.empty() ||
               !result.milestones.back().satisfied) {
      result.outcome = Outcome::Fail;
    } else {
      result.outcome = Outcome::Success;
    }
    result.reset_count = 0;
  }
};

/// Mirrors every planner decision to the episode hook, planning phase
/// included, so a recorded log is complete enough to replay.
class TapPlanner final : public PlannerAgent {
 public:
  TapPlanner(PlannerAgent& inner, const InteractiveHooks* hooks)
      : inner_(inner), hooks_(hooks) {}

  std::string id() const override { return inner_.id(); }

  PlannerDecision decide(const PlannerRequest& request) override {
    PlannerDecision decision = inner_.decide(request);
    if (hooks_ && hooks_->on_decision) hooks_->on_decision(decision, request);
    return decision;
  }

 private:
  PlannerAgent& inner_;
  const InteractiveHooks* hooks_;
};

}  // namespace

EpisodeResult run_interactive(const World& world, const TaskSpec& task,
                              const SceneState& scene0, PlannerAgent& planner,
                              const std::vector<CameraParams>& cameras,
                              const InteractiveConfig& cfg, const IkOptions& ik,
                              const InteractiveHooks* hooks) {
  TapPlanner tap(planner, hooks);
  Executor exec{world, task, tap, cameras, cfg, ik, hooks};
  exec.scene = scene0;
  exec.result.trajectory.initial = scene0;
  exec.result.trajectory.states.push_back(scene0);
  exec.run();
  return exec.result;
}

}  // namespace coenv
