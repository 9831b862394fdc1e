#include "coenv/agents.hpp"

#include "coenv/task.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include <httplib.h>

namespace coenv {

namespace {

// --- structured-state accessors ----------------------------------------------

Vec3 state_vec3(const Json& j) {
  return Vec3(j.at(0).get<double>(), j.at(1).get<double>(),
              j.at(2).get<double>());
}

Vec3 object_position(const Json& ss, const std::string& id) {
  const Json& objects = ss.at("objects");
  if (!objects.contains(id)) {
    throw EngineError(EngineError::Kind::UnknownObject,
                      "scripted planner: structured state has no object '" +
                          id + "'");
  }
  return state_vec3(objects.at(id).at("position"));
}

/// -1 when the object is free.
int object_holder(const Json& ss, const std::string& id) {
  const Json& att = ss.at("objects").at(id).at("attached_to");
  return att.is_null() ? -1 : att.get<int>();
}

Vec3 tcp_position(const Json& ss, int agent) {
  return state_vec3(ss.at("robots").at(agent).at("position"));
}

// --- plan assembly -----------------------------------------------------------

/// Accumulates plan elements while tracking a virtual TCP cursor per agent, so
/// relative Move deltas can be derived from absolute waypoints.
struct PlanBuilder {
  ExecutionPlan plan;
  std::map<int, Vec3> cursor;

  explicit PlanBuilder(const Json& ss) {
    const Json& robots = ss.at("robots");
    for (size_t i = 0; i < robots.size(); ++i) {
      cursor[static_cast<int>(i)] = state_vec3(robots.at(i).at("position"));
    }
  }

  void push(std::variant<ActionElement, CheckpointElement> body) {
    PlanElement e;
    e.index = static_cast<int>(plan.elements.size()) + 1;
    e.body = std::move(body);
    plan.elements.push_back(std::move(e));
  }

  void move_to(int agent, const Vec3& target) {
    Vec3 d = target - cursor[agent];
    ActionElement a;
    a.agents = {agent};
    a.primitive = Primitive::Move;
    a.params["delta_x"] = {d.x()};
    a.params["delta_y"] = {d.y()};
    a.params["delta_z"] = {d.z()};
    push(std::move(a));
    cursor[agent] = target;
  }

  /// One synchronized vertical move for several agents (broadcast delta).
  void lift_together(const std::vector<int>& agents, double dz) {
    ActionElement a;
    a.agents = agents;
    a.primitive = Primitive::Move;
    a.params["delta_z"] = {dz};
    push(std::move(a));
    for (int agent : agents) cursor[agent].z() += dz;
  }

  void grasp(int agent) {
    ActionElement a;
    a.agents = {agent};
    a.primitive = Primitive::Grasp;
    push(std::move(a));
  }

  void release(int agent) {
    ActionElement a;
    a.agents = {agent};
    a.primitive = Primitive::Release;
    push(std::move(a));
  }

  void checkpoint(const std::string& name, CheckpointType type,
                  Json conditions) {
    CheckpointElement c;
    c.name = name;
    c.type = type;
    c.conditions = std::move(conditions);
    push(std::move(c));
  }

  void grasp_gate(const std::string& name, int agent, const std::string& object,
                  double pos_tol = 0.02) {
    checkpoint(name, CheckpointType::Grasp,
               Json::array({Json{{"kind", "tcp_near"},
                                 {"agent", agent},
                                 {"object", object},
                                 {"pos_tol", pos_tol}}}));
  }
};

struct TaskPlan {
  std::vector<SubGoal> subgoals;
  ExecutionPlan plan;
};

std::vector<SubGoal> subgoal_list(std::vector<std::string> descriptions) {
  std::vector<SubGoal> out;
  for (size_t i = 0; i < descriptions.size(); ++i) {
    out.push_back(SubGoal{static_cast<int>(i) + 1, std::move(descriptions[i])});
  }
  return out;
}

// Shared waypoint constants.  These mirror the bundled task definitions; the
// builders read live object poses from the structured state, so per-trial
// pose sampling never invalidates a plan.
constexpr double kCubeHalf = 0.02;
constexpr double kHoverAbove = 0.005;  // TCP height above a grasped top face

/// One arm steadies the red cube, the other stacks blue on top of it.  The
/// builders are state-aware so a mid-task replan resumes instead of starting
/// over blindly.
TaskPlan build_cube_stacking(const Json& ss) {
  Vec3 red = object_position(ss, "cube_red");
  Vec3 blue = object_position(ss, "cube_blue");
  int red_holder = object_holder(ss, "cube_red");
  int blue_holder = object_holder(ss, "cube_blue");

  TaskPlan out;
  out.subgoals = subgoal_list(
      {"Grasp both cubes", "Stack the blue cube on the red cube"});
  PlanBuilder b(ss);

  bool stacked = blue_holder < 0 &&
                 std::hypot(blue.x() - red.x(), blue.y() - red.y()) < 0.01 &&
                 std::abs((blue.z() - kCubeHalf) - (red.z() + kCubeHalf)) <
                     0.004;
  if (stacked) {
    b.move_to(1, b.cursor[1] + Vec3(0.0, 0.0, 0.05));
  } else {
    // Steady the base cube, then clear out of the stacking corridor.
    if (red_holder == 0) {
      b.release(0);
    } else if (red_holder < 0) {
      b.move_to(0, red + Vec3(0.0, 0.0, kCubeHalf + kHoverAbove));
      b.grasp_gate("grasp_red_ready", 0, "cube_red");
      b.grasp(0);
      b.release(0);
    }
    b.move_to(0, Vec3(red.x(), red.y() + 0.20, 0.12));

    double carry_z = 0.125;  // blue's bottom rides 4 cm above red's top
    if (blue_holder == 1) {
      b.move_to(1, Vec3(b.cursor[1].x(), b.cursor[1].y(), carry_z));
    } else {
      b.move_to(1, blue + Vec3(0.0, 0.0, kCubeHalf + kHoverAbove));
      b.grasp_gate("grasp_blue_ready", 1, "cube_blue");
      b.grasp(1);
      b.move_to(1, Vec3(blue.x(), blue.y(), carry_z));
    }
    b.move_to(1, Vec3(red.x(), red.y(), carry_z));
    // Lower until blue's bottom is a snap-distance above red's top.
    b.move_to(1, Vec3(red.x(), red.y(),
                      red.z() + kCubeHalf + 0.004 + 2 * kCubeHalf + kHoverAbove));
    b.release(1);
    b.move_to(1, Vec3(red.x(), red.y(), 0.16));
  }
  b.checkpoint("stacked", CheckpointType::Place,
               Json::array({Json{{"kind", "stacked_on"},
                                 {"object", "cube_blue"},
                                 {"base", "cube_red"}},
                            Json{{"kind", "detached"}, {"object", "cube_blue"}}}));
  out.plan = std::move(b.plan);
  return out;
}

/// Both arms close on the ball from opposite sides and lift it together.
TaskPlan build_ball_pickup(const Json& ss) {
  Vec3 ball = object_position(ss, "ball");
  int holder = object_holder(ss, "ball");
  // Ball radius 0.03 + 17.5 mm standoff: inside both the grasp gate and the
  // capture range while the two wrist stacks stay clear of each other.
  const double side = 0.0475;

  TaskPlan out;
  out.subgoals = subgoal_list(
      {"Grasp the ball with both arms", "Lift it together"});
  PlanBuilder b(ss);

  if (holder < 0) {
    b.move_to(0, ball + Vec3(-side, 0.0, 0.0));
    b.grasp_gate("left_contact", 0, "ball");
    b.grasp(0);
    b.move_to(1, ball + Vec3(side, 0.0, 0.0));
    b.grasp_gate("right_contact", 1, "ball");
    b.grasp(1);
  }
  b.lift_together({0, 1}, 0.06);
  b.checkpoint("lifted", CheckpointType::Lift,
               Json::array({Json{{"kind", "attached"}, {"object", "ball"}},
                            Json{{"kind", "clearance"},
                                 {"object", "ball"},
                                 {"min", 0.03}}}));
  out.plan = std::move(b.plan);
  return out;
}

/// Arm 0 lifts the cylinder to a mid-air pose, arm 1 takes it over and sets
/// it down in the drop zone.
TaskPlan build_transfer_cylinder(const Json& ss) {
  Vec3 cyl = object_position(ss, "cylinder");
  int holder = object_holder(ss, "cylinder");
  const Vec3 handover(-0.02, 0.10, 0.18);  // cylinder centre mid-air
  const Vec3 drop_xy(0.10, -0.18, 0.0);
  const double drop_z = 0.084;  // centre height a snap above the table
  // Arm 0 holds the top of the tube, arm 1 takes the bottom from the side;
  // the vertical split keeps the two wrists apart during the exchange.
  const Vec3 top_grip(0.0, 0.0, 0.083);
  const Vec3 low_grip(0.045, 0.0, -0.06);

  TaskPlan out;
  out.subgoals = subgoal_list({"Pick up the cylinder", "Hand it over",
                               "Set it down in the drop zone"});
  PlanBuilder b(ss);

  if (holder != 1) {
    if (holder < 0) {
      b.move_to(0, cyl + top_grip);
      b.grasp_gate("pick_ready", 0, "cylinder");
      b.grasp(0);
      b.move_to(0, cyl + top_grip + Vec3(0.0, 0.0, 0.10));
      cyl.z() += 0.10;
    }
    Vec3 hold_offset = b.cursor[0] - cyl;
    b.move_to(0, handover + hold_offset);
    cyl = handover;
    b.move_to(1, handover + low_grip);
    b.grasp_gate("handover_ready", 1, "cylinder", 0.03);
    b.grasp(1);
    b.release(0);
    b.move_to(0, Vec3(handover.x() - 0.15, handover.y(), 0.28));
  }
  Vec3 carry_offset = b.cursor[1] - cyl;
  b.move_to(1, Vec3(drop_xy.x(), drop_xy.y(), cyl.z()) + carry_offset);
  b.move_to(1, Vec3(drop_xy.x(), drop_xy.y(), drop_z) + carry_offset);
  b.release(1);
  b.checkpoint("delivered", CheckpointType::Place,
               Json::array({Json{{"kind", "near_xy"},
                                 {"object", "cylinder"},
                                 {"target", Json::array({drop_xy.x(), drop_xy.y()})},
                                 {"tol", 0.05}},
                            Json{{"kind", "detached"}, {"object", "cylinder"}},
                            Json{{"kind", "resting"}, {"object", "cylinder"}}}));
  out.plan = std::move(b.plan);
  return out;
}

/// Arm 0 holds the lid aside while arm 1 drops both cucumbers into the pot.
TaskPlan build_place_cucumber(const Json& ss) {
  Vec3 lid = object_position(ss, "pot_lid");
  Vec3 pot = object_position(ss, "pot");
  int lid_holder = object_holder(ss, "pot_lid");

  TaskPlan out;
  out.subgoals =
      subgoal_list({"Uncover the pot", "Drop both cucumbers in"});
  PlanBuilder b(ss);

  if (lid_holder != 0) {
    b.move_to(0, lid + Vec3(0.0, 0.0, 0.008));  // lid top + 3 mm
    b.grasp_gate("lid_ready", 0, "pot_lid");
    b.grasp(0);
  }
  b.move_to(0, b.cursor[0] + Vec3(0.0, 0.0, 0.06));
  b.move_to(0, Vec3(-0.12, 0.25, b.cursor[0].z()));

  const double grasp_above = 0.04;   // TCP sits 5 mm below a cucumber's top
  const double carry_tcp_z = 0.205;  // bottom clears the rim by 2 cm
  const double place_tcp_z = 0.20;   // bottom a snap inside the rim
  int slot = 0;
  for (const std::string& id : {std::string("cucumber_a"),
                                std::string("cucumber_b")}) {
    // Offset the two drop points so the cucumbers stand side by side.
    double place_dx = (slot++ == 0) ? 0.02 : -0.02;
    Vec3 c = object_position(ss, id);
    int holder = object_holder(ss, id);
    bool inside = holder < 0 &&
                  std::hypot(c.x() - pot.x(), c.y() - pot.y()) < 0.045 &&
                  c.z() < 0.09;
    if (inside) continue;
    if (holder != 1) {
      b.move_to(1, c + Vec3(0.0, 0.0, grasp_above));
      b.grasp_gate(id + "_ready", 1, id);
      b.grasp(1);
    }
    b.move_to(1, Vec3(b.cursor[1].x(), b.cursor[1].y(), carry_tcp_z));
    b.move_to(1, Vec3(pot.x() + place_dx, pot.y(), carry_tcp_z));
    b.move_to(1, Vec3(pot.x() + place_dx, pot.y(), place_tcp_z));
    b.release(1);
    b.move_to(1, Vec3(pot.x() + place_dx, pot.y(), 0.28));
  }
  b.checkpoint("filled", CheckpointType::Place,
               Json::array({Json{{"kind", "in_container"},
                                 {"object", "cucumber_a"},
                                 {"container", "pot"}},
                            Json{{"kind", "in_container"},
                                 {"object", "cucumber_b"},
                                 {"container", "pot"}},
                            Json{{"kind", "attached"},
                                 {"object", "pot_lid"},
                                 {"agent", 0}}}));
  out.plan = std::move(b.plan);
  return out;
}

/// The compact arm strokes a held brush against a box the large arm holds up.
TaskPlan build_brush_box(const Json& ss) {
  Vec3 brush = object_position(ss, "brush");
  Vec3 box = object_position(ss, "box");
  int brush_holder = object_holder(ss, "brush");
  int box_holder = object_holder(ss, "box");

  const Vec3 box_carry(0.11, 0.0, 0.14);  // box centre, inside both reaches
  const double touch_dx = 0.0355;   // centre offset: faces 3 mm apart
  const double retreat_dx = 0.0605; // centre offset: faces 28 mm apart

  TaskPlan out;
  out.subgoals = subgoal_list({"Pick up the brush", "Hold the box up",
                               "Brush the box three times"});
  PlanBuilder b(ss);

  Vec3 brush_offset(0.0, 0.0, 0.043);  // TCP above brush centre when held
  if (brush_holder != 1) {
    b.move_to(1, brush + brush_offset);
    b.grasp_gate("brush_ready", 1, "brush");
    b.grasp(1);
  } else {
    brush_offset = b.cursor[1] - brush;
  }

  // Hold the box by the back edge of its top face so the stroking wrist has
  // room: the further the holding hand sits from the brushed face, the wider
  // the gap between the two wrists during the strokes.
  Vec3 box_offset(-0.03, 0.0, 0.030);
  if (box_holder != 0) {
    b.move_to(0, box + box_offset);
    b.grasp_gate("box_ready", 0, "box");
    b.grasp(0);
  } else {
    box_offset = b.cursor[0] - box;
  }
  b.move_to(0, Vec3(box.x(), box.y(), 0.07) + box_offset);
  b.move_to(0, box_carry + box_offset);

  // Lift waist-high over the pickup spot (full stroke height is out of reach
  // that far out), then swing in face-on, rising to stroke height on the way.
  b.move_to(1, Vec3(b.cursor[1].x(), b.cursor[1].y(), 0.15));
  b.move_to(1, box_carry + Vec3(retreat_dx, 0.0, 0.0) + brush_offset);
  for (int stroke = 0; stroke < 3; ++stroke) {
    b.move_to(1, box_carry + Vec3(touch_dx, 0.0, 0.0) + brush_offset);
    b.move_to(1, box_carry + Vec3(retreat_dx, 0.0, 0.0) + brush_offset);
  }
  b.checkpoint("brushed", CheckpointType::Generic,
               Json::array({Json{{"kind", "contact_events"},
                                 {"a", 0},
                                 {"b", 1},
                                 {"min_count", 3}}}));
  out.plan = std::move(b.plan);
  return out;
}

using TaskPlanBuilder = TaskPlan (*)(const Json&);

TaskPlanBuilder find_builder(const std::string& task_id) {
  if (task_id == "cube_stacking") return &build_cube_stacking;
  if (task_id == "ball_pickup") return &build_ball_pickup;
  if (task_id == "transfer_cylinder") return &build_transfer_cylinder;
  if (task_id == "place_cucumber") return &build_place_cucumber;
  if (task_id == "brush_box") return &build_brush_box;
  return nullptr;
}

std::vector<CameraParams> survey_cameras() {
  CameraParams left;
  left.yaw = 0.7;
  left.pitch = 1.1;
  CameraParams right;
  right.yaw = -0.7;
  right.pitch = 1.1;
  return {left, right};
}

// --- scripted planner ----------------------------------------------------------

class ScriptedPlanner : public PlannerAgent {
 public:
  explicit ScriptedPlanner(std::string task_id)
      : task_id_(std::move(task_id)), build_(find_builder(task_id_)) {
    if (!build_) {
      throw EngineError(EngineError::Kind::TaskNotFound,
                        "no scripted planner for task '" + task_id_ + "'");
    }
  }

  std::string id() const override { return "scripted:" + task_id_; }

  PlannerDecision decide(const PlannerRequest& request) override {
    if (request.phase == "planning") {
      int seen = request.plan_progress.value("views_requested", 0);
      std::vector<CameraParams> cams = survey_cameras();
      if (seen < static_cast<int>(cams.size())) {
        PlannerDecision d;
        d.kind = PlannerDecision::Kind::RequestView;
        d.view = cams[static_cast<size_t>(seen)];
        d.reason = "survey the workspace from orbit view " +
                   std::to_string(seen + 1);
        return d;
      }
      TaskPlan tp = build_(request.structured_state);
      PlannerDecision d;
      d.kind = PlannerDecision::Kind::PlanComplete;
      d.subgoals = std::move(tp.subgoals);
      d.plan = std::move(tp.plan);
      d.plan.goal_id = request.goal.id;
      d.plan.key_observations =
          "All task objects are visible and free to manipulate.";
      d.plan.provenance.planner_id = id();
      d.plan.provenance.round = request.round;
      return d;
    }
    // Execution-phase consultation: the deterministic recovery is a fresh
    // plan computed from the live scene, so answer Replan.
    PlannerDecision d;
    d.kind = PlannerDecision::Kind::Replan;
    d.reason = "recompute the plan from the current scene";
    return d;
  }

 private:
  std::string task_id_;
  TaskPlanBuilder build_;
};

// --- misgrasp wrapper ----------------------------------------------------------

class MisgraspPlanner : public PlannerAgent {
 public:
  explicit MisgraspPlanner(std::unique_ptr<PlannerAgent> inner)
      : inner_(std::move(inner)) {}

  std::string id() const override { return "misgrasp(" + inner_->id() + ")"; }

  PlannerDecision decide(const PlannerRequest& request) override {
    if (request.phase == "execution") {
      if (corrupted_ && !replan_sent_) {
        replan_sent_ = true;
        PlannerDecision d;
        d.kind = PlannerDecision::Kind::Replan;
        d.reason = "approach was off, replanning";
        return d;
      }
      return inner_->decide(request);
    }
    PlannerDecision d = inner_->decide(request);
    if (d.kind == PlannerDecision::Kind::PlanComplete && !corrupted_) {
      corrupt_first_approach(d.plan);
    }
    return d;
  }

 private:
  /// Shifts the Move just before the first Grasp sideways so the grasp gate
  /// (or the grasp itself) fails once.
  void corrupt_first_approach(ExecutionPlan& plan) {
    int last_move = -1;
    for (size_t i = 0; i < plan.elements.size(); ++i) {
      if (!plan.elements[i].is_action()) continue;
      const ActionElement& a = plan.elements[i].action();
      if (a.primitive == Primitive::Move) last_move = static_cast<int>(i);
      if (a.primitive == Primitive::Grasp && last_move >= 0) {
        ActionElement bad = plan.elements[last_move].action();
        for (double& v : bad.params["delta_y"]) v += 0.08;
        plan.elements[last_move].body = std::move(bad);
        corrupted_ = true;
        return;
      }
    }
  }

  std::unique_ptr<PlannerAgent> inner_;
  bool corrupted_ = false;
  bool replan_sent_ = false;
};

// --- replay planner -------------------------------------------------------------

class ReplayPlanner : public PlannerAgent {
 public:
  explicit ReplayPlanner(const std::string& log_path) {
    std::string text = read_text_file(log_path);
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      Json rec = parse_json(line, "episode log");
      if (rec.value("type", "") == "decision") records_.push_back(rec);
    }
  }

  std::string id() const override { return "replay"; }

  PlannerDecision decide(const PlannerRequest& request) override {
    if (pos_ >= records_.size()) {
      throw EngineError(EngineError::Kind::MalformedResponse,
                        "replay log exhausted after " +
                            std::to_string(pos_) + " decisions");
    }
    const Json& rec = records_[pos_];
    if (rec.value("phase", "") != request.phase) {
      throw EngineError(EngineError::Kind::MalformedResponse,
                        "replay log diverged: decision " +
                            std::to_string(pos_) + " was recorded in phase '" +
                            rec.value("phase", "") + "', request is '" +
                            request.phase + "'");
    }
    ++pos_;
    return planner_decision_from_json(rec.at("decision"));
  }

 private:
  std::vector<Json> records_;
  size_t pos_ = 0;
};

// --- wire agents ----------------------------------------------------------------

std::string post_json(const std::string& url, const std::string& path,
                      const Json& body, double timeout_s,
                      EngineError::Kind unavailable) {
  httplib::Client client(url);
  auto timeout = std::chrono::milliseconds(
      static_cast<long long>(timeout_s * 1000.0));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Result res = client.Post(path, body.dump(), "application/json");
  if (!res) {
    throw EngineError(unavailable, "service at " + url + path +
                                       " unreachable: " +
                                       httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw EngineError(unavailable, "service at " + url + path +
                                       " answered HTTP " +
                                       std::to_string(res->status));
  }
  return res->body;
}

class WirePlanner : public PlannerAgent {
 public:
  WirePlanner(std::string url, double timeout_s)
      : url_(std::move(url)), timeout_s_(timeout_s) {}

  std::string id() const override { return "wire:" + url_; }

  PlannerDecision decide(const PlannerRequest& request) override {
    std::string body = post_json(url_, "/decide",
                                 planner_request_to_json(request), timeout_s_,
                                 EngineError::Kind::PlannerUnavailable);
    return parse_planner_response(body, request.phase);
  }

 private:
  std::string url_;
  double timeout_s_;
};

// --- script assembly -------------------------------------------------------------

using Op = ScriptExpr::Op;

ScriptExpr ex_add(ScriptExpr a, ScriptExpr b) {
  return ScriptExpr::call(Op::Add, {std::move(a), std::move(b)});
}
ScriptExpr ex_sub(ScriptExpr a, ScriptExpr b) {
  return ScriptExpr::call(Op::Sub, {std::move(a), std::move(b)});
}
ScriptExpr ex_index(ScriptExpr a, int i) {
  return ScriptExpr::call(Op::Index,
                          {std::move(a), ScriptExpr::number(i)});
}
ScriptExpr ex_vec3(double x, double y, double z) {
  return ScriptExpr::vec({x, y, z});
}

/// Builds "coenv-script/1" programs from live-state queries plus deltas, the
/// same choreography the interactive plans use.
struct ScriptBuilder {
  PlanScript script;
  int fresh_ = 0;

  std::string fresh() { return "_t" + std::to_string(fresh_++); }

  void query(const std::string& var, const std::string& path) {
    ScriptStatement st;
    st.kind = ScriptStatement::Kind::Query;
    st.var = var;
    st.path = path;
    script.statements.push_back(std::move(st));
  }

  void let(const std::string& var, ScriptExpr expr) {
    ScriptStatement st;
    st.kind = ScriptStatement::Kind::Let;
    st.var = var;
    st.expr = std::move(expr);
    script.statements.push_back(std::move(st));
  }

  void act_move(int agent, ScriptExpr dx, ScriptExpr dy, ScriptExpr dz) {
    ScriptStatement st;
    st.kind = ScriptStatement::Kind::Act;
    st.primitive = Primitive::Move;
    st.agents = {agent};
    st.act_params["delta_x"] = std::move(dx);
    st.act_params["delta_y"] = std::move(dy);
    st.act_params["delta_z"] = std::move(dz);
    script.statements.push_back(std::move(st));
  }

  /// Moves `agent` so the live vec3 at `anchor_path` lands on `target`.
  /// Axes: any subset of x/y/z; held axes get a zero delta.
  void move_anchor(int agent, const std::string& anchor_path, ScriptExpr target,
                   bool use_xy = true, bool use_z = true) {
    std::string anchor = fresh();
    query(anchor, anchor_path);
    std::string d = fresh();
    let(d, ex_sub(std::move(target), ScriptExpr::ref(anchor)));
    ScriptExpr zero = ScriptExpr::number(0.0);
    act_move(agent,
             use_xy ? ex_index(ScriptExpr::ref(d), 0) : zero,
             use_xy ? ex_index(ScriptExpr::ref(d), 1) : zero,
             use_z ? ex_index(ScriptExpr::ref(d), 2) : zero);
  }

  void act_simple(Primitive p, std::vector<int> agents) {
    ScriptStatement st;
    st.kind = ScriptStatement::Kind::Act;
    st.primitive = p;
    st.agents = std::move(agents);
    script.statements.push_back(std::move(st));
  }

  void act_lift(std::vector<int> agents, double dz) {
    ScriptStatement st;
    st.kind = ScriptStatement::Kind::Act;
    st.primitive = Primitive::Move;
    st.agents = std::move(agents);
    st.act_params["delta_z"] = ScriptExpr::number(dz);
    script.statements.push_back(std::move(st));
  }

  void checkpoint(const std::string& name, CheckpointType type,
                  const std::string& notes = "") {
    ScriptStatement st;
    st.kind = ScriptStatement::Kind::Checkpoint;
    st.cp_name = name;
    st.cp_type = type;
    st.cp_notes = notes;
    script.statements.push_back(std::move(st));
  }

  void print(ScriptExpr e) {
    ScriptStatement st;
    st.kind = ScriptStatement::Kind::Print;
    st.expr = std::move(e);
    script.statements.push_back(std::move(st));
  }
};

/// The cube choreography as a script.  `lift_dz` is parameterized so the
/// two-round fixture can overshoot it; `stale_stack` reproduces the fixture's
/// round-1 mistake of pre-computing the stacking deltas before the lift.
PlanScript cube_script(double lift_dz, bool stale_stack) {
  ScriptBuilder b;
  b.query("red", "objects.cube_red.position");
  b.query("blue", "objects.cube_blue.position");
  // Steady the base cube, then clear out.
  b.move_anchor(0, "robots.0.tcp_position",
                ex_add(ScriptExpr::ref("red"), ex_vec3(0.0, 0.0, 0.025)));
  b.checkpoint("grasp_red_ready", CheckpointType::Grasp);
  b.act_simple(Primitive::Grasp, {0});
  b.act_simple(Primitive::Release, {0});
  b.move_anchor(0, "robots.0.tcp_position",
                ex_add(ScriptExpr::ref("red"), ex_vec3(0.0, 0.20, 0.10)));
  // Pick the blue cube.
  b.move_anchor(1, "robots.1.tcp_position",
                ex_add(ScriptExpr::ref("blue"), ex_vec3(0.0, 0.0, 0.025)));
  b.checkpoint("grasp_blue_ready", CheckpointType::Grasp);
  b.act_simple(Primitive::Grasp, {1});
  b.let("stack_target", ex_add(ScriptExpr::ref("red"), ex_vec3(0.0, 0.0, 0.044)));
  if (stale_stack) {
    // Deltas derived from where the lift *should* end, not where it does.
    b.let("hover",
          ex_add(ScriptExpr::ref("blue"), ex_vec3(0.0, 0.0, lift_dz)));
    b.move_anchor(1, "robots.1.tcp_position",
                  ex_add(ScriptExpr::ref("hover"), ex_vec3(0.0, 0.0, 0.025)));
    b.let("carry", ex_sub(ScriptExpr::ref("red"), ScriptExpr::ref("hover")));
    b.act_move(1, ex_index(ScriptExpr::ref("carry"), 0),
               ex_index(ScriptExpr::ref("carry"), 1), ScriptExpr::number(0.0));
    b.let("descend",
          ex_sub(ScriptExpr::ref("stack_target"), ScriptExpr::ref("hover")));
    b.act_move(1, ScriptExpr::number(0.0), ScriptExpr::number(0.0),
               ex_index(ScriptExpr::ref("descend"), 2));
  } else {
    b.move_anchor(1, "robots.1.tcp_position",
                  ex_add(ScriptExpr::ref("blue"),
                         ex_vec3(0.0, 0.0, lift_dz + 0.025)),
                  /*use_xy=*/false, /*use_z=*/true);
    b.move_anchor(1, "objects.cube_blue.position", ScriptExpr::ref("red"),
                  /*use_xy=*/true, /*use_z=*/false);
    b.move_anchor(1, "objects.cube_blue.position",
                  ScriptExpr::ref("stack_target"),
                  /*use_xy=*/false, /*use_z=*/true);
  }
  b.act_simple(Primitive::Release, {1});
  b.act_lift({1}, 0.07);
  b.checkpoint("stacked", CheckpointType::Place);
  b.query("blue_final", "objects.cube_blue.position");
  b.print(ScriptExpr::ref("blue_final"));
  return b.script;
}

PlanScript ball_script() {
  ScriptBuilder b;
  b.query("ball", "objects.ball.position");
  b.move_anchor(0, "robots.0.tcp_position",
                ex_add(ScriptExpr::ref("ball"), ex_vec3(-0.0475, 0.0, 0.0)));
  b.checkpoint("left_contact", CheckpointType::Grasp);
  b.act_simple(Primitive::Grasp, {0});
  b.move_anchor(1, "robots.1.tcp_position",
                ex_add(ScriptExpr::ref("ball"), ex_vec3(0.0475, 0.0, 0.0)));
  b.checkpoint("right_contact", CheckpointType::Grasp);
  b.act_simple(Primitive::Grasp, {1});
  b.act_lift({0, 1}, 0.06);
  b.checkpoint("lifted", CheckpointType::Lift);
  b.query("ball_final", "objects.ball.position");
  b.print(ScriptExpr::ref("ball_final"));
  return b.script;
}

PlanScript transfer_cylinder_script() {
  ScriptBuilder b;
  b.query("cyl", "objects.cylinder.position");
  b.move_anchor(0, "robots.0.tcp_position",
                ex_add(ScriptExpr::ref("cyl"), ex_vec3(0.0, 0.0, 0.083)));
  b.checkpoint("pick_ready", CheckpointType::Grasp);
  b.act_simple(Primitive::Grasp, {0});
  b.act_lift({0}, 0.10);
  // Carry the cylinder itself to the mid-air handover point, then take its
  // lower half from the side with the second arm.
  b.move_anchor(0, "objects.cylinder.position", ex_vec3(-0.02, 0.10, 0.18));
  b.move_anchor(1, "robots.1.tcp_position", ex_vec3(0.025, 0.10, 0.12));
  b.checkpoint("handover_ready", CheckpointType::Handover);
  b.act_simple(Primitive::Grasp, {1});
  b.act_simple(Primitive::Release, {0});
  b.move_anchor(0, "robots.0.tcp_position", ex_vec3(-0.17, 0.10, 0.28));
  b.move_anchor(1, "objects.cylinder.position", ex_vec3(0.10, -0.18, 0.18),
                /*use_xy=*/true, /*use_z=*/false);
  b.move_anchor(1, "objects.cylinder.position", ex_vec3(0.10, -0.18, 0.084),
                /*use_xy=*/false, /*use_z=*/true);
  b.act_simple(Primitive::Release, {1});
  b.checkpoint("delivered", CheckpointType::Place);
  b.query("cyl_final", "objects.cylinder.position");
  b.print(ScriptExpr::ref("cyl_final"));
  return b.script;
}

PlanScript place_cucumber_script() {
  ScriptBuilder b;
  b.query("lid", "objects.pot_lid.position");
  b.query("pot", "objects.pot.position");
  b.move_anchor(0, "robots.0.tcp_position",
                ex_add(ScriptExpr::ref("lid"), ex_vec3(0.0, 0.0, 0.008)));
  b.checkpoint("lid_ready", CheckpointType::Grasp);
  b.act_simple(Primitive::Grasp, {0});
  b.act_lift({0}, 0.06);
  b.move_anchor(0, "robots.0.tcp_position", ex_vec3(-0.12, 0.25, 0.0),
                /*use_xy=*/true, /*use_z=*/false);
  int slot = 0;
  for (const std::string& id : {std::string("cucumber_a"),
                                std::string("cucumber_b")}) {
    double place_dx = (slot++ == 0) ? 0.02 : -0.02;
    std::string pos = id + "_pos";
    b.query(pos, "objects." + id + ".position");
    b.move_anchor(1, "robots.1.tcp_position",
                  ex_add(ScriptExpr::ref(pos), ex_vec3(0.0, 0.0, 0.04)));
    b.checkpoint(id + "_ready", CheckpointType::Grasp);
    b.act_simple(Primitive::Grasp, {1});
    b.move_anchor(1, "robots.1.tcp_position",
                  ex_add(ScriptExpr::ref("pot"), ex_vec3(place_dx, 0.0, 0.155)),
                  /*use_xy=*/false, /*use_z=*/true);
    b.move_anchor(1, "robots.1.tcp_position",
                  ex_add(ScriptExpr::ref("pot"), ex_vec3(place_dx, 0.0, 0.155)),
                  /*use_xy=*/true, /*use_z=*/false);
    b.move_anchor(1, "robots.1.tcp_position",
                  ex_add(ScriptExpr::ref("pot"), ex_vec3(place_dx, 0.0, 0.15)),
                  /*use_xy=*/false, /*use_z=*/true);
    b.act_simple(Primitive::Release, {1});
    b.act_lift({1}, 0.08);
    b.checkpoint(id + "_placed", CheckpointType::Place);
  }
  b.query("a_final", "objects.cucumber_a.position");
  b.print(ScriptExpr::ref("a_final"));
  return b.script;
}

PlanScript brush_box_script() {
  ScriptBuilder b;
  b.query("brush", "objects.brush.position");
  b.query("box", "objects.box.position");
  b.move_anchor(1, "robots.1.tcp_position",
                ex_add(ScriptExpr::ref("brush"), ex_vec3(0.0, 0.0, 0.043)));
  b.checkpoint("brush_ready", CheckpointType::Grasp);
  b.act_simple(Primitive::Grasp, {1});
  b.move_anchor(0, "robots.0.tcp_position",
                ex_add(ScriptExpr::ref("box"), ex_vec3(-0.03, 0.0, 0.030)));
  b.checkpoint("box_ready", CheckpointType::Grasp);
  b.act_simple(Primitive::Grasp, {0});
  b.move_anchor(0, "objects.box.position", ex_vec3(0.0, 0.0, 0.07),
                /*use_xy=*/false, /*use_z=*/true);
  b.move_anchor(0, "objects.box.position", ex_vec3(0.11, 0.0, 0.14));
  // Lift waist-high over the pickup spot, then swing in face-on, rising to
  // stroke height on the way.
  b.move_anchor(1, "objects.brush.position", ex_vec3(0.0, 0.0, 0.107),
                /*use_xy=*/false, /*use_z=*/true);
  b.move_anchor(1, "objects.brush.position", ex_vec3(0.1705, 0.0, 0.14));
  for (int stroke = 0; stroke < 3; ++stroke) {
    b.move_anchor(1, "objects.brush.position", ex_vec3(0.1455, 0.0, 0.14));
    b.move_anchor(1, "objects.brush.position", ex_vec3(0.1705, 0.0, 0.14));
  }
  b.checkpoint("brushed", CheckpointType::Generic);
  b.query("brush_final", "objects.brush.position");
  b.print(ScriptExpr::ref("brush_final"));
  return b.script;
}

// --- code generators ------------------------------------------------------------

class ScriptedCodeGen : public CodeGenAgent {
 public:
  explicit ScriptedCodeGen(std::string task_id) : task_id_(std::move(task_id)) {
    if (!find_builder(task_id_)) {
      throw EngineError(EngineError::Kind::TaskNotFound,
                        "no scripted code generator for task '" + task_id_ +
                            "'");
    }
  }

  std::string id() const override { return "scripted-codegen:" + task_id_; }

  PlanScript generate(const CodeGenRequest& request) override {
    PlanScript script;
    if (task_id_ == "cube_stacking") {
      script = cube_script(0.08, false);
    } else if (task_id_ == "ball_pickup") {
      script = ball_script();
    } else if (task_id_ == "transfer_cylinder") {
      script = transfer_cylinder_script();
    } else if (task_id_ == "place_cucumber") {
      script = place_cucumber_script();
    } else {
      script = brush_box_script();
    }
    script.round = request.round;
    return script;
  }

 private:
  std::string task_id_;
};

class TwoRoundCodeGen : public CodeGenAgent {
 public:
  std::string id() const override { return "two-round-codegen"; }

  PlanScript generate(const CodeGenRequest& request) override {
    if (request.round <= 1 || !request.feedback) {
      return cube_script(0.90, true);  // hover far beyond the arm's reach
    }
    double gap = 0.0;
    for (const FailureMode& m : request.feedback->failure_modes) {
      if (m.kind == FailureMode::Kind::ReachLimit) {
        gap = m.detail.value("gap_m", 0.0);
        break;
      }
    }
    // Pull the hover down by the reported shortfall (plus clearance for the
    // radial-vs-vertical difference), capped so the sideways carry that
    // follows stays well inside reach too.
    double lift = std::clamp(0.90 - gap - 0.15, 0.105, 0.30);
    return cube_script(lift, false);
  }
};

class FailingCodeGen : public CodeGenAgent {
 public:
  std::string id() const override { return "failing-codegen"; }

  PlanScript generate(const CodeGenRequest& request) override {
    ScriptBuilder b;
    b.query("tcp", "robots.0.tcp_position");
    b.act_lift({0}, 0.02);
    b.print(ScriptExpr::ref("tcp"));
    PlanScript script = b.script;
    script.round = request.round;
    return script;
  }
};

class WireCodeGen : public CodeGenAgent {
 public:
  WireCodeGen(std::string url, double timeout_s)
      : url_(std::move(url)), timeout_s_(timeout_s) {}

  std::string id() const override { return "wire-codegen:" + url_; }

  PlanScript generate(const CodeGenRequest& request) override {
    Json body{{"schema", "coenv-codegen/1"},
              {"goal",
               Json{{"id", request.goal.id},
                    {"description", request.goal.description},
                    {"success_criteria", request.goal.success_criteria},
                    {"hints", request.goal.hints}}},
              {"structured_state", request.structured_state},
              {"task_info", request.task_info},
              {"round", request.round}};
    body["feedback"] =
        request.feedback ? feedback_to_json(*request.feedback) : Json(nullptr);
    std::string text = post_json(url_, "/generate", body, timeout_s_,
                                 EngineError::Kind::CodeGenUnavailable);
    return parse_script(text);
  }

 private:
  std::string url_;
  double timeout_s_;
};

}  // namespace

std::unique_ptr<PlannerAgent> make_scripted_planner(const std::string& task_id) {
  return std::make_unique<ScriptedPlanner>(task_id);
}

std::unique_ptr<PlannerAgent> make_misgrasp_planner(
    std::unique_ptr<PlannerAgent> inner) {
  return std::make_unique<MisgraspPlanner>(std::move(inner));
}

std::unique_ptr<PlannerAgent> make_replay_planner(const std::string& log_path) {
  return std::make_unique<ReplayPlanner>(log_path);
}

std::unique_ptr<PlannerAgent> make_wire_planner(const std::string& url,
                                                double timeout_s) {
  return std::make_unique<WirePlanner>(url, timeout_s);
}

std::unique_ptr<CodeGenAgent> make_scripted_codegen(const std::string& task_id) {
  return std::make_unique<ScriptedCodeGen>(task_id);
}

std::unique_ptr<CodeGenAgent> make_two_round_codegen() {
  return std::make_unique<TwoRoundCodeGen>();
}

std::unique_ptr<CodeGenAgent> make_failing_codegen() {
  return std::make_unique<FailingCodeGen>();
}

std::unique_ptr<CodeGenAgent> make_wire_codegen(const std::string& url,
                                                double timeout_s) {
  return std::make_unique<WireCodeGen>(url, timeout_s);
}

Json planner_request_to_json(const PlannerRequest& request) {
  return Json{{"schema", "coenv-planner/1"},
              {"phase", request.phase},
              {"round", request.round},
              {"goal",
               Json{{"id", request.goal.id},
                    {"description", request.goal.description},
                    {"success_criteria", request.goal.success_criteria},
                    {"hints", request.goal.hints}}},
              {"structured_state", request.structured_state},
              {"observation", request.observation},
              {"plan_progress", request.plan_progress}};
}

Json planner_decision_to_json(const PlannerDecision& decision) {
  switch (decision.kind) {
    case PlannerDecision::Kind::RequestView:
      return Json{{"kind", "request_view"},
                  {"view", camera_to_json(decision.view)},
                  {"reason", decision.reason}};
    case PlannerDecision::Kind::PlanComplete: {
      Json subgoals = Json::array();
      for (const SubGoal& s : decision.subgoals) {
        subgoals.push_back(Json{{"index", s.index},
                                {"description", s.description}});
      }
      return Json{{"kind", "plan_complete"},
                  {"subgoals", subgoals},
                  {"plan", parse_json(serialize_plan(decision.plan),
                                      "decision plan")}};
    }
    case PlannerDecision::Kind::NextActions: {
      Json actions = Json::array();
      for (const ActionElement& a : decision.next.actions) {
        actions.push_back(action_to_json(a));
      }
      Json step_done = Json::array();
      for (bool d : decision.next.step_done) step_done.push_back(d);
      return Json{{"kind", "next_actions"},
                  {"actions", actions},
                  {"step_done", step_done}};
    }
    case PlannerDecision::Kind::Replan:
    default:
      return Json{{"kind", "replan"}, {"reason", decision.reason}};
  }
}

PlannerDecision planner_decision_from_json(const Json& j) {
  PlannerDecision d;
  const std::string kind = j.value("kind", "");
  if (kind == "request_view") {
    d.kind = PlannerDecision::Kind::RequestView;
    d.view = camera_from_json(j.at("view"), "decision.view");
    d.reason = j.value("reason", "");
  } else if (kind == "plan_complete") {
    d.kind = PlannerDecision::Kind::PlanComplete;
    d.plan = parse_plan(j.at("plan").dump());
    if (j.contains("subgoals")) {
      for (const Json& s : j["subgoals"]) {
        d.subgoals.push_back(SubGoal{s.value("index", 0),
                                     s.value("description", "")});
      }
    }
  } else if (kind == "next_actions") {
    d.kind = PlannerDecision::Kind::NextActions;
    for (const Json& a : j.at("actions")) {
      d.next.actions.push_back(action_from_json(a, "decision.actions"));
    }
    if (j.contains("step_done")) {
      for (const Json& s : j["step_done"]) {
        d.next.step_done.push_back(s.get<bool>());
      }
    }
  } else if (kind == "replan") {
    d.kind = PlannerDecision::Kind::Replan;
    d.reason = j.value("reason", "");
  } else {
    throw EngineError(EngineError::Kind::SerializationError,
                      "decision: unknown kind '" + kind + "'");
  }
  return d;
}

}  // namespace coenv
