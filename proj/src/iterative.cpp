#include "coenv/iterative.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace coenv {

// --- expression construction -------------------------------------------------

ScriptExpr ScriptExpr::number(double v) {
  ScriptExpr e;
  e.op = Op::Const;
  e.constant = v;
  return e;
}

ScriptExpr ScriptExpr::vec(std::vector<double> v) {
  ScriptExpr e;
  e.op = Op::VecConst;
  e.vec_constant = std::move(v);
  return e;
}

ScriptExpr ScriptExpr::ref(std::string name) {
  ScriptExpr e;
  e.op = Op::Var;
  e.var = std::move(name);
  return e;
}

ScriptExpr ScriptExpr::call(Op op, std::vector<ScriptExpr> args) {
  ScriptExpr e;
  e.op = op;
  e.args = std::move(args);
  return e;
}

namespace {

// Thrown inside statement execution; execute_script converts it into the
// RunOutput error with the statement index attached.
struct ScriptThrow {
  std::string message;
};

struct Value {
  bool is_vec = false;
  double scalar = 0.0;
  std::vector<double> vec;
};

const char* op_name(ScriptExpr::Op op) {
  switch (op) {
    case ScriptExpr::Op::Const: return "const";
    case ScriptExpr::Op::VecConst: return "vec";
    case ScriptExpr::Op::Var: return "var";
    case ScriptExpr::Op::Add: return "add";
    case ScriptExpr::Op::Sub: return "sub";
    case ScriptExpr::Op::Mul: return "mul";
    case ScriptExpr::Op::Div: return "div";
    case ScriptExpr::Op::Min: return "min";
    case ScriptExpr::Op::Max: return "max";
    case ScriptExpr::Op::Norm: return "norm";
    case ScriptExpr::Op::Index: return "index";
  }
  return "?";
}

std::optional<ScriptExpr::Op> call_op_from_name(const std::string& name) {
  using Op = ScriptExpr::Op;
  if (name == "add") return Op::Add;
  if (name == "sub") return Op::Sub;
  if (name == "mul") return Op::Mul;
  if (name == "div") return Op::Div;
  if (name == "min") return Op::Min;
  if (name == "max") return Op::Max;
  if (name == "norm") return Op::Norm;
  if (name == "index") return Op::Index;
  return std::nullopt;
}

size_t op_arity(ScriptExpr::Op op) {
  switch (op) {
    case ScriptExpr::Op::Norm: return 1;
    default: return 2;
  }
}

Value eval_expr(const ScriptExpr& e, const std::map<std::string, Value>& env) {
  using Op = ScriptExpr::Op;
  switch (e.op) {
    case Op::Const: {
      Value v;
      v.scalar = e.constant;
      return v;
    }
    case Op::VecConst: {
      Value v;
      v.is_vec = true;
      v.vec = e.vec_constant;
      return v;
    }
    case Op::Var: {
      auto it = env.find(e.var);
      if (it == env.end()) throw ScriptThrow{"undefined variable '" + e.var + "'"};
      return it->second;
    }
    default:
      break;
  }
  if (e.args.size() != op_arity(e.op)) {
    throw ScriptThrow{std::string("operator '") + op_name(e.op) + "' expects " +
                      std::to_string(op_arity(e.op)) + " arguments, got " +
                      std::to_string(e.args.size())};
  }
  Value a = eval_expr(e.args[0], env);

  if (e.op == Op::Norm) {
    if (!a.is_vec) throw ScriptThrow{"norm expects a vector"};
    double sum = 0.0;
    for (double x : a.vec) sum += x * x;
    Value v;
    v.scalar = std::sqrt(sum);
    return v;
  }

  Value b = eval_expr(e.args[1], env);

  switch (e.op) {
    case Op::Add:
    case Op::Sub: {
      double sign = e.op == Op::Sub ? -1.0 : 1.0;
      if (!a.is_vec && !b.is_vec) {
        Value v;
        v.scalar = a.scalar + sign * b.scalar;
        return v;
      }
      if (a.is_vec && b.is_vec) {
        if (a.vec.size() != b.vec.size()) {
          throw ScriptThrow{"vector size mismatch in add/sub"};
        }
        Value v;
        v.is_vec = true;
        v.vec.resize(a.vec.size());
        for (size_t i = 0; i < a.vec.size(); ++i) {
          v.vec[i] = a.vec[i] + sign * b.vec[i];
        }
        return v;
      }
      throw ScriptThrow{"add/sub cannot mix scalar and vector"};
    }
    case Op::Mul: {
      if (!a.is_vec && !b.is_vec) {
        Value v;
        v.scalar = a.scalar * b.scalar;
        return v;
      }
      const Value& vv = a.is_vec ? a : b;
      const Value& sv = a.is_vec ? b : a;
      if (sv.is_vec) throw ScriptThrow{"mul of two vectors is not defined"};
      Value v;
      v.is_vec = true;
      v.vec.resize(vv.vec.size());
      for (size_t i = 0; i < vv.vec.size(); ++i) v.vec[i] = vv.vec[i] * sv.scalar;
      return v;
    }
    case Op::Div: {
      if (b.is_vec) throw ScriptThrow{"division by a vector is not defined"};
      if (b.scalar == 0.0) throw ScriptThrow{"division by zero"};
      if (!a.is_vec) {
        Value v;
        v.scalar = a.scalar / b.scalar;
        return v;
      }
      Value v;
      v.is_vec = true;
      v.vec.resize(a.vec.size());
      for (size_t i = 0; i < a.vec.size(); ++i) v.vec[i] = a.vec[i] / b.scalar;
      return v;
    }
    case Op::Min:
    case Op::Max: {
      if (a.is_vec || b.is_vec) throw ScriptThrow{"min/max expect scalars"};
      Value v;
      v.scalar = e.op == Op::Min ? std::min(a.scalar, b.scalar)
                                 : std::max(a.scalar, b.scalar);
      return v;
    }
    case Op::Index: {
      if (!a.is_vec) throw ScriptThrow{"index expects a vector"};
      if (e.args[1].op != Op::Const) {
        throw ScriptThrow{"index position must be a constant"};
      }
      double raw = b.scalar;
      long i = std::lround(raw);
      if (i < 0 || i >= static_cast<long>(a.vec.size())) {
        throw ScriptThrow{"index " + std::to_string(i) +
                          " out of range for vector of size " +
                          std::to_string(a.vec.size())};
      }
      Value v;
      v.scalar = a.vec[static_cast<size_t>(i)];
      return v;
    }
    default:
      throw ScriptThrow{"unreachable operator"};
  }
}

/// Queryable state paths: objects.<id>.{position,rpy,size,attached_to,
/// top_z,bottom_z,graspable_width}, robots.<i>.{tcp_position,tcp_rpy,
/// gripper,config}.
Value read_state_path(const World& world, const SceneState& scene,
                      const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string token;
  while (std::getline(ss, token, '.')) parts.push_back(token);
  if (parts.size() != 3) {
    throw ScriptThrow{"state path '" + path +
                      "' must be <section>.<key>.<field>"};
  }
  auto vec3_value = [](const Vec3& x) {
    Value v;
    v.is_vec = true;
    v.vec = {x.x(), x.y(), x.z()};
    return v;
  };

  if (parts[0] == "objects") {
    auto it = scene.objects.find(parts[1]);
    if (it == scene.objects.end()) {
      throw ScriptThrow{"unknown object '" + parts[1] + "'"};
    }
    const SceneObject& obj = it->second;
    if (parts[2] == "position") return vec3_value(obj.pose.translation);
    if (parts[2] == "rpy") return vec3_value(obj.pose.rpy());
    if (parts[2] == "size") return vec3_value(obj.shape.size);
    if (parts[2] == "attached_to") {
      Value v;
      v.scalar = obj.attached_to ? obj.attached_to->agent_id : -1.0;
      return v;
    }
    if (parts[2] == "top_z") {
      Value v;
      v.scalar = obj.top_z();
      return v;
    }
    if (parts[2] == "bottom_z") {
      Value v;
      v.scalar = obj.bottom_z();
      return v;
    }
    if (parts[2] == "graspable_width") {
      Value v;
      v.scalar = obj.graspable_width();
      return v;
    }
    throw ScriptThrow{"unknown object field '" + parts[2] + "'"};
  }

  if (parts[0] == "robots") {
    int agent = -1;
    try {
      agent = std::stoi(parts[1]);
    } catch (const std::exception&) {
      throw ScriptThrow{"robot index '" + parts[1] + "' is not a number"};
    }
    if (agent < 0 || agent >= static_cast<int>(scene.agents.size())) {
      throw ScriptThrow{"unknown robot " + parts[1]};
    }
    if (parts[2] == "tcp_position") {
      return vec3_value(world.agent_tcp(scene, agent).translation);
    }
    if (parts[2] == "tcp_rpy") {
      return vec3_value(world.agent_tcp(scene, agent).rpy());
    }
    if (parts[2] == "gripper") {
      Value v;
      v.scalar = scene.agents[agent].config.gripper;
      return v;
    }
    if (parts[2] == "config") {
      Value v;
      v.is_vec = true;
      v.vec = scene.agents[agent].config.values;
      return v;
    }
    throw ScriptThrow{"unknown robot field '" + parts[2] + "'"};
  }

  throw ScriptThrow{"unknown state section '" + parts[0] + "'"};
}

std::string value_repr(const Value& v) {
  if (!v.is_vec) return Json(v.scalar).dump();
  return Json(v.vec).dump();
}

// --- script (de)serialization ------------------------------------------------

Json expr_to_json(const ScriptExpr& e) {
  using Op = ScriptExpr::Op;
  switch (e.op) {
    case Op::Const: return Json{{"num", e.constant}};
    case Op::VecConst: return Json{{"vec", e.vec_constant}};
    case Op::Var: return Json{{"var", e.var}};
    default: {
      Json args = Json::array();
      for (const ScriptExpr& a : e.args) args.push_back(expr_to_json(a));
      return Json{{"call", op_name(e.op)}, {"args", args}};
    }
  }
}

ScriptExpr expr_from_json(const Json& j, const std::string& where) {
  if (!j.is_object()) {
    throw EngineError(EngineError::Kind::SerializationError,
                      where + ": expression must be an object");
  }
  if (j.contains("num")) return ScriptExpr::number(j["num"].get<double>());
  if (j.contains("vec")) {
    return ScriptExpr::vec(j["vec"].get<std::vector<double>>());
  }
  if (j.contains("var")) return ScriptExpr::ref(j["var"].get<std::string>());
  if (j.contains("call")) {
    auto op = call_op_from_name(j["call"].get<std::string>());
    if (!op) {
      throw EngineError(EngineError::Kind::SerializationError,
                        where + ": unknown operator '" +
                            j["call"].get<std::string>() + "'");
    }
    std::vector<ScriptExpr> args;
    if (j.contains("args")) {
      for (const Json& a : j["args"]) {
        args.push_back(expr_from_json(a, where + ".args"));
      }
    }
    return ScriptExpr::call(*op, std::move(args));
  }
  throw EngineError(EngineError::Kind::SerializationError,
                    where + ": expression needs num/vec/var/call");
}

}  // namespace

std::string serialize_script(const PlanScript& script) {
  Json statements = Json::array();
  for (const ScriptStatement& st : script.statements) {
    Json j;
    switch (st.kind) {
      case ScriptStatement::Kind::Query:
        j = Json{{"op", "query"}, {"var", st.var}, {"path", st.path}};
        break;
      case ScriptStatement::Kind::Let:
        j = Json{{"op", "let"}, {"var", st.var}, {"expr", expr_to_json(st.expr)}};
        break;
      case ScriptStatement::Kind::Act: {
        Json params = Json::object();
        for (const auto& [key, expr] : st.act_params) {
          params[key] = expr_to_json(expr);
        }
        j = Json{{"op", "act"},
                 {"primitive", primitive_name(st.primitive)},
                 {"agents", st.agents},
                 {"params", params}};
        break;
      }
      case ScriptStatement::Kind::Checkpoint:
        j = Json{{"op", "checkpoint"},
                 {"name", st.cp_name},
                 {"type", checkpoint_type_name(st.cp_type)}};
        if (!st.cp_notes.empty()) j["notes"] = st.cp_notes;
        break;
      case ScriptStatement::Kind::Print:
        j = Json{{"op", "print"}, {"expr", expr_to_json(st.expr)}};
        break;
    }
    statements.push_back(j);
  }
  Json j{{"schema", "coenv-script/1"},
         {"round", script.round},
         {"statements", statements}};
  return j.dump(2) + "\n";
}

PlanScript parse_script(const std::string& json_text) {
  Json j = parse_json(json_text, "script");
  require_schema(j, "coenv-script/1");
  PlanScript script;
  script.round = j.value("round", 1);
  const Json& statements = require_field(j, "statements", "script");
  if (!statements.is_array()) {
    throw EngineError(EngineError::Kind::SerializationError,
                      "script: 'statements' must be an array");
  }
  int idx = 0;
  for (const Json& js : statements) {
    std::string where = "script.statements[" + std::to_string(idx) + "]";
    ScriptStatement st;
    const std::string op = require_string(js, "op", where);
    if (op == "query") {
      st.kind = ScriptStatement::Kind::Query;
      st.var = require_string(js, "var", where);
      st.path = require_string(js, "path", where);
    } else if (op == "let") {
      st.kind = ScriptStatement::Kind::Let;
      st.var = require_string(js, "var", where);
      st.expr = expr_from_json(require_field(js, "expr", where), where);
    } else if (op == "act") {
      st.kind = ScriptStatement::Kind::Act;
      st.primitive = primitive_from_name(require_string(js, "primitive", where));
      const Json& agents = require_field(js, "agents", where);
      for (const Json& a : agents) st.agents.push_back(a.get<int>());
      if (js.contains("params")) {
        for (auto it = js["params"].begin(); it != js["params"].end(); ++it) {
          st.act_params[it.key()] =
              expr_from_json(it.value(), where + ".params." + it.key());
        }
      }
    } else if (op == "checkpoint") {
      st.kind = ScriptStatement::Kind::Checkpoint;
      st.cp_name = require_string(js, "name", where);
      st.cp_type = checkpoint_type_from_name(require_string(js, "type", where));
      if (js.contains("notes")) st.cp_notes = js["notes"].get<std::string>();
    } else if (op == "print") {
      st.kind = ScriptStatement::Kind::Print;
      st.expr = expr_from_json(require_field(js, "expr", where), where);
    } else {
      throw EngineError(EngineError::Kind::SerializationError,
                        where + ": unknown op '" + op + "'");
    }
    script.statements.push_back(std::move(st));
    ++idx;
  }
  return script;
}

namespace {

void check_expr_static(const ScriptExpr& e,
                       const std::set<std::string>& defined, int index,
                       std::vector<Issue>* issues) {
  using Op = ScriptExpr::Op;
  switch (e.op) {
    case Op::Const:
    case Op::VecConst:
      return;
    case Op::Var:
      if (!defined.count(e.var)) {
        issues->push_back(Issue{"UndefinedVariable", index,
                                "variable '" + e.var + "' used before definition"});
      }
      return;
    default:
      break;
  }
  if (e.args.size() != op_arity(e.op)) {
    issues->push_back(Issue{"Arity", index,
                            std::string("operator '") + op_name(e.op) +
                                "' expects " + std::to_string(op_arity(e.op)) +
                                " arguments, got " +
                                std::to_string(e.args.size())});
  }
  if (e.op == Op::Index && e.args.size() == 2 &&
      e.args[1].op != Op::Const) {
    issues->push_back(Issue{"Arity", index,
                            "index position must be a numeric constant"});
  }
  for (const ScriptExpr& a : e.args) {
    check_expr_static(a, defined, index, issues);
  }
}

}  // namespace

std::vector<Issue> validate_script(const PlanScript& script) {
  std::vector<Issue> issues;
  std::set<std::string> defined;
  int idx = 0;
  for (const ScriptStatement& st : script.statements) {
    switch (st.kind) {
      case ScriptStatement::Kind::Query:
        if (st.var.empty()) {
          issues.push_back(Issue{"MalformedStatement", idx, "query without var"});
        }
        if (st.path.empty()) {
          issues.push_back(Issue{"MalformedStatement", idx, "query without path"});
        }
        defined.insert(st.var);
        break;
      case ScriptStatement::Kind::Let:
        check_expr_static(st.expr, defined, idx, &issues);
        if (st.var.empty()) {
          issues.push_back(Issue{"MalformedStatement", idx, "let without var"});
        }
        defined.insert(st.var);
        break;
      case ScriptStatement::Kind::Act:
        if (st.agents.empty()) {
          issues.push_back(Issue{"InvalidAgent", idx, "act with no agents"});
        }
        for (const auto& [key, expr] : st.act_params) {
          check_expr_static(expr, defined, idx, &issues);
        }
        break;
      case ScriptStatement::Kind::Checkpoint:
        if (st.cp_name.empty()) {
          issues.push_back(
              Issue{"MalformedStatement", idx, "checkpoint without name"});
        }
        break;
      case ScriptStatement::Kind::Print:
        check_expr_static(st.expr, defined, idx, &issues);
        break;
    }
    ++idx;
  }
  return issues;
}

namespace {

CheckpointSnapshot make_snapshot(const World& world, const SceneState& scene,
                                 const std::string& name, CheckpointType type,
                                 const std::string& notes) {
  CheckpointSnapshot snap;
  snap.name = name;
  snap.type = type;
  snap.notes = notes;
  snap.state_summary = structured_state_json(world, scene);
  return snap;
}

}  // namespace

RunOutput execute_script(const World& world, const PlanScript& script,
                         const SceneState& scene0, const IterativeConfig& cfg,
                         const IkOptions& ik) {
  RunOutput out;
  out.trajectory.initial = scene0;
  out.trajectory.states.push_back(scene0);

  std::vector<Issue> issues = validate_script(script);
  if (!issues.empty()) {
    const Issue& first = issues.front();
    out.error = ScriptErrorInfo{"script_error", first.element_index,
                                first.code + ": " + first.detail};
    out.checkpoints.push_back(make_snapshot(world, scene0, "EXECUTION_ERROR",
                                            CheckpointType::Generic,
                                            out.error->message));
    return out;
  }

  SceneState scene = scene0;
  std::map<std::string, Value> env;
  std::ostringstream stdout_text;
  const auto wall_start = std::chrono::steady_clock::now();

  auto timed_out = [&]() {
    if (scene.step - scene0.step > cfg.step_budget) return true;
    std::chrono::duration<double> elapsed =
        std::chrono::steady_clock::now() - wall_start;
    return elapsed.count() > cfg.wall_budget_s;
  };

  int idx = -1;
  for (const ScriptStatement& st : script.statements) {
    ++idx;
    try {
      switch (st.kind) {
        case ScriptStatement::Kind::Query:
          env[st.var] = read_state_path(world, scene, st.path);
          break;
        case ScriptStatement::Kind::Let:
          env[st.var] = eval_expr(st.expr, env);
          break;
        case ScriptStatement::Kind::Print: {
          Value v = eval_expr(st.expr, env);
          stdout_text << value_repr(v) << "\n";
          break;
        }
        case ScriptStatement::Kind::Checkpoint:
          out.checkpoints.push_back(
              make_snapshot(world, scene, st.cp_name, st.cp_type, st.cp_notes));
          break;
        case ScriptStatement::Kind::Act: {
          ActionElement act;
          act.primitive = st.primitive;
          act.agents = st.agents;
          for (const auto& [key, expr] : st.act_params) {
            Value v = eval_expr(expr, env);
            if (v.is_vec) {
              if (v.vec.size() != st.agents.size() && v.vec.size() != 1) {
                throw ScriptThrow{"param '" + key + "' has " +
                                  std::to_string(v.vec.size()) +
                                  " values for " +
                                  std::to_string(st.agents.size()) + " agents"};
              }
              act.params[key] = v.vec;
            } else {
              act.params[key] = {v.scalar};
            }
          }
          PlanElement element;
          element.index = idx;
          element.body = act;

          SceneState before = scene;
          PrimitiveOutcome result = world.apply_primitive(scene, element, ik);
          scene = result.scene;

          TrajectoryStep step;
          step.element_index = idx;
          step.element = element;
          for (size_t i = 0; i < before.agents.size(); ++i) {
            step.start_configs[static_cast<int>(i)] = before.agents[i].config;
          }
          step.end_configs = result.end_configs;
          step.events = result.events;
          out.trajectory.steps.push_back(step);
          out.trajectory.states.push_back(scene);
          for (const Event& e : result.events) {
            out.events.push_back(e);
            // The reach diagnostic every generated program must surface.
            if (e.kind == EventKind::ReachLimit) {
              stdout_text << "TARGET: " << e.payload["target"].dump()
                          << " ACTUAL: " << e.payload["actual"].dump()
                          << " GAP: " << e.payload["gap_m"].dump() << "\n";
            }
          }
          break;
        }
      }
    } catch (const ScriptThrow& err) {
      out.error = ScriptErrorInfo{"script_error", idx, err.message};
      out.stdout_text = stdout_text.str();
      out.checkpoints.push_back(make_snapshot(world, scene, "EXECUTION_ERROR",
                                              CheckpointType::Generic,
                                              err.message));
      return out;
    }
    if (timed_out()) {
      out.error = ScriptErrorInfo{
          "timeout", idx,
          "budget exhausted after statement " + std::to_string(idx)};
      out.stdout_text = stdout_text.str();
      out.checkpoints.push_back(make_snapshot(world, scene, "TIMEOUT_ERROR",
                                              CheckpointType::Generic,
                                              out.error->message));
      return out;
    }
  }

  out.stdout_text = stdout_text.str();
  out.checkpoints.push_back(make_snapshot(world, scene, "final_state",
                                          CheckpointType::Generic, ""));
  return out;
}

const char* failure_mode_name(FailureMode::Kind k) {
  switch (k) {
    case FailureMode::Kind::CollisionEvent: return "CollisionEvent";
    case FailureMode::Kind::UnachievedSubgoal: return "UnachievedSubgoal";
    case FailureMode::Kind::PoseError: return "PoseError";
    case FailureMode::Kind::GraspMiss: return "GraspMiss";
    case FailureMode::Kind::ReachLimit: return "ReachLimit";
    case FailureMode::Kind::Timeout: return "Timeout";
    case FailureMode::Kind::ScriptError: return "ScriptError";
  }
  return "?";
}

Json feedback_to_json(const Feedback& f) {
  Json modes = Json::array();
  for (const FailureMode& m : f.failure_modes) {
    modes.push_back(Json{{"kind", failure_mode_name(m.kind)},
                         {"detail", m.detail}});
  }
  Json snapshots = Json::array();
  for (const CheckpointSnapshot& s : f.checkpoint_snapshots) {
    snapshots.push_back(Json{{"name", s.name},
                             {"type", checkpoint_type_name(s.type)},
                             {"notes", s.notes},
                             {"state_summary", s.state_summary}});
  }
  return Json{{"round", f.round},
              {"failure_modes", modes},
              {"checkpoint_snapshots", snapshots},
              {"stdout", f.stdout_text},
              {"suggestions", f.suggestions}};
}

AnalyzeResult analyze_run(const World& world, const TaskSpec& task,
                          const RunOutput& run) {
  AnalyzeResult out;
  const SceneState& final_state = run.trajectory.final_state();
  std::vector<MilestoneResult> milestones =
      eval_milestones(task, world, final_state);
  out.achieved = !milestones.empty() && milestones.back().satisfied &&
                 !run.error;

  Feedback& fb = out.feedback;
  fb.checkpoint_snapshots = run.checkpoints;
  fb.stdout_text = run.stdout_text;
  if (out.achieved) return out;

  std::ostringstream suggestions;

  if (run.error) {
    FailureMode m;
    m.kind = run.error->what == "timeout" ? FailureMode::Kind::Timeout
                                          : FailureMode::Kind::ScriptError;
    m.detail = Json{{"statement_index", run.error->statement_index},
                    {"message", run.error->message}};
    fb.failure_modes.push_back(m);
    suggestions << (m.kind == FailureMode::Kind::Timeout
                        ? "Reduce the amount of motion per round. "
                        : "Fix the script error before anything else. ");
  }

  // Collision re-scan: inter-agent penetration at any visited state.
  bool collision_reported = false;
  for (size_t si = 0; si < run.trajectory.states.size() && !collision_reported;
       ++si) {
    const SceneState& s = run.trajectory.states[si];
    for (size_t i = 0; i < s.agents.size() && !collision_reported; ++i) {
      for (size_t j = i + 1; j < s.agents.size(); ++j) {
        double d = world.inter_agent_distance(s, static_cast<int>(i),
                                              static_cast<int>(j));
        if (d < 0.0) {
          FailureMode m;
          m.kind = FailureMode::Kind::CollisionEvent;
          m.detail = Json{{"state_index", si},
                          {"step", s.step},
                          {"agents", Json::array({i, j})},
                          {"penetration_m", -d}};
          fb.failure_modes.push_back(m);
          suggestions << "Keep the arms separated; they interpenetrate. ";
          collision_reported = true;
          break;
        }
      }
    }
  }

  for (const Event& e : run.events) {
    if (e.kind == EventKind::GraspMissed) {
      FailureMode m;
      m.kind = FailureMode::Kind::GraspMiss;
      m.detail = e.payload;
      fb.failure_modes.push_back(m);
      suggestions << "Move the TCP onto the object before closing. ";
    } else if (e.kind == EventKind::ReachLimit) {
      FailureMode m;
      m.kind = FailureMode::Kind::ReachLimit;
      m.detail = e.payload;
      fb.failure_modes.push_back(m);
      suggestions << "Shorten the motion by the reported gap. ";
    } else if (e.kind == EventKind::Dropped) {
      FailureMode m;
      m.kind = FailureMode::Kind::PoseError;
      m.detail = e.payload;
      fb.failure_modes.push_back(m);
      suggestions << "Coordinate both arms so the held object does not drift. ";
    }
  }

  for (const MilestoneResult& m : milestones) {
    if (!m.satisfied) {
      FailureMode fm;
      fm.kind = FailureMode::Kind::UnachievedSubgoal;
      fm.detail = Json{{"milestone", m.milestone_id}};
      fb.failure_modes.push_back(fm);
      suggestions << "Milestone " << m.milestone_id << " was not reached. ";
      break;  // the first unsatisfied milestone is the root cause
    }
  }

  if (fb.failure_modes.empty()) {
    // Defensive: the run neither errored nor missed a milestone but achieved
    // is false -- only possible when milestones is empty.
    FailureMode fm;
    fm.kind = FailureMode::Kind::UnachievedSubgoal;
    fm.detail = Json{{"milestone", "final"}};
    fb.failure_modes.push_back(fm);
  }
  fb.suggestions = suggestions.str();
  return out;
}

namespace {

Json task_info_json(const TaskSpec& task) {
  Json robots = Json::array();
  for (const TaskRobotSpec& r : task.robots) {
    robots.push_back(Json{{"agent_id", r.agent_id},
                          {"model", r.model},
                          {"name", r.name},
                          {"role", r.role}});
  }
  Json objects = Json::array();
  for (const TaskObjectSpec& o : task.objects) {
    objects.push_back(Json{{"id", o.object.id},
                           {"name", o.object.name},
                           {"description", o.object.description},
                           {"size", shape_to_json(o.object.shape)},
                           {"graspable_width", o.object.graspable_width()}});
  }
  Json milestones = Json::array();
  for (const MilestoneSpec& m : task.milestones) {
    milestones.push_back(Json{{"id", m.id}, {"description", m.description}});
  }
  return Json{{"robots", robots},
              {"objects", objects},
              {"hints", task.hints},
              {"milestones", milestones}};
}

}  // namespace

IterativeResult run_iterative(const World& world, const TaskSpec& task,
                              const SceneState& scene0, CodeGenAgent& codegen,
                              const IterativeConfig& cfg, const IkOptions& ik,
                              const IterativeHooks* hooks) {
  if (cfg.m_max < 1) {
    throw EngineError(EngineError::Kind::ParamRange,
                      "run_iterative: m_max must be >= 1");
  }
  IterativeResult result;
  EpisodeResult& episode = result.episode;
  episode.trajectory.initial = scene0;

  std::optional<Feedback> feedback;  // empty for round 1

  for (int m = 1; m <= cfg.m_max; ++m) {
    CodeGenRequest request;
    request.goal = task_goal(task);
    request.structured_state = structured_state_json(world, scene0);
    request.task_info = task_info_json(task);
    request.round = m;
    request.feedback = feedback;

    PlanScript script = codegen.generate(request);
    script.round = m;

    // Stateless by construction: every round starts from scene0.
    RunOutput run = execute_script(world, script, scene0, cfg, ik);
    AnalyzeResult analysis = analyze_run(world, task, run);
    analysis.feedback.round = m;

    if (hooks && hooks->on_round) {
      hooks->on_round(m, script, run, analysis);
    }

    episode.reset_count = m;
    episode.planner_calls = m;
    result.scripts.push_back(std::move(script));
    result.feedbacks.push_back(analysis.feedback);

    if (analysis.achieved) {
      episode.outcome = Outcome::Success;
      episode.trajectory = run.trajectory;
      episode.milestones =
          eval_milestones(task, world, run.trajectory.final_state());
      result.runs.push_back(std::move(run));
      return result;
    }
    if (m == cfg.m_max) {
      episode.outcome = Outcome::Fail;
      episode.trajectory = run.trajectory;
      episode.milestones =
          eval_milestones(task, world, run.trajectory.final_state());
    }
    feedback = analysis.feedback;
    result.runs.push_back(std::move(run));
  }
  return result;
}

void write_run_artifacts(const std::string& dir, const World& world,
                         const TaskSpec& task, const RunOutput& run) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw EngineError(EngineError::Kind::IoError,
                      "cannot create artifact directory '" + dir + "': " +
                          ec.message());
  }

  auto safe_name = [](const std::string& name) {
    std::string out;
    for (char c : name) {
      out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
                 ? c
                 : '_';
    }
    return out.empty() ? std::string("unnamed") : out;
  };

  Json checkpoint_names = Json::array();
  for (const CheckpointSnapshot& s : run.checkpoints) {
    checkpoint_names.push_back(s.name);
    fs::path cdir = fs::path(dir) / "checkpoints" / safe_name(s.name);
    fs::create_directories(cdir, ec);
    Json state{{"name", s.name},
               {"type", checkpoint_type_name(s.type)},
               {"notes", s.notes},
               {"state", s.state_summary}};
    write_text_file((cdir / "states.json").string(), state.dump(2) + "\n");
  }

  Json summary;
  summary["error"] = run.error
                         ? Json{{"what", run.error->what},
                                {"statement_index", run.error->statement_index},
                                {"message", run.error->message}}
                         : Json(nullptr);
  summary["final_state"] =
      structured_state_json(world, run.trajectory.final_state());
  summary["checkpoints"] = checkpoint_names;
  Json milestones = Json::array();
  for (const MilestoneResult& m :
       eval_milestones(task, world, run.trajectory.final_state())) {
    milestones.push_back(Json{{"id", m.milestone_id}, {"satisfied", m.satisfied}});
  }
  summary["milestones"] = milestones;
  write_text_file((fs::path(dir) / "summary.json").string(),
                  summary.dump(2) + "\n");
  write_text_file((fs::path(dir) / "execution_stdout.txt").string(),
                  run.stdout_text);
}

}  // namespace coenv
