#include "coenv/plan.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace coenv {

namespace {

std::string upper(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  return out;
}

std::string truncate_raw(const std::string& text) {
  constexpr size_t kMax = 400;
  if (text.size() <= kMax) return text;
  return text.substr(0, kMax) + "...";
}

[[noreturn]] void malformed(const std::string& why, const std::string& raw) {
  throw EngineError(EngineError::Kind::MalformedResponse,
                    why + "; raw: " + truncate_raw(raw));
}

/// Inner text of the first <tag>...</tag> block, or nullopt.
std::optional<std::string> tagged_block(const std::string& text,
                                        const std::string& tag) {
  const std::string open = "<" + tag + ">";
  const std::string close = "</" + tag + ">";
  size_t a = text.find(open);
  if (a == std::string::npos) return std::nullopt;
  a += open.size();
  size_t b = text.find(close, a);
  if (b == std::string::npos) return std::nullopt;
  return text.substr(a, b - a);
}

std::string strip(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

/// First balanced JSON value ({...} or [...]) inside `text`.
std::optional<std::string> json_slice(const std::string& text) {
  size_t start = text.find_first_of("{[");
  if (start == std::string::npos) return std::nullopt;
  char open = text[start];
  char close = open == '{' ? '}' : ']';
  int depth = 0;
  bool in_string = false;
  for (size_t i = start; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == open) {
      ++depth;
    } else if (c == close) {
      if (--depth == 0) return text.substr(start, i - start + 1);
    }
  }
  return std::nullopt;
}

std::vector<double> param_values(const Json& v, const std::string& key,
                                 const std::string& raw) {
  std::vector<double> values;
  if (v.is_number()) {
    values.push_back(v.get<double>());
  } else if (v.is_array()) {
    for (const Json& x : v) {
      if (!x.is_number()) malformed("param '" + key + "' is not numeric", raw);
      values.push_back(x.get<double>());
    }
  } else {
    malformed("param '" + key + "' is not numeric", raw);
  }
  return values;
}

/// Wire action object: {"type", "params" (agent_id inside), "step_done"}.
ActionElement wire_action(const Json& j, const std::string& raw) {
  if (!j.is_object() || !j.contains("type") || !j.contains("params")) {
    malformed("action object needs 'type' and 'params'", raw);
  }
  ActionElement act;
  try {
    act.primitive = primitive_from_name(j["type"].get<std::string>());
  } catch (const EngineError&) {
    malformed("unknown primitive '" + j["type"].dump() + "'", raw);
  }
  const Json& params = j["params"];
  if (!params.is_object()) malformed("'params' must be an object", raw);
  if (!params.contains("agent_id")) malformed("params lack 'agent_id'", raw);
  const Json& agent = params["agent_id"];
  if (agent.is_number_integer()) {
    act.agents.push_back(agent.get<int>());
  } else if (agent.is_array()) {
    for (const Json& a : agent) {
      if (!a.is_number_integer()) malformed("agent_id entries must be ints", raw);
      act.agents.push_back(a.get<int>());
    }
  } else {
    malformed("agent_id must be an int or a list", raw);
  }
  if (act.agents.empty()) malformed("agent_id list is empty", raw);
  for (auto it = params.begin(); it != params.end(); ++it) {
    if (it.key() == "agent_id") continue;
    act.params[it.key()] = param_values(it.value(), it.key(), raw);
  }
  return act;
}

}  // namespace

const char* primitive_name(Primitive p) {
  switch (p) {
    case Primitive::Move: return "Move";
    case Primitive::Rotate: return "Rotate";
    case Primitive::Grasp: return "Grasp";
    case Primitive::Release: return "Release";
  }
  return "?";
}

Primitive primitive_from_name(const std::string& name) {
  const std::string u = upper(name);
  if (u == "MOVE") return Primitive::Move;
  if (u == "ROTATE") return Primitive::Rotate;
  if (u == "GRASP") return Primitive::Grasp;
  if (u == "RELEASE" || u == "PLACE") return Primitive::Release;
  throw EngineError(EngineError::Kind::UnknownPrimitive,
                    "unknown primitive '" + name + "'");
}

double ActionElement::param(const std::string& key, size_t slot,
                            double fallback) const {
  auto it = params.find(key);
  if (it == params.end() || it->second.empty()) return fallback;
  if (it->second.size() == 1) return it->second[0];  // broadcast
  if (slot >= it->second.size()) {
    throw EngineError(EngineError::Kind::DimensionMismatch,
                      "param '" + key + "' has no value for agent slot " +
                          std::to_string(slot));
  }
  return it->second[slot];
}

const char* checkpoint_type_name(CheckpointType t) {
  switch (t) {
    case CheckpointType::Grasp: return "grasp";
    case CheckpointType::Lift: return "lift";
    case CheckpointType::Handover: return "handover";
    case CheckpointType::Place: return "place";
    case CheckpointType::Generic: return "generic";
  }
  return "?";
}

CheckpointType checkpoint_type_from_name(const std::string& name) {
  if (name == "grasp") return CheckpointType::Grasp;
  if (name == "lift") return CheckpointType::Lift;
  if (name == "handover") return CheckpointType::Handover;
  if (name == "place") return CheckpointType::Place;
  if (name == "generic") return CheckpointType::Generic;
  throw EngineError(EngineError::Kind::MalformedPlan,
                    "unknown checkpoint type '" + name + "'");
}

Json camera_to_json(const CameraParams& c) {
  return Json{{"yaw", c.yaw},
              {"pitch", c.pitch},
              {"radius", c.radius},
              {"center", vec3_to_json(c.center)}};
}

CameraParams camera_from_json(const Json& j, const std::string& where) {
  if (!j.is_object()) {
    throw EngineError(EngineError::Kind::SerializationError,
                      where + ": camera params must be an object");
  }
  CameraParams c;
  if (j.contains("yaw")) c.yaw = j["yaw"].get<double>();
  if (j.contains("pitch")) c.pitch = j["pitch"].get<double>();
  if (j.contains("radius")) c.radius = j["radius"].get<double>();
  if (j.contains("center")) c.center = vec3_from_json(j["center"], where + ".center");
  return c;
}

Json action_to_json(const ActionElement& a) {
  Json j;
  j["agents"] = a.agents;
  j["primitive"] = primitive_name(a.primitive);
  Json params = Json::object();
  for (const auto& [key, values] : a.params) params[key] = values;
  j["params"] = params;
  if (!a.annotation.is_null()) j["annotation"] = a.annotation;
  return j;
}

ActionElement action_from_json(const Json& j, const std::string& where) {
  ActionElement a;
  const Json& agents = require_field(j, "agents", where);
  if (!agents.is_array() || agents.empty()) {
    throw EngineError(EngineError::Kind::MalformedPlan,
                      where + ": 'agents' must be a non-empty array");
  }
  for (const Json& x : agents) a.agents.push_back(x.get<int>());
  a.primitive = primitive_from_name(require_string(j, "primitive", where));
  if (j.contains("params")) {
    const Json& params = j["params"];
    if (!params.is_object()) {
      throw EngineError(EngineError::Kind::MalformedPlan,
                        where + ": 'params' must be an object");
    }
    for (auto it = params.begin(); it != params.end(); ++it) {
      std::vector<double> values;
      if (it.value().is_number()) {
        values.push_back(it.value().get<double>());
      } else {
        values = it.value().get<std::vector<double>>();
      }
      a.params[it.key()] = values;
    }
  }
  if (j.contains("annotation")) a.annotation = j["annotation"];
  return a;
}

Json plan_element_to_json(const PlanElement& e) {
  Json j;
  j["index"] = e.index;
  if (e.is_action()) {
    j["action"] = action_to_json(e.action());
  } else {
    const CheckpointElement& c = e.checkpoint();
    Json jc{{"name", c.name},
            {"type", checkpoint_type_name(c.type)},
            {"conditions", c.conditions}};
    if (c.recommended_view) {
      jc["recommended_view"] = camera_to_json(*c.recommended_view);
    }
    if (!c.notes.empty()) jc["notes"] = c.notes;
    j["checkpoint"] = jc;
  }
  return j;
}

PlanElement plan_element_from_json(const Json& j, const std::string& where) {
  PlanElement e;
  e.index = j.contains("index") ? j["index"].get<int>() : 0;
  const bool has_action = j.contains("action");
  const bool has_checkpoint = j.contains("checkpoint");
  if (has_action == has_checkpoint) {
    throw EngineError(EngineError::Kind::MalformedPlan,
                      where + ": element needs exactly one of "
                              "'action'/'checkpoint'");
  }
  if (has_action) {
    e.body = action_from_json(j["action"], where + ".action");
  } else {
    const Json& jc = j["checkpoint"];
    CheckpointElement c;
    c.name = require_string(jc, "name", where + ".checkpoint");
    c.type = checkpoint_type_from_name(
        require_string(jc, "type", where + ".checkpoint"));
    if (jc.contains("conditions")) {
      if (!jc["conditions"].is_array()) {
        throw EngineError(EngineError::Kind::MalformedPlan,
                          where + ": checkpoint 'conditions' must be an array");
      }
      c.conditions = jc["conditions"];
    }
    if (jc.contains("recommended_view")) {
      c.recommended_view =
          camera_from_json(jc["recommended_view"], where + ".recommended_view");
    }
    if (jc.contains("notes")) c.notes = jc["notes"].get<std::string>();
    e.body = c;
  }
  return e;
}

namespace {

/// Shared invariants for any plan the engine will execute: at least one
/// action and unique checkpoint names.  Caller supplies the error kind so
/// file parsing reports MalformedPlan and the wire path MalformedResponse.
void check_plan_invariants(const ExecutionPlan& plan, EngineError::Kind kind,
                           const std::string& raw) {
  bool any_action = false;
  std::set<std::string> names;
  for (const PlanElement& e : plan.elements) {
    if (e.is_action()) {
      any_action = true;
    } else if (!names.insert(e.checkpoint().name).second) {
      throw EngineError(kind, "duplicate checkpoint name '" +
                                  e.checkpoint().name + "'" +
                                  (raw.empty() ? "" : "; raw: " + truncate_raw(raw)));
    }
  }
  if (!any_action) {
    throw EngineError(kind, "plan has no action elements" +
                                (raw.empty() ? "" : "; raw: " + truncate_raw(raw)));
  }
}

}  // namespace

std::string serialize_plan(const ExecutionPlan& plan) {
  Json j;
  j["schema"] = "coenv-plan/1";
  j["goal_id"] = plan.goal_id;
  Json elements = Json::array();
  for (const PlanElement& e : plan.elements) {
    elements.push_back(plan_element_to_json(e));
  }
  j["elements"] = elements;
  j["key_observations"] = plan.key_observations;
  j["provenance"] = Json{{"planner_id", plan.provenance.planner_id},
                         {"round", plan.provenance.round}};
  return j.dump(2) + "\n";
}

ExecutionPlan parse_plan(const std::string& json_text) {
  Json j = parse_json(json_text, "plan");
  require_schema(j, "coenv-plan/1");
  ExecutionPlan plan;
  plan.goal_id = require_string(j, "goal_id", "plan");
  const Json& elements = require_field(j, "elements", "plan");
  if (!elements.is_array()) {
    throw EngineError(EngineError::Kind::MalformedPlan,
                      "plan: 'elements' must be an array");
  }
  int pos = 0;
  for (const Json& je : elements) {
    PlanElement e = plan_element_from_json(
        je, "plan.elements[" + std::to_string(pos) + "]");
    ++pos;
    if (e.index == 0) e.index = pos;
    if (e.index != pos) {
      throw EngineError(EngineError::Kind::MalformedPlan,
                        "plan: element indices must be contiguous from 1 (got " +
                            std::to_string(e.index) + " at position " +
                            std::to_string(pos) + ")");
    }
    plan.elements.push_back(std::move(e));
  }
  if (j.contains("key_observations")) {
    plan.key_observations = j["key_observations"].get<std::string>();
  }
  if (j.contains("provenance")) {
    plan.provenance.planner_id =
        j["provenance"].value("planner_id", std::string());
    plan.provenance.round = j["provenance"].value("round", 0);
  }
  check_plan_invariants(plan, EngineError::Kind::MalformedPlan, "");
  return plan;
}

PlannerDecision parse_planner_response(const std::string& text,
                                       const std::string& phase) {
  PlannerDecision decision;

  if (phase == "execution") {
    if (auto action_block = tagged_block(text, "action")) {
      const std::string block = *action_block;
      if (upper(block).find("REPLAN") != std::string::npos &&
          !json_slice(block)) {
        decision.kind = PlannerDecision::Kind::Replan;
        decision.reason = strip(block);
        return decision;
      }
      auto slice = json_slice(block);
      if (!slice) malformed("<action> block holds no JSON", text);
      Json j = parse_json(*slice, "planner action");
      std::vector<Json> items;
      if (j.is_array()) {
        items.assign(j.begin(), j.end());
      } else {
        items.push_back(j);
      }
      if (items.empty()) malformed("empty action list", text);
      decision.kind = PlannerDecision::Kind::NextActions;
      for (const Json& item : items) {
        decision.next.actions.push_back(wire_action(item, text));
        decision.next.step_done.push_back(item.value("step_done", false));
      }
      return decision;
    }
    // Fall through: an execution-phase planner may still ask for a view.
  }

  auto next_block = tagged_block(text, "next_action");
  if (!next_block) malformed("response has no <next_action> block", text);
  const std::string block = *next_block;
  const std::string ublock = upper(block);

  if (ublock.find("REPLAN") != std::string::npos) {
    decision.kind = PlannerDecision::Kind::Replan;
    decision.reason = strip(block);
    return decision;
  }

  if (ublock.find("PLANNING_COMPLETE") != std::string::npos) {
    decision.kind = PlannerDecision::Kind::PlanComplete;
    if (auto obs = tagged_block(text, "key_observations")) {
      decision.plan.key_observations = strip(*obs);
    }
    if (auto sub = tagged_block(text, "subgoals")) {
      auto slice = json_slice(*sub);
      if (slice) {
        Json js = parse_json(*slice, "subgoals");
        if (!js.is_array()) malformed("<subgoals> must hold a JSON array", text);
        int idx = 0;
        for (const Json& s : js) {
          SubGoal g;
          g.index = ++idx;
          if (s.is_string()) {
            g.description = s.get<std::string>();
          } else if (s.is_object() && s.contains("description")) {
            g.description = s["description"].get<std::string>();
          } else {
            malformed("subgoal entries must be strings or objects", text);
          }
          decision.subgoals.push_back(g);
        }
      }
    }
    auto plan_block = tagged_block(text, "execution_plan");
    if (!plan_block) malformed("PLANNING_COMPLETE without <execution_plan>", text);
    auto slice = json_slice(*plan_block);
    if (!slice) malformed("<execution_plan> holds no JSON", text);
    Json je = parse_json(*slice, "execution plan");
    if (!je.is_array() || je.empty()) {
      malformed("<execution_plan> must be a non-empty JSON array", text);
    }
    int pos = 0;
    for (const Json& item : je) {
      PlanElement e;
      try {
        e = plan_element_from_json(
            item, "execution_plan[" + std::to_string(pos) + "]");
      } catch (const EngineError& err) {
        malformed(err.what(), text);
      }
      e.index = ++pos;
      decision.plan.elements.push_back(std::move(e));
    }
    try {
      check_plan_invariants(decision.plan,
                            EngineError::Kind::MalformedResponse, text);
    } catch (const EngineError&) {
      throw;
    }
    return decision;
  }

  if (ublock.find("CAMERA_ORBIT") != std::string::npos) {
    auto slice = json_slice(block);
    if (!slice) malformed("CAMERA_ORBIT without parameter JSON", text);
    Json jc = parse_json(*slice, "camera request");
    decision.kind = PlannerDecision::Kind::RequestView;
    decision.view = camera_from_json(jc, "camera request");
    if (auto reason = tagged_block(text, "justification")) {
      decision.reason = strip(*reason);
    } else if (auto r2 = tagged_block(text, "reason")) {
      decision.reason = strip(*r2);
    }
    return decision;
  }

  malformed("unrecognized <next_action> contents", text);
}

}  // namespace coenv
