#include "coenv/episode.hpp"

namespace coenv {

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Success: return "Success";
    case Outcome::Fail: return "Fail";
    case Outcome::Aborted: return "Aborted";
  }
  return "?";
}

Json joint_config_to_json(const JointConfig& c) {
  return Json{{"values", c.values}, {"gripper", c.gripper}};
}

JointConfig joint_config_from_json(const Json& j, const std::string& where) {
  JointConfig c;
  c.values = require_field(j, "values", where).get<std::vector<double>>();
  c.gripper = require_number(j, "gripper", where);
  return c;
}

namespace {

Json configs_to_json(const std::map<int, JointConfig>& configs) {
  Json j = Json::object();
  for (const auto& [agent, config] : configs) {
    j[std::to_string(agent)] = joint_config_to_json(config);
  }
  return j;
}

std::map<int, JointConfig> configs_from_json(const Json& j,
                                             const std::string& where) {
  std::map<int, JointConfig> configs;
  for (auto it = j.begin(); it != j.end(); ++it) {
    configs[std::stoi(it.key())] = joint_config_from_json(it.value(), where);
  }
  return configs;
}

Json verify_to_json(const VerifyResult& v) {
  Json j;
  j["verdict"] = v.ok() ? "Success" : "Fail";
  j["pose_error_m"] = v.pose_error_m;
  j["pose_error_rad"] = v.pose_error_rad;
  Json events = Json::array();
  for (const Event& e : v.events_since) events.push_back(event_to_json(e));
  j["events_since"] = events;
  j["unmet_conditions"] = v.unmet_conditions;
  return j;
}

VerifyResult verify_from_json(const Json& j, const std::string& where) {
  VerifyResult v;
  v.verdict = require_string(j, "verdict", where) == "Success"
                  ? VerifyResult::Verdict::Success
                  : VerifyResult::Verdict::Fail;
  v.pose_error_m = require_number(j, "pose_error_m", where);
  v.pose_error_rad = require_number(j, "pose_error_rad", where);
  if (j.contains("events_since")) {
    for (const Json& je : j["events_since"]) {
      v.events_since.push_back(event_from_json(je, where));
    }
  }
  if (j.contains("unmet_conditions")) {
    v.unmet_conditions = j["unmet_conditions"].get<std::vector<std::string>>();
  }
  return v;
}

}  // namespace

Json trajectory_step_to_json(const TrajectoryStep& s) {
  Json j;
  j["element_index"] = s.element_index;
  j["element"] = plan_element_to_json(s.element);
  j["start_configs"] = configs_to_json(s.start_configs);
  j["end_configs"] = configs_to_json(s.end_configs);
  Json events = Json::array();
  for (const Event& e : s.events) events.push_back(event_to_json(e));
  j["events"] = events;
  if (s.verify) j["verify"] = verify_to_json(*s.verify);
  if (s.checkpoint_report) j["checkpoint_report"] = *s.checkpoint_report;
  return j;
}

TrajectoryStep trajectory_step_from_json(const Json& j,
                                         const std::string& where) {
  TrajectoryStep s;
  s.element_index = static_cast<int>(require_number(j, "element_index", where));
  s.element = plan_element_from_json(require_field(j, "element", where),
                                     where + ".element");
  s.element.index = s.element_index;
  s.start_configs =
      configs_from_json(require_field(j, "start_configs", where), where);
  s.end_configs =
      configs_from_json(require_field(j, "end_configs", where), where);
  if (j.contains("events")) {
    for (const Json& je : j["events"]) {
      s.events.push_back(event_from_json(je, where + ".events"));
    }
  }
  if (j.contains("verify")) {
    s.verify = verify_from_json(j["verify"], where + ".verify");
  }
  if (j.contains("checkpoint_report")) {
    s.checkpoint_report = j["checkpoint_report"];
  }
  return s;
}

}  // namespace coenv
