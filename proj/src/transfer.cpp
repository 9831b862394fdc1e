#include "coenv/transfer.hpp"

#include "coenv/json_util.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace coenv {

DenseWaypoints interpolate(const JointConfig& q_prev, const JointConfig& q_next,
                           int S, int agent_id) {
  if (q_prev.values.size() != q_next.values.size()) {
    throw EngineError(EngineError::Kind::DimensionMismatch,
                      "interpolate: config dims differ (" +
                          std::to_string(q_prev.values.size()) + " vs " +
                          std::to_string(q_next.values.size()) + ")");
  }
  if (S < 1) {
    throw EngineError(EngineError::Kind::BadStepCount,
                      "interpolate: S must be >= 1, got " + std::to_string(S));
  }
  DenseWaypoints out;
  out.agent_id = agent_id;
  out.steps = S;
  out.waypoints.reserve(static_cast<size_t>(S) + 1);
  out.waypoints.push_back(q_prev);  // alpha = 0, bit-exact
  for (int k = 1; k < S; ++k) {
    double alpha = static_cast<double>(k) / static_cast<double>(S);
    JointConfig q;
    q.values.resize(q_prev.values.size());
    for (size_t i = 0; i < q_prev.values.size(); ++i) {
      q.values[i] = (1.0 - alpha) * q_prev.values[i] + alpha * q_next.values[i];
    }
    q.gripper = (1.0 - alpha) * q_prev.gripper + alpha * q_next.gripper;
    out.waypoints.push_back(std::move(q));
  }
  out.waypoints.push_back(q_next);  // alpha = 1, bit-exact
  return out;
}

SweptVolume swept_volume(const RobotModel& model, const Pose& base,
                         const DenseWaypoints& waypoints) {
  SweptVolume vol;
  vol.agent_id = waypoints.agent_id;
  if (waypoints.waypoints.empty()) return vol;

  std::vector<std::vector<Capsule>> per_config;
  per_config.reserve(waypoints.waypoints.size());
  for (const JointConfig& q : waypoints.waypoints) {
    per_config.push_back(link_capsules_world(model, base, q));
  }

  // Half the largest endpoint displacement between consecutive samples: a
  // capsule grown by this radius covers every intermediate pose of the
  // linearly-interpolated segment, because each endpoint moves along a path
  // whose chord the consecutive samples bracket.
  size_t n_caps = per_config.front().size();
  double max_step = 0.0;
  for (size_t w = 1; w < per_config.size(); ++w) {
    for (size_t c = 0; c < n_caps; ++c) {
      const Capsule& prev = per_config[w - 1][c];
      const Capsule& cur = per_config[w][c];
      max_step = std::max(max_step, (cur.a - prev.a).norm());
      max_step = std::max(max_step, (cur.b - prev.b).norm());
    }
  }
  double inflation = 0.5 * max_step;

  for (const auto& caps : per_config) {
    for (Capsule c : caps) {
      c.radius += inflation;
      vol.capsules.push_back(c);
    }
  }
  return vol;
}

DisjointResult verify_disjoint(const std::map<int, SweptVolume>& volumes,
                               double margin) {
  DisjointResult out;
  for (auto it_a = volumes.begin(); it_a != volumes.end(); ++it_a) {
    auto it_b = it_a;
    for (++it_b; it_b != volumes.end(); ++it_b) {
      double pair_min = std::numeric_limits<double>::infinity();
      int witness_a = -1;
      int witness_b = -1;
      const auto& caps_a = it_a->second.capsules;
      const auto& caps_b = it_b->second.capsules;
      for (size_t i = 0; i < caps_a.size(); ++i) {
        for (size_t j = 0; j < caps_b.size(); ++j) {
          double d = capsule_distance(caps_a[i], caps_b[j]);
          if (d < pair_min) {
            pair_min = d;
            witness_a = static_cast<int>(i);
            witness_b = static_cast<int>(j);
          }
        }
      }
      out.min_distance = std::min(out.min_distance, pair_min);
      if (pair_min <= margin) {
        out.safe = false;
        out.violations.push_back(Violation{it_a->first, it_b->first, pair_min,
                                           witness_a, witness_b});
      }
    }
  }
  std::sort(out.violations.begin(), out.violations.end(),
            [](const Violation& a, const Violation& b) {
              if (a.min_distance != b.min_distance) {
                return a.min_distance < b.min_distance;
              }
              return std::tie(a.agent_a, a.agent_b) <
                     std::tie(b.agent_a, b.agent_b);
            });
  return out;
}

TrajectoryValidation validate_trajectory(
    const std::vector<PrimitiveRecord>& records,
    const std::map<int, AgentBody>& agents, int S, double margin) {
  TrajectoryValidation out;
  out.per_element.reserve(records.size());

  for (const PrimitiveRecord& rec : records) {
    if (out.first_violation) {
      out.per_element.push_back(ElementVerdict::Unverified);
      continue;
    }
    std::map<int, SweptVolume> volumes;
    std::map<int, DenseWaypoints> dense;
    for (const auto& [agent_id, body] : agents) {
      auto start_it = rec.start_configs.find(agent_id);
      auto end_it = rec.end_configs.find(agent_id);
      if (start_it == rec.start_configs.end() ||
          end_it == rec.end_configs.end()) {
        continue;  // agent not recorded for this element
      }
      DenseWaypoints wp =
          interpolate(start_it->second, end_it->second, S, agent_id);
      SweptVolume vol = swept_volume(body.model, body.base_pose, wp);
      vol.element_index = rec.element_index;
      volumes[agent_id] = std::move(vol);
      dense[agent_id] = std::move(wp);
    }
    DisjointResult check = verify_disjoint(volumes, margin);
    out.min_distance = std::min(out.min_distance, check.min_distance);
    if (check.safe) {
      out.per_element.push_back(ElementVerdict::Safe);
      for (auto& [agent_id, wp] : dense) {
        out.safe_waypoints.push_back(std::move(wp));
      }
    } else {
      out.per_element.push_back(ElementVerdict::Violation);
      out.first_violation = rec.element_index;
    }
  }
  return out;
}

std::vector<PrimitiveRecord> trajectory_records(const Trajectory& traj) {
  std::vector<PrimitiveRecord> records;
  int l = 0;
  for (const TrajectoryStep& step : traj.steps) {
    if (!std::holds_alternative<ActionElement>(step.element.body)) continue;
    PrimitiveRecord rec;
    rec.element_index = ++l;  // contiguous from 1 over action steps
    rec.start_configs = step.start_configs;
    rec.end_configs = step.end_configs;
    records.push_back(std::move(rec));
  }
  return records;
}

namespace {

// 17 significant digits round-trip any double exactly.
Json exact_array(const std::vector<double>& values) {
  Json arr = Json::array();
  for (double v : values) arr.push_back(v);
  return arr;
}

}  // namespace

std::string serialize_waypoints(const std::string& goal_id,
                                const std::vector<PrimitiveRecord>& records,
                                const std::map<int, AgentBody>& agents,
                                int S) {
  Json agents_json = Json::object();
  for (const auto& [agent_id, body] : agents) {
    Json elements = Json::array();
    for (const PrimitiveRecord& rec : records) {
      auto start_it = rec.start_configs.find(agent_id);
      auto end_it = rec.end_configs.find(agent_id);
      if (start_it == rec.start_configs.end() ||
          end_it == rec.end_configs.end()) {
        continue;
      }
      DenseWaypoints wp =
          interpolate(start_it->second, end_it->second, S, agent_id);
      Json joints = Json::array();
      Json grippers = Json::array();
      for (const JointConfig& q : wp.waypoints) {
        joints.push_back(exact_array(q.values));
        grippers.push_back(q.gripper);
      }
      elements.push_back(Json{{"element", rec.element_index},
                              {"joints_rad", joints},
                              {"gripper", grippers}});
    }
    Json entry{{"model", body.model.name}, {"elements", elements}};
    agents_json[std::to_string(agent_id)] = entry;
  }
  Json doc{{"schema", "coenv-waypoints/1"},
           {"goal_id", goal_id},
           {"steps", S},
           {"agents", agents_json}};
  return doc.dump(2) + "\n";
}

}  // namespace coenv
