#pragma once

// Sim-to-real hand-off: joint-space interpolation of recorded primitive
// endpoints, conservative swept collision volumes, pairwise disjointness
// verification, and waypoint export.

#include "coenv/episode.hpp"

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace coenv {

/// Joint configurations bracketing plan element l, per agent.  q_0 comes from
/// the episode's initial state.
struct PrimitiveRecord {
  int element_index = 0;  // l >= 1
  std::map<int, JointConfig> start_configs;  // q_{l-1}
  std::map<int, JointConfig> end_configs;    // q_l
};

struct DenseWaypoints {
  int agent_id = 0;
  int steps = 0;  // S
  std::vector<JointConfig> waypoints;  // S+1 entries, alpha = k/S
};

struct SweptVolume {
  int agent_id = 0;
  int element_index = 0;
  std::vector<Capsule> capsules;  // union over waypoints, radii inflated
};

struct TransferConfig {
  int steps = 20;        // S
  double margin = 0.01;  // m
};

/// Linear blend q(alpha) = (1-alpha) q_prev + alpha q_next on the uniform
/// grid alpha in {0, 1/S, ..., 1}; endpoints are the inputs bit-exactly.
/// The gripper command blends the same way.  Throws DimensionMismatch and
/// BadStepCount (S < 1).
DenseWaypoints interpolate(const JointConfig& q_prev, const JointConfig& q_next,
                           int S, int agent_id = 0);

/// Link capsules at every waypoint, each capsule's radius inflated by half
/// the maximum displacement its endpoints make between consecutive waypoints
/// (covering the un-sampled motion in between).
SweptVolume swept_volume(const RobotModel& model, const Pose& base,
                         const DenseWaypoints& waypoints);

struct Violation {
  int agent_a = 0;
  int agent_b = 0;
  double min_distance = 0.0;
  int capsule_a = -1;  // witness indices into each volume
  int capsule_b = -1;
};

struct DisjointResult {
  bool safe = true;
  double min_distance = std::numeric_limits<double>::infinity();
  std::vector<Violation> violations;  // sorted by distance, closest first
};

/// Pairwise robot-robot clearance: safe iff every cross-agent capsule pair
/// is farther apart than `margin`.  A single volume is vacuously safe.
DisjointResult verify_disjoint(const std::map<int, SweptVolume>& volumes,
                               double margin);

enum class ElementVerdict { Safe, Violation, Unverified };

struct TrajectoryValidation {
  std::vector<ElementVerdict> per_element;  // aligned with records
  std::vector<DenseWaypoints> safe_waypoints;  // all agents, verified elements
  std::optional<int> first_violation;  // element index l
  double min_distance = std::numeric_limits<double>::infinity();
};

/// Agent bodies for validation: model + base placement per agent id.
struct AgentBody {
  RobotModel model;
  Pose base_pose;
};

/// Interpolates and verifies each element in order; after the first
/// violation, later elements are left Unverified (replan required from that
/// state).
TrajectoryValidation validate_trajectory(
    const std::vector<PrimitiveRecord>& records,
    const std::map<int, AgentBody>& agents, int S, double margin);

/// Extracts per-element PrimitiveRecords from an executed trajectory.
std::vector<PrimitiveRecord> trajectory_records(const Trajectory& traj);

/// "coenv-waypoints/1" export: per agent, per element, joint vectors in
/// radians plus gripper commands, serialized with 17 significant digits.
std::string serialize_waypoints(const std::string& goal_id,
                                const std::vector<PrimitiveRecord>& records,
                                const std::map<int, AgentBody>& agents,
                                int S);

}  // namespace coenv
