#pragma once

// Real-to-sim conversion: fuse per-view 6-DoF object pose estimates into
// world-frame poses (arithmetic translation mean + eigenvector quaternion
// mean), refine camera extrinsics by rigid point-set alignment, and assemble
// a SceneState from fused estimates.

#include "coenv/world.hpp"

#include <map>
#include <string>
#include <vector>

namespace coenv {

struct ViewEstimate {
  std::string camera_id;
  std::string object_id;
  Pose pose_in_camera;
  double confidence = 1.0;  // in (0, 1]
};

struct CameraExtrinsic {
  std::string camera_id;
  Pose world_from_camera;
};

struct FusedObject {
  std::string object_id;
  Pose pose;  // world frame
  int views_used = 0;
  double translation_rms = 0.0;  // spread of per-view estimates vs fused
  double rotation_rms = 0.0;     // radians
};

struct FusionOptions {
  bool confidence_weighted = false;  // default matches the unweighted mean
  bool trim_outliers = true;  // one trimming pass at >3x RMS deviation
};

/// Arithmetic mean.  Summation runs in a canonical (sorted) order, so the
/// result is exactly permutation-invariant.  Throws EmptyInput.
Vec3 fuse_translations(const std::vector<Vec3>& estimates);

/// Principal-eigenvector quaternion mean: maximizer of q^T M q with
/// M = sum w_k q_k q_k^T, computed with Eigen's self-adjoint solver.
/// Sign-canonicalized; invariant to per-input sign flips.  Throws EmptyInput,
/// and DegenerateSpectrum when the top two eigenvalues coincide within 1e-12.
Quat fuse_rotations(const std::vector<Quat>& quats);
Quat fuse_rotations_weighted(const std::vector<Quat>& quats,
                             const std::vector<double>& weights);

/// Lifts every estimate to the world frame through its camera's extrinsic,
/// then fuses.  Throws MissingExtrinsic{camera_id} and MixedObjects.
FusedObject fuse_object(const std::vector<ViewEstimate>& views,
                        const std::map<std::string, CameraExtrinsic>& extrinsics,
                        const FusionOptions& opts = {});

struct Correspondence {
  Vec3 world_point;
  Vec3 camera_point;
};

/// Iterated rigid alignment (SVD/Kabsch) of camera points onto world points.
/// The RMS residual is non-increasing round over round; stops early when a
/// round improves it by less than 1e-7 m.  Throws TooFewPoints (< 3) and
/// DegenerateGeometry (collinear points).
CameraExtrinsic refine_extrinsics(const std::vector<Correspondence>& corr,
                                  const CameraExtrinsic& current, int rounds);

/// Catalog entry describing an object the scene may contain.
struct CatalogObject {
  std::string id;
  std::string name;
  std::string description;
  Shape shape;
  Physical physical;
  std::optional<double> graspable_width_override;
  bool is_container = false;
};

struct AgentPlacement {
  std::string model_ref;
  std::string name;
  std::string role;
  Pose base_pose;
  JointConfig config;
};

/// Assembles a step-0 SceneState: object poses fused from the views, agents
/// at the given configurations.  Catalog objects with no views are omitted.
/// Throws UnknownObject for a view naming an uncataloged object and
/// MissingExtrinsic for a view from an unknown camera.
SceneState build_scene(const std::vector<ViewEstimate>& all_views,
                       const std::map<std::string, CameraExtrinsic>& extrinsics,
                       const std::vector<CatalogObject>& catalog,
                       const std::vector<AgentPlacement>& agents,
                       const FusionOptions& opts = {});

// --- file formats ----------------------------------------------------------

/// "coenv-views/1": {"schema": ..., "views": [{camera_id, object_id,
/// pose: {t, q}, confidence}, ...]}.  Units: metres, unit quaternions.
std::vector<ViewEstimate> parse_views(const std::string& json_text);

/// "coenv-extrinsics/1": {"schema": ..., "cameras": {id: {t, q}, ...}}.
std::map<std::string, CameraExtrinsic> parse_extrinsics(
    const std::string& json_text);

}  // namespace coenv
