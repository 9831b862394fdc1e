#include "coenv/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace coenv {

namespace {

// Canonical processing order: indices sorted by the vectors' lexicographic
// order.  Summing in this order makes the mean exactly permutation-invariant
// (floating-point addition is order-sensitive).
std::vector<size_t> sorted_order(const std::vector<Vec3>& v) {
  std::vector<size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    for (int i = 0; i < 3; ++i) {
      if (v[a][i] != v[b][i]) return v[a][i] < v[b][i];
    }
    return false;
  });
  return idx;
}

std::vector<size_t> sorted_quat_order(const std::vector<Quat>& q) {
  std::vector<size_t> idx(q.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto key = [](const Quat& x) {
    Quat c = canonical_quat(x);
    return std::array<double, 4>{c.w(), c.x(), c.y(), c.z()};
  };
  std::vector<std::array<double, 4>> keys;
  keys.reserve(q.size());
  for (const Quat& x : q) keys.push_back(key(x));
  std::stable_sort(idx.begin(), idx.end(),
                   [&](size_t a, size_t b) { return keys[a] < keys[b]; });
  return idx;
}

}  // namespace

Vec3 fuse_translations(const std::vector<Vec3>& estimates) {
  if (estimates.empty()) {
    throw EngineError(EngineError::Kind::EmptyInput,
                      "fuse_translations: no estimates");
  }
  Vec3 sum = Vec3::Zero();
  for (size_t i : sorted_order(estimates)) sum += estimates[i];
  return sum / static_cast<double>(estimates.size());
}

Quat fuse_rotations_weighted(const std::vector<Quat>& quats,
                             const std::vector<double>& weights) {
  if (quats.empty()) {
    throw EngineError(EngineError::Kind::EmptyInput,
                      "fuse_rotations: no quaternions");
  }
  if (!weights.empty() && weights.size() != quats.size()) {
    throw EngineError(EngineError::Kind::DimensionMismatch,
                      "fuse_rotations: weight count mismatch");
  }
  // M = sum w q q^T; the outer product is sign-invariant, so the double cover
  // needs no special handling.
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  for (size_t i : sorted_quat_order(quats)) {
    Eigen::Vector4d v(quats[i].w(), quats[i].x(), quats[i].y(), quats[i].z());
    v.normalize();
    double w = weights.empty() ? 1.0 : weights[i];
    m += w * (v * v.transpose());
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> solver(m);
  const auto& evals = solver.eigenvalues();  // ascending
  if (evals[3] - evals[2] <= 1e-12 * std::max(1.0, std::abs(evals[3]))) {
    throw EngineError(EngineError::Kind::DegenerateSpectrum,
                      "fuse_rotations: ambiguous mean (top eigenvalues equal)");
  }
  Eigen::Vector4d principal = solver.eigenvectors().col(3);
  return canonical_quat(
      Quat(principal[0], principal[1], principal[2], principal[3]));
}

Quat fuse_rotations(const std::vector<Quat>& quats) {
  return fuse_rotations_weighted(quats, {});
}

FusedObject fuse_object(const std::vector<ViewEstimate>& views,
                        const std::map<std::string, CameraExtrinsic>& extrinsics,
                        const FusionOptions& opts) {
  if (views.empty()) {
    throw EngineError(EngineError::Kind::EmptyInput, "fuse_object: no views");
  }
  const std::string& object_id = views.front().object_id;
  std::vector<Pose> world_poses;
  std::vector<double> weights;
  for (const ViewEstimate& v : views) {
    if (v.object_id != object_id) {
      throw EngineError(EngineError::Kind::MixedObjects,
                        "fuse_object: views mix '" + object_id + "' and '" +
                            v.object_id + "'");
    }
    auto it = extrinsics.find(v.camera_id);
    if (it == extrinsics.end()) {
      throw EngineError(EngineError::Kind::MissingExtrinsic,
                        "fuse_object: no extrinsic for camera '" + v.camera_id +
                            "'");
    }
    world_poses.push_back(it->second.world_from_camera * v.pose_in_camera);
    weights.push_back(v.confidence);
  }

  auto fuse = [&](const std::vector<Pose>& poses,
                  const std::vector<double>& w) {
    std::vector<Vec3> ts;
    std::vector<Quat> qs;
    for (const Pose& p : poses) {
      ts.push_back(p.translation);
      qs.push_back(p.rotation);
    }
    Vec3 t = fuse_translations(ts);
    Quat q = opts.confidence_weighted ? fuse_rotations_weighted(qs, w)
                                      : fuse_rotations(qs);
    if (opts.confidence_weighted) {
      double wsum = 0.0;
      Vec3 tw = Vec3::Zero();
      for (size_t i : sorted_order(ts)) {
        tw += w[i] * ts[i];
        wsum += w[i];
      }
      t = tw / wsum;
    }
    return Pose(t, q);
  };

  Pose fused = fuse(world_poses, weights);

  if (opts.trim_outliers && world_poses.size() >= 3) {
    // Single trimming pass: drop views deviating from the preliminary mean
    // by more than 3x the RMS deviation, then fuse once more.
    double rms = 0.0;
    for (const Pose& p : world_poses) {
      rms += (p.translation - fused.translation).squaredNorm();
    }
    rms = std::sqrt(rms / static_cast<double>(world_poses.size()));
    if (rms > 1e-12) {
      std::vector<Pose> kept;
      std::vector<double> kept_w;
      for (size_t i = 0; i < world_poses.size(); ++i) {
        if ((world_poses[i].translation - fused.translation).norm() <=
            3.0 * rms) {
          kept.push_back(world_poses[i]);
          kept_w.push_back(weights[i]);
        }
      }
      if (!kept.empty() && kept.size() < world_poses.size()) {
        world_poses = std::move(kept);
        weights = std::move(kept_w);
        fused = fuse(world_poses, weights);
      }
    }
  }

  FusedObject out;
  out.object_id = object_id;
  out.pose = fused;
  out.views_used = static_cast<int>(world_poses.size());
  double t2 = 0.0, r2 = 0.0;
  for (size_t i : sorted_order([&] {
         std::vector<Vec3> ts;
         for (const Pose& p : world_poses) ts.push_back(p.translation);
         return ts;
       }())) {
    t2 += (world_poses[i].translation - fused.translation).squaredNorm();
    double ang = quat_angle(world_poses[i].rotation, fused.rotation);
    r2 += ang * ang;
  }
  out.translation_rms = std::sqrt(t2 / static_cast<double>(world_poses.size()));
  out.rotation_rms = std::sqrt(r2 / static_cast<double>(world_poses.size()));
  return out;
}

CameraExtrinsic refine_extrinsics(const std::vector<Correspondence>& corr,
                                  const CameraExtrinsic& current, int rounds) {
  if (corr.size() < 3) {
    throw EngineError(EngineError::Kind::TooFewPoints,
                      "refine_extrinsics: need at least 3 correspondences, got " +
                          std::to_string(corr.size()));
  }
  Vec3 cam_centroid = Vec3::Zero();
  Vec3 world_centroid = Vec3::Zero();
  for (const Correspondence& c : corr) {
    cam_centroid += c.camera_point;
    world_centroid += c.world_point;
  }
  cam_centroid /= static_cast<double>(corr.size());
  world_centroid /= static_cast<double>(corr.size());

  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (const Correspondence& c : corr) {
    h += (c.camera_point - cam_centroid) *
         (c.world_point - world_centroid).transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  // Rank >= 2 needed for a unique rotation; collinear points leave one
  // rotational degree of freedom undetermined.
  double scale = svd.singularValues()[0];
  if (scale <= 0.0 || svd.singularValues()[1] <= 1e-12 * scale) {
    throw EngineError(EngineError::Kind::DegenerateGeometry,
                      "refine_extrinsics: correspondences are collinear");
  }

  auto rms_for = [&](const Pose& x) {
    double s = 0.0;
    for (const Correspondence& c : corr) {
      s += (c.world_point - x * c.camera_point).squaredNorm();
    }
    return std::sqrt(s / static_cast<double>(corr.size()));
  };

  Pose best = current.world_from_camera;
  double best_rms = rms_for(best);
  for (int round = 0; round < rounds; ++round) {
    // Kabsch solves the alignment exactly in one shot; further rounds only
    // confirm the fixed point (contract: monotone non-increasing residual).
    Eigen::Matrix3d u = svd.matrixU();
    Eigen::Matrix3d v = svd.matrixV();
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    Eigen::Matrix3d r = v * d * u.transpose();
    Pose candidate(world_centroid - r * cam_centroid, Quat(r));
    double candidate_rms = rms_for(candidate);
    if (candidate_rms > best_rms) break;  // never regress
    double improvement = best_rms - candidate_rms;
    best = candidate;
    best_rms = candidate_rms;
    if (improvement < 1e-7) break;
  }
  return CameraExtrinsic{current.camera_id, best};
}

SceneState build_scene(const std::vector<ViewEstimate>& all_views,
                       const std::map<std::string, CameraExtrinsic>& extrinsics,
                       const std::vector<CatalogObject>& catalog,
                       const std::vector<AgentPlacement>& agents,
                       const FusionOptions& opts) {
  if (agents.empty()) {
    throw EngineError(EngineError::Kind::EmptyInput,
                      "build_scene: agent list is empty");
  }
  std::map<std::string, const CatalogObject*> by_id;
  for (const CatalogObject& c : catalog) by_id[c.id] = &c;

  std::map<std::string, std::vector<ViewEstimate>> grouped;
  for (const ViewEstimate& v : all_views) {
    if (!by_id.count(v.object_id)) {
      throw EngineError(EngineError::Kind::UnknownObject,
                        "build_scene: view references uncataloged object '" +
                            v.object_id + "'");
    }
    if (!extrinsics.count(v.camera_id)) {
      throw EngineError(EngineError::Kind::MissingExtrinsic,
                        "build_scene: no extrinsic for camera '" + v.camera_id +
                            "'");
    }
    grouped[v.object_id].push_back(v);
  }

  SceneState scene;
  scene.step = 0;
  for (const auto& [object_id, views] : grouped) {
    FusedObject fused = fuse_object(views, extrinsics, opts);
    const CatalogObject& cat = *by_id.at(object_id);
    SceneObject obj;
    obj.id = cat.id;
    obj.name = cat.name;
    obj.description = cat.description;
    obj.shape = cat.shape;
    obj.physical = cat.physical;
    obj.graspable_width_override = cat.graspable_width_override;
    obj.is_container = cat.is_container;
    obj.pose = fused.pose;
    scene.objects[obj.id] = obj;
    scene.peak_clearance[obj.id] = obj.bottom_z();
  }
  for (const AgentPlacement& a : agents) {
    AgentState st;
    st.model_ref = a.model_ref;
    st.name = a.name;
    st.role = a.role;
    st.base_pose = a.base_pose;
    st.config = a.config;
    scene.agents.push_back(st);
  }
  return scene;
}

std::vector<ViewEstimate> parse_views(const std::string& json_text) {
  Json j = parse_json(json_text, "views");
  require_schema(j, "coenv-views/1");
  const Json& arr = require_field(j, "views", "views");
  if (!arr.is_array()) {
    throw EngineError(EngineError::Kind::SerializationError,
                      "views: 'views' must be an array");
  }
  std::vector<ViewEstimate> out;
  for (size_t i = 0; i < arr.size(); ++i) {
    std::string where = "views[" + std::to_string(i) + "]";
    ViewEstimate v;
    v.camera_id = require_string(arr[i], "camera_id", where);
    v.object_id = require_string(arr[i], "object_id", where);
    v.pose_in_camera =
        pose_from_json(require_field(arr[i], "pose", where), where + ".pose");
    v.confidence = arr[i].contains("confidence")
                       ? require_number(arr[i], "confidence", where)
                       : 1.0;
    if (v.confidence <= 0.0 || v.confidence > 1.0) {
      throw EngineError(EngineError::Kind::SerializationError,
                        where + ": confidence must lie in (0, 1]");
    }
    out.push_back(v);
  }
  return out;
}

std::map<std::string, CameraExtrinsic> parse_extrinsics(
    const std::string& json_text) {
  Json j = parse_json(json_text, "extrinsics");
  require_schema(j, "coenv-extrinsics/1");
  const Json& cams = require_field(j, "cameras", "extrinsics");
  if (!cams.is_object()) {
    throw EngineError(EngineError::Kind::SerializationError,
                      "extrinsics: 'cameras' must be an object");
  }
  std::map<std::string, CameraExtrinsic> out;
  for (auto it = cams.begin(); it != cams.end(); ++it) {
    out[it.key()] = CameraExtrinsic{
        it.key(), pose_from_json(it.value(), "extrinsics." + it.key())};
  }
  return out;
}

}  // namespace coenv
