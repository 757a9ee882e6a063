#pragma once

// Synthetic dynamic scenes with exact ground truth: a textured box room seen
// from a moving camera, plus textured planar objects that move rigidly.
// Depth and intensity are ray-cast per pixel; tracks, visibility and dynamic
// labels come from the same geometry.

#include <cstdint>
#include <string>
#include <vector>

#include "jm/geometry.hpp"
#include "jm/metrics.hpp"

namespace jm {

enum class TrajectoryKind { kOrbit, kForward, kRandomSmooth, kStatic };

[[nodiscard]] std::string to_string(TrajectoryKind kind);
[[nodiscard]] TrajectoryKind parse_trajectory(const std::string& name);

struct SceneSpec {
  std::uint64_t seed{0};
  int num_frames{12};
  int width{96};
  int height{96};
  double focal{1.0};
  int num_static_points{150};
  int num_objects{0};
  int points_per_object{50};
  TrajectoryKind trajectory{TrajectoryKind::kOrbit};
  double camera_motion{0.4};         // path length scale, scene units
  double object_displacement{0.25};  // end-to-end, scene units
  double object_rotation_deg{6.0};
  double texture_frequency{2.5};     // mean spatial frequency, cycles per scene unit
  int texture_components{6};
  int supersampling{3};              // per axis, intensity only
  int query_margin{6};               // pixels kept clear of the border when picking queries
  int edge_margin{4};                // static queries need this many pixels of one surface around them

  // Default degradation used by `perturb` when driven from a spec file.
  double depth_sigma{0.0};
  double pose_rot_deg{0.0};
  double pose_trans_frac{0.0};
  double track_sigma{0.0};

  void validate() const;
  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

/// Textured rectangle: origin + a * axis_u + b * axis_v, |a| <= half_u, |b| <= half_v.
struct TexturedQuad {
  Vec3 origin{Vec3::Zero()};
  Vec3 axis_u{Vec3::UnitX()};
  Vec3 axis_v{Vec3::UnitY()};
  double half_u{1.0};
  double half_v{1.0};
  int object{-1};  // -1 for static geometry

  struct Wave {
    double amplitude{0.0};
    Vec2 frequency{Vec2::Zero()};  // cycles per unit along (a, b)
    double phase{0.0};
  };
  std::vector<Wave> texture;

  /// Ray parameter of the hit, or a negative value when missed.
  [[nodiscard]] double intersect(const Vec3& origin_ray, const Vec3& direction) const;
  [[nodiscard]] double intensity(const Vec3& point) const;
};

/// Static geometry plus per-object rigid motion sampled at normalized time s in [0,1].
class SceneModel {
 public:
  explicit SceneModel(const SceneSpec& spec);

  [[nodiscard]] const SceneSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] int num_objects() const noexcept { return static_cast<int>(objects_.size()); }
  [[nodiscard]] double time_of(int frame) const;

  [[nodiscard]] CameraPose camera(int frame) const;
  /// World motion of object `k` at frame t (identity at frame 0).
  [[nodiscard]] RigidTransform object_motion(int k, int frame) const;
  /// Every quad placed at frame t.
  [[nodiscard]] std::vector<TexturedQuad> quads_at(int frame) const;

 private:
  struct ObjectPath {
    TexturedQuad quad;  // placement at frame 0
    Vec3 pivot{Vec3::Zero()};
    std::array<Quat, 3> rotation;
    std::array<Vec3, 3> translation;
  };

  SceneSpec spec_;
  std::vector<TexturedQuad> room_;
  std::vector<ObjectPath> objects_;
  std::array<Vec3, 3> camera_offsets_;
  std::array<Quat, 3> camera_turns_;
};

struct RayHit {
  double t{-1.0};
  int quad{-1};
};

/// Nearest hit over `quads`, t > kBehindCameraEpsilon.
[[nodiscard]] RayHit cast_ray(const std::vector<TexturedQuad>& quads, const Vec3& origin, const Vec3& direction);

struct SceneGroundTruth {
  SceneSpec spec;
  std::vector<CameraPose> poses;
  std::vector<DepthMap> depths;             // metric camera z
  std::vector<DepthMap> depths_normalized;  // depths = a * normalized + b exactly
  ScaleShift scale_shift;
  double scene_scale{1.0};                  // mean valid metric depth
  std::vector<Image> images;
  std::vector<Vec2> queries;
  std::vector<int> query_frame;
  TrackArray<Vec2> tracks2d;
  TrackArray<Vec3> tracks3d_camera;
  TrackArray<Vec3> tracks3d_world;
  VisMask gt_vis;
  Mask gt_dynamic;
  std::vector<int> object_id;  // -1 for static tracks

  [[nodiscard]] int frames() const noexcept { return static_cast<int>(poses.size()); }
  [[nodiscard]] int tracks() const noexcept { return static_cast<int>(queries.size()); }
  /// Camera depth of every gt track point (threshold scale for metrics).
  [[nodiscard]] TrackArray<double> track_depths() const;
};

[[nodiscard]] bool operator==(const SceneGroundTruth& a, const SceneGroundTruth& b);

/// Deterministic in spec.seed. Throws kInfeasibleSpec when the camera leaves
/// the room or too few query pixels are available.
[[nodiscard]] SceneGroundTruth generate(const SceneSpec& spec);

/// Re-checks the invariants listed in the header comment; throws kNumericalFailure.
void verify(const SceneGroundTruth& gt);

struct PerturbSpec {
  double pose_rot_deg{0.0};
  double pose_trans_frac{0.0};  // of scene_scale
  double depth_sigma{0.0};      // normalized depth units
  double track_sigma{0.0};      // normalized image units
  std::uint64_t seed{0};
};

struct PerturbedInputs {
  std::vector<CameraPose> poses;
  std::vector<DepthMap> depths_normalized;
  ScaleShift scale_shift;
  TrackArray<Vec2> tracks2d;
};

/// Frame 0 keeps its pose (it fixes the gauge). Every other rotation moves by
/// exactly pose_rot_deg about a random axis and every centre by exactly
/// pose_trans_frac * scene_scale in a random direction.
[[nodiscard]] PerturbedInputs perturb(const SceneGroundTruth& gt, const PerturbSpec& spec);

}  // namespace jm
