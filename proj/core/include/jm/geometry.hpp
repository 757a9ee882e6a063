#pragma once

// Camera model, pose algebra and ego-motion track construction.
//
// Conventions used everywhere in the library:
//   * quaternions are scalar-first (w, x, y, z) and rotate camera -> world;
//   * a pose's translation is the camera centre in world coordinates;
//   * image coordinates are normalized to [0,1]^2, pixel (col,row) has its
//     centre at ((col + 0.5) / W, (row + 0.5) / H);
//   * the pinhole model is u = f * x / z + cu, v = f * y / z + cv with f the
//     normalized focal length (pixels / max(W, H)).

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "jm/error.hpp"

namespace jm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using Mask = std::vector<std::uint8_t>;

inline constexpr double kBehindCameraEpsilon = 1e-9;

/// Rigid motion x -> R x + t.
struct RigidTransform {
  Quat rotation{Quat::Identity()};
  Vec3 translation{Vec3::Zero()};

  [[nodiscard]] static RigidTransform identity() { return {}; }
  [[nodiscard]] Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  [[nodiscard]] RigidTransform inverse() const;
  [[nodiscard]] Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
};

/// a ∘ b : apply b first, then a.
[[nodiscard]] RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

/// x -> s R x + t.
struct SimilarityTransform {
  double scale{1.0};
  Quat rotation{Quat::Identity()};
  Vec3 translation{Vec3::Zero()};

  [[nodiscard]] Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

/// Angle of a rotation in radians, in [0, pi].
[[nodiscard]] double rotation_angle(const Quat& q);
/// Angle of q_a^{-1} q_b.
[[nodiscard]] double rotation_distance(const Quat& a, const Quat& b);
/// exp map of a rotation vector.
[[nodiscard]] Quat quat_exp(const Vec3& rotation_vector);
/// Skew-symmetric cross-product matrix.
[[nodiscard]] Mat3 skew(const Vec3& v);

struct Intrinsics {
  double focal{1.0};
  Vec2 principal_point{0.5, 0.5};
};

/// Camera-to-world pose with normalized pinhole intrinsics.
///
/// The rotation is renormalized on every mutation; focal must stay positive.
class CameraPose {
 public:
  CameraPose() = default;
  CameraPose(const Quat& rotation, const Vec3& translation, double focal = 1.0,
             const Vec2& principal_point = Vec2(0.5, 0.5));

  [[nodiscard]] const Quat& rotation() const noexcept { return rotation_; }
  [[nodiscard]] const Vec3& translation() const noexcept { return translation_; }
  [[nodiscard]] double focal() const noexcept { return focal_; }
  [[nodiscard]] const Vec2& principal_point() const noexcept { return principal_point_; }
  [[nodiscard]] Intrinsics intrinsics() const { return {focal_, principal_point_}; }

  void set_rotation(const Quat& rotation);
  void set_translation(const Vec3& translation) { translation_ = translation; }
  void set_focal(double focal);
  void set_principal_point(const Vec2& pp) { principal_point_ = pp; }

  [[nodiscard]] RigidTransform camera_to_world() const { return {rotation_, translation_}; }
  [[nodiscard]] RigidTransform world_to_camera() const { return camera_to_world().inverse(); }
  [[nodiscard]] Vec3 to_world(const Vec3& p_cam) const { return rotation_ * p_cam + translation_; }
  [[nodiscard]] Vec3 to_camera(const Vec3& p_world) const {
    return rotation_.conjugate() * (p_world - translation_);
  }

  /// Same intrinsics, rigid part replaced.
  [[nodiscard]] CameraPose with_rigid(const RigidTransform& camera_to_world) const;

 private:
  Quat rotation_{Quat::Identity()};
  Vec3 translation_{Vec3::Zero()};
  double focal_{1.0};
  Vec2 principal_point_{0.5, 0.5};
};

/// Rigid composition of the camera-to-world transforms; intrinsics from `a`.
[[nodiscard]] CameraPose compose(const CameraPose& a, const CameraPose& b);
[[nodiscard]] CameraPose inverse(const CameraPose& pose);
/// Moves a camera by a world-frame motion: the new camera-to-world is motion ∘ pose.
[[nodiscard]] CameraPose transform_pose(const RigidTransform& motion, const CameraPose& pose);

/// Per-frame 8-vector (qw, qx, qy, qz, tx, ty, tz, focal).
using CameraEncoding = std::array<double, 8>;

[[nodiscard]] CameraEncoding encode(const CameraPose& pose);
/// Principal point defaults to the image centre.
[[nodiscard]] CameraPose decode(const CameraEncoding& encoding);

/// Row-major scalar raster. Strongly typed by tag so depth maps and images
/// are not interchangeable.
template <typename Tag>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, double fill = 0.0)
      : width_(width), height_(height),
        values_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {
    if (width <= 0 || height <= 0) throw Error(ErrorCode::kInvalidArgument, "raster dimensions must be positive");
  }
  Raster(int width, int height, std::vector<double> values)
      : width_(width), height_(height), values_(std::move(values)) {
    if (width <= 0 || height <= 0) throw Error(ErrorCode::kInvalidArgument, "raster dimensions must be positive");
    if (values_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
      throw Error(ErrorCode::kShapeMismatch, "raster value count does not match width*height");
  }

  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
  [[nodiscard]] double& at(int col, int row) { return values_[index(col, row)]; }
  [[nodiscard]] double at(int col, int row) const { return values_[index(col, row)]; }
  [[nodiscard]] std::span<double> values() noexcept { return values_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  [[nodiscard]] std::size_t index(int col, int row) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col);
  }

  int width_{0};
  int height_{0};
  std::vector<double> values_;
};

struct DepthTag {};
struct ImageTag {};

/// Per-pixel depth (camera z). Zero marks an invalid pixel.
using DepthMap = Raster<DepthTag>;
/// Grayscale intensities.
using Image = Raster<ImageTag>;

/// Affine depth calibration d -> a d + b.
struct ScaleShift {
  double a{1.0};
  double b{0.0};

  friend bool operator==(const ScaleShift&, const ScaleShift&) = default;
};

struct PointMap {
  int width{0};
  int height{0};
  std::vector<Vec3> points;  // camera frame
  Mask valid;

  [[nodiscard]] const Vec3& at(int col, int row) const {
    return points[static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col)];
  }
  [[nodiscard]] bool is_valid(int col, int row) const {
    return valid[static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col)] != 0;
  }
};

/// Dense frames x tracks array, frame-major.
template <typename T>
class TrackArray {
 public:
  TrackArray() = default;
  TrackArray(int frames, int tracks, const T& fill = T())
      : frames_(frames), tracks_(tracks),
        data_(static_cast<std::size_t>(frames) * static_cast<std::size_t>(tracks), fill) {}

  [[nodiscard]] int frames() const noexcept { return frames_; }
  [[nodiscard]] int tracks() const noexcept { return tracks_; }
  [[nodiscard]] T& operator()(int t, int i) { return data_[index(t, i)]; }
  [[nodiscard]] const T& operator()(int t, int i) const { return data_[index(t, i)]; }
  [[nodiscard]] std::span<T> frame(int t) {
    return std::span<T>(data_).subspan(index(t, 0), static_cast<std::size_t>(tracks_));
  }
  [[nodiscard]] std::span<const T> frame(int t) const {
    return std::span<const T>(data_).subspan(index(t, 0), static_cast<std::size_t>(tracks_));
  }
  [[nodiscard]] std::vector<T>& data() noexcept { return data_; }
  [[nodiscard]] const std::vector<T>& data() const noexcept { return data_; }

  friend bool operator==(const TrackArray&, const TrackArray&) = default;

 private:
  [[nodiscard]] std::size_t index(int t, int i) const {
    return static_cast<std::size_t>(t) * static_cast<std::size_t>(tracks_) + static_cast<std::size_t>(i);
  }

  int frames_{0};
  int tracks_{0};
  std::vector<T> data_;
};

[[nodiscard]] Vec2 pixel_center(int col, int row, int width, int height);
/// Pixel containing a normalized coordinate, clamped to the raster.
[[nodiscard]] std::array<int, 2> containing_pixel(const Vec2& uv, int width, int height);
[[nodiscard]] bool inside_image(const Vec2& uv) noexcept;

struct ScaledDepth {
  DepthMap depth;
  std::size_t clamped{0};  // valid pixels pushed to <= 0 and marked invalid
};

/// a * d + b on valid pixels; results <= 0 become invalid and are counted.
[[nodiscard]] ScaledDepth apply_scale_shift(const DepthMap& depth, const ScaleShift& ss);

[[nodiscard]] Vec3 unproject_point(const Vec2& uv, double depth, const Intrinsics& intrinsics);

struct Unprojection {
  PointMap camera;
  std::vector<Vec3> world;  // zero at invalid pixels
};

[[nodiscard]] Unprojection unproject(const DepthMap& depth, const CameraPose& pose);

struct Projection {
  Vec2 uv;
  double depth{0.0};
};

/// Projects a camera-frame point. nullopt when z <= kBehindCameraEpsilon.
[[nodiscard]] std::optional<Projection> try_project_camera(const Vec3& p_cam, const Intrinsics& intrinsics);
/// Projects a world point; throws ErrorCode::kBehindCamera.
[[nodiscard]] Projection project(const Vec3& p_world, const CameraPose& pose);

/// Static-scene hypothesis: every query is lifted with the depth of frame
/// `query_frame` and re-expressed in each frame's camera coordinates.
/// Queries are normalized coordinates; depth is read at the containing pixel.
[[nodiscard]] TrackArray<Vec3> ego_motion_tracks(std::span<const Vec2> queries, int query_frame,
                                                 std::span<const DepthMap> depths,
                                                 std::span<const CameraPose> poses);

}  // namespace jm
