#include "jm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace jm {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kBehindCamera: return "BehindCamera";
    case ErrorCode::kInvalidQuery: return "InvalidQuery";
    case ErrorCode::kDegenerateInput: return "DegenerateInput";
    case ErrorCode::kInsufficientObservations: return "InsufficientObservations";
    case ErrorCode::kNumericalFailure: return "NumericalFailure";
    case ErrorCode::kImageTooSmall: return "ImageTooSmall";
    case ErrorCode::kQueryOutsideImage: return "QueryOutsideImage";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kNoVisiblePoints: return "NoVisiblePoints";
    case ErrorCode::kInfeasibleSpec: return "InfeasibleSpec";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

RigidTransform RigidTransform::inverse() const {
  const Quat inv = rotation.conjugate();
  return {inv, -(inv * translation)};
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  Quat q = a.rotation * b.rotation;
  q.normalize();
  return {q, a.rotation * b.translation + a.translation};
}

double rotation_angle(const Quat& q) {
  // atan2 form stays accurate for tiny angles, unlike acos(w).
  const double v = q.vec().norm();
  return 2.0 * std::atan2(v, std::abs(q.w()));
}

double rotation_distance(const Quat& a, const Quat& b) {
  return rotation_angle(a.conjugate() * b);
}

Quat quat_exp(const Vec3& w) {
  const double theta = w.norm();
  if (theta < 1e-12) {
    Quat q(1.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z());
    return q.normalized();
  }
  const double half = 0.5 * theta;
  const Vec3 axis = w / theta;
  const double s = std::sin(half);
  return Quat(std::cos(half), s * axis.x(), s * axis.y(), s * axis.z());
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

CameraPose::CameraPose(const Quat& rotation, const Vec3& translation, double focal,
                       const Vec2& principal_point)
    : translation_(translation), principal_point_(principal_point) {
  set_rotation(rotation);
  set_focal(focal);
}

void CameraPose::set_rotation(const Quat& rotation) {
  const double n = rotation.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw Error(ErrorCode::kInvalidArgument, "rotation quaternion has zero or non-finite norm");
  // Already unit to working precision: keep the bits so poses round-trip exactly.
  rotation_ = std::abs(n - 1.0) <= 8.0 * std::numeric_limits<double>::epsilon() ? rotation
                                                                              : Quat(rotation.coeffs() / n);
}

void CameraPose::set_focal(double focal) {
  if (!(focal > 0.0) || !std::isfinite(focal)) throw Error(ErrorCode::kInvalidArgument, "focal must be positive");
  focal_ = focal;
}

CameraPose CameraPose::with_rigid(const RigidTransform& camera_to_world) const {
  CameraPose out = *this;
  out.set_rotation(camera_to_world.rotation);
  out.set_translation(camera_to_world.translation);
  return out;
}

CameraPose compose(const CameraPose& a, const CameraPose& b) {
  return a.with_rigid(compose(a.camera_to_world(), b.camera_to_world()));
}

CameraPose inverse(const CameraPose& pose) {
  return pose.with_rigid(pose.camera_to_world().inverse());
}

CameraPose transform_pose(const RigidTransform& motion, const CameraPose& pose) {
  return pose.with_rigid(compose(motion, pose.camera_to_world()));
}

CameraEncoding encode(const CameraPose& pose) {
  const Quat& q = pose.rotation();
  const Vec3& t = pose.translation();
  return {q.w(), q.x(), q.y(), q.z(), t.x(), t.y(), t.z(), pose.focal()};
}

CameraPose decode(const CameraEncoding& e) {
  return CameraPose(Quat(e[0], e[1], e[2], e[3]), Vec3(e[4], e[5], e[6]), e[7]);
}

Vec2 pixel_center(int col, int row, int width, int height) {
  return {(col + 0.5) / width, (row + 0.5) / height};
}

std::array<int, 2> containing_pixel(const Vec2& uv, int width, int height) {
  const int col = std::clamp(static_cast<int>(std::floor(uv.x() * width)), 0, width - 1);
  const int row = std::clamp(static_cast<int>(std::floor(uv.y() * height)), 0, height - 1);
  return {col, row};
}

bool inside_image(const Vec2& uv) noexcept {
  return uv.x() >= 0.0 && uv.x() <= 1.0 && uv.y() >= 0.0 && uv.y() <= 1.0;
}

ScaledDepth apply_scale_shift(const DepthMap& depth, const ScaleShift& ss) {
  if (!(ss.a > 0.0)) throw Error(ErrorCode::kInvalidArgument, "scale must be positive");
  ScaledDepth out{depth, 0};
  for (double& d : out.depth.values()) {
    if (d <= 0.0) continue;
    d = ss.a * d + ss.b;
    if (d <= 0.0) {
      d = 0.0;
      ++out.clamped;
    }
  }
  return out;
}

Vec3 unproject_point(const Vec2& uv, double depth, const Intrinsics& k) {
  return {depth * (uv.x() - k.principal_point.x()) / k.focal,
          depth * (uv.y() - k.principal_point.y()) / k.focal, depth};
}

Unprojection unproject(const DepthMap& depth, const CameraPose& pose) {
  const int w = depth.width();
  const int h = depth.height();
  Unprojection out;
  out.camera.width = w;
  out.camera.height = h;
  out.camera.points.assign(depth.size(), Vec3::Zero());
  out.camera.valid.assign(depth.size(), 0);
  out.world.assign(depth.size(), Vec3::Zero());
  const Intrinsics k = pose.intrinsics();
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const double d = depth.at(col, row);
      if (d <= 0.0) continue;
      const std::size_t idx = static_cast<std::size_t>(row) * w + col;
      const Vec3 p = unproject_point(pixel_center(col, row, w, h), d, k);
      out.camera.points[idx] = p;
      out.camera.valid[idx] = 1;
      out.world[idx] = pose.to_world(p);
    }
  }
  return out;
}

std::optional<Projection> try_project_camera(const Vec3& p, const Intrinsics& k) {
  if (!(p.z() > kBehindCameraEpsilon)) return std::nullopt;
  return Projection{{k.focal * p.x() / p.z() + k.principal_point.x(),
                     k.focal * p.y() / p.z() + k.principal_point.y()},
                    p.z()};
}

Projection project(const Vec3& p_world, const CameraPose& pose) {
  auto proj = try_project_camera(pose.to_camera(p_world), pose.intrinsics());
  if (!proj) throw Error(ErrorCode::kBehindCamera, "point is behind the camera");
  return *proj;
}

TrackArray<Vec3> ego_motion_tracks(std::span<const Vec2> queries, int query_frame,
                                   std::span<const DepthMap> depths,
                                   std::span<const CameraPose> poses) {
  const int frames = static_cast<int>(poses.size());
  if (frames == 0 || depths.size() != poses.size())
    throw Error(ErrorCode::kShapeMismatch, "need one depth map per pose");
  if (query_frame < 0 || query_frame >= frames)
    throw Error(ErrorCode::kInvalidArgument, "query frame out of range");
  for (const DepthMap& d : depths) {
    if (d.width() != depths[0].width() || d.height() != depths[0].height())
      throw Error(ErrorCode::kShapeMismatch, "depth maps differ in size");
  }

  const DepthMap& ref = depths[static_cast<std::size_t>(query_frame)];
  const CameraPose& ref_pose = poses[static_cast<std::size_t>(query_frame)];
  const int n = static_cast<int>(queries.size());
  TrackArray<Vec3> tracks(frames, n, Vec3::Zero());
  for (int i = 0; i < n; ++i) {
    const Vec2& q = queries[static_cast<std::size_t>(i)];
    if (!inside_image(q)) throw Error(ErrorCode::kInvalidQuery, "query " + std::to_string(i) + " lies outside the image");
    const auto [col, row] = containing_pixel(q, ref.width(), ref.height());
    const double d = ref.at(col, row);
    if (!(d > 0.0)) throw Error(ErrorCode::kInvalidQuery, "query " + std::to_string(i) + " has invalid depth");
    const Vec3 world = ref_pose.to_world(unproject_point(q, d, ref_pose.intrinsics()));
    for (int t = 0; t < frames; ++t) tracks(t, i) = poses[static_cast<std::size_t>(t)].to_camera(world);
  }
  return tracks;
}

}  // namespace jm
