#include "jm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace jm {
namespace {

constexpr double kRoomHalfX = 1.6;
constexpr double kRoomHalfY = 1.2;
constexpr double kFarWall = 4.0;
constexpr double kBackWall = -1.5;
constexpr double kOrbitRadius = 3.0;
constexpr double kObjectHalfSize = 0.4;
constexpr double kOcclusionTolerance = 1e-6;  // relative ray length

std::mt19937_64 make_engine(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const Vec3 v(n(rng), n(rng), n(rng));
    const double len = v.norm();
    if (len > 1e-6) return v / len;
  }
}

std::vector<TexturedQuad::Wave> random_texture(const SceneSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<TexturedQuad::Wave> waves;
  const double amplitude = 0.4 / std::max(1, spec.texture_components);
  for (int k = 0; k < spec.texture_components; ++k) {
    const double f = spec.texture_frequency * (0.6 + 0.8 * unit(rng));
    const double angle = std::numbers::pi * unit(rng);
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    waves.push_back({amplitude * (0.75 + 0.5 * unit(rng)), f * Vec2(std::cos(angle), std::sin(angle)), phase});
  }
  return waves;
}

TexturedQuad make_quad(const Vec3& origin, const Vec3& u, const Vec3& v, double hu, double hv) {
  TexturedQuad q;
  q.origin = origin;
  q.axis_u = u;
  q.axis_v = v;
  q.half_u = hu;
  q.half_v = hv;
  return q;
}

template <typename T>
T bezier(const std::array<T, 3>& p, double s) {
  return (1.0 - s) * (1.0 - s) * p[0] + 2.0 * s * (1.0 - s) * p[1] + s * s * p[2];
}

Quat bezier(const std::array<Quat, 3>& q, double s) {
  const Quat a = q[0].slerp(s, q[1]);
  const Quat b = q[1].slerp(s, q[2]);
  return a.slerp(s, b).normalized();
}

float quantize(double v) { return static_cast<float>(v); }

bool poses_equal(const CameraPose& a, const CameraPose& b) {
  return encode(a) == encode(b) && a.principal_point() == b.principal_point();
}

}  // namespace

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::kOrbit: return "orbit";
    case TrajectoryKind::kForward: return "forward";
    case TrajectoryKind::kRandomSmooth: return "random-smooth";
    case TrajectoryKind::kStatic: return "static";
  }
  return "orbit";
}

TrajectoryKind parse_trajectory(const std::string& name) {
  if (name == "orbit") return TrajectoryKind::kOrbit;
  if (name == "forward") return TrajectoryKind::kForward;
  if (name == "random-smooth") return TrajectoryKind::kRandomSmooth;
  if (name == "static") return TrajectoryKind::kStatic;
  throw Error(ErrorCode::kParse, "unknown trajectory '" + name + "'");
}

void SceneSpec::validate() const {
  if (num_frames < 2) throw Error(ErrorCode::kInfeasibleSpec, "need at least two frames");
  if (width < 16 || height < 16) throw Error(ErrorCode::kInfeasibleSpec, "image must be at least 16x16");
  if (!(focal > 0.0)) throw Error(ErrorCode::kInfeasibleSpec, "focal must be positive");
  if (num_static_points < 0 || num_objects < 0 || points_per_object < 0 || texture_components < 0 ||
      supersampling < 1 || query_margin < 0 || edge_margin < 0)
    throw Error(ErrorCode::kInfeasibleSpec, "counts must be nonnegative");
  if (!(camera_motion >= 0.0) || !(object_displacement >= 0.0) || !(object_rotation_deg >= 0.0) ||
      !(texture_frequency > 0.0))
    throw Error(ErrorCode::kInfeasibleSpec, "motion magnitudes must be nonnegative");
  if (!(depth_sigma >= 0.0) || !(pose_rot_deg >= 0.0) || !(pose_trans_frac >= 0.0) || !(track_sigma >= 0.0))
    throw Error(ErrorCode::kInfeasibleSpec, "noise levels must be nonnegative");
  if (num_static_points + num_objects * points_per_object == 0)
    throw Error(ErrorCode::kInfeasibleSpec, "scene has no tracks");
}

double TexturedQuad::intersect(const Vec3& o, const Vec3& d) const {
  const Vec3 n = axis_u.cross(axis_v);
  const double denom = n.dot(d);
  if (std::abs(denom) < 1e-15) return -1.0;
  const double t = n.dot(origin - o) / denom;
  if (!(t > kBehindCameraEpsilon)) return -1.0;
  const Vec3 p = o + t * d - origin;
  if (std::abs(p.dot(axis_u)) > half_u || std::abs(p.dot(axis_v)) > half_v) return -1.0;
  return t;
}

double TexturedQuad::intensity(const Vec3& point) const {
  const Vec3 p = point - origin;
  const Vec2 ab(p.dot(axis_u), p.dot(axis_v));
  double value = 0.5;
  for (const Wave& w : texture) value += w.amplitude * std::sin(2.0 * std::numbers::pi * w.frequency.dot(ab) + w.phase);
  return value;
}

RayHit cast_ray(const std::vector<TexturedQuad>& quads, const Vec3& origin, const Vec3& direction) {
  RayHit hit;
  for (std::size_t k = 0; k < quads.size(); ++k) {
    const double t = quads[k].intersect(origin, direction);
    if (t > 0.0 && (hit.quad < 0 || t < hit.t)) hit = {t, static_cast<int>(k)};
  }
  return hit;
}

SceneModel::SceneModel(const SceneSpec& spec) : spec_(spec) {
  spec_.validate();
  auto rng = make_engine(spec.seed, 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double depth_half = 0.5 * (kFarWall - kBackWall);
  const double depth_mid = 0.5 * (kFarWall + kBackWall);

  room_.push_back(make_quad({0, 0, kFarWall}, Vec3::UnitX(), Vec3::UnitY(), kRoomHalfX, kRoomHalfY));
  room_.push_back(make_quad({0, 0, kBackWall}, Vec3::UnitX(), Vec3::UnitY(), kRoomHalfX, kRoomHalfY));
  room_.push_back(make_quad({-kRoomHalfX, 0, depth_mid}, Vec3::UnitZ(), Vec3::UnitY(), depth_half, kRoomHalfY));
  room_.push_back(make_quad({kRoomHalfX, 0, depth_mid}, Vec3::UnitZ(), Vec3::UnitY(), depth_half, kRoomHalfY));
  room_.push_back(make_quad({0, kRoomHalfY, depth_mid}, Vec3::UnitX(), Vec3::UnitZ(), kRoomHalfX, depth_half));
  room_.push_back(make_quad({0, -kRoomHalfY, depth_mid}, Vec3::UnitX(), Vec3::UnitZ(), kRoomHalfX, depth_half));
  for (TexturedQuad& q : room_) q.texture = random_texture(spec_, rng);

  for (int k = 0; k < spec_.num_objects; ++k) {
    ObjectPath path;
    const Vec3 centre(-0.5 + unit(rng), -0.35 + 0.7 * unit(rng), 2.3 + 0.5 * unit(rng));
    const Quat tilt = quat_exp(0.15 * random_unit(rng));
    path.quad = make_quad(centre, tilt * Vec3::UnitX(), tilt * Vec3::UnitY(), kObjectHalfSize, kObjectHalfSize);
    path.quad.object = k;
    path.quad.texture = random_texture(spec_, rng);
    path.pivot = centre;

    const double heading = 2.0 * std::numbers::pi * unit(rng);
    const Vec3 dir = Vec3(std::cos(heading), 0.6 * std::sin(heading), 0.0).normalized();
    const Vec3 side = Vec3(-dir.y(), dir.x(), 0.0);
    const double disp = spec_.object_displacement;
    path.translation = {Vec3::Zero(), 0.5 * disp * dir + 0.15 * disp * side, disp * dir};
    const Vec3 axis = random_unit(rng);
    const double angle = spec_.object_rotation_deg * std::numbers::pi / 180.0;
    path.rotation = {Quat::Identity(), quat_exp(0.5 * angle * axis), quat_exp(angle * axis)};
    objects_.push_back(std::move(path));
  }

  const double m = spec_.camera_motion;
  camera_offsets_ = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
  camera_turns_ = {Quat::Identity(), Quat::Identity(), Quat::Identity()};
  if (spec_.trajectory == TrajectoryKind::kRandomSmooth) {
    for (int k = 1; k < 3; ++k) {
      camera_offsets_[static_cast<std::size_t>(k)] =
          Vec3(m * (2.0 * unit(rng) - 1.0), 0.5 * m * (2.0 * unit(rng) - 1.0), m * unit(rng));
      camera_turns_[static_cast<std::size_t>(k)] = quat_exp((0.5 + 0.5 * unit(rng)) * (m / kOrbitRadius) * random_unit(rng));
    }
  }
}

double SceneModel::time_of(int frame) const {
  return static_cast<double>(frame) / static_cast<double>(spec_.num_frames - 1);
}

CameraPose SceneModel::camera(int frame) const {
  const double s = time_of(frame);
  const double m = spec_.camera_motion;
  Quat r = Quat::Identity();
  Vec3 c = Vec3::Zero();
  switch (spec_.trajectory) {
    case TrajectoryKind::kStatic:
      break;
    case TrajectoryKind::kOrbit: {
      const double theta = s * m / kOrbitRadius;
      c = Vec3(0, 0, kOrbitRadius) + kOrbitRadius * Vec3(std::sin(theta), 0.0, -std::cos(theta));
      c.y() += 0.15 * m * std::sin(std::numbers::pi * s);
      r = quat_exp(Vec3(0.0, -theta, 0.0));
      break;
    }
    case TrajectoryKind::kForward:
      c = Vec3(0.3 * m * std::sin(std::numbers::pi * s), 0.1 * m * std::sin(2.0 * std::numbers::pi * s), m * s);
      r = quat_exp(Vec3(0.0, 0.05 * std::sin(std::numbers::pi * s), 0.0));
      break;
    case TrajectoryKind::kRandomSmooth:
      c = bezier(camera_offsets_, s);
      r = bezier(camera_turns_, s);
      break;
  }
  return CameraPose(r, c, spec_.focal);
}

RigidTransform SceneModel::object_motion(int k, int frame) const {
  const ObjectPath& path = objects_.at(static_cast<std::size_t>(k));
  const double s = time_of(frame);
  const Quat r = bezier(path.rotation, s);
  const Vec3 p = bezier(path.translation, s);
  return {r, path.pivot + p - r * path.pivot};
}

std::vector<TexturedQuad> SceneModel::quads_at(int frame) const {
  std::vector<TexturedQuad> quads = room_;
  for (int k = 0; k < num_objects(); ++k) {
    const RigidTransform m = object_motion(k, frame);
    TexturedQuad q = objects_[static_cast<std::size_t>(k)].quad;
    q.origin = m.apply(q.origin);
    q.axis_u = m.rotation * q.axis_u;
    q.axis_v = m.rotation * q.axis_v;
    quads.push_back(std::move(q));
  }
  return quads;
}

TrackArray<double> SceneGroundTruth::track_depths() const {
  TrackArray<double> out(tracks3d_camera.frames(), tracks3d_camera.tracks(), 0.0);
  for (std::size_t k = 0; k < out.data().size(); ++k) out.data()[k] = tracks3d_camera.data()[k].z();
  return out;
}

bool operator==(const SceneGroundTruth& a, const SceneGroundTruth& b) {
  if (a.poses.size() != b.poses.size()) return false;
  for (std::size_t t = 0; t < a.poses.size(); ++t)
    if (!poses_equal(a.poses[t], b.poses[t])) return false;
  return a.spec == b.spec && a.depths == b.depths && a.depths_normalized == b.depths_normalized &&
         a.scale_shift == b.scale_shift && a.scene_scale == b.scene_scale && a.images == b.images &&
         a.queries == b.queries && a.query_frame == b.query_frame && a.tracks2d == b.tracks2d &&
         a.tracks3d_camera == b.tracks3d_camera && a.tracks3d_world == b.tracks3d_world && a.gt_vis == b.gt_vis &&
         a.gt_dynamic == b.gt_dynamic && a.object_id == b.object_id;
}

SceneGroundTruth generate(const SceneSpec& spec) {
  const SceneModel model(spec);
  const int frames = spec.num_frames;
  const int w = spec.width;
  const int h = spec.height;

  SceneGroundTruth gt;
  gt.spec = spec;
  for (int t = 0; t < frames; ++t) {
    const CameraPose pose = model.camera(t);
    const Vec3& c = pose.translation();
    if (std::abs(c.x()) > kRoomHalfX - 0.2 || std::abs(c.y()) > kRoomHalfY - 0.2 || c.z() < kBackWall + 0.2 ||
        c.z() > kFarWall - 1.0)
      throw Error(ErrorCode::kInfeasibleSpec, "camera trajectory leaves the room");
    gt.poses.push_back(pose);
  }

  // Render metric depth at pixel centres and supersampled intensity.
  std::vector<DepthMap> metric;
  std::vector<std::vector<int>> hit_quad(static_cast<std::size_t>(frames));
  double depth_sum = 0.0;
  std::size_t depth_count = 0;
  const int ss = spec.supersampling;
  for (int t = 0; t < frames; ++t) {
    const CameraPose& pose = gt.poses[static_cast<std::size_t>(t)];
    const std::vector<TexturedQuad> quads = model.quads_at(t);
    const Mat3 r = pose.rotation().toRotationMatrix();
    const auto ray = [&](const Vec2& uv) {
      const Vec3 dc((uv.x() - pose.principal_point().x()) / pose.focal(),
                    (uv.y() - pose.principal_point().y()) / pose.focal(), 1.0);
      return Vec3(r * dc);
    };
    DepthMap depth(w, h, 0.0);
    Image image(w, h, 0.0);
    std::vector<int>& hits = hit_quad[static_cast<std::size_t>(t)];
    hits.assign(static_cast<std::size_t>(w * h), -1);
    for (int row = 0; row < h; ++row) {
      for (int col = 0; col < w; ++col) {
        const RayHit hit = cast_ray(quads, pose.translation(), ray(pixel_center(col, row, w, h)));
        if (hit.quad >= 0) {
          depth.at(col, row) = hit.t;
          hits[static_cast<std::size_t>(row * w + col)] = hit.quad;
          depth_sum += hit.t;
          ++depth_count;
        }
        double sum = 0.0;
        for (int sy = 0; sy < ss; ++sy) {
          for (int sx = 0; sx < ss; ++sx) {
            const Vec2 uv((col + (sx + 0.5) / ss) / w, (row + (sy + 0.5) / ss) / h);
            const Vec3 d = ray(uv);
            const RayHit sub = cast_ray(quads, pose.translation(), d);
            if (sub.quad >= 0)
              sum += quads[static_cast<std::size_t>(sub.quad)].intensity(pose.translation() + sub.t * d);
          }
        }
        image.at(col, row) = quantize(sum / (ss * ss));
      }
    }
    metric.push_back(std::move(depth));
    gt.images.push_back(std::move(image));
  }
  if (depth_count == 0) throw Error(ErrorCode::kInfeasibleSpec, "no surface visible");

  gt.scene_scale = depth_sum / static_cast<double>(depth_count);
  gt.scale_shift = {gt.scene_scale, 0.1 * gt.scene_scale};
  const ScaleShift& abt = gt.scale_shift;
  for (const DepthMap& m : metric) {
    DepthMap n(w, h, 0.0);
    DepthMap d(w, h, 0.0);
    for (std::size_t k = 0; k < m.size(); ++k) {
      if (!(m.values()[k] > 0.0)) continue;
      const double v = quantize((m.values()[k] - abt.b) / abt.a);
      if (!(v > 0.0)) throw Error(ErrorCode::kInfeasibleSpec, "surface closer than the depth shift");
      n.values()[k] = v;
      d.values()[k] = abt.a * v + abt.b;
    }
    gt.depths_normalized.push_back(std::move(n));
    gt.depths.push_back(std::move(d));
  }

  // Query pixels on frame 0.
  auto rng = make_engine(spec.seed, 2);
  const std::vector<TexturedQuad> quads0 = model.quads_at(0);
  const std::vector<int>& hits0 = hit_quad[0];
  const int room_quads = static_cast<int>(quads0.size()) - model.num_objects();
  std::vector<std::vector<int>> candidates(static_cast<std::size_t>(model.num_objects() + 1));
  const int margin = spec.query_margin;
  for (int row = margin; row < h - margin; ++row) {
    for (int col = margin; col < w - margin; ++col) {
      const int q = hits0[static_cast<std::size_t>(row * w + col)];
      if (q < 0) continue;
      if (q < room_quads) {
        // Keep clear of creases between walls.
        bool interior = true;
        const int e = spec.edge_margin;
        for (int dy = -e; dy <= e && interior; ++dy)
          for (int dx = -e; dx <= e && interior; ++dx) {
            const int r = std::clamp(row + dy, 0, h - 1);
            const int c = std::clamp(col + dx, 0, w - 1);
            interior = hits0[static_cast<std::size_t>(r * w + c)] == q;
          }
        if (interior) candidates[0].push_back(row * w + col);
        continue;
      }
      // Object pixels away from the silhouette.
      const TexturedQuad& quad = quads0[static_cast<std::size_t>(q)];
      const CameraPose& p0 = gt.poses[0];
      const Vec3 x = p0.to_world(unproject_point(pixel_center(col, row, w, h), metric[0].at(col, row), p0.intrinsics()));
      const Vec3 rel = x - quad.origin;
      if (std::abs(rel.dot(quad.axis_u)) < 0.8 * quad.half_u && std::abs(rel.dot(quad.axis_v)) < 0.8 * quad.half_v)
        candidates[static_cast<std::size_t>(q - room_quads + 1)].push_back(row * w + col);
    }
  }
  std::vector<std::pair<int, int>> picked;  // (pixel, object)
  for (std::size_t g = 0; g < candidates.size(); ++g) {
    const int want = g == 0 ? spec.num_static_points : spec.points_per_object;
    if (static_cast<int>(candidates[g].size()) < want)
      throw Error(ErrorCode::kInfeasibleSpec, "not enough visible pixels for the requested queries");
    std::shuffle(candidates[g].begin(), candidates[g].end(), rng);
    for (int k = 0; k < want; ++k) picked.emplace_back(candidates[g][static_cast<std::size_t>(k)], static_cast<int>(g) - 1);
  }

  const int n = static_cast<int>(picked.size());
  gt.tracks2d = TrackArray<Vec2>(frames, n, Vec2::Zero());
  gt.tracks3d_camera = TrackArray<Vec3>(frames, n, Vec3::Zero());
  gt.tracks3d_world = TrackArray<Vec3>(frames, n, Vec3::Zero());
  gt.gt_vis = VisMask(frames, n, 0);
  std::vector<std::vector<TexturedQuad>> quads_per_frame;
  for (int t = 0; t < frames; ++t) quads_per_frame.push_back(model.quads_at(t));

  const CameraPose& p0 = gt.poses[0];
  for (int i = 0; i < n; ++i) {
    const auto [pixel, object] = picked[static_cast<std::size_t>(i)];
    const int col = pixel % w;
    const int row = pixel / w;
    const Vec2 q = pixel_center(col, row, w, h);
    gt.queries.push_back(q);
    gt.query_frame.push_back(0);
    gt.object_id.push_back(object);
    gt.gt_dynamic.push_back(object >= 0 ? 1 : 0);
    const Vec3 x0 = p0.to_world(unproject_point(q, gt.depths[0].at(col, row), p0.intrinsics()));
    for (int t = 0; t < frames; ++t) {
      const CameraPose& pose = gt.poses[static_cast<std::size_t>(t)];
      const Vec3 x = object >= 0 ? model.object_motion(object, t).apply(x0) : x0;
      const Vec3 xc = pose.to_camera(x);
      if (!(xc.z() > kBehindCameraEpsilon)) throw Error(ErrorCode::kInfeasibleSpec, "a track passes behind the camera");
      gt.tracks3d_world(t, i) = x;
      gt.tracks3d_camera(t, i) = xc;
      const Vec2 uv = try_project_camera(xc, pose.intrinsics())->uv;
      gt.tracks2d(t, i) = t == 0 ? q : uv;
      const RayHit hit = cast_ray(quads_per_frame[static_cast<std::size_t>(t)], pose.translation(), x - pose.translation());
      const bool occluded = hit.quad >= 0 && hit.t < 1.0 - kOcclusionTolerance;
      gt.gt_vis(t, i) = (t == 0 || (inside_image(uv) && !occluded)) ? 1 : 0;
    }
  }

  verify(gt);
  return gt;
}

void verify(const SceneGroundTruth& gt) {
  const auto fail = [](const std::string& what) { throw Error(ErrorCode::kNumericalFailure, "scene invariant: " + what); };
  const int frames = gt.frames();
  const int n = gt.tracks();
  if (frames < 2 || static_cast<int>(gt.depths.size()) != frames || static_cast<int>(gt.images.size()) != frames ||
      static_cast<int>(gt.depths_normalized.size()) != frames)
    fail("frame counts differ");
  if (gt.tracks2d.frames() != frames || gt.tracks2d.tracks() != n || gt.gt_vis.tracks() != n ||
      static_cast<int>(gt.gt_dynamic.size()) != n || static_cast<int>(gt.object_id.size()) != n ||
      static_cast<int>(gt.query_frame.size()) != n)
    fail("track counts differ");

  for (int t = 0; t < frames; ++t) {
    const auto d = gt.depths[static_cast<std::size_t>(t)].values();
    const auto nd = gt.depths_normalized[static_cast<std::size_t>(t)].values();
    for (std::size_t k = 0; k < d.size(); ++k) {
      const double expect = nd[k] > 0.0 ? gt.scale_shift.a * nd[k] + gt.scale_shift.b : 0.0;
      if (d[k] != expect) fail("metric depth is not a * normalized + b");
    }
  }
  for (int i = 0; i < n; ++i) {
    if ((gt.object_id[static_cast<std::size_t>(i)] >= 0) != (gt.gt_dynamic[static_cast<std::size_t>(i)] != 0))
      fail("dynamic label disagrees with object id");
    for (int t = 0; t < frames; ++t) {
      const CameraPose& pose = gt.poses[static_cast<std::size_t>(t)];
      if (!gt.gt_dynamic[static_cast<std::size_t>(i)] && gt.tracks3d_world(t, i) != gt.tracks3d_world(0, i))
        fail("static track moves in world coordinates");
      if ((pose.to_camera(gt.tracks3d_world(t, i)) - gt.tracks3d_camera(t, i)).norm() > 1e-9)
        fail("camera and world tracks disagree");
      if (gt.gt_vis(t, i) && (project(gt.tracks3d_world(t, i), pose).uv - gt.tracks2d(t, i)).norm() > 1e-9)
        fail("2D track is not the projection of the 3D track");
    }
  }
}

PerturbedInputs perturb(const SceneGroundTruth& gt, const PerturbSpec& spec) {
  if (!(spec.pose_rot_deg >= 0.0) || !(spec.pose_trans_frac >= 0.0) || !(spec.depth_sigma >= 0.0) ||
      !(spec.track_sigma >= 0.0))
    throw Error(ErrorCode::kInvalidArgument, "perturbation magnitudes must be nonnegative");
  PerturbedInputs out{gt.poses, gt.depths_normalized, gt.scale_shift, gt.tracks2d};

  auto pose_rng = make_engine(spec.seed, 11);
  for (std::size_t t = 1; t < out.poses.size(); ++t) {
    CameraPose& p = out.poses[t];
    const Vec3 axis = random_unit(pose_rng);
    const Vec3 dir = random_unit(pose_rng);
    if (spec.pose_rot_deg > 0.0) p.set_rotation(p.rotation() * quat_exp(axis * (spec.pose_rot_deg * std::numbers::pi / 180.0)));
    if (spec.pose_trans_frac > 0.0) p.set_translation(p.translation() + dir * (spec.pose_trans_frac * gt.scene_scale));
  }

  if (spec.depth_sigma > 0.0) {
    auto rng = make_engine(spec.seed, 12);
    std::normal_distribution<double> noise(0.0, spec.depth_sigma);
    for (DepthMap& d : out.depths_normalized) {
      for (double& v : d.values()) {
        if (!(v > 0.0)) continue;
        v = quantize(std::max(0.0, v + noise(rng)));
      }
    }
  }

  if (spec.track_sigma > 0.0) {
    auto rng = make_engine(spec.seed, 13);
    std::normal_distribution<double> noise(0.0, spec.track_sigma);
    for (int t = 0; t < out.tracks2d.frames(); ++t) {
      for (int i = 0; i < out.tracks2d.tracks(); ++i) {
        if (gt.query_frame[static_cast<std::size_t>(i)] == t) continue;
        out.tracks2d(t, i) += Vec2(noise(rng), noise(rng));
      }
    }
  }
  return out;
}

}  // namespace jm
