#include "jm/joint_motion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "jm/alignment.hpp"

namespace jm {
namespace {

constexpr double kProbabilityFloor = 1e-6;
constexpr int kGaugeFrame = 0;

void check_deltas(const TrackDeltas& d, int frames, int tracks) {
  const auto shaped = [&](const auto& a) { return a.frames() == frames && a.tracks() == tracks; };
  if (!shaped(d.tracks2d) || !shaped(d.tracks3d) || !shaped(d.logit_dyn) || !shaped(d.logit_vis))
    throw Error(ErrorCode::kShapeMismatch, "updater returned deltas of the wrong shape");
  for (const Vec2& v : d.tracks2d.data())
    if (!v.allFinite()) throw Error(ErrorCode::kNumericalFailure, "updater returned a non-finite 2D delta");
  for (const Vec3& v : d.tracks3d.data())
    if (!v.allFinite()) throw Error(ErrorCode::kNumericalFailure, "updater returned a non-finite 3D delta");
  for (double v : d.logit_dyn.data())
    if (!std::isfinite(v)) throw Error(ErrorCode::kNumericalFailure, "updater returned a non-finite dynamic delta");
  for (double v : d.logit_vis.data())
    if (!std::isfinite(v)) throw Error(ErrorCode::kNumericalFailure, "updater returned a non-finite visibility delta");
}

// Weights are p_vis, times 1 - p_dyn when `dyn` is given, so a track that
// has only just crossed the static threshold enters softly.
std::vector<Observation> static_observations(const TrackState& s, const Mask& use, const TrackArray<double>* dyn) {
  std::vector<Observation> obs;
  for (int i = 0; i < s.tracks(); ++i) {
    if (!use[static_cast<std::size_t>(i)]) continue;
    for (int t = 0; t < s.frames(); ++t) {
      const double w = s.p_vis(t, i) * (dyn ? 1.0 - (*dyn)(t, i) : 1.0);
      if (w > 0.0) obs.push_back({t, i, s.tracks2d(t, i), w});
    }
  }
  return obs;
}

double mean_of(const TrackArray<double>& a) {
  if (a.data().empty()) return 0.0;
  double sum = 0.0;
  for (double v : a.data()) sum += v;
  return sum / static_cast<double>(a.data().size());
}

}  // namespace

TrackDeltas TrackDeltas::zeros(int frames, int tracks) {
  return {TrackArray<Vec2>(frames, tracks, Vec2::Zero()), TrackArray<Vec3>(frames, tracks, Vec3::Zero()),
          TrackArray<double>(frames, tracks, 0.0), TrackArray<double>(frames, tracks, 0.0)};
}

TrackDeltas ZeroUpdater::update(const TrackState& state, std::span<const FramePyramids>,
                                const TrackArray<Vec3>&) const {
  return TrackDeltas::zeros(state.frames(), state.tracks());
}

void LoopConfig::validate() const {
  if (num_iterations < 0) throw Error(ErrorCode::kInvalidArgument, "num_iterations must be nonnegative");
  if (procrustes_every < 1 || ba_every < 1)
    throw Error(ErrorCode::kInvalidArgument, "procrustes_every and ba_every must be at least 1");
  if (!(dyn_threshold > 0.0 && dyn_threshold < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "dyn_threshold must lie in (0,1)");
  if (!(updater_step_scale > 0.0) || !std::isfinite(updater_step_scale))
    throw Error(ErrorCode::kInvalidArgument, "updater_step_scale must be positive");
}

double apply_logit_delta(double p, double delta) {
  if (delta == 0.0) return p;
  const double c = std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
  const double logit = std::log(c / (1.0 - c)) + delta;
  return 1.0 / (1.0 + std::exp(-logit));
}

std::vector<FramePyramids> build_frame_pyramids(std::span<const DepthMap> depths, std::span<const CameraPose> poses,
                                                std::span<const Image> images) {
  if (depths.size() != poses.size()) throw Error(ErrorCode::kShapeMismatch, "need one depth map per pose");
  if (!images.empty() && images.size() != depths.size())
    throw Error(ErrorCode::kShapeMismatch, "need one image per depth map");
  std::vector<FramePyramids> out(depths.size());
  for (std::size_t t = 0; t < depths.size(); ++t) {
    out[t].points = build_point_pyramid(unproject(depths[t], poses[t]).camera);
    if (!images.empty()) out[t].image = build_image_pyramid(images[t]);
  }
  return out;
}

TrackArray<Vec3> anchors_from_query_points(std::span<const Vec3> query_points, int query_frame,
                                           std::span<const CameraPose> poses) {
  const int frames = static_cast<int>(poses.size());
  const int n = static_cast<int>(query_points.size());
  const CameraPose& ref = poses[static_cast<std::size_t>(query_frame)];
  TrackArray<Vec3> anchors(frames, n, Vec3::Zero());
  for (int i = 0; i < n; ++i) {
    const Vec3 world = ref.to_world(query_points[static_cast<std::size_t>(i)]);
    for (int t = 0; t < frames; ++t) anchors(t, i) = poses[static_cast<std::size_t>(t)].to_camera(world);
  }
  return anchors;
}

TrackArray<Vec3> world_tracks(const TrackState& state) {
  TrackArray<Vec3> out(state.frames(), state.tracks(), Vec3::Zero());
  for (int t = 0; t < state.frames(); ++t)
    for (int i = 0; i < state.tracks(); ++i)
      out(t, i) = state.poses[static_cast<std::size_t>(t)].to_world(state.tracks3d(t, i));
  return out;
}

TrackState init_state(std::span<const Vec2> queries, int query_frame, std::span<const DepthMap> depths,
                      std::span<const CameraPose> poses, double dyn_threshold) {
  TrackState s;
  s.tracks3d = ego_motion_tracks(queries, query_frame, depths, poses);
  const int frames = s.tracks3d.frames();
  const int n = s.tracks3d.tracks();
  s.queries.assign(queries.begin(), queries.end());
  s.query_frame = query_frame;
  s.poses.assign(poses.begin(), poses.end());

  const DepthMap& ref = depths[static_cast<std::size_t>(query_frame)];
  const Intrinsics ref_k = poses[static_cast<std::size_t>(query_frame)].intrinsics();
  for (const Vec2& q : queries) {
    const auto [col, row] = containing_pixel(q, ref.width(), ref.height());
    s.query_points.push_back(unproject_point(q, ref.at(col, row), ref_k));
  }

  s.tracks2d = TrackArray<Vec2>(frames, n, Vec2::Zero());
  s.p_vis = TrackArray<double>(frames, n, 0.0);
  s.p_dyn = TrackArray<double>(frames, n, 0.5);
  for (int t = 0; t < frames; ++t) {
    const Intrinsics k = poses[static_cast<std::size_t>(t)].intrinsics();
    for (int i = 0; i < n; ++i) {
      const auto proj = try_project_camera(s.tracks3d(t, i), k);
      if (t == query_frame) {
        s.tracks2d(t, i) = queries[static_cast<std::size_t>(i)];
        s.p_vis(t, i) = 1.0;
      } else if (proj) {
        s.tracks2d(t, i) = proj->uv;
        s.p_vis(t, i) = inside_image(proj->uv) ? 1.0 : 0.0;
      } else {
        s.tracks2d(t, i) = queries[static_cast<std::size_t>(i)];
      }
    }
  }
  s.anchors = anchors_from_query_points(s.query_points, query_frame, s.poses);
  const FusedPoints fused = fuse_world_points(world_tracks(s), s.p_dyn, s.p_vis, dyn_threshold);
  s.world_points = fused.points;
  s.static_mask = fused.is_static;
  return s;
}

StepResult joint_motion_step(const TrackState& state, const TrackUpdater& updater,
                             std::span<const FramePyramids> pyramids, const LoopConfig& config) {
  config.validate();
  const int frames = state.frames();
  const int n = state.tracks();
  if (static_cast<int>(pyramids.size()) != frames)
    throw Error(ErrorCode::kShapeMismatch, "need one pyramid set per frame");

  StepResult out{state, {}, {}};
  TrackState& next = out.state;
  IterationLog& log = out.log;
  next.iteration = state.iteration + 1;
  log.iteration = next.iteration;

  // (1) track update
  const TrackDeltas deltas = updater.update(state, pyramids, state.anchors);
  check_deltas(deltas, frames, n);
  for (int t = 0; t < frames; ++t) {
    for (int i = 0; i < n; ++i) {
      next.tracks2d(t, i) += config.updater_step_scale * deltas.tracks2d(t, i);
      next.tracks3d(t, i) += config.updater_step_scale * deltas.tracks3d(t, i);
      next.p_dyn(t, i) = apply_logit_delta(state.p_dyn(t, i), deltas.logit_dyn(t, i));
      next.p_vis(t, i) = apply_logit_delta(state.p_vis(t, i), deltas.logit_vis(t, i));
    }
  }
  for (int i = 0; i < n; ++i) {
    next.tracks2d(state.query_frame, i) = state.queries[static_cast<std::size_t>(i)];
    next.p_vis(state.query_frame, i) = 1.0;
  }

  const TrackArray<double> zero_dyn(frames, n, 0.0);
  const TrackArray<double>& dyn_for_geometry = config.dynamic_filtering ? next.p_dyn : zero_dyn;

  // (2) per-frame registration of camera-space tracks to the world points.
  // The gauge frame is registered too, then every pose is moved by the one
  // rigid motion that returns it to where it was: the registered shape stays
  // consistent and the gauge does not drift.
  if (next.iteration % config.procrustes_every == 0) {
    std::vector<double> weights(static_cast<std::size_t>(n));
    const CameraPose gauge = next.poses[static_cast<std::size_t>(kGaugeFrame)];
    bool gauge_registered = false;
    for (int t = 0; t < frames; ++t) {
      for (int i = 0; i < n; ++i)
        weights[static_cast<std::size_t>(i)] = (1.0 - dyn_for_geometry(t, i)) * next.p_vis(t, i);
      try {
        const RigidTransform cam_to_world = weighted_procrustes(next.tracks3d.frame(t), next.world_points, weights);
        next.poses[static_cast<std::size_t>(t)] = next.poses[static_cast<std::size_t>(t)].with_rigid(cam_to_world);
        if (t == kGaugeFrame) gauge_registered = true;
      } catch (const Error&) {
        log.procrustes_frozen.push_back(t);
      }
    }
    if (gauge_registered) {
      const RigidTransform fix =
          compose(gauge.camera_to_world(), next.poses[static_cast<std::size_t>(kGaugeFrame)].world_to_camera());
      for (CameraPose& pose : next.poses) pose = transform_pose(fix, pose);
      next.poses[static_cast<std::size_t>(kGaugeFrame)] = gauge;
    }
  }

  // (3) world point fusion
  const FusedPoints fused = fuse_world_points(world_tracks(next), dyn_for_geometry, next.p_vis, config.dyn_threshold);
  next.world_points = fused.points;
  next.static_mask = fused.is_static;
  log.static_points = static_cast<int>(std::count(fused.is_static.begin(), fused.is_static.end(), 1));

  // (4) pose refinement on static points
  const std::vector<Observation> obs = static_observations(next, next.static_mask, &dyn_for_geometry);
  bool ba_ran = false;
  if (next.iteration % config.ba_every == 0 && !obs.empty()) {
    try {
      BAProblem problem{next.world_points, obs, next.poses, config.ba};
      BAResult ba = solve_ba(problem);
      next.poses = std::move(ba.poses);
      out.ba = std::move(ba.report);
      log.ba_iterations = out.ba.iterations_used;
      ba_ran = true;
    } catch (const Error&) {
      log.ba_failed = true;
    }
  } else if (obs.empty()) {
    log.ba_failed = true;
  }

  if (ba_ran) {
    log.rmse = out.ba.final_rmse;
    log.rmse_defined = true;
  } else {
    const Mask all(static_cast<std::size_t>(n), 1);
    const std::vector<Observation> fallback = obs.empty() ? static_observations(next, all, nullptr) : obs;
    const RmseResult r = reprojection_rmse(next.poses, next.world_points, fallback);
    log.rmse = r.rmse;
    log.rmse_defined = r.defined;
  }

  // (5) re-anchor under the new poses
  next.anchors = anchors_from_query_points(next.query_points, next.query_frame, next.poses);
  log.mean_p_dyn = mean_of(next.p_dyn);
  log.mean_p_vis = mean_of(next.p_vis);

  for (double p : next.p_dyn.data())
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::kNumericalFailure, "dynamic probability left [0,1]");
  for (double p : next.p_vis.data())
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::kNumericalFailure, "visibility probability left [0,1]");
  return out;
}

PipelineResult run_pipeline(const PipelineInputs& inputs, const LoopConfig& config, const TrackUpdater& updater) {
  config.validate();
  const std::size_t frames = inputs.poses.size();
  if (frames == 0) throw Error(ErrorCode::kEmptyInput, "no frames");
  if (inputs.depths.size() != frames) throw Error(ErrorCode::kShapeMismatch, "need one depth map per pose");
  if (!inputs.images.empty() && inputs.images.size() != frames)
    throw Error(ErrorCode::kShapeMismatch, "need one image per pose");
  if (!(inputs.scale_shift.a > 0.0)) throw Error(ErrorCode::kInvalidArgument, "depth scale must be positive");

  std::vector<DepthMap> depths;
  depths.reserve(frames);
  for (const DepthMap& d : inputs.depths) depths.push_back(apply_scale_shift(d, inputs.scale_shift).depth);

  PipelineResult result;
  TrackState current = init_state(inputs.queries, inputs.query_frame, depths, inputs.poses, config.dyn_threshold);
  result.state = current;
  if (config.num_iterations > 0) {
    const std::vector<FramePyramids> pyramids = build_frame_pyramids(depths, inputs.poses, inputs.images);
    double best = std::numeric_limits<double>::infinity();
    bool have_best = false;
    for (int k = 0; k < config.num_iterations; ++k) {
      StepResult step = joint_motion_step(current, updater, pyramids, config);
      current = std::move(step.state);
      if (step.log.rmse_defined && step.log.rmse <= best) {
        best = step.log.rmse;
        result.state = current;
        result.best_iteration = current.iteration;
        have_best = true;
      }
      result.log.push_back(std::move(step.log));
      result.ba_reports.push_back(std::move(step.ba));
    }
    if (!have_best) {
      result.state = current;
      result.best_iteration = current.iteration;
    }
  }
  result.world_tracks = world_tracks(result.state);
  return result;
}

}  // namespace jm
