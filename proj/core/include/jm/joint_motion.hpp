#pragma once

// Iterative joint refinement of tracks and camera poses. Each step runs the
// track updater, registers every frame's camera-space tracks to the current
// world points, fuses world points with dynamic filtering, refines poses by
// bundle adjustment and recomputes the anchor points from the new poses.

#include <memory>
#include <span>
#include <vector>

#include "jm/bundle_adjust.hpp"
#include "jm/correlation.hpp"
#include "jm/geometry.hpp"

namespace jm {

struct TrackState {
  std::vector<Vec2> queries;
  int query_frame{0};
  std::vector<Vec3> query_points;  // lifted queries, query-frame camera coordinates
  TrackArray<Vec2> tracks2d;
  TrackArray<Vec3> tracks3d;       // camera frame
  TrackArray<double> p_dyn;
  TrackArray<double> p_vis;
  std::vector<CameraPose> poses;
  TrackArray<Vec3> anchors;        // query world points seen from every camera
  std::vector<Vec3> world_points;  // fused, one per track
  Mask static_mask;
  int iteration{0};

  [[nodiscard]] int frames() const noexcept { return tracks2d.frames(); }
  [[nodiscard]] int tracks() const noexcept { return tracks2d.tracks(); }
};

struct TrackDeltas {
  TrackArray<Vec2> tracks2d;
  TrackArray<Vec3> tracks3d;
  TrackArray<double> logit_dyn;
  TrackArray<double> logit_vis;

  [[nodiscard]] static TrackDeltas zeros(int frames, int tracks);
};

/// Per-frame inputs of the updater. `image` may be empty (no levels) when
/// no intensity frames are available.
struct FramePyramids {
  FeaturePyramid image;
  FeaturePyramid points;
};

class TrackUpdater {
 public:
  virtual ~TrackUpdater() = default;
  /// Must be deterministic and return finite deltas.
  [[nodiscard]] virtual TrackDeltas update(const TrackState& state, std::span<const FramePyramids> pyramids,
                                           const TrackArray<Vec3>& anchors) const = 0;
};

class ZeroUpdater final : public TrackUpdater {
 public:
  [[nodiscard]] TrackDeltas update(const TrackState& state, std::span<const FramePyramids> pyramids,
                                   const TrackArray<Vec3>& anchors) const override;
};

struct LoopConfig {
  int num_iterations{8};
  int procrustes_every{1};
  int ba_every{1};
  double dyn_threshold{0.5};
  double updater_step_scale{1.0};
  /// When false every track is treated as static by Procrustes, fusion and BA.
  bool dynamic_filtering{true};
  BAOptions ba;

  void validate() const;
};

struct IterationLog {
  int iteration{0};
  double rmse{0.0};
  bool rmse_defined{false};
  double mean_p_dyn{0.0};
  double mean_p_vis{0.0};
  int ba_iterations{0};
  int static_points{0};
  std::vector<int> procrustes_frozen;  // frames whose registration was degenerate
  bool ba_failed{false};
};

struct StepResult {
  TrackState state;
  IterationLog log;
  BAReport ba;
};

/// Logits are clamped to p in [1e-6, 1 - 1e-6] before the update; a zero
/// delta leaves p untouched.
[[nodiscard]] double apply_logit_delta(double p, double delta);

/// Camera-space point maps of every frame from scaled depths.
[[nodiscard]] std::vector<FramePyramids> build_frame_pyramids(std::span<const DepthMap> depths,
                                                              std::span<const CameraPose> poses,
                                                              std::span<const Image> images);

/// Anchors from lifted query points: pose_t^{-1} pose_{t0} q.
[[nodiscard]] TrackArray<Vec3> anchors_from_query_points(std::span<const Vec3> query_points, int query_frame,
                                                         std::span<const CameraPose> poses);

/// `depths` are already scale-shift aligned.
[[nodiscard]] TrackState init_state(std::span<const Vec2> queries, int query_frame, std::span<const DepthMap> depths,
                                    std::span<const CameraPose> poses, double dyn_threshold = 0.5);

[[nodiscard]] StepResult joint_motion_step(const TrackState& state, const TrackUpdater& updater,
                                           std::span<const FramePyramids> pyramids, const LoopConfig& config);

struct PipelineInputs {
  std::vector<Vec2> queries;
  int query_frame{0};
  std::vector<DepthMap> depths;  // normalized
  ScaleShift scale_shift;
  std::vector<CameraPose> poses;
  std::vector<Image> images;     // optional
};

struct PipelineResult {
  TrackState state;  // best-cost state
  int best_iteration{0};
  std::vector<IterationLog> log;
  std::vector<BAReport> ba_reports;
  TrackArray<Vec3> world_tracks;  // tracks3d of the returned state under its poses
};

[[nodiscard]] TrackArray<Vec3> world_tracks(const TrackState& state);

/// init_state followed by config.num_iterations steps. Returns the state with
/// the lowest reprojection RMSE over iterations >= 1 (later wins ties), or
/// the initial state when no iteration runs.
[[nodiscard]] PipelineResult run_pipeline(const PipelineInputs& inputs, const LoopConfig& config,
                                          const TrackUpdater& updater);

}  // namespace jm
