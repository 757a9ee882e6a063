#pragma once

// Closed-form registrations: weighted Procrustes (SE3), Umeyama (Sim3),
// least-squares depth scale/shift, and fusion of per-frame world tracks.

#include <span>
#include <vector>

#include "jm/geometry.hpp"

namespace jm {

/// Effective rank of a weighted, centred 3D point cloud (0..3). Points with
/// weight below `weight_tolerance` are ignored.
[[nodiscard]] int effective_rank(std::span<const Vec3> points, std::span<const double> weights,
                                 double weight_tolerance = 1e-12);

/// argmin_{R,t} sum_i w_i |R src_i + t - dst_i|^2 with det R = +1.
/// Throws kDegenerateInput if either weighted cloud has rank < 2.
[[nodiscard]] RigidTransform weighted_procrustes(std::span<const Vec3> src, std::span<const Vec3> dst,
                                                 std::span<const double> weights);

/// Uniform-weight Procrustes.
[[nodiscard]] RigidTransform procrustes(std::span<const Vec3> src, std::span<const Vec3> dst);

/// argmin_{s,R,t} sum_i |s R src_i + t - dst_i|^2 (Umeyama 1991).
[[nodiscard]] SimilarityTransform umeyama_sim3(std::span<const Vec3> src, std::span<const Vec3> dst);

struct ScaleShiftFit {
  ScaleShift scale_shift;
  bool degenerate{false};  // solved scale was <= 0 and got clamped
  std::size_t samples{0};
};

inline constexpr double kMinFittedScale = 1e-6;

/// argmin_{a,b} sum over masked i of (a pred_i + b - gt_i)^2.
[[nodiscard]] ScaleShiftFit fit_scale_shift(std::span<const double> pred, std::span<const double> gt,
                                            std::span<const std::uint8_t> mask);

struct FusedPoints {
  std::vector<Vec3> points;     // one per track
  Mask is_static;               // mean p_dyn below threshold
  Mask low_confidence;          // no visibility mass, plain mean used
  TrackArray<Vec3> per_frame;   // input world positions, kept for output
};

/// Visibility-weighted mean world position per track, with tracks whose mean
/// dynamic probability reaches `dyn_threshold` flagged as dynamic.
[[nodiscard]] FusedPoints fuse_world_points(const TrackArray<Vec3>& tracks_world,
                                            const TrackArray<double>& p_dyn,
                                            const TrackArray<double>& p_vis, double dyn_threshold);

}  // namespace jm
