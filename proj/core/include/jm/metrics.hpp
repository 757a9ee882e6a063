#pragma once

// Evaluation metrics: 3D tracking (AJ, APD3D, OA), video depth (AbsRel,
// delta < 1.25 after one shared scale/shift) and camera trajectories
// (ATE, RPE after Sim(3) alignment of camera centres).

#include <optional>
#include <span>
#include <vector>

#include "jm/alignment.hpp"
#include "jm/geometry.hpp"

namespace jm {

/// Depth-relative distance thresholds.
inline const std::vector<double> kDefaultThresholds{0.01, 0.02, 0.04, 0.08, 0.16};
inline constexpr double kVisibilityThreshold = 0.5;

using VisMask = TrackArray<std::uint8_t>;

struct TrackEvalInput {
  TrackArray<Vec3> pred;  // world frame
  TrackArray<Vec3> gt;
  VisMask pred_vis;
  VisMask gt_vis;
  TrackArray<double> gt_depth;  // camera depth of the gt point, scales the thresholds
  std::vector<int> query_frame;  // per track; these entries are not scored

  void validate() const;
};

[[nodiscard]] VisMask binarize(const TrackArray<double>& p, double threshold = kVisibilityThreshold);

/// Restricts every array of `input` to the listed tracks.
[[nodiscard]] TrackEvalInput select_tracks(const TrackEvalInput& input, std::span<const int> tracks);

struct ThresholdScore {
  double value{0.0};                  // percent
  std::vector<double> per_threshold;  // percent
};

/// Percentage of scored entries whose visibility flags agree. Throws kEmptyInput.
[[nodiscard]] double occlusion_accuracy(const VisMask& pred_vis, const VisMask& gt_vis, std::span<const int> query_frame);
/// Throws kNoVisiblePoints when no scored entry is gt-visible.
[[nodiscard]] ThresholdScore apd3d(const TrackEvalInput& input, std::span<const double> thresholds = kDefaultThresholds);
[[nodiscard]] ThresholdScore average_jaccard(const TrackEvalInput& input,
                                             std::span<const double> thresholds = kDefaultThresholds);

struct DepthScores {
  double absrel{0.0};
  double delta125{0.0};  // fraction in [0,1]
  ScaleShift alignment;
  std::size_t pixels{0};
};

/// One scale/shift fitted jointly over every frame; pixels scored where both
/// gt and pred are positive.
[[nodiscard]] DepthScores depth_metrics(std::span<const DepthMap> pred, std::span<const DepthMap> gt);

struct TrajectoryScores {
  double ate{0.0};
  double rpe_t{0.0};
  double rpe_r{0.0};  // degrees
  int rpe_gap{1};
  SimilarityTransform alignment;
};

[[nodiscard]] TrajectoryScores trajectory_metrics(std::span<const CameraPose> pred, std::span<const CameraPose> gt,
                                                  int rpe_gap = 1);

struct TrackSubsetReport {
  ThresholdScore aj;
  ThresholdScore apd3d;
  double oa{0.0};
  int tracks{0};
};

struct MetricReport {
  std::vector<double> thresholds;
  std::optional<TrackSubsetReport> all;
  std::optional<TrackSubsetReport> static_tracks;
  std::optional<TrackSubsetReport> dynamic_tracks;
  std::optional<DepthScores> depth;
  std::optional<TrajectoryScores> trajectory;
};

/// Every track metric on one subset; nullopt when the subset has nothing to score.
[[nodiscard]] std::optional<TrackSubsetReport> evaluate_tracks(const TrackEvalInput& input,
                                                               std::span<const double> thresholds);

}  // namespace jm
