#pragma once

// Deterministic, non-learned track updater. Tracks move by a soft-argmax of
// appearance correlation over the multi-scale window, camera-space positions
// follow the point map under the new 2D position, visibility follows the
// correlation peak, and the dynamic score follows the anchor residual left
// after removing each frame's dominant rigid motion.

#include "jm/joint_motion.hpp"

namespace jm {

struct UpdaterOptions {
  double relaxation{0.9};    // fraction of the way to the new target taken per call
  double temperature{0.1};   // softmax temperature on cosine similarity
  int radius{kCorrelationRadius};
  int match_levels{2};        // finest pyramid levels used by the matcher
  double anchor_pull{0.5};    // blend toward the projected anchor
  double anchor_scale{0.01};  // match-to-anchor gap (normalized units) where the pull halves
  bool propagate{true};       // also search where the neighbouring frame's correction points

  double vis_gain{4.0};
  double vis_reference{0.5};  // peak similarity giving a zero visibility delta
  double vis_gap_gain{50.0};   // visibility penalty for static tracks far from their anchor
  double vis_gap_scale{0.01};  // anchor gap (normalized units) giving half the penalty
  double vis_clamp{2.0};
  double out_of_image_penalty{2.0};

  double dyn_gain{2.0};
  double dyn_reference{0.02};  // relative anchor residual giving a zero dynamic delta
  double dyn_clamp{2.0};
  int rigid_rounds{2};         // robust reweighting rounds of the per-frame compensation

  void validate() const;
};

struct MatchResult {
  Vec2 displacement{Vec2::Zero()};  // normalized image units, before step scaling
  double peak{-1.0};                // mean over levels of the best similarity
  double score{-1.0};               // finest-level similarity at the matched position
  bool valid{false};
};

/// Soft-argmax displacement in grid cells of each level; levels whose query
/// descriptor is zero report nullopt.
struct LevelMatch {
  Vec2 cells{Vec2::Zero()};
  double peak{-1.0};
  bool valid{false};
};
[[nodiscard]] std::vector<LevelMatch> soft_argmax_levels(const FeaturePyramid& image,
                                                         std::span<const Eigen::VectorXd> query_descriptors,
                                                         const Vec2& uv, int radius, double temperature);

/// Soft-argmax match of `query_descriptors` (one per level) around `uv`,
/// coarse to fine over at most `max_levels` levels (0 = all).
/// `bias` (cells, one per level, may be empty) is subtracted from each level's
/// displacement; the updater passes the query's self-match here so that a
/// track sitting on its query in the query image does not move.
[[nodiscard]] MatchResult soft_argmax_match(const FeaturePyramid& image, std::span<const Eigen::VectorXd> query_descriptors,
                                            const Vec2& uv, int radius, double temperature,
                                            std::span<const Vec2> bias = {}, int max_levels = 0);

class CorrelationMatchingUpdater final : public TrackUpdater {
 public:
  CorrelationMatchingUpdater() = default;
  explicit CorrelationMatchingUpdater(const UpdaterOptions& options);

  [[nodiscard]] const UpdaterOptions& options() const noexcept { return options_; }

  [[nodiscard]] TrackDeltas update(const TrackState& state, std::span<const FramePyramids> pyramids,
                                   const TrackArray<Vec3>& anchors) const override;

 private:
  UpdaterOptions options_;
};

}  // namespace jm
