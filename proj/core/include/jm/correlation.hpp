#pragma once

// Correlation features for the track updater: multi-scale feature pyramids,
// local 2D appearance correlation, harmonic-encoded 3D correlation over point
// maps, and the time / global-position embeddings.

#include <span>
#include <vector>

#include <Eigen/Core>

#include "jm/geometry.hpp"

namespace jm {

inline constexpr int kPyramidLevels = 4;
inline constexpr int kCorrelationRadius = 3;
inline constexpr int kHarmonicFrequencies = 4;
inline constexpr int kMinPyramidSize = 16;

/// Dimension of the image descriptor: 3x3 centred intensities, 3x3 x- and
/// y-gradients, and one constant channel that keeps flat patches normalizable.
inline constexpr int kImageDescriptorDim = 28;

enum class PyramidKind { kImage, kPoints };

/// One pooled level. Cells are s x s pixel blocks (the last row/column may be
/// partial); grid coordinate g addresses the cell centre at pixel (g+0.5)*s.
struct PyramidLevel {
  int scale{1};
  int width{0};
  int height{0};
  int dim{0};
  std::vector<double> data;  // width * height * dim, row-major cells
  Mask valid;

  [[nodiscard]] std::span<const double> cell(int gx, int gy) const {
    return std::span<const double>(data).subspan(
        (static_cast<std::size_t>(gy) * static_cast<std::size_t>(width) + static_cast<std::size_t>(gx)) *
            static_cast<std::size_t>(dim),
        static_cast<std::size_t>(dim));
  }
  [[nodiscard]] bool is_valid(int gx, int gy) const {
    return valid[static_cast<std::size_t>(gy) * static_cast<std::size_t>(width) + static_cast<std::size_t>(gx)] != 0;
  }

  /// Bilinear, border-clamped, ignoring invalid cells. Returns false when all
  /// four neighbours are invalid.
  bool sample(double gx, double gy, Eigen::Ref<Eigen::VectorXd> out) const;
};

struct FeaturePyramid {
  PyramidKind kind{PyramidKind::kImage};
  int base_width{0};
  int base_height{0};
  /// Point pyramids store camera points divided by this (mean valid depth).
  double normalization{1.0};
  std::vector<PyramidLevel> levels;

  /// Grid coordinates of a normalized image position on level `level`.
  [[nodiscard]] Vec2 to_grid(const Vec2& uv, int level) const;
};

/// Throws kImageTooSmall when either side is below kMinPyramidSize.
[[nodiscard]] FeaturePyramid build_image_pyramid(const Image& image, int levels = kPyramidLevels);
[[nodiscard]] FeaturePyramid build_point_pyramid(const PointMap& points, int levels = kPyramidLevels);

/// (sin(2^k pi v_j), cos(2^k pi v_j)) for each coordinate j, k = 0..num_freqs-1.
[[nodiscard]] std::vector<double> harmonic_encode(std::span<const double> v, int num_freqs = kHarmonicFrequencies);
[[nodiscard]] std::vector<double> harmonic_encode(const Vec3& v, int num_freqs = kHarmonicFrequencies);

[[nodiscard]] std::vector<double> global_position_embedding(const Vec3& current, const Vec3& anchor,
                                                            int num_freqs = kHarmonicFrequencies);
/// Harmonic encoding of t / frames.
[[nodiscard]] std::vector<double> time_embedding(int t, int frames, int num_freqs = kHarmonicFrequencies);

/// Dot products between `query` and the descriptors on a (2r+1)^2 window
/// around `grid_center`, row-major over (dy, dx). Sampled descriptors are
/// renormalized; invalid samples score -1.
[[nodiscard]] std::vector<double> local_correlation(const PyramidLevel& level, const Eigen::VectorXd& query,
                                                    const Vec2& grid_center, int radius = kCorrelationRadius);

/// Descriptor of every level of an image pyramid at a normalized position.
[[nodiscard]] std::vector<Eigen::VectorXd> sample_descriptors(const FeaturePyramid& image, const Vec2& uv);

enum class OutsidePolicy { kThrow, kClamp };

struct Corr3d {
  std::vector<double> values;
  bool clamped{false};  // query projected outside the image and was clamped
};

/// Harmonic-encoded relative translations (sample - query) over the window
/// around `uv` on every level of a point pyramid. `query_normalized` is in
/// the pyramid's normalized units. Channels per sample: 6 * num_freqs, plus
/// one appearance channel when `image` and `query_descriptors` are given.
[[nodiscard]] std::vector<double> corr3d_at(const Vec3& query_normalized, const Vec2& uv,
                                            const FeaturePyramid& points, int radius = kCorrelationRadius,
                                            int num_freqs = kHarmonicFrequencies,
                                            const FeaturePyramid* image = nullptr,
                                            std::span<const Eigen::VectorXd> query_descriptors = {});

/// Projects a camera-frame query and evaluates corr3d_at there.
/// kThrow raises kQueryOutsideImage; kClamp clamps to the border and flags.
[[nodiscard]] Corr3d corr3d(const Vec3& query_camera, const FeaturePyramid& points, const Intrinsics& intrinsics,
                            int radius = kCorrelationRadius, int num_freqs = kHarmonicFrequencies,
                            OutsidePolicy policy = OutsidePolicy::kThrow);

[[nodiscard]] inline std::size_t corr3d_length(int radius, int levels, int num_freqs, bool with_appearance = false) {
  const auto side = static_cast<std::size_t>(2 * radius + 1);
  return side * side * static_cast<std::size_t>(levels) *
         static_cast<std::size_t>(6 * num_freqs + (with_appearance ? 1 : 0));
}

/// Each query's frame-`query_frame` world point expressed in every camera
/// under `poses`. Same quantity as ego_motion_tracks, computed through the
/// relative transform of each frame to the query frame.
[[nodiscard]] TrackArray<Vec3> anchor_points(std::span<const Vec2> queries, int query_frame,
                                             std::span<const DepthMap> depths, std::span<const CameraPose> poses);

struct CorrelationFeature {
  std::vector<double> corr3d;
  std::vector<double> e_time;
  std::vector<double> e_gpos;
  double p_dyn{0.0};
  double p_vis{0.0};
  bool clamped{false};
};

/// Assembles the 3D embedding of one (query, frame) pair. Positions are
/// camera-frame; they are expressed in the point pyramid's normalized units
/// before encoding.
[[nodiscard]] CorrelationFeature make_correlation_feature(const Vec3& current_camera, const Vec3& anchor_camera,
                                                          const FeaturePyramid& points, const Intrinsics& intrinsics,
                                                          int t, int frames, double p_dyn, double p_vis,
                                                          const FeaturePyramid* image = nullptr,
                                                          std::span<const Eigen::VectorXd> query_descriptors = {});

}  // namespace jm
