#pragma once

// Poses-only bundle adjustment: world points are held fixed and camera poses
// are refined by Levenberg-Marquardt on visibility-weighted, Huber-robust
// reprojection residuals. Frame 0 fixes the gauge.

#include <span>
#include <vector>

#include <Eigen/Core>

#include "jm/geometry.hpp"

namespace jm {

struct Observation {
  int frame{0};
  int point{0};
  Vec2 uv{Vec2::Zero()};  // normalized image coordinates
  double weight{1.0};
};

struct BAOptions {
  int max_iterations{30};
  double initial_damping{1e-4};
  double damping_up{10.0};
  double damping_down{0.1};
  double convergence_tol{1e-9};  // relative cost decrease
  double huber_delta{0.01};      // normalized image units
  bool optimize_focal{false};
};

struct BAProblem {
  std::vector<Vec3> world_points;
  std::vector<Observation> observations;
  std::vector<CameraPose> initial_poses;
  BAOptions options;
};

struct BAReport {
  std::vector<double> cost_history;  // initial cost, then one entry per accepted step
  double initial_rmse{0.0};
  double final_rmse{0.0};
  std::vector<int> frozen_frames;  // gauge frame plus under-observed frames
  int iterations_used{0};          // LM iterations (accepted + rejected)
  int accepted_steps{0};
};

struct BAResult {
  std::vector<CameraPose> poses;
  BAReport report;
};

inline constexpr double kMinObservationWeight = 1e-6;
inline constexpr int kMinObservationsPerFrame = 4;

/// Throws kInsufficientObservations when every frame is frozen and
/// kNumericalFailure on non-finite cost; the initial poses are never modified.
[[nodiscard]] BAResult solve_ba(const BAProblem& problem);

struct RmseResult {
  double rmse{0.0};
  bool defined{true};  // false when the total weight is zero
};

/// sqrt(sum w |proj - uv|^2 / sum w), observations behind the camera skipped.
[[nodiscard]] RmseResult reprojection_rmse(std::span<const CameraPose> poses, std::span<const Vec3> world_points,
                                           std::span<const Observation> observations);

/// Robust weighted cost sum_i w_i rho(|r_i|^2) with rho the Huber function.
[[nodiscard]] double robust_cost(std::span<const CameraPose> poses, std::span<const Vec3> world_points,
                                 std::span<const Observation> observations, double huber_delta);

namespace ba_detail {

/// Tangent-space block: rotation vector (camera frame), centre delta, focal delta.
using PoseDelta = Eigen::Matrix<double, 7, 1>;
using ResidualJacobian = Eigen::Matrix<double, 2, 7>;

/// R <- R exp(w), c <- c + dc, f <- f + df.
[[nodiscard]] CameraPose retract(const CameraPose& pose, const PoseDelta& delta);

struct Linearization {
  Vec2 residual{Vec2::Zero()};  // projection - observation
  ResidualJacobian jacobian{ResidualJacobian::Zero()};
  bool valid{false};            // false when the point is behind the camera
};

[[nodiscard]] Linearization linearize(const CameraPose& pose, const Vec3& world_point, const Vec2& uv);

}  // namespace ba_detail

}  // namespace jm
