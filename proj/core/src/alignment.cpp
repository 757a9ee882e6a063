#include "jm/alignment.hpp"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace jm {
namespace {

constexpr double kRankRelativeTolerance = 1e-12;
constexpr double kRankAbsoluteTolerance = 1e-24;

void check_pair(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size()) throw Error(ErrorCode::kShapeMismatch, "source and target point counts differ");
  if (src.size() < 3) throw Error(ErrorCode::kDegenerateInput, "need at least 3 correspondences");
}

Quat to_quat(const Mat3& r) {
  Quat q(r);
  q.normalize();
  return q;
}

}  // namespace

int effective_rank(std::span<const Vec3> points, std::span<const double> weights, double weight_tolerance) {
  if (points.size() != weights.size()) throw Error(ErrorCode::kShapeMismatch, "weights do not match points");
  double total = 0.0;
  Vec3 centroid = Vec3::Zero();
  double second_moment = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(weights[i] > weight_tolerance)) continue;
    total += weights[i];
    centroid += weights[i] * points[i];
    second_moment += weights[i] * points[i].squaredNorm();
  }
  if (!(total > 0.0)) return 0;
  centroid /= total;
  second_moment /= total;

  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(weights[i] > weight_tolerance)) continue;
    const Vec3 d = points[i] - centroid;
    cov += weights[i] * d * d.transpose();
  }
  cov /= total;

  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov, Eigen::EigenvaluesOnly);
  const Vec3 lambda = eig.eigenvalues();  // ascending
  const double largest = lambda(2);
  if (!(largest > kRankAbsoluteTolerance * (second_moment + 1.0))) return 0;
  int rank = 0;
  for (int k = 0; k < 3; ++k) {
    if (lambda(k) > kRankRelativeTolerance * largest) ++rank;
  }
  return rank;
}

RigidTransform weighted_procrustes(std::span<const Vec3> src, std::span<const Vec3> dst,
                                   std::span<const double> weights) {
  check_pair(src, dst);
  if (weights.size() != src.size()) throw Error(ErrorCode::kShapeMismatch, "weights do not match points");

  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorCode::kInvalidArgument, "weights must be finite and nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::kDegenerateInput, "weights sum to zero");
  if (effective_rank(src, weights) < 2 || effective_rank(dst, weights) < 2)
    throw Error(ErrorCode::kDegenerateInput, "weighted point cloud is collinear or coincident");

  Vec3 src_mean = Vec3::Zero();
  Vec3 dst_mean = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weights[i] / total;
    src_mean += w * src[i];
    dst_mean += w * dst[i];
  }

  Mat3 cross = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weights[i] / total;
    if (w == 0.0) continue;
    cross += w * (src[i] - src_mean) * (dst[i] - dst_mean).transpose();
  }

  Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 fix = Mat3::Identity();
  if ((v * u.transpose()).determinant() < 0.0) fix(2, 2) = -1.0;
  const Mat3 r = v * fix * u.transpose();

  return {to_quat(r), dst_mean - r * src_mean};
}

RigidTransform procrustes(std::span<const Vec3> src, std::span<const Vec3> dst) {
  const std::vector<double> ones(src.size(), 1.0);
  return weighted_procrustes(src, dst, ones);
}

SimilarityTransform umeyama_sim3(std::span<const Vec3> src, std::span<const Vec3> dst) {
  check_pair(src, dst);
  const std::vector<double> ones(src.size(), 1.0);
  if (effective_rank(src, ones) < 2 || effective_rank(dst, ones) < 2)
    throw Error(ErrorCode::kDegenerateInput, "point cloud is collinear or coincident");

  const double n = static_cast<double>(src.size());
  Vec3 src_mean = Vec3::Zero();
  Vec3 dst_mean = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    src_mean += src[i];
    dst_mean += dst[i];
  }
  src_mean /= n;
  dst_mean /= n;

  double src_var = 0.0;
  Mat3 sigma = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 ds = src[i] - src_mean;
    src_var += ds.squaredNorm();
    sigma += (dst[i] - dst_mean) * ds.transpose();
  }
  src_var /= n;
  sigma /= n;

  Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;
  const Mat3 r = svd.matrixU() * s * svd.matrixV().transpose();
  const double scale = (svd.singularValues().asDiagonal() * s).trace() / src_var;

  return {scale, to_quat(r), dst_mean - scale * (r * src_mean)};
}

ScaleShiftFit fit_scale_shift(std::span<const double> pred, std::span<const double> gt,
                              std::span<const std::uint8_t> mask) {
  if (pred.size() != gt.size() || pred.size() != mask.size())
    throw Error(ErrorCode::kShapeMismatch, "pred, gt and mask sizes differ");

  std::size_t n = 0;
  double pred_sum = 0.0;
  double gt_sum = 0.0;
  bool distinct = false;
  double first = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    if (n == 0) first = pred[i];
    else if (pred[i] != first) distinct = true;
    pred_sum += pred[i];
    gt_sum += gt[i];
    ++n;
  }
  if (n < 2 || !distinct) throw Error(ErrorCode::kDegenerateInput, "scale/shift fit needs two distinct predictions");

  const double pred_mean = pred_sum / static_cast<double>(n);
  const double gt_mean = gt_sum / static_cast<double>(n);
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    const double dp = pred[i] - pred_mean;
    sxx += dp * dp;
    sxy += dp * (gt[i] - gt_mean);
  }

  ScaleShiftFit fit;
  fit.samples = n;
  double a = sxy / sxx;
  if (!(a > 0.0)) {
    a = kMinFittedScale;
    fit.degenerate = true;
  }
  fit.scale_shift = {a, gt_mean - a * pred_mean};
  return fit;
}

FusedPoints fuse_world_points(const TrackArray<Vec3>& tracks_world, const TrackArray<double>& p_dyn,
                              const TrackArray<double>& p_vis, double dyn_threshold) {
  const int frames = tracks_world.frames();
  const int n = tracks_world.tracks();
  if (p_dyn.frames() != frames || p_dyn.tracks() != n || p_vis.frames() != frames || p_vis.tracks() != n)
    throw Error(ErrorCode::kShapeMismatch, "fuse_world_points: array shapes differ");
  if (!(dyn_threshold > 0.0 && dyn_threshold < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "dyn_threshold must lie in (0,1)");
  if (frames == 0) throw Error(ErrorCode::kEmptyInput, "no frames to fuse");

  FusedPoints out;
  out.points.assign(static_cast<std::size_t>(n), Vec3::Zero());
  out.is_static.assign(static_cast<std::size_t>(n), 0);
  out.low_confidence.assign(static_cast<std::size_t>(n), 0);
  out.per_frame = tracks_world;

  for (int i = 0; i < n; ++i) {
    double dyn_sum = 0.0;
    double vis_sum = 0.0;
    Vec3 weighted = Vec3::Zero();
    Vec3 plain = Vec3::Zero();
    for (int t = 0; t < frames; ++t) {
      dyn_sum += p_dyn(t, i);
      vis_sum += p_vis(t, i);
      weighted += p_vis(t, i) * tracks_world(t, i);
      plain += tracks_world(t, i);
    }
    const auto idx = static_cast<std::size_t>(i);
    if (vis_sum > 0.0) {
      out.points[idx] = weighted / vis_sum;
    } else {
      out.points[idx] = plain / static_cast<double>(frames);
      out.low_confidence[idx] = 1;
    }
    out.is_static[idx] = (dyn_sum / frames < dyn_threshold) ? 1 : 0;
  }
  return out;
}

}  // namespace jm
