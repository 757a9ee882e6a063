#include "jm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace jm {
namespace {

void check_thresholds(std::span<const double> thresholds) {
  if (thresholds.empty()) throw Error(ErrorCode::kInvalidArgument, "no thresholds");
  for (double d : thresholds)
    if (!(d > 0.0) || !std::isfinite(d)) throw Error(ErrorCode::kInvalidArgument, "thresholds must be positive");
}

bool scored(const TrackEvalInput& in, int t, int i) { return in.query_frame[static_cast<std::size_t>(i)] != t; }

bool within(const TrackEvalInput& in, int t, int i, double threshold) {
  return (in.pred(t, i) - in.gt(t, i)).norm() < threshold * in.gt_depth(t, i);
}

template <typename T>
TrackArray<T> pick(const TrackArray<T>& a, std::span<const int> tracks) {
  TrackArray<T> out(a.frames(), static_cast<int>(tracks.size()));
  for (int t = 0; t < a.frames(); ++t)
    for (std::size_t k = 0; k < tracks.size(); ++k) out(t, static_cast<int>(k)) = a(t, tracks[k]);
  return out;
}

}  // namespace

void TrackEvalInput::validate() const {
  const int frames = gt.frames();
  const int n = gt.tracks();
  const auto same = [&](const auto& a) { return a.frames() == frames && a.tracks() == n; };
  if (!same(pred) || !same(pred_vis) || !same(gt_vis) || !same(gt_depth) ||
      query_frame.size() != static_cast<std::size_t>(n))
    throw Error(ErrorCode::kShapeMismatch, "track evaluation arrays differ in shape");
  for (int q : query_frame)
    if (q < 0 || q >= frames) throw Error(ErrorCode::kInvalidArgument, "query frame out of range");
}

VisMask binarize(const TrackArray<double>& p, double threshold) {
  VisMask out(p.frames(), p.tracks(), 0);
  for (std::size_t k = 0; k < p.data().size(); ++k) out.data()[k] = p.data()[k] > threshold ? 1 : 0;
  return out;
}

TrackEvalInput select_tracks(const TrackEvalInput& input, std::span<const int> tracks) {
  input.validate();
  TrackEvalInput out;
  out.pred = pick(input.pred, tracks);
  out.gt = pick(input.gt, tracks);
  out.pred_vis = pick(input.pred_vis, tracks);
  out.gt_vis = pick(input.gt_vis, tracks);
  out.gt_depth = pick(input.gt_depth, tracks);
  for (int i : tracks) out.query_frame.push_back(input.query_frame[static_cast<std::size_t>(i)]);
  return out;
}

double occlusion_accuracy(const VisMask& pred_vis, const VisMask& gt_vis, std::span<const int> query_frame) {
  if (pred_vis.frames() != gt_vis.frames() || pred_vis.tracks() != gt_vis.tracks() ||
      query_frame.size() != static_cast<std::size_t>(gt_vis.tracks()))
    throw Error(ErrorCode::kShapeMismatch, "visibility masks differ in shape");
  std::size_t agree = 0;
  std::size_t total = 0;
  for (int t = 0; t < gt_vis.frames(); ++t) {
    for (int i = 0; i < gt_vis.tracks(); ++i) {
      if (query_frame[static_cast<std::size_t>(i)] == t) continue;
      ++total;
      if ((pred_vis(t, i) != 0) == (gt_vis(t, i) != 0)) ++agree;
    }
  }
  if (total == 0) throw Error(ErrorCode::kEmptyInput, "no entries to score");
  return 100.0 * static_cast<double>(agree) / static_cast<double>(total);
}

ThresholdScore apd3d(const TrackEvalInput& input, std::span<const double> thresholds) {
  input.validate();
  check_thresholds(thresholds);
  ThresholdScore score;
  for (double delta : thresholds) {
    std::size_t hit = 0;
    std::size_t visible = 0;
    for (int t = 0; t < input.gt.frames(); ++t) {
      for (int i = 0; i < input.gt.tracks(); ++i) {
        if (!scored(input, t, i) || !input.gt_vis(t, i)) continue;
        ++visible;
        if (within(input, t, i, delta)) ++hit;
      }
    }
    if (visible == 0) throw Error(ErrorCode::kNoVisiblePoints, "no gt-visible entries");
    score.per_threshold.push_back(100.0 * static_cast<double>(hit) / static_cast<double>(visible));
  }
  for (double v : score.per_threshold) score.value += v;
  score.value /= static_cast<double>(score.per_threshold.size());
  return score;
}

ThresholdScore average_jaccard(const TrackEvalInput& input, std::span<const double> thresholds) {
  input.validate();
  check_thresholds(thresholds);
  ThresholdScore score;
  bool any_visible = false;
  for (double delta : thresholds) {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (int t = 0; t < input.gt.frames(); ++t) {
      for (int i = 0; i < input.gt.tracks(); ++i) {
        if (!scored(input, t, i)) continue;
        const bool gv = input.gt_vis(t, i) != 0;
        const bool pv = input.pred_vis(t, i) != 0;
        const bool close = gv && within(input, t, i, delta);
        any_visible = any_visible || gv;
        if (pv && close) ++tp;
        else if (pv) ++fp;
        if (gv && !(pv && close)) ++fn;
      }
    }
    if (!any_visible) throw Error(ErrorCode::kNoVisiblePoints, "no gt-visible entries");
    const std::size_t denom = tp + fp + fn;
    score.per_threshold.push_back(denom == 0 ? 0.0 : 100.0 * static_cast<double>(tp) / static_cast<double>(denom));
  }
  for (double v : score.per_threshold) score.value += v;
  score.value /= static_cast<double>(score.per_threshold.size());
  return score;
}

DepthScores depth_metrics(std::span<const DepthMap> pred, std::span<const DepthMap> gt) {
  if (pred.size() != gt.size() || pred.empty()) throw Error(ErrorCode::kShapeMismatch, "depth sequences differ in length");
  std::vector<double> p;
  std::vector<double> g;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    if (pred[f].width() != gt[f].width() || pred[f].height() != gt[f].height())
      throw Error(ErrorCode::kShapeMismatch, "depth maps differ in size");
    const auto pv = pred[f].values();
    const auto gv = gt[f].values();
    for (std::size_t k = 0; k < pv.size(); ++k) {
      if (gv[k] > 0.0 && pv[k] > 0.0) {
        p.push_back(pv[k]);
        g.push_back(gv[k]);
      }
    }
  }
  if (g.empty()) throw Error(ErrorCode::kNoVisiblePoints, "no valid depth pixels");
  const Mask all(p.size(), 1);
  const ScaleShiftFit fit = fit_scale_shift(p, g, all);

  DepthScores s;
  s.alignment = fit.scale_shift;
  s.pixels = g.size();
  double rel = 0.0;
  std::size_t good = 0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double d = fit.scale_shift.a * p[k] + fit.scale_shift.b;
    rel += std::abs(d - g[k]) / g[k];
    if (d > 0.0 && std::max(d / g[k], g[k] / d) < 1.25) ++good;
  }
  s.absrel = rel / static_cast<double>(g.size());
  s.delta125 = static_cast<double>(good) / static_cast<double>(g.size());
  return s;
}

TrajectoryScores trajectory_metrics(std::span<const CameraPose> pred, std::span<const CameraPose> gt, int rpe_gap) {
  if (pred.size() != gt.size()) throw Error(ErrorCode::kShapeMismatch, "trajectories differ in length");
  if (pred.size() < 2) throw Error(ErrorCode::kDegenerateInput, "need at least two poses");
  if (rpe_gap < 1 || static_cast<std::size_t>(rpe_gap) >= pred.size())
    throw Error(ErrorCode::kInvalidArgument, "rpe gap out of range");

  std::vector<Vec3> pc;
  std::vector<Vec3> gc;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    pc.push_back(pred[k].translation());
    gc.push_back(gt[k].translation());
  }
  TrajectoryScores s;
  s.rpe_gap = rpe_gap;
  // identical centres: the SVD would return identity only up to rounding
  s.alignment = pc == gc ? SimilarityTransform{1.0, Quat::Identity(), Vec3::Zero()} : umeyama_sim3(pc, gc);
  const SimilarityTransform& a = s.alignment;

  std::vector<RigidTransform> aligned;
  double sq = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const Vec3 c = a.apply(pc[k]);
    sq += (c - gc[k]).squaredNorm();
    aligned.push_back({(a.rotation * pred[k].rotation()).normalized(), c});
  }
  s.ate = std::sqrt(sq / static_cast<double>(pred.size()));

  double sq_t = 0.0;
  double sq_r = 0.0;
  const std::size_t pairs = pred.size() - static_cast<std::size_t>(rpe_gap);
  for (std::size_t k = 0; k < pairs; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rpe_gap);
    const RigidTransform rel_pred = compose(aligned[k].inverse(), aligned[j]);
    const RigidTransform rel_gt = compose(gt[k].camera_to_world().inverse(), gt[j].camera_to_world());
    const RigidTransform err = compose(rel_gt.inverse(), rel_pred);
    sq_t += err.translation.squaredNorm();
    const double deg = rotation_angle(err.rotation) * 180.0 / std::numbers::pi;
    sq_r += deg * deg;
  }
  s.rpe_t = std::sqrt(sq_t / static_cast<double>(pairs));
  s.rpe_r = std::sqrt(sq_r / static_cast<double>(pairs));
  return s;
}

std::optional<TrackSubsetReport> evaluate_tracks(const TrackEvalInput& input, std::span<const double> thresholds) {
  input.validate();
  if (input.gt.tracks() == 0) return std::nullopt;
  TrackSubsetReport r;
  r.tracks = input.gt.tracks();
  try {
    r.oa = occlusion_accuracy(input.pred_vis, input.gt_vis, input.query_frame);
    r.apd3d = apd3d(input, thresholds);
    r.aj = average_jaccard(input, thresholds);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kEmptyInput || e.code() == ErrorCode::kNoVisiblePoints) return std::nullopt;
    throw;
  }
  return r;
}

}  // namespace jm
