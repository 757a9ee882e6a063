#include "jm/updater.hpp"

#include <algorithm>
#include <cmath>

#include "jm/alignment.hpp"

namespace jm {
namespace {

constexpr double kMinResidualScale = 1e-9;
// Similarity gap over which a competing candidate position takes over; a soft
// switch keeps the update continuous in its inputs.
constexpr double kChoiceTemperature = 0.01;

double prefer(double challenger, double incumbent) {
  return 1.0 / (1.0 + std::exp((incumbent - challenger) / kChoiceTemperature));
}

RigidTransform robust_rigid(std::span<const Vec3> src, std::span<const Vec3> dst, std::span<const double> base,
                            int rounds) {
  std::vector<double> w(base.begin(), base.end());
  RigidTransform fit;
  std::vector<double> residual(src.size());
  for (int r = 0;; ++r) {
    try {
      fit = weighted_procrustes(src, dst, w);
    } catch (const Error&) {
      return r == 0 ? RigidTransform::identity() : fit;
    }
    if (r == rounds) return fit;

    std::vector<double> active;
    for (std::size_t i = 0; i < src.size(); ++i) {
      residual[i] = (fit.apply(src[i]) - dst[i]).norm();
      if (base[i] > 0.0) active.push_back(residual[i]);
    }
    if (active.empty()) return fit;
    const auto mid = active.begin() + static_cast<std::ptrdiff_t>(active.size() / 2);
    std::nth_element(active.begin(), mid, active.end());
    const double scale = std::max(2.0 * *mid, kMinResidualScale);
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double u = residual[i] / scale;
      w[i] = base[i] / (1.0 + u * u);
    }
  }
}

LevelMatch level_match(const PyramidLevel& level, const Eigen::VectorXd& q, const Vec2& grid, int radius,
                       double temperature) {
  const std::vector<double> sims = local_correlation(level, q, grid, radius);
  const double best = *std::max_element(sims.begin(), sims.end());
  double total = 0.0;
  Vec2 disp = Vec2::Zero();
  std::size_t k = 0;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx, ++k) {
      const double w = std::exp((sims[k] - best) / temperature);
      total += w;
      disp += w * Vec2(dx, dy);
    }
  }
  return {disp / total, best, true};
}

}  // namespace

void UpdaterOptions::validate() const {
  const bool ok = relaxation > 0.0 && relaxation <= 1.0 && temperature > 0.0 && radius >= 1 && match_levels >= 0 &&
                  anchor_pull >= 0.0 && anchor_pull <= 1.0 && anchor_scale > 0.0 && vis_gap_gain >= 0.0 &&
                  vis_gap_scale > 0.0 && vis_clamp >= 0.0 && out_of_image_penalty >= 0.0 && dyn_reference > 0.0 &&
                  dyn_clamp >= 0.0 && rigid_rounds >= 0;
  if (!ok) throw Error(ErrorCode::kInvalidArgument, "invalid updater options");
}

std::vector<LevelMatch> soft_argmax_levels(const FeaturePyramid& image,
                                           std::span<const Eigen::VectorXd> query_descriptors, const Vec2& uv,
                                           int radius, double temperature) {
  std::vector<LevelMatch> out(image.levels.size());
  for (std::size_t l = 0; l < image.levels.size() && l < query_descriptors.size(); ++l) {
    if (query_descriptors[l].norm() == 0.0) continue;
    out[l] = level_match(image.levels[l], query_descriptors[l], image.to_grid(uv, static_cast<int>(l)), radius,
                         temperature);
  }
  return out;
}

MatchResult soft_argmax_match(const FeaturePyramid& image, std::span<const Eigen::VectorXd> query_descriptors,
                              const Vec2& uv, int radius, double temperature, std::span<const Vec2> bias,
                              int max_levels) {
  // Coarse to fine: each level refines the position found by the coarser one.
  // A coarse proposal is kept only if the finest level agrees it is a better
  // match, so coarse cells straddling a crease cannot drag a good track off.
  MatchResult m;
  const std::size_t levels = std::min(image.levels.size(), query_descriptors.size());
  if (levels == 0 || query_descriptors[0].norm() == 0.0) return m;
  const std::size_t top = max_levels > 0 ? std::min(levels, static_cast<std::size_t>(max_levels)) : levels;
  const PyramidLevel& fine = image.levels[0];
  Eigen::VectorXd desc(query_descriptors[0].size());
  const auto fine_similarity = [&](const Vec2& p) {
    const Vec2 g = image.to_grid(p, 0);
    if (!inside_image(p) || !fine.sample(g.x(), g.y(), desc)) return -1.0;
    const double norm = desc.norm();
    return norm > 0.0 ? desc.dot(query_descriptors[0]) / (norm * query_descriptors[0].norm()) : -1.0;
  };

  Vec2 pos = uv;
  double current = fine_similarity(pos);
  double peak_sum = 0.0;
  int used = 0;
  for (std::size_t l = top; l-- > 0;) {
    const Eigen::VectorXd& q = query_descriptors[l];
    if (q.norm() == 0.0) continue;
    const LevelMatch lm = level_match(image.levels[l], q, image.to_grid(pos, static_cast<int>(l)), radius, temperature);
    peak_sum += lm.peak;
    ++used;
    Vec2 cells = lm.cells;
    if (l < bias.size()) cells -= bias[l];
    const int scale = image.levels[l].scale;
    const Vec2 proposal = pos + Vec2(cells.x() * scale / image.base_width, cells.y() * scale / image.base_height);
    if (l == 0) {
      pos = proposal;
      break;
    }
    const double w = prefer(fine_similarity(proposal), current);
    if (w > 0.0) {
      pos += w * (proposal - pos);
      current = fine_similarity(pos);
    }
  }
  m.displacement = pos - uv;
  m.peak = peak_sum / used;
  m.score = fine_similarity(pos);
  m.valid = true;
  return m;
}

CorrelationMatchingUpdater::CorrelationMatchingUpdater(const UpdaterOptions& options) : options_(options) {
  options_.validate();
}

TrackDeltas CorrelationMatchingUpdater::update(const TrackState& state, std::span<const FramePyramids> pyramids,
                                               const TrackArray<Vec3>& anchors) const {
  const int frames = state.frames();
  const int n = state.tracks();
  if (static_cast<int>(pyramids.size()) != frames) throw Error(ErrorCode::kShapeMismatch, "need one pyramid set per frame");
  if (anchors.frames() != frames || anchors.tracks() != n) throw Error(ErrorCode::kShapeMismatch, "anchor shape mismatch");

  TrackDeltas d = TrackDeltas::zeros(frames, n);
  const int t0 = state.query_frame;
  const FeaturePyramid& ref_image = pyramids[static_cast<std::size_t>(t0)].image;

  std::vector<std::vector<Eigen::VectorXd>> query_desc;
  std::vector<std::vector<Vec2>> self_bias;
  query_desc.reserve(static_cast<std::size_t>(n));
  self_bias.reserve(static_cast<std::size_t>(n));
  for (const Vec2& q : state.queries) {
    query_desc.push_back(ref_image.levels.empty() ? std::vector<Eigen::VectorXd>{} : sample_descriptors(ref_image, q));
    std::vector<Vec2> bias;
    for (const LevelMatch& lm :
         soft_argmax_levels(ref_image, query_desc.back(), q, options_.radius, options_.temperature))
      bias.push_back(lm.cells);
    self_bias.push_back(std::move(bias));
  }

  TrackArray<Vec3> updated = state.tracks3d;
  TrackArray<Vec3> matched = state.tracks3d;  // appearance-only target, for the dynamic evidence
  Eigen::VectorXd sample(3);
  // Frames are visited outward from the query frame so each can be seeded by
  // the correction found one frame closer to it.
  std::vector<int> order;
  for (int t = t0 + 1; t < frames; ++t) order.push_back(t);
  for (int t = t0 - 1; t >= 0; --t) order.push_back(t);
  std::vector<Vec2> carry(static_cast<std::size_t>(n), Vec2::Zero());
  for (int t : order) {
    if (t == t0 - 1) std::fill(carry.begin(), carry.end(), Vec2::Zero());
    const FramePyramids& pyr = pyramids[static_cast<std::size_t>(t)];
    const Intrinsics k = state.poses[static_cast<std::size_t>(t)].intrinsics();
    // Depth under a position, lifted along its ray.
    const auto lift = [&](const Vec2& at, const Vec3& fallback) -> Vec3 {
      double z = fallback.z();
      const Vec2 g = pyr.points.to_grid(at, 0);
      if (inside_image(at) && pyr.points.levels.front().sample(g.x(), g.y(), sample))
        z = sample(2) * pyr.points.normalization;
      return z > kBehindCameraEpsilon ? unproject_point(at, z, k) : fallback;
    };
    for (int i = 0; i < n; ++i) {
      const Vec2 uv = state.tracks2d(t, i);
      Vec2& prev = carry[static_cast<std::size_t>(i)];
      if (!inside_image(uv)) {
        d.logit_vis(t, i) = -options_.out_of_image_penalty;
        prev.setZero();
        continue;
      }
      const auto& desc = query_desc[static_cast<std::size_t>(i)];
      const auto& bias = self_bias[static_cast<std::size_t>(i)];
      const MatchResult m = soft_argmax_match(pyr.image, desc, uv, options_.radius, options_.temperature, bias,
                                              options_.match_levels);
      if (!m.valid) {
        prev.setZero();
        continue;
      }
      double vis = options_.vis_gain * (m.peak - options_.vis_reference);
      Vec2 target = uv + m.displacement;
      double best = m.score;

      if (options_.propagate && prev.squaredNorm() > 0.0 && inside_image(uv + prev)) {
        const MatchResult c = soft_argmax_match(pyr.image, desc, uv + prev, options_.radius, options_.temperature,
                                                bias, options_.match_levels);
        if (c.valid) {
          const double w = state.p_dyn(t, i) * prefer(c.score, best);
          target += w * (uv + prev + c.displacement - target);
          best = std::max(best, c.score);
        }
      }

      // A second search seeded at the projected anchor; it wins only on a
      // better appearance score, which recovers tracks that drifted onto a
      // wrong local maximum once the poses are good.
      const auto anchor = try_project_camera(anchors(t, i), k);
      const bool anchor_in = anchor && inside_image(anchor->uv);
      if (anchor_in) {
        const MatchResult a =
            soft_argmax_match(pyr.image, desc, anchor->uv, options_.radius, options_.temperature, bias,
                              options_.match_levels);
        if (a.valid) target += prefer(a.score, best) * (anchor->uv + a.displacement - target);
      }
      matched(t, i) = lift(target, state.tracks3d(t, i));
      prev = target - uv;

      // Tracks are also drawn toward where the current poses say the query
      // should be. The pull fades with the disagreement: a large gap means the poses or
      // the static hypothesis are still wrong, a small one is matcher bias.
      if (anchor_in) {
        const double gap2 = (anchor->uv - target).squaredNorm();
        const double s2 = options_.anchor_scale * options_.anchor_scale;
        const double pull = options_.anchor_pull * s2 / (s2 + gap2);
        target = (1.0 - pull) * target + pull * anchor->uv;
        // A static-looking track far from its anchor is probably matched to
        // the wrong surface in this frame.
        const double v2 = options_.vis_gap_scale * options_.vis_gap_scale;
        vis -= options_.vis_gap_gain * (1.0 - state.p_dyn(t, i)) * gap2 / (gap2 + v2);
      }
      d.logit_vis(t, i) = std::clamp(vis, -options_.vis_clamp, options_.vis_clamp);
      const Vec2 next_uv = uv + options_.relaxation * (target - uv);
      d.tracks2d(t, i) = next_uv - uv;
      updated(t, i) = lift(next_uv, state.tracks3d(t, i));
      d.tracks3d(t, i) = updated(t, i) - state.tracks3d(t, i);
    }
  }

  // Dynamic evidence: anchor residual after per-frame rigid compensation.
  std::vector<double> num(static_cast<std::size_t>(n), 0.0);
  std::vector<double> den(static_cast<std::size_t>(n), 0.0);
  std::vector<double> base(static_cast<std::size_t>(n));
  for (int t = 0; t < frames; ++t) {
    if (t == t0) continue;
    for (int i = 0; i < n; ++i)
      base[static_cast<std::size_t>(i)] = (1.0 - state.p_dyn(t, i)) * state.p_vis(t, i);
    const RigidTransform comp = robust_rigid(anchors.frame(t), matched.frame(t), base, options_.rigid_rounds);
    for (int i = 0; i < n; ++i) {
      const Vec3& target = matched(t, i);
      const double rel = (comp.apply(anchors(t, i)) - target).norm() / std::max(std::abs(target.z()), 1e-6);
      const double w = state.p_vis(t, i);
      num[static_cast<std::size_t>(i)] += w * rel * rel;
      den[static_cast<std::size_t>(i)] += w;
    }
  }
  for (int i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (!(den[idx] > 0.0)) continue;
    const double rho = std::sqrt(num[idx] / den[idx]);
    const double delta = std::clamp(options_.dyn_gain * std::log(std::max(rho, 1e-300) / options_.dyn_reference),
                                    -options_.dyn_clamp, options_.dyn_clamp);
    for (int t = 0; t < frames; ++t) d.logit_dyn(t, i) = delta;
  }
  return d;
}

}  // namespace jm
