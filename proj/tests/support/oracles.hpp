#pragma once

// Brute-force reference implementations of the evaluation metrics, written
// directly from their definitions and sharing no code with the library.

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "jm/metrics.hpp"
#include "test_support.hpp"

namespace jm::testing {

inline TrackEvalInput random_eval_input(Rng& rng, int frames, int tracks) {
  TrackEvalInput in;
  in.pred = TrackArray<Vec3>(frames, tracks);
  in.gt = TrackArray<Vec3>(frames, tracks);
  in.pred_vis = VisMask(frames, tracks);
  in.gt_vis = VisMask(frames, tracks);
  in.gt_depth = TrackArray<double>(frames, tracks);
  for (int t = 0; t < frames; ++t) {
    for (int i = 0; i < tracks; ++i) {
      in.gt(t, i) = random_vec(rng, 2.0);
      in.gt_depth(t, i) = uniform(rng, 1.0, 5.0);
      // log-uniform error so every threshold bucket is populated
      const double err = std::exp(uniform(rng, std::log(0.002), std::log(0.5))) * in.gt_depth(t, i);
      in.pred(t, i) = in.gt(t, i) + err * random_vec(rng, 1.0).normalized();
      in.gt_vis(t, i) = uniform(rng, 0, 1) < 0.8;
      in.pred_vis(t, i) = uniform(rng, 0, 1) < 0.75;
    }
  }
  for (int i = 0; i < tracks; ++i) in.query_frame.push_back(static_cast<int>(rng() % static_cast<unsigned>(frames)));
  return in;
}

inline double brute_oa(const TrackEvalInput& in) {
  int agree = 0, total = 0;
  for (int t = 0; t < in.gt.frames(); ++t)
    for (int i = 0; i < in.gt.tracks(); ++i) {
      if (in.query_frame[static_cast<std::size_t>(i)] == t) continue;
      ++total;
      agree += (in.pred_vis(t, i) == in.gt_vis(t, i));
    }
  return 100.0 * agree / total;
}

inline double brute_apd(const TrackEvalInput& in, const std::vector<double>& thresholds) {
  double sum = 0.0;
  for (double d : thresholds) {
    int hit = 0, vis = 0;
    for (int t = 0; t < in.gt.frames(); ++t)
      for (int i = 0; i < in.gt.tracks(); ++i) {
        if (in.query_frame[static_cast<std::size_t>(i)] == t || !in.gt_vis(t, i)) continue;
        ++vis;
        hit += (in.pred(t, i) - in.gt(t, i)).norm() < d * in.gt_depth(t, i);
      }
    sum += static_cast<double>(hit) / vis;
  }
  return 100.0 * sum / static_cast<double>(thresholds.size());
}

inline double brute_aj(const TrackEvalInput& in, const std::vector<double>& thresholds) {
  double sum = 0.0;
  for (double d : thresholds) {
    int tp = 0, fp = 0, fn = 0;
    for (int t = 0; t < in.gt.frames(); ++t)
      for (int i = 0; i < in.gt.tracks(); ++i) {
        if (in.query_frame[static_cast<std::size_t>(i)] == t) continue;
        const bool gv = in.gt_vis(t, i), pv = in.pred_vis(t, i);
        const bool close = (in.pred(t, i) - in.gt(t, i)).norm() < d * in.gt_depth(t, i);
        tp += pv && gv && close;
        fp += pv && (!gv || !close);
        fn += gv && (!pv || !close);
      }
    sum += static_cast<double>(tp) / (tp + fp + fn);
  }
  return 100.0 * sum / static_cast<double>(thresholds.size());
}

struct DepthOracle {
  double absrel{0.0};
  double delta125{0.0};
};

// One least-squares scale/shift over every pixel of every frame where both
// maps are positive, by the 2x2 normal equations.
inline DepthOracle brute_depth(const std::vector<DepthMap>& pred, const std::vector<DepthMap>& gt) {
  std::vector<std::pair<double, double>> used;
  double n = 0, sp = 0, sg = 0, spp = 0, spg = 0;
  for (std::size_t f = 0; f < gt.size(); ++f)
    for (std::size_t j = 0; j < gt[f].size(); ++j) {
      const double p = pred[f].values()[j], g = gt[f].values()[j];
      if (p <= 0.0 || g <= 0.0) continue;
      used.emplace_back(p, g);
      n += 1;
      sp += p;
      sg += g;
      spp += p * p;
      spg += p * g;
    }
  const double a = (n * spg - sp * sg) / (n * spp - sp * sp);
  const double b = (sg - a * sp) / n;
  DepthOracle out;
  for (const auto& [p, g] : used) {
    const double d = a * p + b;
    out.absrel += std::abs(d - g) / g;
    out.delta125 += (d > 0 && std::max(d / g, g / d) < 1.25) ? 1.0 : 0.0;
  }
  out.absrel /= n;
  out.delta125 /= n;
  return out;
}

// Horn's quaternion solution for the rotation, then the least-squares scale
// for that rotation.
inline SimilarityTransform horn_sim3(const std::vector<Vec3>& x, const std::vector<Vec3>& y) {
  Vec3 mx = Vec3::Zero(), my = Vec3::Zero();
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  Mat3 m = Mat3::Zero();
  for (std::size_t k = 0; k < x.size(); ++k) m += (x[k] - mx) * (y[k] - my).transpose();
  const double sxx = m(0, 0), sxy = m(0, 1), sxz = m(0, 2), syx = m(1, 0), syy = m(1, 1), syz = m(1, 2),
               szx = m(2, 0), szy = m(2, 1), szz = m(2, 2);
  Eigen::Matrix4d n;
  n << sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
       syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
       szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
       sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(n);
  const Eigen::Vector4d v = es.eigenvectors().col(3);
  const Quat q(v(0), v(1), v(2), v(3));
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    num += (y[k] - my).dot(q * (x[k] - mx));
    den += (x[k] - mx).squaredNorm();
  }
  const double s = num / den;
  return {s, q, my - s * (q * mx)};
}

struct TrajectoryOracle {
  double ate{0.0};
  double rpe_t{0.0};
  double rpe_r{0.0};  // degrees
};

// Homogeneous-matrix evaluation after Horn alignment of the centres.
inline TrajectoryOracle brute_trajectory(const std::vector<CameraPose>& pred, const std::vector<CameraPose>& gt,
                                         int gap = 1) {
  std::vector<Vec3> x, y;
  for (std::size_t k = 0; k < gt.size(); ++k) {
    x.push_back(pred[k].translation());
    y.push_back(gt[k].translation());
  }
  const SimilarityTransform a = horn_sim3(x, y);
  const auto to_h = [](const Mat3& r, const Vec3& c) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = r;
    m.topRightCorner<3, 1>() = c;
    return m;
  };
  std::vector<Eigen::Matrix4d> p, g;
  TrajectoryOracle out;
  for (std::size_t k = 0; k < gt.size(); ++k) {
    const Vec3 c = a.apply(x[k]);
    out.ate += (c - y[k]).squaredNorm();
    p.push_back(to_h(a.rotation.toRotationMatrix() * pred[k].rotation().toRotationMatrix(), c));
    g.push_back(to_h(gt[k].rotation().toRotationMatrix(), y[k]));
  }
  out.ate = std::sqrt(out.ate / static_cast<double>(gt.size()));
  const std::size_t pairs = gt.size() - static_cast<std::size_t>(gap);
  for (std::size_t k = 0; k < pairs; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(gap);
    const Eigen::Matrix4d e = (g[k].inverse() * g[j]).inverse() * (p[k].inverse() * p[j]);
    out.rpe_t += e.topRightCorner<3, 1>().squaredNorm();
    const Mat3 r = e.topLeftCorner<3, 3>();
    const Vec3 w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    const double deg = std::atan2(0.5 * w.norm(), 0.5 * (r.trace() - 1.0)) * 180.0 / std::numbers::pi;
    out.rpe_r += deg * deg;
  }
  out.rpe_t = std::sqrt(out.rpe_t / static_cast<double>(pairs));
  out.rpe_r = std::sqrt(out.rpe_r / static_cast<double>(pairs));
  return out;
}

inline std::vector<CameraPose> noisy_trajectory(Rng& rng, int n, double noise) {
  std::vector<CameraPose> out;
  for (int k = 0; k < n; ++k) {
    CameraPose p = random_pose(rng);
    p.set_rotation(p.rotation() * rotation_by(rng, uniform(rng, 0.0, noise)));
    out.push_back(p);
  }
  return out;
}

}  // namespace jm::testing
