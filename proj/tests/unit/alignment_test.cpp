#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "jm/alignment.hpp"
#include "test_support.hpp"

using namespace jm;
using jm::testing::Rng;

namespace {

std::vector<Vec3> apply_all(const RigidTransform& x, const std::vector<Vec3>& pts) {
  std::vector<Vec3> out;
  for (const Vec3& p : pts) out.push_back(x.apply(p));
  return out;
}

double weighted_residual(const RigidTransform& x, const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                         const std::vector<double>& w) {
  double r = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) r += w[i] * (x.apply(src[i]) - dst[i]).squaredNorm();
  return r;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::kIo;
}

}  // namespace

TEST(WeightedProcrustes, IdentityWhenCloudsMatch) {
  Rng rng(1);
  const auto src = jm::testing::random_cloud(rng, 12, 2.0);
  std::vector<double> w(12);
  for (double& x : w) x = jm::testing::uniform(rng, 0.1, 3.0);
  const RigidTransform x = weighted_procrustes(src, src, w);
  EXPECT_LT(rotation_angle(x.rotation), 1e-12);
  EXPECT_LT(x.translation.norm(), 1e-12);
}

TEST(WeightedProcrustes, RecoversConstructedTransform) {
  Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    const RigidTransform truth{jm::testing::random_rotation(rng), jm::testing::random_vec(rng, 5.0)};
    const auto src = jm::testing::random_cloud(rng, 15, 1.0);
    const RigidTransform x = procrustes(src, apply_all(truth, src));
    EXPECT_LT(rotation_distance(x.rotation, truth.rotation), 1e-9);
    EXPECT_LT((x.translation - truth.translation).norm(), 1e-9);
  }
}

TEST(WeightedProcrustes, ZeroWeightOutlierIsIgnored) {
  Rng rng(3);
  const RigidTransform truth{jm::testing::random_rotation(rng), Vec3(1, 2, 3)};
  auto src = jm::testing::random_cloud(rng, 10, 1.0);
  auto dst = apply_all(truth, src);
  std::vector<double> w(10, 1.0);
  src.push_back(Vec3(0.1, 0.2, 0.3));
  dst.push_back(Vec3(100.0, -50.0, 7.0));
  w.push_back(0.0);
  const RigidTransform x = weighted_procrustes(src, dst, w);
  EXPECT_LT(rotation_distance(x.rotation, truth.rotation), 1e-9);
  EXPECT_LT((x.translation - truth.translation).norm(), 1e-9);
}

TEST(WeightedProcrustes, UniformWeightsMatchUnweightedBitForBit) {
  Rng rng(4);
  const auto src = jm::testing::random_cloud(rng, 9, 1.0);
  const auto dst = jm::testing::random_cloud(rng, 9, 1.0);
  const RigidTransform a = procrustes(src, dst);
  const RigidTransform b = weighted_procrustes(src, dst, std::vector<double>(9, 1.0));
  EXPECT_EQ(a.rotation.coeffs(), b.rotation.coeffs());
  EXPECT_EQ(a.translation, b.translation);
}

TEST(WeightedProcrustes, WeightScaleInvariance) {
  Rng rng(5);
  const auto src = jm::testing::random_cloud(rng, 9, 1.0);
  const auto dst = jm::testing::random_cloud(rng, 9, 1.0);
  std::vector<double> w(9), w7(9);
  for (std::size_t i = 0; i < 9; ++i) {
    w[i] = jm::testing::uniform(rng, 0.0, 1.0);
    w7[i] = 7.0 * w[i];
  }
  const RigidTransform a = weighted_procrustes(src, dst, w);
  const RigidTransform b = weighted_procrustes(src, dst, w7);
  EXPECT_LT(rotation_distance(a.rotation, b.rotation), 1e-12);
  EXPECT_LT((a.translation - b.translation).norm(), 1e-12);
}

TEST(WeightedProcrustes, ProperRotationOnReflectedInput) {
  Rng rng(6);
  const auto src = jm::testing::random_cloud(rng, 8, 1.0);
  std::vector<Vec3> dst;
  for (const Vec3& p : src) dst.emplace_back(-p.x(), p.y(), p.z());
  const RigidTransform x = procrustes(src, dst);
  EXPECT_NEAR(x.rotation_matrix().determinant(), 1.0, 1e-12);
}

TEST(WeightedProcrustes, IsLeastSquaresOptimal) {
  // Small random perturbations of the solution never lower the cost.
  Rng rng(7);
  const auto src = jm::testing::random_cloud(rng, 10, 1.0);
  const auto dst = jm::testing::random_cloud(rng, 10, 1.0);
  std::vector<double> w(10);
  for (double& x : w) x = jm::testing::uniform(rng, 0.1, 1.0);
  const RigidTransform best = weighted_procrustes(src, dst, w);
  const double cost = weighted_residual(best, src, dst, w);
  for (int k = 0; k < 200; ++k) {
    RigidTransform other = best;
    other.rotation = jm::testing::rotation_by(rng, 1e-3) * best.rotation;
    other.translation += jm::testing::random_vec(rng, 1e-3);
    EXPECT_GE(weighted_residual(other, src, dst, w), cost - 1e-12);
  }
}

TEST(WeightedProcrustes, DegenerateInputs) {
  const std::vector<Vec3> line{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  EXPECT_EQ(code_of([&] { (void)procrustes(line, line); }), ErrorCode::kDegenerateInput);
  const std::vector<Vec3> tri{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 5, 5}};
  // Only two points carry weight.
  EXPECT_EQ(code_of([&] { (void)weighted_procrustes(tri, tri, std::vector<double>{1, 1, 0, 0}); }),
            ErrorCode::kDegenerateInput);
  EXPECT_EQ(code_of([&] { (void)weighted_procrustes(tri, tri, std::vector<double>{1, 1}); }),
            ErrorCode::kShapeMismatch);
}

TEST(EffectiveRank, CountsSpannedDirections) {
  const std::vector<Vec3> line{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  const std::vector<Vec3> plane{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
  const std::vector<Vec3> solid{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  EXPECT_EQ(effective_rank(line, std::vector<double>(3, 1.0)), 1);
  EXPECT_EQ(effective_rank(plane, std::vector<double>(4, 1.0)), 2);
  EXPECT_EQ(effective_rank(solid, std::vector<double>(4, 1.0)), 3);
  EXPECT_EQ(effective_rank(solid, std::vector<double>{1, 0, 0, 0}), 0);
}

TEST(UmeyamaSim3, IdentityWhenCloudsMatch) {
  Rng rng(8);
  const auto src = jm::testing::random_cloud(rng, 10, 1.0);
  const SimilarityTransform s = umeyama_sim3(src, src);
  EXPECT_NEAR(s.scale, 1.0, 1e-12);
  EXPECT_LT(rotation_angle(s.rotation), 1e-12);
  EXPECT_LT(s.translation.norm(), 1e-12);
}

TEST(UmeyamaSim3, RecoversConstructedSimilarity) {
  Rng rng(9);
  const Quat r0 = jm::testing::random_rotation(rng);
  const Vec3 t0(0.5, -1.0, 2.0);
  const auto src = jm::testing::random_cloud(rng, 12, 1.0);
  std::vector<Vec3> dst;
  for (const Vec3& p : src) dst.push_back(2.5 * (r0 * p) + t0);
  const SimilarityTransform s = umeyama_sim3(src, dst);
  EXPECT_NEAR(s.scale, 2.5, 1e-9);
  EXPECT_LT(rotation_distance(s.rotation, r0), 1e-9);
  EXPECT_LT((s.translation - t0).norm(), 1e-9);
}

TEST(UmeyamaSim3, CoincidentPointsAreDegenerate) {
  const std::vector<Vec3> same(5, Vec3(1, 2, 3));
  EXPECT_EQ(code_of([&] { (void)umeyama_sim3(same, same); }), ErrorCode::kDegenerateInput);
}

TEST(UmeyamaSim3, ResidualNoWorseThanRigid) {
  Rng rng(10);
  for (int k = 0; k < 20; ++k) {
    const auto src = jm::testing::random_cloud(rng, 10, 1.0);
    const auto dst = jm::testing::random_cloud(rng, 10, 1.5);
    const SimilarityTransform s = umeyama_sim3(src, dst);
    const RigidTransform r = procrustes(src, dst);
    double rs = 0.0, rr = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      rs += (s.apply(src[i]) - dst[i]).squaredNorm();
      rr += (r.apply(src[i]) - dst[i]).squaredNorm();
    }
    EXPECT_LE(rs, rr + 1e-12);
  }
}

TEST(FitScaleShift, IdentityAndExactLinear) {
  const std::vector<double> pred{0.5, 1.0, 2.0, 4.0};
  const Mask all(4, 1);
  const ScaleShiftFit id = fit_scale_shift(pred, pred, all);
  EXPECT_NEAR(id.scale_shift.a, 1.0, 1e-12);
  EXPECT_NEAR(id.scale_shift.b, 0.0, 1e-12);
  std::vector<double> gt;
  for (double p : pred) gt.push_back(2.0 * p + 0.5);
  const ScaleShiftFit fit = fit_scale_shift(pred, gt, all);
  EXPECT_NEAR(fit.scale_shift.a, 2.0, 1e-12);
  EXPECT_NEAR(fit.scale_shift.b, 0.5, 1e-12);
  EXPECT_FALSE(fit.degenerate);
  EXPECT_EQ(fit.samples, 4u);
}

TEST(FitScaleShift, BeatsEveryGridCandidate) {
  Rng rng(11);
  std::normal_distribution<double> noise(0.0, 1e-3);
  std::vector<double> pred(200), gt(200);
  Mask mask(200, 1);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred[i] = jm::testing::uniform(rng, 0.2, 3.0);
    gt[i] = 1.7 * pred[i] - 0.3 + noise(rng);
    if (i % 7 == 0) {
      mask[i] = 0;
      gt[i] = 50.0;  // masked samples must not matter
    }
  }
  const ScaleShiftFit fit = fit_scale_shift(pred, gt, mask);
  const auto cost = [&](double a, double b) {
    double c = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (mask[i]) c += (a * pred[i] + b - gt[i]) * (a * pred[i] + b - gt[i]);
    return c;
  };
  const double a0 = fit.scale_shift.a, b0 = fit.scale_shift.b;
  const double best = cost(a0, b0);
  double grid_best = std::numeric_limits<double>::infinity();
  double ga = 0.0, gb = 0.0;
  for (int i = 0; i <= 200; ++i) {
    for (int j = 0; j <= 200; ++j) {
      const double a = a0 * (0.5 + i / 200.0);
      const double b = b0 + std::abs(b0) * (-0.5 + j / 200.0);
      const double c = cost(a, b);
      EXPECT_GE(c, best - 1e-12);
      if (c < grid_best) {
        grid_best = c;
        ga = a;
        gb = b;
      }
    }
  }
  // The grid minimizer sits within one grid step of the closed form.
  EXPECT_NEAR(ga, a0, a0 / 200.0 + 1e-12);
  EXPECT_NEAR(gb, b0, std::abs(b0) / 200.0 + 1e-12);
  EXPECT_NEAR(a0, 1.7, 1e-3);
}

TEST(FitScaleShift, DegenerateCases) {
  const std::vector<double> flat{1.0, 1.0, 1.0};
  const std::vector<double> gt{1.0, 2.0, 3.0};
  EXPECT_EQ(code_of([&] { (void)fit_scale_shift(flat, gt, Mask(3, 1)); }), ErrorCode::kDegenerateInput);
  // Anti-correlated data would need a negative scale.
  const std::vector<double> pred{1.0, 2.0, 3.0};
  const std::vector<double> inv{3.0, 2.0, 1.0};
  const ScaleShiftFit fit = fit_scale_shift(pred, inv, Mask(3, 1));
  EXPECT_TRUE(fit.degenerate);
  EXPECT_DOUBLE_EQ(fit.scale_shift.a, kMinFittedScale);
}

TEST(FuseWorldPoints, IdenticalPositionsStatic) {
  TrackArray<Vec3> world(4, 2, Vec3(1, 2, 3));
  for (int t = 0; t < 4; ++t) world(t, 1) = Vec3(-1, 0, 5);
  const FusedPoints f = fuse_world_points(world, TrackArray<double>(4, 2, 0.0), TrackArray<double>(4, 2, 1.0), 0.5);
  EXPECT_EQ(f.points[0], Vec3(1, 2, 3));
  EXPECT_EQ(f.points[1], Vec3(-1, 0, 5));
  EXPECT_EQ(f.is_static, Mask(2, 1));
  EXPECT_EQ(f.low_confidence, Mask(2, 0));
}

TEST(FuseWorldPoints, DynamicFlagged) {
  TrackArray<Vec3> world(3, 1, Vec3(1, 1, 1));
  const FusedPoints f = fuse_world_points(world, TrackArray<double>(3, 1, 1.0), TrackArray<double>(3, 1, 1.0), 0.5);
  EXPECT_EQ(f.is_static[0], 0);
  EXPECT_EQ(f.per_frame, world);
}

TEST(FuseWorldPoints, VisibilityWeightedMean) {
  TrackArray<Vec3> world(3, 1);
  world(0, 0) = Vec3(1, 0, 0);
  world(1, 0) = Vec3(5, 5, 5);
  world(2, 0) = Vec3(-3, 2, 1);
  TrackArray<double> vis(3, 1, 0.0);
  vis(0, 0) = 1.0;
  const FusedPoints first = fuse_world_points(world, TrackArray<double>(3, 1, 0.0), vis, 0.5);
  EXPECT_EQ(first.points[0], Vec3(1, 0, 0));

  vis(1, 0) = 3.0 / 4.0;
  vis(2, 0) = 1.0 / 4.0;
  const FusedPoints mix = fuse_world_points(world, TrackArray<double>(3, 1, 0.0), vis, 0.5);
  // (1*(1,0,0) + .75*(5,5,5) + .25*(-3,2,1)) / 2
  EXPECT_LT((mix.points[0] - Vec3(1.0 + 3.75 - 0.75, 3.75 + 0.5, 3.75 + 0.25) / 2.0).norm(), 1e-12);
}

TEST(FuseWorldPoints, NoVisibilityFallsBackToMean) {
  TrackArray<Vec3> world(2, 1);
  world(0, 0) = Vec3(0, 0, 0);
  world(1, 0) = Vec3(2, 4, 6);
  const FusedPoints f = fuse_world_points(world, TrackArray<double>(2, 1, 0.0), TrackArray<double>(2, 1, 0.0), 0.5);
  EXPECT_EQ(f.low_confidence[0], 1);
  EXPECT_LT((f.points[0] - Vec3(1, 2, 3)).norm(), 1e-15);
}
