#include <cmath>

#include <gtest/gtest.h>

#include "jm/geometry.hpp"
#include "jm/synth.hpp"
#include "test_support.hpp"

using namespace jm;
using jm::testing::Rng;

namespace {

double pose_gap(const CameraPose& a, const CameraPose& b) {
  return rotation_distance(a.rotation(), b.rotation()) + (a.translation() - b.translation()).norm();
}

}  // namespace

TEST(CameraPose, RotationIsRenormalized) {
  CameraPose pose(Quat(2.0, 0.0, 0.0, 0.0), Vec3::Zero());
  EXPECT_NEAR(pose.rotation().norm(), 1.0, 1e-12);
  pose.set_rotation(Quat(0.3, 0.4, 1.2, -0.7));
  EXPECT_NEAR(pose.rotation().norm(), 1.0, 1e-12);
}

TEST(CameraPose, RejectsNonPositiveFocal) {
  EXPECT_THROW(CameraPose(Quat::Identity(), Vec3::Zero(), 0.0), Error);
  CameraPose pose;
  EXPECT_THROW(pose.set_focal(-1.0), Error);
}

TEST(CameraPose, ComposeWithInverseIsIdentity) {
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    const CameraPose p = jm::testing::random_pose(rng);
    EXPECT_LT(pose_gap(compose(p, inverse(p)), CameraPose()), 1e-9);
    EXPECT_LT(pose_gap(compose(inverse(p), p), CameraPose()), 1e-9);
  }
}

TEST(CameraPose, CompositionIsAssociative) {
  Rng rng(4);
  for (int k = 0; k < 50; ++k) {
    const CameraPose a = jm::testing::random_pose(rng);
    const CameraPose b = jm::testing::random_pose(rng);
    const CameraPose c = jm::testing::random_pose(rng);
    EXPECT_LT(pose_gap(compose(compose(a, b), c), compose(a, compose(b, c))), 1e-9);
  }
}

TEST(CameraEncoding, RoundTrips) {
  Rng rng(5);
  for (int k = 0; k < 20; ++k) {
    const CameraPose p = jm::testing::random_pose(rng, jm::testing::uniform(rng, 0.5, 2.0));
    const CameraEncoding e = encode(p);
    const CameraPose q = decode(e);
    const CameraEncoding e2 = encode(q);
    for (std::size_t j = 0; j < e.size(); ++j) EXPECT_NEAR(e[j], e2[j], 1e-12);
    EXPECT_EQ(q.principal_point(), Vec2(0.5, 0.5));
  }
}

TEST(ApplyScaleShift, IdentityLeavesDepthUnchanged) {
  DepthMap d(4, 3, 1.0);
  d.at(1, 1) = 0.0;
  const ScaledDepth s = apply_scale_shift(d, {1.0, 0.0});
  EXPECT_EQ(s.depth, d);
  EXPECT_EQ(s.clamped, 0u);
}

TEST(ApplyScaleShift, ConstantAnalytic) {
  const ScaledDepth s = apply_scale_shift(DepthMap(3, 3, 2.0), {3.0, 0.5});
  for (double v : s.depth.values()) EXPECT_DOUBLE_EQ(v, 6.5);
}

TEST(ApplyScaleShift, MatchesElementwiseLoop) {
  Rng rng(6);
  DepthMap d(4, 4);
  for (double& v : d.values()) v = jm::testing::uniform(rng, 0.0, 1.0);
  d.at(0, 0) = 0.0;   // invalid stays invalid
  d.at(1, 0) = 0.02;  // 2 * 0.02 - 0.1 < 0 gets clamped
  const ScaledDepth s = apply_scale_shift(d, {2.0, -0.1});
  std::size_t clamped = 0;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      const double in = d.at(c, r);
      double want = 0.0;
      if (in > 0.0) {
        want = 2.0 * in - 0.1;
        if (want <= 0.0) {
          want = 0.0;
          ++clamped;
        }
      }
      EXPECT_DOUBLE_EQ(s.depth.at(c, r), want);
    }
  }
  EXPECT_EQ(s.clamped, clamped);
  EXPECT_GE(clamped, 1u);
}

TEST(Unproject, PrincipalPointIdentityPose) {
  DepthMap d(5, 5, 1.0);
  const Unprojection u = unproject(d, CameraPose());
  EXPECT_LT((u.camera.at(2, 2) - Vec3(0, 0, 1)).norm(), 1e-15);
  EXPECT_LT((u.world[2 * 5 + 2] - Vec3(0, 0, 1)).norm(), 1e-15);
}

TEST(Unproject, TranslationOffsetsWorld) {
  DepthMap d(6, 4, 2.0);
  const CameraPose pose(Quat::Identity(), Vec3(1, 0, 0));
  const Unprojection u = unproject(d, pose);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 6; ++c)
      EXPECT_LT((u.world[static_cast<std::size_t>(r * 6 + c)] - (u.camera.at(c, r) + Vec3(1, 0, 0))).norm(), 1e-15);
}

TEST(Unproject, MatchesInverseIntrinsicsOracle) {
  Rng rng(7);
  DepthMap d(8, 6);
  for (double& v : d.values()) v = jm::testing::uniform(rng, 0.5, 3.0);
  const CameraPose pose(jm::testing::random_rotation(rng), Vec3(0.1, 0.2, 0.3), 0.8, Vec2(0.45, 0.55));
  const Unprojection u = unproject(d, pose);
  Mat3 k;
  k << 0.8, 0, 0.45, 0, 0.8, 0.55, 0, 0, 1;
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 8; ++c) {
      const Vec2 uv((c + 0.5) / 8.0, (r + 0.5) / 6.0);
      const Vec3 want = d.at(c, r) * (k.inverse() * Vec3(uv.x(), uv.y(), 1.0));
      EXPECT_LT((u.camera.at(c, r) - want).norm(), 1e-12);
      EXPECT_LT((u.world[static_cast<std::size_t>(r * 8 + c)] - (pose.rotation() * want + pose.translation())).norm(),
                1e-12);
    }
  }
}

TEST(Unproject, PointMapProjectsToPixelCentres) {
  Rng rng(8);
  DepthMap d(10, 7);
  for (double& v : d.values()) v = jm::testing::uniform(rng, 0.5, 3.0);
  const CameraPose pose = jm::testing::random_pose(rng);
  const Unprojection u = unproject(d, pose);
  for (int r = 0; r < 7; ++r) {
    for (int c = 0; c < 10; ++c) {
      ASSERT_TRUE(u.camera.is_valid(c, r));
      const Projection p = project(u.world[static_cast<std::size_t>(r * 10 + c)], pose);
      EXPECT_LT((p.uv - pixel_center(c, r, 10, 7)).norm(), 1e-9);
    }
  }
}

TEST(Project, PrincipalPoint) {
  const Projection p = project(Vec3(0, 0, 1), CameraPose());
  EXPECT_LT((p.uv - Vec2(0.5, 0.5)).norm(), 1e-15);
  EXPECT_DOUBLE_EQ(p.depth, 1.0);
}

TEST(Project, BehindCameraThrows) {
  try {
    (void)project(Vec3(0, 0, -1), CameraPose());
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBehindCamera);
  }
  EXPECT_FALSE(try_project_camera(Vec3(0, 0, 0), Intrinsics{}).has_value());
}

TEST(Project, RoundTripRandomSamples) {
  Rng rng(9);
  for (int k = 0; k < 1000; ++k) {
    const CameraPose pose = jm::testing::random_pose(rng, jm::testing::uniform(rng, 0.5, 2.0));
    const Vec2 uv(jm::testing::uniform(rng, 0.0, 1.0), jm::testing::uniform(rng, 0.0, 1.0));
    const double z = jm::testing::uniform(rng, 0.1, 10.0);
    const Vec3 world = pose.to_world(unproject_point(uv, z, pose.intrinsics()));
    const Projection p = project(world, pose);
    EXPECT_LT((p.uv - uv).norm(), 1e-9);
    EXPECT_NEAR(p.depth, z, 1e-9 * z);
  }
}

TEST(PixelGrid, CentresAndContainment) {
  EXPECT_EQ(pixel_center(0, 0, 4, 2), Vec2(0.125, 0.25));
  const auto px = containing_pixel(Vec2(0.99, 0.51), 4, 2);
  EXPECT_EQ(px[0], 3);
  EXPECT_EQ(px[1], 1);
  const auto clamped = containing_pixel(Vec2(-0.2, 1.3), 4, 2);
  EXPECT_EQ(clamped[0], 0);
  EXPECT_EQ(clamped[1], 1);
  EXPECT_TRUE(inside_image(Vec2(0.0, 1.0)));
  EXPECT_FALSE(inside_image(Vec2(-1e-9, 0.5)));
}

TEST(EgoMotionTracks, IdentityPosesGiveConstantTracks) {
  std::vector<DepthMap> depths(4, DepthMap(8, 8, 2.0));
  const std::vector<CameraPose> poses(4);
  const std::vector<Vec2> queries{pixel_center(1, 2, 8, 8), pixel_center(6, 5, 8, 8)};
  const TrackArray<Vec3> tracks = ego_motion_tracks(queries, 0, depths, poses);
  for (int t = 1; t < 4; ++t)
    for (int i = 0; i < 2; ++i) EXPECT_EQ(tracks(t, i), tracks(0, i));
}

TEST(EgoMotionTracks, BackwardTranslationGrowsDepth) {
  const double s = 0.25;
  std::vector<DepthMap> depths(5, DepthMap(8, 8, 1.0));
  std::vector<CameraPose> poses;
  for (int t = 0; t < 5; ++t) poses.emplace_back(Quat::Identity(), Vec3(0, 0, -s * t));
  const std::vector<Vec2> queries{pixel_center(4, 4, 8, 8)};
  const TrackArray<Vec3> tracks = ego_motion_tracks(queries, 0, depths, poses);
  for (int t = 0; t < 5; ++t) EXPECT_NEAR(tracks(t, 0).z(), 1.0 + s * t, 1e-12);
}

TEST(EgoMotionTracks, InvalidQueryDepthThrows) {
  std::vector<DepthMap> depths(2, DepthMap(8, 8, 1.0));
  depths[1].at(3, 3) = 0.0;
  const std::vector<CameraPose> poses(2);
  const std::vector<Vec2> queries{pixel_center(3, 3, 8, 8)};
  try {
    (void)ego_motion_tracks(queries, 1, depths, poses);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidQuery);
  }
}

TEST(EgoMotionTracks, InvariantToGlobalRigidMotion) {
  Rng rng(10);
  std::vector<DepthMap> depths(3, DepthMap(8, 8));
  for (auto& d : depths)
    for (double& v : d.values()) v = jm::testing::uniform(rng, 1.0, 2.0);
  std::vector<CameraPose> poses;
  for (int t = 0; t < 3; ++t) poses.push_back(jm::testing::random_pose(rng));
  const RigidTransform g{jm::testing::random_rotation(rng), Vec3(0.3, -2.0, 1.0)};
  std::vector<CameraPose> moved;
  for (const auto& p : poses) moved.push_back(transform_pose(g, p));
  const std::vector<Vec2> queries{pixel_center(2, 3, 8, 8), pixel_center(7, 0, 8, 8)};
  const auto a = ego_motion_tracks(queries, 1, depths, poses);
  const auto b = ego_motion_tracks(queries, 1, depths, moved);
  for (int t = 0; t < 3; ++t)
    for (int i = 0; i < 2; ++i) EXPECT_LT((a(t, i) - b(t, i)).norm(), 1e-12);
}

TEST(EgoMotionTracks, MatchesSyntheticStaticTracks) {
  SceneSpec spec;
  spec.seed = 11;
  spec.num_frames = 5;
  spec.num_static_points = 40;
  const SceneGroundTruth gt = generate(spec);
  const TrackArray<Vec3> tracks = ego_motion_tracks(gt.queries, 0, gt.depths, gt.poses);
  for (int t = 0; t < gt.frames(); ++t)
    for (int i = 0; i < gt.tracks(); ++i)
      EXPECT_LT((tracks(t, i) - gt.tracks3d_camera(t, i)).norm(), 1e-9) << "t=" << t << " i=" << i;
}
