#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "jm/metrics.hpp"
#include "jm/updater.hpp"
#include "test_support.hpp"

using namespace jm;
using jm::testing::loop_scene;
using jm::testing::perturbed_inputs;
using jm::testing::pipeline_inputs;

namespace {

std::vector<DepthMap> metric_depths(const SceneGroundTruth& gt) {
  std::vector<DepthMap> out;
  for (const DepthMap& d : gt.depths_normalized) out.push_back(apply_scale_shift(d, gt.scale_shift).depth);
  return out;
}

double max_pose_gap(const std::vector<CameraPose>& a, const std::vector<CameraPose>& b) {
  double worst = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    worst = std::max(worst, (a[t].translation() - b[t].translation()).norm());
    worst = std::max(worst, rotation_distance(a[t].rotation(), b[t].rotation()));
  }
  return worst;
}

}  // namespace

TEST(ApplyLogitDelta, ZeroDeltaIsExact) {
  for (double p : {0.0, 1e-9, 0.3, 0.5, 1.0}) EXPECT_EQ(apply_logit_delta(p, 0.0), p);
}

TEST(ApplyLogitDelta, MatchesSigmoidOracle) {
  EXPECT_NEAR(apply_logit_delta(0.5, std::log(3.0)), 0.75, 1e-15);
  EXPECT_NEAR(apply_logit_delta(0.2, -1.0), 1.0 / (1.0 + 4.0 * std::exp(1.0)), 1e-15);
}

TEST(ApplyLogitDelta, SaturatedInputsAreClampedFirst) {
  const double lo = 1e-6;
  EXPECT_NEAR(apply_logit_delta(0.0, 1.0), 1.0 / (1.0 + (1.0 - lo) / lo * std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(apply_logit_delta(1.0, -1.0), 1.0 / (1.0 + lo / (1.0 - lo) * std::exp(1.0)), 1e-12);
}

TEST(InitState, StartsOnEgoMotionTracks) {
  const SceneGroundTruth gt = generate(loop_scene(21));
  const auto depths = metric_depths(gt);
  const TrackState s = init_state(gt.queries, 0, depths, gt.poses);
  const TrackArray<Vec3> ego = ego_motion_tracks(gt.queries, 0, depths, gt.poses);
  EXPECT_EQ(s.tracks3d, ego);
  for (int i = 0; i < s.tracks(); ++i) {
    EXPECT_EQ(s.tracks2d(0, i), gt.queries[static_cast<std::size_t>(i)]);
    EXPECT_EQ(s.p_vis(0, i), 1.0);
    for (int t = 0; t < s.frames(); ++t) {
      EXPECT_EQ(s.p_dyn(t, i), 0.5);
      EXPECT_LT((s.anchors(t, i) - ego(t, i)).norm(), 1e-9);
    }
  }
  // Static scene under true poses: ego tracks are the ground truth.
  for (int t = 1; t < s.frames(); ++t)
    for (int i = 0; i < s.tracks(); ++i)
      if (gt.gt_vis(t, i)) EXPECT_LT((s.tracks2d(t, i) - gt.tracks2d(t, i)).norm(), 1e-9);
}

TEST(InitState, FusedWorldPointsAreTheLiftedQueries) {
  const SceneGroundTruth gt = generate(loop_scene(22));
  const auto depths = metric_depths(gt);
  const TrackState s = init_state(gt.queries, 0, depths, gt.poses);
  for (int i = 0; i < s.tracks(); ++i)
    EXPECT_LT((s.world_points[static_cast<std::size_t>(i)] - gt.tracks3d_world(0, i)).norm(), 1e-9);
}

TEST(JointMotionStep, ZeroUpdaterIsAFixedPoint) {
  const SceneGroundTruth gt = generate(loop_scene(23));
  const auto depths = metric_depths(gt);
  const auto pyramids = build_frame_pyramids(depths, gt.poses, gt.images);
  TrackState s = init_state(gt.queries, 0, depths, gt.poses);
  const TrackState s0 = s;
  const ZeroUpdater zero;
  for (int k = 0; k < 5; ++k) {
    s = joint_motion_step(s, zero, pyramids, LoopConfig{}).state;
    EXPECT_EQ(s.iteration, k + 1);
    EXPECT_LT(max_pose_gap(s.poses, s0.poses), 1e-9);
    for (std::size_t j = 0; j < s.tracks2d.data().size(); ++j) {
      EXPECT_LT((s.tracks2d.data()[j] - s0.tracks2d.data()[j]).norm(), 1e-9);
      EXPECT_LT((s.tracks3d.data()[j] - s0.tracks3d.data()[j]).norm(), 1e-9);
      EXPECT_EQ(s.p_dyn.data()[j], s0.p_dyn.data()[j]);
    }
  }
}

TEST(JointMotionStep, QueriesStayPinnedAndProbabilitiesBounded) {
  const SceneGroundTruth gt = generate(loop_scene(24, 1));
  const PipelineInputs in = perturbed_inputs(gt, 2.0, 0.02);
  const auto depths = metric_depths(gt);
  const auto pyramids = build_frame_pyramids(depths, in.poses, in.images);
  TrackState s = init_state(in.queries, 0, depths, in.poses);
  const CorrelationMatchingUpdater updater;
  for (int k = 0; k < 3; ++k) {
    const StepResult r = joint_motion_step(s, updater, pyramids, LoopConfig{});
    s = r.state;
    EXPECT_TRUE(r.log.rmse_defined);
    EXPECT_TRUE(std::isfinite(r.log.rmse));
    for (int i = 0; i < s.tracks(); ++i) {
      EXPECT_EQ(s.tracks2d(0, i), gt.queries[static_cast<std::size_t>(i)]);
      EXPECT_EQ(s.p_vis(0, i), 1.0);
    }
    for (double p : s.p_dyn.data()) EXPECT_TRUE(p >= 0.0 && p <= 1.0);
    for (double p : s.p_vis.data()) EXPECT_TRUE(p >= 0.0 && p <= 1.0);
  }
}

TEST(JointMotionStep, RejectsMismatchedPyramids) {
  const SceneGroundTruth gt = generate(loop_scene(25));
  const auto depths = metric_depths(gt);
  auto pyramids = build_frame_pyramids(depths, gt.poses, gt.images);
  const TrackState s = init_state(gt.queries, 0, depths, gt.poses);
  pyramids.pop_back();
  try {
    (void)joint_motion_step(s, ZeroUpdater{}, pyramids, LoopConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(LoopConfig, Validation) {
  LoopConfig c;
  c.num_iterations = -1;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.dyn_threshold = 1.5;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_NO_THROW(LoopConfig{}.validate());
}

TEST(RunPipeline, ZeroIterationsReturnsInitialState) {
  const SceneGroundTruth gt = generate(loop_scene(26));
  LoopConfig cfg;
  cfg.num_iterations = 0;
  const PipelineResult r = run_pipeline(pipeline_inputs(gt, gt.poses), cfg, CorrelationMatchingUpdater{});
  EXPECT_EQ(r.best_iteration, 0);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(r.state.tracks3d, ego_motion_tracks(gt.queries, 0, metric_depths(gt), gt.poses));
}

TEST(RunPipeline, StaticWorldTracksStayNearlyPutWithTruePoses) {
  // Sub-pixel matching noise moves a few tracks near depth edges, so this
  // bounds the typical track rather than the worst one.
  const SceneGroundTruth gt = generate(loop_scene(27, 1));
  LoopConfig cfg;
  cfg.num_iterations = 3;
  const PipelineResult r = run_pipeline(pipeline_inputs(gt, gt.poses), cfg, CorrelationMatchingUpdater{});
  std::vector<double> spread;
  for (int i = 0; i < r.state.tracks(); ++i) {
    if (gt.gt_dynamic[static_cast<std::size_t>(i)]) continue;
    Vec3 mean = Vec3::Zero();
    for (int t = 0; t < r.state.frames(); ++t) mean += r.world_tracks(t, i);
    mean /= r.state.frames();
    double var = 0.0;
    for (int t = 0; t < r.state.frames(); ++t) var += (r.world_tracks(t, i) - mean).squaredNorm();
    spread.push_back(std::sqrt(var / r.state.frames()) / gt.scene_scale);
  }
  ASSERT_FALSE(spread.empty());
  std::sort(spread.begin(), spread.end());
  EXPECT_LT(spread[spread.size() / 2], 1e-3);
  EXPECT_LT(spread[spread.size() * 9 / 10], 5e-3);
}

TEST(RunPipeline, RecoversPerturbedPoses) {
  const SceneGroundTruth gt = generate(loop_scene(2));
  const PipelineInputs in = perturbed_inputs(gt, 3.0, 0.03);
  const PipelineResult r = run_pipeline(in, LoopConfig{}, CorrelationMatchingUpdater{});
  const double before = trajectory_metrics(in.poses, gt.poses).ate;
  const double after = trajectory_metrics(r.state.poses, gt.poses).ate;
  EXPECT_GE(before / after, 10.0) << before << " -> " << after;
}

TEST(RunPipeline, DynamicTracksScoreHigher) {
  const SceneGroundTruth gt = generate(loop_scene(28, 1));
  const PipelineResult r = run_pipeline(perturbed_inputs(gt, 1.0, 0.01), LoopConfig{}, CorrelationMatchingUpdater{});
  double dyn = 0.0, stat = 0.0;
  int nd = 0, ns = 0;
  for (int i = 0; i < r.state.tracks(); ++i) {
    double m = 0.0;
    for (int t = 0; t < r.state.frames(); ++t) m += r.state.p_dyn(t, i);
    m /= r.state.frames();
    if (gt.gt_dynamic[static_cast<std::size_t>(i)]) {
      dyn += m;
      ++nd;
    } else {
      stat += m;
      ++ns;
    }
  }
  ASSERT_GT(nd, 0);
  EXPECT_GT(dyn / nd - stat / ns, 0.3);
}

TEST(RunPipeline, DynamicWorldTracksFollowTheObject) {
  const SceneGroundTruth gt = generate(loop_scene(28, 1));
  const PipelineResult r = run_pipeline(pipeline_inputs(gt, gt.poses), LoopConfig{}, CorrelationMatchingUpdater{});
  std::vector<double> rel;
  for (int i = 0; i < r.state.tracks(); ++i) {
    if (!gt.gt_dynamic[static_cast<std::size_t>(i)]) continue;
    double moved = 0.0, err = 0.0;
    for (int t = 0; t < r.state.frames(); ++t) {
      moved = std::max(moved, (gt.tracks3d_world(t, i) - gt.tracks3d_world(0, i)).norm());
      err = std::max(err, (r.world_tracks(t, i) - gt.tracks3d_world(t, i)).norm());
    }
    rel.push_back(err / moved);
  }
  ASSERT_FALSE(rel.empty());
  std::sort(rel.begin(), rel.end());
  // a track left where the static assumption puts it scores about 1
  EXPECT_LT(rel[rel.size() / 2], 0.15);
}

TEST(RunPipeline, Deterministic) {
  const SceneGroundTruth gt = generate(loop_scene(29, 1));
  LoopConfig cfg;
  cfg.num_iterations = 3;
  const PipelineInputs in = perturbed_inputs(gt, 2.0, 0.02);
  const PipelineResult a = run_pipeline(in, cfg, CorrelationMatchingUpdater{});
  const PipelineResult b = run_pipeline(in, cfg, CorrelationMatchingUpdater{});
  EXPECT_EQ(a.state.tracks2d, b.state.tracks2d);
  EXPECT_EQ(a.state.tracks3d, b.state.tracks3d);
  EXPECT_EQ(a.state.p_dyn, b.state.p_dyn);
  EXPECT_EQ(a.world_tracks, b.world_tracks);
  for (std::size_t t = 0; t < a.state.poses.size(); ++t) EXPECT_EQ(encode(a.state.poses[t]), encode(b.state.poses[t]));
}

TEST(RunPipeline, BestIterationHasLowestRmse) {
  const SceneGroundTruth gt = generate(loop_scene(30));
  const PipelineResult r = run_pipeline(perturbed_inputs(gt, 2.0, 0.02), LoopConfig{}, CorrelationMatchingUpdater{});
  ASSERT_EQ(r.log.size(), 8u);
  double best = r.log.front().rmse;
  for (const IterationLog& l : r.log) best = std::min(best, l.rmse);
  EXPECT_EQ(r.log[static_cast<std::size_t>(r.best_iteration - 1)].rmse, best);
}

TEST(RunPipeline, RejectsBadInputs) {
  const SceneGroundTruth gt = generate(loop_scene(31));
  PipelineInputs in = pipeline_inputs(gt, gt.poses);
  in.depths.pop_back();
  EXPECT_THROW((void)run_pipeline(in, LoopConfig{}, ZeroUpdater{}), Error);
  in = pipeline_inputs(gt, gt.poses);
  in.scale_shift.a = 0.0;
  EXPECT_THROW((void)run_pipeline(in, LoopConfig{}, ZeroUpdater{}), Error);
}
