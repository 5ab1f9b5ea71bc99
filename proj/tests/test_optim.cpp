#include <gtest/gtest.h>

#include <sstream>

#include "fixtures.hpp"
#include "shapesel/shapesel.hpp"

using namespace shapesel;

namespace {

Scene perturbed(const Scene& gt, std::uint64_t seed) {
  Scene init = gt;
  for (std::size_t i = 0; i < init.objects.size(); ++i)
    init.objects[i].pose = perturb_pose(gt.objects[i].pose, 10, 0.1, 0.1, mix_seed(seed, i));
  return init;
}

/// Two exemplars pushed into each other along x.
Scene overlapping_pair(const ShapeDatabase& db) {
  Scene s;
  s.objects.push_back({db.class_names[db.entry(0).class_id], 0, Pose9DoF{Rotation{}, Vec3(-0.3, 0, 0.5), Vec3::Ones()}, {}});
  s.objects.push_back({db.class_names[db.entry(3).class_id], 3, Pose9DoF{Rotation{}, Vec3(0.3, 0.05, 0.5), Vec3::Ones()}, {}});
  return s;
}

}  // namespace

TEST(FitPoses, GroundTruthInitConvergesImmediately) {
  const ShapeDatabase& db = fixtures::toy_database();
  const Scene gt = generate_scene(db, 2, 1);
  const OptimResult r = fit_poses(gt, db, world_targets(gt, db), OptimConfig{});
  EXPECT_TRUE(r.converged);
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_LE(r.trace[0].total, 1e-12);
}

TEST(FitPoses, RecoversPerturbedPose) {
  const ShapeDatabase& db = fixtures::toy_database();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Scene gt = generate_scene(db, 1, seed);
    const OptimResult r = fit_poses(perturbed(gt, seed), db, world_targets(gt, db), OptimConfig{});
    const Pose9DoF& a = r.scene.objects[0].pose;
    const Pose9DoF& b = gt.objects[0].pose;
    EXPECT_LT(geodesic_distance(a.r, b.r), 1e-3);
    EXPECT_LT((a.t - b.t).norm(), 1e-3);
    EXPECT_LT((a.s - b.s).cwiseAbs().maxCoeff(), 1e-3);
  }
}

TEST(FitPoses, TraceIsMonotoneAndEndsAtReturnedObjective) {
  const ShapeDatabase& db = fixtures::toy_database();
  const Scene gt = generate_scene(db, 3, 12);
  const auto targets = world_targets(gt, db);
  const OptimResult r = fit_poses(perturbed(gt, 5), db, targets, OptimConfig{});
  double lowest = r.trace[0].total;
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    EXPECT_TRUE(std::isfinite(r.trace[i].total));
    EXPECT_EQ(r.trace[i].iteration, static_cast<int>(i));
    if (i > 10) EXPECT_LE(r.trace[i].total, r.trace[i - 1].total + 1e-9);
    lowest = std::min(lowest, r.trace[i].total);
  }
  double objective = 0.0;
  for (std::size_t i = 0; i < gt.objects.size(); ++i) {
    const auto& cloud = db.entry(r.scene.objects[i].exemplar).points;
    const auto loss = correspondence_loss_with_gradient(PoseParams::from_pose(r.scene.objects[i].pose), cloud, targets[i].points);
    objective += loss.loss;
  }
  EXPECT_NEAR(objective, lowest, 1e-12);
}

TEST(FitPoses, DeterministicTraces) {
  const ShapeDatabase& db = fixtures::toy_database();
  const Scene gt = generate_scene(db, 2, 3);
  OptimConfig cfg;
  cfg.iterations = 100;
  std::ostringstream a, b;
  write_trace_csv(a, fit_poses(perturbed(gt, 1), db, world_targets(gt, db), cfg).trace);
  write_trace_csv(b, fit_poses(perturbed(gt, 1), db, world_targets(gt, db), cfg).trace);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')), "iteration,rt,coll,anchor,total");
}

TEST(FitPoses, FreezeKeepsGroupsFixed) {
  const ShapeDatabase& db = fixtures::toy_database();
  const Scene gt = generate_scene(db, 1, 4);
  const Scene init = perturbed(gt, 2);
  OptimConfig cfg;
  cfg.iterations = 50;
  cfg.freeze_rotation = cfg.freeze_scale = true;
  const OptimResult r = fit_poses(init, db, world_targets(gt, db), cfg);
  EXPECT_LT((r.scene.objects[0].pose.r.matrix() - init.objects[0].pose.r.matrix()).norm(), 1e-12);
  EXPECT_EQ(r.scene.objects[0].pose.s, init.objects[0].pose.s);
  EXPECT_NE(r.scene.objects[0].pose.t, init.objects[0].pose.t);
}

TEST(FitPoses, Errors) {
  const ShapeDatabase& db = fixtures::toy_database();
  const Scene gt = generate_scene(db, 1, 4);
  OptimConfig cfg;
  cfg.lr = 0;
  EXPECT_THROW(fit_poses(gt, db, world_targets(gt, db), cfg), InvalidArgument);
  EXPECT_THROW(fit_poses(gt, db, {}, OptimConfig{}), MismatchedLengths);
  cfg.lr = 1e300;
  EXPECT_THROW(fit_poses(perturbed(gt, 1), db, world_targets(gt, db), cfg), NonFinite);
}

TEST(Resolve, CollisionFreeSceneUnchanged) {
  const ShapeDatabase& db = fixtures::toy_database();
  const Scene s = generate_scene(db, 3, 9);
  OptimConfig cfg;
  cfg.warmup = 0;
  const OptimResult r = resolve_collisions(s, db, cfg);
  EXPECT_EQ(scene_to_json(r.scene).dump(), scene_to_json(s).dump());
}

TEST(Resolve, InfiniteWarmupLeavesSceneUnchanged) {
  const ShapeDatabase& db = fixtures::toy_database();
  const Scene s = overlapping_pair(db);
  OptimConfig cfg;
  cfg.warmup = std::numeric_limits<long long>::max();
  cfg.freeze_rotation = cfg.freeze_scale = true;
  const OptimResult r = resolve_collisions(s, db, cfg);
  EXPECT_EQ(scene_to_json(r.scene).dump(), scene_to_json(s).dump());
}

TEST(Resolve, SeparatesOverlappingPair) {
  const ShapeDatabase& db = fixtures::toy_database();
  const Scene s = overlapping_pair(db);
  OptimConfig cfg;
  cfg.warmup = 0;
  cfg.iterations = 300;
  cfg.freeze_rotation = cfg.freeze_scale = true;
  const CollisionReport before = miv_and_collisions(s, db);
  ASSERT_GT(before.count, 0);
  const OptimResult r = resolve_collisions(s, db, cfg);
  const CollisionReport after = miv_and_collisions(r.scene, db);
  EXPECT_LT(after.miv, 0.1 * before.miv);
  EXPECT_LE(after.count, before.count);
  EXPECT_LT(r.trace.back().coll, r.trace.front().coll);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(r.scene.objects[i].pose.r.matrix(), s.objects[i].pose.r.matrix());
    EXPECT_EQ(r.scene.objects[i].pose.s, s.objects[i].pose.s);
  }
}

TEST(Resolve, WarmupPrefixMatchesRunWithoutCollisionTerm) {
  const ShapeDatabase& db = fixtures::toy_database();
  const Scene gt = overlapping_pair(db);
  SceneProblem problem;
  std::vector<PoseParams> x;
  const auto objs = collision_objects(gt, db);
  for (std::size_t i = 0; i < objs.size(); ++i) {
    problem.clouds.push_back(db.entry(gt.objects[i].exemplar).points);
    std::vector<Vec3> targets;
    for (const Vec3& p : problem.clouds.back().points) targets.push_back(apply_pose(gt.objects[i].pose, p) + Vec3(0.05, 0, 0));
    problem.targets.push_back(targets);
    problem.shapes.push_back(objs[i].shape);
    x.push_back(PoseParams::from_pose(gt.objects[i].pose));
  }
  OptimConfig with, without;
  with.iterations = without.iterations = 30;
  with.warmup = 20;
  without.weights.coll = 0.0;
  const auto a = minimize(problem, x, with).second;
  const auto b = minimize(problem, x, without).second;
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(a[i].total, b[i].total);
    EXPECT_EQ(a[i].rt, b[i].rt);
  }
}
