#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "oracles.hpp"
#include "purse.hpp"

using namespace cfp;
using namespace cfp::geom3d;
using namespace cfp::purse;

namespace {

const CameraIntrinsics kCam(400.0, 410.0, 48.0, 48.0);

// Ball prediction set of the given pixel radius around the projections of the
// model under `pose`.
conformal::PredictionSet sets_around_pose(const Pose& pose,
                                          const ObjectModel& model,
                                          double radius_px) {
  conformal::PredictionSet pred;
  pred.epsilon = 0.1;
  pred.quantile = 1.0;
  for (const Vec3& y : model.keypoints3d) {
    conformal::PredictionSet::Entry e;
    e.mu = project(pose, kCam, y);
    e.lambda = conformal::Mat2::Identity() / (radius_px * radius_px);
    pred.entries.push_back(e);
  }
  return pred;
}

// Keypoint-side membership oracle used for the equivalence property.
bool keypoint_membership(const conformal::PredictionSet& pred,
                         const ObjectModel& model, const Pose& pose,
                         double trans_bound) {
  if (pose.t.norm() > trans_bound) return false;
  for (size_t k = 0; k < model.keypoint_count(); ++k) {
    if (projected_depth(pose, kCam, model.keypoints3d[k]) < kDepthMin) return false;
    if (!pred.contains(k, project(pose, kCam, model.keypoints3d[k]))) return false;
  }
  return true;
}

Pose perturb(const Pose& pose, double rot_rad, double trans_m, CounterRng& rng) {
  const Vec3 axis = Vec3(rng.next_normal(), rng.next_normal(), rng.next_normal())
                        .normalized();
  Pose out;
  out.rot = Rotation3(Rotation3::from_axis_angle(axis, rot_rad).matrix() *
                      pose.rot.matrix());
  out.t = pose.t + trans_m * Vec3(rng.next_normal(), rng.next_normal(),
                                  rng.next_normal())
                                 .normalized();
  return out;
}

}  // namespace

TEST_CASE("keypoint membership and purse membership are the same boolean") {
  CounterRng rng(101);
  const ObjectModel model = oracle::test_box_model();
  int inside = 0, outside = 0;
  for (int scene = 0; scene < 10; ++scene) {
    const Pose gt = oracle::random_object_pose(rng);
    const conformal::PredictionSet pred = sets_around_pose(gt, model, 4.0);
    const Purse purse = build_purse(pred, kCam, model, 5.0);

    for (int probe = 0; probe < 50; ++probe) {
      // spread perturbation scales so both members and non-members appear
      const double rot = 0.03 * std::pow(10.0, 2.0 * rng.next_double() - 1.5);
      const double trans = 0.02 * std::pow(10.0, 2.0 * rng.next_double() - 1.5);
      const Pose probe_pose = perturb(gt, rot, trans, rng);
      const bool kp = keypoint_membership(pred, model, probe_pose, 5.0);
      const bool pu = purse_contains(purse, probe_pose);
      CHECK(kp == pu);
      (kp ? inside : outside) += 1;
    }
  }
  CHECK(inside > 20);
  CHECK(outside > 20);
}

TEST_CASE("tiny regions admit only poses projecting onto the centers") {
  CounterRng rng(102);
  const ObjectModel model = oracle::test_box_model();
  const Pose gt = oracle::random_object_pose(rng);

  conformal::PredictionSet pred = sets_around_pose(gt, model, 1.0);
  for (auto& e : pred.entries) e.lambda = 1e8 * conformal::Mat2::Identity();

  const Purse purse = build_purse(pred, kCam, model, 5.0);
  CHECK(purse_contains(purse, gt));
  CHECK(!purse_contains(purse, perturb(gt, 1e-2, 0.0, rng)));
  CHECK(!purse_contains(purse, perturb(gt, 0.0, 1e-2, rng)));
}

TEST_CASE("b_k recovers the projected keypoint depth") {
  CounterRng rng(103);
  const ObjectModel model = oracle::test_box_model();
  const Pose gt = oracle::random_object_pose(rng);
  const conformal::PredictionSet pred = sets_around_pose(gt, model, 3.0);
  const Purse purse = build_purse(pred, kCam, model, 5.0);
  const Vec12 s = pose_to_vector(gt);
  for (size_t k = 0; k < model.keypoint_count(); ++k) {
    const double depth = projected_depth(gt, kCam, model.keypoints3d[k]);
    CHECK(purse.b[k].dot(s) == doctest::Approx(depth).epsilon(1e-10));
  }
}

TEST_CASE("purse matrices are symmetric and membership enforces the side constraints") {
  CounterRng rng(104);
  const ObjectModel model = oracle::test_box_model();
  const Pose gt = oracle::random_object_pose(rng);
  const conformal::PredictionSet pred = sets_around_pose(gt, model, 3.0);
  const Purse purse = build_purse(pred, kCam, model, 5.0);

  for (const Mat12& a : purse.a)
    CHECK((a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-12);

  Pose far = gt;
  far.t = Vec3(0.0, 0.0, 10.0);
  CHECK(!purse_contains(purse, far));  // outside the translation ball

  Pose behind = gt;
  behind.t = Vec3(0.0, 0.0, -2.0);
  CHECK(!purse_contains(purse, behind));  // negative depth
}

TEST_CASE("build_purse validates inputs") {
  const ObjectModel model = oracle::test_box_model();
  conformal::PredictionSet pred;
  pred.quantile = 1.0;
  pred.entries.resize(3, {Vec2::Zero(), conformal::Mat2::Identity()});
  CHECK_THROWS_AS((void)build_purse(pred, kCam, model, 5.0), Error);

  conformal::PredictionSet degenerate;
  degenerate.quantile = 0.0;
  degenerate.entries.resize(model.keypoint_count(),
                            {Vec2::Zero(), conformal::Mat2::Identity()});
  CHECK_THROWS_AS((void)build_purse(degenerate, kCam, model, 5.0), Error);
}

TEST_CASE("sample_in_region: membership always, moments match, axis ratio") {
  CounterRng rng(105);
  const Vec2 mu(3.0, -2.0);

  conformal::Mat2 aniso;
  aniso << 4.0, 0.0, 0.0, 1.0;
  for (int i = 0; i < 100000; ++i) {
    const Vec2 y = sample_in_region(mu, aniso, rng);
    CHECK((y - mu).dot(aniso * (y - mu)) <= 1.0);
  }

  Vec2 mean = Vec2::Zero();
  std::vector<Vec2> draws;
  for (int i = 0; i < 10000; ++i) {
    const Vec2 y = sample_in_region(mu, conformal::Mat2::Identity(), rng);
    draws.push_back(y);
    mean += y;
  }
  mean /= 10000.0;
  // per-coordinate std of the unit disk is 1/2; 3 sigma of the mean over 1e4
  CHECK(std::abs(mean(0) - mu(0)) < 0.015);
  CHECK(std::abs(mean(1) - mu(1)) < 0.015);

  Vec2 sx = Vec2::Zero();
  draws.clear();
  for (int i = 0; i < 20000; ++i) {
    const Vec2 y = sample_in_region(Vec2::Zero(), aniso, rng);
    sx += y.cwiseProduct(y);
  }
  const double ratio = std::sqrt(sx(1) / sx(0));  // semi-axes 1/2 and 1
  CHECK(ratio == doctest::Approx(2.0).epsilon(0.05));

  conformal::Mat2 indef;
  indef << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS((void)sample_in_region(mu, indef, rng), Error);
}

TEST_CASE("ransag on tight sets accepts many samples near the groundtruth") {
  CounterRng rng(106);
  const ObjectModel model = oracle::test_box_model();
  const Pose gt = oracle::random_object_pose(rng);
  const conformal::PredictionSet pred = sets_around_pose(gt, model, 2.0);
  const Purse purse = build_purse(pred, kCam, model, 5.0);

  const RansagResult res = ransag(purse, pred, model, kCam, 1000, 42);
  CHECK(!res.fallback_used);
  CHECK(res.samples.size() >= 50);
  for (const Pose& s : res.samples) CHECK(purse_contains(purse, s));
  CHECK(res.average.rot.geodesic_angle_to(gt.rot) < 2.0 * M_PI / 180.0);
  CHECK(res.trials == 1000);
}

TEST_CASE("ransag falls back to floor(T/20) full-keypoint solves on an empty purse") {
  CounterRng rng(107);
  const ObjectModel model = oracle::test_box_model();
  const Pose gt = oracle::random_object_pose(rng);
  conformal::PredictionSet pred = sets_around_pose(gt, model, 0.05);
  std::swap(pred.entries[0].mu, pred.entries[5].mu);  // geometrically impossible

  const Purse purse = build_purse(pred, kCam, model, 5.0);
  CHECK(!purse_contains(purse, gt));

  const RansagResult res = ransag(purse, pred, model, kCam, 1000, 7);
  CHECK(res.fallback_used);
  CHECK(res.samples.size() == 50);
}

TEST_CASE("ransag is bit-identical for a fixed seed") {
  CounterRng rng(108);
  const ObjectModel model = oracle::test_box_model();
  const Pose gt = oracle::random_object_pose(rng);
  const conformal::PredictionSet pred = sets_around_pose(gt, model, 2.5);
  const Purse purse = build_purse(pred, kCam, model, 5.0);

  const RansagResult a = ransag(purse, pred, model, kCam, 300, 99);
  const RansagResult b = ransag(purse, pred, model, kCam, 300, 99);
  REQUIRE(a.samples.size() == b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(std::memcmp(a.samples[i].rot.matrix().data(),
                      b.samples[i].rot.matrix().data(), 9 * sizeof(double)) == 0);
    CHECK(std::memcmp(a.samples[i].t.data(), b.samples[i].t.data(),
                      3 * sizeof(double)) == 0);
  }
  CHECK(std::memcmp(a.average.rot.matrix().data(), b.average.rot.matrix().data(),
                    9 * sizeof(double)) == 0);

  const RansagResult c = ransag(purse, pred, model, kCam, 300, 100);
  CHECK(std::memcmp(a.average.t.data(), c.average.t.data(), 3 * sizeof(double)) != 0);
}

TEST_CASE("shrinking every region never grows the purse") {
  CounterRng rng(109);
  const ObjectModel model = oracle::test_box_model();
  const Pose gt = oracle::random_object_pose(rng);
  const conformal::PredictionSet wide = sets_around_pose(gt, model, 5.0);
  conformal::PredictionSet narrow = wide;
  for (auto& e : narrow.entries) e.lambda *= 4.0;  // half the radius

  const Purse purse_wide = build_purse(wide, kCam, model, 5.0);
  const Purse purse_narrow = build_purse(narrow, kCam, model, 5.0);

  const auto poses =
      sample_purse_poses(purse_wide, wide, model, kCam, 400, 20000, 3);
  CHECK(poses.size() >= 100);
  for (const Pose& p : poses) {
    if (purse_contains(purse_narrow, p)) CHECK(purse_contains(purse_wide, p));
  }
  // and the narrow-purse members really are a strict subset here
  size_t in_narrow = 0;
  for (const Pose& p : poses)
    if (purse_contains(purse_narrow, p)) ++in_narrow;
  CHECK(in_narrow < poses.size());
}
