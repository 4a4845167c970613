#include "purse.hpp"

#include <array>
#include <cmath>
#include <limits>

namespace cfp::purse {

Mat3x12 keypoint_projection_matrix(const CameraIntrinsics& intrinsics,
                                   const Vec3& keypoint3d) {
  Mat3x12 u;
  const auto& p = intrinsics.matrix();
  for (int i = 0; i < 3; ++i) u.block<3, 3>(0, 3 * i) = keypoint3d(i) * p;
  u.block<3, 3>(0, 9) = p;
  return u;
}

Purse build_purse(const PredictionSet& pred, const CameraIntrinsics& intrinsics,
                  const ObjectModel& model, double trans_bound) {
  const size_t k_count = model.keypoint_count();
  if (pred.keypoint_count() != k_count)
    fail(ErrorCode::DimensionMismatch,
         "prediction set has " + std::to_string(pred.keypoint_count()) +
             " keypoints, model has " + std::to_string(k_count));
  if (!(trans_bound > 0.0))
    fail(ErrorCode::InvalidArgument, "trans_bound must be positive");
  if (pred.degenerate())
    fail(ErrorCode::InvalidArgument,
         "prediction set with zero quantile has no interior; cannot build a purse");

  Purse purse;
  purse.trans_bound = trans_bound;
  purse.source = "epsilon=" + std::to_string(pred.epsilon) +
                 ",quantile=" + std::to_string(pred.quantile);
  purse.a.reserve(k_count);
  purse.b.reserve(k_count);

  for (size_t k = 0; k < k_count; ++k) {
    const Mat3x12 u = keypoint_projection_matrix(intrinsics, model.keypoints3d[k]);
    const Vec12 u1 = u.row(0), u2 = u.row(1), u3 = u.row(2);
    const Vec2 mu = pred.entries[k].mu;

    Eigen::Matrix<double, 12, 2> v;
    v.col(0) = u1 - mu(0) * u3;
    v.col(1) = u2 - mu(1) * u3;

    Mat12 a = v * pred.entries[k].lambda * v.transpose() - u3 * u3.transpose();
    a = 0.5 * (a + a.transpose());  // kill float asymmetry
    if (!a.allFinite())
      fail(ErrorCode::InvalidArgument,
           "keypoint " + std::to_string(k) + " produced a non-finite constraint");
    purse.a.push_back(a);
    purse.b.push_back(u3);
  }
  return purse;
}

bool purse_contains(const Purse& purse, const Pose& pose) {
  if (pose.t.norm() > purse.trans_bound) return false;
  const Vec12 s = geom3d::pose_to_vector(pose);
  for (size_t k = 0; k < purse.a.size(); ++k) {
    if (purse.b[k].dot(s) < kDepthMin) return false;
    if (s.dot(purse.a[k] * s) > kQuadraticTol) return false;
  }
  return true;
}

Vec2 sample_in_region(const Vec2& mu, const Mat2& lambda, CounterRng& rng) {
  const Eigen::LLT<Mat2> llt(lambda);
  if (llt.info() != Eigen::Success)
    fail(ErrorCode::NotPositiveDefinite, "region shape matrix is not positive definite");
  const double r = std::sqrt(rng.next_double());
  const double theta = 2.0 * M_PI * rng.next_double();
  const Vec2 disk(r * std::cos(theta), r * std::sin(theta));
  // y = mu + L^{-T} u so that (y-mu)^T L L^T (y-mu) = ||u||^2 <= 1
  return mu + llt.matrixU().solve(disk);
}

namespace {

void sample_distinct3(CounterRng& rng, size_t k_count, size_t idx[3]) {
  idx[0] = rng.next_below(k_count);
  do {
    idx[1] = rng.next_below(k_count);
  } while (idx[1] == idx[0]);
  do {
    idx[2] = rng.next_below(k_count);
  } while (idx[2] == idx[0] || idx[2] == idx[1]);
}

Vec2 sample_entry(const PredictionSet& pred, size_t k, CounterRng& rng) {
  if (pred.degenerate()) return pred.entries[k].mu;
  return sample_in_region(pred.entries[k].mu, pred.entries[k].lambda, rng);
}

// One P3P trial; appends the in-purse solutions.
void run_trial(const Purse& purse, const PredictionSet& pred,
               const ObjectModel& model, const CameraIntrinsics& intrinsics,
               CounterRng& rng, std::vector<Pose>& accepted, size_t cap) {
  size_t idx[3];
  sample_distinct3(rng, model.keypoint_count(), idx);
  std::array<Vec2, 3> pixels;
  std::array<Vec3, 3> points;
  for (int i = 0; i < 3; ++i) {
    pixels[i] = sample_entry(pred, idx[i], rng);
    points[i] = model.keypoints3d[idx[i]];
  }
  for (const Pose& sol : geom3d::p3p(pixels, points, intrinsics)) {
    if (accepted.size() >= cap) return;
    if (purse_contains(purse, sol)) accepted.push_back(sol);
  }
}

}  // namespace

RansagResult ransag(const Purse& purse, const PredictionSet& pred,
                    const ObjectModel& model, const CameraIntrinsics& intrinsics,
                    int trials, uint64_t seed) {
  const size_t k_count = model.keypoint_count();
  if (pred.keypoint_count() != k_count || purse.keypoint_count() != k_count)
    fail(ErrorCode::DimensionMismatch, "prediction set / purse / model disagree on K");
  if (k_count < 3) fail(ErrorCode::InvalidArgument, "ransag needs K >= 3");
  if (trials < 1) fail(ErrorCode::InvalidArgument, "ransag needs trials >= 1");

  RansagResult result;
  result.trials = trials;
  result.seed = seed;

  for (int t = 0; t < trials; ++t) {
    CounterRng rng(seed, static_cast<uint64_t>(t) + 1);
    run_trial(purse, pred, model, intrinsics, rng, result.samples,
              std::numeric_limits<size_t>::max());
  }

  if (result.samples.empty()) {
    result.fallback_used = true;
    const int fallback_trials = trials / 20;
    for (int j = 0; j < fallback_trials; ++j) {
      CounterRng rng(seed, 0x8000000000000000ull + static_cast<uint64_t>(j));
      std::vector<Vec2> pixels(k_count);
      for (size_t k = 0; k < k_count; ++k) pixels[k] = sample_entry(pred, k, rng);
      try {
        result.samples.push_back(
            geom3d::pnp(pixels, model.keypoints3d, intrinsics));
      } catch (const Error&) {
        // a diverged fallback solve just contributes nothing
      }
    }
    if (result.samples.empty())
      fail(ErrorCode::NoValidSamples,
           "no in-purse samples and every fallback solve failed");
  }

  result.average = geom3d::average_poses(result.samples);
  return result;
}

std::vector<Pose> sample_purse_poses(const Purse& purse,
                                     const PredictionSet& pred,
                                     const ObjectModel& model,
                                     const CameraIntrinsics& intrinsics,
                                     size_t target, size_t max_trials,
                                     uint64_t seed) {
  std::vector<Pose> accepted;
  if (model.keypoint_count() < 3 || target == 0) return accepted;
  for (size_t t = 0; t < max_trials && accepted.size() < target; ++t) {
    CounterRng rng(seed, t + 1);
    run_trial(purse, pred, model, intrinsics, rng, accepted, target);
  }
  return accepted;
}

}  // namespace cfp::purse
