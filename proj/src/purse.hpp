#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "conformal.hpp"
#include "geom3d.hpp"
#include "rng.hpp"

namespace cfp::purse {

using conformal::Mat2;
using conformal::PredictionSet;
using geom3d::CameraIntrinsics;
using geom3d::ObjectModel;
using geom3d::Pose;
using geom3d::Vec12;
using geom3d::Vec2;
using geom3d::Vec3;

using Mat12 = Eigen::Matrix<double, 12, 12>;
using Mat3x12 = Eigen::Matrix<double, 3, 12>;

// Closed-set stand-in for the strict depth positivity b_k^T s > 0; floats
// cannot represent strict inequalities and the relaxation needs closed sets.
inline constexpr double kDepthMin = 1e-3;
// Slack allowed on the quadratic membership tests.
inline constexpr double kQuadraticTol = 1e-9;

// The pose uncertainty set: s = [vec(R); t] belongs iff s^T A_k s <= 0 and
// b_k^T s >= kDepthMin for every keypoint, and ||t|| <= trans_bound.
struct Purse {
  std::vector<Mat12> a;     // symmetric 12x12, one per keypoint
  std::vector<Vec12> b;     // third rows of the U_k matrices
  double trans_bound = 5.0; // redundant translation ball, meters
  std::string source;       // provenance of the generating prediction set

  size_t keypoint_count() const { return a.size(); }
};

// U_k = [Y_k^T (x) P, P]: maps s to the homogeneous pixel coordinates of
// keypoint k, using the shared column-major vec convention.
Mat3x12 keypoint_projection_matrix(const CameraIntrinsics& intrinsics,
                                   const Vec3& keypoint3d);

// Turns per-keypoint regions (y - mu_k)^T Lambda_k (y - mu_k) <= 1 into the
// equivalent quadratic pose constraints:
//   A_k = [u_k1 - mu_x u_k3, u_k2 - mu_y u_k3] Lambda_k [..]^T - u_k3 u_k3^T
//   b_k = u_k3
Purse build_purse(const PredictionSet& pred, const CameraIntrinsics& intrinsics,
                  const ObjectModel& model, double trans_bound = 5.0);

bool purse_contains(const Purse& purse, const Pose& pose);

struct RansagResult {
  std::vector<Pose> samples;  // in-purse poses, or the fallback poses when flagged
  Pose average;
  bool fallback_used = false;
  int trials = 0;
  uint64_t seed = 0;
};

// Random sample averaging: per trial, draw three distinct keypoints, sample a
// pixel in each region, solve the minimal problem and keep the solutions that
// lie in the purse. If all trials fail, floor(trials/20) full-keypoint
// samples are solved without the membership check. The returned average is
// the chordal rotation mean plus arithmetic translation mean; it is not
// itself guaranteed to lie in the purse.
RansagResult ransag(const Purse& purse, const PredictionSet& pred,
                    const ObjectModel& model, const CameraIntrinsics& intrinsics,
                    int trials, uint64_t seed);

// Uniform sample in {y : (y - mu)^T Lambda (y - mu) <= 1} via the Cholesky
// factor of Lambda and a uniform unit-disk draw.
Vec2 sample_in_region(const Vec2& mu, const Mat2& lambda, CounterRng& rng);

// Runs the ransag trial loop (without fallback) until `target` in-purse poses
// are collected or `max_trials` trials elapse.
std::vector<Pose> sample_purse_poses(const Purse& purse,
                                     const PredictionSet& pred,
                                     const ObjectModel& model,
                                     const CameraIntrinsics& intrinsics,
                                     size_t target, size_t max_trials,
                                     uint64_t seed);

}  // namespace cfp::purse
