#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "geom3d.hpp"

namespace cfp::conformal {

using geom3d::Vec2;
using Mat2 = Eigen::Matrix2d;

// Per-keypoint probability grids. Channel k is a distribution over the H*W
// pixels: entries are nonnegative and sum to one within 1e-6. Pixels are
// addressed as (x, y) = (column, row); the linear index is y*W + x.
class Heatmap {
 public:
  Heatmap(int width, int height, int channels, std::vector<double> probs);

  // Clamps negative raw values to zero and renormalizes every channel, so the
  // result always satisfies the invariants regardless of the input sign.
  static Heatmap sanitize(int width, int height, int channels,
                          std::vector<double> raw);

  int width() const { return w_; }
  int height() const { return h_; }
  int channels() const { return k_; }

  double at(int channel, int x, int y) const {
    return data_[static_cast<size_t>(channel) * w_ * h_ + static_cast<size_t>(y) * w_ + x];
  }
  const std::vector<double>& data() const { return data_; }

  // Peak probability and its pixel; ties broken by the smallest linear
  // (row-major) index.
  struct Peak {
    Vec2 pixel;
    double prob;
  };
  Peak peak(int channel) const;

  // Probability-weighted mean and covariance of the top-J pixels of one
  // channel, with the J weights renormalized to sum to one. Ties at rank J
  // are resolved in linear-index order.
  struct TopJStats {
    Vec2 mean;
    Mat2 cov;
    bool collinear_support;  // the positively weighted pixels lie on one line
  };
  TopJStats top_j_stats(int channel, int top_j) const;

 private:
  int w_, h_, k_;
  std::vector<double> data_;
};

// Groundtruth keypoint locations in pixels.
struct KeypointLabels {
  std::vector<Vec2> points;
};

// Pixel-wise voting output for one keypoint: rays (p_i, v_i) with unit
// directions.
class VoteField {
 public:
  struct Ray {
    Vec2 origin;
    Vec2 dir;  // unit norm within 1e-9
  };

  explicit VoteField(std::vector<Ray> rays);

  // Normalizes directions before validation (float inputs round-trip).
  static VoteField from_raw(std::vector<Ray> rays);

  const std::vector<Ray>& rays() const { return rays_; }
  size_t size() const { return rays_.size(); }

 private:
  std::vector<Ray> rays_;
};

enum class NonconformityKind { kPeak, kCov, kPvnet };

const char* nonconformity_kind_name(NonconformityKind kind);
NonconformityKind nonconformity_kind_from_name(const std::string& name);

struct NonconformityConfig {
  NonconformityKind kind = NonconformityKind::kPeak;
  int top_j = 100;      // cov only
  double beta = 4.0;    // pvnet truncation radius, pixels

  void validate() const;
};

// A detection is either a heatmap over all keypoints or one vote field per
// keypoint.
using Detection = std::variant<Heatmap, std::vector<VoteField>>;

struct CalibrationSample {
  KeypointLabels labels;
  Detection detection;
};

// Nonincreasingly sorted calibration scores plus the configuration that
// produced them.
struct CalibrationRecord {
  std::vector<double> scores;  // alpha_pi(1) >= ... >= alpha_pi(n)
  NonconformityConfig config;

  size_t n() const { return scores.size(); }

  // Sorts and validates; the only way records are built.
  static CalibrationRecord from_scores(std::vector<double> scores,
                                       NonconformityConfig config);
};

// Per-keypoint quadratic regions (y - mu)^T Lambda (y - mu) <= 1 at a given
// error rate. A zero quantile degenerates every region to its center.
struct PredictionSet {
  struct Entry {
    Vec2 mu;
    Mat2 lambda;  // symmetric positive definite when quantile > 0
  };
  double epsilon = 0.0;
  double quantile = 0.0;
  std::vector<Entry> entries;

  size_t keypoint_count() const { return entries.size(); }
  bool degenerate() const { return quantile == 0.0; }
  bool contains(size_t k, const Vec2& y) const;
};

// --- nonconformity scoring -------------------------------------------------

// Scores of the individual keypoints (the quantity inside the max).
std::vector<double> keypoint_scores(const KeypointLabels& labels,
                                    const Detection& detection,
                                    const NonconformityConfig& config);

// max_k p_k * ||y_k - q_k||: detection error scaled by the peak probability.
double score_peak(const KeypointLabels& labels, const Heatmap& heatmap);

// max_k squared Mahalanobis distance to the top-J mean/covariance.
double score_cov(const KeypointLabels& labels, const Heatmap& heatmap,
                 int top_j);

// max_k Mahalanobis form from the voting pipeline (candidates -> truncated
// least squares -> inlier covariance).
double score_pvnet(const KeypointLabels& labels,
                   const std::vector<VoteField>& fields, double beta);

// --- calibration and prediction ---------------------------------------------

// Scores every sample with the configured nonconformity and returns the
// sorted record. Scoring failures are reported with the sample index.
CalibrationRecord calibrate(const std::vector<CalibrationSample>& dataset,
                            const NonconformityConfig& config);

// The floor((n+1)*eps)-th largest calibration score. Rejects eps whose index
// falls outside [1, n] instead of clamping.
double quantile_at(const CalibrationRecord& record, double epsilon);

// Index h = floor((n+1)*eps); throws EpsilonOutOfRange unless 1 <= h <= n.
size_t conformal_index(size_t n, double epsilon);

// Ball sets: mu_k = peak pixel, Lambda_k = (p_k^2 / alpha^2) I.
PredictionSet predict_set_ball(const Heatmap& heatmap,
                               const CalibrationRecord& record, double epsilon);

// Ellipse sets: mu_k = top-J mean, Lambda_k = Sigma_k^{-1} / alpha.
PredictionSet predict_set_ellipse(const Heatmap& heatmap,
                                  const CalibrationRecord& record,
                                  double epsilon, int top_j);

// Voting sets: mu_k = TLS estimate, Lambda_k = Sigma_k^{-1} / alpha.
PredictionSet predict_set_votes(const std::vector<VoteField>& fields,
                                const CalibrationRecord& record, double epsilon,
                                double beta);

// Builds the set matching record.config.kind.
PredictionSet predict_set(const Detection& detection,
                          const CalibrationRecord& record, double epsilon);

// --- voting machinery --------------------------------------------------------

// All pairwise half-line intersections q = p_i + t_i v_i = p_j + t_j v_j with
// t_i, t_j >= 0. Near-parallel pairs (|sin| < 1e-9) are skipped. If the pair
// count exceeds 20000 the pairs are subsampled deterministically.
std::vector<Vec2> vote_candidates(const VoteField& field);

// Truncated-least-squares point estimate via graduated non-convexity plus the
// inlier set {k : ||q* - q_k||^2 / beta^2 <= 1}.
struct TlsPointResult {
  Vec2 estimate;
  std::vector<size_t> inliers;
};
TlsPointResult gnc_tls_point(const std::vector<Vec2>& candidates, double beta);

// Conditional-coverage Beta parameters (n+1-h, h) with h = floor((n+1)*eps).
std::pair<double, double> beta_conditional_coverage(size_t n, double epsilon);

}  // namespace cfp::conformal
