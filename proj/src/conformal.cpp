#include "conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "rng.hpp"

namespace cfp::conformal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kCondLimit = 1e12;
constexpr size_t kMaxVotePairs = 20000;

void eig2(const Mat2& m, double& lmin, double& lmax) {
  const double a = m(0, 0), b = m(0, 1), c = m(1, 1);
  const double half_tr = 0.5 * (a + c);
  const double disc = std::sqrt(std::max(0.0, 0.25 * (a - c) * (a - c) + b * b));
  lmin = half_tr - disc;
  lmax = half_tr + disc;
}

Mat2 inv2(const Mat2& m) {
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  Mat2 inv;
  inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
  return inv / det;
}

// Inverts a covariance, regularizing with 1e-9 I only when the matrix is not
// structurally rank deficient (so float underflow does not masquerade as a
// degenerate blob).
Mat2 invert_covariance(const Mat2& cov, bool structurally_singular,
                       const std::string& where) {
  double lmin, lmax;
  eig2(cov, lmin, lmax);
  if (lmin > 0.0 && lmax / lmin < kCondLimit) return inv2(cov);
  if (structurally_singular)
    fail(ErrorCode::SingularCovariance, where + ": covariance support is collinear");
  Mat2 reg = cov + 1e-9 * Mat2::Identity();
  eig2(reg, lmin, lmax);
  if (!(lmin > 0.0))
    fail(ErrorCode::SingularCovariance, where + ": covariance is not invertible");
  return inv2(reg);
}

}  // namespace

// --- Heatmap -----------------------------------------------------------------

Heatmap::Heatmap(int width, int height, int channels, std::vector<double> probs)
    : w_(width), h_(height), k_(channels), data_(std::move(probs)) {
  if (w_ <= 0 || h_ <= 0 || k_ <= 0)
    fail(ErrorCode::InvalidArgument, "heatmap dimensions must be positive");
  const size_t expect = static_cast<size_t>(w_) * h_ * k_;
  if (data_.size() != expect)
    fail(ErrorCode::DimensionMismatch,
         "heatmap buffer has " + std::to_string(data_.size()) + " values, expected " +
             std::to_string(expect));
  const size_t hw = static_cast<size_t>(w_) * h_;
  for (int k = 0; k < k_; ++k) {
    double sum = 0.0;
    for (size_t j = 0; j < hw; ++j) {
      const double v = data_[k * hw + j];
      if (!(v >= 0.0))
        fail(ErrorCode::InvalidArgument,
             "heatmap channel " + std::to_string(k) + " has a negative entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      fail(ErrorCode::InvalidArgument, "heatmap channel " + std::to_string(k) +
                                           " sums to " + std::to_string(sum));
  }
}

Heatmap Heatmap::sanitize(int width, int height, int channels,
                          std::vector<double> raw) {
  if (width <= 0 || height <= 0 || channels <= 0)
    fail(ErrorCode::InvalidArgument, "heatmap dimensions must be positive");
  const size_t hw = static_cast<size_t>(width) * height;
  if (raw.size() != hw * channels)
    fail(ErrorCode::DimensionMismatch, "raw heatmap buffer size mismatch");
  for (int k = 0; k < channels; ++k) {
    double sum = 0.0;
    for (size_t j = 0; j < hw; ++j) {
      double& v = raw[k * hw + j];
      if (!std::isfinite(v)) fail(ErrorCode::InvalidArgument, "non-finite heatmap value");
      if (v < 0.0) v = 0.0;
      sum += v;
    }
    if (!(sum > 0.0))
      fail(ErrorCode::InvalidArgument,
           "heatmap channel " + std::to_string(k) + " has no positive mass");
    for (size_t j = 0; j < hw; ++j) raw[k * hw + j] /= sum;
  }
  return Heatmap(width, height, channels, std::move(raw));
}

Heatmap::Peak Heatmap::peak(int channel) const {
  const size_t hw = static_cast<size_t>(w_) * h_;
  const double* ch = data_.data() + channel * hw;
  size_t best = 0;
  for (size_t j = 1; j < hw; ++j)
    if (ch[j] > ch[best]) best = j;  // strict: first index wins ties
  return Peak{Vec2(static_cast<double>(best % w_), static_cast<double>(best / w_)),
              ch[best]};
}

Heatmap::TopJStats Heatmap::top_j_stats(int channel, int top_j) const {
  const size_t hw = static_cast<size_t>(w_) * h_;
  if (top_j < 1 || static_cast<size_t>(top_j) > hw)
    fail(ErrorCode::InvalidArgument,
         "top_j must lie in [1, H*W], got " + std::to_string(top_j));
  const double* ch = data_.data() + channel * hw;

  std::vector<uint32_t> idx(hw);
  std::iota(idx.begin(), idx.end(), 0u);
  const auto by_prob_then_index = [ch](uint32_t a, uint32_t b) {
    if (ch[a] != ch[b]) return ch[a] > ch[b];
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + top_j, idx.end(), by_prob_then_index);

  double wsum = 0.0;
  for (int j = 0; j < top_j; ++j) wsum += ch[idx[j]];
  if (!(wsum > 0.0))
    fail(ErrorCode::InvalidArgument, "top-J selection carries no probability mass");

  Vec2 mean = Vec2::Zero();
  for (int j = 0; j < top_j; ++j) {
    const uint32_t q = idx[j];
    mean += (ch[q] / wsum) * Vec2(q % w_, q / w_);
  }
  Mat2 cov = Mat2::Zero();
  for (int j = 0; j < top_j; ++j) {
    const uint32_t q = idx[j];
    const Vec2 d = Vec2(q % w_, q / w_) - mean;
    cov += (ch[q] / wsum) * d * d.transpose();
  }

  // exact collinearity of the positively weighted support (integer pixels)
  bool collinear = true;
  Vec2 p0 = Vec2::Zero(), p1 = Vec2::Zero();
  bool have0 = false, have1 = false;
  for (int j = 0; j < top_j; ++j) {
    const uint32_t q = idx[j];
    if (!(ch[q] > 0.0)) continue;
    const Vec2 p(q % w_, q / w_);
    if (!have0) {
      p0 = p;
      have0 = true;
    } else if (!have1) {
      if (p != p0) {
        p1 = p;
        have1 = true;
      }
    } else {
      const Vec2 a = p1 - p0, b = p - p0;
      if (a(0) * b(1) - a(1) * b(0) != 0.0) {
        collinear = false;
        break;
      }
    }
  }

  return TopJStats{mean, cov, collinear};
}

// --- VoteField ---------------------------------------------------------------

VoteField::VoteField(std::vector<Ray> rays) : rays_(std::move(rays)) {
  if (rays_.size() < 2)
    fail(ErrorCode::InvalidArgument, "vote field needs at least 2 rays");
  for (const Ray& r : rays_) {
    if (!r.origin.allFinite() || !r.dir.allFinite())
      fail(ErrorCode::InvalidArgument, "non-finite ray");
    if (std::abs(r.dir.norm() - 1.0) > 1e-9)
      fail(ErrorCode::InvalidArgument, "ray direction is not unit norm");
  }
}

VoteField VoteField::from_raw(std::vector<Ray> rays) {
  for (Ray& r : rays) {
    const double n = r.dir.norm();
    if (!(n > 1e-12))
      fail(ErrorCode::InvalidArgument, "ray direction has (near) zero norm");
    r.dir /= n;
  }
  return VoteField(std::move(rays));
}

// --- config / record ---------------------------------------------------------

const char* nonconformity_kind_name(NonconformityKind kind) {
  switch (kind) {
    case NonconformityKind::kPeak: return "peak";
    case NonconformityKind::kCov: return "cov";
    case NonconformityKind::kPvnet: return "pvnet";
  }
  return "unknown";
}

NonconformityKind nonconformity_kind_from_name(const std::string& name) {
  if (name == "peak") return NonconformityKind::kPeak;
  if (name == "cov") return NonconformityKind::kCov;
  if (name == "pvnet") return NonconformityKind::kPvnet;
  fail(ErrorCode::InvalidArgument, "unknown nonconformity kind '" + name + "'");
}

void NonconformityConfig::validate() const {
  if (top_j < 1) fail(ErrorCode::InvalidArgument, "top_j must be positive");
  if (kind == NonconformityKind::kPvnet && !(beta > 0.0))
    fail(ErrorCode::InvalidArgument, "pvnet requires beta > 0");
}

CalibrationRecord CalibrationRecord::from_scores(std::vector<double> scores,
                                                 NonconformityConfig config) {
  config.validate();
  if (scores.empty()) fail(ErrorCode::EmptyInput, "calibration needs n >= 1 scores");
  for (const double s : scores)
    if (!std::isfinite(s) || s < 0.0)
      fail(ErrorCode::InvalidArgument, "calibration scores must be finite and >= 0");
  std::sort(scores.begin(), scores.end(), std::greater<double>());
  return CalibrationRecord{std::move(scores), config};
}

bool PredictionSet::contains(size_t k, const Vec2& y) const {
  if (k >= entries.size())
    fail(ErrorCode::DimensionMismatch, "keypoint index out of range");
  const Entry& e = entries[k];
  if (degenerate()) return (y - e.mu).squaredNorm() == 0.0;
  const Vec2 d = y - e.mu;
  return d.dot(e.lambda * d) <= 1.0;
}

// --- scoring -----------------------------------------------------------------

namespace {

std::vector<double> scores_heatmap_peak(const KeypointLabels& labels,
                                        const Heatmap& hm) {
  if (labels.points.size() != static_cast<size_t>(hm.channels()))
    fail(ErrorCode::DimensionMismatch, "label/heatmap keypoint count mismatch");
  std::vector<double> out(labels.points.size());
  for (size_t k = 0; k < out.size(); ++k) {
    const auto peak = hm.peak(static_cast<int>(k));
    out[k] = peak.prob * (labels.points[k] - peak.pixel).norm();
  }
  return out;
}

std::vector<double> scores_heatmap_cov(const KeypointLabels& labels,
                                       const Heatmap& hm, int top_j) {
  if (labels.points.size() != static_cast<size_t>(hm.channels()))
    fail(ErrorCode::DimensionMismatch, "label/heatmap keypoint count mismatch");
  std::vector<double> out(labels.points.size());
  for (size_t k = 0; k < out.size(); ++k) {
    const auto stats = hm.top_j_stats(static_cast<int>(k), top_j);
    const Mat2 inv = invert_covariance(stats.cov, stats.collinear_support,
                                       "keypoint " + std::to_string(k));
    const Vec2 d = labels.points[k] - stats.mean;
    out[k] = d.dot(inv * d);
  }
  return out;
}

struct VoteSummary {
  Vec2 estimate;
  Mat2 cov;
};

VoteSummary summarize_votes(const VoteField& field, double beta, size_t k) {
  const std::string where = "keypoint " + std::to_string(k);
  std::vector<Vec2> cands;
  try {
    cands = vote_candidates(field);
  } catch (const Error& e) {
    fail(ErrorCode::DegenerateInliers, where + ": " + e.what());
  }
  if (cands.size() < 2)
    fail(ErrorCode::DegenerateInliers,
         where + ": fewer than 2 intersection candidates");
  const TlsPointResult tls = gnc_tls_point(cands, beta);
  if (tls.inliers.size() < 2)
    fail(ErrorCode::DegenerateInliers, where + ": fewer than 2 inliers");
  Mat2 cov = Mat2::Zero();
  for (const size_t i : tls.inliers) {
    const Vec2 d = cands[i] - tls.estimate;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(tls.inliers.size());
  double lmin, lmax;
  eig2(cov, lmin, lmax);
  if (!(lmin > 0.0) || lmax / lmin >= kCondLimit)
    fail(ErrorCode::DegenerateInliers, where + ": inliers are (near) collinear");
  return VoteSummary{tls.estimate, cov};
}

std::vector<double> scores_votes(const KeypointLabels& labels,
                                 const std::vector<VoteField>& fields,
                                 double beta) {
  if (labels.points.size() != fields.size())
    fail(ErrorCode::DimensionMismatch, "label/vote-field keypoint count mismatch");
  std::vector<double> out(fields.size());
  for (size_t k = 0; k < fields.size(); ++k) {
    const VoteSummary s = summarize_votes(fields[k], beta, k);
    const Vec2 d = labels.points[k] - s.estimate;
    out[k] = d.dot(inv2(s.cov) * d);
  }
  return out;
}

}  // namespace

std::vector<double> keypoint_scores(const KeypointLabels& labels,
                                    const Detection& detection,
                                    const NonconformityConfig& config) {
  config.validate();
  switch (config.kind) {
    case NonconformityKind::kPeak: {
      const Heatmap* hm = std::get_if<Heatmap>(&detection);
      if (!hm) fail(ErrorCode::InvalidArgument, "peak scoring needs a heatmap");
      return scores_heatmap_peak(labels, *hm);
    }
    case NonconformityKind::kCov: {
      const Heatmap* hm = std::get_if<Heatmap>(&detection);
      if (!hm) fail(ErrorCode::InvalidArgument, "cov scoring needs a heatmap");
      return scores_heatmap_cov(labels, *hm, config.top_j);
    }
    case NonconformityKind::kPvnet: {
      const auto* fields = std::get_if<std::vector<VoteField>>(&detection);
      if (!fields) fail(ErrorCode::InvalidArgument, "pvnet scoring needs vote fields");
      return scores_votes(labels, *fields, config.beta);
    }
  }
  fail(ErrorCode::InvalidArgument, "unknown nonconformity kind");
}

double score_peak(const KeypointLabels& labels, const Heatmap& heatmap) {
  const auto s = scores_heatmap_peak(labels, heatmap);
  return *std::max_element(s.begin(), s.end());
}

double score_cov(const KeypointLabels& labels, const Heatmap& heatmap,
                 int top_j) {
  const auto s = scores_heatmap_cov(labels, heatmap, top_j);
  return *std::max_element(s.begin(), s.end());
}

double score_pvnet(const KeypointLabels& labels,
                   const std::vector<VoteField>& fields, double beta) {
  const auto s = scores_votes(labels, fields, beta);
  return *std::max_element(s.begin(), s.end());
}

// --- calibration -------------------------------------------------------------

CalibrationRecord calibrate(const std::vector<CalibrationSample>& dataset,
                            const NonconformityConfig& config) {
  config.validate();
  if (dataset.empty()) fail(ErrorCode::EmptyInput, "calibration set is empty");
  std::vector<double> scores;
  scores.reserve(dataset.size());
  for (size_t i = 0; i < dataset.size(); ++i) {
    try {
      const auto per_kp = keypoint_scores(dataset[i].labels, dataset[i].detection,
                                          config);
      scores.push_back(*std::max_element(per_kp.begin(), per_kp.end()));
    } catch (const Error& e) {
      fail(e.code(), "calibration sample " + std::to_string(i) + ": " + e.what());
    }
  }
  return CalibrationRecord::from_scores(std::move(scores), config);
}

size_t conformal_index(size_t n, double epsilon) {
  if (n < 1) fail(ErrorCode::EmptyInput, "empty calibration record");
  if (!(epsilon > 0.0) || !(epsilon < 1.0))
    fail(ErrorCode::EpsilonOutOfRange, "epsilon must lie in (0, 1)");
  // tiny nudge so decimal rates like 0.7 floor to the intended integer
  const double raw = static_cast<double>(n + 1) * epsilon + 1e-9;
  const double floored = std::floor(raw);
  if (floored < 1.0)
    fail(ErrorCode::EpsilonOutOfRange,
         "epsilon too small for n: floor((n+1)eps) < 1");
  if (floored > static_cast<double>(n))
    fail(ErrorCode::EpsilonOutOfRange,
         "epsilon too large for n: floor((n+1)eps) > n");
  return static_cast<size_t>(floored);
}

double quantile_at(const CalibrationRecord& record, double epsilon) {
  const size_t h = conformal_index(record.n(), epsilon);
  return record.scores[h - 1];  // h-th largest
}

std::pair<double, double> beta_conditional_coverage(size_t n, double epsilon) {
  const size_t h = conformal_index(n, epsilon);
  return {static_cast<double>(n + 1 - h), static_cast<double>(h)};
}

// --- prediction sets ----------------------------------------------------------

PredictionSet predict_set_ball(const Heatmap& heatmap,
                               const CalibrationRecord& record, double epsilon) {
  const double alpha = quantile_at(record, epsilon);
  PredictionSet set;
  set.epsilon = epsilon;
  set.quantile = alpha;
  set.entries.reserve(heatmap.channels());
  for (int k = 0; k < heatmap.channels(); ++k) {
    const auto peak = heatmap.peak(k);
    if (!(peak.prob > 0.0))
      fail(ErrorCode::ZeroPeakProbability,
           "keypoint " + std::to_string(k) + " has zero peak probability");
    Mat2 lambda;
    if (alpha > 0.0)
      lambda = (peak.prob * peak.prob / (alpha * alpha)) * Mat2::Identity();
    else
      lambda = kInf * Mat2::Identity();  // region degenerates to the center
    set.entries.push_back({peak.pixel, lambda});
  }
  return set;
}

PredictionSet predict_set_ellipse(const Heatmap& heatmap,
                                  const CalibrationRecord& record,
                                  double epsilon, int top_j) {
  const double alpha = quantile_at(record, epsilon);
  PredictionSet set;
  set.epsilon = epsilon;
  set.quantile = alpha;
  set.entries.reserve(heatmap.channels());
  for (int k = 0; k < heatmap.channels(); ++k) {
    const auto stats = heatmap.top_j_stats(k, top_j);
    const Mat2 inv = invert_covariance(stats.cov, stats.collinear_support,
                                       "keypoint " + std::to_string(k));
    const Mat2 lambda = alpha > 0.0 ? Mat2(inv / alpha) : Mat2(kInf * Mat2::Identity());
    set.entries.push_back({stats.mean, lambda});
  }
  return set;
}

PredictionSet predict_set_votes(const std::vector<VoteField>& fields,
                                const CalibrationRecord& record, double epsilon,
                                double beta) {
  const double alpha = quantile_at(record, epsilon);
  PredictionSet set;
  set.epsilon = epsilon;
  set.quantile = alpha;
  set.entries.reserve(fields.size());
  for (size_t k = 0; k < fields.size(); ++k) {
    const VoteSummary s = summarize_votes(fields[k], beta, k);
    const Mat2 lambda =
        alpha > 0.0 ? Mat2(inv2(s.cov) / alpha) : Mat2(kInf * Mat2::Identity());
    set.entries.push_back({s.estimate, lambda});
  }
  return set;
}

PredictionSet predict_set(const Detection& detection,
                          const CalibrationRecord& record, double epsilon) {
  switch (record.config.kind) {
    case NonconformityKind::kPeak: {
      const Heatmap* hm = std::get_if<Heatmap>(&detection);
      if (!hm) fail(ErrorCode::InvalidArgument, "record was calibrated on heatmaps");
      return predict_set_ball(*hm, record, epsilon);
    }
    case NonconformityKind::kCov: {
      const Heatmap* hm = std::get_if<Heatmap>(&detection);
      if (!hm) fail(ErrorCode::InvalidArgument, "record was calibrated on heatmaps");
      return predict_set_ellipse(*hm, record, epsilon, record.config.top_j);
    }
    case NonconformityKind::kPvnet: {
      const auto* fields = std::get_if<std::vector<VoteField>>(&detection);
      if (!fields)
        fail(ErrorCode::InvalidArgument, "record was calibrated on vote fields");
      return predict_set_votes(*fields, record, epsilon, record.config.beta);
    }
  }
  fail(ErrorCode::InvalidArgument, "unknown nonconformity kind");
}

// --- voting machinery ----------------------------------------------------------

std::vector<Vec2> vote_candidates(const VoteField& field) {
  const auto& rays = field.rays();
  const size_t t = rays.size();
  const size_t total_pairs = t * (t - 1) / 2;

  std::vector<Vec2> out;
  const auto intersect = [&rays, &out](size_t i, size_t j) {
    const Vec2 vi = rays[i].dir, vj = rays[j].dir;
    const double cross = vi(0) * vj(1) - vi(1) * vj(0);
    if (std::abs(cross) < 1e-9) return;  // (near) parallel
    const Vec2 d = rays[j].origin - rays[i].origin;
    const double ti = (d(0) * vj(1) - d(1) * vj(0)) / cross;
    const double tj = (d(0) * vi(1) - d(1) * vi(0)) / cross;
    if (ti < 0.0 || tj < 0.0) return;  // behind a half-line start
    out.push_back(rays[i].origin + ti * vi);
  };

  if (total_pairs <= kMaxVotePairs) {
    for (size_t i = 0; i < t; ++i)
      for (size_t j = i + 1; j < t; ++j) intersect(i, j);
    return out;
  }

  // deterministic uniform subsample of the pair index space
  CounterRng rng(0x70D0C0DEull, t);
  std::unordered_set<uint64_t> chosen;
  chosen.reserve(kMaxVotePairs * 2);
  while (chosen.size() < kMaxVotePairs)
    chosen.insert(rng.next_below(total_pairs));
  std::vector<uint64_t> ordered(chosen.begin(), chosen.end());
  std::sort(ordered.begin(), ordered.end());

  const auto pair_base = [t](uint64_t i) { return i * (2 * t - i - 1) / 2; };
  for (const uint64_t lin : ordered) {
    uint64_t i = static_cast<uint64_t>(
        std::floor(t - 0.5 - std::sqrt((t - 0.5) * (t - 0.5) - 2.0 * static_cast<double>(lin))));
    while (i > 0 && pair_base(i) > lin) --i;
    while (pair_base(i + 1) <= lin) ++i;
    const uint64_t j = i + 1 + (lin - pair_base(i));
    intersect(i, j);
  }
  return out;
}

TlsPointResult gnc_tls_point(const std::vector<Vec2>& candidates, double beta) {
  if (candidates.size() < 2)
    fail(ErrorCode::TooFewCandidates, "need at least 2 candidates, got " +
                                          std::to_string(candidates.size()));
  if (!(beta > 0.0)) fail(ErrorCode::InvalidArgument, "beta must be positive");
  const size_t n = candidates.size();
  const double beta2 = beta * beta;

  // coordinate-wise median start
  std::vector<double> xs(n), ys(n);
  for (size_t i = 0; i < n; ++i) {
    xs[i] = candidates[i](0);
    ys[i] = candidates[i](1);
  }
  std::nth_element(xs.begin(), xs.begin() + n / 2, xs.end());
  std::nth_element(ys.begin(), ys.begin() + n / 2, ys.end());
  Vec2 q(xs[n / 2], ys[n / 2]);

  std::vector<double> r2(n);
  const auto residuals = [&]() {
    for (size_t i = 0; i < n; ++i) r2[i] = (q - candidates[i]).squaredNorm();
  };
  residuals();

  double mu = 1.0;
  for (const double r : r2) mu = std::max(mu, r / beta2);

  // The truncated-least-squares surrogate parameter m tends to infinity as mu
  // anneals down to 1; weights are the standard graduated non-convexity update.
  std::vector<double> w(n, 1.0);
  for (int iter = 0; iter < 100; ++iter) {
    const double m =
        mu <= 1.0 + 1e-12 ? 1e12 : std::clamp(1.0 / (mu - 1.0), 1e-6, 1e12);
    const double lo = m / (m + 1.0) * beta2;
    const double hi = (m + 1.0) / m * beta2;

    std::vector<double> wn(n);
    for (size_t i = 0; i < n; ++i) {
      if (r2[i] <= lo)
        wn[i] = 1.0;
      else if (r2[i] >= hi)
        wn[i] = 0.0;
      else
        wn[i] = std::clamp(beta * std::sqrt(m * (m + 1.0)) / std::sqrt(r2[i]) - m,
                           0.0, 1.0);
    }

    double wsum = 0.0;
    Vec2 acc = Vec2::Zero();
    for (size_t i = 0; i < n; ++i) {
      wsum += wn[i];
      acc += wn[i] * candidates[i];
    }
    if (wsum > 1e-300) q = acc / wsum;
    residuals();

    double delta = 0.0;
    for (size_t i = 0; i < n; ++i) delta = std::max(delta, std::abs(wn[i] - w[i]));
    w = std::move(wn);
    if (delta < 1e-6) break;
    mu = std::max(1.0, mu / 1.4);
  }

  // settle on a stationary point of the truncated cost: the centroid of the
  // within-beta set
  for (int iter = 0; iter < 50; ++iter) {
    Vec2 acc = Vec2::Zero();
    size_t cnt = 0;
    for (size_t i = 0; i < n; ++i)
      if ((q - candidates[i]).squaredNorm() <= beta2) {
        acc += candidates[i];
        ++cnt;
      }
    if (cnt == 0) break;
    const Vec2 qn = acc / static_cast<double>(cnt);
    const bool done = (qn - q).norm() < 1e-12;
    q = qn;
    if (done) break;
  }

  TlsPointResult out;
  out.estimate = q;
  for (size_t i = 0; i < n; ++i)
    if ((q - candidates[i]).squaredNorm() / beta2 <= 1.0) out.inliers.push_back(i);
  return out;
}

}  // namespace cfp::conformal
