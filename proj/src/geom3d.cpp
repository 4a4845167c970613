#include "geom3d.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

namespace cfp::geom3d {

namespace {

bool finite(const Vec3& v) { return v.allFinite(); }
bool finite(const Vec2& v) { return v.allFinite(); }

}  // namespace

Rotation3::Rotation3(const Mat3& m) : m_(m) {
  if (!m.allFinite()) fail(ErrorCode::InvalidArgument, "rotation has non-finite entries");
  const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > kRotationTol)
    fail(ErrorCode::InvalidArgument, "matrix is not orthonormal (|R^T R - I| = " +
                                         std::to_string(ortho) + ")");
  const double det = m.determinant();
  if (std::abs(det - 1.0) > kRotationTol)
    fail(ErrorCode::InvalidArgument, "matrix determinant is not +1 (det = " +
                                         std::to_string(det) + ")");
}

Rotation3 Rotation3::from_axis_angle(const Vec3& axis, double angle_rad) {
  const double n = axis.norm();
  if (!(n > 0.0) || !std::isfinite(angle_rad))
    fail(ErrorCode::InvalidArgument, "invalid axis-angle");
  return Rotation3(Eigen::AngleAxisd(angle_rad, axis / n).toRotationMatrix());
}

double Rotation3::geodesic_angle_to(const Rotation3& other) const {
  const Mat3 q = m_.transpose() * other.m_;
  // atan2 form stays accurate near 0 and pi where acos((tr-1)/2) degrades
  const Vec3 vee(q(2, 1) - q(1, 2), q(0, 2) - q(2, 0), q(1, 0) - q(0, 1));
  const double s = 0.5 * vee.norm();
  const double c = (q.trace() - 1.0) / 2.0;
  return std::atan2(s, c);
}

double Rotation3::frobenius_distance_to(const Rotation3& other) const {
  return (m_ - other.m_).norm();
}

Vec12 pose_to_vector(const Pose& pose) {
  Vec12 s;
  const Mat3& r = pose.rot.matrix();
  for (int col = 0; col < 3; ++col)
    for (int row = 0; row < 3; ++row) s(3 * col + row) = r(row, col);
  s.tail<3>() = pose.t;
  return s;
}

Pose vector_to_pose(const Vec12& s) {
  Mat3 r;
  for (int col = 0; col < 3; ++col)
    for (int row = 0; row < 3; ++row) r(row, col) = s(3 * col + row);
  return Pose{Rotation3(r), s.tail<3>()};
}

CameraIntrinsics::CameraIntrinsics(double fx, double fy, double cx, double cy,
                                   double skew) {
  p_ << fx, skew, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  if (!(fx > 0.0) || !(fy > 0.0) || !p_.allFinite())
    fail(ErrorCode::InvalidArgument, "intrinsics require fx > 0, fy > 0");
}

CameraIntrinsics::CameraIntrinsics(const Mat3& p) : p_(p) {
  if (!p.allFinite() || p(1, 0) != 0.0 || p(2, 0) != 0.0 || p(2, 1) != 0.0 ||
      p(2, 2) != 1.0 || !(p(0, 0) > 0.0) || !(p(1, 1) > 0.0))
    fail(ErrorCode::InvalidArgument,
         "intrinsics must be upper triangular with fx, fy > 0 and p22 = 1");
}

ObjectModel make_object_model(std::string object_id, std::vector<Vec3> pts) {
  if (pts.size() < 4)
    fail(ErrorCode::InvalidArgument, "object model needs at least 4 keypoints");
  for (size_t i = 0; i < pts.size(); ++i) {
    if (!finite(pts[i])) fail(ErrorCode::InvalidArgument, "non-finite keypoint");
    for (size_t j = i + 1; j < pts.size(); ++j)
      if ((pts[i] - pts[j]).norm() == 0.0)
        fail(ErrorCode::InvalidArgument, "duplicate 3D keypoints " +
                                             std::to_string(i) + "," + std::to_string(j));
  }
  return ObjectModel{std::move(object_id), std::move(pts)};
}

Vec2 project(const Pose& pose, const CameraIntrinsics& intrinsics,
             const Vec3& point3d) {
  const Vec3 g = intrinsics.matrix() * (pose.rot.matrix() * point3d + pose.t);
  if (!(g(2) > 0.0))
    fail(ErrorCode::NonPositiveDepth,
         "point depth " + std::to_string(g(2)) + " is not positive");
  return Vec2(g(0) / g(2), g(1) / g(2));
}

double projected_depth(const Pose& pose, const CameraIntrinsics& intrinsics,
                       const Vec3& point3d) {
  return (intrinsics.matrix() * (pose.rot.matrix() * point3d + pose.t))(2);
}

namespace {

// --- small dense polynomial helpers (coefficients in ascending degree) ---

template <size_t NA, size_t NB>
std::array<double, NA + NB - 1> poly_mul(const std::array<double, NA>& a,
                                         const std::array<double, NB>& b) {
  std::array<double, NA + NB - 1> out{};
  for (size_t i = 0; i < NA; ++i)
    for (size_t j = 0; j < NB; ++j) out[i + j] += a[i] * b[j];
  return out;
}

// Real roots of a quartic via the companion matrix; roots with imaginary part
// below 1e-8 are accepted as real and polished with a few Newton steps.
std::vector<double> quartic_real_roots(const std::array<double, 5>& c) {
  const double lead = c[4];
  std::vector<double> roots;
  if (std::abs(lead) < 1e-14 * std::max({std::abs(c[0]), std::abs(c[1]),
                                         std::abs(c[2]), std::abs(c[3]), 1e-30}))
    return roots;  // degenerate leading coefficient: treat as no usable roots

  Eigen::Matrix4d companion = Eigen::Matrix4d::Zero();
  companion(1, 0) = companion(2, 1) = companion(3, 2) = 1.0;
  for (int i = 0; i < 4; ++i) companion(i, 3) = -c[i] / lead;
  const Eigen::EigenSolver<Eigen::Matrix4d> es(companion, false);

  auto eval = [&c](double x, double& p, double& dp) {
    p = (((c[4] * x + c[3]) * x + c[2]) * x + c[1]) * x + c[0];
    dp = ((4.0 * c[4] * x + 3.0 * c[3]) * x + 2.0 * c[2]) * x + c[1];
  };

  for (int i = 0; i < 4; ++i) {
    const std::complex<double> z = es.eigenvalues()(i);
    if (std::abs(z.imag()) >= 1e-8) continue;
    double x = z.real();
    for (int it = 0; it < 3; ++it) {  // Newton polish
      double p, dp;
      eval(x, p, dp);
      if (std::abs(dp) < 1e-30) break;
      const double step = p / dp;
      if (!std::isfinite(step)) break;
      x -= step;
    }
    if (std::isfinite(x)) roots.push_back(x);
  }
  return roots;
}

// Rigid transform X ~= R Y + t minimizing least squares (Kabsch).
bool kabsch(const std::vector<Vec3>& ys, const std::vector<Vec3>& xs, Mat3& r,
            Vec3& t) {
  Vec3 ym = Vec3::Zero(), xm = Vec3::Zero();
  for (size_t i = 0; i < ys.size(); ++i) {
    ym += ys[i];
    xm += xs[i];
  }
  ym /= static_cast<double>(ys.size());
  xm /= static_cast<double>(xs.size());
  Mat3 h = Mat3::Zero();
  for (size_t i = 0; i < ys.size(); ++i)
    h += (ys[i] - ym) * (xs[i] - xm).transpose();
  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant();
  r = svd.matrixV() * d * svd.matrixU().transpose();
  t = xm - r * ym;
  return r.allFinite() && t.allFinite();
}

struct GnResult {
  Mat3 r;
  Vec3 t;
  double rms = std::numeric_limits<double>::infinity();
  bool ok = false;
};

double reprojection_cost(const Mat3& r, const Vec3& t, const Mat3& p,
                         const std::vector<Vec3>& pts,
                         const std::vector<Vec2>& pix) {
  double c = 0.0;
  for (size_t i = 0; i < pts.size(); ++i) {
    const Vec3 g = p * (r * pts[i] + t);
    if (!(g(2) > 0.0) || !g.allFinite()) return std::numeric_limits<double>::infinity();
    const Vec2 res(g(0) / g(2) - pix[i](0), g(1) / g(2) - pix[i](1));
    c += res.squaredNorm();
  }
  return c;
}

GnResult gauss_newton_pose(Mat3 r, Vec3 t, const Mat3& p,
                           const std::vector<Vec3>& pts,
                           const std::vector<Vec2>& pix, int max_iters) {
  const int n = static_cast<int>(pts.size());
  GnResult out;
  double cost = reprojection_cost(r, t, p, pts, pix);
  if (!std::isfinite(cost)) return out;

  for (int iter = 0; iter < max_iters; ++iter) {
    Eigen::MatrixXd jac(2 * n, 6);
    Eigen::VectorXd res(2 * n);
    for (int i = 0; i < n; ++i) {
      const Vec3 xc = r * pts[i] + t;
      const Vec3 g = p * xc;
      const double iz = 1.0 / g(2);
      res(2 * i) = g(0) * iz - pix[i](0);
      res(2 * i + 1) = g(1) * iz - pix[i](1);
      Eigen::Matrix<double, 2, 3> dpi;
      dpi << iz, 0.0, -g(0) * iz * iz, 0.0, iz, -g(1) * iz * iz;
      Mat3 skew;
      skew << 0.0, -xc(2), xc(1), xc(2), 0.0, -xc(0), -xc(1), xc(0), 0.0;
      const Eigen::Matrix<double, 2, 3> dpg = dpi * p;
      jac.block<2, 3>(2 * i, 0) = -dpg * skew;  // d/d omega, R <- exp(w^) R
      jac.block<2, 3>(2 * i, 3) = dpg;          // d/dt
    }
    Eigen::Matrix<double, 6, 6> jtj = jac.transpose() * jac;
    jtj.diagonal().array() += 1e-12;
    const Eigen::Matrix<double, 6, 1> delta =
        jtj.ldlt().solve(-jac.transpose() * res);
    if (!delta.allFinite()) break;

    // backtracking line search on the squared residual
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 12; ++ls, alpha *= 0.5) {
      const Vec3 w = alpha * delta.head<3>();
      const double ang = w.norm();
      Mat3 rw = Mat3::Identity();
      if (ang > 0.0)
        rw = Eigen::AngleAxisd(ang, w / ang).toRotationMatrix();
      const Mat3 r_try = rw * r;
      const Vec3 t_try = t + alpha * delta.tail<3>();
      const double c_try = reprojection_cost(r_try, t_try, p, pts, pix);
      if (c_try < cost) {
        r = r_try;
        t = t_try;
        cost = c_try;
        accepted = true;
        break;
      }
    }
    if (!accepted || delta.norm() * alpha < 1e-12) break;
  }
  out.r = r;
  out.t = t;
  out.rms = std::sqrt(cost / n);
  out.ok = std::isfinite(cost);
  return out;
}

}  // namespace

std::vector<Pose> p3p(const std::array<Vec2, 3>& pixels,
                      const std::array<Vec3, 3>& points3d,
                      const CameraIntrinsics& intrinsics) {
  for (const auto& px : pixels)
    if (!finite(px)) fail(ErrorCode::InvalidArgument, "non-finite pixel");
  for (const auto& pt : points3d)
    if (!finite(pt)) fail(ErrorCode::InvalidArgument, "non-finite 3D point");

  std::vector<Pose> out;

  // collinearity of the 3D points => degenerate, no solutions
  const Vec3 cross = (points3d[1] - points3d[0]).cross(points3d[2] - points3d[0]);
  const double scale = std::max((points3d[1] - points3d[0]).norm(),
                                (points3d[2] - points3d[0]).norm());
  if (cross.norm() <= 1e-12 * std::max(scale * scale, 1e-30)) return out;

  // unit bearing vectors through the pixels
  const Mat3 pinv = intrinsics.matrix().inverse();
  std::array<Vec3, 3> f;
  for (int i = 0; i < 3; ++i)
    f[i] = (pinv * Vec3(pixels[i](0), pixels[i](1), 1.0)).normalized();

  // side lengths opposite to each bearing and the pairwise cosines
  const double a = (points3d[1] - points3d[2]).norm();
  const double b = (points3d[0] - points3d[2]).norm();
  const double c = (points3d[0] - points3d[1]).norm();
  const double cos_a = f[1].dot(f[2]);
  const double cos_b = f[0].dot(f[2]);
  const double cos_g = f[0].dot(f[1]);

  // With distances s1, s2 = u*s1, s3 = v*s1 the law of cosines gives two
  // quadratics in (u, v); eliminating u yields a quartic in v. The
  // elimination is done with explicit polynomial arithmetic:
  //   u = N(v) / D(v),  N = 1 - v^2 - q (1 + v^2 - 2 v cos_b),  q=(c^2-a^2)/b^2
  //   D = 2 (cos_g - v cos_a)
  //   0 = N^2 - 2 cos_g N D + E D^2,  E = 1 - (c^2/b^2)(1 + v^2 - 2 v cos_b)
  const double b2 = b * b;
  const double q = (c * c - a * a) / b2;
  const double cb2 = c * c / b2;
  const std::array<double, 3> npoly{1.0 - q, 2.0 * q * cos_b, -1.0 - q};
  const std::array<double, 2> dpoly{2.0 * cos_g, -2.0 * cos_a};
  const std::array<double, 3> epoly{1.0 - cb2, 2.0 * cb2 * cos_b, -cb2};

  const auto nn = poly_mul(npoly, npoly);
  const auto nd = poly_mul(npoly, dpoly);
  const auto dd = poly_mul(dpoly, dpoly);
  const auto edd = poly_mul(epoly, dd);

  std::array<double, 5> quartic{};
  for (size_t i = 0; i < 5; ++i) quartic[i] = nn[i] + edd[i];
  for (size_t i = 0; i < 4; ++i) quartic[i] -= 2.0 * cos_g * nd[i];

  const std::vector<double> roots = quartic_real_roots(quartic);

  std::vector<Vec3> ys(points3d.begin(), points3d.end());
  std::vector<Vec2> pix(pixels.begin(), pixels.end());

  for (const double v : roots) {
    if (!(v > 0.0)) continue;
    const double den = 1.0 + v * v - 2.0 * v * cos_b;
    if (!(den > 0.0)) continue;
    const double dv = dpoly[0] + dpoly[1] * v;
    if (std::abs(dv) < 1e-12) continue;
    const double nv = npoly[0] + npoly[1] * v + npoly[2] * v * v;
    const double u = nv / dv;
    if (!(u > 0.0)) continue;
    const double s1 = b / std::sqrt(den);
    const double s2 = u * s1;
    const double s3 = v * s1;
    if (!std::isfinite(s1) || !std::isfinite(s2) || !std::isfinite(s3)) continue;

    const std::vector<Vec3> xs{s1 * f[0], s2 * f[1], s3 * f[2]};
    Mat3 r;
    Vec3 t;
    if (!kabsch(ys, xs, r, t)) continue;

    const GnResult polished =
        gauss_newton_pose(r, t, intrinsics.matrix(), ys, pix, 5);
    if (!polished.ok) continue;

    // postconditions: exact interpolation and positive depths
    bool good = polished.rms < 1e-6;
    for (int i = 0; i < 3 && good; ++i)
      good = (intrinsics.matrix() * (polished.r * ys[i] + polished.t))(2) > 0.0;
    if (!good) continue;

    bool duplicate = false;
    for (const Pose& prev : out)
      if ((prev.rot.matrix() - polished.r).norm() < 1e-7 &&
          (prev.t - polished.t).norm() < 1e-7) {
        duplicate = true;
        break;
      }
    if (!duplicate && out.size() < 4)
      out.push_back(Pose{Rotation3(project_so3(polished.r).matrix()), polished.t});
  }
  return out;
}

namespace {

// Direct linear transform on normalized coordinates; needs >= 6 points.
bool dlt_pose(const std::vector<Vec2>& pixels, const std::vector<Vec3>& pts,
              const Mat3& pinv, Mat3& r, Vec3& t) {
  const int n = static_cast<int>(pts.size());
  if (n < 6) return false;
  Eigen::MatrixXd m(2 * n, 12);
  for (int i = 0; i < n; ++i) {
    const Vec3 xh = pinv * Vec3(pixels[i](0), pixels[i](1), 1.0);
    const Eigen::Matrix<double, 1, 4> yh(pts[i](0), pts[i](1), pts[i](2), 1.0);
    m.row(2 * i).setZero();
    m.row(2 * i + 1).setZero();
    m.block<1, 4>(2 * i, 0) = yh;
    m.block<1, 4>(2 * i, 8) = -xh(0) * yh;
    m.block<1, 4>(2 * i + 1, 4) = yh;
    m.block<1, 4>(2 * i + 1, 8) = -xh(1) * yh;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(10) < 1e-10 * sv(0)) return false;  // null space not unique
  Eigen::Matrix<double, 12, 1> sol = svd.matrixV().col(11);

  Eigen::Matrix<double, 3, 4> proj;
  proj.row(0) = sol.segment<4>(0).transpose();
  proj.row(1) = sol.segment<4>(4).transpose();
  proj.row(2) = sol.segment<4>(8).transpose();

  // fix the sign so most depths are positive
  int pos = 0;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector4d yh(pts[i](0), pts[i](1), pts[i](2), 1.0);
    if (proj.row(2) * yh > 0.0) ++pos;
  }
  if (2 * pos < n) proj = -proj;

  const Mat3 bmat = proj.leftCols<3>();
  const Eigen::JacobiSVD<Mat3> bsvd(bmat, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double sigma = bsvd.singularValues().mean();
  if (!(sigma > 1e-12)) return false;
  Mat3 d = Mat3::Identity();
  d(2, 2) = (bsvd.matrixU() * bsvd.matrixV().transpose()).determinant();
  r = bsvd.matrixU() * d * bsvd.matrixV().transpose();
  t = proj.col(3) / sigma;
  return r.allFinite() && t.allFinite();
}

}  // namespace

Pose pnp(const std::vector<Vec2>& pixels, const std::vector<Vec3>& points3d,
         const CameraIntrinsics& intrinsics) {
  const size_t n = points3d.size();
  if (pixels.size() != n)
    fail(ErrorCode::DimensionMismatch, "pixel/point count mismatch");
  if (n < 4)
    fail(ErrorCode::InvalidArgument,
         "pnp needs at least 4 correspondences, got " + std::to_string(n));
  for (const auto& px : pixels)
    if (!finite(px)) fail(ErrorCode::InvalidArgument, "non-finite pixel");

  const Mat3 pinv = intrinsics.matrix().inverse();

  struct Candidate {
    Mat3 r;
    Vec3 t;
    double cost;
  };
  std::vector<Candidate> candidates;

  Mat3 r0;
  Vec3 t0;
  if (dlt_pose(pixels, points3d, pinv, r0, t0))
    candidates.push_back(
        {r0, t0, reprojection_cost(r0, t0, intrinsics.matrix(), points3d, pixels)});

  // P3P seeds over a few spread triples; covers n < 6 and coplanar layouts.
  const std::array<std::array<size_t, 3>, 4> triples{{{0, 1, 2},
                                                      {0, 1, 3},
                                                      {0, 2, 3},
                                                      {1, 2, 3}}};
  for (const auto& tri : triples) {
    std::array<Vec2, 3> px;
    std::array<Vec3, 3> pt;
    for (int i = 0; i < 3; ++i) {
      const size_t idx = tri[i] < n ? tri[i] : n - 1;
      px[i] = pixels[idx];
      pt[i] = points3d[idx];
    }
    for (const Pose& cand : p3p(px, pt, intrinsics)) {
      const double cost = reprojection_cost(cand.rot.matrix(), cand.t,
                                            intrinsics.matrix(), points3d, pixels);
      if (std::isfinite(cost)) candidates.push_back({cand.rot.matrix(), cand.t, cost});
    }
  }

  if (candidates.empty())
    fail(ErrorCode::DegenerateConfiguration, "no usable pnp initialization");

  const auto best = std::min_element(
      candidates.begin(), candidates.end(),
      [](const Candidate& l, const Candidate& r) { return l.cost < r.cost; });

  const GnResult refined = gauss_newton_pose(best->r, best->t,
                                             intrinsics.matrix(), points3d,
                                             pixels, 50);
  if (!refined.ok)
    fail(ErrorCode::SolverDiverged, "gauss-newton produced a non-finite pose");
  const double init_cost = best->cost;
  if (refined.rms * refined.rms * static_cast<double>(n) > init_cost * (1.0 + 1e-12) + 1e-300)
    fail(ErrorCode::SolverDiverged, "refinement failed to reduce the residual");

  return Pose{project_so3(refined.r), refined.t};
}

Rotation3 project_so3(const Mat3& m) {
  if (!m.allFinite()) fail(ErrorCode::InvalidArgument, "non-finite matrix");
  const Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0))
    fail(ErrorCode::RankDeficient,
         "projection onto SO(3) is ambiguous (two vanishing singular values)");
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant();
  Mat3 r = svd.matrixU() * d * svd.matrixV().transpose();
  // one re-orthonormalization pass keeps the constructor tolerance honest
  const Eigen::JacobiSVD<Mat3> svd2(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  r = svd2.matrixU() * svd2.matrixV().transpose();
  return Rotation3(r);
}

Pose average_poses(const std::vector<Pose>& poses) {
  if (poses.empty()) fail(ErrorCode::EmptyInput, "cannot average zero poses");
  Mat3 sum = Mat3::Zero();
  Vec3 t = Vec3::Zero();
  for (const Pose& p : poses) {
    sum += p.rot.matrix();
    t += p.t;
  }
  return Pose{project_so3(sum), t / static_cast<double>(poses.size())};
}

double frobenius_to_angle(double d_frob) {
  if (!std::isfinite(d_frob) || d_frob < 0.0 || d_frob > kTwoSqrt2 + 1e-6)
    fail(ErrorCode::OutOfRange, "Frobenius distance " + std::to_string(d_frob) +
                                    " outside [0, 2*sqrt(2)]");
  return 2.0 * std::asin(std::min(d_frob, kTwoSqrt2) / kTwoSqrt2);
}

}  // namespace cfp::geom3d
