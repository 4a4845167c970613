#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "errors.hpp"

namespace cfp::geom3d {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec12 = Eigen::Matrix<double, 12, 1>;

inline constexpr double kRotationTol = 1e-9;
inline constexpr double kTwoSqrt2 = 2.8284271247461902909;  // max Frobenius distance on SO(3)

// Proper rotation. Construction rejects matrices that are not orthonormal
// with determinant +1 within 1e-9.
class Rotation3 {
 public:
  Rotation3() : m_(Mat3::Identity()) {}
  explicit Rotation3(const Mat3& m);

  const Mat3& matrix() const { return m_; }

  static Rotation3 identity() { return Rotation3(); }
  static Rotation3 from_axis_angle(const Vec3& axis, double angle_rad);

  double geodesic_angle_to(const Rotation3& other) const;
  double frobenius_distance_to(const Rotation3& other) const;

 private:
  Mat3 m_;
};

struct Pose {
  Rotation3 rot;
  Vec3 t = Vec3::Zero();
};

// s = [vec(R); t] with column-major vec: the columns of R stacked. With this
// convention (Y^T (x) P) vec(R) = P R Y, which is what the pose uncertainty
// set construction relies on. All modules share it.
Vec12 pose_to_vector(const Pose& pose);
Pose vector_to_pose(const Vec12& s);

// Upper-triangular pinhole intrinsics (fx, fy, cx, cy, skew), pixels.
class CameraIntrinsics {
 public:
  CameraIntrinsics(double fx, double fy, double cx, double cy,
                   double skew = 0.0);
  explicit CameraIntrinsics(const Mat3& p);

  const Mat3& matrix() const { return p_; }
  double fx() const { return p_(0, 0); }
  double fy() const { return p_(1, 1); }
  double cx() const { return p_(0, 2); }
  double cy() const { return p_(1, 2); }
  double skew() const { return p_(0, 1); }

 private:
  Mat3 p_;
};

// 3D keypoints of one object in its own frame, meters.
struct ObjectModel {
  std::string object_id;
  std::vector<Vec3> keypoints3d;

  size_t keypoint_count() const { return keypoints3d.size(); }
};

// Validates K >= 4 and pairwise-distinct keypoints.
ObjectModel make_object_model(std::string object_id, std::vector<Vec3> pts);

// Pinhole projection of a 3D point (object frame) to pixels.
// Throws NonPositiveDepth if the transformed point is not in front of the
// camera.
Vec2 project(const Pose& pose, const CameraIntrinsics& intrinsics,
             const Vec3& point3d);

// Depth of the transformed point along the camera axis, i.e. the third
// component of P (R Y + t).
double projected_depth(const Pose& pose, const CameraIntrinsics& intrinsics,
                       const Vec3& point3d);

// Minimal three-point pose solver (quartic-in-cosines formulation, companion
// matrix roots). Returns up to four poses; each reprojects the three inputs
// within 1e-6 px and has positive depths. Collinear points or a rootless
// quartic yield an empty list.
std::vector<Pose> p3p(const std::array<Vec2, 3>& pixels,
                      const std::array<Vec3, 3>& points3d,
                      const CameraIntrinsics& intrinsics);

// Non-minimal solver: DLT initialization (P3P-seeded below six points)
// followed by Gauss-Newton on the reprojection error, max 50 iterations,
// step tolerance 1e-12. Throws SolverDiverged if refinement cannot reduce
// the residual.
Pose pnp(const std::vector<Vec2>& pixels, const std::vector<Vec3>& points3d,
         const CameraIntrinsics& intrinsics);

// Nearest rotation in Frobenius norm: m = U S V^T maps to
// U diag(1, 1, det(U V^T)) V^T. Throws RankDeficient when the projection is
// ambiguous (two vanishing singular values).
Rotation3 project_so3(const Mat3& m);

// Chordal rotation mean (SO(3) projection of the summed matrices) and
// arithmetic translation mean.
Pose average_poses(const std::vector<Pose>& poses);

// Inverse of ||R1 - R2||_F = 2*sqrt(2)*sin(theta/2). Input is clamped to the
// arcsin domain; values outside [0, 2*sqrt(2) + 1e-6] are rejected.
double frobenius_to_angle(double d_frob);

}  // namespace cfp::geom3d
