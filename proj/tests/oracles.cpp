#include "oracles.hpp"

#include <cmath>

namespace cfp::oracle {

geom3d::Rotation3 random_rotation(CounterRng& rng) {
  Eigen::Vector4d q;
  for (int i = 0; i < 4; ++i) q(i) = rng.next_normal();
  q.normalize();
  return geom3d::Rotation3(
      Eigen::Quaterniond(q(0), q(1), q(2), q(3)).normalized().toRotationMatrix());
}

geom3d::Rotation3 grid_nearest_rotation(const Eigen::Matrix3d& m,
                                        int axis_count, int angle_count,
                                        double* resolution_rad) {
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  double best_cost = (m - Eigen::Matrix3d::Identity()).squaredNorm();
  Eigen::Matrix3d best = Eigen::Matrix3d::Identity();
  for (int i = 0; i < axis_count; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / axis_count;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = 2.0 * M_PI * std::fmod(i / golden, 1.0);
    const Eigen::Vector3d axis(rho * std::cos(phi), rho * std::sin(phi), z);
    for (int j = 1; j <= angle_count; ++j) {
      const double ang = M_PI * j / angle_count;
      const Eigen::Matrix3d r = Eigen::AngleAxisd(ang, axis).toRotationMatrix();
      const double cost = (m - r).squaredNorm();
      if (cost < best_cost) {
        best_cost = cost;
        best = r;
      }
    }
  }
  if (resolution_rad) {
    // axis spacing ~ sqrt(4/axis_count) on the sphere, angle spacing pi/angle_count
    *resolution_rad = 2.0 * std::sqrt(4.0 / axis_count) + M_PI / angle_count;
  }
  return geom3d::Rotation3(best);
}

geom3d::ObjectModel test_box_model() {
  return geom3d::make_object_model(
      "test-box",
      {Eigen::Vector3d(0.113, 0.073, 0.124), Eigen::Vector3d(0.091, 0.091, -0.114),
       Eigen::Vector3d(0.105, -0.071, 0.108), Eigen::Vector3d(0.089, -0.086, -0.112),
       Eigen::Vector3d(-0.093, 0.092, 0.129), Eigen::Vector3d(-0.090, 0.067, -0.125),
       Eigen::Vector3d(-0.108, -0.074, 0.131), Eigen::Vector3d(-0.088, -0.072, -0.129)});
}

geom3d::Pose random_object_pose(CounterRng& rng) {
  geom3d::Pose pose;
  pose.rot = random_rotation(rng);
  pose.t = Eigen::Vector3d(0.2 * (rng.next_double() - 0.5),
                           0.2 * (rng.next_double() - 0.5),
                           1.0 + rng.next_double());
  return pose;
}

Eigen::Vector2d project_reference(const Eigen::Matrix3d& r,
                                  const Eigen::Vector3d& t,
                                  const Eigen::Matrix3d& intrinsics,
                                  const Eigen::Vector3d& y) {
  Eigen::Vector4d hom(y(0), y(1), y(2), 1.0);
  Eigen::Matrix<double, 3, 4> rt;
  rt.leftCols<3>() = r;
  rt.col(3) = t;
  const Eigen::Vector3d g = intrinsics * (rt * hom);
  return Eigen::Vector2d(g(0) / g(2), g(1) / g(2));
}

}  // namespace cfp::oracle
