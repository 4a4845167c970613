#pragma once

// Test-only reference implementations. Everything here is deliberately slow
// and independent of the library code paths it is used to check.

#include <Eigen/Dense>
#include <vector>

#include "geom3d.hpp"
#include "rng.hpp"

namespace cfp::oracle {

// Random rotation built from a normalized quaternion drawn with the given rng.
geom3d::Rotation3 random_rotation(CounterRng& rng);

// Brute-force search over an SO(3) grid (Fibonacci axes x angle steps plus
// the identity) for the rotation minimizing ||m - R||_F. Returns the best
// grid rotation; resolution_rad receives an upper bound on the grid spacing.
geom3d::Rotation3 grid_nearest_rotation(const Eigen::Matrix3d& m,
                                        int axis_count, int angle_count,
                                        double* resolution_rad);

// Plain homogeneous multiply-and-divide projection, kept free of the library
// projection path.
Eigen::Vector2d project_reference(const Eigen::Matrix3d& r,
                                  const Eigen::Vector3d& t,
                                  const Eigen::Matrix3d& intrinsics,
                                  const Eigen::Vector3d& y);

// Eight perturbed cuboid corners, the K = 8 layout used by the synthetic
// scenes in the test suites.
geom3d::ObjectModel test_box_model();

// A pose whose keypoints all project in front of the camera around depth
// 1.0-2.0 m, drawn with the given rng.
geom3d::Pose random_object_pose(CounterRng& rng);

}  // namespace cfp::oracle
