#pragma once

#include <array>
#include <span>

#include <Eigen/Core>

namespace mobileposer {

using Vec3 = Eigen::Vector3d;
using RotMat = Eigen::Matrix3d;

/// Continuous 6D rotation: the first two columns of a rotation matrix,
/// column-major, i.e. {R00, R10, R20, R01, R11, R21}. Checkpoints depend on
/// this layout.
struct Rot6D {
  std::array<double, 6> r{1, 0, 0, 0, 1, 0};

  Eigen::Map<const Vec3> first() const { return Eigen::Map<const Vec3>(r.data()); }
  Eigen::Map<const Vec3> second() const { return Eigen::Map<const Vec3>(r.data() + 3); }
};

Rot6D rot6d_from_matrix(const RotMat& rotation);

/// Gram-Schmidt decode. Throws DegenerateInput when either column collapses
/// below 1e-8.
RotMat matrix_from_rot6d(const Rot6D& r6);
RotMat matrix_from_rot6d(std::span<const double, 6> r6);

/// Backward pass of matrix_from_rot6d: given dL/dR, accumulates dL/d(6D)
/// into `grad6` (length 6).
void matrix_from_rot6d_backward(std::span<const double, 6> r6, const RotMat& grad_rot,
                                std::span<double, 6> grad6);

/// Angle of Ra^T Rb in degrees, in [0, 180].
double geodesic_angle(const RotMat& a, const RotMat& b);

RotMat rot_x(double radians);
RotMat rot_y(double radians);
RotMat rot_z(double radians);

/// Heading (yaw about +Y) of a rotation: the horizontal direction of its
/// local +Z axis. Returns 0 when that axis is vertical.
double heading_yaw(const RotMat& rotation);

/// Projects an arbitrary 3x3 matrix onto SO(3) (nearest rotation, SVD).
RotMat project_to_rotation(const Eigen::Matrix3d& m);

bool is_rotation(const RotMat& rotation, double tol = 1e-6);

}  // namespace mobileposer
