#include "mobileposer/rotmath.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "mobileposer/error.hpp"

namespace mobileposer {

namespace {
constexpr double kDegenerate = 1e-8;
}

Rot6D rot6d_from_matrix(const RotMat& rotation) {
  Rot6D out;
  for (int i = 0; i < 3; ++i) {
    out.r[i] = rotation(i, 0);
    out.r[3 + i] = rotation(i, 1);
  }
  return out;
}

RotMat matrix_from_rot6d(const Rot6D& r6) {
  return matrix_from_rot6d(std::span<const double, 6>(r6.r));
}

RotMat matrix_from_rot6d(std::span<const double, 6> r6) {
  const Vec3 a1(r6[0], r6[1], r6[2]);
  const Vec3 a2(r6[3], r6[4], r6[5]);
  const double n1 = a1.norm();
  if (!(n1 >= kDegenerate)) fail(ErrorCode::kDegenerateInput, "6D rotation: first column is near zero");
  const Vec3 c1 = a1 / n1;
  const Vec3 u = a2 - c1.dot(a2) * c1;
  const double n2 = u.norm();
  if (!(n2 >= kDegenerate)) fail(ErrorCode::kDegenerateInput, "6D rotation: columns are parallel or second is near zero");
  const Vec3 c2 = u / n2;
  RotMat out;
  out.col(0) = c1;
  out.col(1) = c2;
  out.col(2) = c1.cross(c2);
  return out;
}

void matrix_from_rot6d_backward(std::span<const double, 6> r6, const RotMat& grad_rot,
                                std::span<double, 6> grad6) {
  const Vec3 a1(r6[0], r6[1], r6[2]);
  const Vec3 a2(r6[3], r6[4], r6[5]);
  const double n1 = a1.norm();
  const Vec3 c1 = a1 / n1;
  const double proj = c1.dot(a2);
  const Vec3 u = a2 - proj * c1;
  const double n2 = u.norm();
  const Vec3 c2 = u / n2;

  Vec3 g1 = grad_rot.col(0);
  Vec3 g2 = grad_rot.col(1);
  const Vec3 g3 = grad_rot.col(2);

  // c3 = c1 x c2
  g1 += c2.cross(g3);
  g2 += g3.cross(c1);

  // c2 = u / |u|
  const Vec3 gu = (g2 - c2 * c2.dot(g2)) / n2;

  // u = a2 - (c1.a2) c1
  const Vec3 ga2 = gu - c1 * c1.dot(gu);
  g1 += -a2 * c1.dot(gu) - proj * gu;

  // c1 = a1 / |a1|
  const Vec3 ga1 = (g1 - c1 * c1.dot(g1)) / n1;

  for (int i = 0; i < 3; ++i) {
    grad6[i] += ga1[i];
    grad6[3 + i] += ga2[i];
  }
}

double geodesic_angle(const RotMat& a, const RotMat& b) {
  // atan2 of the skew and symmetric parts; acos loses precision near zero.
  const RotMat r = a.transpose() * b;
  const Vec3 axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * axis.norm(), 0.5 * (r.trace() - 1.0)) * 180.0 / std::numbers::pi;
}

RotMat rot_x(double radians) { return Eigen::AngleAxisd(radians, Vec3::UnitX()).toRotationMatrix(); }
RotMat rot_y(double radians) { return Eigen::AngleAxisd(radians, Vec3::UnitY()).toRotationMatrix(); }
RotMat rot_z(double radians) { return Eigen::AngleAxisd(radians, Vec3::UnitZ()).toRotationMatrix(); }

double heading_yaw(const RotMat& rotation) {
  const double x = rotation(0, 2);
  const double z = rotation(2, 2);
  if (std::hypot(x, z) < 1e-12) return 0.0;
  return std::atan2(x, z);
}

RotMat project_to_rotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

bool is_rotation(const RotMat& rotation, double tol) {
  if (!rotation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

}  // namespace mobileposer
