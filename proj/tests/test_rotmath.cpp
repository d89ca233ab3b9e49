#include <gtest/gtest.h>

#include "mobileposer/error.hpp"
#include "mobileposer/rotmath.hpp"
#include "test_util.hpp"

using namespace mobileposer;
using mptest::rad;

namespace {

void expect_rot6d(const Rot6D& got, std::array<double, 6> want, double tol) {
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(got.r[i], want[i], tol) << "component " << i;
}

}  // namespace

TEST(Rot6D, IdentityEncodesFirstTwoColumns) {
  expect_rot6d(rot6d_from_matrix(RotMat::Identity()), {1, 0, 0, 0, 1, 0}, 0.0);
}

TEST(Rot6D, Rz90IsColumnMajor) {
  expect_rot6d(rot6d_from_matrix(rot_z(rad(90))), {0, 1, 0, -1, 0, 0}, 1e-15);
}

TEST(Rot6D, DecodeIdentity) {
  Rot6D r;
  EXPECT_TRUE(matrix_from_rot6d(r).isApprox(RotMat::Identity(), 1e-15));
}

TEST(Rot6D, DecodeRemovesScale) {
  Rot6D r{{2, 0, 0, 0, 3, 0}};
  EXPECT_NEAR((matrix_from_rot6d(r) - RotMat::Identity()).norm(), 0.0, 1e-15);
}

TEST(Rot6D, DecodeOrthogonalizesSecondColumn) {
  Rot6D r{{1, 0, 0, 1, 1, 0}};
  EXPECT_NEAR((matrix_from_rot6d(r) - RotMat::Identity()).norm(), 0.0, 1e-15);
}

TEST(Rot6D, CollapsedColumnIsDegenerate) {
  Rot6D zero{{0, 0, 0, 0, 1, 0}};
  Rot6D parallel{{1, 0, 0, 2, 0, 0}};
  for (const auto& r : {zero, parallel}) {
    try {
      matrix_from_rot6d(r);
      FAIL() << "expected DegenerateInput";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kDegenerateInput);
    }
  }
}

TEST(Rot6D, RoundTripThousandRandomRotations) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const RotMat r = mptest::random_rotation(rng);
    const RotMat back = matrix_from_rot6d(rot6d_from_matrix(r));
    ASSERT_LT((back - r).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Rot6D, DecodedRandomVectorsAreRotations) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    Rot6D r;
    for (auto& x : r.r) x = n(rng);
    const RotMat m = matrix_from_rot6d(r);
    ASSERT_LT((m.transpose() * m - RotMat::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    ASSERT_NEAR(m.determinant(), 1.0, 1e-9);
  }
}

TEST(Rot6D, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::array<double, 6> r6;
    for (auto& x : r6) x = n(rng);
    RotMat w;
    for (int i = 0; i < 9; ++i) w(i / 3, i % 3) = n(rng);
    // L = <W, R(r6)>, so dL/dR = W.
    auto loss = [&](const std::array<double, 6>& v) { return (w.array() * matrix_from_rot6d(v).array()).sum(); };
    std::array<double, 6> grad{};
    matrix_from_rot6d_backward(r6, w, grad);
    for (int k = 0; k < 6; ++k) {
      auto hi = r6, lo = r6;
      hi[k] += 1e-6;
      lo[k] -= 1e-6;
      const double numeric = (loss(hi) - loss(lo)) / 2e-6;
      EXPECT_NEAR(grad[k], numeric, 1e-6 * std::max(1.0, std::abs(numeric)));
    }
  }
}

TEST(Geodesic, IdentityPairIsZero) { EXPECT_EQ(geodesic_angle(RotMat::Identity(), RotMat::Identity()), 0.0); }

TEST(Geodesic, QuarterTurnIsNinety) {
  EXPECT_NEAR(geodesic_angle(RotMat::Identity(), rot_z(rad(90))), 90.0, 1e-12);
}

TEST(Geodesic, SmallAngleHalfDegree) {
  std::mt19937_64 rng(4);
  const RotMat r = mptest::random_rotation(rng);
  EXPECT_NEAR(geodesic_angle(r, r * rot_x(rad(0.5))), 0.5, 1e-6);
}

TEST(Geodesic, HalfTurn) {
  EXPECT_NEAR(geodesic_angle(RotMat::Identity(), rot_y(M_PI)), 180.0, 1e-9);
}

TEST(Geodesic, SymmetricAndTriangleInequality) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    const RotMat a = mptest::random_rotation(rng);
    const RotMat b = mptest::random_rotation(rng);
    const RotMat c = mptest::random_rotation(rng);
    ASSERT_NEAR(geodesic_angle(a, b), geodesic_angle(b, a), 1e-9);
    ASSERT_LE(geodesic_angle(a, c), geodesic_angle(a, b) + geodesic_angle(b, c) + 1e-6);
  }
}

TEST(Geodesic, MatchesAngleAxisOracle) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 200; ++i) {
    const RotMat a = mptest::random_rotation(rng);
    const RotMat b = mptest::random_rotation(rng);
    const double oracle = mptest::deg(Eigen::AngleAxisd(a.transpose() * b).angle());
    ASSERT_NEAR(geodesic_angle(a, b), oracle, 1e-9);
  }
}

TEST(Heading, YawOfPureYRotation) {
  for (double y : {-2.0, -0.5, 0.0, 0.7, 3.0}) EXPECT_NEAR(heading_yaw(rot_y(y)), y, 1e-12);
  // Pitch and roll about the heading do not change it.
  EXPECT_NEAR(heading_yaw(rot_y(0.4) * rot_x(0.3)), 0.4, 1e-12);
}

TEST(Projection, NearestRotationOfPerturbedMatrix) {
  std::mt19937_64 rng(7);
  const RotMat r = mptest::random_rotation(rng);
  const RotMat p = project_to_rotation(1.3 * r);
  EXPECT_TRUE(is_rotation(p, 1e-12));
  EXPECT_LT((p - r).norm(), 1e-12);
}
