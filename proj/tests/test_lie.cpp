// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0

#include "gsopt/lie.hpp"

#include "test_util.hpp"

#include <doctest.h>

using namespace gsopt;
using gsopt::testing::central_diff;
using gsopt::testing::random_pose;

namespace {

Tangent6 random_tangent(Rng& rng, Scalar max_angle) {
  Vec3 axis = rng.normal3().normalized();
  Tangent6 tau;
  tau.head<3>() = Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
  tau.tail<3>() = rng.uniform(0.0, max_angle) * axis;
  return tau;
}

}  // namespace

TEST_CASE("se3_exp maps zero to identity") {
  Se3Pose pose = se3_exp(Tangent6::Zero());
  CHECK((pose.rotation - Mat3::Identity()).norm() == 0.0);
  CHECK(pose.translation.norm() == 0.0);
}

TEST_CASE("se3_exp quarter turn about z maps x-axis to y-axis") {
  Tangent6 tau = Tangent6::Zero();
  tau(5) = M_PI / 2.0;
  Se3Pose pose = se3_exp(tau);
  Vec3 mapped = pose.act(Vec3(1, 0, 0));
  CHECK((mapped - Vec3(0, 1, 0)).norm() < 1e-14);
  CHECK(pose.translation.norm() < 1e-14);
}

TEST_CASE("log(exp(tau)) round trip over random tangents") {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    Tangent6 tau = random_tangent(rng, M_PI - 1e-3);
    Tangent6 back = se3_log(se3_exp(tau));
    CHECK((back - tau).norm() < 1e-9);
  }
}

TEST_CASE("exp(log(T)) round trip over random poses") {
  Rng rng(12);
  for (int i = 0; i < 500; ++i) {
    Se3Pose pose = random_pose(rng, 3.0);
    Se3Pose back = se3_exp(se3_log(pose));
    CHECK((back.rotation - pose.rotation).norm() < 1e-10);
    CHECK((back.translation - pose.translation).norm() < 1e-10);
  }
}

TEST_CASE("se3_log of identity and pure translation") {
  CHECK(se3_log(Se3Pose::identity()).norm() == 0.0);
  Se3Pose shift;
  shift.translation = Vec3(3, -1, 2);
  Tangent6 tau = se3_log(shift);
  CHECK((tau.head<3>() - Vec3(3, -1, 2)).norm() == 0.0);
  CHECK(tau.tail<3>().norm() == 0.0);
}

TEST_CASE("se3_log rejects rotations at pi") {
  Tangent6 tau = Tangent6::Zero();
  tau(3) = M_PI;
  Se3Pose pose = se3_exp(tau);
  CHECK_THROWS_AS(se3_log(pose), Error);
}

TEST_CASE("exp is continuous across the small-angle branch") {
  for (int axis = 0; axis < 3; ++axis) {
    Tangent6 lo = Tangent6::Zero();
    Tangent6 hi = Tangent6::Zero();
    lo.head<3>() = Vec3(0.3, -0.2, 0.9);
    hi.head<3>() = lo.head<3>();
    lo(3 + axis) = 1e-8 * (1.0 - 1e-6);
    hi(3 + axis) = 1e-8 * (1.0 + 1e-6);
    Se3Pose a = se3_exp(lo);
    Se3Pose b = se3_exp(hi);
    CHECK((a.rotation - b.rotation).norm() < 1e-12);
    CHECK((a.translation - b.translation).norm() < 1e-12);
  }
}

TEST_CASE("act basics") {
  Se3Pose id = Se3Pose::identity();
  CHECK((id.act(Vec3(4, 5, 6)) - Vec3(4, 5, 6)).norm() == 0.0);
  Se3Pose shift;
  shift.translation = Vec3(1, 0, 0);
  CHECK((shift.act(Vec3::Zero()) - Vec3(1, 0, 0)).norm() == 0.0);
}

TEST_CASE("jac_point_wrt_pose closed forms") {
  Mat36 at_origin = jac_point_wrt_pose(Vec3::Zero());
  CHECK((at_origin.leftCols<3>() - Mat3::Identity()).norm() == 0.0);
  CHECK(at_origin.rightCols<3>().norm() == 0.0);

  // -[e_z]x: columns are (0,-1,0), (1,0,0), (0,0,0).
  Mat36 at_z = jac_point_wrt_pose(Vec3(0, 0, 1));
  Mat3 want;
  want << 0, 1, 0,
          -1, 0, 0,
          0, 0, 0;
  CHECK((at_z.rightCols<3>() - want).norm() == 0.0);
}

TEST_CASE("jac_point_wrt_pose matches central differences of act(exp(tau) T, p)") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    Se3Pose pose = random_pose(rng);
    Vec3 p = 2.0 * rng.normal3();
    Vec3 y = pose.act(p);
    Mat36 jac = jac_point_wrt_pose(y);
    for (int k = 0; k < 6; ++k) {
      for (int row = 0; row < 3; ++row) {
        Scalar fd = central_diff([&](Scalar h) {
          Tangent6 tau = Tangent6::Zero();
          tau(k) = h;
          return (se3_exp(tau) * pose).act(p)(row);
        });
        CHECK(gsopt::testing::rel_error(jac(row, k), fd, 1e-3) < 1e-5);
      }
    }
  }
}

TEST_CASE("jac_inverse matches the Lie finite difference") {
  Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    Se3Pose pose = random_pose(rng);
    Mat66 jac = jac_inverse(pose);
    for (int k = 0; k < 6; ++k) {
      for (int row = 0; row < 6; ++row) {
        Scalar fd = central_diff([&](Scalar h) {
          Tangent6 tau = Tangent6::Zero();
          tau(k) = h;
          Se3Pose perturbed_inv = (se3_exp(tau) * pose).inverse();
          return se3_log(perturbed_inv * pose)(row);
        });
        CHECK(gsopt::testing::rel_error(jac(row, k), fd, 1e-3) < 1e-5);
      }
    }
  }
}

TEST_CASE("jac_inverse closed forms") {
  CHECK((jac_inverse(Se3Pose::identity()) + Mat66::Identity()).norm() == 0.0);

  // Pure rotation: off-diagonal blocks vanish, diagonal carries the inverse
  // rotation.
  Rng rng(23);
  Se3Pose pose = random_pose(rng);
  pose.translation.setZero();
  Mat66 jac = jac_inverse(pose);
  CHECK(jac.topRightCorner<3, 3>().norm() < 1e-12);
  CHECK(jac.bottomLeftCorner<3, 3>().norm() == 0.0);
  CHECK((jac.topLeftCorner<3, 3>() + pose.rotation.transpose()).norm() < 1e-12);
  CHECK((jac.bottomRightCorner<3, 3>() + pose.rotation.transpose()).norm() < 1e-12);
}

TEST_CASE("jac_rotation_wrt_pose closed forms and finite differences") {
  auto at_identity = jac_rotation_wrt_pose(Mat3::Identity());
  for (int i = 0; i < 3; ++i) {
    Vec3 e = Vec3::Zero();
    e(i) = 1.0;
    CHECK((at_identity[i] - skew(e)).norm() == 0.0);
  }

  Rng rng(24);
  for (int trial = 0; trial < 100; ++trial) {
    Mat3 rot = random_pose(rng).rotation;
    auto blocks = jac_rotation_wrt_pose(rot);
    for (int i = 0; i < 3; ++i) {
      CHECK(blocks[i].row(i).norm() == 0.0);  // [e_i]x has a zero i-th row
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
          Scalar fd = central_diff([&](Scalar h) {
            Vec3 omega = Vec3::Zero();
            omega(i) = h;
            return (so3_exp(omega) * rot)(r, c);
          });
          CHECK(gsopt::testing::rel_error(blocks[i](r, c), fd, 1e-3) < 1e-5);
        }
      }
    }
  }
}

TEST_CASE("group axioms") {
  Rng rng(25);
  Se3Pose a = random_pose(rng);
  CHECK(((a * Se3Pose::identity()).rotation - a.rotation).norm() == 0.0);
  CHECK(((a * Se3Pose::identity()).translation - a.translation).norm() == 0.0);

  for (int i = 0; i < 200; ++i) {
    Se3Pose t = random_pose(rng);
    Se3Pose should_be_id = t.inverse() * t;
    CHECK((should_be_id.rotation - Mat3::Identity()).norm() < 1e-12);
    CHECK(should_be_id.translation.norm() < 1e-12);

    Se3Pose b = random_pose(rng);
    Se3Pose c = random_pose(rng);
    Se3Pose left = (t * b) * c;
    Se3Pose right = t * (b * c);
    CHECK((left.rotation - right.rotation).norm() < 1e-12);
    CHECK((left.translation - right.translation).norm() < 1e-12);
  }
}

TEST_CASE("left-perturbation consistency: d/dt log(exp(tv) T T^-1) = v") {
  Rng rng(26);
  for (int trial = 0; trial < 50; ++trial) {
    Se3Pose pose = random_pose(rng);
    Tangent6 v;
    for (int k = 0; k < 6; ++k) v(k) = rng.uniform(-1, 1);
    for (int row = 0; row < 6; ++row) {
      Scalar fd = central_diff([&](Scalar h) {
        return se3_log(se3_exp(Tangent6(h * v)) * pose * pose.inverse())(row);
      });
      CHECK(gsopt::testing::rel_error(fd, v(row), 1e-3) < 1e-5);
    }
  }
}

TEST_CASE("orthonormalize keeps long update chains on the manifold") {
  Rng rng(27);
  Se3Pose pose = Se3Pose::identity();
  for (int i = 0; i < 20000; ++i) {
    Tangent6 tau;
    for (int k = 0; k < 6; ++k) tau(k) = 1e-3 * rng.uniform(-1, 1);
    pose = se3_exp(tau) * pose;
    if (i % 64 == 0) pose.orthonormalize();
  }
  pose.orthonormalize();
  Mat3 gram = pose.rotation.transpose() * pose.rotation;
  CHECK((gram - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("flatten round trip") {
  Rng rng(28);
  Se3Pose pose = random_pose(rng);
  auto flat = pose.flatten();
  Se3Pose back = Se3Pose::from_flat(flat.data());
  CHECK((back.rotation - pose.rotation).norm() == 0.0);
  CHECK((back.translation - pose.translation).norm() == 0.0);
}
