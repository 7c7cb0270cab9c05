#include <doctest.h>

#include "test_util.hpp"
#include "wbstab/spatial.hpp"

using namespace wbstab;
using namespace wbstab::spatial;

TEST_CASE("vectors are ordered angular then linear") {
  const SpatialMotion v{Vec3(1, 2, 3), Vec3(4, 5, 6)};
  const Vec6 x = v.vector();
  CHECK(x[0] == 1);
  CHECK(x[3] == 4);
  const SpatialForce f = SpatialForce::from_vector(x);
  CHECK(f.moment == Vec3(1, 2, 3));
  CHECK(f.force == Vec3(4, 5, 6));
}

TEST_CASE("transform_motion") {
  test::Rng rng(1);
  SUBCASE("identity leaves motion unchanged") {
    const SpatialMotion v{rng.vec3(), rng.vec3()};
    const SpatialMotion w = transform_motion(Transform::identity(), v);
    CHECK(w.angular == v.angular);
    CHECK(w.linear == v.linear);
  }
  SUBCASE("pure translation shifts the reference point") {
    const Vec3 t(0.3, -0.2, 1.0);
    const Vec3 omega(0.5, 1.5, -2.0);
    const SpatialMotion w = transform_motion(Transform::from_translation(t), SpatialMotion{omega, Vec3::Zero()});
    CHECK((w.angular - omega).norm() == doctest::Approx(0.0));
    CHECK((w.linear - (-omega.cross(t))).norm() == doctest::Approx(0.0));
  }
  SUBCASE("power pairing is frame independent") {
    for (int i = 0; i < 100; ++i) {
      const Transform X = rng.transform();
      const SpatialMotion v{rng.vec3(), rng.vec3()};
      const SpatialForce f{rng.vec3(), rng.vec3()};
      const double p0 = dot(f, v);
      const double p1 = dot(transform_force(X, f), transform_motion(X, v));
      CHECK(std::abs(p1 - p0) <= 1e-9 * std::max(1.0, std::abs(p0)));
    }
  }
  SUBCASE("inverse round trip") {
    for (int i = 0; i < 100; ++i) {
      const Transform X = rng.transform();
      const SpatialMotion v{rng.vec3(), rng.vec3()};
      const SpatialMotion back = transform_motion(X.inverse(), transform_motion(X, v));
      CHECK((back.vector() - v.vector()).norm() <= 1e-10);
      const SpatialMotion back2 = inverse_transform_motion(X, transform_motion(X, v));
      CHECK((back2.vector() - v.vector()).norm() <= 1e-10);
    }
  }
  SUBCASE("matrix form agrees") {
    const Transform X = rng.transform();
    const SpatialMotion v{rng.vec3(), rng.vec3()};
    CHECK((motion_matrix(X) * v.vector() - transform_motion(X, v).vector()).norm() <= 1e-12);
    const SpatialForce f{rng.vec3(), rng.vec3()};
    CHECK((force_matrix(X) * f.vector() - transform_force(X, f).vector()).norm() <= 1e-12);
  }
}

TEST_CASE("transform_force") {
  test::Rng rng(2);
  SUBCASE("identity") {
    const SpatialForce f{rng.vec3(), rng.vec3()};
    CHECK(transform_force(Transform::identity(), f).vector() == f.vector());
  }
  SUBCASE("pure rotation rotates both parts") {
    const Mat3 R = rng.rotation();
    const SpatialForce f{rng.vec3(), rng.vec3()};
    const SpatialForce g = transform_force(Transform::from_rotation(R), f);
    CHECK((g.moment - R * f.moment).norm() <= 1e-12);
    CHECK((g.force - R * f.force).norm() <= 1e-12);
  }
  SUBCASE("composition") {
    for (int i = 0; i < 100; ++i) {
      const Transform X1 = rng.transform();
      const Transform X2 = rng.transform();
      const SpatialForce f{rng.vec3(), rng.vec3()};
      const Vec6 a = transform_force(X1 * X2, f).vector();
      const Vec6 b = transform_force(X1, transform_force(X2, f)).vector();
      CHECK((a - b).norm() <= 1e-10 * std::max(1.0, a.norm()));
    }
  }
}

TEST_CASE("inertia_apply") {
  test::Rng rng(3);
  SUBCASE("zero acceleration gives zero wrench") {
    const SpatialInertia I = rng.inertia();
    CHECK(inertia_apply(I, SpatialMotion{}).vector().norm() == 0.0);
  }
  SUBCASE("point mass at the origin obeys Newton's law") {
    const SpatialInertia I{2.5, Vec3::Zero(), Mat3::Zero()};
    const Vec3 a(1.0, -2.0, 0.5);
    const SpatialForce f = inertia_apply(I, SpatialMotion{Vec3::Zero(), a});
    CHECK((f.force - 2.5 * a).norm() <= 1e-15);
    CHECK(f.moment.norm() <= 1e-15);
  }
  SUBCASE("quadratic form is nonnegative and the bilinear form symmetric") {
    for (int i = 0; i < 100; ++i) {
      const SpatialInertia I = rng.inertia();
      REQUIRE(I.valid());
      const SpatialMotion a{rng.vec3(), rng.vec3()};
      const SpatialMotion b{rng.vec3(), rng.vec3()};
      CHECK(dot(inertia_apply(I, a), a) >= 0.0);
      const double ab = dot(inertia_apply(I, a), b);
      const double ba = dot(inertia_apply(I, b), a);
      CHECK(std::abs(ab - ba) <= 1e-10 * std::max(1.0, std::abs(ab)));
    }
  }
  SUBCASE("transformed inertia agrees with the congruence X^T I X") {
    const SpatialInertia I = rng.inertia();
    const Transform X = rng.transform();
    // Pose of B in A; motion A->B is the inverse motion transform.
    const Mat6 XBA = motion_matrix(X.inverse());
    const Mat6 expected = XBA.transpose() * I.matrix() * XBA;
    CHECK((I.transformed(X).matrix() - expected).norm() <= 1e-10 * expected.norm());
  }
  SUBCASE("invalid inertias are rejected") {
    CHECK_FALSE(SpatialInertia{-1.0, Vec3::Zero(), Mat3::Identity()}.valid());
    // rotational inertia too small for the mass offset
    CHECK_FALSE(SpatialInertia{1.0, Vec3(1.0, 0, 0), Mat3::Identity() * 0.1}.valid());
  }
}

TEST_CASE("rotation helpers") {
  test::Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const Vec3 w = rng.vec3(1.5);
    CHECK((log_so3(exp_so3(w)) - w).norm() <= 1e-10);
  }
  const Mat3 R = rpy_to_rotation(0.1, -0.2, 0.3);
  CHECK((rotation_to_rpy(R) - Vec3(0.1, -0.2, 0.3)).norm() <= 1e-12);
  CHECK(Transform::from_rotation(R).valid());
  Transform bad;
  bad.rotation(0, 0) = 1.1;
  CHECK_FALSE(bad.valid());
}
