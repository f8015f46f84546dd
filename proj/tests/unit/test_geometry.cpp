#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"

#include "support.hpp"
#include "synreg/error.hpp"
#include "synreg/geometry.hpp"

using namespace synreg;
using synreg::test::quaternion_angle;
using synreg::test::quaternion_matrix;
using synreg::test::random_quaternion;
using synreg::test::random_rotation;

namespace {

Mat3 axis_angle(const Vec3& axis, double angle) { return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix(); }

Transform random_transform(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  return Transform(random_rotation(rng), Vec3(u(rng), u(rng), u(rng)));
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("r6 of the canonical basis is the identity") {
  const Rotation r = r6_to_rotation(Rot6{{1, 0, 0, 0, 1, 0}});
  CHECK((r.matrix() - Mat3::Identity()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("r6 recovery removes scale and skew") {
  const Mat3 m = r6_to_rotation(Rot6{{2, 0, 0, 1, 1, 0}}).matrix();
  // Hand Gram-Schmidt: c1 = (1,0,0); c2 - (c1.c2)c1 = (0,1,0); c3 = c1 x c2.
  CHECK((m - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("r6 matches a QR orthonormalization oracle") {
  std::mt19937 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    Rot6 r6;
    for (auto& v : r6.v) v = n(rng);
    Eigen::Matrix<double, 3, 2> a;
    a.col(0) = r6.first();
    a.col(1) = r6.second();
    Eigen::HouseholderQR<Eigen::Matrix<double, 3, 2>> qr(a);
    Mat3 q = qr.householderQ();
    const Eigen::Matrix2d rr = qr.matrixQR().topRows<2>().triangularView<Eigen::Upper>();
    for (int c = 0; c < 2; ++c)
      if (rr(c, c) < 0) q.col(c) = -q.col(c);
    q.col(2) = q.col(0).cross(q.col(1));
    CHECK((r6_to_rotation(r6).matrix() - q).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("degenerate r6 inputs are rejected") {
  CHECK_THROWS_AS(r6_to_rotation(Rot6{{0, 0, 0, 0, 1, 0}}), DegenerateInput);
  CHECK_THROWS_AS(r6_to_rotation(Rot6{{1, 0, 0, 3, 0, 0}}), DegenerateInput);
  CHECK_THROWS_AS(r6_to_rotation(Rot6{{1, 0, 0, 0, 0, 0}}), DegenerateInput);
}

TEST_CASE("r6 recovery always yields a proper rotation") {
  std::mt19937 rng(11);
  std::normal_distribution<double> n(0.0, 10.0);
  for (int i = 0; i < 2000; ++i) {
    Rot6 r6;
    for (auto& v : r6.v) v = n(rng);
    const Mat3 m = r6_to_rotation(r6).matrix();
    CHECK(Rotation::orthonormality_error(m) < 1e-9);
    CHECK(m.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("rotation_to_r6 reads the first two columns") {
  CHECK(rotation_to_r6(Rotation()) == Rot6{{1, 0, 0, 0, 1, 0}});
  const Rot6 r6 = rotation_to_r6(Rotation::from_matrix(axis_angle(Vec3::UnitZ(), std::numbers::pi / 2)));
  const std::array<double, 6> expected{0, 1, 0, -1, 0, 0};
  for (int k = 0; k < 6; ++k) CHECK(r6.v[k] == doctest::Approx(expected[k]).epsilon(1e-15));
}

TEST_CASE("r6 round trip is the identity on random rotations") {
  std::mt19937 rng(1);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Rotation r = random_rotation(rng);
    worst = std::max(worst, (r6_to_rotation(rotation_to_r6(r)).matrix() - r.matrix()).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("from_matrix rejects non-rotations") {
  CHECK_THROWS_AS(Rotation::from_matrix(2.0 * Mat3::Identity()), ValidationError);
  Mat3 reflection = Mat3::Identity();
  reflection(2, 2) = -1.0;
  CHECK_THROWS_AS(Rotation::from_matrix(reflection), ValidationError);
  Mat3 noisy = Mat3::Identity();
  noisy(0, 1) = 1e-6;
  CHECK(Rotation::nearest(noisy).matrix().isApprox(Mat3::Identity(), 1e-5));
}

TEST_CASE("geodesic distance examples") {
  const Rotation id;
  CHECK(rotation_geodesic_distance(id, id) == 0.0);
  const Rotation half_x = Rotation::from_matrix(Eigen::Vector3d(1, -1, -1).asDiagonal().toDenseMatrix());
  CHECK(rotation_geodesic_distance(id, half_x) == doctest::Approx(std::numbers::pi).epsilon(1e-12));
}

TEST_CASE("geodesic distance agrees with the quaternion oracle") {
  std::mt19937 rng(5);
  for (int i = 0; i < 500; ++i) {
    const auto qa = random_quaternion(rng), qb = random_quaternion(rng);
    const Rotation a = Rotation::from_matrix(quaternion_matrix(qa));
    const Rotation b = Rotation::from_matrix(quaternion_matrix(qb));
    const double d = rotation_geodesic_distance(a, b);
    CHECK(std::abs(d - quaternion_angle(qa, qb)) < 1e-6);
    CHECK(d == rotation_geodesic_distance(b, a));
    CHECK(d >= 0.0);
    CHECK(d <= std::numbers::pi);
  }
}

TEST_CASE("geodesic distance is zero only for equal rotations") {
  std::mt19937 rng(6);
  for (int i = 0; i < 100; ++i) {
    const Rotation r = random_rotation(rng);
    CHECK(rotation_geodesic_distance(r, r) < 1e-7);
    const Rotation s = r * Rotation::about_axis(Vec3::UnitY(), 1e-3);
    CHECK(rotation_geodesic_distance(r, s) == doctest::Approx(1e-3).epsilon(1e-4));
  }
}

TEST_CASE("frobenius distance") {
  const Rotation id;
  CHECK(rotation_frobenius_sq(id, id) == 0.0);
  const Rotation half_z = Rotation::from_matrix(axis_angle(Vec3::UnitZ(), std::numbers::pi));
  CHECK(rotation_frobenius_sq(id, half_z) == doctest::Approx(8.0).epsilon(1e-12));

  std::mt19937 rng(8);
  for (int i = 0; i < 50; ++i) {
    const Rotation a = random_rotation(rng), b = random_rotation(rng);
    double sum = 0.0;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) sum += std::pow(b.matrix()(r, c) - a.matrix()(r, c), 2);
    CHECK(rotation_frobenius_sq(a, b) == doctest::Approx(sum).epsilon(1e-12));
  }
}

TEST_CASE("translation error") {
  const auto same = translation_error(Vec3(1, 2, 3), Vec3(1, 2, 3));
  CHECK(same.total == 0.0);
  CHECK(same.per_axis == Vec3::Zero());

  const auto e = translation_error(Vec3::Zero(), Vec3(3, 4, 0));
  CHECK(e.total == doctest::Approx(5.0));
  CHECK(e.per_axis == Vec3(3, 4, 0));

  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int i = 0; i < 50; ++i) {
    const Vec3 a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng));
    const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
    const auto r = translation_error(a, b);
    CHECK(r.total == doctest::Approx(std::sqrt(dx * dx + dy * dy + dz * dz)).epsilon(1e-12));
    CHECK(r.per_axis.x() == doctest::Approx(std::abs(dx)));
    CHECK(r.per_axis.y() == doctest::Approx(std::abs(dy)));
    CHECK(r.per_axis.z() == doctest::Approx(std::abs(dz)));
  }
}

TEST_CASE("transform bottom row is exact") {
  std::mt19937 rng(10);
  Transform acc;
  for (int i = 0; i < 20; ++i) acc = acc * random_transform(rng);
  CHECK(acc.matrix().row(3) == Eigen::RowVector4d(0, 0, 0, 1));
}

TEST_CASE("compose_pose examples") {
  std::mt19937 rng(12);
  const Pose p{random_rotation(rng), Vec3(1, 2, 3)};
  const Pose same = compose_pose(Transform(), p);
  CHECK(same.rotation.matrix() == p.rotation.matrix());
  CHECK(same.translation == p.translation);

  const Pose moved = compose_pose(Transform::translation(Vec3(4, 5, 6)), Pose{});
  CHECK(moved.translation == Vec3(4, 5, 6));
  CHECK(moved.rotation.matrix() == Mat3::Identity());
}

TEST_CASE("compose_pose matches the 4x4 product") {
  std::mt19937 rng(13);
  for (int i = 0; i < 100; ++i) {
    const Transform t = random_transform(rng);
    const Transform pt = random_transform(rng);
    const Pose p{pt.rotation(), pt.offset()};
    Mat4 pm = Mat4::Identity();
    pm.topLeftCorner<3, 3>() = p.rotation.matrix();
    pm.topRightCorner<3, 1>() = p.translation;
    const Mat4 expected = t.matrix() * pm;
    CHECK((compose_pose(t, p).matrix() - expected).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("compose_pose is associative") {
  std::mt19937 rng(14);
  for (int i = 0; i < 100; ++i) {
    const Transform a = random_transform(rng), b = random_transform(rng), c = random_transform(rng);
    const Pose p{c.rotation(), c.offset()};
    const Pose lhs = compose_pose(a, compose_pose(b, p));
    const Pose rhs = compose_pose(a * b, p);
    CHECK((lhs.matrix() - rhs.matrix()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("centroid-centered transform") {
  const Transform id = centroid_centered_transform(Rotation(), Vec3(3, -2, 5), Vec3::Zero());
  CHECK((id.matrix() - Mat4::Identity()).cwiseAbs().maxCoeff() < 1e-15);

  std::mt19937 rng(15);
  std::uniform_real_distribution<double> u(-300, 300);
  for (int i = 0; i < 100; ++i) {
    const Vec3 c(u(rng), u(rng), u(rng));
    const Transform t = centroid_centered_transform(random_rotation(rng), c, Vec3::Zero());
    CHECK((t.apply(c) - c).norm() < 1e-9);
  }

  const Transform quarter =
      centroid_centered_transform(Rotation::about_axis(Vec3::UnitZ(), std::numbers::pi / 2), Vec3(1, 0, 0), Vec3::Zero());
  CHECK((quarter.apply(Vec3(2, 0, 0)) - Vec3(1, 1, 0)).norm() < 1e-12);

  const Transform jittered = centroid_centered_transform(Rotation(), Vec3(1, 1, 1), Vec3(0, 0, 7));
  CHECK((jittered.apply(Vec3(1, 1, 1)) - Vec3(1, 1, 8)).norm() < 1e-12);
}

TEST_CASE("projection examples") {
  const Intrinsics k{18466.0, 19172.0, 128.0, 128.0};
  const Vec2 axis = project_point(k, Pose{}, Vec3(0, 0, 42));
  CHECK(axis.x() == 128.0);
  CHECK(axis.y() == 128.0);

  const Vec2 px = project_point(k, Pose{}, Vec3(1, 0, 100));
  CHECK(px.x() == doctest::Approx(128.0 + 184.66).epsilon(1e-12));
  CHECK(px.y() == doctest::Approx(128.0).epsilon(1e-12));

  CHECK_THROWS_AS(project_point(k, Pose{}, Vec3(0, 0, -1)), BehindCamera);
  CHECK_THROWS_AS(project_point(k, Pose{}, Vec3(1, 1, 0)), BehindCamera);
}

TEST_CASE("projection is scale consistent") {
  std::mt19937 rng(16);
  std::uniform_real_distribution<double> u(-20, 20), s(0.1, 10.0);
  const Intrinsics k{1154.0, 1198.0, 128.0, 128.0};
  for (int i = 0; i < 100; ++i) {
    const Rotation r = random_rotation(rng);
    const Vec3 v(u(rng), u(rng), u(rng));
    const Vec3 t(u(rng), u(rng), 250.0);
    const double a = s(rng);
    const Vec2 p1 = project_point(k, Pose{r, t}, v);
    const Vec2 p2 = project_point(k, Pose{r, a * t}, a * v);
    CHECK((p1 - p2).norm() < 1e-9);
  }
}

TEST_CASE("intrinsics validation") {
  CHECK_NOTHROW(Intrinsics{100, 100, 128, 128}.validate(256, 256));
  CHECK_THROWS_AS(Intrinsics({0, 100, 128, 128}).validate(256, 256), ValidationError);
  CHECK_THROWS_AS(Intrinsics({100, 100, 300, 128}).validate(256, 256), ValidationError);
}

}
