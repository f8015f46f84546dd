#include "synreg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/SVD>

#include "synreg/error.hpp"

namespace synreg {

double Rotation::orthonormality_error(const Mat3& m) {
  const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(m.determinant() - 1.0));
}

Rotation Rotation::from_matrix(const Mat3& m, double tol) {
  if (!m.allFinite() || orthonormality_error(m) > tol) {
    std::ostringstream os;
    os << "matrix is not a rotation (orthonormality error " << orthonormality_error(m) << ")";
    throw ValidationError(os.str());
  }
  return Rotation(m);
}

Rotation Rotation::nearest(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return Rotation(svd.matrixU() * d * svd.matrixV().transpose());
}

Rotation Rotation::about_axis(const Vec3& axis, double angle_rad) {
  return Rotation(Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix());
}

Rotation Rotation::euler_xyz(double ax, double ay, double az) {
  const Mat3 m = (Eigen::AngleAxisd(ax, Vec3::UnitX()) * Eigen::AngleAxisd(ay, Vec3::UnitY()) *
                  Eigen::AngleAxisd(az, Vec3::UnitZ()))
                     .toRotationMatrix();
  return Rotation(m);
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation.matrix();
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Mat3 Intrinsics::matrix() const {
  Mat3 k;
  k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

void Intrinsics::validate(int width, int height) const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ValidationError("intrinsics: focal lengths must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw ValidationError("intrinsics: principal point outside the image");
  }
}

Transform::Transform(const Rotation& r, const Vec3& t) : m_(Mat4::Identity()) {
  m_.topLeftCorner<3, 3>() = r.matrix();
  m_.topRightCorner<3, 1>() = t;
}

Transform Transform::operator*(const Transform& o) const {
  Mat4 m = m_ * o.m_;
  m.row(3) << 0, 0, 0, 1;
  return Transform(m);
}

Rotation r6_to_rotation(const Rot6& r6) {
  const Vec3 a = r6.first();
  const Vec3 b = r6.second();
  if (!a.allFinite() || !b.allFinite()) throw DegenerateInput("6D rotation has non-finite entries");
  const double na = a.norm();
  if (na < kDegeneracyThreshold) throw DegenerateInput("6D rotation: first column has ~zero norm");
  const Vec3 c1 = a / na;
  const Vec3 u = b - c1.dot(b) * c1;
  const double nu = u.norm();
  if (nu < kDegeneracyThreshold) throw DegenerateInput("6D rotation: columns are parallel");
  const Vec3 c2 = u / nu;
  Mat3 m;
  m.col(0) = c1;
  m.col(1) = c2;
  m.col(2) = c1.cross(c2);
  return Rotation(m);
}

Rot6 rotation_to_r6(const Rotation& r) {
  const Mat3& m = r.matrix();
  return Rot6{{m(0, 0), m(1, 0), m(2, 0), m(0, 1), m(1, 1), m(2, 1)}};
}

double rotation_geodesic_distance(const Rotation& a, const Rotation& b) {
  const double c = ((a.matrix().transpose() * b.matrix()).trace() - 1.0) * 0.5;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

double rotation_frobenius_sq(const Rotation& a, const Rotation& b) {
  return (b.matrix() - a.matrix()).squaredNorm();
}

TranslationError translation_error(const Vec3& ta, const Vec3& tb) {
  const Vec3 d = tb - ta;
  return {d.norm(), d.cwiseAbs()};
}

Pose compose_pose(const Transform& t, const Pose& p) {
  const Mat4 m = t.matrix() * p.matrix();
  const Mat3 r = m.topLeftCorner<3, 3>();
  Pose out;
  out.rotation = Rotation::orthonormality_error(r) > 1e-12 ? Rotation::nearest(r)
                                                           : Rotation::from_matrix(r, 1e-12);
  out.translation = m.topRightCorner<3, 1>();
  return out;
}

Transform centroid_centered_transform(const Rotation& rotation, const Vec3& centroid,
                                      const Vec3& translation_jitter) {
  return Transform::translation(centroid + translation_jitter) * Transform(rotation, Vec3::Zero()) *
         Transform::translation(-centroid);
}

Vec2 project_camera_point(const Intrinsics& k, const Vec3& xc) {
  if (!(xc.z() > 0.0)) throw BehindCamera("point is at or behind the camera plane");
  return {k.fx * xc.x() / xc.z() + k.cx, k.fy * xc.y() / xc.z() + k.cy};
}

Vec2 project_point(const Intrinsics& k, const Pose& p, const Vec3& v) {
  return project_camera_point(k, p.apply(v));
}

}  // namespace synreg
