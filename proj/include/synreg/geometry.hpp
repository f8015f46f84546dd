#pragma once

#include <array>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace synreg {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Orthonormality tolerance used by validating constructors.
inline constexpr double kRotationTolerance = 1e-9;

/// Minimum norm accepted by the Gram-Schmidt recovery of a 6D rotation.
inline constexpr double kDegeneracyThreshold = 1e-8;

struct Rot6;

/// Element of SO(3). Construction is always validated or produced by an
/// operation that yields an orthonormal, right-handed matrix by construction.
class Rotation {
public:
  Rotation() : m_(Mat3::Identity()) {}

  /// Throws ValidationError unless m^T m = I and det(m) = +1 within `tol`.
  static Rotation from_matrix(const Mat3& m, double tol = kRotationTolerance);

  /// Nearest rotation in the Frobenius sense (SVD projection).
  static Rotation nearest(const Mat3& m);

  static Rotation about_axis(const Vec3& axis, double angle_rad);

  /// Rx(ax) * Ry(ay) * Rz(az).
  static Rotation euler_xyz(double ax_rad, double ay_rad, double az_rad);

  const Mat3& matrix() const { return m_; }
  Rotation inverse() const { return Rotation(m_.transpose()); }
  Rotation operator*(const Rotation& o) const { return Rotation(m_ * o.m_); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

  /// Max deviation of m^T m from I and of det(m) from 1.
  static double orthonormality_error(const Mat3& m);

private:
  explicit Rotation(const Mat3& m) : m_(m) {}
  friend Rotation r6_to_rotation(const Rot6& r6);

  Mat3 m_;
};

/// Continuous 6D rotation representation: the first two columns of a rotation
/// matrix flattened as [c1.x, c1.y, c1.z, c2.x, c2.y, c2.z].
struct Rot6 {
  std::array<double, 6> v{1, 0, 0, 0, 1, 0};

  Vec3 first() const { return {v[0], v[1], v[2]}; }
  Vec3 second() const { return {v[3], v[4], v[5]}; }
  bool operator==(const Rot6&) const = default;
};

/// Camera extrinsics: maps world points to camera coordinates, x_c = R x + t.
struct Pose {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();  // mm

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
  Mat4 matrix() const;
};

/// Pinhole intrinsics in pixel units. Pixel (u, v) has its center at
/// continuous image coordinate (u, v).
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Mat3 matrix() const;
  /// Throws ValidationError when focals are non-positive or the principal
  /// point lies outside a width x height frame.
  void validate(int width, int height) const;
};

/// 4x4 homogeneous rigid transform. The bottom row is exactly [0 0 0 1].
class Transform {
public:
  Transform() : m_(Mat4::Identity()) {}
  Transform(const Rotation& r, const Vec3& t);

  static Transform translation(const Vec3& t) { return Transform(Rotation(), t); }

  const Mat4& matrix() const { return m_; }
  Rotation rotation() const { return Rotation::from_matrix(m_.topLeftCorner<3, 3>(), 1e-6); }
  Vec3 offset() const { return m_.topRightCorner<3, 1>(); }
  Vec3 apply(const Vec3& p) const { return m_.topLeftCorner<3, 3>() * p + offset(); }
  Transform operator*(const Transform& o) const;

private:
  explicit Transform(const Mat4& m) : m_(m) {}
  Mat4 m_;
};

struct TranslationError {
  double total = 0.0;              // mm
  Vec3 per_axis = Vec3::Zero();    // |component differences|, mm
};

/// Gram-Schmidt recovery: c1' = n(c1), c2' = n(c2 - (c1'.c2) c1'), c3' = c1' x c2',
/// assembled as columns. Throws DegenerateInput when either norm < 1e-8.
Rotation r6_to_rotation(const Rot6& r6);

Rot6 rotation_to_r6(const Rotation& r);

/// arccos((Tr(Ra^T Rb) - 1) / 2) with the argument clamped to [-1, 1]. Radians.
double rotation_geodesic_distance(const Rotation& a, const Rotation& b);

/// ||Rb - Ra||_F^2
double rotation_frobenius_sq(const Rotation& a, const Rotation& b);

TranslationError translation_error(const Vec3& ta, const Vec3& tb);

/// T * P, re-orthonormalizing the rotation block when drift exceeds 1e-12.
Pose compose_pose(const Transform& t, const Pose& p);

/// translate(centroid + jitter) * rotate * translate(-centroid).
Transform centroid_centered_transform(const Rotation& rotation, const Vec3& centroid,
                                      const Vec3& translation_jitter);

/// Camera-space point to pixel coordinates. Throws BehindCamera if z <= 0.
Vec2 project_camera_point(const Intrinsics& k, const Vec3& xc);

/// World point through pose and intrinsics to pixel coordinates.
Vec2 project_point(const Intrinsics& k, const Pose& p, const Vec3& v);

inline double rad_to_deg(double r) { return r * (180.0 / 3.14159265358979323846); }
inline double deg_to_rad(double d) { return d * (3.14159265358979323846 / 180.0); }

}  // namespace synreg
