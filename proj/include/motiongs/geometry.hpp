#pragma once

#include "motiongs/common.hpp"

#include <array>
#include <optional>

namespace mgs {

// Unit-ish quaternion, scalar first. Storage is allowed to drift off the unit
// sphere (optimizers add raw increments); every consumer normalizes.
struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
  Quat normalized() const;
  Quat conjugate() const { return {w, -x, -y, -z}; }
  Vec4 coeffs() const { return {w, x, y, z}; }
};

Quat quat_mul(const Quat& a, const Quat& b);
Quat quat_from_axis_angle(const Vec3& omega);  // angle = |omega|
Vec3 quat_to_axis_angle(const Quat& q);
Quat quat_from_rotation(const Mat3& R);  // Shepperd's method

// R for the normalized q. Throws ValidationError on (near-)zero norm.
Mat3 quat_to_rotation(const Quat& q);

// Chain rule through R(normalize(q)): given dL/dR, returns dL/dq for the
// stored (possibly unnormalized) quaternion.
Vec4 quat_rotation_backward(const Quat& q, const Mat3& dL_dR);

// World -> camera rigid transform (or any SE(3) element).
struct SE3 {
  Quat rot;
  Vec3 trans = Vec3::Zero();

  Vec3 act(const Vec3& p) const { return quat_to_rotation(rot) * p + trans; }
  Mat3 rotation() const { return quat_to_rotation(rot); }
  Mat4 matrix() const;
  SE3 inverse() const;

  static SE3 identity() { return SE3{}; }
};

SE3 compose(const SE3& a, const SE3& b);  // a after b: (a*b).act(p) = a.act(b.act(p))
inline SE3 operator*(const SE3& a, const SE3& b) { return compose(a, b); }

Mat3 skew(const Vec3& v);

// Twist ordering: (rotation omega, translation rho).
SE3 se3_exp(const Vec6& twist);
Vec6 se3_log(const SE3& T);

// J with exp(xi + d) = exp(xi) * exp(J d) + O(|d|^2), from the power series
// sum (-ad_xi)^n / (n+1)!. Exact to machine precision for |xi| well below 2pi.
Mat6 se3_right_jacobian(const Vec6& twist);

struct Camera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  SE3 extrinsics;  // world -> camera

  Vec3 center() const;  // camera origin in world coordinates
  void validate() const;
};

inline constexpr double kNearPlane = 1e-4;

struct Projection {
  Vec2 pixel;
  double depth;  // camera-space z
};

// Pinhole projection; throws BehindCameraError when camera-space depth <= near.
Projection project(const Camera& cam, const Vec3& x_world);
std::optional<Projection> try_project(const Camera& cam, const Vec3& x_world,
                                      double near = kNearPlane);

// World point whose projection through cam is (pixel, depth). depth must be > 0.
Vec3 unproject(const Camera& cam, const Vec2& pixel, double depth);

// d(pixel)/d(x_cam) at a camera-space point.
Mat23 project_jacobian(const Camera& cam, const Vec3& x_cam);

}  // namespace mgs
