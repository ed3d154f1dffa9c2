#include "motiongs/geometry.hpp"

#include <cmath>

namespace mgs {

namespace {
constexpr double kSmallAngle = 1e-6;  // series/closed-form switch for exp and log
}

Quat Quat::normalized() const {
  const double n = norm();
  if (!(n > 1e-300)) {
    throw ValidationError("quaternion has zero norm");
  }
  return {w / n, x / n, y / n, z / n};
}

Quat quat_mul(const Quat& a, const Quat& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Quat quat_from_axis_angle(const Vec3& omega) {
  const double theta = omega.norm();
  double k;  // sin(theta/2)/theta
  if (theta < kSmallAngle) {
    k = 0.5 - theta * theta / 48.0;
  } else {
    k = std::sin(0.5 * theta) / theta;
  }
  return {std::cos(0.5 * theta), k * omega.x(), k * omega.y(), k * omega.z()};
}

Vec3 quat_to_axis_angle(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w < 0) {  // pick the representative with angle in [0, pi]
    q = {-q.w, -q.x, -q.y, -q.z};
  }
  const Vec3 v(q.x, q.y, q.z);
  const double vn = v.norm();
  if (vn < 1e-300) {
    return Vec3::Zero();
  }
  // theta/vn -> 2 smoothly as vn -> 0; atan2 keeps this accurate.
  const double theta = 2.0 * std::atan2(vn, q.w);
  return v * (theta / vn);
}

Quat quat_from_rotation(const Mat3& R) {
  const double tr = R.trace();
  Quat q;
  if (tr > 0) {
    double s = std::sqrt(tr + 1.0) * 2.0;
    q.w = 0.25 * s;
    q.x = (R(2, 1) - R(1, 2)) / s;
    q.y = (R(0, 2) - R(2, 0)) / s;
    q.z = (R(1, 0) - R(0, 1)) / s;
  } else if (R(0, 0) > R(1, 1) && R(0, 0) > R(2, 2)) {
    double s = std::sqrt(1.0 + R(0, 0) - R(1, 1) - R(2, 2)) * 2.0;
    q.w = (R(2, 1) - R(1, 2)) / s;
    q.x = 0.25 * s;
    q.y = (R(0, 1) + R(1, 0)) / s;
    q.z = (R(0, 2) + R(2, 0)) / s;
  } else if (R(1, 1) > R(2, 2)) {
    double s = std::sqrt(1.0 + R(1, 1) - R(0, 0) - R(2, 2)) * 2.0;
    q.w = (R(0, 2) - R(2, 0)) / s;
    q.x = (R(0, 1) + R(1, 0)) / s;
    q.y = 0.25 * s;
    q.z = (R(1, 2) + R(2, 1)) / s;
  } else {
    double s = std::sqrt(1.0 + R(2, 2) - R(0, 0) - R(1, 1)) * 2.0;
    q.w = (R(1, 0) - R(0, 1)) / s;
    q.x = (R(0, 2) + R(2, 0)) / s;
    q.y = (R(1, 2) + R(2, 1)) / s;
    q.z = 0.25 * s;
  }
  return q.normalized();
}

Mat3 quat_to_rotation(const Quat& q_in) {
  const Quat q = q_in.normalized();
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Mat3 R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

Vec4 quat_rotation_backward(const Quat& q_in, const Mat3& G) {
  const Quat q = q_in.normalized();
  const double w = q.w, x = q.x, y = q.y, z = q.z;

  // dR/d(unit q) contracted with G.
  Mat3 dRw, dRx, dRy, dRz;
  dRw << 0, -z, y, z, 0, -x, -y, x, 0;
  dRx << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
  dRy << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
  dRz << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
  Vec4 g_unit;
  g_unit << 2 * (G.array() * dRw.array()).sum(), 2 * (G.array() * dRx.array()).sum(),
      2 * (G.array() * dRy.array()).sum(), 2 * (G.array() * dRz.array()).sum();

  // Through normalization: d(unit)/d(raw) = (I - u u^T)/|q|.
  const double n = q_in.norm();
  const Vec4 u = q.coeffs();
  return (g_unit - u * u.dot(g_unit)) / n;
}

Mat4 SE3::matrix() const {
  Mat4 M = Mat4::Identity();
  M.topLeftCorner<3, 3>() = rotation();
  M.topRightCorner<3, 1>() = trans;
  return M;
}

SE3 SE3::inverse() const {
  SE3 out;
  out.rot = rot.normalized().conjugate();
  out.trans = -(quat_to_rotation(out.rot) * trans);
  return out;
}

SE3 compose(const SE3& a, const SE3& b) {
  SE3 out;
  out.rot = quat_mul(a.rot.normalized(), b.rot.normalized());
  out.trans = a.rotation() * b.trans + a.trans;
  return out;
}

Mat3 skew(const Vec3& v) {
  Mat3 S;
  S << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return S;
}

namespace {

// V(omega) with exp(omega, rho) translation = V(omega) rho.
Mat3 so3_left_jacobian(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 W = skew(omega);
  double a, b;  // coefficients of W and W^2
  if (theta < kSmallAngle) {
    a = 0.5 - theta * theta / 24.0;
    b = 1.0 / 6.0 - theta * theta / 120.0;
  } else {
    a = (1.0 - std::cos(theta)) / (theta * theta);
    b = (theta - std::sin(theta)) / (theta * theta * theta);
  }
  return Mat3::Identity() + a * W + b * W * W;
}

Mat3 so3_left_jacobian_inv(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 W = skew(omega);
  double b;
  if (theta < kSmallAngle) {
    b = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    b = 1.0 / (theta * theta) -
        (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  }
  return Mat3::Identity() - 0.5 * W + b * W * W;
}

}  // namespace

SE3 se3_exp(const Vec6& twist) {
  const Vec3 omega = twist.head<3>();
  const Vec3 rho = twist.tail<3>();
  SE3 out;
  out.rot = quat_from_axis_angle(omega);
  out.trans = so3_left_jacobian(omega) * rho;
  return out;
}

Vec6 se3_log(const SE3& T) {
  const Vec3 omega = quat_to_axis_angle(T.rot);
  Vec6 out;
  out.head<3>() = omega;
  out.tail<3>() = so3_left_jacobian_inv(omega) * T.trans;
  return out;
}

Mat6 se3_right_jacobian(const Vec6& twist) {
  // ad for (omega, rho) stacking: [[W, 0], [P, W]].
  Mat6 ad = Mat6::Zero();
  const Mat3 W = skew(twist.head<3>());
  ad.topLeftCorner<3, 3>() = W;
  ad.bottomRightCorner<3, 3>() = W;
  ad.bottomLeftCorner<3, 3>() = skew(twist.tail<3>());

  Mat6 term = Mat6::Identity();
  Mat6 J = Mat6::Identity();  // n = 0 term
  for (int n = 1; n <= 40; ++n) {
    term = (term * (-ad)) / static_cast<double>(n + 1);
    J += term;
    if (term.cwiseAbs().maxCoeff() < 1e-18) {
      break;
    }
  }
  return J;
}

Vec3 Camera::center() const {
  const SE3 inv = extrinsics.inverse();
  return inv.trans;
}

void Camera::validate() const {
  if (!(fx > 0) || !(fy > 0)) {
    throw ValidationError("camera focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw ValidationError("camera image size must be positive");
  }
  if (!(cx > 0 && cx < width) || !(cy > 0 && cy < height)) {
    throw ValidationError("camera principal point must lie inside the image");
  }
}

Projection project(const Camera& cam, const Vec3& x_world) {
  const Vec3 xc = cam.extrinsics.act(x_world);
  if (xc.z() <= kNearPlane) {
    throw BehindCameraError("point behind the near plane (z=" +
                            std::to_string(xc.z()) + ")");
  }
  return {{cam.fx * xc.x() / xc.z() + cam.cx, cam.fy * xc.y() / xc.z() + cam.cy},
          xc.z()};
}

std::optional<Projection> try_project(const Camera& cam, const Vec3& x_world,
                                      double near) {
  const Vec3 xc = cam.extrinsics.act(x_world);
  if (xc.z() <= near) {
    return std::nullopt;
  }
  return Projection{
      {cam.fx * xc.x() / xc.z() + cam.cx, cam.fy * xc.y() / xc.z() + cam.cy},
      xc.z()};
}

Vec3 unproject(const Camera& cam, const Vec2& pixel, double depth) {
  if (!(depth > 0)) {
    throw ValidationError("unproject requires positive depth");
  }
  const Vec3 xc((pixel.x() - cam.cx) / cam.fx * depth,
                (pixel.y() - cam.cy) / cam.fy * depth, depth);
  return cam.extrinsics.inverse().act(xc);
}

Mat23 project_jacobian(const Camera& cam, const Vec3& x_cam) {
  const double z = x_cam.z();
  if (z <= kNearPlane) {
    throw BehindCameraError("project_jacobian requires z above the near plane");
  }
  Mat23 J;
  J << cam.fx / z, 0, -cam.fx * x_cam.x() / (z * z),
      0, cam.fy / z, -cam.fy * x_cam.y() / (z * z);
  return J;
}

}  // namespace mgs
