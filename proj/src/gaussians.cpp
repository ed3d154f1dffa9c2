#include "motiongs/gaussians.hpp"

namespace mgs {

Mat3 build_covariance(const Gaussian3D& g) {
  const Mat3 R = quat_to_rotation(g.rotation);
  const Vec3 s2 = (2.0 * g.log_scale).array().exp();
  Mat3 sigma = R * s2.asDiagonal() * R.transpose();
  sigma.diagonal().array() += kCovDiagFloor;
  return sigma;
}

void covariance_backward(const Gaussian3D& g, const Mat3& dL_dSigma,
                         Vec4* d_rot, Vec3* d_log_scale) {
  const Mat3 R = quat_to_rotation(g.rotation);
  const Vec3 s2 = (2.0 * g.log_scale).array().exp();
  const Mat3 G = 0.5 * (dL_dSigma + dL_dSigma.transpose());

  // Sigma = R D R^T with D = diag(s^2):
  //   dL/dR = 2 G R D,  dL/dD_kk = (R^T G R)_kk,  dD/dlog_s = 2 D.
  const Mat3 dL_dR = 2.0 * G * R * s2.asDiagonal();
  const Vec3 dL_dD = (R.transpose() * G * R).diagonal();
  if (d_rot) {
    *d_rot += quat_rotation_backward(g.rotation, dL_dR);
  }
  if (d_log_scale) {
    *d_log_scale += (2.0 * s2.array() * dL_dD.array()).matrix();
  }
}

Projected2d project_covariance(const Camera& cam, const Vec3& mu, const Mat3& sigma) {
  const Vec3 x_cam = cam.extrinsics.act(mu);
  if (x_cam.z() <= kNearPlane) {
    throw BehindCameraError("gaussian mean behind the near plane");
  }
  const Mat23 J = project_jacobian(cam, x_cam);
  const Mat23 M = J * cam.extrinsics.rotation();
  Projected2d out;
  out.mu2d = {cam.fx * x_cam.x() / x_cam.z() + cam.cx,
              cam.fy * x_cam.y() / x_cam.z() + cam.cy};
  out.sigma2d = M * sigma * M.transpose() + kCov2dDilation * Mat2::Identity();
  return out;
}

Vec3 evaluate_color(const Gaussian3D& g, bool has_sh, const Vec3& d) {
  if (!has_sh) {
    return g.color;
  }
  // Real SH basis, degree 1: (-y, z, -x) * kSh1 at the unit direction d.
  const double b0 = -kSh1 * d.y();
  const double b1 = kSh1 * d.z();
  const double b2 = -kSh1 * d.x();
  Vec3 c = g.color;
  for (int k = 0; k < 3; ++k) {
    c[k] += b0 * g.sh[k * 3 + 0] + b1 * g.sh[k * 3 + 1] + b2 * g.sh[k * 3 + 2];
  }
  return c;
}

}  // namespace mgs
