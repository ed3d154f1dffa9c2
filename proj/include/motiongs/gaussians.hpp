#pragma once

#include "motiongs/geometry.hpp"

#include <array>

namespace mgs {

// One anisotropic 3D Gaussian primitive. Opacity lives in logit space and
// scales in log space so the optimizer works unconstrained.
struct Gaussian3D {
  Vec3 position = Vec3::Zero();          // mu
  Quat rotation;                         // r, normalized by consumers
  Vec3 log_scale = Vec3::Zero();         // log(s_x, s_y, s_z)
  double opacity_logit = 0.0;            // sigmoid -> o in (0,1)
  Vec3 color = Vec3::Zero();             // view-independent base RGB
  std::array<double, 9> sh{};            // degree-1 coefficients, [channel*3 + basis]

  double opacity() const { return sigmoid(opacity_logit); }
  Vec3 scale() const { return log_scale.array().exp(); }
};

struct GaussianScene {
  std::vector<Gaussian3D> gaussians;
  double canonical_time = 0.0;
  bool has_sh = false;  // whether the degree-1 coefficients are active

  size_t size() const { return gaussians.size(); }
};

inline constexpr double kCovDiagFloor = 1e-10;
inline constexpr double kCov2dDilation = 0.3;  // anti-aliasing floor on Sigma2D

// Sigma = R S S^T R^T + floor * I. Always symmetric positive definite.
Mat3 build_covariance(const Gaussian3D& g);

// Given dL/dSigma, gradients w.r.t. the stored quaternion and log-scales.
void covariance_backward(const Gaussian3D& g, const Mat3& dL_dSigma,
                         Vec4* d_rot, Vec3* d_log_scale);

struct Projected2d {
  Vec2 mu2d;
  Mat2 sigma2d;  // J W Sigma W^T J^T + 0.3 I
};

// Throws BehindCameraError if mu is behind the camera near plane.
Projected2d project_covariance(const Camera& cam, const Vec3& mu, const Mat3& sigma);

// View-dependent color: base + degree-1 real SH in the direction from the
// camera center to the gaussian.
Vec3 evaluate_color(const Gaussian3D& g, bool has_sh, const Vec3& view_dir_unit);

inline constexpr double kSh1 = 0.4886025119029199;

}  // namespace mgs
