// Test-side oracles, deliberately independent of the library code paths they
// check: different formulations (Rodrigues, dense matrix exponential, Eigen
// quaternions) rather than calls into the implementation.
#pragma once

#include "motiongs/gaussians.hpp"
#include "motiongs/geometry.hpp"

#include <Eigen/Geometry>
#include <functional>
#include <random>

namespace oracle {

using namespace mgs;

// R = I + sin(t) K + (1 - cos(t)) K^2 from the quaternion's axis-angle.
inline Mat3 rodrigues_from_quat(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  w /= n;
  x /= n;
  y /= n;
  z /= n;
  const double vn = std::sqrt(x * x + y * y + z * z);
  if (vn < 1e-14) {
    return Mat3::Identity();
  }
  const double angle = 2.0 * std::atan2(vn, w);
  const Vec3 axis = Vec3(x, y, z) / vn;
  Mat3 K;
  K << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  return Mat3::Identity() + std::sin(angle) * K + (1 - std::cos(angle)) * K * K;
}

// Scaling-and-squaring matrix exponential of the 4x4 twist matrix.
inline Mat4 expm4(const Mat4& A) {
  int squarings = 0;
  double norm = A.cwiseAbs().maxCoeff();
  Mat4 B = A;
  while (norm > 0.25) {
    B *= 0.5;
    norm *= 0.5;
    ++squarings;
  }
  Mat4 result = Mat4::Identity();
  Mat4 term = Mat4::Identity();
  for (int k = 1; k <= 20; ++k) {
    term = term * B / static_cast<double>(k);
    result += term;
  }
  for (int s = 0; s < squarings; ++s) {
    result = result * result;
  }
  return result;
}

inline Mat4 twist_matrix(const Vec6& xi) {
  Mat4 M = Mat4::Zero();
  M.topLeftCorner<3, 3>() = skew(xi.head<3>());
  M.topRightCorner<3, 1>() = xi.tail<3>();
  return M;
}

// Central finite differences of a scalar function over a flat parameter view.
inline double central_diff(const std::function<double(double)>& f_at, double x0,
                           double step = 1e-5) {
  return (f_at(x0 + step) - f_at(x0 - step)) / (2.0 * step);
}

// |a - b| within rel or abs tolerance (the acceptance-suite criterion).
inline bool grad_close(double analytic, double fd, double rel = 1e-4,
                       double abs = 1e-7) {
  const double diff = std::abs(analytic - fd);
  if (diff <= abs) {
    return true;
  }
  return diff <= rel * std::max(std::abs(analytic), std::abs(fd));
}

struct Rng {
  std::mt19937_64 engine;
  explicit Rng(uint64_t seed) : engine(seed) {}
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine);
  }
  double normal(double sigma = 1.0) {
    return std::normal_distribution<double>(0.0, sigma)(engine);
  }
  Vec3 vec3(double lo, double hi) {
    return {uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)};
  }
  Quat quat() {
    return Quat{normal(), normal(), normal(), normal()}.normalized();
  }
};

// Eq. 2 per-pixel oracle over all gaussians, built on Eigen's own quaternion
// and inverse routines. Applies the same alpha conventions the renderer
// documents (0.999 clamp, skip radius min(9, 2 ln(o/alpha_min))).
inline Vec3 blend_pixel_oracle(const GaussianScene& scene, const Camera& cam,
                               const Vec3& background, double px, double py) {
  struct Entry {
    double z;
    int idx;
    Vec2 mu;
    Mat2 cov;
    double o;
    Vec3 c;
  };
  std::vector<Entry> entries;
  const Eigen::Quaterniond qe(cam.extrinsics.rot.w, cam.extrinsics.rot.x,
                              cam.extrinsics.rot.y, cam.extrinsics.rot.z);
  const Mat3 Rw = qe.normalized().toRotationMatrix();
  const Vec3 tw = cam.extrinsics.trans;
  const Vec3 cam_center = -(Rw.transpose() * tw);
  for (size_t i = 0; i < scene.size(); ++i) {
    const Gaussian3D& g = scene.gaussians[i];
    const Vec3 xc = Rw * g.position + tw;
    if (xc.z() <= 1e-4) {
      continue;
    }
    const double o = 1.0 / (1.0 + std::exp(-g.opacity_logit));
    if (o <= 1.0 / 255.0) {
      continue;
    }
    const Eigen::Quaterniond qg(g.rotation.w, g.rotation.x, g.rotation.y,
                                g.rotation.z);
    const Mat3 Rg = qg.normalized().toRotationMatrix();
    Mat3 S2 = Mat3::Zero();
    for (int k = 0; k < 3; ++k) {
      S2(k, k) = std::exp(2.0 * g.log_scale[k]);
    }
    Mat3 sigma = Rg * S2 * Rg.transpose();
    sigma.diagonal().array() += 1e-10;
    Mat23 J;
    J << cam.fx / xc.z(), 0, -cam.fx * xc.x() / (xc.z() * xc.z()), 0,
        cam.fy / xc.z(), -cam.fy * xc.y() / (xc.z() * xc.z());
    const Mat23 M = J * Rw;
    Entry e;
    e.z = xc.z();
    e.idx = static_cast<int>(i);
    e.mu = {cam.fx * xc.x() / xc.z() + cam.cx, cam.fy * xc.y() / xc.z() + cam.cy};
    e.cov = M * sigma * M.transpose() + 0.3 * Mat2::Identity();
    e.o = o;
    e.c = g.color;
    if (scene.has_sh) {
      const Vec3 d = (g.position - cam_center).normalized();
      const double b0 = -kSh1 * d.y(), b1 = kSh1 * d.z(), b2 = -kSh1 * d.x();
      for (int k = 0; k < 3; ++k) {
        e.c[k] += b0 * g.sh[k * 3] + b1 * g.sh[k * 3 + 1] + b2 * g.sh[k * 3 + 2];
      }
    }
    entries.push_back(e);
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.z != b.z) return a.z < b.z;
    return a.idx < b.idx;
  });
  Vec3 color = Vec3::Zero();
  double T = 1.0, acc = 0.0;
  for (const Entry& e : entries) {
    const Vec2 d(px - e.mu.x(), py - e.mu.y());
    const double maha = d.dot(e.cov.inverse() * d);
    const double cutoff = std::min(9.0, 2.0 * std::log(e.o * 255.0));
    if (maha > cutoff) {
      continue;
    }
    const double alpha = std::min(0.999, e.o * std::exp(-0.5 * maha));
    color += alpha * T * e.c;
    acc += alpha * T;
    T *= 1.0 - alpha;
  }
  return color + background * (1.0 - acc);
}

}  // namespace oracle
