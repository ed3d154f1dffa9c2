#include "motiongs/losses.hpp"

#include <array>
#include <cmath>

namespace mgs {

namespace {

std::array<double, kSsimWindow> ssim_kernel() {
  std::array<double, kSsimWindow> k{};
  const int r = kSsimWindow / 2;
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    k[i] = std::exp(-0.5 * (i - r) * (i - r) / (kSsimSigma * kSsimSigma));
    sum += k[i];
  }
  for (double& v : k) {
    v /= sum;
  }
  return k;
}

// Separable gaussian filter with zero padding, per channel.
Image filter(const Image& in) {
  static const auto k = ssim_kernel();
  const int r = kSsimWindow / 2;
  Image tmp(in.width, in.height, in.channels);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      for (int c = 0; c < in.channels; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) {
          const int xx = x + i;
          if (xx >= 0 && xx < in.width) {
            acc += k[i + r] * in.at(xx, y, c);
          }
        }
        tmp.at(x, y, c) = acc;
      }
    }
  }
  Image out(in.width, in.height, in.channels);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      for (int c = 0; c < in.channels; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) {
          const int yy = y + i;
          if (yy >= 0 && yy < in.height) {
            acc += k[i + r] * tmp.at(x, yy, c);
          }
        }
        out.at(x, y, c) = acc;
      }
    }
  }
  return out;
}

Image hadamard(const Image& a, const Image& b) {
  Image out(a.width, a.height, a.channels);
  for (size_t i = 0; i < a.data.size(); ++i) {
    out.data[i] = a.data[i] * b.data[i];
  }
  return out;
}

struct SsimMaps {
  Image mu_x, mu_y, m_xx, m_yy, m_xy;
  Image ssim;
};

SsimMaps ssim_maps(const Image& x, const Image& y) {
  SsimMaps m;
  m.mu_x = filter(x);
  m.mu_y = filter(y);
  m.m_xx = filter(hadamard(x, x));
  m.m_yy = filter(hadamard(y, y));
  m.m_xy = filter(hadamard(x, y));
  m.ssim = Image(x.width, x.height, x.channels);
  for (size_t i = 0; i < x.data.size(); ++i) {
    const double ux = m.mu_x.data[i], uy = m.mu_y.data[i];
    const double sxx = m.m_xx.data[i] - ux * ux;
    const double syy = m.m_yy.data[i] - uy * uy;
    const double sxy = m.m_xy.data[i] - ux * uy;
    const double a1 = 2 * ux * uy + kSsimC1, a2 = 2 * sxy + kSsimC2;
    const double b1 = ux * ux + uy * uy + kSsimC1, b2 = sxx + syy + kSsimC2;
    m.ssim.data[i] = (a1 * a2) / (b1 * b2);
  }
  return m;
}

}  // namespace

double ssim_mean(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    throw ValidationError("ssim inputs must have identical shapes");
  }
  const SsimMaps m = ssim_maps(a, b);
  double sum = 0.0;
  for (double v : m.ssim.data) {
    sum += v;
  }
  return sum / static_cast<double>(m.ssim.data.size());
}

PhotometricResult photometric_loss(const Image& rendered, const Image& target,
                                   double lambda_dssim) {
  if (!rendered.same_shape(target)) {
    throw ValidationError("photometric loss inputs must have identical shapes");
  }
  const size_t N = rendered.data.size();
  PhotometricResult out;
  out.d_rendered = Image(rendered.width, rendered.height, rendered.channels);

  double l1 = 0.0;
  for (size_t i = 0; i < N; ++i) {
    const double diff = rendered.data[i] - target.data[i];
    l1 += std::abs(diff);
    out.d_rendered.data[i] =
        (1.0 - lambda_dssim) * (diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0)) / N;
  }
  out.l1 = l1 / static_cast<double>(N);

  const SsimMaps m = ssim_maps(rendered, target);
  double ssim_sum = 0.0;
  // Upstream of each ssim map entry is -lambda/(2N); push through the three
  // convolution outputs (mu_x, m_xx, m_xy) it depends on.
  Image g_mu(rendered.width, rendered.height, rendered.channels);
  Image g_mxx(rendered.width, rendered.height, rendered.channels);
  Image g_mxy(rendered.width, rendered.height, rendered.channels);
  const double up = -lambda_dssim / (2.0 * static_cast<double>(N));
  for (size_t i = 0; i < N; ++i) {
    ssim_sum += m.ssim.data[i];
    const double ux = m.mu_x.data[i], uy = m.mu_y.data[i];
    const double sxx = m.m_xx.data[i] - ux * ux;
    const double syy = m.m_yy.data[i] - uy * uy;
    const double sxy = m.m_xy.data[i] - ux * uy;
    const double a1 = 2 * ux * uy + kSsimC1, a2 = 2 * sxy + kSsimC2;
    const double b1 = ux * ux + uy * uy + kSsimC1, b2 = sxx + syy + kSsimC2;
    const double s = (a1 * a2) / (b1 * b2);
    const double d_sxx = -s / b2;                    // dS/d(sigma_x^2)
    const double d_sxy = 2 * a1 / (b1 * b2);         // dS/d(sigma_xy)
    const double d_mu = 2 * uy * a2 / (b1 * b2) - 2 * ux * s / b1  // direct
                        + d_sxx * (-2 * ux) + d_sxy * (-uy);       // via moments
    g_mu.data[i] = up * d_mu;
    g_mxx.data[i] = up * d_sxx;
    g_mxy.data[i] = up * d_sxy;
  }
  out.dssim = (1.0 - ssim_sum / static_cast<double>(N)) / 2.0;
  out.loss = (1.0 - lambda_dssim) * out.l1 + lambda_dssim * out.dssim;

  // Adjoint of the (symmetric, zero-padded) filtering is the same filter.
  const Image f_mu = filter(g_mu);
  const Image f_mxx = filter(g_mxx);
  const Image f_mxy = filter(g_mxy);
  for (size_t i = 0; i < N; ++i) {
    out.d_rendered.data[i] += f_mu.data[i] + 2.0 * rendered.data[i] * f_mxx.data[i] +
                              target.data[i] * f_mxy.data[i];
  }
  return out;
}

FlowLossResult flow_loss(const FlowField& motion, const FlowField& gaussian) {
  if (motion.width != gaussian.width || motion.height != gaussian.height) {
    throw ValidationError("flow loss inputs must have identical dimensions");
  }
  FlowLossResult out;
  out.d_gaussian = FlowField(gaussian.width, gaussian.height);
  size_t count = 0;
  for (int y = 0; y < motion.height; ++y) {
    for (int x = 0; x < motion.width; ++x) {
      if (motion.is_valid(x, y) && gaussian.is_valid(x, y)) {
        ++count;
      }
    }
  }
  if (count == 0) {
    out.empty_valid_set = true;
    return out;
  }
  double sum = 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  for (int y = 0; y < motion.height; ++y) {
    for (int x = 0; x < motion.width; ++x) {
      if (!(motion.is_valid(x, y) && gaussian.is_valid(x, y))) {
        continue;
      }
      const double ex = gaussian.dx(x, y) - motion.dx(x, y);
      const double ey = gaussian.dy(x, y) - motion.dy(x, y);
      sum += std::abs(ex) + std::abs(ey);
      out.d_gaussian.set(x, y, (ex > 0 ? 1.0 : (ex < 0 ? -1.0 : 0.0)) * inv,
                         (ey > 0 ? 1.0 : (ey < 0 ? -1.0 : 0.0)) * inv, true);
    }
  }
  out.loss = sum * inv;
  return out;
}

}  // namespace mgs
