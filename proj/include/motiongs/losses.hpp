#pragma once

#include "motiongs/flowfield.hpp"

namespace mgs {

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

// Mean SSIM over pixels and channels, 11x11 gaussian window (sigma 1.5),
// zero-padded borders. Identical on both sides, so SSIM(x, x) == 1 everywhere.
double ssim_mean(const Image& a, const Image& b);

struct PhotometricResult {
  double loss = 0.0;
  double l1 = 0.0;
  double dssim = 0.0;          // (1 - SSIM) / 2
  Image d_rendered;            // analytic gradient w.r.t. the rendered image
};

// (1 - lambda) * L1 + lambda * (1 - SSIM)/2.
PhotometricResult photometric_loss(const Image& rendered, const Image& target,
                                   double lambda_dssim = 0.2);

struct FlowLossResult {
  double loss = 0.0;
  FlowField d_gaussian;  // gradient w.r.t. the gaussian-flow input only
  bool empty_valid_set = false;
};

// Mean per-pixel L1 between the (stop-gradient) motion flow and the rendered
// gaussian flow over jointly valid pixels. The motion input never receives a
// gradient.
FlowLossResult flow_loss(const FlowField& motion, const FlowField& gaussian);

}  // namespace mgs
