#pragma once

#include "motiongs/common.hpp"

namespace mgs {

inline constexpr double kPsnrCap = 99.0;

// 10 log10(1/MSE) for images in [0,1]; capped at 99 dB for zero MSE.
double psnr(const Image& a, const Image& b);

struct MetricsReport {
  std::vector<int> frame_indices;
  std::vector<double> psnr;
  std::vector<double> ssim;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;

  std::string table() const;
  std::string csv() const;
};

}  // namespace mgs
