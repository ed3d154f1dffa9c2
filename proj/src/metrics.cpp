#include "motiongs/metrics.hpp"

#include <cmath>
#include <sstream>

namespace mgs {

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    throw ValidationError("psnr inputs must have identical shapes");
  }
  double mse = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse <= 0.0) {
    return kPsnrCap;
  }
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

std::string MetricsReport::table() const {
  std::ostringstream os;
  os << "frame    PSNR(dB)    SSIM\n";
  char buf[96];
  for (size_t i = 0; i < frame_indices.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%5d  %9.4f  %7.5f\n", frame_indices[i], psnr[i],
                  ssim[i]);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), " mean  %9.4f  %7.5f\n", mean_psnr, mean_ssim);
  os << buf;
  return os.str();
}

std::string MetricsReport::csv() const {
  std::ostringstream os;
  os << "frame,psnr,ssim\n";
  for (size_t i = 0; i < frame_indices.size(); ++i) {
    os << frame_indices[i] << "," << psnr[i] << "," << ssim[i] << "\n";
  }
  os << "mean," << mean_psnr << "," << mean_ssim << "\n";
  return os.str();
}

}  // namespace mgs
