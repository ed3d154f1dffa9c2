#pragma once

#include "motiongs/common.hpp"

namespace mgs {

// Dense 2D displacement raster in pixels. Invalid pixels carry (0,0) and are
// excluded from every loss and metric.
struct FlowField {
  int width = 0, height = 0;
  std::vector<double> data;       // H x W x 2, (dx, dy) row-major
  std::vector<uint8_t> valid;     // H x W

  FlowField() = default;
  FlowField(int w, int h)
      : width(w), height(h),
        data(static_cast<size_t>(w) * h * 2, 0.0),
        valid(static_cast<size_t>(w) * h, 0) {}

  double& dx(int x, int y) { return data[(static_cast<size_t>(y) * width + x) * 2]; }
  double& dy(int x, int y) { return data[(static_cast<size_t>(y) * width + x) * 2 + 1]; }
  double dx(int x, int y) const { return data[(static_cast<size_t>(y) * width + x) * 2]; }
  double dy(int x, int y) const { return data[(static_cast<size_t>(y) * width + x) * 2 + 1]; }
  bool is_valid(int x, int y) const { return valid[static_cast<size_t>(y) * width + x] != 0; }
  void set(int x, int y, double vx, double vy, bool ok) {
    dx(x, y) = vx;
    dy(x, y) = vy;
    valid[static_cast<size_t>(y) * width + x] = ok ? 1 : 0;
  }
  size_t pixels() const { return static_cast<size_t>(width) * height; }
};

struct MotionMask {
  int width = 0, height = 0;
  std::vector<uint8_t> dynamic;  // H x W, true = dynamic pixel

  MotionMask() = default;
  MotionMask(int w, int h) : width(w), height(h), dynamic(static_cast<size_t>(w) * h, 0) {}
  bool is_dynamic(int x, int y) const { return dynamic[static_cast<size_t>(y) * width + x] != 0; }
};

// Alpha-blended depth raster with a validity mask (acc_alpha threshold).
struct DepthMap {
  int width = 0, height = 0;
  std::vector<double> z;
  std::vector<uint8_t> valid;

  DepthMap() = default;
  DepthMap(int w, int h)
      : width(w), height(h), z(static_cast<size_t>(w) * h, 0.0),
        valid(static_cast<size_t>(w) * h, 0) {}
};

}  // namespace mgs
