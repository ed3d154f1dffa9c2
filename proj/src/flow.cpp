#include "motiongs/flow.hpp"

#include <cmath>

namespace mgs {

FlowField camera_flow(const DepthMap& depth_t, const Camera& cam_t,
                      const Camera& cam_t1) {
  if (depth_t.width != cam_t.width || depth_t.height != cam_t.height) {
    throw ValidationError("depth map size does not match the camera");
  }
  if (cam_t.width != cam_t1.width || cam_t.height != cam_t1.height) {
    throw ValidationError("camera pair must share the image size");
  }
  FlowField out(depth_t.width, depth_t.height);

  // Identical cameras induce no flow; short-circuit so the zero is exact
  // instead of compose/round-trip noise.
  const bool same = cam_t.fx == cam_t1.fx && cam_t.fy == cam_t1.fy &&
                    cam_t.cx == cam_t1.cx && cam_t.cy == cam_t1.cy &&
                    cam_t.extrinsics.rot.w == cam_t1.extrinsics.rot.w &&
                    cam_t.extrinsics.rot.x == cam_t1.extrinsics.rot.x &&
                    cam_t.extrinsics.rot.y == cam_t1.extrinsics.rot.y &&
                    cam_t.extrinsics.rot.z == cam_t1.extrinsics.rot.z &&
                    cam_t.extrinsics.trans == cam_t1.extrinsics.trans;
  if (same) {
    for (int y = 0; y < depth_t.height; ++y) {
      for (int x = 0; x < depth_t.width; ++x) {
        const size_t p = static_cast<size_t>(y) * depth_t.width + x;
        if (depth_t.valid[p] && depth_t.z[p] > 0) {
          out.set(x, y, 0.0, 0.0, true);
        }
      }
    }
    return out;
  }

  // Hoist the composed transform: x_cam1 = T1 * T0^-1 * x_cam0.
  const SE3 rel = cam_t1.extrinsics * cam_t.extrinsics.inverse();
  const Mat3 R = rel.rotation();
  const Vec3 tr = rel.trans;

#pragma omp parallel for schedule(static)
  for (int y = 0; y < depth_t.height; ++y) {
    for (int x = 0; x < depth_t.width; ++x) {
      const size_t p = static_cast<size_t>(y) * depth_t.width + x;
      if (!depth_t.valid[p]) {
        continue;
      }
      const double z = depth_t.z[p];
      if (!(z > 0)) {
        continue;
      }
      const Vec3 xc0((x - cam_t.cx) / cam_t.fx * z, (y - cam_t.cy) / cam_t.fy * z, z);
      const Vec3 xc1 = R * xc0 + tr;
      if (xc1.z() <= kNearPlane) {
        continue;
      }
      const double u = cam_t1.fx * xc1.x() / xc1.z() + cam_t1.cx;
      const double v = cam_t1.fy * xc1.y() / xc1.z() + cam_t1.cy;
      out.set(x, y, u - x, v - y, true);
    }
  }
  return out;
}

DepthMap depth_for_reprojection(const std::vector<double>& depth,
                                const std::vector<double>& acc_alpha, int width,
                                int height, double acc_threshold) {
  if (depth.size() != static_cast<size_t>(width) * height ||
      acc_alpha.size() != depth.size()) {
    throw ValidationError("depth_for_reprojection raster size mismatch");
  }
  DepthMap out(width, height);
  for (size_t p = 0; p < depth.size(); ++p) {
    if (acc_alpha[p] >= acc_threshold) {
      out.z[p] = depth[p] / acc_alpha[p];
      out.valid[p] = 1;
    }
  }
  return out;
}

FlowField motion_flow(const FlowField& optical, const FlowField& camera,
                      const MotionMask* mask) {
  if (optical.width != camera.width || optical.height != camera.height) {
    throw ValidationError("optical and camera flow dimensions differ");
  }
  if (mask && (mask->width != optical.width || mask->height != optical.height)) {
    throw ValidationError("motion mask dimensions differ from the flow");
  }
  FlowField out(optical.width, optical.height);
  for (int y = 0; y < optical.height; ++y) {
    for (int x = 0; x < optical.width; ++x) {
      if (!optical.is_valid(x, y) || !camera.is_valid(x, y)) {
        continue;
      }
      if (mask && !mask->is_dynamic(x, y)) {
        out.set(x, y, 0.0, 0.0, true);  // static pixels supervise zero motion
        continue;
      }
      out.set(x, y, optical.dx(x, y) - camera.dx(x, y),
              optical.dy(x, y) - camera.dy(x, y), true);
    }
  }
  return out;
}

double flow_endpoint_error(const FlowField& a, const FlowField& b) {
  if (a.width != b.width || a.height != b.height) {
    throw ValidationError("flow fields have different dimensions");
  }
  double sum = 0.0;
  size_t count = 0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (!a.is_valid(x, y) || !b.is_valid(x, y)) {
        continue;
      }
      const double ddx = a.dx(x, y) - b.dx(x, y);
      const double ddy = a.dy(x, y) - b.dy(x, y);
      sum += std::sqrt(ddx * ddx + ddy * ddy);
      ++count;
    }
  }
  if (count == 0) {
    throw ValidationError("no jointly valid pixels for endpoint error");
  }
  return sum / static_cast<double>(count);
}

}  // namespace mgs
