#pragma once

#include "motiongs/flowfield.hpp"
#include "motiongs/geometry.hpp"

#include <optional>

namespace mgs {

// Flow induced purely by camera motion: unproject each valid pixel of the
// frame-t depth map, reproject into the frame-(t+1) camera, subtract. Pixels
// whose reprojection lands behind the target near plane become invalid.
FlowField camera_flow(const DepthMap& depth_t, const Camera& cam_t,
                      const Camera& cam_t1);

// Reprojection-ready depth from raster outputs: the depth raster carries
// sum(w_i z_i), so divide by the accumulated alpha to get the expected surface
// depth. Valid where acc_alpha >= threshold.
DepthMap depth_for_reprojection(const std::vector<double>& depth,
                                const std::vector<double>& acc_alpha, int width,
                                int height, double acc_threshold = 0.5);

// Motion flow = optical - camera, valid where both inputs are. With a motion
// mask, static pixels are forced to (0, 0) but stay valid so the flow loss
// still pins static gaussians in place.
FlowField motion_flow(const FlowField& optical, const FlowField& camera,
                      const MotionMask* mask = nullptr);

// Mean Euclidean endpoint error over jointly valid pixels. Throws on an empty
// joint-valid set.
double flow_endpoint_error(const FlowField& a, const FlowField& b);

}  // namespace mgs
