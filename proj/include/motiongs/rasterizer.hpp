#pragma once

#include "motiongs/flowfield.hpp"
#include "motiongs/gaussians.hpp"

#include <optional>

namespace mgs {

// Effective extrinsics pre * exp(twist) * post. Lets the trainer refine a
// relative-pose residual while keeping the rasterizer generic.
struct PoseContext {
  SE3 pre;
  Vec6 twist = Vec6::Zero();
  SE3 post;

  SE3 effective() const { return pre * se3_exp(twist) * post; }
};

struct RenderConfig {
  Vec3 background = Vec3::Zero();
  int tile_size = 16;
  double alpha_min = 1.0 / 255.0;   // contributions below this are skipped
  double alpha_clamp = 0.999;
  double flow_alpha_min = 0.5;      // flow validity threshold on sum of weights
  std::optional<PoseContext> pose;  // overrides cam.extrinsics when present
};

struct RenderOutput {
  Image color;                 // H x W x 3
  std::vector<double> depth;   // H x W, alpha-blended camera-space z
  std::vector<double> alpha;   // H x W, accumulated opacity in [0,1]
  FlowField flow;              // empty unless a second scene state was supplied

  bool has_flow() const { return flow.width > 0; }
};

// Upstream raster gradients for the backward pass; empty vectors mean zero.
struct RenderGrads {
  std::vector<double> d_color;  // H*W*3
  std::vector<double> d_depth;  // H*W
  std::vector<double> d_alpha;  // H*W
  std::vector<double> d_flow;   // H*W*2, invalid pixels ignored
};

struct SceneGrads {
  std::vector<Vec3> d_position;
  std::vector<Vec4> d_rotation;
  std::vector<Vec3> d_log_scale;
  std::vector<double> d_opacity_logit;
  std::vector<Vec3> d_color;
  std::vector<std::array<double, 9>> d_sh;

  void resize_zero(size_t n);
};

struct GradientBuffer {
  SceneGrads state_t;       // color/depth/alpha paths
  SceneGrads state_t1;      // flow path only (time-t flow variables are
                            // stop-gradients, per the flow loss contract)
  Vec6 d_twist = Vec6::Zero();
  bool has_state_t1 = false;
  bool has_pose = false;
};

// Per-splat data shared by the tiled and the reference path.
struct SplatData {
  int index;            // gaussian index in the scene
  Vec2 mu2d;
  Mat2 inv_cov2d;
  double depth;
  double opacity;
  Vec3 color;           // SH-evaluated
  double cutoff;        // squared mahalanobis skip radius, min(9, 2 ln(255 o))
  // flow composition (two-state renders): x_next = flow_lin * (p - mu2d) + flow_mu
  Mat2 flow_lin;
  Vec2 flow_mu;
  bool has_flow = false;
};

struct SplatList {
  int tiles_x = 0, tiles_y = 0, tile_size = 0;
  std::vector<SplatData> splats;              // depth-sorted, ties by index
  std::vector<std::vector<int>> tile_entries; // per tile, indices into splats,
                                              // in the same global order
};

// Forward rasterization of color, alpha-blended depth, accumulated opacity and
// (when state_t1 is given) gaussian flow, both states under the same camera.
// Tiles are processed in parallel; every per-pixel reduction runs in the fixed
// depth-sorted order, so results are independent of the thread count.
RenderOutput render(const GaussianScene& state_t, const Camera& cam,
                    const RenderConfig& cfg,
                    const GaussianScene* state_t1 = nullptr);

// Serial per-pixel evaluation over all splats, no tiling. Kept as the
// reference the tiled path must match bit for bit.
RenderOutput render_reference(const GaussianScene& state_t, const Camera& cam,
                              const RenderConfig& cfg,
                              const GaussianScene* state_t1 = nullptr);

// Analytic gradients for every attribute of both scene states and, when a
// PoseContext is present, the residual twist. Replays the forward pass.
GradientBuffer render_backward(const GaussianScene& state_t, const Camera& cam,
                               const RenderConfig& cfg,
                               const GaussianScene* state_t1,
                               const RenderGrads& upstream);

// Projection + culling + tile binning; exposed for tests and tooling.
SplatList cull_and_tile(const GaussianScene& state_t, const Camera& cam,
                        const RenderConfig& cfg,
                        const GaussianScene* state_t1 = nullptr);

}  // namespace mgs
