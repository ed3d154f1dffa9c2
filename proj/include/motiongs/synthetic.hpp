#pragma once

#include "motiongs/flowfield.hpp"
#include "motiongs/gaussians.hpp"
#include "motiongs/io.hpp"

namespace mgs {

struct MotionModel {
  enum class Kind : uint8_t { kStatic = 0, kLinear = 1, kOrbit = 2 };
  Kind kind = Kind::kStatic;
  Vec3 velocity = Vec3::Zero();   // linear: world units per unit time
  Vec3 orbit_center = Vec3::Zero();
  double orbit_radius = 0.0;
  double orbit_rate = 0.0;        // radians per unit time
  double orbit_phase = 0.0;

  Vec3 position(const Vec3& p0, double t) const;
};

// Declarative description of a desk-scale dynamic scene. Deterministic:
// identical spec + seed produce bit-identical scenes and ground truth.
struct SyntheticSceneSpec {
  uint64_t seed = 1;
  int frames = 2;
  int width = 64, height = 64;
  double fx = 0, fy = 0;          // 0 -> 1.2 * width
  int n_static = 8, n_dynamic = 1;

  std::string camera_mode = "orbit";  // orbit | line | static
  double cam_distance = 3.0;
  double cam_height = 0.8;
  double cam_span = 0.5;              // orbit: radians swept; line: world units

  Vec3 box_center = Vec3::Zero();
  Vec3 box_extent = Vec3(1.2, 1.0, 0.6);  // half extents
  double scale_min = 0.05, scale_max = 0.12;
  double dyn_scale_min = 0.0, dyn_scale_max = 0.0;  // 0 -> 1.4x the static range
  double opacity_logit_min = 0.5, opacity_logit_max = 2.5;
  bool with_sh = false;

  std::string motion_mode = "mixed";  // linear | orbit | mixed
  double motion_scale = 0.6;          // world-unit travel over unit time
  Vec3 dyn_color = Vec3(-1, -1, -1);  // fixed color for dynamic gaussians;
                                      // negative components -> random
  Vec3 background = Vec3(0.05, 0.05, 0.08);

  void validate() const;
};

SyntheticSceneSpec parse_synthetic_spec(const io::ConfigMap& cfg);
std::string serialize_synthetic_spec(const SyntheticSceneSpec& spec);

struct SyntheticFrame {
  Camera camera;
  double time = 0.0;
  Image image;
  DepthMap depth;    // camera-space z of the dominant gaussian per pixel
  MotionMask mask;   // dominant gaussian is dynamic
};

// Ground-truth flows for an ordered frame pair. Constructed so that
// optical == camera + motion holds bitwise at every valid pixel.
struct FlowTriple {
  FlowField optical;
  FlowField camera;
  FlowField motion;
};

struct SyntheticData {
  GaussianScene canonical;             // state at t = 0
  std::vector<MotionModel> motions;    // one per gaussian
  std::vector<SyntheticFrame> frames;
  std::vector<FlowTriple> pairs;       // consecutive (f, f+1)
};

SyntheticData generate_synthetic(const SyntheticSceneSpec& spec);

// The deterministic part of generate_synthetic: canonical scene, motion models
// and the true camera trajectory, no rendering. The trainer uses this to serve
// exact optical flow for arbitrary frame pairs.
void synthetic_scene_setup(const SyntheticSceneSpec& spec, GaussianScene* canonical,
                           std::vector<MotionModel>* motions,
                           std::vector<Camera>* cameras);

// Scene state at an arbitrary timestamp (exact motion models).
GaussianScene synthetic_scene_at(const GaussianScene& canonical,
                                 const std::vector<MotionModel>& motions, double t);

// Analytic ground-truth flow triple between two arbitrary frames, independent
// of the rasterizer. Validity = covered at t_a, reprojections in front and in
// bounds, and the surface gaussian still dominant at the target pixel.
FlowTriple synthetic_pair_flows(const GaussianScene& canonical,
                                const std::vector<MotionModel>& motions,
                                const Camera& cam_a, double t_a,
                                const Camera& cam_b, double t_b,
                                MotionMask* mask_a = nullptr,
                                DepthMap* depth_a = nullptr);

// Look-at camera builder shared by the generator and tests.
Camera make_lookat_camera(const Vec3& eye, const Vec3& target, double fx, double fy,
                          int width, int height);

}  // namespace mgs
