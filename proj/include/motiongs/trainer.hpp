#pragma once

#include "motiongs/adam.hpp"
#include "motiongs/dataset.hpp"
#include "motiongs/deformation.hpp"
#include "motiongs/metrics.hpp"
#include "motiongs/rasterizer.hpp"

#include <functional>
#include <map>

namespace mgs {

struct TrainConfig {
  int64_t total_iters = 20000;
  double lambda_flow = 0.5;   // 0.5 preset for NeRF-DS-style scenes, 0.1 for
                              // HyperNeRF-style ones
  double lambda_dssim = 0.2;
  int64_t flow_start_iter = 3000;
  int64_t pose_start_iter = 3000;
  bool pose_refine = true;
  std::string flow_supervision = "motion";  // motion | optical | off
  // Which parameters the flow loss drives: "all" backpropagates into every
  // deformed attribute; "motion" restricts it to the position channels
  // (canonical positions + the deformation's position offsets), matching the
  // reading that flow guides motion while photometric owns appearance.
  std::string flow_grad_scope = "motion";
  // Pairs further apart in time than this get photometric supervision only
  // (forward flow between distant frames is unreliable in the setting the
  // supervision imitates). 1.0 disables the gate.
  double flow_max_gap = 1.0;
  int pose_interval = 10;                   // pose step every N iterations

  double lr_position = 1.6e-4;
  double lr_position_final = 1.6e-6;
  double lr_opacity = 5e-2;
  double lr_scale = 5e-3;
  double lr_rotation = 1e-3;
  double lr_color = 2.5e-3;
  double lr_deform = 1.6e-3;
  double pose_lr_rotation = 3e-3;
  double pose_lr_translation = 1e-1;

  std::string deform_variant = "mlp";  // basis | mlp
  BasisConfig basis;
  MlpConfig mlp;

  int init_gaussians = 200;
  double init_opacity = 0.1;
  double init_scale_factor = 0.6;  // splat sigma as a fraction of the mean
                                   // per-gaussian cell size
  Vec3 init_box_center = Vec3::Zero();
  Vec3 init_box_extent = Vec3::Zero();  // zero -> take from synth.cfg

  int holdout_every = 8;  // every k-th frame held out; 0 disables the split
  int64_t checkpoint_every = 0;  // 0 = final only
  int tile_size = 16;
  Vec3 background = Vec3::Zero();
  uint64_t seed = 1;
  double flow_alpha_min = 0.5;
  double cache_pose_tol = 1e-6;  // residual change that invalidates cached flow

  static TrainConfig from_config(const io::ConfigMap& cfg);
  std::string serialize() const;

  void validate() const;
};

enum class TrainMode { kGaussians, kPose };

struct StepLosses {
  double photo = 0.0;
  double flow = 0.0;
  double total = 0.0;
  TrainMode mode = TrainMode::kGaussians;
};

struct TrainState {
  GaussianScene scene;  // canonical
  DeformationField field = DeformationField::per_gaussian_basis(0, {});
  std::vector<Vec6> pose_residuals;  // per frame; identity for the anchor and
                                     // all held-out frames
  std::vector<SE3> current_pose;
  std::vector<SE3> original_pose;
  std::vector<int> shuffle;  // training frame indices in fixed read order
  std::vector<int> train_frames;
  std::vector<int> holdout_frames;

  int64_t iter = 0;
  size_t cursor = 0;
  int64_t epoch = 0;

  AdamState adam_position, adam_rotation, adam_scale, adam_opacity, adam_color,
      adam_sh, adam_deform;
  std::vector<AdamState> adam_pose;

  struct CacheEntry {
    FlowField target;
    Vec6 twist_a, twist_b;  // residuals at computation time
  };
  std::map<std::pair<int, int>, CacheEntry> flow_cache;
  int64_t flow_computations = 0;
};

// Assembled gradients of photo + lambda * flow for one gaussian-mode step.
struct StepGrads {
  DeformGrads canonical;           // position/rotation/log_scale via the field
  std::vector<double> d_opacity;   // direct photometric paths
  std::vector<Vec3> d_color;
  std::vector<std::array<double, 9>> d_sh;
};

class Trainer {
 public:
  Trainer(const Dataset& dataset, const TrainConfig& config);

  // One optimization step on a frame pair (adjacent in the shuffled order).
  StepLosses train_step(int frame_a, int frame_b, TrainMode mode);

  // Loss and assembled parameter gradients of a gaussian-mode step without
  // touching any state (the flow-target cache aside). Exposed so the full
  // chain stays finite-difference checkable.
  StepLosses compute_gaussian_gradients(int frame_a, int frame_b, StepGrads* grads);

  // Full schedule: advances through shuffled pairs, alternating gaussian and
  // pose steps, logging one csv row per iteration.
  void train(const io::fs::path& out_dir,
             const std::function<void(int64_t, const StepLosses&)>& on_step = {});

  std::pair<int, int> current_pair() const;
  TrainMode scheduled_mode(int64_t next_iter) const;
  void advance_cursor();

  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }
  const TrainConfig& config() const { return config_; }

  Image render_frame(int frame, double time) const;  // current poses, deformed
  MetricsReport evaluate_holdout() const;
  MetricsReport evaluate_frames(const std::vector<int>& frames) const;

  void save_checkpoint(const io::fs::path& dir, const std::string& log_csv) const;

 private:
  StepLosses gaussian_step(int frame_a, int frame_b);
  StepLosses pose_step(int frame_a, int frame_b);
  const FlowField* flow_target(int frame_a, int frame_b,
                               const RenderOutput& flow_render);

  const Dataset& ds_;
  TrainConfig config_;
  TrainState state_;
  RenderConfig render_cfg_;
  bool warned_missing_flow_ = false;
};

// Checkpoint loading for the render/eval/dump tools.
struct Checkpoint {
  GaussianScene scene;
  DeformationField field = DeformationField::per_gaussian_basis(0, {});
  std::vector<Camera> poses;          // refined absolute poses, all frames
  std::vector<Vec6> pose_residuals;
  std::vector<int> shuffle;
  TrainConfig config;

  static Checkpoint load(const io::fs::path& dir);
};

// Auxiliary state (adam moments, residuals, shuffle) round-trip.
void write_train_aux(const io::fs::path& path, const TrainState& st);
void read_train_aux(const io::fs::path& path, TrainState* st);

}  // namespace mgs
