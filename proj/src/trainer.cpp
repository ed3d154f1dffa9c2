#include "motiongs/trainer.hpp"

#include "motiongs/flow.hpp"
#include "motiongs/losses.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace mgs {

namespace {

const std::vector<std::string> kTrainKeys = {
    "total_iters", "lambda_flow", "lambda_dssim", "flow_start_iter",
    "pose_start_iter", "pose_refine", "flow_supervision", "flow_grad_scope", "flow_max_gap",
    "pose_interval",
    "lr_position", "lr_position_final", "lr_opacity", "lr_scale", "lr_rotation",
    "lr_color", "lr_deform", "pose_lr_rotation", "pose_lr_translation",
    "deform_variant", "basis_poly", "basis_fourier", "mlp_pe_position",
    "mlp_pe_time", "mlp_hidden", "mlp_layers", "init_gaussians", "init_opacity", "init_scale_factor",
    "init_box_center_x", "init_box_center_y", "init_box_center_z",
    "init_box_extent_x", "init_box_extent_y", "init_box_extent_z",
    "holdout_every", "checkpoint_every", "tile_size",
    "background_r", "background_g", "background_b", "seed", "flow_alpha_min",
    "cache_pose_tol"};

}  // namespace

TrainConfig TrainConfig::from_config(const io::ConfigMap& cfg) {
  cfg.require_known_keys(kTrainKeys);
  TrainConfig c;
  c.total_iters = cfg.get_int("total_iters", c.total_iters);
  c.lambda_flow = cfg.get_double("lambda_flow", c.lambda_flow);
  c.lambda_dssim = cfg.get_double("lambda_dssim", c.lambda_dssim);
  c.flow_start_iter = cfg.get_int("flow_start_iter", c.flow_start_iter);
  c.pose_start_iter = cfg.get_int("pose_start_iter", c.pose_start_iter);
  c.pose_refine = cfg.get_bool("pose_refine", c.pose_refine);
  c.flow_supervision = cfg.get_string("flow_supervision", c.flow_supervision);
  c.flow_grad_scope = cfg.get_string("flow_grad_scope", c.flow_grad_scope);
  c.flow_max_gap = cfg.get_double("flow_max_gap", c.flow_max_gap);
  c.pose_interval = static_cast<int>(cfg.get_int("pose_interval", c.pose_interval));
  c.lr_position = cfg.get_double("lr_position", c.lr_position);
  c.lr_position_final = cfg.get_double("lr_position_final", c.lr_position_final);
  c.lr_opacity = cfg.get_double("lr_opacity", c.lr_opacity);
  c.lr_scale = cfg.get_double("lr_scale", c.lr_scale);
  c.lr_rotation = cfg.get_double("lr_rotation", c.lr_rotation);
  c.lr_color = cfg.get_double("lr_color", c.lr_color);
  c.lr_deform = cfg.get_double("lr_deform", c.lr_deform);
  c.pose_lr_rotation = cfg.get_double("pose_lr_rotation", c.pose_lr_rotation);
  c.pose_lr_translation = cfg.get_double("pose_lr_translation", c.pose_lr_translation);
  c.deform_variant = cfg.get_string("deform_variant", c.deform_variant);
  c.basis.poly_order = static_cast<int>(cfg.get_int("basis_poly", c.basis.poly_order));
  c.basis.fourier_order =
      static_cast<int>(cfg.get_int("basis_fourier", c.basis.fourier_order));
  c.mlp.pe_position =
      static_cast<int>(cfg.get_int("mlp_pe_position", c.mlp.pe_position));
  c.mlp.pe_time = static_cast<int>(cfg.get_int("mlp_pe_time", c.mlp.pe_time));
  c.mlp.hidden = static_cast<int>(cfg.get_int("mlp_hidden", c.mlp.hidden));
  c.mlp.layers = static_cast<int>(cfg.get_int("mlp_layers", c.mlp.layers));
  c.init_gaussians = static_cast<int>(cfg.get_int("init_gaussians", c.init_gaussians));
  c.init_opacity = cfg.get_double("init_opacity", c.init_opacity);
  c.init_scale_factor = cfg.get_double("init_scale_factor", c.init_scale_factor);
  c.init_box_center = {cfg.get_double("init_box_center_x", 0.0),
                       cfg.get_double("init_box_center_y", 0.0),
                       cfg.get_double("init_box_center_z", 0.0)};
  c.init_box_extent = {cfg.get_double("init_box_extent_x", 0.0),
                       cfg.get_double("init_box_extent_y", 0.0),
                       cfg.get_double("init_box_extent_z", 0.0)};
  c.holdout_every = static_cast<int>(cfg.get_int("holdout_every", c.holdout_every));
  c.checkpoint_every = cfg.get_int("checkpoint_every", c.checkpoint_every);
  c.tile_size = static_cast<int>(cfg.get_int("tile_size", c.tile_size));
  c.background = {cfg.get_double("background_r", c.background.x()),
                  cfg.get_double("background_g", c.background.y()),
                  cfg.get_double("background_b", c.background.z())};
  c.seed = static_cast<uint64_t>(cfg.get_int("seed", static_cast<int64_t>(c.seed)));
  c.flow_alpha_min = cfg.get_double("flow_alpha_min", c.flow_alpha_min);
  c.cache_pose_tol = cfg.get_double("cache_pose_tol", c.cache_pose_tol);
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (total_iters < 1) {
    throw ValidationError("total_iters must be >= 1");
  }
  if (lambda_flow < 0) {
    throw ValidationError("lambda_flow must be >= 0");
  }
  if (flow_start_iter > total_iters || pose_start_iter > total_iters) {
    throw ValidationError("start iterations must be <= total_iters");
  }
  if (flow_supervision != "motion" && flow_supervision != "optical" &&
      flow_supervision != "motion-gt" && flow_supervision != "off") {
    throw ValidationError("flow_supervision must be motion|optical|off");
  }
  if (flow_grad_scope != "all" && flow_grad_scope != "motion" &&
      flow_grad_scope != "deform") {
    throw ValidationError("flow_grad_scope must be all|motion|deform");
  }
  if (deform_variant != "basis" && deform_variant != "mlp") {
    throw ValidationError("deform_variant must be basis|mlp");
  }
  if (tile_size < 1) {
    throw ValidationError("tile_size must be >= 1");
  }
  if (pose_interval < 1) {
    throw ValidationError("pose_interval must be >= 1");
  }
}

std::string TrainConfig::serialize() const {
  std::ostringstream os;
  os << "total_iters = " << total_iters << "\n";
  os << "lambda_flow = " << io::format_double(lambda_flow) << "\n";
  os << "lambda_dssim = " << io::format_double(lambda_dssim) << "\n";
  os << "flow_start_iter = " << flow_start_iter << "\n";
  os << "pose_start_iter = " << pose_start_iter << "\n";
  os << "pose_refine = " << (pose_refine ? 1 : 0) << "\n";
  os << "flow_supervision = " << flow_supervision << "\n";
  os << "flow_grad_scope = " << flow_grad_scope << "\n";
  os << "flow_max_gap = " << io::format_double(flow_max_gap) << "\n";
  os << "pose_interval = " << pose_interval << "\n";
  os << "lr_position = " << io::format_double(lr_position) << "\n";
  os << "lr_position_final = " << io::format_double(lr_position_final) << "\n";
  os << "lr_opacity = " << io::format_double(lr_opacity) << "\n";
  os << "lr_scale = " << io::format_double(lr_scale) << "\n";
  os << "lr_rotation = " << io::format_double(lr_rotation) << "\n";
  os << "lr_color = " << io::format_double(lr_color) << "\n";
  os << "lr_deform = " << io::format_double(lr_deform) << "\n";
  os << "pose_lr_rotation = " << io::format_double(pose_lr_rotation) << "\n";
  os << "pose_lr_translation = " << io::format_double(pose_lr_translation) << "\n";
  os << "deform_variant = " << deform_variant << "\n";
  os << "basis_poly = " << basis.poly_order << "\n";
  os << "basis_fourier = " << basis.fourier_order << "\n";
  os << "mlp_pe_position = " << mlp.pe_position << "\n";
  os << "mlp_pe_time = " << mlp.pe_time << "\n";
  os << "mlp_hidden = " << mlp.hidden << "\n";
  os << "mlp_layers = " << mlp.layers << "\n";
  os << "init_gaussians = " << init_gaussians << "\n";
  os << "init_opacity = " << io::format_double(init_opacity) << "\n";
  os << "init_scale_factor = " << io::format_double(init_scale_factor) << "\n";
  os << "init_box_center_x = " << io::format_double(init_box_center.x()) << "\n";
  os << "init_box_center_y = " << io::format_double(init_box_center.y()) << "\n";
  os << "init_box_center_z = " << io::format_double(init_box_center.z()) << "\n";
  os << "init_box_extent_x = " << io::format_double(init_box_extent.x()) << "\n";
  os << "init_box_extent_y = " << io::format_double(init_box_extent.y()) << "\n";
  os << "init_box_extent_z = " << io::format_double(init_box_extent.z()) << "\n";
  os << "holdout_every = " << holdout_every << "\n";
  os << "checkpoint_every = " << checkpoint_every << "\n";
  os << "tile_size = " << tile_size << "\n";
  os << "background_r = " << io::format_double(background.x()) << "\n";
  os << "background_g = " << io::format_double(background.y()) << "\n";
  os << "background_b = " << io::format_double(background.z()) << "\n";
  os << "seed = " << seed << "\n";
  os << "flow_alpha_min = " << io::format_double(flow_alpha_min) << "\n";
  os << "cache_pose_tol = " << io::format_double(cache_pose_tol) << "\n";
  return os.str();
}

namespace {

GaussianScene init_scene(const Dataset& ds, const TrainConfig& cfg) {
  Vec3 center = cfg.init_box_center;
  Vec3 extent = cfg.init_box_extent;
  if (extent.isZero()) {
    if (!ds.synth) {
      throw ValidationError(
          "dataset has no synth.cfg; set init_box_center_*/init_box_extent_* in the "
          "training config");
    }
    center = ds.synth->box_center;
    extent = ds.synth->box_extent;
  }
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  GaussianScene scene;
  scene.has_sh = ds.synth ? ds.synth->with_sh : false;

  const double volume = 8.0 * extent.x() * extent.y() * std::max(extent.z(), 0.05);
  const double sigma0 =
      cfg.init_scale_factor * std::cbrt(volume / std::max(1, cfg.init_gaussians));
  for (int i = 0; i < cfg.init_gaussians; ++i) {
    Gaussian3D g;
    for (int k = 0; k < 3; ++k) {
      g.position[k] = center[k] + (2.0 * uni(rng) - 1.0) * extent[k];
    }
    g.log_scale.setConstant(std::log(sigma0));
    g.opacity_logit = inverse_sigmoid(cfg.init_opacity);
    g.color.setConstant(0.5);
    scene.gaussians.push_back(g);
  }
  return scene;
}

std::array<double, 6> pose_lr_vector(const TrainConfig& cfg) {
  return {cfg.pose_lr_rotation, cfg.pose_lr_rotation, cfg.pose_lr_rotation,
          cfg.pose_lr_translation, cfg.pose_lr_translation, cfg.pose_lr_translation};
}

}  // namespace

Trainer::Trainer(const Dataset& dataset, const TrainConfig& config)
    : ds_(dataset), config_(config) {
  config_.validate();
  if (ds_.frame_count() < 2) {
    throw ValidationError("training needs at least two frames");
  }

  for (int f = 0; f < ds_.frame_count(); ++f) {
    const bool held_out =
        config_.holdout_every > 0 && f % config_.holdout_every == 0;
    if (held_out) {
      state_.holdout_frames.push_back(f);
    } else {
      state_.train_frames.push_back(f);
    }
  }
  if (state_.train_frames.size() < 2) {
    throw ValidationError("holdout split leaves fewer than two training frames");
  }

  state_.shuffle = state_.train_frames;
  std::mt19937_64 rng(config_.seed);
  std::shuffle(state_.shuffle.begin(), state_.shuffle.end(), rng);

  state_.scene = init_scene(ds_, config_);
  if (config_.deform_variant == "basis") {
    state_.field =
        DeformationField::per_gaussian_basis(state_.scene.size(), config_.basis);
  } else {
    state_.field = DeformationField::tiny_mlp(config_.mlp, config_.seed ^ 0x5bd1e995u);
  }

  state_.pose_residuals.assign(ds_.frame_count(), Vec6::Zero());
  state_.original_pose.clear();
  for (const Camera& c : ds_.cameras) {
    state_.original_pose.push_back(c.extrinsics);
  }
  state_.current_pose = state_.original_pose;

  const size_t n = state_.scene.size();
  state_.adam_position.resize(static_cast<Eigen::Index>(n) * 3);
  state_.adam_rotation.resize(static_cast<Eigen::Index>(n) * 4);
  state_.adam_scale.resize(static_cast<Eigen::Index>(n) * 3);
  state_.adam_opacity.resize(static_cast<Eigen::Index>(n));
  state_.adam_color.resize(static_cast<Eigen::Index>(n) * 3);
  state_.adam_sh.resize(state_.scene.has_sh ? static_cast<Eigen::Index>(n) * 9 : 0);
  state_.adam_deform.resize(state_.field.params().size());
  state_.adam_pose.assign(ds_.frame_count(), AdamState(6));

  render_cfg_.background = config_.background;
  render_cfg_.tile_size = config_.tile_size;
  render_cfg_.flow_alpha_min = config_.flow_alpha_min;
}

std::pair<int, int> Trainer::current_pair() const {
  return {state_.shuffle[state_.cursor], state_.shuffle[state_.cursor + 1]};
}

TrainMode Trainer::scheduled_mode(int64_t next_iter) const {
  if (config_.pose_refine && next_iter >= config_.pose_start_iter &&
      next_iter % config_.pose_interval == 0) {
    return TrainMode::kPose;
  }
  return TrainMode::kGaussians;
}

void Trainer::advance_cursor() {
  ++state_.cursor;
  if (state_.cursor + 1 >= state_.shuffle.size()) {
    state_.cursor = 0;  // no reshuffle between epochs
    ++state_.epoch;
  }
}

StepLosses Trainer::train_step(int frame_a, int frame_b, TrainMode mode) {
  ++state_.iter;
  return mode == TrainMode::kGaussians ? gaussian_step(frame_a, frame_b)
                                       : pose_step(frame_a, frame_b);
}

const FlowField* Trainer::flow_target(int a, int b, const RenderOutput& flow_render) {
  const auto key = std::make_pair(a, b);
  const auto it = state_.flow_cache.find(key);
  if (it != state_.flow_cache.end()) {
    const bool fresh =
        (it->second.twist_a - state_.pose_residuals[a]).norm() <= config_.cache_pose_tol &&
        (it->second.twist_b - state_.pose_residuals[b]).norm() <= config_.cache_pose_tol;
    if (fresh) {
      return &it->second.target;
    }
    state_.flow_cache.erase(it);
  }

  std::optional<FlowField> optical = ds_.optical_flow(a, b);
  if (!optical) {
    if (!warned_missing_flow_) {
      std::cerr << "warning: no optical flow available for frame pair (" << a << ","
                << b << "); flow supervision skipped for such pairs\n";
      warned_missing_flow_ = true;
    }
    return nullptr;
  }

  FlowField target;
  if (config_.flow_supervision == "optical") {
    target = std::move(*optical);
  } else if (config_.flow_supervision == "motion-gt") {
    // Diagnostic mode: exact analytic motion flow, bypassing the rendered
    // depth. Requires a synthetic dataset.
    if (!ds_.synth) {
      throw ValidationError("flow_supervision=motion-gt needs a synthetic dataset");
    }
    FlowTriple triple = synthetic_pair_flows(ds_.synth_canonical, ds_.synth_motions,
                                             ds_.synth_cameras[a], ds_.times[a],
                                             ds_.synth_cameras[b], ds_.times[b]);
    target = std::move(triple.motion);
  } else {
    const DepthMap depth =
        depth_for_reprojection(flow_render.depth, flow_render.alpha, ds_.width(),
                               ds_.height(), config_.flow_alpha_min);
    Camera cam_a = ds_.cameras[a];
    cam_a.extrinsics = state_.current_pose[a];
    Camera cam_b = ds_.cameras[b];
    cam_b.extrinsics = state_.current_pose[b];
    const FlowField fc = camera_flow(depth, cam_a, cam_b);
    const MotionMask* mask = ds_.masks[a] ? &*ds_.masks[a] : nullptr;
    target = motion_flow(*optical, fc, mask);
    // Degenerate reprojections (grazing depth, bad early geometry) can leave
    // implausibly large residual flows; drop them rather than letting them
    // dominate the loss.
    const double bound = std::hypot(ds_.width(), ds_.height());
    for (int y = 0; y < target.height; ++y) {
      for (int x = 0; x < target.width; ++x) {
        if (target.is_valid(x, y) &&
            std::hypot(target.dx(x, y), target.dy(x, y)) > bound) {
          target.set(x, y, 0.0, 0.0, false);
        }
      }
    }
  }
  ++state_.flow_computations;
  TrainState::CacheEntry& entry = state_.flow_cache[key];
  entry.target = std::move(target);
  entry.twist_a = state_.pose_residuals[a];
  entry.twist_b = state_.pose_residuals[b];
  return &entry.target;
}

StepLosses Trainer::compute_gaussian_gradients(int frame_a, int frame_b,
                                               StepGrads* grads) {
  StepLosses losses;
  losses.mode = TrainMode::kGaussians;

  const double t_b = ds_.times[frame_b];
  const DeformedState def_b = state_.field.deform(state_.scene, t_b);
  Camera cam_b = ds_.cameras[frame_b];
  cam_b.extrinsics = state_.current_pose[frame_b];

  const RenderOutput out_b = render(def_b.scene, cam_b, render_cfg_);
  const PhotometricResult photo =
      photometric_loss(out_b.color, ds_.images[frame_b], config_.lambda_dssim);
  losses.photo = photo.loss;

  RenderGrads up_b;
  up_b.d_color = photo.d_rendered.data;
  GradientBuffer gb = render_backward(def_b.scene, cam_b, render_cfg_, nullptr, up_b);

  DeformUpstream up;
  up.d_position = std::move(gb.state_t.d_position);
  up.d_rotation = std::move(gb.state_t.d_rotation);
  up.d_log_scale = std::move(gb.state_t.d_log_scale);

  VecX flow_param_grads;
  const bool flow_active =
      config_.lambda_flow > 0 && config_.flow_supervision != "off" &&
      state_.iter >= config_.flow_start_iter &&
      std::abs(ds_.times[frame_b] - ds_.times[frame_a]) <= config_.flow_max_gap;
  if (flow_active) {
    const double t_a = ds_.times[frame_a];
    const DeformedState def_a = state_.field.deform(state_.scene, t_a);
    Camera cam_a = ds_.cameras[frame_a];
    cam_a.extrinsics = state_.current_pose[frame_a];

    const RenderOutput out_a = render(def_a.scene, cam_a, render_cfg_, &def_b.scene);
    const FlowField* target = flow_target(frame_a, frame_b, out_a);
    if (target) {
      const FlowLossResult fl = flow_loss(*target, out_a.flow);
      losses.flow = fl.loss;
      if (!fl.empty_valid_set) {
        RenderGrads up_f;
        up_f.d_flow.resize(fl.d_gaussian.data.size());
        for (size_t i = 0; i < up_f.d_flow.size(); ++i) {
          up_f.d_flow[i] = config_.lambda_flow * fl.d_gaussian.data[i];
        }
        const GradientBuffer gf =
            render_backward(def_a.scene, cam_a, render_cfg_, &def_b.scene, up_f);
        const bool all = config_.flow_grad_scope == "all";
        if (config_.flow_grad_scope == "deform") {
          // A rigid shift of a gaussian's whole trajectory leaves the flow
          // unchanged, so the flow constraint carries no information about the
          // canonical attributes; feed it to the deformation parameters only.
          DeformUpstream up_flow;
          up_flow.d_position = gf.state_t1.d_position;
          up_flow.d_rotation.assign(state_.scene.size(), Vec4::Zero());
          up_flow.d_log_scale.assign(state_.scene.size(), Vec3::Zero());
          flow_param_grads = state_.field.deform_backward(state_.scene, t_b, up_flow)
                                 .d_params;
        } else {
          for (size_t i = 0; i < state_.scene.size(); ++i) {
            up.d_position[i] += gf.state_t1.d_position[i];
            if (all) {
              up.d_rotation[i] += gf.state_t1.d_rotation[i];
              up.d_log_scale[i] += gf.state_t1.d_log_scale[i];
            }
          }
        }
      }
    }
  }
  losses.total = losses.photo + config_.lambda_flow * losses.flow;

  grads->canonical = state_.field.deform_backward(state_.scene, t_b, up);
  if (flow_param_grads.size() > 0) {
    grads->canonical.d_params += flow_param_grads;
  }
  grads->d_opacity = std::move(gb.state_t.d_opacity_logit);
  grads->d_color = std::move(gb.state_t.d_color);
  grads->d_sh = std::move(gb.state_t.d_sh);
  return losses;
}

StepLosses Trainer::gaussian_step(int frame_a, int frame_b) {
  StepGrads sg;
  const StepLosses losses = compute_gaussian_gradients(frame_a, frame_b, &sg);
  const DeformGrads& dg = sg.canonical;

  // Gather / update / scatter.
  const size_t n = state_.scene.size();
  VecX p(n * 3), gp(n * 3), r(n * 4), gr(n * 4), s(n * 3), gs(n * 3);
  VecX o(n), go(n), c(n * 3), gc(n * 3);
  for (size_t i = 0; i < n; ++i) {
    const Gaussian3D& g3 = state_.scene.gaussians[i];
    p.segment<3>(i * 3) = g3.position;
    gp.segment<3>(i * 3) = dg.d_position[i];
    r.segment<4>(i * 4) = g3.rotation.coeffs();
    gr.segment<4>(i * 4) = dg.d_rotation[i];
    s.segment<3>(i * 3) = g3.log_scale;
    gs.segment<3>(i * 3) = dg.d_log_scale[i];
    o[i] = g3.opacity_logit;
    go[i] = sg.d_opacity[i];
    c.segment<3>(i * 3) = g3.color;
    gc.segment<3>(i * 3) = sg.d_color[i];
  }
  const double lr_pos = exponential_lr(config_.lr_position, config_.lr_position_final,
                                       state_.iter, config_.total_iters);
  auto span_of = [](VecX& v) { return std::span<double>(v.data(), v.size()); };
  auto cspan_of = [](const VecX& v) {
    return std::span<const double>(v.data(), v.size());
  };
  adam_step(state_.adam_position, span_of(p), cspan_of(gp), lr_pos);
  adam_step(state_.adam_rotation, span_of(r), cspan_of(gr), config_.lr_rotation);
  adam_step(state_.adam_scale, span_of(s), cspan_of(gs), config_.lr_scale);
  adam_step(state_.adam_opacity, span_of(o), cspan_of(go), config_.lr_opacity);
  adam_step(state_.adam_color, span_of(c), cspan_of(gc), config_.lr_color);
  VecX sh, gsh;
  if (state_.scene.has_sh) {
    sh.resize(n * 9);
    gsh.resize(n * 9);
    for (size_t i = 0; i < n; ++i) {
      for (int k = 0; k < 9; ++k) {
        sh[i * 9 + k] = state_.scene.gaussians[i].sh[k];
        gsh[i * 9 + k] = sg.d_sh[i][k];
      }
    }
    adam_step(state_.adam_sh, span_of(sh), cspan_of(gsh), config_.lr_color);
  }
  VecX dparams = state_.field.params();
  adam_step(state_.adam_deform,
            std::span<double>(dparams.data(), dparams.size()),
            std::span<const double>(dg.d_params.data(), dg.d_params.size()),
            config_.lr_deform);
  state_.field.params() = dparams;

  for (size_t i = 0; i < n; ++i) {
    Gaussian3D& g3 = state_.scene.gaussians[i];
    g3.position = p.segment<3>(i * 3);
    g3.rotation = {r[i * 4], r[i * 4 + 1], r[i * 4 + 2], r[i * 4 + 3]};
    g3.log_scale = s.segment<3>(i * 3);
    g3.opacity_logit = o[i];
    g3.color = c.segment<3>(i * 3);
    if (state_.scene.has_sh) {
      for (int k = 0; k < 9; ++k) {
        g3.sh[k] = sh[i * 9 + k];
      }
    }
  }
  return losses;
}

StepLosses Trainer::pose_step(int frame_a, int frame_b) {
  StepLosses losses;
  losses.mode = TrainMode::kPose;

  const double t_b = ds_.times[frame_b];
  const DeformedState def_b = state_.field.deform(state_.scene, t_b);

  PoseContext pc;
  pc.pre = state_.original_pose[frame_b] * state_.original_pose[frame_a].inverse();
  pc.twist = state_.pose_residuals[frame_b];
  pc.post = state_.current_pose[frame_a];

  RenderConfig rc = render_cfg_;
  rc.pose = pc;
  const Camera& cam_b = ds_.cameras[frame_b];  // intrinsics; extrinsics from pc

  const RenderOutput out = render(def_b.scene, cam_b, rc);
  const PhotometricResult photo =
      photometric_loss(out.color, ds_.images[frame_b], config_.lambda_dssim);
  losses.photo = photo.loss;
  losses.total = photo.loss;

  RenderGrads up;
  up.d_color = photo.d_rendered.data;
  const GradientBuffer gb = render_backward(def_b.scene, cam_b, rc, nullptr, up);

  Vec6 twist = state_.pose_residuals[frame_b];
  const auto lr = pose_lr_vector(config_);
  adam_step(state_.adam_pose[frame_b], std::span<double>(twist.data(), 6),
            std::span<const double>(gb.d_twist.data(), 6),
            std::span<const double>(lr.data(), 6));
  state_.pose_residuals[frame_b] = twist;
  state_.current_pose[frame_b] =
      pc.pre * se3_exp(twist) * state_.current_pose[frame_a];
  return losses;
}

Image Trainer::render_frame(int frame, double time) const {
  const DeformedState def = state_.field.deform(state_.scene, time);
  Camera cam = ds_.cameras[frame];
  cam.extrinsics = state_.current_pose[frame];
  return render(def.scene, cam, render_cfg_).color;
}

MetricsReport Trainer::evaluate_frames(const std::vector<int>& frames) const {
  MetricsReport rep;
  for (int f : frames) {
    const Image img = render_frame(f, ds_.times[f]);
    rep.frame_indices.push_back(f);
    rep.psnr.push_back(psnr(img, ds_.images[f]));
    rep.ssim.push_back(ssim_mean(img, ds_.images[f]));
  }
  if (!rep.psnr.empty()) {
    rep.mean_psnr = 0.0;
    rep.mean_ssim = 0.0;
    for (size_t i = 0; i < rep.psnr.size(); ++i) {
      rep.mean_psnr += rep.psnr[i];
      rep.mean_ssim += rep.ssim[i];
    }
    rep.mean_psnr /= static_cast<double>(rep.psnr.size());
    rep.mean_ssim /= static_cast<double>(rep.psnr.size());
  }
  return rep;
}

MetricsReport Trainer::evaluate_holdout() const {
  return evaluate_frames(state_.holdout_frames.empty() ? state_.train_frames
                                                       : state_.holdout_frames);
}

void Trainer::save_checkpoint(const io::fs::path& dir, const std::string& log_csv) const {
  io::fs::create_directories(dir);
  io::write_scene(dir / "scene.mgs1", state_.scene);
  io::write_deformation(dir / "deform.mgd1", state_.field);
  std::vector<Camera> poses = ds_.cameras;
  for (int f = 0; f < ds_.frame_count(); ++f) {
    poses[f].extrinsics = state_.current_pose[f];
  }
  io::write_cameras(dir / "poses.txt", poses);
  write_train_aux(dir / "adam.bin", state_);
  io::write_file_bytes(dir / "log.csv", log_csv);
  io::write_file_bytes(dir / "config.txt", config_.serialize());
}

void Trainer::train(const io::fs::path& out_dir,
                    const std::function<void(int64_t, const StepLosses&)>& on_step) {
  io::fs::create_directories(out_dir);
  std::string log = "iter,L_photo,L_flow,L_total,mode\n";
  bool checkpointed = false;
  try {
    while (state_.iter < config_.total_iters) {
      const auto [a, b] = current_pair();
      const TrainMode mode = scheduled_mode(state_.iter + 1);
      const StepLosses l = train_step(a, b, mode);
      log += std::to_string(state_.iter) + "," + io::format_double(l.photo) + "," +
             io::format_double(l.flow) + "," + io::format_double(l.total) + "," +
             (l.mode == TrainMode::kGaussians ? "gaussians" : "pose") + "\n";
      advance_cursor();
      if (config_.checkpoint_every > 0 &&
          state_.iter % config_.checkpoint_every == 0 &&
          state_.iter < config_.total_iters) {
        save_checkpoint(out_dir, log);
        checkpointed = true;
      }
      if (on_step) {
        on_step(state_.iter, l);
      }
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric failure at iteration " << state_.iter << ": " << e.what()
              << (checkpointed ? " (last checkpoint retained)" : "") << "\n";
    throw;
  }
  save_checkpoint(out_dir, log);

  // Final reconstruction quality on the training frames, for self-consistency
  // checks against later renders of the saved checkpoint.
  const MetricsReport rep = evaluate_frames(state_.train_frames);
  std::string metrics = "frame,psnr,ssim\n";
  for (size_t i = 0; i < rep.frame_indices.size(); ++i) {
    metrics += std::to_string(rep.frame_indices[i]) + "," +
               io::format_double(rep.psnr[i]) + "," + io::format_double(rep.ssim[i]) +
               "\n";
  }
  io::write_file_bytes(out_dir / "metrics.txt", metrics);
}

// --- checkpoint aux ----------------------------------------------------------

namespace {

void put_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint64_t get_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
void put_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
double get_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void put_adam(std::ostream& os, const AdamState& a) {
  put_u64(os, static_cast<uint64_t>(a.step));
  put_u64(os, static_cast<uint64_t>(a.m.size()));
  for (Eigen::Index i = 0; i < a.m.size(); ++i) put_f64(os, a.m[i]);
  for (Eigen::Index i = 0; i < a.v.size(); ++i) put_f64(os, a.v[i]);
}

void get_adam(std::istream& is, AdamState* a) {
  a->step = static_cast<int64_t>(get_u64(is));
  const uint64_t n = get_u64(is);
  a->m.resize(static_cast<Eigen::Index>(n));
  a->v.resize(static_cast<Eigen::Index>(n));
  for (uint64_t i = 0; i < n; ++i) a->m[static_cast<Eigen::Index>(i)] = get_f64(is);
  for (uint64_t i = 0; i < n; ++i) a->v[static_cast<Eigen::Index>(i)] = get_f64(is);
}

}  // namespace

void write_train_aux(const io::fs::path& path, const TrainState& st) {
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    throw IoError("cannot open '" + path.string() + "' for writing");
  }
  f.write("MGA1", 4);
  put_u64(f, static_cast<uint64_t>(st.iter));
  put_u64(f, static_cast<uint64_t>(st.epoch));
  put_u64(f, static_cast<uint64_t>(st.cursor));
  put_u64(f, static_cast<uint64_t>(st.flow_computations));
  put_u64(f, st.pose_residuals.size());
  for (const Vec6& t : st.pose_residuals) {
    for (int i = 0; i < 6; ++i) put_f64(f, t[i]);
  }
  put_u64(f, st.shuffle.size());
  for (int v : st.shuffle) put_u64(f, static_cast<uint64_t>(v));
  put_u64(f, st.train_frames.size());
  for (int v : st.train_frames) put_u64(f, static_cast<uint64_t>(v));
  put_u64(f, st.holdout_frames.size());
  for (int v : st.holdout_frames) put_u64(f, static_cast<uint64_t>(v));
  for (const AdamState* a :
       {&st.adam_position, &st.adam_rotation, &st.adam_scale, &st.adam_opacity,
        &st.adam_color, &st.adam_sh, &st.adam_deform}) {
    put_adam(f, *a);
  }
  put_u64(f, st.adam_pose.size());
  for (const AdamState& a : st.adam_pose) put_adam(f, a);
  if (!f) {
    throw IoError("failed writing '" + path.string() + "'");
  }
}

void read_train_aux(const io::fs::path& path, TrainState* st) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw IoError("cannot open '" + path.string() + "'");
  }
  char magic[4] = {};
  f.read(magic, 4);
  if (std::memcmp(magic, "MGA1", 4) != 0) {
    throw IoError("'" + path.string() + "' is not a trainer state file");
  }
  st->iter = static_cast<int64_t>(get_u64(f));
  st->epoch = static_cast<int64_t>(get_u64(f));
  st->cursor = get_u64(f);
  st->flow_computations = static_cast<int64_t>(get_u64(f));
  const uint64_t nf = get_u64(f);
  st->pose_residuals.assign(nf, Vec6::Zero());
  for (uint64_t i = 0; i < nf; ++i) {
    for (int k = 0; k < 6; ++k) st->pose_residuals[i][k] = get_f64(f);
  }
  auto read_ints = [&](std::vector<int>* v) {
    const uint64_t n = get_u64(f);
    v->resize(n);
    for (uint64_t i = 0; i < n; ++i) (*v)[i] = static_cast<int>(get_u64(f));
  };
  read_ints(&st->shuffle);
  read_ints(&st->train_frames);
  read_ints(&st->holdout_frames);
  for (AdamState* a :
       {&st->adam_position, &st->adam_rotation, &st->adam_scale, &st->adam_opacity,
        &st->adam_color, &st->adam_sh, &st->adam_deform}) {
    get_adam(f, a);
  }
  const uint64_t np = get_u64(f);
  st->adam_pose.assign(np, AdamState(6));
  for (uint64_t i = 0; i < np; ++i) get_adam(f, &st->adam_pose[i]);
  if (!f) {
    throw IoError("truncated trainer state file '" + path.string() + "'");
  }
}

Checkpoint Checkpoint::load(const io::fs::path& dir) {
  Checkpoint ck;
  ck.scene = io::read_scene(dir / "scene.mgs1");
  ck.field = io::read_deformation(dir / "deform.mgd1");
  ck.poses = io::read_cameras(dir / "poses.txt");
  ck.config = TrainConfig::from_config(io::ConfigMap::parse_file(dir / "config.txt"));
  TrainState aux;
  read_train_aux(dir / "adam.bin", &aux);
  ck.pose_residuals = aux.pose_residuals;
  ck.shuffle = aux.shuffle;
  if (ck.pose_residuals.size() != ck.poses.size()) {
    throw ValidationError("checkpoint pose data is inconsistent");
  }
  return ck;
}

}  // namespace mgs
