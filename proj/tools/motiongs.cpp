// motiongs: deformable gaussian-splatting toolkit.
//
//   synth       generate a synthetic dynamic dataset with ground truth
//   train       optimize a scene + deformation field (+ camera poses)
//   render      render a checkpoint at a frame/timestamp
//   decouple    split optical flow into camera flow and motion flow
//   eval        PSNR/SSIM report on held-out frames
//   dump-poses  refined camera trajectory with residual magnitudes
//
// Exit codes: 0 ok, 1 validation error, 2 numeric failure, 3 I/O error.

#include "motiongs/dataset.hpp"
#include "motiongs/flow.hpp"
#include "motiongs/io.hpp"
#include "motiongs/losses.hpp"
#include "motiongs/metrics.hpp"
#include "motiongs/rasterizer.hpp"
#include "motiongs/synthetic.hpp"
#include "motiongs/trainer.hpp"

#include "CLI11.hpp"

#include <omp.h>

#include <iostream>
#include <random>

namespace {

using namespace mgs;
namespace fs = io::fs;

std::string pair_name(const char* prefix, int a, int b) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04d_%04d.flo", prefix, a, b);
  return buf;
}

std::string indexed_name(const char* prefix, const char* ext, int i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04d.%s", prefix, i, ext);
  return buf;
}

// ---------------------------------------------------------------- synth ----

int cmd_synth(const fs::path& spec_file, const fs::path& out_dir,
              std::optional<uint64_t> seed, double noise_rot_deg,
              double noise_trans) {
  SyntheticSceneSpec spec =
      parse_synthetic_spec(io::ConfigMap::parse_file(spec_file));
  if (seed) {
    spec.seed = *seed;
  }
  spec.validate();

  const SyntheticData data = generate_synthetic(spec);
  fs::create_directories(out_dir);

  std::vector<Camera> cams;
  for (const SyntheticFrame& f : data.frames) {
    cams.push_back(f.camera);
  }

  std::string times;
  for (const SyntheticFrame& f : data.frames) {
    times += io::format_double(f.time) + "\n";
  }
  io::write_file_bytes(out_dir / "times.txt", times);

  if (noise_rot_deg > 0 || noise_trans > 0) {
    // fixed-magnitude random-axis perturbations; the clean trajectory is kept
    // alongside for pose-error evaluation
    io::write_cameras(out_dir / "cameras_gt.txt", cams);
    std::mt19937_64 rng(spec.seed ^ 0xC0FFEEull);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Camera> noisy = cams;
    for (Camera& c : noisy) {
      Vec3 axis(gauss(rng), gauss(rng), gauss(rng));
      axis.normalize();
      Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
      dir.normalize();
      SE3 delta;
      delta.rot = quat_from_axis_angle(axis * (noise_rot_deg * M_PI / 180.0));
      delta.trans = dir * noise_trans;
      c.extrinsics = delta * c.extrinsics;
    }
    io::write_cameras(out_dir / "cameras.txt", noisy);
  } else {
    io::write_cameras(out_dir / "cameras.txt", cams);
  }

  for (int f = 0; f < spec.frames; ++f) {
    io::write_ppm(out_dir / indexed_name("frame", "ppm", f), data.frames[f].image);
    io::write_pfm(out_dir / indexed_name("depth", "pfm", f), data.frames[f].depth);
    io::write_motion_mask(out_dir / indexed_name("mask", "pgm", f),
                          data.frames[f].mask);
  }
  for (int f = 0; f + 1 < spec.frames; ++f) {
    io::write_flo(out_dir / pair_name("flow", f, f + 1), data.pairs[f].optical);
    io::write_flo(out_dir / pair_name("camflow", f, f + 1), data.pairs[f].camera);
    io::write_flo(out_dir / pair_name("motflow", f, f + 1), data.pairs[f].motion);
  }
  io::write_file_bytes(out_dir / "synth.cfg", serialize_synthetic_spec(spec));
  std::cout << "wrote " << spec.frames << " frames to " << out_dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- train ----

int cmd_train(const fs::path& dataset_dir, const std::string& config_file,
              const fs::path& out_dir, std::optional<uint64_t> seed,
              std::optional<double> lambda_flow, std::optional<bool> pose_refine,
              const std::string& flow_supervision) {
  const Dataset ds = Dataset::load(dataset_dir);
  TrainConfig cfg;
  if (!config_file.empty()) {
    cfg = TrainConfig::from_config(io::ConfigMap::parse_file(config_file));
  }
  if (seed) cfg.seed = *seed;
  if (lambda_flow) cfg.lambda_flow = *lambda_flow;
  if (pose_refine) cfg.pose_refine = *pose_refine;
  if (!flow_supervision.empty()) cfg.flow_supervision = flow_supervision;
  if (ds.synth) cfg.background = ds.synth->background;
  cfg.validate();

  Trainer trainer(ds, cfg);
  const auto t0 = std::chrono::steady_clock::now();
  trainer.train(out_dir, [&](int64_t iter, const StepLosses& l) {
    if (iter % 200 == 0 || iter == cfg.total_iters) {
      std::cout << "iter " << iter << "  photo " << l.photo << "  flow " << l.flow
                << "\n";
    }
  });
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const MetricsReport rep = trainer.evaluate_holdout();
  std::cout << "trained " << cfg.total_iters << " iters in " << secs << "s\n";
  std::cout << (trainer.state().holdout_frames.empty() ? "training-frame"
                                                       : "held-out")
            << " mean PSNR " << rep.mean_psnr << " dB, SSIM " << rep.mean_ssim
            << "\n";
  return 0;
}

// --------------------------------------------------------------- render ----

// Middlebury flow color wheel (55 bins over RY/YG/GC/CB/BM/MR).
Image flow_to_color(const FlowField& flow) {
  constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
  constexpr int N = RY + YG + GC + CB + BM + MR;
  double wheel[N][3];
  int k = 0;
  for (int i = 0; i < RY; ++i, ++k) {
    wheel[k][0] = 1.0;
    wheel[k][1] = static_cast<double>(i) / RY;
    wheel[k][2] = 0.0;
  }
  for (int i = 0; i < YG; ++i, ++k) {
    wheel[k][0] = 1.0 - static_cast<double>(i) / YG;
    wheel[k][1] = 1.0;
    wheel[k][2] = 0.0;
  }
  for (int i = 0; i < GC; ++i, ++k) {
    wheel[k][0] = 0.0;
    wheel[k][1] = 1.0;
    wheel[k][2] = static_cast<double>(i) / GC;
  }
  for (int i = 0; i < CB; ++i, ++k) {
    wheel[k][0] = 0.0;
    wheel[k][1] = 1.0 - static_cast<double>(i) / CB;
    wheel[k][2] = 1.0;
  }
  for (int i = 0; i < BM; ++i, ++k) {
    wheel[k][0] = static_cast<double>(i) / BM;
    wheel[k][1] = 0.0;
    wheel[k][2] = 1.0;
  }
  for (int i = 0; i < MR; ++i, ++k) {
    wheel[k][0] = 1.0;
    wheel[k][1] = 0.0;
    wheel[k][2] = 1.0 - static_cast<double>(i) / MR;
  }

  double max_rad = 1e-9;
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      if (flow.is_valid(x, y)) {
        max_rad = std::max(max_rad, std::hypot(flow.dx(x, y), flow.dy(x, y)));
      }
    }
  }
  Image img(flow.width, flow.height, 3);
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      if (!flow.is_valid(x, y)) {
        continue;  // invalid pixels stay black
      }
      const double u = flow.dx(x, y) / max_rad, v = flow.dy(x, y) / max_rad;
      const double rad = std::hypot(u, v);
      const double a = std::atan2(-v, -u) / M_PI;
      const double fk = (a + 1.0) / 2.0 * (N - 1);
      const int k0 = static_cast<int>(fk) % N;
      const int k1 = (k0 + 1) % N;
      const double f = fk - std::floor(fk);
      for (int c = 0; c < 3; ++c) {
        double col = (1 - f) * wheel[k0][c] + f * wheel[k1][c];
        col = rad <= 1 ? 1 - rad * (1 - col) : col * 0.75;
        img.at(x, y, c) = col;
      }
    }
  }
  return img;
}

void write_double_raster(const fs::path& path, const std::vector<double>& data,
                         int w, int h) {
  DepthMap d(w, h);
  d.z = data;
  for (size_t i = 0; i < d.z.size(); ++i) {
    d.valid[i] = 1;
  }
  io::write_pfm(path, d);
}

int cmd_render(const fs::path& ckpt_dir, const fs::path& dataset_dir, int frame,
               std::optional<double> time, const fs::path& out_image,
               const std::vector<std::string>& emit) {
  const Checkpoint ck = Checkpoint::load(ckpt_dir);
  const Dataset ds = Dataset::load(dataset_dir);
  if (frame < 0 || frame >= ds.frame_count()) {
    throw ValidationError("frame index " + std::to_string(frame) +
                          " out of range [0," + std::to_string(ds.frame_count()) +
                          ")");
  }
  const double t = time ? *time : ds.times[frame];
  RenderConfig rc;
  rc.background = ck.config.background;
  rc.tile_size = ck.config.tile_size;
  rc.flow_alpha_min = ck.config.flow_alpha_min;

  const DeformedState def = ck.field.deform(ck.scene, t);
  const Camera& cam = ck.poses[frame];

  const bool want_flow =
      std::find(emit.begin(), emit.end(), "flow") != emit.end();
  std::optional<DeformedState> def_next;
  if (want_flow) {
    if (frame + 1 >= ds.frame_count()) {
      throw ValidationError("--emit flow needs a successor frame");
    }
    def_next = ck.field.deform(ck.scene, ds.times[frame + 1]);
  }
  const RenderOutput out =
      render(def.scene, cam, rc, def_next ? &def_next->scene : nullptr);
  io::write_ppm(out_image, out.color);

  fs::path base = out_image;
  base.replace_extension();
  for (const std::string& what : emit) {
    if (what == "depth") {
      write_double_raster(base.string() + ".depth.pfm", out.depth, cam.width,
                          cam.height);
    } else if (what == "alpha") {
      write_double_raster(base.string() + ".alpha.pfm", out.alpha, cam.width,
                          cam.height);
    } else if (what == "flow") {
      io::write_flo(base.string() + ".flow.flo", out.flow);
      io::write_ppm(base.string() + ".flow.ppm", flow_to_color(out.flow));
    } else {
      throw ValidationError("unknown --emit kind '" + what + "'");
    }
  }
  std::cout << "rendered frame " << frame << " at t=" << t << " -> "
            << out_image.string() << "\n";
  return 0;
}

// ------------------------------------------------------------- decouple ----

int cmd_decouple(const fs::path& dataset_dir, const std::string& depth_source,
                 const fs::path& ckpt_dir, const fs::path& out_dir) {
  const Dataset ds = Dataset::load(dataset_dir);
  if (depth_source != "gt" && depth_source != "checkpoint") {
    throw ValidationError("--depth must be gt or checkpoint");
  }
  std::optional<Checkpoint> ck;
  if (depth_source == "checkpoint") {
    if (ckpt_dir.empty()) {
      throw ValidationError("--depth checkpoint requires --checkpoint <dir>");
    }
    ck = Checkpoint::load(ckpt_dir);
  }

  std::vector<std::pair<int, int>> pairs;
  std::string missing;
  for (int f = 0; f + 1 < ds.frame_count(); ++f) {
    if (ds.flow_files.count({f, f + 1})) {
      pairs.push_back({f, f + 1});
    } else {
      missing += " " + Dataset::flow_name(f, f + 1);
    }
  }
  if (pairs.empty()) {
    throw ValidationError("dataset has no optical flow files; missing:" + missing);
  }
  if (!missing.empty()) {
    std::cerr << "warning: skipping pairs without flow files:" << missing << "\n";
  }

  fs::create_directories(out_dir);
  RenderConfig rc;
  if (ck) {
    rc.background = ck->config.background;
    rc.tile_size = ck->config.tile_size;
  }
  for (const auto& [a, b] : pairs) {
    DepthMap depth;
    Camera cam_a = ds.cameras[a];
    Camera cam_b = ds.cameras[b];
    if (depth_source == "gt") {
      if (!ds.depths[a]) {
        throw ValidationError("no ground-truth depth for frame " + std::to_string(a));
      }
      depth = *ds.depths[a];
    } else {
      cam_a = ck->poses[a];
      cam_b = ck->poses[b];
      const DeformedState def = ck->field.deform(ck->scene, ds.times[a]);
      const RenderOutput out = render(def.scene, cam_a, rc);
      depth = depth_for_reprojection(out.depth, out.alpha, cam_a.width,
                                     cam_a.height);
    }
    const FlowField optical = io::read_flo(ds.flow_files.at({a, b}));
    const FlowField fc = camera_flow(depth, cam_a, cam_b);
    const MotionMask* mask = ds.masks[a] ? &*ds.masks[a] : nullptr;
    const FlowField fm = motion_flow(optical, fc, mask);
    io::write_flo(out_dir / pair_name("camflow", a, b), fc);
    io::write_flo(out_dir / pair_name("motflow", a, b), fm);
  }
  std::cout << "decoupled " << pairs.size() << " frame pairs -> "
            << out_dir.string() << "\n";
  return 0;
}

// ----------------------------------------------------------------- eval ----

int cmd_eval(const fs::path& ckpt_dir, const fs::path& dataset_dir,
             const fs::path& csv_out) {
  const Checkpoint ck = Checkpoint::load(ckpt_dir);
  const Dataset ds = Dataset::load(dataset_dir);
  RenderConfig rc;
  rc.background = ck.config.background;
  rc.tile_size = ck.config.tile_size;

  std::vector<int> frames;
  for (int f = 0; f < ds.frame_count(); ++f) {
    if (ck.config.holdout_every > 0 && f % ck.config.holdout_every == 0) {
      frames.push_back(f);
    }
  }
  if (frames.empty()) {
    for (int f = 0; f < ds.frame_count(); ++f) {
      frames.push_back(f);
    }
    std::cerr << "note: no held-out frames (holdout_every="
              << ck.config.holdout_every << "); evaluating all frames\n";
  }

  MetricsReport rep;
  for (int f : frames) {
    const DeformedState def = ck.field.deform(ck.scene, ds.times[f]);
    const Image img = render(def.scene, ck.poses[f], rc).color;
    rep.frame_indices.push_back(f);
    rep.psnr.push_back(psnr(img, ds.images[f]));
    rep.ssim.push_back(ssim_mean(img, ds.images[f]));
    rep.mean_psnr += rep.psnr.back();
    rep.mean_ssim += rep.ssim.back();
  }
  rep.mean_psnr /= static_cast<double>(frames.size());
  rep.mean_ssim /= static_cast<double>(frames.size());

  std::cout << rep.table();
  const fs::path out = csv_out.empty() ? ckpt_dir / "eval.csv" : csv_out;
  io::write_file_bytes(out, rep.csv());
  return 0;
}

// ----------------------------------------------------------- dump-poses ----

int cmd_dump_poses(const fs::path& ckpt_dir, const fs::path& out_file) {
  const Checkpoint ck = Checkpoint::load(ckpt_dir);
  std::string text;
  for (size_t f = 0; f < ck.poses.size(); ++f) {
    // camera line plus the residual twist norm; extra columns are ignored by
    // the camera reader so the file still parses as a trajectory
    text += io::format_camera_line(ck.poses[f]) + " " +
            io::format_double(ck.pose_residuals[f].norm()) + "\n";
  }
  io::write_file_bytes(out_file, text);
  std::cout << "wrote " << ck.poses.size() << " poses -> " << out_file.string()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"motiongs: deformable gaussian splatting with motion-flow guidance"};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads,
                 "worker threads (0 = library default); results are identical "
                 "for any value");

  std::optional<uint64_t> seed;
  app.add_option("--seed", seed, "random seed override");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_spec, synth_out;
  double noise_rot = 0.0, noise_trans = 0.0;
  synth->add_option("spec", synth_spec, "scene spec file")->required();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--pose-noise-rot", noise_rot,
                    "per-frame rotation noise to apply to cameras.txt (degrees)");
  synth->add_option("--pose-noise-trans", noise_trans,
                    "per-frame translation noise (world units)");

  // train
  auto* train = app.add_subcommand("train", "train on a dataset");
  std::string train_ds, train_cfg, train_out, flow_sup;
  std::optional<double> lambda_flow;
  std::optional<bool> pose_refine;
  train->add_option("dataset", train_ds, "dataset directory")->required();
  train->add_option("--config", train_cfg, "training config file");
  train->add_option("--out", train_out, "checkpoint directory")->required();
  train->add_option("--lambda-flow", lambda_flow, "flow loss weight override");
  std::string pose_refine_str;
  train->add_option("--pose-refine", pose_refine_str,
                    "enable pose refinement (on|off)")
      ->check(CLI::IsMember({"on", "off"}));
  train->add_option("--flow-supervision", flow_sup,
                    "motion|optical|off, or motion-gt to use exact analytic "
                    "targets on synthetic datasets")
      ->check(CLI::IsMember({"motion", "optical", "motion-gt", "off"}));

  // render
  auto* rendercmd = app.add_subcommand("render", "render a checkpoint");
  std::string r_ckpt, r_ds, r_out;
  int r_frame = 0;
  std::optional<double> r_time;
  std::vector<std::string> r_emit;
  rendercmd->add_option("checkpoint", r_ckpt, "checkpoint directory")->required();
  rendercmd->add_option("dataset", r_ds, "dataset directory")->required();
  rendercmd->add_option("--frame", r_frame, "frame index (camera + default time)");
  rendercmd->add_option("--time", r_time, "timestamp override in [0,1]");
  rendercmd->add_option("--out", r_out, "output image (.ppm)")->required();
  rendercmd->add_option("--emit", r_emit, "auxiliary rasters: depth|flow|alpha");

  // decouple
  auto* dec = app.add_subcommand("decouple", "optical flow -> camera + motion flow");
  std::string d_ds, d_depth = "gt", d_ckpt, d_out;
  dec->add_option("dataset", d_ds, "dataset directory")->required();
  dec->add_option("--depth", d_depth, "depth source: gt|checkpoint");
  dec->add_option("--checkpoint", d_ckpt, "checkpoint directory");
  dec->add_option("--out", d_out, "output directory")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "held-out PSNR/SSIM report");
  std::string e_ckpt, e_ds, e_csv;
  ev->add_option("checkpoint", e_ckpt, "checkpoint directory")->required();
  ev->add_option("dataset", e_ds, "dataset directory")->required();
  ev->add_option("--out", e_csv, "csv output path (default <checkpoint>/eval.csv)");

  // dump-poses
  auto* dp = app.add_subcommand("dump-poses", "refined camera trajectory");
  std::string p_ckpt, p_out;
  dp->add_option("checkpoint", p_ckpt, "checkpoint directory")->required();
  dp->add_option("--out", p_out, "output text file")->required();

  CLI11_PARSE(app, argc, argv);

  if (threads > 0) {
    omp_set_num_threads(threads);
  }

  try {
    if (*synth) {
      return cmd_synth(synth_spec, synth_out, seed, noise_rot, noise_trans);
    }
    if (*train) {
      if (!pose_refine_str.empty()) {
        pose_refine = pose_refine_str == "on";
      }
      return cmd_train(train_ds, train_cfg, train_out, seed, lambda_flow,
                       pose_refine, flow_sup);
    }
    if (*rendercmd) {
      return cmd_render(r_ckpt, r_ds, r_frame, r_time, r_out, r_emit);
    }
    if (*dec) {
      return cmd_decouple(d_ds, d_depth, d_ckpt, d_out);
    }
    if (*ev) {
      return cmd_eval(e_ckpt, e_ds, e_csv);
    }
    if (*dp) {
      return cmd_dump_poses(p_ckpt, p_out);
    }
  } catch (const mgs::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const mgs::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const mgs::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
