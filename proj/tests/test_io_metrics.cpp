#include "motiongs/io.hpp"
#include "motiongs/metrics.hpp"
#include "motiongs/trainer.hpp"

#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace mgs;

namespace {

io::fs::path tmpdir() {
  const io::fs::path p = io::fs::temp_directory_path() / "mgs_io_tests";
  io::fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("ppm round trip: write -> read -> write is byte identical") {
  oracle::Rng rng(90);
  Image img(21, 13, 3);
  for (double& v : img.data) v = rng.uniform(0, 1);
  const auto p1 = tmpdir() / "a.ppm";
  const auto p2 = tmpdir() / "b.ppm";
  io::write_ppm(p1, img);
  const Image back = io::read_ppm(p1);
  io::write_ppm(p2, back);
  CHECK(io::read_file_bytes(p1) == io::read_file_bytes(p2));
  // 16-bit quantization error bound
  for (size_t i = 0; i < img.data.size(); ++i) {
    CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5 / 65535.0 + 1e-12);
  }
}

TEST_CASE("pgm, pfm and flo round trips") {
  oracle::Rng rng(91);
  const auto dir = tmpdir();

  MotionMask mask(17, 9);
  for (auto& v : mask.dynamic) v = rng.uniform(0, 1) > 0.5 ? 1 : 0;
  io::write_motion_mask(dir / "m.pgm", mask);
  const MotionMask mback = io::read_motion_mask(dir / "m.pgm");
  CHECK(mback.width == 17);
  CHECK(mback.dynamic == mask.dynamic);

  DepthMap d(11, 7);
  for (size_t i = 0; i < d.z.size(); ++i) {
    d.valid[i] = rng.uniform(0, 1) > 0.3 ? 1 : 0;
    d.z[i] = d.valid[i] ? rng.uniform(0.5, 5.0) : 0.0;
  }
  io::write_pfm(dir / "d.pfm", d);
  const DepthMap dback = io::read_pfm(dir / "d.pfm");
  CHECK(dback.valid == d.valid);
  for (size_t i = 0; i < d.z.size(); ++i) {
    if (d.valid[i]) {
      CHECK(std::abs(dback.z[i] - d.z[i]) < 1e-6 * d.z[i]);
    }
  }

  FlowField f(19, 8);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 19; ++x) {
      f.set(x, y, rng.uniform(-9, 9), rng.uniform(-9, 9), rng.uniform(0, 1) > 0.2);
    }
  }
  // invalid pixels carry zeros by contract
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 19; ++x) {
      if (!f.is_valid(x, y)) f.set(x, y, 0, 0, false);
    }
  }
  io::write_flo(dir / "f.flo", f);
  CHECK(io::fs::exists(dir / "f.valid.pgm"));
  const FlowField fback = io::read_flo(dir / "f.flo");
  CHECK(fback.valid == f.valid);
  for (size_t i = 0; i < f.data.size(); ++i) {
    CHECK(std::abs(fback.data[i] - f.data[i]) < 1e-5);  // float32 storage
  }
  // second write is byte identical
  io::write_flo(dir / "f2.flo", fback);
  CHECK(io::read_file_bytes(dir / "f.flo") == io::read_file_bytes(dir / "f2.flo"));
}

TEST_CASE("camera text format round trips losslessly") {
  oracle::Rng rng(92);
  std::vector<Camera> cams;
  for (int i = 0; i < 5; ++i) {
    Camera c;
    c.fx = rng.uniform(50, 200);
    c.fy = rng.uniform(50, 200);
    c.cx = rng.uniform(10, 30);
    c.cy = rng.uniform(10, 30);
    c.width = 48;
    c.height = 36;
    c.extrinsics.rot = rng.quat();
    c.extrinsics.trans = rng.vec3(-2, 2);
    cams.push_back(c);
  }
  const auto dir = tmpdir();
  io::write_cameras(dir / "c1.txt", cams);
  const std::vector<Camera> back = io::read_cameras(dir / "c1.txt");
  io::write_cameras(dir / "c2.txt", back);
  CHECK(io::read_file_bytes(dir / "c1.txt") == io::read_file_bytes(dir / "c2.txt"));
  REQUIRE(back.size() == cams.size());
  for (size_t i = 0; i < cams.size(); ++i) {
    CHECK(back[i].fx == cams[i].fx);
    CHECK(back[i].extrinsics.rot.w == cams[i].extrinsics.rot.w);
    CHECK(back[i].extrinsics.trans == cams[i].extrinsics.trans);
  }
}

TEST_CASE("scene and deformation checkpoints round trip bit-exactly") {
  oracle::Rng rng(93);
  GaussianScene scene;
  scene.has_sh = true;
  for (int i = 0; i < 7; ++i) {
    Gaussian3D g;
    g.position = rng.vec3(-1, 1);
    g.rotation = rng.quat();
    g.log_scale = rng.vec3(-3, 0);
    g.opacity_logit = rng.normal();
    g.color = rng.vec3(0, 1);
    for (double& v : g.sh) v = rng.normal(0.05);
    scene.gaussians.push_back(g);
  }
  const auto dir = tmpdir();
  io::write_scene(dir / "s.mgs1", scene);
  const GaussianScene back = io::read_scene(dir / "s.mgs1");
  REQUIRE(back.size() == scene.size());
  CHECK(back.has_sh);
  for (size_t i = 0; i < scene.size(); ++i) {
    CHECK(back.gaussians[i].position == scene.gaussians[i].position);
    CHECK(back.gaussians[i].rotation.w == scene.gaussians[i].rotation.w);
    CHECK(back.gaussians[i].log_scale == scene.gaussians[i].log_scale);
    CHECK(back.gaussians[i].opacity_logit == scene.gaussians[i].opacity_logit);
    CHECK(back.gaussians[i].sh == scene.gaussians[i].sh);
  }
  io::write_scene(dir / "s2.mgs1", back);
  CHECK(io::read_file_bytes(dir / "s.mgs1") == io::read_file_bytes(dir / "s2.mgs1"));

  for (int variant = 0; variant < 2; ++variant) {
    DeformationField field = variant == 0
                                 ? DeformationField::per_gaussian_basis(7, {3, 1})
                                 : DeformationField::tiny_mlp({4, 2, 24, 3}, 55);
    for (Eigen::Index i = 0; i < field.params().size(); ++i) {
      field.params()[i] = rng.normal();
    }
    io::write_deformation(dir / "d.mgd1", field);
    const DeformationField fback = io::read_deformation(dir / "d.mgd1");
    CHECK(fback.variant() == field.variant());
    CHECK(fback.params() == field.params());
    io::write_deformation(dir / "d2.mgd1", fback);
    CHECK(io::read_file_bytes(dir / "d.mgd1") == io::read_file_bytes(dir / "d2.mgd1"));
  }
}

TEST_CASE("config parsing: values, comments, unknown keys with line numbers") {
  const std::string text =
      "# a comment\n"
      "alpha = 1.5\n"
      "name = motion   # trailing comment\n"
      "count = 42\n"
      "flag = true\n";
  const io::ConfigMap cfg = io::ConfigMap::parse_string(text, "test.cfg");
  CHECK(cfg.get_double("alpha", 0) == 1.5);
  CHECK(cfg.get_string("name", "") == "motion");
  CHECK(cfg.get_int("count", 0) == 42);
  CHECK(cfg.get_bool("flag", false));
  CHECK(cfg.get_double("missing", 7.5) == 7.5);

  CHECK_THROWS_WITH_AS(cfg.require_known_keys({"alpha", "name", "count"}),
                       doctest::Contains("test.cfg:5"), ValidationError);
  CHECK_THROWS_AS(io::ConfigMap::parse_string("novalue\n", "x"), ValidationError);
  CHECK_THROWS_WITH_AS((void)cfg.get_int("alpha", 0), doctest::Contains("test.cfg:2"),
                       ValidationError);
}

TEST_CASE("psnr: closed-form case and the 99 dB cap") {
  Image a(16, 16, 3, 0.4), b(16, 16, 3, 0.5);
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(psnr(a, a) == 99.0);
}

TEST_CASE("metrics report formats a table") {
  MetricsReport rep;
  rep.frame_indices = {0, 8};
  rep.psnr = {31.5, 29.25};
  rep.ssim = {0.95, 0.91};
  rep.mean_psnr = 30.375;
  rep.mean_ssim = 0.93;
  const std::string t = rep.table();
  CHECK(t.find("31.5") != std::string::npos);
  CHECK(t.find("mean") != std::string::npos);
  CHECK(rep.csv().find("0,31.5,0.95") != std::string::npos);
}

TEST_CASE("trainer aux state round trips") {
  const Dataset ds = helpers::make_dataset(helpers::trainer_spec());
  TrainConfig cfg;
  cfg.total_iters = 10;
  cfg.flow_start_iter = 0;
  cfg.pose_start_iter = 5;
  cfg.init_gaussians = 10;
  cfg.holdout_every = 0;
  cfg.mlp.hidden = 8;
  cfg.mlp.layers = 2;
  Trainer tr(ds, cfg);
  for (int i = 0; i < 6; ++i) {
    const auto [a, b] = tr.current_pair();
    tr.train_step(a, b, tr.scheduled_mode(tr.state().iter + 1));
    tr.advance_cursor();
  }
  const auto dir = tmpdir();
  write_train_aux(dir / "adam.bin", tr.state());
  TrainState loaded;
  read_train_aux(dir / "adam.bin", &loaded);
  CHECK(loaded.iter == tr.state().iter);
  CHECK(loaded.shuffle == tr.state().shuffle);
  CHECK(loaded.pose_residuals.size() == tr.state().pose_residuals.size());
  for (size_t i = 0; i < loaded.pose_residuals.size(); ++i) {
    CHECK(loaded.pose_residuals[i] == tr.state().pose_residuals[i]);
  }
  CHECK(loaded.adam_position.m == tr.state().adam_position.m);
  CHECK(loaded.adam_deform.v == tr.state().adam_deform.v);
}

TEST_CASE("checkpoint directory round trips through Checkpoint::load") {
  const Dataset ds = helpers::make_dataset(helpers::trainer_spec(77, 5));
  TrainConfig cfg;
  cfg.total_iters = 8;
  cfg.flow_start_iter = 0;
  cfg.pose_start_iter = 4;
  cfg.pose_interval = 2;
  cfg.init_gaussians = 12;
  cfg.holdout_every = 0;
  cfg.mlp.hidden = 8;
  cfg.mlp.layers = 2;
  Trainer tr(ds, cfg);
  const io::fs::path out = io::fs::temp_directory_path() / "mgs_ckpt_roundtrip";
  tr.train(out);

  const Checkpoint ck = Checkpoint::load(out);
  CHECK(ck.scene.size() == tr.state().scene.size());
  CHECK(ck.field.params() == tr.state().field.params());
  REQUIRE(ck.poses.size() == ds.cameras.size());
  for (size_t f = 0; f < ck.poses.size(); ++f) {
    CHECK(ck.poses[f].extrinsics.trans == tr.state().current_pose[f].trans);
  }
  CHECK(ck.shuffle == tr.state().shuffle);
  CHECK(ck.config.total_iters == cfg.total_iters);
  CHECK(io::fs::exists(out / "log.csv"));
  CHECK(io::fs::exists(out / "metrics.txt"));
  io::fs::remove_all(out);
}
