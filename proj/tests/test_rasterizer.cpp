#include "motiongs/rasterizer.hpp"

#include "doctest.h"
#include "oracles.hpp"

#include <omp.h>

using namespace mgs;

namespace {

Camera small_camera(int w = 16, int h = 16, double fx = 60) {
  Camera cam;
  cam.fx = fx;
  cam.fy = fx;
  cam.cx = w / 2.0;
  cam.cy = h / 2.0;
  cam.width = w;
  cam.height = h;
  return cam;
}

// A scene whose splats land inside the image with a few pixels of extent.
GaussianScene random_scene(oracle::Rng& rng, int count, bool with_sh = false,
                           double logit_lo = -1.0, double logit_hi = 2.5) {
  GaussianScene scene;
  scene.has_sh = with_sh;
  for (int i = 0; i < count; ++i) {
    Gaussian3D g;
    g.position = {rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15),
                  rng.uniform(1.4, 2.6)};
    g.rotation = rng.quat();
    g.log_scale = rng.vec3(std::log(0.02), std::log(0.09));
    g.opacity_logit = rng.uniform(logit_lo, logit_hi);
    g.color = rng.vec3(0.1, 0.9);
    if (with_sh) {
      for (double& v : g.sh) {
        v = rng.uniform(-0.1, 0.1);
      }
    }
    scene.gaussians.push_back(g);
  }
  return scene;
}

}  // namespace

TEST_CASE("single opaque splat renders its color, alpha ~1 and its depth") {
  GaussianScene scene;
  Gaussian3D g;
  g.position = {0, 0, 2.0};
  g.log_scale = Vec3::Constant(std::log(0.2));
  g.opacity_logit = 20.0;  // opacity -> 1
  g.color = {0.8, 0.4, 0.2};
  scene.gaussians.push_back(g);

  const Camera cam = small_camera();
  RenderConfig cfg;
  const RenderOutput out = render(scene, cam, cfg);
  const int cx = 8, cy = 8;  // mu2d lands exactly at the center
  // alpha is clamped at 0.999 at the center pixel
  const size_t p = cy * 16 + cx;
  CHECK(out.alpha[p] == doctest::Approx(0.999).epsilon(1e-6));
  CHECK(out.color.at(cx, cy, 0) == doctest::Approx(0.8 * 0.999).epsilon(1e-4));
  CHECK(out.depth[p] == doctest::Approx(2.0 * 0.999).epsilon(1e-6));
}

TEST_CASE("empty scene renders the background with zero alpha") {
  GaussianScene scene;
  const Camera cam = small_camera();
  RenderConfig cfg;
  cfg.background = {0.2, 0.5, 0.7};
  const RenderOutput out = render(scene, cam, cfg);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      CHECK(out.color.at(x, y, 0) == 0.2);
      CHECK(out.color.at(x, y, 1) == 0.5);
      CHECK(out.color.at(x, y, 2) == 0.7);
      CHECK(out.alpha[y * 16 + x] == 0.0);
    }
  }
}

TEST_CASE("render matches the untiled brute-force blend oracle") {
  oracle::Rng rng(40);
  const Camera cam = small_camera(8, 8, 40);
  for (int trial = 0; trial < 10; ++trial) {
    const GaussianScene scene = random_scene(rng, 2, trial % 2 == 1);
    RenderConfig cfg;
    cfg.background = rng.vec3(0.0, 0.3);
    const RenderOutput out = render(scene, cam, cfg);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        const Vec3 expect =
            oracle::blend_pixel_oracle(scene, cam, cfg.background, x, y);
        for (int c = 0; c < 3; ++c) {
          CHECK(std::abs(out.color.at(x, y, c) - expect[c]) < 1e-10);
        }
      }
    }
  }
}

TEST_CASE("tiled render equals the serial reference bit for bit") {
  oracle::Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const int count = 1 + static_cast<int>(rng.uniform(1, 50));
    const GaussianScene scene = random_scene(rng, count);
    const Camera cam = small_camera(32, 32, 70);
    RenderConfig cfg;
    cfg.background = rng.vec3(0.0, 0.3);
    cfg.tile_size = trial % 3 == 0 ? 8 : (trial % 3 == 1 ? 16 : 5);
    const RenderOutput tiled = render(scene, cam, cfg);
    const RenderOutput ref = render_reference(scene, cam, cfg);
    CHECK(tiled.color.data == ref.color.data);
    CHECK(tiled.depth == ref.depth);
    CHECK(tiled.alpha == ref.alpha);

    RenderConfig whole = cfg;
    whole.tile_size = 64;  // single tile covering the image
    const RenderOutput one = render(scene, cam, whole);
    CHECK(one.color.data == ref.color.data);
  }
}

TEST_CASE("render is invariant to the OpenMP thread count") {
  oracle::Rng rng(42);
  const GaussianScene scene = random_scene(rng, 25);
  const GaussianScene next = random_scene(rng, 25);
  const Camera cam = small_camera(32, 32, 70);
  RenderConfig cfg;
  cfg.tile_size = 8;

  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const RenderOutput a = render(scene, cam, cfg, &next);
  omp_set_num_threads(2);
  const RenderOutput b = render(scene, cam, cfg, &next);
  omp_set_num_threads(saved);
  CHECK(a.color.data == b.color.data);
  CHECK(a.flow.data == b.flow.data);
  CHECK(a.flow.valid == b.flow.valid);
}

TEST_CASE("cull_and_tile: containment and corner overlap") {
  GaussianScene scene;
  Gaussian3D g;
  g.position = {0, 0, 2.0};
  g.log_scale = Vec3::Constant(std::log(0.01));  // tiny splat
  g.opacity_logit = 2.0;
  scene.gaussians.push_back(g);
  const Camera cam = small_camera(32, 32, 70);
  RenderConfig cfg;
  cfg.tile_size = 16;
  const SplatList list = cull_and_tile(scene, cam, cfg);
  REQUIRE(list.tile_entries.size() == 4);
  int hits = 0;
  for (const auto& t : list.tile_entries) {
    hits += static_cast<int>(t.size());
  }
  // center (16,16) sits on the corner of all four 16px tiles; the dilated
  // footprint is a couple of pixels so all four tiles see it
  CHECK(hits == 4);

  // a splat fully inside one tile appears exactly once
  scene.gaussians[0].position = {-0.2, -0.2, 2.0};
  const SplatList list2 = cull_and_tile(scene, cam, cfg);
  int hits2 = 0;
  for (const auto& t : list2.tile_entries) {
    hits2 += static_cast<int>(t.size());
  }
  CHECK(hits2 == 1);

  // a 3-sigma radius of ~5px centered on the tile corner overlaps 4 tiles
  scene.gaussians[0].position = {0, 0, 2.0};
  scene.gaussians[0].log_scale = Vec3::Constant(std::log(0.0465));
  scene.gaussians[0].opacity_logit = 20.0;
  const SplatList list3 = cull_and_tile(scene, cam, cfg);
  int hits3 = 0;
  for (const auto& t : list3.tile_entries) {
    hits3 += static_cast<int>(t.size());
  }
  CHECK(hits3 == 4);
}

TEST_CASE("gaussians behind the near plane are excluded") {
  GaussianScene scene;
  Gaussian3D g;
  g.position = {0, 0, -1.0};
  scene.gaussians.push_back(g);
  const Camera cam = small_camera();
  const SplatList list = cull_and_tile(scene, cam, RenderConfig{});
  CHECK(list.splats.empty());
}

TEST_CASE("mismatched scene sizes are rejected") {
  oracle::Rng rng(43);
  const GaussianScene a = random_scene(rng, 3);
  const GaussianScene b = random_scene(rng, 4);
  const Camera cam = small_camera();
  CHECK_THROWS_AS(render(a, cam, RenderConfig{}, &b), ValidationError);
}

TEST_CASE("identity deformation gives zero gaussian flow") {
  oracle::Rng rng(44);
  const GaussianScene scene = random_scene(rng, 12);
  const Camera cam = small_camera(32, 32, 70);
  RenderConfig cfg;
  const RenderOutput out = render(scene, cam, cfg, &scene);
  size_t valid = 0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      if (!out.flow.is_valid(x, y)) {
        continue;
      }
      ++valid;
      CHECK(std::abs(out.flow.dx(x, y)) < 1e-10);
      CHECK(std::abs(out.flow.dy(x, y)) < 1e-10);
    }
  }
  CHECK(valid > 20);
}

TEST_CASE("rigid image-plane translation shows up exactly in the flow") {
  oracle::Rng rng(45);
  GaussianScene scene;
  const double z = 2.0;
  for (int i = 0; i < 10; ++i) {
    Gaussian3D g;
    g.position = {rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25), z};
    g.rotation = rng.quat();
    g.log_scale = rng.vec3(std::log(0.03), std::log(0.08));
    g.opacity_logit = rng.uniform(1.0, 3.0);
    g.color = rng.vec3(0.2, 0.9);
    scene.gaussians.push_back(g);
  }
  const Camera cam = small_camera(32, 32, 70);
  const double dx_px = 2.0, dy_px = -1.0;
  GaussianScene moved = scene;
  for (Gaussian3D& g : moved.gaussians) {
    g.position.x() += dx_px * z / cam.fx;
    g.position.y() += dy_px * z / cam.fy;
  }
  RenderConfig cfg;
  const RenderOutput out = render(scene, cam, cfg, &moved);
  size_t checked = 0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const size_t p = y * 32 + x;
      if (out.alpha[p] <= 0.5) {
        continue;
      }
      REQUIRE(out.flow.is_valid(x, y));
      ++checked;
      CHECK(std::abs(out.flow.dx(x, y) - dx_px) < 1e-6);
      CHECK(std::abs(out.flow.dy(x, y) - dy_px) < 1e-6);
    }
  }
  CHECK(checked > 30);
}

TEST_CASE("single splat pure translation: flow equals the displacement") {
  GaussianScene scene;
  Gaussian3D g;
  g.position = {0, 0, 2.0};
  g.log_scale = Vec3::Constant(std::log(0.15));
  g.opacity_logit = 20.0;
  g.color = {1, 1, 1};
  scene.gaussians.push_back(g);
  const Camera cam = small_camera(32, 32, 70);
  GaussianScene moved = scene;
  moved.gaussians[0].position.x() += 2.0 * 2.0 / cam.fx;  // +2 px at z=2

  const RenderOutput out = render(scene, cam, RenderConfig{}, &moved);
  for (int y = 12; y < 20; ++y) {
    for (int x = 12; x < 20; ++x) {
      REQUIRE(out.flow.is_valid(x, y));
      CHECK(std::abs(out.flow.dx(x, y) - 2.0) < 1e-6);
      CHECK(std::abs(out.flow.dy(x, y)) < 1e-6);
    }
  }
}

TEST_CASE("blending weights sum to acc_alpha and transmittance decreases") {
  oracle::Rng rng(46);
  const GaussianScene scene = random_scene(rng, 20);
  const Camera cam = small_camera(24, 24, 60);
  const RenderOutput out = render(scene, cam, RenderConfig{});
  for (double a : out.alpha) {
    CHECK(a >= 0.0);
    CHECK(a <= 1.0 + 1e-12);
  }
}

// ---- backward ----------------------------------------------------------------

namespace {

struct FlatScene {
  std::vector<double*> ptrs;
  std::vector<double> grads;
};

// All differentiable parameters of a scene in a fixed order, paired with the
// analytic gradients from a GradientBuffer.
void flatten(GaussianScene& scene, const SceneGrads& g, FlatScene* out,
             bool with_sh) {
  for (size_t i = 0; i < scene.size(); ++i) {
    Gaussian3D& gg = scene.gaussians[i];
    for (int k = 0; k < 3; ++k) {
      out->ptrs.push_back(&gg.position[k]);
      out->grads.push_back(g.d_position[i][k]);
    }
    double* rot[4] = {&gg.rotation.w, &gg.rotation.x, &gg.rotation.y, &gg.rotation.z};
    for (int k = 0; k < 4; ++k) {
      out->ptrs.push_back(rot[k]);
      out->grads.push_back(g.d_rotation[i][k]);
    }
    for (int k = 0; k < 3; ++k) {
      out->ptrs.push_back(&gg.log_scale[k]);
      out->grads.push_back(g.d_log_scale[i][k]);
    }
    out->ptrs.push_back(&gg.opacity_logit);
    out->grads.push_back(g.d_opacity_logit[i]);
    for (int k = 0; k < 3; ++k) {
      out->ptrs.push_back(&gg.color[k]);
      out->grads.push_back(g.d_color[i][k]);
    }
    if (with_sh) {
      for (int k = 0; k < 9; ++k) {
        out->ptrs.push_back(&gg.sh[k]);
        out->grads.push_back(g.d_sh[i][k]);
      }
    }
  }
}

}  // namespace

TEST_CASE("analytic gradients match finite differences (color/depth/alpha)") {
  oracle::Rng rng(47);
  const Camera cam = small_camera(8, 8, 40);
  int checked = 0;
  for (int trial = 0; trial < 4; ++trial) {
    GaussianScene scene = random_scene(rng, 3, trial % 2 == 1, -0.5, 2.0);
    RenderConfig cfg;
    cfg.background = {0.1, 0.2, 0.3};

    // random but fixed upstream weights make the scalar loss generic
    std::vector<double> wc(8 * 8 * 3), wd(8 * 8), wa(8 * 8);
    for (double& v : wc) v = rng.uniform(-1, 1);
    for (double& v : wd) v = rng.uniform(-1, 1);
    for (double& v : wa) v = rng.uniform(-1, 1);

    auto loss = [&](const GaussianScene& s) {
      const RenderOutput out = render(s, cam, cfg);
      double L = 0;
      for (size_t i = 0; i < wc.size(); ++i) L += wc[i] * out.color.data[i];
      for (size_t i = 0; i < wd.size(); ++i) L += wd[i] * out.depth[i];
      for (size_t i = 0; i < wa.size(); ++i) L += wa[i] * out.alpha[i];
      return L;
    };

    RenderGrads up;
    up.d_color = wc;
    up.d_depth = wd;
    up.d_alpha = wa;
    const GradientBuffer gb = render_backward(scene, cam, cfg, nullptr, up);

    FlatScene flat;
    flatten(scene, gb.state_t, &flat, scene.has_sh);
    for (size_t p = 0; p < flat.ptrs.size(); ++p) {
      const double x0 = *flat.ptrs[p];
      const double fd = oracle::central_diff(
          [&](double x) {
            *flat.ptrs[p] = x;
            const double v = loss(scene);
            *flat.ptrs[p] = x0;
            return v;
          },
          x0);
      ++checked;
      CHECK(oracle::grad_close(flat.grads[p], fd));
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("flow-path gradients: t+1 state matches FD, t state is stopped") {
  oracle::Rng rng(48);
  const Camera cam = small_camera(8, 8, 40);
  for (int trial = 0; trial < 3; ++trial) {
    GaussianScene state_t = random_scene(rng, 3, false, 1.0, 3.0);
    GaussianScene state_t1 = state_t;
    for (Gaussian3D& g : state_t1.gaussians) {  // mild deformation
      g.position += Vec3(rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02),
                         rng.uniform(-0.01, 0.01));
      g.log_scale += Vec3::Constant(rng.uniform(-0.05, 0.05));
    }
    RenderConfig cfg;

    std::vector<double> wf(8 * 8 * 2);
    for (double& v : wf) v = rng.uniform(-1, 1);

    auto loss = [&](const GaussianScene& s1) {
      const RenderOutput out = render(state_t, cam, cfg, &s1);
      double L = 0;
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
          if (!out.flow.is_valid(x, y)) {
            continue;
          }
          L += wf[(y * 8 + x) * 2] * out.flow.dx(x, y) +
               wf[(y * 8 + x) * 2 + 1] * out.flow.dy(x, y);
        }
      }
      return L;
    };

    RenderGrads up;
    up.d_flow = wf;
    const GradientBuffer gb = render_backward(state_t, cam, cfg, &state_t1, up);
    REQUIRE(gb.has_state_t1);

    // stop-gradient contract on the time-t state
    for (size_t i = 0; i < state_t.size(); ++i) {
      CHECK(gb.state_t.d_position[i].norm() == 0.0);
      CHECK(gb.state_t.d_opacity_logit[i] == 0.0);
    }

    FlatScene flat;
    flatten(state_t1, gb.state_t1, &flat, false);
    for (size_t p = 0; p < flat.ptrs.size(); ++p) {
      const double x0 = *flat.ptrs[p];
      const double fd = oracle::central_diff(
          [&](double x) {
            *flat.ptrs[p] = x;
            const double v = loss(state_t1);
            *flat.ptrs[p] = x0;
            return v;
          },
          x0);
      CHECK(oracle::grad_close(flat.grads[p], fd));
    }
  }
}

TEST_CASE("pose twist gradient matches finite differences") {
  oracle::Rng rng(49);
  const Camera cam = small_camera(8, 8, 40);
  for (int trial = 0; trial < 3; ++trial) {
    GaussianScene scene = random_scene(rng, 3, trial == 2, 0.0, 2.0);
    PoseContext pc;
    pc.pre = se3_exp((Vec6() << rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                      rng.uniform(-0.1, 0.1), rng.uniform(-0.05, 0.05),
                      rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05))
                         .finished());
    pc.post = se3_exp((Vec6() << rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                       rng.uniform(-0.1, 0.1), rng.uniform(-0.05, 0.05),
                       rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05))
                          .finished());
    for (int k = 0; k < 6; ++k) {
      pc.twist[k] = rng.uniform(-0.05, 0.05);
    }
    RenderConfig cfg;
    cfg.pose = pc;
    cfg.background = {0.1, 0.1, 0.1};

    std::vector<double> wc(8 * 8 * 3);
    for (double& v : wc) v = rng.uniform(-1, 1);
    auto loss = [&](const Vec6& twist) {
      RenderConfig c2 = cfg;
      c2.pose->twist = twist;
      const RenderOutput out = render(scene, cam, c2);
      double L = 0;
      for (size_t i = 0; i < wc.size(); ++i) L += wc[i] * out.color.data[i];
      return L;
    };

    RenderGrads up;
    up.d_color = wc;
    const GradientBuffer gb = render_backward(scene, cam, cfg, nullptr, up);
    REQUIRE(gb.has_pose);
    for (int k = 0; k < 6; ++k) {
      const double x0 = pc.twist[k];
      const double fd = oracle::central_diff(
          [&](double x) {
            Vec6 tw = pc.twist;
            tw[k] = x;
            return loss(tw);
          },
          x0);
      CHECK(oracle::grad_close(gb.d_twist[k], fd));
    }
  }
}

TEST_CASE("gaussian outside the frustum receives zero gradients") {
  GaussianScene scene;
  Gaussian3D g;
  g.position = {50.0, 0, 2.0};  // far outside the image
  g.log_scale = Vec3::Constant(std::log(0.05));
  g.opacity_logit = 2.0;
  scene.gaussians.push_back(g);
  const Camera cam = small_camera();
  RenderGrads up;
  up.d_color.assign(16 * 16 * 3, 1.0);
  const GradientBuffer gb = render_backward(scene, cam, RenderConfig{}, nullptr, up);
  CHECK(gb.state_t.d_position[0].norm() == 0.0);
  CHECK(gb.state_t.d_rotation[0].norm() == 0.0);
  CHECK(gb.state_t.d_opacity_logit[0] == 0.0);
  CHECK(gb.state_t.d_color[0].norm() == 0.0);
}

TEST_CASE("opacity gradient descends toward brighter front splat") {
  // loss rewards brightness: L = -sum(color); gradient of loss w.r.t. the
  // opacity logit must be negative when the splat is brighter than the bg
  GaussianScene scene;
  Gaussian3D g;
  g.position = {0, 0, 2.0};
  g.log_scale = Vec3::Constant(std::log(0.1));
  g.opacity_logit = 0.5;
  g.color = {0.9, 0.9, 0.9};
  scene.gaussians.push_back(g);
  const Camera cam = small_camera();
  RenderConfig cfg;
  cfg.background = Vec3::Zero();
  RenderGrads up;
  up.d_color.assign(16 * 16 * 3, -1.0);
  const GradientBuffer gb = render_backward(scene, cam, cfg, nullptr, up);
  CHECK(gb.state_t.d_opacity_logit[0] < 0.0);
}

TEST_CASE("backward is invariant to the thread count") {
  oracle::Rng rng(50);
  GaussianScene scene = random_scene(rng, 20);
  const Camera cam = small_camera(32, 32, 70);
  RenderConfig cfg;
  cfg.tile_size = 8;
  RenderGrads up;
  up.d_color.assign(32 * 32 * 3, 0.0);
  for (double& v : up.d_color) v = rng.uniform(-1, 1);

  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const GradientBuffer a = render_backward(scene, cam, cfg, nullptr, up);
  omp_set_num_threads(2);
  const GradientBuffer b = render_backward(scene, cam, cfg, nullptr, up);
  omp_set_num_threads(saved);
  for (size_t i = 0; i < scene.size(); ++i) {
    CHECK(a.state_t.d_position[i] == b.state_t.d_position[i]);
    CHECK(a.state_t.d_rotation[i] == b.state_t.d_rotation[i]);
    CHECK(a.state_t.d_opacity_logit[i] == b.state_t.d_opacity_logit[i]);
  }
}
