#include "motiongs/synthetic.hpp"

#include "motiongs/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace mgs {

Vec3 MotionModel::position(const Vec3& p0, double t) const {
  switch (kind) {
    case Kind::kStatic:
      return p0;
    case Kind::kLinear:
      return p0 + velocity * t;
    case Kind::kOrbit: {
      const double a = orbit_phase + orbit_rate * t;
      return orbit_center + orbit_radius * Vec3(std::cos(a), std::sin(a), 0.0);
    }
  }
  return p0;
}

void SyntheticSceneSpec::validate() const {
  if (frames < 2) {
    throw ValidationError("synthetic spec: frames must be >= 2");
  }
  if (width < 8 || height < 8) {
    throw ValidationError("synthetic spec: image size must be at least 8x8");
  }
  if (n_static < 0 || n_dynamic < 0) {
    throw ValidationError("synthetic spec: gaussian counts must be >= 0");
  }
  if (camera_mode != "orbit" && camera_mode != "line" && camera_mode != "static") {
    throw ValidationError("synthetic spec: camera_mode must be orbit|line|static");
  }
  if (motion_mode != "linear" && motion_mode != "orbit" && motion_mode != "mixed") {
    throw ValidationError("synthetic spec: motion_mode must be linear|orbit|mixed");
  }
  if (!(scale_min > 0) || scale_max < scale_min) {
    throw ValidationError("synthetic spec: bad scale range");
  }
  if (!(cam_distance > 0)) {
    throw ValidationError("synthetic spec: cam_distance must be positive");
  }
}

namespace {

const std::vector<std::string> kSpecKeys = {
    "seed", "frames", "width", "height", "fx", "fy", "static", "dynamic",
    "camera_mode", "cam_distance", "cam_height", "cam_span",
    "box_center_x", "box_center_y", "box_center_z",
    "box_extent_x", "box_extent_y", "box_extent_z",
    "scale_min", "scale_max", "dyn_scale_min", "dyn_scale_max",
    "opacity_logit_min", "opacity_logit_max",
    "with_sh", "motion_mode", "motion_scale",
    "dyn_color_r", "dyn_color_g", "dyn_color_b",
    "background_r", "background_g", "background_b"};

}  // namespace

SyntheticSceneSpec parse_synthetic_spec(const io::ConfigMap& cfg) {
  cfg.require_known_keys(kSpecKeys);
  SyntheticSceneSpec s;
  s.seed = static_cast<uint64_t>(cfg.get_int("seed", 1));
  s.frames = static_cast<int>(cfg.get_int("frames", 2));
  s.width = static_cast<int>(cfg.get_int("width", 64));
  s.height = static_cast<int>(cfg.get_int("height", 64));
  s.fx = cfg.get_double("fx", 0.0);
  s.fy = cfg.get_double("fy", 0.0);
  s.n_static = static_cast<int>(cfg.get_int("static", 8));
  s.n_dynamic = static_cast<int>(cfg.get_int("dynamic", 1));
  s.camera_mode = cfg.get_string("camera_mode", "orbit");
  s.cam_distance = cfg.get_double("cam_distance", 3.0);
  s.cam_height = cfg.get_double("cam_height", 0.8);
  s.cam_span = cfg.get_double("cam_span", 0.5);
  s.box_center = {cfg.get_double("box_center_x", 0.0),
                  cfg.get_double("box_center_y", 0.0),
                  cfg.get_double("box_center_z", 0.0)};
  s.box_extent = {cfg.get_double("box_extent_x", 1.2),
                  cfg.get_double("box_extent_y", 1.0),
                  cfg.get_double("box_extent_z", 0.6)};
  s.scale_min = cfg.get_double("scale_min", 0.05);
  s.scale_max = cfg.get_double("scale_max", 0.12);
  s.dyn_scale_min = cfg.get_double("dyn_scale_min", 0.0);
  s.dyn_scale_max = cfg.get_double("dyn_scale_max", 0.0);
  s.opacity_logit_min = cfg.get_double("opacity_logit_min", 0.5);
  s.opacity_logit_max = cfg.get_double("opacity_logit_max", 2.5);
  s.with_sh = cfg.get_bool("with_sh", false);
  s.motion_mode = cfg.get_string("motion_mode", "mixed");
  s.motion_scale = cfg.get_double("motion_scale", 0.6);
  s.dyn_color = {cfg.get_double("dyn_color_r", -1.0),
                 cfg.get_double("dyn_color_g", -1.0),
                 cfg.get_double("dyn_color_b", -1.0)};
  s.background = {cfg.get_double("background_r", 0.05),
                  cfg.get_double("background_g", 0.05),
                  cfg.get_double("background_b", 0.08)};
  s.validate();
  return s;
}

std::string serialize_synthetic_spec(const SyntheticSceneSpec& s) {
  std::ostringstream os;
  os << "seed = " << s.seed << "\n";
  os << "frames = " << s.frames << "\n";
  os << "width = " << s.width << "\n";
  os << "height = " << s.height << "\n";
  os << "fx = " << io::format_double(s.fx) << "\n";
  os << "fy = " << io::format_double(s.fy) << "\n";
  os << "static = " << s.n_static << "\n";
  os << "dynamic = " << s.n_dynamic << "\n";
  os << "camera_mode = " << s.camera_mode << "\n";
  os << "cam_distance = " << io::format_double(s.cam_distance) << "\n";
  os << "cam_height = " << io::format_double(s.cam_height) << "\n";
  os << "cam_span = " << io::format_double(s.cam_span) << "\n";
  os << "box_center_x = " << io::format_double(s.box_center.x()) << "\n";
  os << "box_center_y = " << io::format_double(s.box_center.y()) << "\n";
  os << "box_center_z = " << io::format_double(s.box_center.z()) << "\n";
  os << "box_extent_x = " << io::format_double(s.box_extent.x()) << "\n";
  os << "box_extent_y = " << io::format_double(s.box_extent.y()) << "\n";
  os << "box_extent_z = " << io::format_double(s.box_extent.z()) << "\n";
  os << "scale_min = " << io::format_double(s.scale_min) << "\n";
  os << "scale_max = " << io::format_double(s.scale_max) << "\n";
  os << "dyn_scale_min = " << io::format_double(s.dyn_scale_min) << "\n";
  os << "dyn_scale_max = " << io::format_double(s.dyn_scale_max) << "\n";
  os << "opacity_logit_min = " << io::format_double(s.opacity_logit_min) << "\n";
  os << "opacity_logit_max = " << io::format_double(s.opacity_logit_max) << "\n";
  os << "with_sh = " << (s.with_sh ? 1 : 0) << "\n";
  os << "motion_mode = " << s.motion_mode << "\n";
  os << "motion_scale = " << io::format_double(s.motion_scale) << "\n";
  os << "dyn_color_r = " << io::format_double(s.dyn_color.x()) << "\n";
  os << "dyn_color_g = " << io::format_double(s.dyn_color.y()) << "\n";
  os << "dyn_color_b = " << io::format_double(s.dyn_color.z()) << "\n";
  os << "background_r = " << io::format_double(s.background.x()) << "\n";
  os << "background_g = " << io::format_double(s.background.y()) << "\n";
  os << "background_b = " << io::format_double(s.background.z()) << "\n";
  return os.str();
}

Camera make_lookat_camera(const Vec3& eye, const Vec3& target, double fx, double fy,
                          int width, int height) {
  const Vec3 fwd = (target - eye).normalized();
  Vec3 up(0, 0, 1);
  if (std::abs(fwd.dot(up)) > 0.999) {
    up = Vec3(0, 1, 0);
  }
  const Vec3 right = fwd.cross(up).normalized();
  const Vec3 down = fwd.cross(right);  // camera +y points world-down
  Mat3 R;
  R.row(0) = right.transpose();
  R.row(1) = down.transpose();
  R.row(2) = fwd.transpose();
  Camera cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.width = width;
  cam.height = height;
  cam.extrinsics.rot = quat_from_rotation(R);
  cam.extrinsics.trans = -(quat_to_rotation(cam.extrinsics.rot) * eye);
  return cam;
}

GaussianScene synthetic_scene_at(const GaussianScene& canonical,
                                 const std::vector<MotionModel>& motions, double t) {
  if (motions.size() != canonical.size()) {
    throw ValidationError("motion model count must match the scene");
  }
  GaussianScene out = canonical;
  for (size_t i = 0; i < out.size(); ++i) {
    out.gaussians[i].position = motions[i].position(canonical.gaussians[i].position, t);
  }
  return out;
}

namespace {

bool same_camera(const Camera& a, const Camera& b) {
  return a.fx == b.fx && a.fy == b.fy && a.cx == b.cx && a.cy == b.cy &&
         a.width == b.width && a.height == b.height &&
         a.extrinsics.rot.w == b.extrinsics.rot.w &&
         a.extrinsics.rot.x == b.extrinsics.rot.x &&
         a.extrinsics.rot.y == b.extrinsics.rot.y &&
         a.extrinsics.rot.z == b.extrinsics.rot.z &&
         a.extrinsics.trans == b.extrinsics.trans;
}

// Per-pixel dominant gaussian via straight alpha blending, kept separate from
// the rasterizer module so the ground truth never depends on the system under
// test.
struct SurfaceMap {
  std::vector<int> dominant;  // -1 when not covered
  std::vector<double> z;      // camera z of the dominant gaussian center
  std::vector<double> acc;
};

SurfaceMap surface_map(const GaussianScene& state, const Camera& cam) {
  struct Proj {
    int index;
    double z;
    double opacity;
    double cutoff;
    Vec2 mu2d;
    Mat2 icov;
  };
  const Mat3 R = cam.extrinsics.rotation();
  const Vec3 tr = cam.extrinsics.trans;
  std::vector<Proj> projs;
  projs.reserve(state.size());
  for (size_t i = 0; i < state.size(); ++i) {
    const Gaussian3D& g = state.gaussians[i];
    const Vec3 xc = R * g.position + tr;
    if (xc.z() <= kNearPlane) {
      continue;
    }
    const double o = sigmoid(g.opacity_logit);
    if (o <= 1.0 / 255.0) {
      continue;
    }
    Proj p;
    p.index = static_cast<int>(i);
    p.z = xc.z();
    p.opacity = o;
    p.cutoff = std::min(9.0, 2.0 * std::log(255.0 * o));
    p.mu2d = {cam.fx * xc.x() / xc.z() + cam.cx, cam.fy * xc.y() / xc.z() + cam.cy};
    const Mat23 J = project_jacobian(cam, xc);
    const Mat23 M = J * R;
    const Mat2 cov = M * build_covariance(g) * M.transpose() +
                     kCov2dDilation * Mat2::Identity();
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    p.icov << cov(1, 1) / det, -cov(0, 1) / det, -cov(1, 0) / det, cov(0, 0) / det;
    projs.push_back(p);
  }
  std::sort(projs.begin(), projs.end(), [](const Proj& a, const Proj& b) {
    if (a.z != b.z) return a.z < b.z;
    return a.index < b.index;
  });

  SurfaceMap out;
  const size_t npx = static_cast<size_t>(cam.width) * cam.height;
  out.dominant.assign(npx, -1);
  out.z.assign(npx, 0.0);
  out.acc.assign(npx, 0.0);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      double T = 1.0, acc = 0.0, best_w = 0.0;
      int best = -1;
      double best_z = 0.0;
      for (const Proj& p : projs) {
        const Vec2 d(x - p.mu2d.x(), y - p.mu2d.y());
        const double maha = d.dot(p.icov * d);
        if (!(maha <= p.cutoff)) {
          continue;
        }
        const double alpha = std::min(0.999, p.opacity * std::exp(-0.5 * maha));
        const double w = alpha * T;
        if (w > best_w) {
          best_w = w;
          best = p.index;
          best_z = p.z;
        }
        acc += w;
        T *= 1.0 - alpha;
      }
      const size_t at = static_cast<size_t>(y) * cam.width + x;
      if (acc >= 0.5 && best >= 0) {
        out.dominant[at] = best;
        out.z[at] = best_z;
        out.acc[at] = acc;
      }
    }
  }
  return out;
}

}  // namespace

FlowTriple synthetic_pair_flows(const GaussianScene& canonical,
                                const std::vector<MotionModel>& motions,
                                const Camera& cam_a, double t_a,
                                const Camera& cam_b, double t_b,
                                MotionMask* mask_a, DepthMap* depth_a) {
  const GaussianScene state_a = synthetic_scene_at(canonical, motions, t_a);
  const GaussianScene state_b = synthetic_scene_at(canonical, motions, t_b);
  const SurfaceMap surf_a = surface_map(state_a, cam_a);
  const SurfaceMap surf_b = surface_map(state_b, cam_b);
  const bool still = same_camera(cam_a, cam_b);

  const Mat3 Ra_inv = cam_a.extrinsics.rotation().transpose();
  const Vec3 ta = cam_a.extrinsics.trans;
  const Mat3 Rb = cam_b.extrinsics.rotation();
  const Vec3 tb = cam_b.extrinsics.trans;

  FlowTriple out;
  out.optical = FlowField(cam_a.width, cam_a.height);
  out.camera = FlowField(cam_a.width, cam_a.height);
  out.motion = FlowField(cam_a.width, cam_a.height);
  if (mask_a) {
    *mask_a = MotionMask(cam_a.width, cam_a.height);
  }
  if (depth_a) {
    *depth_a = DepthMap(cam_a.width, cam_a.height);
  }

  for (int y = 0; y < cam_a.height; ++y) {
    for (int x = 0; x < cam_a.width; ++x) {
      const size_t at = static_cast<size_t>(y) * cam_a.width + x;
      const int gi = surf_a.dominant[at];
      if (gi < 0) {
        continue;
      }
      const double z = surf_a.z[at];
      if (depth_a) {
        depth_a->z[at] = z;
        depth_a->valid[at] = 1;
      }
      const bool dyn = motions[gi].kind != MotionModel::Kind::kStatic;
      if (mask_a) {
        mask_a->dynamic[at] = dyn ? 1 : 0;
      }

      // Surface point on the dominant gaussian's depth plane.
      const Vec3 xc_a((x - cam_a.cx) / cam_a.fx * z, (y - cam_a.cy) / cam_a.fy * z, z);
      const Vec3 X = Ra_inv * (xc_a - ta);

      // Camera flow: the point held still, seen from camera b.
      Vec2 pc;
      if (still) {
        pc = Vec2(x, y);
      } else {
        const Vec3 xc_b = Rb * X + tb;
        if (xc_b.z() <= kNearPlane) {
          continue;
        }
        pc = {cam_b.fx * xc_b.x() / xc_b.z() + cam_b.cx,
              cam_b.fy * xc_b.y() / xc_b.z() + cam_b.cy};
      }
      const Vec2 fc = still ? Vec2(0.0, 0.0) : Vec2(pc.x() - x, pc.y() - y);

      // Motion flow: the point carried by the gaussian's displacement.
      const Vec3 delta = motions[gi].position(canonical.gaussians[gi].position, t_b) -
                         motions[gi].position(canonical.gaussians[gi].position, t_a);
      const Vec3 moved = X + delta;
      const Vec3 xc_bm = Rb * moved + tb;
      if (xc_bm.z() <= kNearPlane) {
        continue;
      }
      const Vec2 pm(cam_b.fx * xc_bm.x() / xc_bm.z() + cam_b.cx,
                    cam_b.fy * xc_bm.y() / xc_bm.z() + cam_b.cy);
      const Vec2 fm = dyn ? Vec2(pm.x() - pc.x(), pm.y() - pc.y()) : Vec2(0.0, 0.0);

      // Occlusion / bounds check at the target pixel.
      const long tx = std::lround(pm.x()), ty = std::lround(pm.y());
      if (tx < 0 || ty < 0 || tx >= cam_b.width || ty >= cam_b.height) {
        continue;
      }
      if (surf_b.dominant[static_cast<size_t>(ty) * cam_b.width + tx] != gi) {
        continue;
      }

      // optical := camera + motion, one IEEE add per component, so the
      // decomposition identity holds bitwise.
      out.camera.set(x, y, fc.x(), fc.y(), true);
      out.motion.set(x, y, fm.x(), fm.y(), true);
      out.optical.set(x, y, fc.x() + fm.x(), fc.y() + fm.y(), true);
    }
  }
  return out;
}

void synthetic_scene_setup(const SyntheticSceneSpec& spec, GaussianScene* canonical,
                           std::vector<MotionModel>* motions,
                           std::vector<Camera>* cameras) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto uni_in = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };

  const double fx = spec.fx > 0 ? spec.fx : 1.2 * spec.width;
  const double fy = spec.fy > 0 ? spec.fy : fx;

  canonical->gaussians.clear();
  canonical->has_sh = spec.with_sh;
  canonical->canonical_time = 0.0;
  motions->clear();

  const int total = spec.n_static + spec.n_dynamic;
  for (int i = 0; i < total; ++i) {
    const bool dyn = i >= spec.n_static;
    Gaussian3D g;
    const double shrink = dyn ? 0.5 : 1.0;  // dynamic ones start nearer the middle
    for (int k = 0; k < 3; ++k) {
      g.position[k] = spec.box_center[k] +
                      uni_in(-spec.box_extent[k], spec.box_extent[k]) * shrink;
    }
    Quat q{gauss(rng), gauss(rng), gauss(rng), gauss(rng)};
    g.rotation = q.normalized();
    double lo = spec.scale_min, hi = spec.scale_max, bump = 0.0;
    if (dyn) {
      if (spec.dyn_scale_min > 0 && spec.dyn_scale_max >= spec.dyn_scale_min) {
        lo = spec.dyn_scale_min;
        hi = spec.dyn_scale_max;
      } else {
        bump = std::log(1.4);
      }
    }
    for (int k = 0; k < 3; ++k) {
      g.log_scale[k] = std::log(uni_in(lo, hi)) + bump;
    }
    g.opacity_logit = dyn ? uni_in(2.0, 3.0)
                          : uni_in(spec.opacity_logit_min, spec.opacity_logit_max);
    for (int k = 0; k < 3; ++k) {
      g.color[k] = dyn ? uni_in(0.5, 0.95) : uni_in(0.15, 0.9);
    }
    if (dyn && spec.dyn_color.minCoeff() >= 0) {
      g.color = spec.dyn_color;
    }
    if (spec.with_sh) {
      for (double& v : g.sh) {
        v = uni_in(-0.08, 0.08);
      }
    }

    MotionModel m;
    if (dyn) {
      const bool orbit = spec.motion_mode == "orbit" ||
                         (spec.motion_mode == "mixed" && (i - spec.n_static) % 2 == 1);
      if (orbit) {
        m.kind = MotionModel::Kind::kOrbit;
        m.orbit_radius = uni_in(0.2, 0.35);
        m.orbit_phase = uni_in(0.0, 2.0 * M_PI);
        m.orbit_rate = spec.motion_scale / m.orbit_radius;
        m.orbit_center = g.position - m.orbit_radius * Vec3(std::cos(m.orbit_phase),
                                                            std::sin(m.orbit_phase), 0.0);
      } else {
        m.kind = MotionModel::Kind::kLinear;
        Vec3 dir(gauss(rng), gauss(rng), 0.3 * gauss(rng));
        m.velocity = spec.motion_scale * dir.normalized();
      }
    }
    // Canonical state is defined as the motion-model position at t = 0.
    g.position = m.position(g.position, 0.0);
    canonical->gaussians.push_back(g);
    motions->push_back(m);
  }

  cameras->clear();
  for (int f = 0; f < spec.frames; ++f) {
    const double t = spec.frames > 1 ? static_cast<double>(f) / (spec.frames - 1) : 0.0;
    Vec3 eye;
    if (spec.camera_mode == "orbit") {
      const double a = spec.cam_span * (t - 0.5);
      eye = spec.box_center + Vec3(spec.cam_distance * std::cos(a),
                                   spec.cam_distance * std::sin(a), spec.cam_height);
    } else if (spec.camera_mode == "line") {
      eye = spec.box_center +
            Vec3(spec.cam_distance, spec.cam_span * (t - 0.5), spec.cam_height);
    } else {
      eye = spec.box_center + Vec3(spec.cam_distance, 0.0, spec.cam_height);
    }
    cameras->push_back(make_lookat_camera(eye, spec.box_center, fx, fy, spec.width,
                                          spec.height));
  }
}

SyntheticData generate_synthetic(const SyntheticSceneSpec& spec) {
  SyntheticData data;
  std::vector<Camera> cams;
  synthetic_scene_setup(spec, &data.canonical, &data.motions, &cams);

  RenderConfig rc;
  rc.background = spec.background;
  for (int f = 0; f < spec.frames; ++f) {
    SyntheticFrame frame;
    frame.camera = cams[f];
    frame.time = spec.frames > 1 ? static_cast<double>(f) / (spec.frames - 1) : 0.0;
    const GaussianScene state = synthetic_scene_at(data.canonical, data.motions,
                                                   frame.time);
    frame.image = render(state, frame.camera, rc).color;
    data.frames.push_back(std::move(frame));
  }
  for (int f = 0; f + 1 < spec.frames; ++f) {
    MotionMask mask;
    DepthMap depth;
    FlowTriple triple = synthetic_pair_flows(
        data.canonical, data.motions, data.frames[f].camera, data.frames[f].time,
        data.frames[f + 1].camera, data.frames[f + 1].time, &mask, &depth);
    data.frames[f].mask = std::move(mask);
    data.frames[f].depth = std::move(depth);
    data.pairs.push_back(std::move(triple));
  }
  // Depth and mask for the last frame.
  {
    SyntheticFrame& last = data.frames.back();
    const GaussianScene state = synthetic_scene_at(data.canonical, data.motions,
                                                   last.time);
    const SurfaceMap surf = surface_map(state, last.camera);
    last.depth = DepthMap(spec.width, spec.height);
    last.mask = MotionMask(spec.width, spec.height);
    for (size_t p = 0; p < surf.dominant.size(); ++p) {
      if (surf.dominant[p] >= 0) {
        last.depth.z[p] = surf.z[p];
        last.depth.valid[p] = 1;
        last.mask.dynamic[p] =
            data.motions[surf.dominant[p]].kind != MotionModel::Kind::kStatic ? 1 : 0;
      }
    }
  }
  return data;
}

}  // namespace mgs
