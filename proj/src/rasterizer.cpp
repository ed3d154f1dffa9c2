#include "motiongs/rasterizer.hpp"

#include <algorithm>
#include <cmath>

namespace mgs {

void SceneGrads::resize_zero(size_t n) {
  d_position.assign(n, Vec3::Zero());
  d_rotation.assign(n, Vec4::Zero());
  d_log_scale.assign(n, Vec3::Zero());
  d_opacity_logit.assign(n, 0.0);
  d_color.assign(n, Vec3::Zero());
  d_sh.assign(n, std::array<double, 9>{});
}

namespace {

// Everything the backward pass needs per gaussian, on top of SplatData.
struct PreparedSplat {
  bool valid = false;
  Vec3 x_cam;
  Mat23 J;        // projection jacobian at x_cam
  Mat23 M;        // J * R_extrinsics
  Mat3 sigma3d;
  Mat2 cov2d;
  Vec3 view_dir;  // unit, gaussian center minus camera center
  double view_dist = 0.0;
  // second state (flow composition), projected with the *time-t* M
  Vec3 x_cam_t1;
  Mat3 sigma3d_t1;
};

struct Internal {
  Camera ecam;  // camera with effective extrinsics applied
  bool two_state = false;
  std::vector<PreparedSplat> extra;  // indexed by gaussian
  std::vector<SplatData> sorted;     // valid splats, (depth, index) ascending
};

Mat2 inverse2x2(const Mat2& A) {
  const double det = A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0);
  Mat2 inv;
  inv << A(1, 1) / det, -A(0, 1) / det, -A(1, 0) / det, A(0, 0) / det;
  return inv;
}

Internal prepare(const GaussianScene& state_t, const Camera& cam,
                 const RenderConfig& cfg, const GaussianScene* state_t1) {
  if (state_t1 && state_t1->size() != state_t.size()) {
    throw ValidationError("scene states for flow rendering must have the same size");
  }
  if (cfg.tile_size < 1) {
    throw ValidationError("tile_size must be >= 1");
  }
  Internal out;
  out.ecam = cam;
  if (cfg.pose) {
    out.ecam.extrinsics = cfg.pose->effective();
  }
  out.two_state = state_t1 != nullptr;

  const Mat3 Rw = out.ecam.extrinsics.rotation();
  const Vec3 tw = out.ecam.extrinsics.trans;
  const Vec3 cam_center = out.ecam.center();
  const size_t n = state_t.size();
  out.extra.assign(n, PreparedSplat{});
  out.sorted.reserve(n);

  for (size_t i = 0; i < n; ++i) {
    const Gaussian3D& g = state_t.gaussians[i];
    PreparedSplat& e = out.extra[i];
    const Vec3 x_cam = Rw * g.position + tw;
    if (x_cam.z() <= kNearPlane) {
      continue;
    }
    const double o = sigmoid(g.opacity_logit);
    double cutoff = 9.0;  // 3 sigma
    if (cfg.alpha_min > 0) {
      if (o <= cfg.alpha_min) {
        continue;
      }
      cutoff = std::min(9.0, 2.0 * std::log(o / cfg.alpha_min));
    }

    SplatData s;
    s.index = static_cast<int>(i);
    s.depth = x_cam.z();
    s.opacity = o;
    s.cutoff = cutoff;
    s.mu2d = {out.ecam.fx * x_cam.x() / x_cam.z() + out.ecam.cx,
              out.ecam.fy * x_cam.y() / x_cam.z() + out.ecam.cy};

    e.x_cam = x_cam;
    e.J = project_jacobian(out.ecam, x_cam);
    e.M = e.J * Rw;
    e.sigma3d = build_covariance(g);
    e.cov2d = e.M * e.sigma3d * e.M.transpose() + kCov2dDilation * Mat2::Identity();
    s.inv_cov2d = inverse2x2(e.cov2d);

    const Vec3 v = g.position - cam_center;
    e.view_dist = v.norm();
    e.view_dir = e.view_dist > 0 ? Vec3(v / e.view_dist) : Vec3(0, 0, 1);
    s.color = evaluate_color(g, state_t.has_sh, e.view_dir);

    if (state_t1) {
      const Gaussian3D& g1 = state_t1->gaussians[i];
      const Vec3 x1 = Rw * g1.position + tw;
      if (x1.z() <= kNearPlane) {
        continue;  // the pair must be renderable in both states
      }
      e.x_cam_t1 = x1;
      e.sigma3d_t1 = build_covariance(g1);
      const Mat2 cov2d_t1 =
          e.M * e.sigma3d_t1 * e.M.transpose() + kCov2dDilation * Mat2::Identity();
      s.flow_lin = cov2d_t1 * s.inv_cov2d;
      s.flow_mu = {out.ecam.fx * x1.x() / x1.z() + out.ecam.cx,
                   out.ecam.fy * x1.y() / x1.z() + out.ecam.cy};
      s.has_flow = true;
    }
    e.valid = true;
    out.sorted.push_back(s);
  }

  std::sort(out.sorted.begin(), out.sorted.end(),
            [](const SplatData& a, const SplatData& b) {
              if (a.depth != b.depth) return a.depth < b.depth;
              return a.index < b.index;
            });
  return out;
}

// Pixel AABB of the skip ellipse, clipped to the image. Returns false when empty.
bool splat_bounds(const SplatData& s, const Mat2& cov2d, int W, int H, int* x0,
                  int* x1, int* y0, int* y1) {
  const double rx = std::sqrt(s.cutoff * cov2d(0, 0));
  const double ry = std::sqrt(s.cutoff * cov2d(1, 1));
  *x0 = std::max(0, static_cast<int>(std::floor(s.mu2d.x() - rx)));
  *x1 = std::min(W - 1, static_cast<int>(std::ceil(s.mu2d.x() + rx)));
  *y0 = std::max(0, static_cast<int>(std::floor(s.mu2d.y() - ry)));
  *y1 = std::min(H - 1, static_cast<int>(std::ceil(s.mu2d.y() + ry)));
  return *x0 <= *x1 && *y0 <= *y1;
}

SplatList build_tiles(const Internal& in, const RenderConfig& cfg) {
  SplatList list;
  list.tile_size = cfg.tile_size;
  list.tiles_x = (in.ecam.width + cfg.tile_size - 1) / cfg.tile_size;
  list.tiles_y = (in.ecam.height + cfg.tile_size - 1) / cfg.tile_size;
  list.splats = in.sorted;
  list.tile_entries.assign(static_cast<size_t>(list.tiles_x) * list.tiles_y, {});

  for (size_t k = 0; k < in.sorted.size(); ++k) {
    const SplatData& s = in.sorted[k];
    const Mat2& cov2d = in.extra[s.index].cov2d;
    int x0, x1, y0, y1;
    if (!splat_bounds(s, cov2d, in.ecam.width, in.ecam.height, &x0, &x1, &y0, &y1)) {
      continue;
    }
    for (int ty = y0 / cfg.tile_size; ty <= y1 / cfg.tile_size; ++ty) {
      for (int tx = x0 / cfg.tile_size; tx <= x1 / cfg.tile_size; ++tx) {
        list.tile_entries[static_cast<size_t>(ty) * list.tiles_x + tx].push_back(
            static_cast<int>(k));
      }
    }
  }
  return list;
}

// One alpha-blending step; shared verbatim by every path so the tiled render,
// the serial reference and the backward replay agree bit for bit.
struct BlendState {
  Vec3 color = Vec3::Zero();
  double depth = 0.0;
  double acc = 0.0;
  Vec2 flow_num = Vec2::Zero();
  double transmittance = 1.0;
};

struct BlendStep {
  double alpha;
  double gauss;   // exp(-maha/2)
  double weight;
  double t_before;
  bool clamped;
  Vec2 d;         // p - mu2d
  Vec2 flow;      // x_{t+1} - p, valid when has_flow
};

inline bool blend_one(const SplatData& s, double px, double py,
                      const RenderConfig& cfg, BlendState* st, BlendStep* step) {
  const Vec2 d(px - s.mu2d.x(), py - s.mu2d.y());
  const double maha = d.x() * (s.inv_cov2d(0, 0) * d.x() + s.inv_cov2d(0, 1) * d.y()) +
                      d.y() * (s.inv_cov2d(1, 0) * d.x() + s.inv_cov2d(1, 1) * d.y());
  if (!(maha <= s.cutoff)) {
    return false;
  }
  const double gauss = std::exp(-0.5 * maha);
  double alpha = s.opacity * gauss;
  const bool clamped = alpha > cfg.alpha_clamp;
  if (clamped) {
    alpha = cfg.alpha_clamp;
  }
  const double w = alpha * st->transmittance;
  st->color += w * s.color;
  st->depth += w * s.depth;
  st->acc += w;
  Vec2 flow = Vec2::Zero();
  if (s.has_flow) {
    flow = s.flow_lin * d + s.flow_mu - Vec2(px, py);
    st->flow_num += w * flow;
  }
  if (step) {
    *step = {alpha, gauss, w, st->transmittance, clamped, d, flow};
  }
  st->transmittance *= (1.0 - alpha);
  return true;
}

template <class IndexRange>
void render_pixel(const std::vector<SplatData>& sorted, const IndexRange& idxs,
                  int x, int y, const RenderConfig& cfg, bool two_state,
                  RenderOutput* out) {
  const double px = x, py = y;
  BlendState st;
  for (int k : idxs) {
    blend_one(sorted[k], px, py, cfg, &st, nullptr);
  }
  const Vec3 c = st.color + cfg.background * (1.0 - st.acc);
  for (int ch = 0; ch < 3; ++ch) {
    out->color.at(x, y, ch) = c[ch];
  }
  const size_t p = static_cast<size_t>(y) * out->color.width + x;
  out->depth[p] = st.depth;
  out->alpha[p] = st.acc;
  if (two_state) {
    if (st.acc >= cfg.flow_alpha_min) {
      out->flow.set(x, y, st.flow_num.x() / st.acc, st.flow_num.y() / st.acc, true);
    } else {
      out->flow.set(x, y, 0.0, 0.0, false);
    }
  }
}

RenderOutput make_output(const Camera& cam, bool two_state) {
  RenderOutput out;
  out.color = Image(cam.width, cam.height, 3);
  out.depth.assign(static_cast<size_t>(cam.width) * cam.height, 0.0);
  out.alpha.assign(static_cast<size_t>(cam.width) * cam.height, 0.0);
  if (two_state) {
    out.flow = FlowField(cam.width, cam.height);
  }
  return out;
}

struct AllIndices {
  int n;
  struct It {
    int i;
    int operator*() const { return i; }
    It& operator++() { ++i; return *this; }
    bool operator!=(const It& o) const { return i != o.i; }
  };
  It begin() const { return {0}; }
  It end() const { return {n}; }
};

}  // namespace

SplatList cull_and_tile(const GaussianScene& state_t, const Camera& cam,
                        const RenderConfig& cfg, const GaussianScene* state_t1) {
  return build_tiles(prepare(state_t, cam, cfg, state_t1), cfg);
}

RenderOutput render(const GaussianScene& state_t, const Camera& cam,
                    const RenderConfig& cfg, const GaussianScene* state_t1) {
  const Internal in = prepare(state_t, cam, cfg, state_t1);
  const SplatList tiles = build_tiles(in, cfg);
  RenderOutput out = make_output(in.ecam, in.two_state);

  const int n_tiles = tiles.tiles_x * tiles.tiles_y;
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < n_tiles; ++t) {
    const int tx = t % tiles.tiles_x, ty = t / tiles.tiles_x;
    const int x0 = tx * cfg.tile_size;
    const int y0 = ty * cfg.tile_size;
    const int x1 = std::min(in.ecam.width, x0 + cfg.tile_size);
    const int y1 = std::min(in.ecam.height, y0 + cfg.tile_size);
    const auto& entries = tiles.tile_entries[t];
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        render_pixel(tiles.splats, entries, x, y, cfg, in.two_state, &out);
      }
    }
  }
  return out;
}

RenderOutput render_reference(const GaussianScene& state_t, const Camera& cam,
                              const RenderConfig& cfg,
                              const GaussianScene* state_t1) {
  const Internal in = prepare(state_t, cam, cfg, state_t1);
  RenderOutput out = make_output(in.ecam, in.two_state);
  const AllIndices all{static_cast<int>(in.sorted.size())};
  for (int y = 0; y < in.ecam.height; ++y) {
    for (int x = 0; x < in.ecam.width; ++x) {
      render_pixel(in.sorted, all, x, y, cfg, in.two_state, &out);
    }
  }
  return out;
}

namespace {

// Per-splat-entry gradient accumulator, local to one tile.
struct EntryGrad {
  Vec2 d_mu2d = Vec2::Zero();
  Mat2 d_icov = Mat2::Zero();     // w.r.t. inv_cov2d (symmetric)
  double d_opacity = 0.0;         // w.r.t. pre-logit opacity o
  Vec3 d_color = Vec3::Zero();
  double d_z = 0.0;
  Vec2 d_mu2d_t1 = Vec2::Zero();
  Mat2 d_cov2d_t1 = Mat2::Zero();  // w.r.t. Sigma2D(t+1) (symmetric)
};

struct UpstreamView {
  const RenderGrads* g;
  int W, H;
  bool has_color, has_depth, has_alpha, has_flow;

  UpstreamView(const RenderGrads& up, int w, int h) : g(&up), W(w), H(h) {
    auto check = [&](const std::vector<double>& v, size_t expect, const char* what) {
      if (!v.empty() && v.size() != expect) {
        throw ValidationError(std::string("upstream gradient raster '") + what +
                              "' has the wrong size");
      }
      return !v.empty();
    };
    const size_t px = static_cast<size_t>(w) * h;
    has_color = check(up.d_color, px * 3, "color");
    has_depth = check(up.d_depth, px, "depth");
    has_alpha = check(up.d_alpha, px, "alpha");
    has_flow = check(up.d_flow, px * 2, "flow");
  }

  Vec3 color(size_t p) const {
    return has_color ? Vec3(g->d_color[p * 3], g->d_color[p * 3 + 1], g->d_color[p * 3 + 2])
                     : Vec3::Zero();
  }
  double depth(size_t p) const { return has_depth ? g->d_depth[p] : 0.0; }
  double alpha(size_t p) const { return has_alpha ? g->d_alpha[p] : 0.0; }
  Vec2 flow(size_t p) const {
    return has_flow ? Vec2(g->d_flow[p * 2], g->d_flow[p * 2 + 1]) : Vec2::Zero();
  }
};

void backward_pixel(const std::vector<SplatData>& sorted,
                    const std::vector<int>& entries, int x, int y,
                    const RenderConfig& cfg, bool two_state,
                    const UpstreamView& up, std::vector<EntryGrad>* tile_grads) {
  const double px = x, py = y;
  const size_t p = static_cast<size_t>(y) * up.W + x;

  // Replay the forward blend, keeping per-step state.
  BlendState st;
  std::vector<std::pair<int, BlendStep>> steps;  // (position in entries, step)
  steps.reserve(entries.size());
  for (size_t e = 0; e < entries.size(); ++e) {
    BlendStep step;
    if (blend_one(sorted[entries[e]], px, py, cfg, &st, &step)) {
      steps.emplace_back(static_cast<int>(e), step);
    }
  }
  if (steps.empty()) {
    return;
  }

  const Vec3 gC = up.color(p);
  const double gD = up.depth(p);
  const double gA = up.alpha(p);
  const bool flow_valid = two_state && st.acc >= cfg.flow_alpha_min;
  const Vec2 gF = flow_valid ? up.flow(p) : Vec2::Zero();

  // Flow path: F = sum w_i f_i / sum w_i with the weights treated as constants
  // (all time-t variables are stop-gradients in the flow computation).
  if (flow_valid && (gF.x() != 0.0 || gF.y() != 0.0)) {
    for (const auto& [e, step] : steps) {
      const SplatData& s = sorted[entries[e]];
      const Vec2 df = (step.weight / st.acc) * gF;
      EntryGrad& eg = (*tile_grads)[e];
      eg.d_mu2d_t1 += df;
      // f = Sigma2D_t1 * v + mu2d_t1 - p with v = inv_cov2d_t * d
      const Vec2 v = s.inv_cov2d * step.d;
      const Mat2 outer = df * v.transpose();
      eg.d_cov2d_t1 += 0.5 * (outer + outer.transpose());
    }
  }

  // Photometric paths (color / depth / accumulated alpha).
  if (!up.has_color && !up.has_depth && !up.has_alpha) {
    return;
  }
  double suffix = 0.0;  // sum_{j>i} g_j w_j
  for (size_t k = steps.size(); k-- > 0;) {
    const auto& [e, step] = steps[k];
    const SplatData& s = sorted[entries[e]];
    EntryGrad& eg = (*tile_grads)[e];

    const double g_w =
        (s.color - cfg.background).dot(gC) + s.depth * gD + gA;  // dL/dw_i
    eg.d_color += step.weight * gC;
    eg.d_z += step.weight * gD;

    const double d_alpha = g_w * step.t_before - suffix / (1.0 - step.alpha);
    suffix += g_w * step.weight;
    if (step.clamped) {
      continue;  // clamp zeroes d(alpha)/d(o, G)
    }
    eg.d_opacity += step.gauss * d_alpha;
    const double d_maha = -0.5 * step.gauss * s.opacity * d_alpha;
    eg.d_icov += d_maha * (step.d * step.d.transpose());
    const Vec2 dd = 2.0 * d_maha * (s.inv_cov2d * step.d);
    eg.d_mu2d -= dd;
  }
}

}  // namespace

GradientBuffer render_backward(const GaussianScene& state_t, const Camera& cam,
                               const RenderConfig& cfg,
                               const GaussianScene* state_t1,
                               const RenderGrads& upstream) {
  const Internal in = prepare(state_t, cam, cfg, state_t1);
  const SplatList tiles = build_tiles(in, cfg);
  const UpstreamView up(upstream, in.ecam.width, in.ecam.height);
  const size_t n = state_t.size();

  GradientBuffer out;
  out.state_t.resize_zero(n);
  out.has_state_t1 = in.two_state;
  if (in.two_state) {
    out.state_t1.resize_zero(n);
  }
  out.has_pose = cfg.pose.has_value();

  // Tile-parallel backward into per-tile entry accumulators.
  const int n_tiles = tiles.tiles_x * tiles.tiles_y;
  std::vector<std::vector<EntryGrad>> per_tile(n_tiles);
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < n_tiles; ++t) {
    per_tile[t].assign(tiles.tile_entries[t].size(), EntryGrad{});
    const int tx = t % tiles.tiles_x, ty = t / tiles.tiles_x;
    const int x0 = tx * cfg.tile_size;
    const int y0 = ty * cfg.tile_size;
    const int x1 = std::min(in.ecam.width, x0 + cfg.tile_size);
    const int y1 = std::min(in.ecam.height, y0 + cfg.tile_size);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        backward_pixel(tiles.splats, tiles.tile_entries[t], x, y, cfg,
                       in.two_state, up, &per_tile[t]);
      }
    }
  }

  // Serial merge in tile order keeps the reduction independent of threading.
  std::vector<EntryGrad> per_gaussian(n);
  for (int t = 0; t < n_tiles; ++t) {
    const auto& entries = tiles.tile_entries[t];
    for (size_t e = 0; e < entries.size(); ++e) {
      const EntryGrad& src = per_tile[t][e];
      EntryGrad& dst = per_gaussian[tiles.splats[entries[e]].index];
      dst.d_mu2d += src.d_mu2d;
      dst.d_icov += src.d_icov;
      dst.d_opacity += src.d_opacity;
      dst.d_color += src.d_color;
      dst.d_z += src.d_z;
      dst.d_mu2d_t1 += src.d_mu2d_t1;
      dst.d_cov2d_t1 += src.d_cov2d_t1;
    }
  }

  // Chain per-gaussian 2D gradients back to the 3D parameters and the pose.
  const Mat3 Rw = in.ecam.extrinsics.rotation();
  Mat3 dRw = Mat3::Zero();
  Vec3 dtw = Vec3::Zero();
  Vec3 d_cam_center = Vec3::Zero();
  const Vec3 cam_center = in.ecam.center();
  (void)cam_center;

  for (size_t i = 0; i < n; ++i) {
    const PreparedSplat& e = in.extra[i];
    if (!e.valid) {
      continue;
    }
    const EntryGrad& g = per_gaussian[i];
    const Gaussian3D& g3 = state_t.gaussians[i];

    // Find the splat data for inv_cov2d (prepare() order matches extra index).
    Mat2 icov = inverse2x2(e.cov2d);

    // inv_cov2d -> Sigma2D
    const Mat2 d_cov2d = -icov * g.d_icov * icov;
    // Sigma2D = M Sigma M^T + c I
    const Mat2 d_cov2d_sym = 0.5 * (d_cov2d + d_cov2d.transpose());
    const Mat3 d_sigma = e.M.transpose() * d_cov2d_sym * e.M;
    Mat23 dM = 2.0 * d_cov2d_sym * e.M * e.sigma3d;

    covariance_backward(g3, d_sigma, &out.state_t.d_rotation[i],
                        &out.state_t.d_log_scale[i]);

    // M = J R: split into the projection jacobian and the pose rotation.
    const Mat23 dJ = dM * Rw.transpose();
    if (out.has_pose) {
      dRw += e.J.transpose() * dM;
    }

    // x_cam gradient: mean projection, depth raster, and J's dependence.
    Vec3 dx_cam = e.J.transpose() * g.d_mu2d;
    dx_cam.z() += g.d_z;
    {
      const double z = e.x_cam.z(), fx = in.ecam.fx, fy = in.ecam.fy;
      const double z2 = z * z, z3 = z2 * z;
      dx_cam.x() += dJ(0, 2) * (-fx / z2);
      dx_cam.y() += dJ(1, 2) * (-fy / z2);
      dx_cam.z() += dJ(0, 0) * (-fx / z2) + dJ(1, 1) * (-fy / z2) +
                    dJ(0, 2) * (2.0 * fx * e.x_cam.x() / z3) +
                    dJ(1, 2) * (2.0 * fy * e.x_cam.y() / z3);
    }

    // Color: base, SH coefficients, and the view-direction chain.
    out.state_t.d_color[i] += g.d_color;
    if (state_t.has_sh) {
      const Vec3& d = e.view_dir;
      const double b0 = -kSh1 * d.y(), b1 = kSh1 * d.z(), b2 = -kSh1 * d.x();
      Vec3 d_dir = Vec3::Zero();
      for (int k = 0; k < 3; ++k) {
        out.state_t.d_sh[i][k * 3 + 0] += b0 * g.d_color[k];
        out.state_t.d_sh[i][k * 3 + 1] += b1 * g.d_color[k];
        out.state_t.d_sh[i][k * 3 + 2] += b2 * g.d_color[k];
        d_dir += g.d_color[k] * Vec3(-kSh1 * g3.sh[k * 3 + 2],
                                     -kSh1 * g3.sh[k * 3 + 0],
                                     kSh1 * g3.sh[k * 3 + 1]);
      }
      const Vec3 dv = (d_dir - d * d.dot(d_dir)) / e.view_dist;
      out.state_t.d_position[i] += dv;
      if (out.has_pose) {
        d_cam_center -= dv;
      }
    }

    out.state_t.d_position[i] += Rw.transpose() * dx_cam;
    if (out.has_pose) {
      dRw += dx_cam * g3.position.transpose();
      dtw += dx_cam;
    }

    out.state_t.d_opacity_logit[i] +=
        sigmoid(g3.opacity_logit) * (1.0 - sigmoid(g3.opacity_logit)) * g.d_opacity;

    // Flow path into the t+1 state. Stops at all time-t quantities, including
    // M and the pose, so only the t+1 attributes receive gradients here.
    if (in.two_state) {
      const Gaussian3D& g1 = state_t1->gaussians[i];
      const Mat2 dc1 = 0.5 * (g.d_cov2d_t1 + g.d_cov2d_t1.transpose());
      const Mat3 d_sigma_t1 = e.M.transpose() * dc1 * e.M;
      covariance_backward(g1, d_sigma_t1, &out.state_t1.d_rotation[i],
                          &out.state_t1.d_log_scale[i]);
      const Mat23 J1 = project_jacobian(in.ecam, e.x_cam_t1);
      out.state_t1.d_position[i] += Rw.transpose() * (J1.transpose() * g.d_mu2d_t1);
    }
  }

  if (out.has_pose) {
    // Camera center o_c = -R^T t enters through the SH view directions.
    dRw += -in.ecam.extrinsics.trans * d_cam_center.transpose();
    dtw += -Rw * d_cam_center;

    // E(delta) = pre * exp(twist) * exp(J_r delta) * post around the current twist.
    const SE3 M1 = cfg.pose->pre * se3_exp(cfg.pose->twist);
    const Mat3 R1 = M1.rotation();
    const Mat3 RB = cfg.pose->post.rotation();
    const Vec3 tB = cfg.pose->post.trans;

    const Mat3 K = R1.transpose() * dRw * RB.transpose();
    const Vec3 r1t = R1.transpose() * dtw;
    Vec6 g_eta;
    g_eta << K(2, 1) - K(1, 2) + (tB.cross(r1t)).x(),
        K(0, 2) - K(2, 0) + (tB.cross(r1t)).y(),
        K(1, 0) - K(0, 1) + (tB.cross(r1t)).z(), r1t.x(), r1t.y(), r1t.z();
    out.d_twist = se3_right_jacobian(cfg.pose->twist).transpose() * g_eta;
  }
  return out;
}

}  // namespace mgs
