#include "motiongs/deformation.hpp"

#include <cmath>
#include <random>

namespace mgs {

namespace {

using OutVec = Eigen::Matrix<double, kDeformOutputs, 1>;

void basis_values(const BasisConfig& cfg, double t, std::vector<double>* b) {
  b->clear();
  double tp = 1.0;
  for (int k = 0; k < cfg.poly_order; ++k) {
    tp *= t;
    b->push_back(tp);
  }
  for (int m = 1; m <= cfg.fourier_order; ++m) {
    b->push_back(std::sin(2.0 * M_PI * m * t));
    b->push_back(std::cos(2.0 * M_PI * m * t));
  }
}

std::vector<int> mlp_dims(const MlpConfig& cfg) {
  std::vector<int> dims;
  dims.push_back(cfg.input_dim());
  for (int l = 0; l < cfg.layers - 1; ++l) {
    dims.push_back(cfg.hidden);
  }
  dims.push_back(kDeformOutputs);
  return dims;
}

size_t mlp_param_count(const MlpConfig& cfg) {
  const auto dims = mlp_dims(cfg);
  size_t n = 0;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    n += static_cast<size_t>(dims[l]) * dims[l + 1] + dims[l + 1];
  }
  return n;
}

void encode_input(const MlpConfig& cfg, const Vec3& mu, double t, VecX* x) {
  x->resize(cfg.input_dim());
  int at = 0;
  for (int i = 0; i < 3; ++i) {
    (*x)[at++] = mu[i];
  }
  for (int k = 0; k < cfg.pe_position; ++k) {
    const double f = M_PI * std::pow(2.0, k);
    for (int i = 0; i < 3; ++i) {
      (*x)[at++] = std::sin(f * mu[i]);
      (*x)[at++] = std::cos(f * mu[i]);
    }
  }
  (*x)[at++] = t;
  for (int k = 0; k < cfg.pe_time; ++k) {
    const double f = M_PI * std::pow(2.0, k);
    (*x)[at++] = std::sin(f * t);
    (*x)[at++] = std::cos(f * t);
  }
}

// d(encoding)/d(mu) contracted with an upstream input gradient.
Vec3 encode_backward(const MlpConfig& cfg, const Vec3& mu, const VecX& d_x) {
  Vec3 g = d_x.head<3>();
  int at = 3;
  for (int k = 0; k < cfg.pe_position; ++k) {
    const double f = M_PI * std::pow(2.0, k);
    for (int i = 0; i < 3; ++i) {
      g[i] += d_x[at] * f * std::cos(f * mu[i]);
      g[i] -= d_x[at + 1] * f * std::sin(f * mu[i]);
      at += 2;
    }
  }
  return g;
}

Vec4 normalize_backward(const Vec4& raw, const Vec4& d_unit) {
  const double nrm = raw.norm();
  const Vec4 u = raw / nrm;
  return (d_unit - u * u.dot(d_unit)) / nrm;
}

}  // namespace

DeformationField DeformationField::per_gaussian_basis(size_t gaussian_count,
                                                      const BasisConfig& cfg) {
  DeformationField f;
  f.variant_ = DeformVariant::kPerGaussianBasis;
  f.basis_ = cfg;
  f.gaussian_count_ = gaussian_count;
  f.params_ = VecX::Zero(static_cast<Eigen::Index>(gaussian_count) *
                         kDeformOutputs * cfg.terms());
  return f;
}

DeformationField DeformationField::tiny_mlp(const MlpConfig& cfg, uint64_t seed) {
  DeformationField f;
  f.variant_ = DeformVariant::kTinyMlp;
  f.mlp_ = cfg;
  f.params_ = VecX::Zero(static_cast<Eigen::Index>(mlp_param_count(cfg)));

  std::mt19937_64 rng(seed);
  const auto dims = mlp_dims(cfg);
  size_t at = 0;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    const bool last = l + 2 == dims.size();
    const double bound = std::sqrt(6.0 / (dims[l] + dims[l + 1]));
    std::uniform_real_distribution<double> uni(-bound, bound);
    for (int o = 0; o < dims[l + 1]; ++o) {
      for (int i = 0; i < dims[l]; ++i) {
        f.params_[at++] = last ? 0.0 : uni(rng);
      }
    }
    at += dims[l + 1];  // biases stay zero
  }
  return f;
}

DeformationField DeformationField::from_parts(DeformVariant v, const BasisConfig& bc,
                                              const MlpConfig& mc, size_t count,
                                              VecX params) {
  DeformationField f;
  f.variant_ = v;
  f.basis_ = bc;
  f.mlp_ = mc;
  f.gaussian_count_ = count;
  const size_t expect = v == DeformVariant::kPerGaussianBasis
                            ? count * kDeformOutputs * bc.terms()
                            : mlp_param_count(mc);
  if (static_cast<size_t>(params.size()) != expect) {
    throw ValidationError("deformation parameter vector has the wrong size");
  }
  f.params_ = std::move(params);
  return f;
}

void DeformationField::offsets(const GaussianScene& scene, double t,
                               std::vector<OutVec>* out) const {
  if (!params_.allFinite()) {
    throw NumericError("deformation field parameters are not finite");
  }
  const size_t n = scene.size();
  out->assign(n, OutVec::Zero());

  if (variant_ == DeformVariant::kPerGaussianBasis) {
    if (n != gaussian_count_) {
      throw ValidationError("basis deformation field was built for a different scene size");
    }
    std::vector<double> b;
    basis_values(basis_, t, &b);
    const int K = basis_.terms();
    for (size_t g = 0; g < n; ++g) {
      const double* coef = params_.data() + g * kDeformOutputs * K;
      for (int ch = 0; ch < kDeformOutputs; ++ch) {
        double acc = 0.0;
        for (int k = 0; k < K; ++k) {
          acc += coef[ch * K + k] * b[k];
        }
        (*out)[g][ch] = acc;
      }
    }
    return;
  }

  const auto dims = mlp_dims(mlp_);
  VecX x, h;
  for (size_t g = 0; g < n; ++g) {
    encode_input(mlp_, scene.gaussians[g].position, t, &x);
    size_t at = 0;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
      const int in = dims[l], on = dims[l + 1];
      h.resize(on);
      for (int o = 0; o < on; ++o) {
        double acc = params_[at + static_cast<size_t>(in) * on + o];  // bias
        const double* w = params_.data() + at + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) {
          acc += w[i] * x[i];
        }
        h[o] = acc;
      }
      at += static_cast<size_t>(in) * on + on;
      if (l + 2 < dims.size()) {
        h = h.array().tanh();
      }
      x.swap(h);
    }
    (*out)[g] = x;
  }
}

DeformedState DeformationField::deform(const GaussianScene& scene, double t) const {
  std::vector<OutVec> off;
  offsets(scene, t, &off);
  DeformedState out;
  out.time = t;
  out.scene = scene;
  for (size_t g = 0; g < scene.size(); ++g) {
    Gaussian3D& d = out.scene.gaussians[g];
    d.position += off[g].head<3>();
    const Vec4 raw = d.rotation.coeffs() + off[g].segment<4>(3);
    const double nrm = raw.norm();
    if (!(nrm > 1e-300)) {
      throw NumericError("deformed quaternion collapsed to zero norm");
    }
    d.rotation = {raw[0] / nrm, raw[1] / nrm, raw[2] / nrm, raw[3] / nrm};
    d.log_scale += off[g].tail<3>();  // log-space keeps scales positive
  }
  return out;
}

DeformGrads DeformationField::deform_backward(const GaussianScene& scene, double t,
                                              const DeformUpstream& up) const {
  const size_t n = scene.size();
  if (up.d_position.size() != n || up.d_rotation.size() != n ||
      up.d_log_scale.size() != n) {
    throw ValidationError("deform_backward upstream size mismatch");
  }
  std::vector<OutVec> off;
  offsets(scene, t, &off);

  DeformGrads out;
  out.d_params = VecX::Zero(params_.size());
  out.d_position.assign(n, Vec3::Zero());
  out.d_rotation.assign(n, Vec4::Zero());
  out.d_log_scale.assign(n, Vec3::Zero());

  // Upstream on the 10 offset channels, after the quaternion renormalization.
  std::vector<OutVec> u(n);
  for (size_t g = 0; g < n; ++g) {
    const Vec4 raw = scene.gaussians[g].rotation.coeffs() + off[g].segment<4>(3);
    const Vec4 d_raw = normalize_backward(raw, up.d_rotation[g]);
    u[g].head<3>() = up.d_position[g];
    u[g].segment<4>(3) = d_raw;
    u[g].tail<3>() = up.d_log_scale[g];
    out.d_position[g] = up.d_position[g];
    out.d_rotation[g] = d_raw;
    out.d_log_scale[g] = up.d_log_scale[g];
  }

  if (variant_ == DeformVariant::kPerGaussianBasis) {
    std::vector<double> b;
    basis_values(basis_, t, &b);
    const int K = basis_.terms();
    for (size_t g = 0; g < n; ++g) {
      double* coef = out.d_params.data() + g * kDeformOutputs * K;
      for (int ch = 0; ch < kDeformOutputs; ++ch) {
        for (int k = 0; k < K; ++k) {
          coef[ch * K + k] += u[g][ch] * b[k];
        }
      }
    }
    return out;
  }

  // MLP backprop; serial over gaussians so the parameter-gradient reduction
  // order is fixed.
  const auto dims = mlp_dims(mlp_);
  const int L = static_cast<int>(dims.size()) - 1;
  std::vector<VecX> act(L + 1);  // activations entering each layer
  for (size_t g = 0; g < n; ++g) {
    encode_input(mlp_, scene.gaussians[g].position, t, &act[0]);
    size_t at = 0;
    std::vector<size_t> layer_at(L);
    for (int l = 0; l < L; ++l) {
      layer_at[l] = at;
      const int in = dims[l], on = dims[l + 1];
      act[l + 1].resize(on);
      for (int o = 0; o < on; ++o) {
        double acc = params_[at + static_cast<size_t>(in) * on + o];
        const double* w = params_.data() + at + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) {
          acc += w[i] * act[l][i];
        }
        act[l + 1][o] = acc;
      }
      at += static_cast<size_t>(in) * on + on;
      if (l + 1 < L) {
        act[l + 1] = act[l + 1].array().tanh();
      }
    }

    VecX delta = u[g];
    for (int l = L - 1; l >= 0; --l) {
      const int in = dims[l], on = dims[l + 1];
      const size_t base = layer_at[l];
      VecX d_in = VecX::Zero(in);
      for (int o = 0; o < on; ++o) {
        const double* w = params_.data() + base + static_cast<size_t>(o) * in;
        double* dw = out.d_params.data() + base + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) {
          dw[i] += delta[o] * act[l][i];
          d_in[i] += delta[o] * w[i];
        }
        out.d_params[base + static_cast<size_t>(in) * on + o] += delta[o];
      }
      if (l > 0) {
        // through tanh: act[l] are post-activation values
        delta = (d_in.array() * (1.0 - act[l].array().square())).matrix();
      } else {
        out.d_position[g] += encode_backward(mlp_, scene.gaussians[g].position, d_in);
      }
    }
  }
  return out;
}

}  // namespace mgs
