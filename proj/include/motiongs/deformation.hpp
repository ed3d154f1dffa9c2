#pragma once

#include "motiongs/gaussians.hpp"

#include <cstdint>

namespace mgs {

enum class DeformVariant : uint8_t { kPerGaussianBasis = 0, kTinyMlp = 1 };

// Per-gaussian analytic time basis: polynomial terms t^1..t^P followed by
// Fourier pairs sin/cos(2 pi m t), m = 1..F. Coefficients per gaussian for
// each of the 10 offset channels (d mu 3, d rot 4, d log-scale 3).
struct BasisConfig {
  int poly_order = 2;
  int fourier_order = 2;

  int terms() const { return poly_order + 2 * fourier_order; }
};

// Tiny MLP on positionally encoded (mu, t), tanh hidden units, zero-initialized
// output layer so the field is exactly the identity at creation.
struct MlpConfig {
  int pe_position = 6;  // L_x frequencies
  int pe_time = 4;      // L_t frequencies
  int hidden = 64;
  int layers = 4;       // total linear layers (layers-1 hidden + output)

  int input_dim() const { return 3 + 6 * pe_position + 1 + 2 * pe_time; }
};

inline constexpr int kDeformOutputs = 10;

struct DeformedState {
  GaussianScene scene;  // mu + dmu, normalize(r + dr), log_scale + ds
  double time = 0.0;
};

// Upstream gradients on the deformed attributes (post-normalization rotation).
struct DeformUpstream {
  std::vector<Vec3> d_position;
  std::vector<Vec4> d_rotation;
  std::vector<Vec3> d_log_scale;
};

struct DeformGrads {
  VecX d_params;
  std::vector<Vec3> d_position;   // canonical attributes (identity-plus-chain)
  std::vector<Vec4> d_rotation;
  std::vector<Vec3> d_log_scale;
};

class DeformationField {
 public:
  static DeformationField per_gaussian_basis(size_t gaussian_count,
                                             const BasisConfig& cfg);
  static DeformationField tiny_mlp(const MlpConfig& cfg, uint64_t seed);

  DeformVariant variant() const { return variant_; }
  const BasisConfig& basis_config() const { return basis_; }
  const MlpConfig& mlp_config() const { return mlp_; }
  size_t gaussian_count() const { return gaussian_count_; }

  VecX& params() { return params_; }
  const VecX& params() const { return params_; }

  // Per-gaussian offsets at time t; the scene attributes stay untouched when
  // all parameters are zero.
  void offsets(const GaussianScene& scene, double t,
               std::vector<Eigen::Matrix<double, kDeformOutputs, 1>>* out) const;

  DeformedState deform(const GaussianScene& scene, double t) const;

  DeformGrads deform_backward(const GaussianScene& scene, double t,
                              const DeformUpstream& upstream) const;

  // Serialization hooks (io module).
  static DeformationField from_parts(DeformVariant v, const BasisConfig& bc,
                                     const MlpConfig& mc, size_t count, VecX params);

 private:
  DeformationField() = default;

  DeformVariant variant_ = DeformVariant::kPerGaussianBasis;
  BasisConfig basis_;
  MlpConfig mlp_;
  size_t gaussian_count_ = 0;  // basis variant only
  VecX params_;
};

}  // namespace mgs
