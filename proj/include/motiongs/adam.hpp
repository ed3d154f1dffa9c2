#pragma once

#include "motiongs/common.hpp"

#include <span>

namespace mgs {

// Standard Adam with bias correction. Epsilon follows the splatting-optimizer
// convention (1e-15) rather than the 1e-8 deep-learning default.
struct AdamState {
  VecX m;
  VecX v;
  int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;

  explicit AdamState(Eigen::Index n = 0) : m(VecX::Zero(n)), v(VecX::Zero(n)) {}
  void resize(Eigen::Index n) {
    m = VecX::Zero(n);
    v = VecX::Zero(n);
    step = 0;
  }
};

// In-place update with a single learning rate.
void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads, double lr);

// Per-component learning rates (pose residual uses different rotation and
// translation rates inside one 6-vector).
void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads, std::span<const double> lr);

// 3DGS-style exponential interpolation between lr_init and lr_final.
double exponential_lr(double lr_init, double lr_final, int64_t iter, int64_t max_iter);

}  // namespace mgs
