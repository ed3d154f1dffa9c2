#include "motiongs/adam.hpp"

#include <cmath>

namespace mgs {

namespace {

void adam_step_impl(AdamState& st, std::span<double> params,
                    std::span<const double> grads, const double* lr_scalar,
                    std::span<const double> lr_vec) {
  if (params.size() != grads.size() ||
      static_cast<Eigen::Index>(params.size()) != st.m.size()) {
    throw ValidationError("adam_step shape mismatch");
  }
  for (size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("non-finite gradient at parameter " + std::to_string(i));
    }
  }
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (size_t i = 0; i < params.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grads[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grads[i] * grads[i];
    const double mhat = st.m[i] / bc1;
    const double vhat = st.v[i] / bc2;
    const double lr = lr_scalar ? *lr_scalar : lr_vec[i];
    params[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
  }
}

}  // namespace

void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads, double lr) {
  adam_step_impl(state, params, grads, &lr, {});
}

void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads, std::span<const double> lr) {
  if (lr.size() != params.size()) {
    throw ValidationError("adam_step learning-rate vector size mismatch");
  }
  adam_step_impl(state, params, grads, nullptr, lr);
}

double exponential_lr(double lr_init, double lr_final, int64_t iter, int64_t max_iter) {
  if (max_iter <= 0) {
    return lr_init;
  }
  const double t = std::clamp(static_cast<double>(iter) / static_cast<double>(max_iter),
                              0.0, 1.0);
  return lr_init * std::pow(lr_final / lr_init, t);
}

}  // namespace mgs
