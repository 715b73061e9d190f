#include "ucil/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace ucil {

AdamState::AdamState(const std::vector<Tensor>& params) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const Tensor& p : params) {
    m.emplace_back(p.shape);
    v.emplace_back(p.shape);
  }
}

AdamState::AdamState(const std::vector<Tensor*>& params) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const Tensor* p : params) {
    m.emplace_back(p->shape);
    v.emplace_back(p->shape);
  }
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p]->same_shape(grads[p])) {
      throw std::invalid_argument("adam_step: gradient shape " + shape_str(grads[p].shape) +
                                  " does not match parameter " + shape_str(params[p]->shape));
    }
    double* w = params[p]->data.data();
    const double* g = grads[p].data.data();
    double* m = state.m[p].data.data();
    double* v = state.v[p].data.data();
    const std::size_t n = params[p]->data.size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& cfg) {
  std::vector<Tensor*> ptrs;
  ptrs.reserve(params.size());
  for (Tensor& p : params) ptrs.push_back(&p);
  adam_step(ptrs, grads, state, cfg);
}

}  // namespace ucil
