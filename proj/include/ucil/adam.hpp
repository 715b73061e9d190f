#pragma once

#include <cstddef>
#include <vector>

#include "ucil/tensor.hpp"

namespace ucil {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-parameter first/second moment estimates plus the shared step counter.
// One AdamState drives one parameter list; the list order is the identity.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  explicit AdamState(const std::vector<Tensor>& params);
  explicit AdamState(const std::vector<Tensor*>& params);
  AdamState() = default;
};

// One Adam update with bias correction. params, grads, and state slots are
// matched by position; grads of exact zero still advance the moments.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& cfg);

// Same update through pointers, for parameters scattered across a model.
void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state, const AdamConfig& cfg);

}  // namespace ucil
