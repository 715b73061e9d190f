#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ucil/autodiff.hpp"
#include "ucil/tensor.hpp"

namespace ucil {

struct ModelConfig {
  std::size_t n_mels = 64;                           // F
  std::vector<std::size_t> conv_channels = {32, 64, 64};
  std::size_t kernel_width = 3;
  std::size_t embedding_dim = 64;                    // D
  std::size_t frame_count = 0;                       // T per clip

  void validate() const;
};

struct ConvLayer {
  Tensor w;  // Cout x Cin x K
  Tensor b;  // Cout
};

struct Head {
  std::int32_t class_id = -1;
  Tensor w;  // 1 x D x 1
  Tensor b;  // 1
};

// Frame-level SED network: temporal conv stack with ReLU, a kernel-1
// projection to the embedding space, and one affine head per learned class.
// Plain value type; snapshots are copies.
struct SedModel {
  ModelConfig config;
  std::vector<ConvLayer> stack;
  ConvLayer proj;            // embedding projection, kernel width 1
  std::vector<Head> heads;   // order == class_order
  std::vector<std::int32_t> class_order;

  std::size_t n_classes() const { return heads.size(); }

  // Trainable tensors in declaration order (checkpoint/optimizer order):
  // stack w,b per layer, proj w,b, then head w,b per class.
  std::vector<Tensor*> params();
  std::vector<const Tensor*> params() const;
};

SedModel init_model(const ModelConfig& config, std::uint64_t seed,
                    const std::vector<std::int32_t>& class_ids);

struct ForwardOut {
  Tensor logits;      // T x |C|, class columns in class_order
  Tensor embeddings;  // T x D
};

ForwardOut forward(const SedModel& model, const Tensor& clip);

// Appends seeded heads for new classes; everything existing is untouched.
void expand_heads(SedModel& model, const std::vector<std::int32_t>& new_class_ids,
                  std::uint64_t seed);

inline SedModel snapshot(const SedModel& model) { return model; }

// t <- decay*t + (1-decay)*s per parameter. Layouts must match exactly.
void ema_update(SedModel& teacher, const SedModel& student, double decay);

// --- taped forward (training path) ---

// One leaf per parameter tensor; reused by every clip within a step so the
// backward pass accumulates gradients across the whole batch.
struct TapedLeaves {
  std::vector<Var> stack_w, stack_b;
  Var proj_w, proj_b;
  std::vector<Var> head_w, head_b;
};

TapedLeaves register_leaves(Tape& tape, const SedModel& model);

struct TapedForward {
  Var embeddings;                // T x D
  std::vector<Var> class_logits; // per class in class_order, each T x 1
};

TapedForward taped_forward(Tape& tape, const TapedLeaves& leaves, const SedModel& model,
                           const Tensor& clip);

// Gradients for every parameter tensor, aligned with SedModel::params().
std::vector<Tensor> collect_grads(const Gradients& grads, const TapedLeaves& leaves);

// --- checkpoint file ---

void save_model(const SedModel& model, const std::string& path);
SedModel load_model(const std::string& path);

}  // namespace ucil
