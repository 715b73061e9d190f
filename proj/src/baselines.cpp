#include "ucil/baselines.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ucil/losses.hpp"
#include "ucil/rng.hpp"

namespace ucil {
namespace {

// Tape leaves flattened to params() order: stack w,b per layer, proj, heads.
std::vector<Var> flatten_leaves(const TapedLeaves& leaves) {
  std::vector<Var> out;
  for (std::size_t i = 0; i < leaves.stack_w.size(); ++i) {
    out.push_back(leaves.stack_w[i]);
    out.push_back(leaves.stack_b[i]);
  }
  out.push_back(leaves.proj_w);
  out.push_back(leaves.proj_b);
  for (std::size_t h = 0; h < leaves.head_w.size(); ++h) {
    out.push_back(leaves.head_w[h]);
    out.push_back(leaves.head_b[h]);
  }
  return out;
}

Var full_mean(Tape& tape, Var v) {
  while (!tape.value(v).shape.empty()) v = tape.mean_axis(v, 0);
  return v;
}

std::vector<std::size_t> all_positions(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

}  // namespace

FisherDiagonal estimate_fisher(const SedModel& model, const Dataset& data,
                               const std::vector<std::size_t>& pool, std::size_t n_samples,
                               std::uint64_t seed) {
  if (n_samples == 0) throw std::invalid_argument("estimate_fisher: n_samples is zero");
  if (pool.empty()) throw std::invalid_argument("estimate_fisher: empty clip pool");

  const std::vector<const Tensor*> params = model.params();
  FisherDiagonal fisher;
  fisher.f.reserve(params.size());
  for (const Tensor* p : params) fisher.f.emplace_back(p->shape);

  const std::vector<std::size_t> subset = all_positions(model.n_classes());
  Rng rng(derive_seed(seed, "fisher"));
  for (std::size_t s = 0; s < n_samples; ++s) {
    const std::size_t clip_idx = pool[rng.index(pool.size())];
    const ClipRecord& rec = data.clips[clip_idx];
    const Tensor& clip = data.features[clip_idx];
    const Tensor targets =
        rasterize_targets(rec, clip.shape[0], model.class_order, model.class_order);

    Tape tape;
    TapedLeaves leaves = register_leaves(tape, model);
    TapedForward fw = taped_forward(tape, leaves, model, clip);
    Var loss = bce_loss(tape, fw.class_logits, targets, subset);
    Gradients grads = tape.backward(loss);
    std::vector<Tensor> g = collect_grads(grads, leaves);
    for (std::size_t j = 0; j < g.size(); ++j) {
      for (std::size_t k = 0; k < g[j].data.size(); ++k) {
        fisher.f[j].data[k] += g[j].data[k] * g[j].data[k];
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(n_samples);
  for (Tensor& t : fisher.f) {
    for (double& v : t.data) v *= inv;
  }
  return fisher;
}

double ewc_penalty(const std::vector<const Tensor*>& params,
                   const std::vector<const Tensor*>& anchor, const FisherDiagonal& fisher,
                   double lambda_ewc) {
  if (params.size() != anchor.size() || params.size() != fisher.f.size()) {
    throw std::invalid_argument("ewc_penalty: parameter count mismatch");
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < params.size(); ++j) {
    if (!params[j]->same_shape(*anchor[j]) || !params[j]->same_shape(fisher.f[j])) {
      throw std::invalid_argument("ewc_penalty: shape mismatch at parameter " +
                                  std::to_string(j));
    }
    for (std::size_t k = 0; k < params[j]->data.size(); ++k) {
      const double d = params[j]->data[k] - anchor[j]->data[k];
      acc += fisher.f[j].data[k] * d * d;
    }
  }
  return 0.5 * lambda_ewc * acc;
}

Var taped_ewc_penalty(Tape& tape, const TapedLeaves& leaves, const SedModel& anchor,
                      const FisherDiagonal& fisher, double lambda_ewc) {
  // Heads added after the anchor phase trail the parameter list, so the
  // anchor's layout is a prefix of the current one and is penalized as such.
  const std::vector<Var> vars = flatten_leaves(leaves);
  const std::vector<const Tensor*> anchor_params = anchor.params();
  if (vars.size() < anchor_params.size() || anchor_params.size() != fisher.f.size()) {
    throw std::invalid_argument("taped_ewc_penalty: parameter count mismatch");
  }
  std::vector<Var> terms;
  terms.reserve(anchor_params.size());
  for (std::size_t j = 0; j < anchor_params.size(); ++j) {
    const Tensor& theta = tape.value(vars[j]);
    if (!theta.same_shape(*anchor_params[j]) || !theta.same_shape(fisher.f[j])) {
      throw std::invalid_argument("taped_ewc_penalty: shape mismatch at parameter " +
                                  std::to_string(j));
    }
    const double numel = static_cast<double>(theta.numel());
    Var diff = tape.sub(vars[j], tape.constant(*anchor_params[j]));
    Var weighted = tape.mul(tape.mul(diff, diff), tape.constant(fisher.f[j]));
    terms.push_back(scale(tape, full_mean(tape, weighted), numel));
  }
  return scale(tape, sum_scalars(tape, terms), 0.5 * lambda_ewc);
}

namespace {

double log_sigmoid(double x) {
  return x < 0.0 ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x));
}

}  // namespace

LwfBreakdown lwf_loss(const SedModel& old_model, const SedModel& current, const Dataset& data,
                      const std::vector<std::size_t>& clips,
                      const std::vector<std::int32_t>& new_classes) {
  if (clips.empty()) throw std::invalid_argument("lwf_loss: empty clip list");
  const std::size_t n_ext = old_model.n_classes();
  if (current.n_classes() < n_ext) {
    throw std::invalid_argument("lwf_loss: current model has fewer classes than the old one");
  }
  std::vector<std::size_t> new_positions;
  for (std::int32_t c : new_classes) {
    for (std::size_t p = 0; p < current.class_order.size(); ++p) {
      if (current.class_order[p] == c) new_positions.push_back(p);
    }
  }

  LwfBreakdown out;
  for (std::size_t idx : clips) {
    const Tensor& clip = data.features[idx];
    const ForwardOut old_out = forward(old_model, clip);
    const ForwardOut cur_out = forward(current, clip);
    const std::size_t frames = clip.shape[0];

    double mse = 0.0;
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t c = 0; c < n_ext; ++c) {
        const double d = cur_out.logits.at(t, c) - old_out.logits.at(t, c);
        mse += d * d;
      }
    }
    out.distill += mse / static_cast<double>(frames * n_ext);

    if (!new_positions.empty()) {
      const Tensor targets =
          rasterize_targets(data.clips[idx], frames, current.class_order, new_classes);
      double bce = 0.0;
      for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t p : new_positions) {
          const double o = cur_out.logits.at(t, p);
          const double y = targets.at(t, p);
          bce -= y * log_sigmoid(o) + (1.0 - y) * log_sigmoid(-o);
        }
      }
      out.bce += bce / static_cast<double>(frames * new_positions.size());
    }
  }
  const double inv = 1.0 / static_cast<double>(clips.size());
  out.distill *= inv;
  out.bce *= inv;
  out.total = out.distill + out.bce;
  return out;
}

}  // namespace ucil
