#include "ucil/baselines.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "ucil/losses.hpp"
#include "ucil/model.hpp"
#include "ucil/rng.hpp"

using namespace ucil;

namespace {

constexpr std::size_t kT = 12;
constexpr std::size_t kF = 8;

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.n_mels = kF;
  cfg.conv_channels = {6};
  cfg.kernel_width = 3;
  cfg.embedding_dim = 5;
  cfg.frame_count = kT;
  return cfg;
}

Tensor random_clip(std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({kT, kF});
  for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

// Dataset with `n` strong clips: clip i carries one event of class i % n_cls.
Dataset tiny_dataset(std::size_t n, std::size_t n_cls, std::uint64_t seed, bool zero_features) {
  Dataset data;
  for (std::size_t c = 0; c < n_cls; ++c) data.class_names.push_back(std::string(1, char('a' + c)));
  data.frame_count = kT;
  data.n_mels = kF;
  for (std::size_t i = 0; i < n; ++i) {
    ClipRecord rec;
    rec.clip_id = "clip" + std::to_string(i);
    rec.kind = AnnotationKind::Strong;
    rec.events.push_back({static_cast<std::int32_t>(i % n_cls), 2.0, 7.0});
    data.clips.push_back(rec);
    data.features.push_back(zero_features ? Tensor({kT, kF})
                                          : random_clip(derive_seed(seed, "clip/" + std::to_string(i))));
  }
  return data;
}

std::vector<const Tensor*> cparams(const SedModel& m) { return m.params(); }

// Full-class BCE gradients for one clip, via the same tape the estimator uses.
std::vector<Tensor> bce_grads(const SedModel& model, const Dataset& data, std::size_t idx) {
  const Tensor& clip = data.features[idx];
  const Tensor targets =
      rasterize_targets(data.clips[idx], clip.shape[0], model.class_order, model.class_order);
  std::vector<std::size_t> subset(model.n_classes());
  for (std::size_t i = 0; i < subset.size(); ++i) subset[i] = i;
  Tape tape;
  TapedLeaves leaves = register_leaves(tape, model);
  TapedForward fw = taped_forward(tape, leaves, model, clip);
  Gradients grads = tape.backward(bce_loss(tape, fw.class_logits, targets, subset));
  return collect_grads(grads, leaves);
}

}  // namespace

TEST_CASE("fisher rejects degenerate inputs") {
  Dataset data = tiny_dataset(2, 2, 7, false);
  SedModel model = init_model(tiny_config(), 1, {0, 1});
  CHECK_THROWS_AS(estimate_fisher(model, data, {0, 1}, 0, 3), std::invalid_argument);
  CHECK_THROWS_AS(estimate_fisher(model, data, {}, 5, 3), std::invalid_argument);
}

TEST_CASE("fisher of a single sample is the squared gradient") {
  Dataset data = tiny_dataset(3, 2, 11, false);
  SedModel model = init_model(tiny_config(), 2, {0, 1});
  const std::vector<std::size_t> pool = {0, 1, 2};
  const std::uint64_t seed = 19;
  FisherDiagonal fisher = estimate_fisher(model, data, pool, 1, seed);

  Rng rng(derive_seed(seed, "fisher"));  // replay the estimator's draw
  const std::size_t idx = pool[rng.index(pool.size())];
  const std::vector<Tensor> g = bce_grads(model, data, idx);
  REQUIRE(fisher.f.size() == g.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    REQUIRE(fisher.f[j].same_shape(g[j]));
    for (std::size_t k = 0; k < g[j].data.size(); ++k) {
      CHECK(fisher.f[j].data[k] == g[j].data[k] * g[j].data[k]);
    }
  }
}

TEST_CASE("fisher averages squared gradients over the draws") {
  Dataset data = tiny_dataset(4, 2, 13, false);
  SedModel model = init_model(tiny_config(), 3, {0, 1});
  const std::vector<std::size_t> pool = {0, 1, 2, 3};
  const std::uint64_t seed = 23;
  const std::size_t n_samples = 5;
  FisherDiagonal fisher = estimate_fisher(model, data, pool, n_samples, seed);

  Rng rng(derive_seed(seed, "fisher"));
  std::vector<Tensor> acc;
  for (const Tensor* p : model.params()) acc.emplace_back(p->shape);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const std::size_t idx = pool[rng.index(pool.size())];
    const std::vector<Tensor> g = bce_grads(model, data, idx);
    for (std::size_t j = 0; j < g.size(); ++j) {
      for (std::size_t k = 0; k < g[j].data.size(); ++k) {
        acc[j].data[k] += g[j].data[k] * g[j].data[k];
      }
    }
  }
  for (std::size_t j = 0; j < acc.size(); ++j) {
    for (std::size_t k = 0; k < acc[j].data.size(); ++k) {
      CHECK(fisher.f[j].data[k] ==
            doctest::Approx(acc[j].data[k] / static_cast<double>(n_samples)).epsilon(1e-14));
    }
  }
}

TEST_CASE("zero-input clips leave the first conv weights with zero fisher") {
  Dataset data = tiny_dataset(2, 2, 0, true);  // all-zero features
  SedModel model = init_model(tiny_config(), 4, {0, 1});
  FisherDiagonal fisher = estimate_fisher(model, data, {0, 1}, 4, 31);
  // params()[0] is the first conv weight; its gradient is a sum of x * delta.
  for (double v : fisher.f[0].data) CHECK(v == 0.0);
  // Bias entries still receive gradient, so the estimate is not all zeros.
  double bias_mass = 0.0;
  for (double v : fisher.f[1].data) bias_mass += v;
  CHECK(bias_mass > 0.0);
}

TEST_CASE("fisher head-bias entry matches the hand derivative on constant logits") {
  // Zero features push a constant embedding through the stack, so the BCE
  // derivative wrt the head bias is sigma(o) - mean(y), a scalar computed by
  // hand from the forward logit.
  Dataset data = tiny_dataset(1, 1, 0, true);
  SedModel model = init_model(tiny_config(), 5, {0});
  FisherDiagonal fisher = estimate_fisher(model, data, {0}, 1, 37);

  const ForwardOut out = forward(model, data.features[0]);
  const double o = out.logits.at(0, 0);
  for (std::size_t t = 1; t < kT; ++t) REQUIRE(out.logits.at(t, 0) == doctest::Approx(o));
  const Tensor targets =
      rasterize_targets(data.clips[0], kT, model.class_order, model.class_order);
  double mean_y = 0.0;
  for (std::size_t t = 0; t < kT; ++t) mean_y += targets.at(t, 0);
  mean_y /= static_cast<double>(kT);
  const double d = 1.0 / (1.0 + std::exp(-o)) - mean_y;
  // Head bias is the last parameter.
  const Tensor& fb = fisher.f.back();
  REQUIRE(fb.numel() == 1);
  CHECK(fb.data[0] == doctest::Approx(d * d).epsilon(1e-12));
}

TEST_CASE("ewc penalty is zero at the anchor") {
  SedModel model = init_model(tiny_config(), 6, {0, 1});
  FisherDiagonal fisher;
  for (const Tensor* p : model.params()) fisher.f.emplace_back(p->shape, 1.0);
  CHECK(ewc_penalty(cparams(model), cparams(model), fisher, 100.0) == 0.0);
}

TEST_CASE("ewc penalty arithmetic and linearity in lambda") {
  Tensor a({2, 3}, 1.0), b({4}, 1.0);
  Tensor a0({2, 3}, 0.0), b0({4}, 0.0);
  FisherDiagonal fisher;
  fisher.f.emplace_back(a.shape, 1.0);
  fisher.f.emplace_back(b.shape, 1.0);
  const std::vector<const Tensor*> params = {&a, &b};
  const std::vector<const Tensor*> anchor = {&a0, &b0};
  // F=1 everywhere, delta=1 on 10 params, lambda=2 -> (2/2) * 10.
  CHECK(ewc_penalty(params, anchor, fisher, 2.0) == 10.0);
  CHECK(ewc_penalty(params, anchor, fisher, 4.0) == 2.0 * ewc_penalty(params, anchor, fisher, 2.0));
}

TEST_CASE("ewc penalty rejects layout mismatches") {
  Tensor a({2, 3}, 1.0);
  Tensor wrong({3, 2}, 0.0);
  FisherDiagonal fisher;
  fisher.f.emplace_back(a.shape, 1.0);
  const std::vector<const Tensor*> params = {&a};
  CHECK_THROWS_AS(ewc_penalty(params, {&wrong}, fisher, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ewc_penalty(params, {}, fisher, 1.0), std::invalid_argument);
}

TEST_CASE("taped ewc penalty matches the plain value and analytic gradient") {
  SedModel anchor = init_model(tiny_config(), 7, {0, 1});
  SedModel model = init_model(tiny_config(), 8, {0, 1});
  Rng rng(41);
  FisherDiagonal fisher;
  for (const Tensor* p : anchor.params()) {
    Tensor f(p->shape);
    for (double& v : f.data) v = rng.uniform(0.0, 2.0);
    fisher.f.push_back(std::move(f));
  }
  const double lambda = 3.0;

  Tape tape;
  TapedLeaves leaves = register_leaves(tape, model);
  Var pen = taped_ewc_penalty(tape, leaves, anchor, fisher, lambda);
  const double plain = ewc_penalty(cparams(model), cparams(anchor), fisher, lambda);
  CHECK(tape.value(pen).at(0) == doctest::Approx(plain).epsilon(1e-12));

  // d pen / d theta_j = lambda * F_j * (theta_j - anchor_j)
  Gradients grads = tape.backward(pen);
  const std::vector<Tensor> g = collect_grads(grads, leaves);
  const std::vector<const Tensor*> theta = cparams(model);
  const std::vector<const Tensor*> star = cparams(anchor);
  for (std::size_t j = 0; j < g.size(); ++j) {
    for (std::size_t k = 0; k < g[j].data.size(); ++k) {
      const double want = lambda * fisher.f[j].data[k] * (theta[j]->data[k] - star[j]->data[k]);
      CHECK(g[j].data[k] == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("taped ewc penalty covers only the anchor prefix of an expanded model") {
  SedModel anchor = init_model(tiny_config(), 9, {0, 1});
  SedModel model = anchor;
  expand_heads(model, {2, 3}, 77);
  FisherDiagonal fisher;
  for (const Tensor* p : anchor.params()) fisher.f.emplace_back(p->shape, 1.0);

  // Perturb one old parameter and one new head; only the old one is penalized.
  model.stack[0].w.data[0] += 0.5;
  model.heads[3].b.data[0] += 9.0;

  Tape tape;
  TapedLeaves leaves = register_leaves(tape, model);
  Var pen = taped_ewc_penalty(tape, leaves, anchor, fisher, 2.0);
  CHECK(tape.value(pen).at(0) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("lwf distillation vanishes when the trunk and old heads are frozen copies") {
  Dataset data = tiny_dataset(3, 4, 17, false);
  SedModel old_model = init_model(tiny_config(), 10, {0, 1});
  SedModel current = old_model;
  expand_heads(current, {2, 3}, 78);

  LwfBreakdown lb = lwf_loss(old_model, current, data, {0, 1, 2}, {2, 3});
  CHECK(lb.distill == 0.0);
  CHECK(lb.bce > 0.0);
  CHECK(lb.total == lb.distill + lb.bce);
}

TEST_CASE("constant logit gap of one gives unit lwf distillation") {
  Dataset data = tiny_dataset(2, 4, 19, false);
  SedModel old_model = init_model(tiny_config(), 11, {0, 1});
  SedModel current = old_model;
  expand_heads(current, {2, 3}, 79);
  current.heads[0].b.data[0] += 1.0;
  current.heads[1].b.data[0] += 1.0;

  LwfBreakdown lb = lwf_loss(old_model, current, data, {0, 1}, {2, 3});
  CHECK(lb.distill == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("lwf distillation equals a hand mse over forward logits") {
  Dataset data = tiny_dataset(4, 4, 29, false);
  SedModel old_model = init_model(tiny_config(), 12, {0, 1});
  SedModel current = init_model(tiny_config(), 13, {0, 1});
  expand_heads(current, {2, 3}, 80);
  const std::vector<std::size_t> clips = {1, 2, 3};

  LwfBreakdown lb = lwf_loss(old_model, current, data, clips, {2, 3});
  double want = 0.0;
  for (std::size_t idx : clips) {
    const ForwardOut a = forward(old_model, data.features[idx]);
    const ForwardOut b = forward(current, data.features[idx]);
    double mse = 0.0;
    for (std::size_t t = 0; t < kT; ++t) {
      for (std::size_t c = 0; c < 2; ++c) {
        const double d = a.logits.at(t, c) - b.logits.at(t, c);
        mse += d * d;
      }
    }
    want += mse / static_cast<double>(kT * 2);
  }
  want /= static_cast<double>(clips.size());
  CHECK(lb.distill == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("lwf rejects an empty clip list") {
  Dataset data = tiny_dataset(1, 4, 31, false);
  SedModel old_model = init_model(tiny_config(), 14, {0, 1});
  SedModel current = old_model;
  expand_heads(current, {2, 3}, 81);
  CHECK_THROWS_AS(lwf_loss(old_model, current, data, {}, {2, 3}), std::invalid_argument);
}
