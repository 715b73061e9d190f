// SED model: seeded init, forward vs an independent re-computation, head
// expansion invariance, snapshots, EMA teacher, checkpoint round trip.

#include "doctest.h"
#include "ucil/model.hpp"
#include "ucil/rng.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

using namespace ucil;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.n_mels = 5;
  cfg.conv_channels = {4, 3};
  cfg.kernel_width = 3;
  cfg.embedding_dim = 6;
  cfg.frame_count = 7;
  return cfg;
}

Tensor random_clip(Rng& rng, const ModelConfig& cfg) {
  Tensor t({cfg.frame_count, cfg.n_mels});
  for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

// Straight-line re-computation of the whole forward pass with plain nested
// loops; shares no code with the library kernels.  [DERIVED oracle]
Tensor naive_forward_logits(const SedModel& m, const Tensor& clip) {
  std::vector<std::vector<double>> h(clip.shape[0], std::vector<double>(clip.shape[1]));
  for (std::size_t t = 0; t < clip.shape[0]; ++t) {
    for (std::size_t f = 0; f < clip.shape[1]; ++f) h[t][f] = clip.at(t, f);
  }
  auto conv = [](const std::vector<std::vector<double>>& x, const Tensor& w, const Tensor& b) {
    const std::size_t t_len = x.size(), cin = x[0].size();
    const std::size_t cout = w.shape[0], kw = w.shape[2];
    const int pad = static_cast<int>((kw - 1) / 2);
    std::vector<std::vector<double>> y(t_len, std::vector<double>(cout));
    for (std::size_t t = 0; t < t_len; ++t) {
      for (std::size_t o = 0; o < cout; ++o) {
        double acc = b.at(o);
        for (std::size_t k = 0; k < kw; ++k) {
          const int src = static_cast<int>(t) + static_cast<int>(k) - pad;
          if (src < 0 || src >= static_cast<int>(t_len)) continue;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            acc += w.at(o, ci, k) * x[static_cast<std::size_t>(src)][ci];
          }
        }
        y[t][o] = acc;
      }
    }
    return y;
  };
  for (const ConvLayer& layer : m.stack) {
    h = conv(h, layer.w, layer.b);
    for (auto& row : h) {
      for (double& v : row) v = std::max(0.0, v);
    }
  }
  h = conv(h, m.proj.w, m.proj.b);
  Tensor logits({clip.shape[0], m.heads.size()});
  for (std::size_t t = 0; t < clip.shape[0]; ++t) {
    for (std::size_t c = 0; c < m.heads.size(); ++c) {
      double acc = m.heads[c].b.at(0);
      for (std::size_t j = 0; j < h[t].size(); ++j) acc += m.heads[c].w.data[j] * h[t][j];
      logits.at(t, c) = acc;
    }
  }
  return logits;
}

bool params_equal(const SedModel& a, const SedModel& b) {
  auto pa = a.params();
  auto pb = b.params();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->shape != pb[i]->shape || pa[i]->data != pb[i]->data) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("seeded init is deterministic") {
  const ModelConfig cfg = small_config();
  SedModel a = init_model(cfg, 11, {0, 1, 2});
  SedModel b = init_model(cfg, 11, {0, 1, 2});
  SedModel c = init_model(cfg, 12, {0, 1, 2});
  CHECK(params_equal(a, b));   // same seed: bitwise identical
  CHECK(!params_equal(a, c));  // different seed: differs
}

TEST_CASE("head shapes follow config") {
  ModelConfig cfg = small_config();
  cfg.embedding_dim = 64;
  SedModel m = init_model(cfg, 3, {0, 1, 2, 3, 4});
  REQUIRE(m.heads.size() == 5);
  for (const Head& h : m.heads) {
    CHECK(h.w.shape == std::vector<std::size_t>{1, 64, 1});
    CHECK(h.b.shape == std::vector<std::size_t>{1});
  }
}

TEST_CASE("zero-weight heads emit their bias") {
  SedModel m = init_model(small_config(), 5, {0, 1});
  for (Head& h : m.heads) {
    for (double& v : h.w.data) v = 0.0;
  }
  m.heads[0].b.at(0) = 0.75;
  m.heads[1].b.at(0) = -1.5;
  Rng rng(9);
  ForwardOut out = forward(m, random_clip(rng, m.config));
  for (std::size_t t = 0; t < out.logits.shape[0]; ++t) {
    CHECK(out.logits.at(t, 0) == 0.75);
    CHECK(out.logits.at(t, 1) == -1.5);
  }
}

TEST_CASE("doubling head weights doubles the weight term") {
  SedModel m = init_model(small_config(), 6, {0});
  Rng rng(10);
  const Tensor clip = random_clip(rng, m.config);
  const double bias = m.heads[0].b.at(0);
  ForwardOut before = forward(m, clip);
  for (double& v : m.heads[0].w.data) v *= 2.0;
  ForwardOut after = forward(m, clip);
  for (std::size_t t = 0; t < clip.shape[0]; ++t) {
    const double expected = 2.0 * (before.logits.at(t, 0) - bias) + bias;
    CHECK(after.logits.at(t, 0) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("forward matches straight-line re-computation") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SedModel m = init_model(small_config(), derive_seed(seed, "fwd"), {0, 1, 2, 3});
    Rng rng(seed + 100);
    const Tensor clip = random_clip(rng, m.config);
    ForwardOut out = forward(m, clip);
    Tensor ref = naive_forward_logits(m, clip);
    REQUIRE(out.logits.shape == ref.shape);
    for (std::size_t i = 0; i < ref.data.size(); ++i) {
      CHECK(std::abs(out.logits.data[i] - ref.data[i]) < 1e-10);
    }
  }
}

TEST_CASE("forward rejects wrong clip shape") {
  SedModel m = init_model(small_config(), 2, {0});
  CHECK_THROWS_AS(forward(m, Tensor({3, 3}, 0.0)), std::invalid_argument);
}

TEST_CASE("head expansion leaves existing behavior untouched") {
  SedModel m = init_model(small_config(), 21, {0, 1, 2, 3, 4});
  Rng rng(22);
  const Tensor clip = random_clip(rng, m.config);
  ForwardOut before = forward(m, clip);
  SedModel pre = m;

  expand_heads(m, {5, 6, 7, 8, 9}, 77);
  REQUIRE(m.heads.size() == 10);
  CHECK(m.class_order == std::vector<std::int32_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  for (std::size_t c = 0; c < 5; ++c) {
    CHECK(m.heads[c].w.data == pre.heads[c].w.data);  // bitwise
    CHECK(m.heads[c].b.data == pre.heads[c].b.data);
  }
  ForwardOut after = forward(m, clip);
  for (std::size_t t = 0; t < clip.shape[0]; ++t) {
    for (std::size_t c = 0; c < 5; ++c) {
      CHECK(after.logits.at(t, c) == before.logits.at(t, c));  // bitwise
    }
  }

  // expanding by zero classes is the identity
  SedModel same = pre;
  expand_heads(same, {}, 123);
  CHECK(params_equal(same, pre));

  // duplicate id rejected
  CHECK_THROWS_AS(expand_heads(m, {3}, 1), std::invalid_argument);
}

TEST_CASE("snapshot is an isolated deep copy") {
  SedModel m = init_model(small_config(), 31, {0, 1});
  Rng rng(32);
  const Tensor clip = random_clip(rng, m.config);
  SedModel snap = snapshot(m);
  ForwardOut at_copy = forward(m, clip);

  // snapshot(snapshot(m)) behaves like snapshot(m)
  CHECK(params_equal(snapshot(snap), snap));

  for (Tensor* t : m.params()) {
    for (double& v : t->data) v += 1.0;
  }
  ForwardOut frozen = forward(snap, clip);
  CHECK(frozen.logits.data == at_copy.logits.data);
}

TEST_CASE("ema update") {
  SedModel teacher = init_model(small_config(), 41, {0});
  SedModel student = init_model(small_config(), 41, {0});

  // fixed point: t == s stays put
  SedModel t2 = teacher;
  ema_update(t2, student, 0.999);
  CHECK(params_equal(t2, teacher));

  // t=0, s=1 -> 0.001
  for (Tensor* t : teacher.params()) {
    for (double& v : t->data) v = 0.0;
  }
  for (Tensor* t : student.params()) {
    for (double& v : t->data) v = 1.0;
  }
  ema_update(teacher, student, 0.999);
  CHECK(teacher.stack[0].w.data[0] == doctest::Approx(0.001).epsilon(1e-12));

  // constant student: |t_k - s| = 0.999^k |t_0 - s|
  for (int k = 1; k < 5; ++k) ema_update(teacher, student, 0.999);
  CHECK(std::abs(teacher.stack[0].w.data[0] - 1.0) ==
        doctest::Approx(std::pow(0.999, 5)).epsilon(1e-10));

  SedModel other = init_model(small_config(), 41, {0, 1});
  CHECK_THROWS_AS(ema_update(teacher, other, 0.999), std::invalid_argument);
}

TEST_CASE("taped forward agrees with plain forward") {
  SedModel m = init_model(small_config(), 51, {0, 1, 2});
  Rng rng(52);
  const Tensor clip = random_clip(rng, m.config);
  ForwardOut plain = forward(m, clip);

  Tape tape;
  TapedLeaves leaves = register_leaves(tape, m);
  TapedForward tf = taped_forward(tape, leaves, m, clip);
  CHECK(tape.value(tf.embeddings).data == plain.embeddings.data);  // same kernel path
  for (std::size_t c = 0; c < 3; ++c) {
    const Tensor& col = tape.value(tf.class_logits[c]);
    REQUIRE(col.shape == std::vector<std::size_t>{m.config.frame_count, 1});
    for (std::size_t t = 0; t < col.shape[0]; ++t) {
      CHECK(col.at(t, 0) == doctest::Approx(plain.logits.at(t, c)).epsilon(1e-12));
    }
  }

  // collect_grads aligns with params() ordering
  Var loss = tape.mean_axis(tape.mean_axis(tf.class_logits[0], 0), 0);
  std::vector<Tensor> grads = collect_grads(tape.backward(loss), leaves);
  auto params = m.params();
  REQUIRE(grads.size() == params.size());
  for (std::size_t i = 0; i < grads.size(); ++i) CHECK(grads[i].shape == params[i]->shape);
  // heads 1 and 2 are untouched by this loss: exact zeros
  const std::size_t head1_w = grads.size() - 4;
  for (double v : grads[head1_w].data) CHECK(v == 0.0);
}

TEST_CASE("checkpoint round trip") {
  SedModel m = init_model(small_config(), 61, {3, 1, 4});
  const std::string path = "model_roundtrip.ucil";
  save_model(m, path);
  SedModel back = load_model(path);
  CHECK(params_equal(m, back));
  CHECK(back.class_order == m.class_order);
  CHECK(back.config.conv_channels == m.config.conv_channels);
  CHECK(back.config.frame_count == m.config.frame_count);
  std::remove(path.c_str());

  std::ofstream bad("model_badmagic.ucil", std::ios::binary);
  bad << "NOTMODEL garbage";
  bad.close();
  CHECK_THROWS_WITH_AS(load_model("model_badmagic.ucil"), doctest::Contains("magic"),
                       std::runtime_error);
  std::remove("model_badmagic.ucil");
}
