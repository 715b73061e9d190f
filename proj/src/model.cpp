#include "ucil/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "ucil/binio.hpp"
#include "ucil/rng.hpp"

namespace ucil {

namespace {

constexpr char kModelMagic[9] = "UCILMDL1";

// Uniform He-style fan-in init. Biases start slightly positive so no frame's
// embedding can be structurally zero through dead ReLUs (feature distillation
// rejects zero-norm frames).
void init_conv(ConvLayer& layer, std::size_t cout, std::size_t cin, std::size_t k, Rng& rng) {
  layer.w = Tensor({cout, cin, k});
  const double bound = std::sqrt(6.0 / static_cast<double>(cin * k));
  for (double& v : layer.w.data) v = rng.uniform(-bound, bound);
  layer.b = Tensor({cout}, 0.1);
}

Head init_head(std::int32_t class_id, std::size_t d, Rng& rng) {
  Head h;
  h.class_id = class_id;
  h.w = Tensor({1, d, 1});
  const double bound = std::sqrt(6.0 / static_cast<double>(d));
  for (double& v : h.w.data) v = rng.uniform(-bound, bound);
  h.b = Tensor({1});
  return h;
}

void require_no_duplicates(const std::vector<std::int32_t>& existing,
                           const std::vector<std::int32_t>& incoming) {
  std::set<std::int32_t> seen(existing.begin(), existing.end());
  for (std::int32_t id : incoming) {
    if (!seen.insert(id).second) {
      throw std::invalid_argument("expand_heads: duplicate class id " + std::to_string(id));
    }
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (n_mels < 1 || kernel_width < 1 || embedding_dim < 1 || frame_count < 1 ||
      conv_channels.empty()) {
    throw std::invalid_argument("model config: all dimensions must be >= 1");
  }
  for (std::size_t c : conv_channels) {
    if (c < 1) throw std::invalid_argument("model config: all dimensions must be >= 1");
  }
  if (kernel_width % 2 == 0) {
    throw std::invalid_argument("model config: kernel width must be odd");
  }
}

std::vector<Tensor*> SedModel::params() {
  std::vector<Tensor*> out;
  for (ConvLayer& l : stack) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  out.push_back(&proj.w);
  out.push_back(&proj.b);
  for (Head& h : heads) {
    out.push_back(&h.w);
    out.push_back(&h.b);
  }
  return out;
}

std::vector<const Tensor*> SedModel::params() const {
  std::vector<const Tensor*> out;
  for (const ConvLayer& l : stack) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  out.push_back(&proj.w);
  out.push_back(&proj.b);
  for (const Head& h : heads) {
    out.push_back(&h.w);
    out.push_back(&h.b);
  }
  return out;
}

SedModel init_model(const ModelConfig& config, std::uint64_t seed,
                    const std::vector<std::int32_t>& class_ids) {
  config.validate();
  require_no_duplicates({}, class_ids);
  SedModel m;
  m.config = config;
  Rng rng(seed);
  std::size_t cin = config.n_mels;
  for (std::size_t cout : config.conv_channels) {
    ConvLayer layer;
    init_conv(layer, cout, cin, config.kernel_width, rng);
    m.stack.push_back(std::move(layer));
    cin = cout;
  }
  init_conv(m.proj, config.embedding_dim, cin, 1, rng);
  for (std::int32_t id : class_ids) {
    m.heads.push_back(init_head(id, config.embedding_dim, rng));
    m.class_order.push_back(id);
  }
  return m;
}

ForwardOut forward(const SedModel& model, const Tensor& clip) {
  if (clip.rank() != 2 || clip.shape[0] != model.config.frame_count ||
      clip.shape[1] != model.config.n_mels) {
    throw std::invalid_argument("forward: clip shape " + shape_str(clip.shape) +
                                " does not match config [" +
                                std::to_string(model.config.frame_count) + "x" +
                                std::to_string(model.config.n_mels) + "]");
  }
  Tensor h = clip;
  for (const ConvLayer& layer : model.stack) {
    h = kernels::conv1d_forward(h, layer.w, layer.b);
    for (double& v : h.data) v = v > 0.0 ? v : 0.0;
  }
  Tensor emb = kernels::conv1d_forward(h, model.proj.w, model.proj.b);

  const std::size_t t_len = emb.shape[0];
  const std::size_t d = emb.shape[1];
  const std::size_t c = model.heads.size();
  Tensor logits({t_len, c});
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t ci = 0; ci < c; ++ci) {
      const Head& head = model.heads[ci];
      double acc = head.b.at(0);
      for (std::size_t j = 0; j < d; ++j) acc += emb.at(t, j) * head.w.data[j];
      logits.at(t, ci) = acc;
    }
  }
  return {std::move(logits), std::move(emb)};
}

void expand_heads(SedModel& model, const std::vector<std::int32_t>& new_class_ids,
                  std::uint64_t seed) {
  require_no_duplicates(model.class_order, new_class_ids);
  Rng rng(seed);
  for (std::int32_t id : new_class_ids) {
    model.heads.push_back(init_head(id, model.config.embedding_dim, rng));
    model.class_order.push_back(id);
  }
}

void ema_update(SedModel& teacher, const SedModel& student, double decay) {
  auto tp = teacher.params();
  auto sp = student.params();
  if (tp.size() != sp.size()) {
    throw std::invalid_argument("ema_update: teacher/student layout mismatch");
  }
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (!tp[i]->same_shape(*sp[i])) {
      throw std::invalid_argument("ema_update: parameter shape mismatch at tensor " +
                                  std::to_string(i));
    }
    for (std::size_t j = 0; j < tp[i]->data.size(); ++j) {
      tp[i]->data[j] = decay * tp[i]->data[j] + (1.0 - decay) * sp[i]->data[j];
    }
  }
}

TapedLeaves register_leaves(Tape& tape, const SedModel& model) {
  TapedLeaves lv;
  for (const ConvLayer& layer : model.stack) {
    lv.stack_w.push_back(tape.leaf(layer.w));
    lv.stack_b.push_back(tape.leaf(layer.b));
  }
  lv.proj_w = tape.leaf(model.proj.w);
  lv.proj_b = tape.leaf(model.proj.b);
  for (const Head& h : model.heads) {
    lv.head_w.push_back(tape.leaf(h.w));
    lv.head_b.push_back(tape.leaf(h.b));
  }
  return lv;
}

TapedForward taped_forward(Tape& tape, const TapedLeaves& leaves, const SedModel& model,
                           const Tensor& clip) {
  if (clip.rank() != 2 || clip.shape[0] != model.config.frame_count ||
      clip.shape[1] != model.config.n_mels) {
    throw std::invalid_argument("taped_forward: clip shape " + shape_str(clip.shape) +
                                " does not match config");
  }
  Var h = tape.constant(clip);
  for (std::size_t i = 0; i < leaves.stack_w.size(); ++i) {
    h = tape.relu(tape.conv1d(h, leaves.stack_w[i], leaves.stack_b[i]));
  }
  TapedForward out;
  out.embeddings = tape.conv1d(h, leaves.proj_w, leaves.proj_b);
  out.class_logits.reserve(leaves.head_w.size());
  for (std::size_t c = 0; c < leaves.head_w.size(); ++c) {
    out.class_logits.push_back(tape.conv1d(out.embeddings, leaves.head_w[c], leaves.head_b[c]));
  }
  return out;
}

std::vector<Tensor> collect_grads(const Gradients& grads, const TapedLeaves& leaves) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < leaves.stack_w.size(); ++i) {
    out.push_back(grads.wrt(leaves.stack_w[i]));
    out.push_back(grads.wrt(leaves.stack_b[i]));
  }
  out.push_back(grads.wrt(leaves.proj_w));
  out.push_back(grads.wrt(leaves.proj_b));
  for (std::size_t c = 0; c < leaves.head_w.size(); ++c) {
    out.push_back(grads.wrt(leaves.head_w[c]));
    out.push_back(grads.wrt(leaves.head_b[c]));
  }
  return out;
}

void save_model(const SedModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_model: cannot open " + path);
  write_magic(os, kModelMagic);
  write_u64_le(os, model.config.n_mels);
  write_u64_le(os, model.config.conv_channels.size());
  for (std::size_t c : model.config.conv_channels) write_u64_le(os, c);
  write_u64_le(os, model.config.kernel_width);
  write_u64_le(os, model.config.embedding_dim);
  write_u64_le(os, model.config.frame_count);
  write_u64_le(os, model.class_order.size());
  for (std::int32_t id : model.class_order) {
    write_u64_le(os, static_cast<std::uint64_t>(static_cast<std::int64_t>(id)));
  }
  for (const Tensor* t : model.params()) {
    for (double v : t->data) write_f64_le(os, v);
  }
  if (!os) throw std::runtime_error("save_model: write failed for " + path);
}

SedModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_model: cannot open " + path);
  expect_magic(is, kModelMagic, "load_model");
  ModelConfig cfg;
  cfg.n_mels = read_u64_le(is);
  cfg.conv_channels.resize(read_u64_le(is));
  for (std::size_t& c : cfg.conv_channels) c = read_u64_le(is);
  cfg.kernel_width = read_u64_le(is);
  cfg.embedding_dim = read_u64_le(is);
  cfg.frame_count = read_u64_le(is);
  std::vector<std::int32_t> ids(read_u64_le(is));
  for (std::int32_t& id : ids) {
    id = static_cast<std::int32_t>(static_cast<std::int64_t>(read_u64_le(is)));
  }
  SedModel m = init_model(cfg, 0, ids);
  for (Tensor* t : m.params()) {
    for (double& v : t->data) v = read_f64_le(is);
  }
  return m;
}

}  // namespace ucil
