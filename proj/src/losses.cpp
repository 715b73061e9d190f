#include "ucil/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ucil {

namespace {

Tensor column(const Tensor& m, std::size_t c) {
  Tensor out({m.shape[0], 1});
  for (std::size_t t = 0; t < m.shape[0]; ++t) out.at(t, 0) = m.at(t, c);
  return out;
}

Var mean_all(Tape& tape, Var v) {
  while (!tape.value(v).shape.empty()) v = tape.mean_axis(v, 0);
  return v;
}

}  // namespace

Var scalar_const(Tape& tape, double v) { return tape.constant(Tensor::scalar(v)); }

Var scale(Tape& tape, Var v, double k) { return tape.mul(v, scalar_const(tape, k)); }

Var sum_scalars(Tape& tape, const std::vector<Var>& vs) {
  if (vs.empty()) return scalar_const(tape, 0.0);
  Var acc = vs[0];
  for (std::size_t i = 1; i < vs.size(); ++i) acc = tape.add(acc, vs[i]);
  return acc;
}

double adaptive_lambda(std::size_t n_total, std::size_t n_new, double omega) {
  if (n_new == 0) {
    throw std::invalid_argument("adaptive_lambda: no new classes in this phase");
  }
  if (n_total < n_new) {
    throw std::invalid_argument("adaptive_lambda: total classes < new classes");
  }
  return omega * std::sqrt(static_cast<double>(n_total) / static_cast<double>(n_new));
}

Var bce_loss(Tape& tape, const std::vector<Var>& class_logits, const Tensor& targets,
             const std::vector<std::size_t>& class_subset) {
  if (class_subset.empty()) {
    throw std::invalid_argument("bce_loss: empty class subset");
  }
  if (targets.rank() != 2 || targets.shape[1] != class_logits.size()) {
    throw std::invalid_argument("bce_loss: targets shape " + shape_str(targets.shape) +
                                " does not cover " + std::to_string(class_logits.size()) +
                                " classes");
  }
  const std::size_t t_len = targets.shape[0];
  Tensor neg_one({t_len, 1}, -1.0);
  std::vector<Var> class_terms;
  class_terms.reserve(class_subset.size());
  for (std::size_t c : class_subset) {
    if (c >= class_logits.size()) {
      throw std::invalid_argument("bce_loss: class position " + std::to_string(c) +
                                  " outside model");
    }
    Var o = class_logits[c];
    Tensor y = column(targets, c);
    Tensor y1(y.shape);
    for (std::size_t i = 0; i < y.data.size(); ++i) y1.data[i] = 1.0 - y.data[i];
    Var log_p = tape.log(tape.sigmoid(o));
    Var log_q = tape.log(tape.sigmoid(tape.mul(o, tape.constant(neg_one))));
    Var term = tape.add(tape.mul(tape.constant(std::move(y)), log_p),
                        tape.mul(tape.constant(std::move(y1)), log_q));
    class_terms.push_back(mean_all(tape, term));
  }
  return scale(tape, sum_scalars(tape, class_terms),
               -1.0 / static_cast<double>(class_subset.size()));
}

Var feature_distillation(Tape& tape, Var v, const Tensor& v_ref) {
  // copy the shape out: tape.value references die when the tape grows
  const std::vector<std::size_t> shape = tape.value(v).shape;
  if (shape != v_ref.shape || shape.size() != 2) {
    throw std::invalid_argument("feature_distillation: embedding shapes " + shape_str(shape) +
                                " vs " + shape_str(v_ref.shape));
  }
  const std::size_t t_len = shape[0], d = shape[1];
  Var nv = tape.l2_normalize(v, 1);
  Var nref = tape.l2_normalize(tape.constant(v_ref), 1);
  // per-frame cosine: mean over D of the elementwise product, rescaled by D
  Var cos_t = tape.mul(tape.mean_axis(tape.mul(nv, nref), 1),
                       tape.constant(Tensor({t_len}, static_cast<double>(d))));
  Var one_minus = tape.sub(tape.constant(Tensor({t_len}, 1.0)), cos_t);
  return tape.mean_axis(one_minus, 0);
}

Var output_distillation(Tape& tape, const std::vector<Var>& class_logits, std::size_t n_ext,
                        const Tensor& old_logits_ext) {
  if (n_ext == 0 || n_ext > class_logits.size()) {
    throw std::invalid_argument("output_distillation: existing-class count " +
                                std::to_string(n_ext) + " out of range");
  }
  if (old_logits_ext.rank() != 2 || old_logits_ext.shape[1] != n_ext) {
    throw std::invalid_argument("output_distillation: reference shape " +
                                shape_str(old_logits_ext.shape) + " does not hold " +
                                std::to_string(n_ext) + " classes");
  }
  std::vector<Var> per_class;
  per_class.reserve(n_ext);
  for (std::size_t c = 0; c < n_ext; ++c) {
    per_class.push_back(
        tape.squared_error(class_logits[c], tape.constant(column(old_logits_ext, c))));
  }
  return scale(tape, sum_scalars(tape, per_class), 1.0 / static_cast<double>(n_ext));
}

Var kd_loss(Tape& tape, Var fd, Var od, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("kd_loss: negative lambda");
  return tape.add(fd, scale(tape, od, lambda));
}

double logit_discrepancy(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("logit_discrepancy: shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) acc += std::abs(a.data[i] - b.data[i]);
  return acc / static_cast<double>(a.data.size());
}

std::vector<std::size_t> select_unlabeled(const std::vector<Tensor>& snap_logits_ext,
                                          const std::vector<Tensor>& cur_logits_ext) {
  if (snap_logits_ext.empty() || snap_logits_ext.size() != cur_logits_ext.size()) {
    throw std::invalid_argument("select_unlabeled: empty or mismatched batch");
  }
  const std::size_t b = snap_logits_ext.size();
  std::vector<double> d(b);
  for (std::size_t i = 0; i < b; ++i) {
    d[i] = logit_discrepancy(snap_logits_ext[i], cur_logits_ext[i]);
  }
  std::vector<std::size_t> order(b);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (d[x] != d[y]) return d[x] > d[y];
    return x < y;
  });
  const std::size_t take = (b + 1) / 2;
  std::vector<std::size_t> selected(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
  std::sort(selected.begin(), selected.end());
  return selected;
}

SnapshotOutputs snapshot_outputs(const SedModel& snap, const Tensor& clip) {
  ForwardOut out = forward(snap, clip);
  return {std::move(out.embeddings), std::move(out.logits)};
}

TotalLossVars compose_total_loss(Tape& tape, const TapedLeaves& leaves, const SedModel& model,
                                 const std::vector<LabeledExample>& labeled,
                                 const std::vector<UnlabeledExample>& unlabeled,
                                 const TotalLossSpec& spec) {
  if (labeled.empty()) {
    throw std::invalid_argument("compose_total_loss: no labeled clips in batch");
  }
  const bool distill = spec.n_ext > 0;
  std::vector<Var> bce_terms, fd_terms, od_terms;
  for (const LabeledExample& ex : labeled) {
    TapedForward fw = taped_forward(tape, leaves, model, *ex.clip);
    bce_terms.push_back(bce_loss(tape, fw.class_logits, ex.targets, ex.bce_subset));
    if (distill && ex.snap != nullptr) {
      if (spec.fd) {
        fd_terms.push_back(feature_distillation(tape, fw.embeddings, ex.snap->embeddings));
      }
      od_terms.push_back(
          output_distillation(tape, fw.class_logits, spec.n_ext, ex.snap->logits_ext));
    }
  }
  const double inv_l = 1.0 / static_cast<double>(labeled.size());
  TotalLossVars out;
  out.bce = scale(tape, sum_scalars(tape, bce_terms), inv_l);
  out.fd = fd_terms.empty() ? scalar_const(tape, 0.0)
                            : scale(tape, sum_scalars(tape, fd_terms), inv_l);
  out.od = od_terms.empty()
               ? scalar_const(tape, 0.0)
               : scale(tape, sum_scalars(tape, od_terms), spec.lambda * inv_l);

  if (distill && spec.uod && !unlabeled.empty()) {
    std::vector<TapedForward> fws;
    std::vector<Tensor> snap_ext, cur_ext;
    fws.reserve(unlabeled.size());
    for (const UnlabeledExample& ex : unlabeled) {
      fws.push_back(taped_forward(tape, leaves, model, *ex.clip));
      snap_ext.push_back(ex.snap->logits_ext);
      Tensor cur({ex.clip->shape[0], spec.n_ext});
      for (std::size_t c = 0; c < spec.n_ext; ++c) {
        const Tensor& col = tape.value(fws.back().class_logits[c]);
        for (std::size_t t = 0; t < cur.shape[0]; ++t) cur.at(t, c) = col.at(t, 0);
      }
      cur_ext.push_back(std::move(cur));
    }
    const std::vector<std::size_t> sel = select_unlabeled(snap_ext, cur_ext);
    std::vector<Var> uod_terms;
    uod_terms.reserve(sel.size());
    for (std::size_t i : sel) {
      uod_terms.push_back(output_distillation(tape, fws[i].class_logits, spec.n_ext,
                                              unlabeled[i].snap->logits_ext));
    }
    out.uod = scale(tape, sum_scalars(tape, uod_terms), 1.0 / static_cast<double>(sel.size()));
  } else {
    out.uod = scalar_const(tape, 0.0);
  }

  out.total = tape.add(tape.add(tape.add(out.bce, out.fd), out.od), out.uod);
  return out;
}

}  // namespace ucil
