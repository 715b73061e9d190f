#pragma once

#include <cstddef>
#include <vector>

#include "ucil/autodiff.hpp"
#include "ucil/model.hpp"
#include "ucil/tensor.hpp"

namespace ucil {

// --- scalar composition helpers (all stay on the tape) ---

Var scalar_const(Tape& tape, double v);
Var scale(Tape& tape, Var v, double k);
Var sum_scalars(Tape& tape, const std::vector<Var>& vs);  // empty -> constant 0

// lambda = omega * sqrt(n_total / n_new)
double adaptive_lambda(std::size_t n_total, std::size_t n_new, double omega);

// Binary cross-entropy, mean over frames x subset classes. Composed per class
// with the stable split y*log(sig(o)) + (1-y)*log(sig(-o)), so saturated
// logits of either sign stay finite. class_logits are the per-class T x 1
// outputs of taped_forward; targets is T x |C| multi-hot in model class order;
// class_subset holds model class positions (IndL restricts it to new classes).
Var bce_loss(Tape& tape, const std::vector<Var>& class_logits, const Tensor& targets,
             const std::vector<std::size_t>& class_subset);

// L_FD: mean over frames of 1 - cos(v, v_ref), both L2-normalized per frame.
Var feature_distillation(Tape& tape, Var v, const Tensor& v_ref);

// L_OD: mean squared difference over frames x existing classes. The current
// side is class_logits[0..n_ext); the reference is the snapshot's T x n_ext
// logit matrix.
Var output_distillation(Tape& tape, const std::vector<Var>& class_logits, std::size_t n_ext,
                        const Tensor& old_logits_ext);

// L_KD = L_FD + lambda * L_OD.
Var kd_loss(Tape& tape, Var fd, Var od, double lambda);

// Per-clip discrepancy d: mean absolute difference between existing-class
// logit matrices (Eq. 3).
double logit_discrepancy(const Tensor& a, const Tensor& b);

// Picks the ceil(B/2) clips with the largest d, ties broken by ascending clip
// index; returns selected indices in ascending order.
std::vector<std::size_t> select_unlabeled(const std::vector<Tensor>& snap_logits_ext,
                                          const std::vector<Tensor>& cur_logits_ext);

// --- batch-level total loss (Eq. 4) ---

// Frozen-model outputs for one clip, computed once per task and cached.
struct SnapshotOutputs {
  Tensor embeddings;  // T x D
  Tensor logits_ext;  // T x n_ext
};

SnapshotOutputs snapshot_outputs(const SedModel& snap, const Tensor& clip);

struct LabeledExample {
  const Tensor* clip = nullptr;
  Tensor targets;                       // T x |C| in model class order
  std::vector<std::size_t> bce_subset;  // classes the BCE covers (IndL or full)
  const SnapshotOutputs* snap = nullptr;  // null when distillation is off
};

struct UnlabeledExample {
  const Tensor* clip = nullptr;
  const SnapshotOutputs* snap = nullptr;
};

struct TotalLossSpec {
  std::size_t n_ext = 0;  // existing classes; 0 disables every distillation term
  double lambda = 0.0;    // weight on L_OD inside L_KD
  bool fd = true;         // include the cosine term
  bool uod = true;        // include the unlabeled term
};

// Component Vars of Eq. (4). od holds the lambda-scaled contribution (the
// value that is logged), so total == bce + fd + od + uod by construction.
struct TotalLossVars {
  Var total, bce, fd, od, uod;
};

TotalLossVars compose_total_loss(Tape& tape, const TapedLeaves& leaves, const SedModel& model,
                                 const std::vector<LabeledExample>& labeled,
                                 const std::vector<UnlabeledExample>& unlabeled,
                                 const TotalLossSpec& spec);

}  // namespace ucil
