#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ucil/autodiff.hpp"
#include "ucil/dataset.hpp"
#include "ucil/model.hpp"

namespace ucil {

// Diagonal Fisher estimate, one tensor per parameter in params() order.
struct FisherDiagonal {
  std::vector<Tensor> f;
};

// F_j = mean over sampled clips of the squared full-class BCE gradient.
// Clips are drawn with replacement from `pool` (labeled clip indices).
FisherDiagonal estimate_fisher(const SedModel& model, const Dataset& data,
                               const std::vector<std::size_t>& pool, std::size_t n_samples,
                               std::uint64_t seed);

// (lambda/2) * sum_j F_j * (theta_j - anchor_j)^2 as a plain value.
double ewc_penalty(const std::vector<const Tensor*>& params,
                   const std::vector<const Tensor*>& anchor, const FisherDiagonal& fisher,
                   double lambda_ewc);

// The same penalty composed on the tape so it backpropagates into the leaves.
Var taped_ewc_penalty(Tape& tape, const TapedLeaves& leaves, const SedModel& anchor,
                      const FisherDiagonal& fisher, double lambda_ewc);

// LwF objective on new-task clips: logit MSE against the frozen model over its
// classes, plus BCE restricted to the new classes. Exposed as a breakdown; the
// training path composes the same terms on the tape.
struct LwfBreakdown {
  double distill = 0.0;  // mean over clips of existing-class logit MSE
  double bce = 0.0;      // mean over clips of new-class BCE
  double total = 0.0;    // distill + bce
};

LwfBreakdown lwf_loss(const SedModel& old_model, const SedModel& current, const Dataset& data,
                      const std::vector<std::size_t>& clips,
                      const std::vector<std::int32_t>& new_classes);

}  // namespace ucil
