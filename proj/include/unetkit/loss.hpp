#pragma once

#include "unetkit/tensor.hpp"

namespace unetkit {

template <typename T>
struct LossResult {
  double value = 0.0;
  BasicTensor<T> grad;  // d loss / d logits
};

// Unweighted sum of a smoothed soft-Dice term and mean BCE, both on
// p = sigmoid(logits):
//   loss = [1 - (2*sum(p*g) + eps) / (sum p + sum g + eps)] + mean_bce
// with eps = 1.0. BCE is evaluated in the logit-stable form. Targets must be
// exactly 0 or 1.
template <typename T>
LossResult<T> dice_bce_loss(const BasicTensor<T>& logits, const BasicTensor<T>& target);

}  // namespace unetkit
