#include "unetkit/loss.hpp"

#include <cmath>

#include "unetkit/errors.hpp"
#include "unetkit/layers.hpp"

namespace unetkit {

template <typename T>
LossResult<T> dice_bce_loss(const BasicTensor<T>& logits, const BasicTensor<T>& target) {
  if (!logits.same_shape(target)) {
    throw DimensionError("dice_bce_loss: logits shape " + logits.shape_str() +
                         " != target shape " + target.shape_str());
  }
  for (std::size_t i = 0; i < target.data.size(); ++i) {
    const T g = target.data[i];
    if (g != T(0) && g != T(1)) {
      throw ValueError("dice_bce_loss: target must be binary, found " + std::to_string(g) +
                       " at flat index " + std::to_string(i));
    }
  }

  const double eps = 1.0;
  const std::size_t count = logits.data.size();
  const double inv_n = 1.0 / static_cast<double>(count);

  BasicTensor<T> p = sigmoid(logits);
  double sum_p = 0.0, sum_g = 0.0, sum_pg = 0.0, bce = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double pi = p.data[i];
    const double gi = target.data[i];
    sum_p += pi;
    sum_g += gi;
    sum_pg += pi * gi;
    // log(1 + exp(-|z|)) + max(z, 0) - z*g, stable for any logit magnitude
    const double z = logits.data[i];
    bce += std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - z * gi;
  }
  bce *= inv_n;

  const double num = 2.0 * sum_pg + eps;
  const double den = sum_p + sum_g + eps;
  const double dice_term = 1.0 - num / den;

  LossResult<T> out;
  out.value = dice_term + bce;
  out.grad = BasicTensor<T>(logits.n, logits.c, logits.h, logits.w);
  const double den2 = den * den;
  for (std::size_t i = 0; i < count; ++i) {
    const double pi = p.data[i];
    const double gi = target.data[i];
    const double d_dice_dp = -(2.0 * gi * den - num) / den2;
    const double d_bce_dz = (pi - gi) * inv_n;
    out.grad.data[i] = static_cast<T>(d_bce_dz + d_dice_dp * pi * (1.0 - pi));
  }
  return out;
}

template LossResult<float> dice_bce_loss<float>(const BasicTensor<float>&,
                                                const BasicTensor<float>&);
template LossResult<double> dice_bce_loss<double>(const BasicTensor<double>&,
                                                  const BasicTensor<double>&);

}  // namespace unetkit
