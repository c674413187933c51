#pragma once

#include <limits>
#include <vector>

#include "unetkit/unet.hpp"

namespace unetkit {

// First/second moments kept in double so the update math is identical for
// float and double models. One slot per parameter view; buffer views
// (grad == nullptr) get empty slots.
template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::vector<std::vector<double>> m, v;
};

template <typename T>
AdamState<T> make_adam_state(const std::vector<ParamView<T>>& params, double beta1 = 0.9,
                             double beta2 = 0.999, double eps = 1e-8);

// Standard Adam with bias correction; t increments once per call. Throws
// NumericError naming the parameter when a gradient is non-finite.
template <typename T>
void adam_step(std::vector<ParamView<T>>& params, AdamState<T>& state, double lr);

// Reduce-on-plateau: an epoch improves when val_loss < best - threshold;
// `patience` consecutive non-improving epochs multiply lr by factor, floored.
struct PlateauScheduler {
  double lr = 1e-4;
  double factor = 0.5;
  int patience = 5;
  double threshold = 1e-4;
  double floor = 1e-7;

  double best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  double step(double val_loss) {
    if (val_loss < best - threshold) {
      best = val_loss;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs >= patience) {
        lr = std::max(lr * factor, floor);
        bad_epochs = 0;
      }
    }
    return lr;
  }
};

}  // namespace unetkit
