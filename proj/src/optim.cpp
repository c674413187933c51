#include "unetkit/optim.hpp"

#include <cmath>

#include "unetkit/errors.hpp"

namespace unetkit {

template <typename T>
AdamState<T> make_adam_state(const std::vector<ParamView<T>>& params, double beta1, double beta2,
                             double eps) {
  AdamState<T> s;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  s.m.resize(params.size());
  s.v.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].grad) {
      s.m[i].assign(static_cast<std::size_t>(params[i].count), 0.0);
      s.v[i].assign(static_cast<std::size_t>(params[i].count), 0.0);
    }
  }
  return s;
}

template <typename T>
void adam_step(std::vector<ParamView<T>>& params, AdamState<T>& state, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: state slot count " + std::to_string(state.m.size()) +
                         " != parameter count " + std::to_string(params.size()));
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& view = params[i];
    if (!view.grad) continue;
    if (state.m[i].size() != static_cast<std::size_t>(view.count)) {
      throw DimensionError("adam_step: state size for '" + view.name +
                           "' does not match parameter size");
    }
    double* m = state.m[i].data();
    double* v = state.v[i].data();
    for (long k = 0; k < view.count; ++k) {
      const double g = static_cast<double>(view.grad[k]);
      if (!std::isfinite(g)) {
        throw NumericError("adam_step: non-finite gradient in '" + view.name + "' at index " +
                           std::to_string(k));
      }
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      view.values[k] =
          static_cast<T>(view.values[k] - lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

template AdamState<float> make_adam_state<float>(const std::vector<ParamView<float>>&, double,
                                                 double, double);
template AdamState<double> make_adam_state<double>(const std::vector<ParamView<double>>&, double,
                                                   double, double);
template void adam_step<float>(std::vector<ParamView<float>>&, AdamState<float>&, double);
template void adam_step<double>(std::vector<ParamView<double>>&, AdamState<double>&, double);

}  // namespace unetkit
