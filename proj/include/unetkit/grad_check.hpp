#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "unetkit/rng.hpp"
#include "unetkit/tensor.hpp"

namespace unetkit {

// One flat buffer participating in a finite-difference check: the values the
// loss reads and the analytic gradient produced by the backward pass.
template <typename T>
struct GradBufferView {
  std::string name;
  T* values = nullptr;
  const T* analytic = nullptr;
  long count = 0;
};

struct GradCheckOptions {
  double h = 1e-3;
  // Check at most this many coordinates per buffer (<=0 means all), sampled
  // without replacement when an rng is supplied.
  long max_per_buffer = -1;
  Rng* rng = nullptr;
};

struct GradCheckStats {
  double max_rel_err = 0.0;
  double mean_rel_err = 0.0;
  long checked = 0;
  std::string worst_name;
  long worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

inline double grad_rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-6);
}

// Central finite differences against a scalar loss. The loss callable must
// recompute forward (and nothing else) from the current buffer contents;
// `analytic` is read as filled in by a prior backward pass.
template <typename T>
GradCheckStats grad_check(const std::function<double()>& loss,
                          const std::vector<GradBufferView<T>>& buffers,
                          const GradCheckOptions& opts = {}) {
  GradCheckStats stats;
  double err_sum = 0.0;
  for (const auto& buf : buffers) {
    std::vector<long> indices;
    if (opts.max_per_buffer > 0 && opts.max_per_buffer < buf.count && opts.rng) {
      // Partial Fisher-Yates over [0, count) for a deterministic sample.
      std::vector<long> all(static_cast<std::size_t>(buf.count));
      for (long i = 0; i < buf.count; ++i) all[static_cast<std::size_t>(i)] = i;
      for (long i = 0; i < opts.max_per_buffer; ++i) {
        const long j = i + static_cast<long>(opts.rng->index(static_cast<std::size_t>(buf.count - i)));
        std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
      }
      indices.assign(all.begin(), all.begin() + opts.max_per_buffer);
    } else {
      const long limit = (opts.max_per_buffer > 0 && opts.max_per_buffer < buf.count)
                             ? opts.max_per_buffer
                             : buf.count;
      indices.resize(static_cast<std::size_t>(limit));
      for (long i = 0; i < limit; ++i) indices[static_cast<std::size_t>(i)] = i;
    }
    for (long idx : indices) {
      const T saved = buf.values[idx];
      buf.values[idx] = static_cast<T>(saved + opts.h);
      const double up = loss();
      buf.values[idx] = static_cast<T>(saved - opts.h);
      const double down = loss();
      buf.values[idx] = saved;
      const double numeric = (up - down) / (2.0 * opts.h);
      const double analytic = static_cast<double>(buf.analytic[idx]);
      const double rel = grad_rel_err(analytic, numeric);
      err_sum += rel;
      ++stats.checked;
      if (rel > stats.max_rel_err) {
        stats.max_rel_err = rel;
        stats.worst_name = buf.name;
        stats.worst_index = idx;
        stats.worst_analytic = analytic;
        stats.worst_numeric = numeric;
      }
    }
  }
  if (stats.checked > 0) stats.mean_rel_err = err_sum / static_cast<double>(stats.checked);
  return stats;
}

template <typename T>
GradBufferView<T> view_of(const std::string& name, BasicTensor<T>& t) {
  return GradBufferView<T>{name, t.data.data(), t.grad.data(), static_cast<long>(t.data.size())};
}

}  // namespace unetkit
