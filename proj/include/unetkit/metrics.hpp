#pragma once

#include <string>
#include <vector>

#include "unetkit/tensor.hpp"

namespace unetkit {

struct ConfusionCounts {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  long total() const { return tp + fp + fn + tn; }
};

struct MetricsRecord {
  std::string id;
  double jaccard = 0, f1 = 0, recall = 0, precision = 0, accuracy = 0;
  ConfusionCounts counts;
};

// Arithmetic means of per-image records, counts included (as doubles).
struct MeanMetrics {
  double jaccard = 0, f1 = 0, recall = 0, precision = 0, accuracy = 0;
  double tp = 0, fp = 0, fn = 0, tn = 0;
};

// 1 where prob >= threshold else 0. Threshold must lie in [0,1].
template <typename T>
BasicTensor<T> binarize(const BasicTensor<T>& probs, double threshold);

// Both tensors must be strictly binary and same-shaped. Any 0/0 ratio is
// defined as 1.0 (perfect agreement on absence).
MetricsRecord segmentation_metrics(const Tensor& pred, const Tensor& gt);

MeanMetrics mean_of(const std::vector<MetricsRecord>& records);

// Grades in {0..4}. kappa = 1 - sum(w*O)/sum(w*E), w_ij = (i-j)^2/16; returns
// 1.0 when sum(w*E) == 0 (single-category degenerate case).
double quadratic_weighted_kappa(const std::vector<int>& pred, const std::vector<int>& truth);

}  // namespace unetkit
