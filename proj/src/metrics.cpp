#include "unetkit/metrics.hpp"

#include <array>

#include "unetkit/errors.hpp"

namespace unetkit {

template <typename T>
BasicTensor<T> binarize(const BasicTensor<T>& probs, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ValueError("binarize: threshold must be in [0,1], got " + std::to_string(threshold));
  }
  BasicTensor<T> out(probs.n, probs.c, probs.h, probs.w);
  for (std::size_t i = 0; i < probs.data.size(); ++i) {
    out.data[i] = static_cast<double>(probs.data[i]) >= threshold ? T(1) : T(0);
  }
  return out;
}

namespace {

double ratio_or_one(double num, double den) { return den == 0.0 ? 1.0 : num / den; }

}  // namespace

MetricsRecord segmentation_metrics(const Tensor& pred, const Tensor& gt) {
  if (!pred.same_shape(gt)) {
    throw DimensionError("segmentation_metrics: pred shape " + pred.shape_str() +
                         " != gt shape " + gt.shape_str());
  }
  MetricsRecord r;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const float p = pred.data[i];
    const float g = gt.data[i];
    if ((p != 0.0f && p != 1.0f) || (g != 0.0f && g != 1.0f)) {
      throw ValueError("segmentation_metrics: inputs must be binary, found pred=" +
                       std::to_string(p) + " gt=" + std::to_string(g) + " at flat index " +
                       std::to_string(i));
    }
    if (p == 1.0f && g == 1.0f) ++r.counts.tp;
    else if (p == 1.0f) ++r.counts.fp;
    else if (g == 1.0f) ++r.counts.fn;
    else ++r.counts.tn;
  }
  const double tp = static_cast<double>(r.counts.tp);
  const double fp = static_cast<double>(r.counts.fp);
  const double fn = static_cast<double>(r.counts.fn);
  const double tn = static_cast<double>(r.counts.tn);
  r.jaccard = ratio_or_one(tp, tp + fp + fn);
  r.f1 = ratio_or_one(2.0 * tp, 2.0 * tp + fp + fn);
  r.recall = ratio_or_one(tp, tp + fn);
  r.precision = ratio_or_one(tp, tp + fp);
  r.accuracy = ratio_or_one(tp + tn, tp + fp + fn + tn);
  return r;
}

MeanMetrics mean_of(const std::vector<MetricsRecord>& records) {
  if (records.empty()) throw ValueError("mean_of: no records");
  MeanMetrics m;
  for (const auto& r : records) {
    m.jaccard += r.jaccard;
    m.f1 += r.f1;
    m.recall += r.recall;
    m.precision += r.precision;
    m.accuracy += r.accuracy;
    m.tp += static_cast<double>(r.counts.tp);
    m.fp += static_cast<double>(r.counts.fp);
    m.fn += static_cast<double>(r.counts.fn);
    m.tn += static_cast<double>(r.counts.tn);
  }
  const double n = static_cast<double>(records.size());
  m.jaccard /= n;
  m.f1 /= n;
  m.recall /= n;
  m.precision /= n;
  m.accuracy /= n;
  m.tp /= n;
  m.fp /= n;
  m.fn /= n;
  m.tn /= n;
  return m;
}

double quadratic_weighted_kappa(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size()) {
    throw DimensionError("quadratic_weighted_kappa: list lengths differ (" +
                         std::to_string(pred.size()) + " vs " + std::to_string(truth.size()) +
                         ")");
  }
  if (pred.empty()) throw ValueError("quadratic_weighted_kappa: empty grade lists");
  constexpr int K = 5;
  std::array<std::array<double, K>, K> observed{};
  std::array<double, K> row{}, col{};
  for (std::size_t s = 0; s < pred.size(); ++s) {
    const int a = pred[s];
    const int b = truth[s];
    if (a < 0 || a >= K || b < 0 || b >= K) {
      throw ValueError("quadratic_weighted_kappa: grade outside {0..4} at index " +
                       std::to_string(s));
    }
    observed[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] += 1.0;
    row[static_cast<std::size_t>(a)] += 1.0;
    col[static_cast<std::size_t>(b)] += 1.0;
  }
  const double n = static_cast<double>(pred.size());
  double num = 0.0, den = 0.0;
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) {
      const double w = static_cast<double>((i - j) * (i - j)) / 16.0;
      num += w * observed[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      den += w * row[static_cast<std::size_t>(i)] * col[static_cast<std::size_t>(j)] / n;
    }
  }
  if (den == 0.0) return 1.0;
  return 1.0 - num / den;
}

template BasicTensor<float> binarize<float>(const BasicTensor<float>&, double);
template BasicTensor<double> binarize<double>(const BasicTensor<double>&, double);

}  // namespace unetkit
