#pragma once

#include <string>
#include <vector>

#include "unetkit/data.hpp"
#include "unetkit/metrics.hpp"
#include "unetkit/unet.hpp"

namespace unetkit {

struct FpsResult {
  double fps = 0.0;
  double mean_ms = 0.0;
  int frames = 0;
};

// Inference-mode forward passes over pre-loaded tensors; disk I/O and warmup
// excluded from timing. Throws NumericError when the clock resolution yields
// zero elapsed time.
FpsResult measure_fps(UNetModel& model, const std::vector<Tensor>& samples, int warmup);

// Inference-mode sigmoid probabilities for one (1, C, H, W) input.
Tensor predict_probs(UNetModel& model, const Tensor& image);

// Mean Dice (F1 of the binarized prediction) over a sample set.
double mean_dice(UNetModel& model, const std::vector<SamplePair>& samples, double threshold);

// Horizontal composite: original | ground truth | prediction, masks rendered
// white-on-black, 10 px mid-gray separators, written as PNG.
void render_triptych(const Tensor& image, const Tensor& gt_mask, const Tensor& pred_mask,
                     const std::string& out_path);

struct EvalResult {
  std::vector<MetricsRecord> records;
  MeanMetrics mean;
  FpsResult fps;
  std::string csv_path;
  int skipped = 0;
  std::vector<std::string> skip_messages;
};

// Per-image metrics + triptychs + CSV ("id,jaccard,f1,recall,precision,
// accuracy,tp,fp,fn,tn" and a final MEAN row) under out_dir. Samples failing
// to load are skipped and accounted for.
EvalResult evaluate_dataset(UNetModel& model, const Manifest& manifest, double threshold,
                            const std::string& out_dir, int target_h, int target_w);

}  // namespace unetkit
