#include "unetkit/evaluate.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "unetkit/errors.hpp"
#include "unetkit/layers.hpp"

namespace fs = std::filesystem;

namespace unetkit {

FpsResult measure_fps(UNetModel& model, const std::vector<Tensor>& samples, int warmup) {
  if (samples.empty()) throw ValueError("measure_fps: need at least one sample");
  set_mode(model, Mode::Inference);
  for (int i = 0; i < warmup; ++i) {
    (void)unet_forward(model, samples[static_cast<std::size_t>(i) % samples.size()]);
  }
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& s : samples) (void)unet_forward(model, s);
  const auto t1 = std::chrono::steady_clock::now();
  const double secs = std::chrono::duration<double>(t1 - t0).count();
  if (secs <= 0.0) {
    throw NumericError("measure_fps: zero elapsed time at clock resolution; use more samples");
  }
  FpsResult r;
  r.frames = static_cast<int>(samples.size());
  r.fps = static_cast<double>(r.frames) / secs;
  r.mean_ms = secs * 1000.0 / static_cast<double>(r.frames);
  return r;
}

Tensor predict_probs(UNetModel& model, const Tensor& image) {
  set_mode(model, Mode::Inference);
  return sigmoid(unet_forward(model, image));
}

double mean_dice(UNetModel& model, const std::vector<SamplePair>& samples, double threshold) {
  if (samples.empty()) throw ValueError("mean_dice: no samples");
  double sum = 0.0;
  for (const auto& s : samples) {
    const Tensor pred = binarize(predict_probs(model, s.image), threshold);
    sum += segmentation_metrics(pred, s.mask).f1;
  }
  return sum / static_cast<double>(samples.size());
}

namespace {

constexpr int kSeparator = 10;
constexpr unsigned char kSeparatorGray = 128;

void blit_panel(ImageU8& canvas, int x_off, const ImageU8& panel) {
  for (int y = 0; y < panel.h; ++y) {
    for (int x = 0; x < panel.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        canvas.at(y, x_off + x, c) = panel.channels == 3 ? panel.at(y, x, c) : panel.at(y, x, 0);
      }
    }
  }
}

ImageU8 mask_panel(const Tensor& mask) {
  ImageU8 img;
  img.h = mask.h;
  img.w = mask.w;
  img.channels = 1;
  img.data.resize(static_cast<std::size_t>(mask.h) * mask.w);
  for (int y = 0; y < mask.h; ++y) {
    for (int x = 0; x < mask.w; ++x) {
      img.at(y, x, 0) = mask.at(0, 0, y, x) > 0.5f ? 255 : 0;
    }
  }
  return img;
}

}  // namespace

void render_triptych(const Tensor& image, const Tensor& gt_mask, const Tensor& pred_mask,
                     const std::string& out_path) {
  if (image.h != gt_mask.h || image.w != gt_mask.w || image.h != pred_mask.h ||
      image.w != pred_mask.w) {
    throw DimensionError("render_triptych: spatial dims disagree: image " + image.shape_str() +
                         ", gt " + gt_mask.shape_str() + ", pred " + pred_mask.shape_str());
  }
  ImageU8 canvas;
  canvas.h = image.h;
  canvas.w = image.w * 3 + 2 * kSeparator;
  canvas.channels = 3;
  canvas.data.assign(static_cast<std::size_t>(canvas.h) * canvas.w * 3, kSeparatorGray);
  blit_panel(canvas, 0, tensor_to_image(image));
  blit_panel(canvas, image.w + kSeparator, mask_panel(gt_mask));
  blit_panel(canvas, 2 * (image.w + kSeparator), mask_panel(pred_mask));
  write_image_png(out_path, canvas);
}

EvalResult evaluate_dataset(UNetModel& model, const Manifest& manifest, double threshold,
                            const std::string& out_dir, int target_h, int target_w) {
  if (manifest.empty()) throw ConfigError("evaluate_dataset: empty manifest");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) {
    throw IoError("cannot create evaluation output directory: " + out_dir);
  }

  EvalResult result;
  std::vector<Tensor> loaded_images;
  for (const auto& entry : manifest.entries) {
    SamplePair pair;
    try {
      pair = load_sample(entry, target_h, target_w);
    } catch (const Error& e) {
      ++result.skipped;
      result.skip_messages.push_back(entry.id + ": " + e.what());
      continue;
    }
    const Tensor probs = predict_probs(model, pair.image);
    const Tensor pred = binarize(probs, threshold);
    MetricsRecord rec = segmentation_metrics(pred, pair.mask);
    rec.id = pair.id;
    result.records.push_back(rec);
    render_triptych(pair.image, pair.mask, pred,
                    (fs::path(out_dir) / (pair.id + "_triptych.png")).string());
    loaded_images.push_back(pair.image);
  }
  if (result.records.empty()) {
    throw IoError("evaluate_dataset: no sample could be loaded (" +
                  std::to_string(result.skipped) + " skipped)");
  }
  result.mean = mean_of(result.records);
  result.fps = measure_fps(model, loaded_images, /*warmup=*/2);

  result.csv_path = (fs::path(out_dir) / "metrics.csv").string();
  std::ofstream csv(result.csv_path, std::ios::trunc);
  if (!csv) throw IoError("cannot write CSV: " + result.csv_path);
  csv << "id,jaccard,f1,recall,precision,accuracy,tp,fp,fn,tn\n";
  char line[512];
  for (const auto& r : result.records) {
    std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%ld,%ld,%ld,%ld\n",
                  r.id.c_str(), r.jaccard, r.f1, r.recall, r.precision, r.accuracy, r.counts.tp,
                  r.counts.fp, r.counts.fn, r.counts.tn);
    csv << line;
  }
  std::snprintf(line, sizeof(line), "MEAN,%.6f,%.6f,%.6f,%.6f,%.6f,%.2f,%.2f,%.2f,%.2f\n",
                result.mean.jaccard, result.mean.f1, result.mean.recall, result.mean.precision,
                result.mean.accuracy, result.mean.tp, result.mean.fp, result.mean.fn,
                result.mean.tn);
  csv << line;
  csv.flush();
  if (!csv.good()) throw IoError("failed writing CSV: " + result.csv_path);
  return result;
}

}  // namespace unetkit
