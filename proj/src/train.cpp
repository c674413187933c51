#include "unetkit/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "unetkit/checkpoint.hpp"
#include "unetkit/errors.hpp"
#include "unetkit/loss.hpp"
#include "unetkit/optim.hpp"
#include "unetkit/rng.hpp"

namespace unetkit {

namespace {

void validate(const TrainConfig& cfg, const std::vector<SamplePair>& train_set,
              const std::vector<SamplePair>& val_set) {
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(cfg.epochs));
  if (cfg.batch_size < 1) {
    throw ConfigError("batch_size must be >= 1, got " + std::to_string(cfg.batch_size));
  }
  if (!(cfg.learning_rate > 0.0)) {
    throw ConfigError("learning_rate must be > 0, got " + std::to_string(cfg.learning_rate));
  }
  if (!(cfg.beta1 > 0.0 && cfg.beta1 < 1.0 && cfg.beta2 > 0.0 && cfg.beta2 < 1.0)) {
    throw ConfigError("adam betas must be inside (0,1)");
  }
  if (train_set.empty()) throw ConfigError("training stream is empty");
  if (val_set.empty()) throw ConfigError("validation stream is empty");
}

// Stacks samples[first..last) into one (B, C, H, W) batch per tensor.
std::pair<Tensor, Tensor> make_batch(const std::vector<SamplePair>& samples,
                                     const std::vector<std::size_t>& order, std::size_t first,
                                     std::size_t last) {
  const Tensor& img0 = samples[order[first]].image;
  const Tensor& msk0 = samples[order[first]].mask;
  const int b = static_cast<int>(last - first);
  Tensor images(b, img0.c, img0.h, img0.w);
  Tensor masks(b, msk0.c, msk0.h, msk0.w);
  for (std::size_t s = first; s < last; ++s) {
    const SamplePair& p = samples[order[s]];
    if (!p.image.same_shape(img0) || !p.mask.same_shape(msk0)) {
      throw DimensionError("train: sample '" + p.id + "' shape differs from the first sample");
    }
    const int bi = static_cast<int>(s - first);
    std::copy(p.image.data.begin(), p.image.data.end(),
              images.data.begin() + static_cast<long>(bi) * static_cast<long>(img0.size()));
    std::copy(p.mask.data.begin(), p.mask.data.end(),
              masks.data.begin() + static_cast<long>(bi) * static_cast<long>(msk0.size()));
  }
  return {std::move(images), std::move(masks)};
}

}  // namespace

TrainingSummary train(UNetModel& model, const std::vector<SamplePair>& train_set,
                      const std::vector<SamplePair>& val_set, const TrainConfig& cfg) {
  validate(cfg, train_set, val_set);

  auto views = named_state(model);
  AdamState<float> adam = make_adam_state(views, cfg.beta1, cfg.beta2, cfg.adam_eps);
  PlateauScheduler sched;
  sched.lr = cfg.learning_rate;
  sched.factor = cfg.scheduler_factor;
  sched.patience = cfg.scheduler_patience;
  Rng rng(cfg.seed);

  std::vector<std::size_t> train_order(train_set.size());
  for (std::size_t i = 0; i < train_order.size(); ++i) train_order[i] = i;
  std::vector<std::size_t> val_order(val_set.size());
  for (std::size_t i = 0; i < val_order.size(); ++i) val_order[i] = i;

  TrainingSummary summary;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr_used = sched.lr;

    set_mode(model, Mode::Training);
    rng.shuffle(train_order);
    double train_loss_sum = 0.0;
    long train_batches = 0;
    for (std::size_t first = 0; first < train_set.size(); first += bs) {
      const std::size_t last = std::min(first + bs, train_set.size());
      auto [images, masks] = make_batch(train_set, train_order, first, last);
      zero_grad(model);
      UNetCache<float> cache;
      Tensor logits = unet_forward(model, images, &cache);
      LossResult<float> loss = dice_bce_loss(logits, masks);
      if (!std::isfinite(loss.value)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           " batch " + std::to_string(train_batches + 1));
      }
      unet_backward(model, cache, loss.grad);
      adam_step(views, adam, lr_used);
      ++summary.adam_steps;
      train_loss_sum += loss.value;
      ++train_batches;
    }
    const double train_loss = train_loss_sum / static_cast<double>(train_batches);

    set_mode(model, Mode::Inference);
    double val_loss_sum = 0.0;
    long val_batches = 0;
    for (std::size_t first = 0; first < val_set.size(); first += bs) {
      const std::size_t last = std::min(first + bs, val_set.size());
      auto [images, masks] = make_batch(val_set, val_order, first, last);
      Tensor logits = unet_forward(model, images);
      LossResult<float> loss = dice_bce_loss(logits, masks);
      if (!std::isfinite(loss.value)) {
        throw NumericError("train: non-finite validation loss at epoch " +
                           std::to_string(epoch) + " batch " + std::to_string(val_batches + 1));
      }
      val_loss_sum += loss.value;
      ++val_batches;
    }
    const double val_loss = val_loss_sum / static_cast<double>(val_batches);

    sched.step(val_loss);

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EpochRecord rec{epoch, train_loss, val_loss, lr_used, secs};
    summary.epochs.push_back(rec);
    char line[256];
    std::snprintf(line, sizeof(line), "epoch=%d train_loss=%.6f val_loss=%.6f lr=%.8g secs=%.3f",
                  epoch, train_loss, val_loss, lr_used, secs);
    summary.log_lines.emplace_back(line);
    if (cfg.log) cfg.log(summary.log_lines.back());

    if (val_loss < summary.best_val_loss) {
      summary.best_val_loss = val_loss;
      summary.best_epoch = epoch;
      if (!cfg.checkpoint_path.empty()) {
        save_checkpoint(checkpoint_from_model(model, epoch, val_loss), cfg.checkpoint_path);
      }
    }
  }
  return summary;
}

}  // namespace unetkit
