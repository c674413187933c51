#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "unetkit/data.hpp"
#include "unetkit/unet.hpp"

namespace unetkit {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 2;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double scheduler_factor = 0.5;
  int scheduler_patience = 5;
  std::string checkpoint_path;  // empty disables checkpointing
  std::uint64_t seed = 0;
  // Epoch log sink; lines are also collected in the summary.
  std::function<void(const std::string&)> log;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double lr = 0;  // lr in effect during this epoch
  double secs = 0;
};

struct TrainingSummary {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 1-based; 0 if no epoch ran
  double best_val_loss = std::numeric_limits<double>::infinity();
  long adam_steps = 0;
  std::vector<std::string> log_lines;
};

// Deterministic for fixed (data, config, seed): per-epoch losses and final
// parameters are reproducible bit-for-bit on the same build. Writes the best
// checkpoint whenever validation loss strictly improves.
TrainingSummary train(UNetModel& model, const std::vector<SamplePair>& train_set,
                      const std::vector<SamplePair>& val_set, const TrainConfig& cfg);

}  // namespace unetkit
