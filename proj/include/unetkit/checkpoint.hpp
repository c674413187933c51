#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "unetkit/unet.hpp"

namespace unetkit {

// On-disk model snapshot. Binary little-endian layout:
//   magic "UNTK" | u32 version | i32 in,out,base,depth | i32 epoch |
//   f64 best_val_loss | u32 record_count | records
// record: u32 name_len | name | u32 ndims | i32 dims[] | u64 value_count |
//         f32 values[]
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  UNetConfig config;
  int epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();

  struct Record {
    std::string name;
    std::vector<int> dims;
    std::vector<float> values;
  };
  std::vector<Record> records;
};

Checkpoint checkpoint_from_model(UNetModel& model, int epoch, double best_val_loss);

// Overwrites all named state of a freshly built model; names and dims must
// match the checkpoint exactly.
UNetModel model_from_checkpoint(const Checkpoint& ckpt);

// Atomic: writes to `path + ".tmp"` and renames.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace unetkit
