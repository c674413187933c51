#pragma once

#include <string>
#include <vector>

#include "unetkit/layers.hpp"

namespace unetkit {

struct UNetConfig {
  int in_channels = 3;
  int out_channels = 1;
  int base_channels = 64;
  int depth = 4;
};

// conv(3x3, pad 1) -> bn -> relu, twice.
template <typename T>
struct ConvBlock {
  ConvParams<T> conv1;
  BatchNormState<T> bn1;
  ConvParams<T> conv2;
  BatchNormState<T> bn2;
};

template <typename T>
struct DecoderLevel {
  ConvParams<T> up;  // 2x2 stride-2 transposed conv
  ConvBlock<T> block;
};

template <typename T>
struct UNetModelT {
  UNetConfig config;
  std::vector<ConvBlock<T>> enc;          // index i works at base << i channels
  ConvBlock<T> bottleneck;                // base << depth channels
  std::vector<DecoderLevel<T>> dec;       // index i works at base << i channels
  ConvParams<T> classifier;               // 1x1 conv to out_channels
  Mode mode = Mode::Training;
};

using UNetModel = UNetModelT<float>;

// Saved activations for one conv block backward pass.
template <typename T>
struct BlockCache {
  BasicTensor<T> x0;   // block input
  BatchNormCache<T> bn1c;
  BasicTensor<T> r_a;  // first relu output (second conv's input)
  BatchNormCache<T> bn2c;
  BasicTensor<T> r_b;  // block output
};

template <typename T>
struct UNetCache {
  std::vector<BlockCache<T>> enc;
  BlockCache<T> bottleneck;
  std::vector<BlockCache<T>> dec;  // indexed by decoder level
};

// Flat view over one named parameter or buffer. `grad` is null for buffers
// (running statistics), which are saved in checkpoints but never trained.
template <typename T>
struct ParamView {
  std::string name;
  T* values = nullptr;
  T* grad = nullptr;
  long count = 0;
  bool trainable = true;
  std::vector<int> dims;
};

template <typename T>
UNetModelT<T> build_unet(const UNetConfig& config, unsigned long long seed);

template <typename T>
BasicTensor<T> conv_block_forward(ConvBlock<T>& block, const BasicTensor<T>& x,
                                  BlockCache<T>* cache);

// Returns the gradient with respect to the block input and accumulates
// parameter gradients.
template <typename T>
BasicTensor<T> conv_block_backward(ConvBlock<T>& block, const BlockCache<T>& cache,
                                   const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> unet_forward(UNetModelT<T>& model, const BasicTensor<T>& x,
                            UNetCache<T>* cache = nullptr);

// Needs the cache produced by a training-mode forward on the same input.
// Returns the gradient with respect to the network input.
template <typename T>
BasicTensor<T> unet_backward(UNetModelT<T>& model, const UNetCache<T>& cache,
                             const BasicTensor<T>& grad_logits);

// Trainable parameters and buffers in forward execution order. Views stay
// valid while the model is alive and not structurally modified.
template <typename T>
std::vector<ParamView<T>> named_state(UNetModelT<T>& model);

template <typename T>
long param_count(const UNetModelT<T>& model);

template <typename T>
void set_mode(UNetModelT<T>& model, Mode mode);

template <typename T>
void zero_grad(UNetModelT<T>& model);

}  // namespace unetkit
