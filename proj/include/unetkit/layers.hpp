#pragma once

#include <utility>
#include <vector>

#include "unetkit/tensor.hpp"

namespace unetkit {

enum class Mode { Training, Inference };

// Weights of one (transposed) convolution. For conv2d the weight layout is
// (out_c, in_c, kh, kw) and bias has out_c entries; conv_transpose2d reads the
// same layout as its adjoint, so its input channels are weight.n and its
// output channels (and bias length) are weight.c.
template <typename T>
struct ConvParams {
  BasicTensor<T> weight;
  std::vector<T> bias;
  std::vector<T> bias_grad;
  int stride = 1;
  int padding = 0;
};

template <typename T>
struct BatchNormState {
  std::vector<T> gamma, beta;
  std::vector<T> gamma_grad, beta_grad;
  std::vector<T> running_mean, running_var;
  T eps = static_cast<T>(1e-5);
  T momentum = static_cast<T>(0.1);
  Mode mode = Mode::Training;

  int channels() const { return static_cast<int>(gamma.size()); }
};

// Saved forward state a training-mode batchnorm backward needs.
template <typename T>
struct BatchNormCache {
  std::vector<T> mean, invstd;
  BasicTensor<T> xhat;
};

// ---- forward ----

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const ConvParams<T>& p);

template <typename T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& x, const ConvParams<T>& p);

// Training mode normalizes by batch statistics over (n, h, w), updates the
// running stats and, when `cache` is given, saves what backward needs.
// Inference mode normalizes by the running stats.
template <typename T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& x, BatchNormState<T>& s,
                           BatchNormCache<T>* cache = nullptr);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);

// Fixed 2x2 window, stride 2. Requires even spatial dims.
template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

// ---- backward ----
// The *_backward functions accumulate (+=) into the .grad buffers of their
// inputs and parameters; the *_grad variants return the input gradient as a
// fresh tensor for chaining without touching x.grad.

template <typename T>
BasicTensor<T> conv2d_input_grad(const BasicTensor<T>& grad_out, const ConvParams<T>& p, int h,
                                 int w);

template <typename T>
void conv2d_param_grad(const BasicTensor<T>& x, ConvParams<T>& p, const BasicTensor<T>& grad_out);

template <typename T>
void conv2d_backward(BasicTensor<T>& x, ConvParams<T>& p, const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> conv_transpose2d_input_grad(const BasicTensor<T>& grad_out, const ConvParams<T>& p,
                                           int h, int w);

template <typename T>
void conv_transpose2d_param_grad(const BasicTensor<T>& x, ConvParams<T>& p,
                                 const BasicTensor<T>& grad_out);

template <typename T>
void conv_transpose2d_backward(BasicTensor<T>& x, ConvParams<T>& p,
                               const BasicTensor<T>& grad_out);

// cache == nullptr means inference mode (affine by running stats).
template <typename T>
BasicTensor<T> batchnorm2d_input_grad(const BasicTensor<T>& grad_out, BatchNormState<T>& s,
                                      const BatchNormCache<T>* cache);

template <typename T>
void batchnorm2d_backward(BasicTensor<T>& x, BatchNormState<T>& s, const BatchNormCache<T>* cache,
                          const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> relu_input_grad(const BasicTensor<T>& x, const BasicTensor<T>& grad_out);

template <typename T>
void relu_backward(BasicTensor<T>& x, const BasicTensor<T>& grad_out);

// In-place: g *= (ref > 0). `ref` may be the relu input or its output, the
// positive mask is identical either way.
template <typename T>
void relu_mask_inplace(BasicTensor<T>& g, const BasicTensor<T>& ref);

// y must be the sigmoid output; dx = gy * y * (1 - y).
template <typename T>
BasicTensor<T> sigmoid_input_grad(const BasicTensor<T>& y, const BasicTensor<T>& grad_out);

template <typename T>
void sigmoid_backward(BasicTensor<T>& x, const BasicTensor<T>& y, const BasicTensor<T>& grad_out);

// Routes each gradient to the argmax of its 2x2 window; ties resolve to the
// first position in row-major scan order.
template <typename T>
BasicTensor<T> maxpool2d_input_grad(const BasicTensor<T>& x, const BasicTensor<T>& grad_out);

template <typename T>
void maxpool2d_backward(BasicTensor<T>& x, const BasicTensor<T>& grad_out);

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& g, int c_first);

template <typename T>
void concat_channels_backward(BasicTensor<T>& a, BasicTensor<T>& b,
                              const BasicTensor<T>& grad_out);

// ---- parameter helpers ----

template <typename T>
ConvParams<T> make_conv_params(int out_c, int in_c, int kh, int kw, int stride, int padding);

// For conv_transpose2d, where the weight layout is (in_c, out_c, kh, kw).
template <typename T>
ConvParams<T> make_conv_transpose_params(int in_c, int out_c, int kh, int kw, int stride,
                                         int padding);

// Output spatial size of conv2d; throws DimensionError when not a positive integer.
std::pair<int, int> conv2d_output_dims(int h, int w, int kh, int kw, int stride, int padding);
std::pair<int, int> conv_transpose2d_output_dims(int h, int w, int kh, int kw, int stride,
                                                 int padding);

}  // namespace unetkit
