#include "unetkit/unet.hpp"

#include <cmath>
#include <utility>

#include "unetkit/errors.hpp"
#include "unetkit/rng.hpp"

namespace unetkit {

namespace {

template <typename T>
BatchNormState<T> make_bn(int channels) {
  BatchNormState<T> s;
  s.gamma.assign(channels, T(1));
  s.beta.assign(channels, T(0));
  s.gamma_grad.assign(channels, T(0));
  s.beta_grad.assign(channels, T(0));
  s.running_mean.assign(channels, T(0));
  s.running_var.assign(channels, T(1));
  return s;
}

template <typename T>
ConvBlock<T> make_block(int in_c, int out_c) {
  ConvBlock<T> b;
  b.conv1 = make_conv_params<T>(out_c, in_c, 3, 3, 1, 1);
  b.bn1 = make_bn<T>(out_c);
  b.conv2 = make_conv_params<T>(out_c, out_c, 3, 3, 1, 1);
  b.bn2 = make_bn<T>(out_c);
  return b;
}

template <typename T>
void kaiming_fill(BasicTensor<T>& w, Rng& rng) {
  const double fan_in = static_cast<double>(w.c) * w.h * w.w;
  const double stddev = std::sqrt(2.0 / fan_in);
  for (auto& v : w.data) v = static_cast<T>(rng.normal(0.0, stddev));
}

void validate_config(const UNetConfig& c) {
  if (c.in_channels < 1 || c.out_channels < 1) {
    throw ConfigError("unet: channel counts must be >= 1, got in=" +
                      std::to_string(c.in_channels) + " out=" + std::to_string(c.out_channels));
  }
  if (c.base_channels < 1) {
    throw ConfigError("unet: base_channels must be >= 1, got " +
                      std::to_string(c.base_channels));
  }
  if (c.depth < 1 || c.depth > 10) {
    throw ConfigError("unet: depth must be in [1, 10], got " + std::to_string(c.depth));
  }
}

template <typename T>
void push_conv_views(std::vector<ParamView<T>>& out, const std::string& prefix,
                     ConvParams<T>& p) {
  p.weight.ensure_grad();
  out.push_back(ParamView<T>{prefix + ".weight", p.weight.data.data(), p.weight.grad.data(),
                             static_cast<long>(p.weight.data.size()), true,
                             {p.weight.n, p.weight.c, p.weight.h, p.weight.w}});
  out.push_back(ParamView<T>{prefix + ".bias", p.bias.data(), p.bias_grad.data(),
                             static_cast<long>(p.bias.size()), true,
                             {static_cast<int>(p.bias.size())}});
}

template <typename T>
void push_bn_views(std::vector<ParamView<T>>& out, const std::string& prefix,
                   BatchNormState<T>& s) {
  const int c = s.channels();
  out.push_back(ParamView<T>{prefix + ".gamma", s.gamma.data(), s.gamma_grad.data(),
                             static_cast<long>(s.gamma.size()), true, {c}});
  out.push_back(ParamView<T>{prefix + ".beta", s.beta.data(), s.beta_grad.data(),
                             static_cast<long>(s.beta.size()), true, {c}});
  out.push_back(ParamView<T>{prefix + ".running_mean", s.running_mean.data(), nullptr,
                             static_cast<long>(s.running_mean.size()), false, {c}});
  out.push_back(ParamView<T>{prefix + ".running_var", s.running_var.data(), nullptr,
                             static_cast<long>(s.running_var.size()), false, {c}});
}

template <typename T>
void push_block_views(std::vector<ParamView<T>>& out, const std::string& prefix,
                      ConvBlock<T>& b) {
  push_conv_views(out, prefix + ".conv1", b.conv1);
  push_bn_views(out, prefix + ".bn1", b.bn1);
  push_conv_views(out, prefix + ".conv2", b.conv2);
  push_bn_views(out, prefix + ".bn2", b.bn2);
}

}  // namespace

template <typename T>
UNetModelT<T> build_unet(const UNetConfig& config, unsigned long long seed) {
  validate_config(config);
  UNetModelT<T> m;
  m.config = config;
  const int base = config.base_channels;
  int in_c = config.in_channels;
  for (int i = 0; i < config.depth; ++i) {
    m.enc.push_back(make_block<T>(in_c, base << i));
    in_c = base << i;
  }
  m.bottleneck = make_block<T>(base << (config.depth - 1), base << config.depth);
  m.dec.resize(config.depth);
  for (int i = config.depth - 1; i >= 0; --i) {
    DecoderLevel<T> lvl;
    lvl.up = make_conv_transpose_params<T>(base << (i + 1), base << i, 2, 2, 2, 0);
    lvl.block = make_block<T>(2 * (base << i), base << i);
    m.dec[i] = std::move(lvl);
  }
  m.classifier = make_conv_params<T>(config.out_channels, base, 1, 1, 1, 0);

  // One generator consumed in parameter enumeration order makes init a pure
  // function of (config, seed).
  Rng rng(seed);
  for (auto& view : named_state(m)) {
    if (!view.trainable) continue;
    if (view.name.ends_with(".weight")) {
      // weight views alias the tensors below; re-derive fan_in from dims
      const auto& d = view.dims;
      const double fan_in = static_cast<double>(d[1]) * d[2] * d[3];
      const double stddev = std::sqrt(2.0 / fan_in);
      for (long i = 0; i < view.count; ++i) view.values[i] = static_cast<T>(rng.normal(0.0, stddev));
    }
    // biases, gamma, beta keep their constructed values (0 / 1 / 0)
  }
  return m;
}

template <typename T>
BasicTensor<T> conv_block_forward(ConvBlock<T>& block, const BasicTensor<T>& x,
                                  BlockCache<T>* cache) {
  BasicTensor<T> a = conv2d(x, block.conv1);
  BasicTensor<T> h1 = batchnorm2d(a, block.bn1, cache ? &cache->bn1c : nullptr);
  BasicTensor<T> r_a = relu(h1);
  BasicTensor<T> b = conv2d(r_a, block.conv2);
  BasicTensor<T> h2 = batchnorm2d(b, block.bn2, cache ? &cache->bn2c : nullptr);
  BasicTensor<T> r_b = relu(h2);
  if (cache) {
    cache->x0 = x;
    cache->r_a = std::move(r_a);
    cache->r_b = r_b;
  }
  return r_b;
}

template <typename T>
BasicTensor<T> conv_block_backward(ConvBlock<T>& block, const BlockCache<T>& cache,
                                   const BasicTensor<T>& grad_out) {
  BasicTensor<T> g = grad_out;
  relu_mask_inplace(g, cache.r_b);
  g = batchnorm2d_input_grad(g, block.bn2, &cache.bn2c);
  conv2d_param_grad(cache.r_a, block.conv2, g);
  g = conv2d_input_grad(g, block.conv2, cache.r_a.h, cache.r_a.w);
  relu_mask_inplace(g, cache.r_a);
  g = batchnorm2d_input_grad(g, block.bn1, &cache.bn1c);
  conv2d_param_grad(cache.x0, block.conv1, g);
  return conv2d_input_grad(g, block.conv1, cache.x0.h, cache.x0.w);
}

template <typename T>
BasicTensor<T> unet_forward(UNetModelT<T>& model, const BasicTensor<T>& x,
                            UNetCache<T>* cache) {
  const int depth = model.config.depth;
  if (x.c != model.config.in_channels) {
    throw DimensionError("unet_forward: input channel axis (" + std::to_string(x.c) +
                         ") != configured in_channels (" +
                         std::to_string(model.config.in_channels) + ")");
  }
  const int div = 1 << depth;
  if (x.h % div != 0 || x.w % div != 0) {
    throw DimensionError("unet_forward: spatial dims (" + std::to_string(x.h) + ", " +
                         std::to_string(x.w) + ") must be multiples of 2^depth = " +
                         std::to_string(div));
  }
  if (cache) {
    cache->enc.assign(static_cast<std::size_t>(depth), BlockCache<T>{});
    cache->dec.assign(static_cast<std::size_t>(depth), BlockCache<T>{});
  }
  std::vector<BasicTensor<T>> skips;
  skips.reserve(static_cast<std::size_t>(depth));
  BasicTensor<T> s = x;
  for (int i = 0; i < depth; ++i) {
    s = conv_block_forward(model.enc[static_cast<std::size_t>(i)], s,
                           cache ? &cache->enc[static_cast<std::size_t>(i)] : nullptr);
    skips.push_back(s);
    s = maxpool2d(s);
  }
  s = conv_block_forward(model.bottleneck, s, cache ? &cache->bottleneck : nullptr);
  for (int i = depth - 1; i >= 0; --i) {
    BasicTensor<T> u = conv_transpose2d(s, model.dec[static_cast<std::size_t>(i)].up);
    BasicTensor<T> merged = concat_channels(u, skips[static_cast<std::size_t>(i)]);
    s = conv_block_forward(model.dec[static_cast<std::size_t>(i)].block, merged,
                           cache ? &cache->dec[static_cast<std::size_t>(i)] : nullptr);
  }
  return conv2d(s, model.classifier);
}

template <typename T>
BasicTensor<T> unet_backward(UNetModelT<T>& model, const UNetCache<T>& cache,
                             const BasicTensor<T>& grad_logits) {
  const int depth = model.config.depth;
  if (static_cast<int>(cache.enc.size()) != depth ||
      static_cast<int>(cache.dec.size()) != depth) {
    throw DimensionError("unet_backward: cache depth does not match model depth");
  }

  // classifier
  const BasicTensor<T>& cls_in = cache.dec[0].r_b;
  conv2d_param_grad(cls_in, model.classifier, grad_logits);
  BasicTensor<T> g = conv2d_input_grad(grad_logits, model.classifier, cls_in.h, cls_in.w);

  // decoder path, accumulating each level's skip gradient
  std::vector<BasicTensor<T>> skip_grads(static_cast<std::size_t>(depth));
  for (int i = 0; i < depth; ++i) {
    auto& lvl = model.dec[static_cast<std::size_t>(i)];
    const auto& bc = cache.dec[static_cast<std::size_t>(i)];
    BasicTensor<T> gin = conv_block_backward(lvl.block, bc, g);
    auto [gu, gskip] = split_channels(gin, lvl.up.weight.c);
    skip_grads[static_cast<std::size_t>(i)] = std::move(gskip);
    const BasicTensor<T>& up_in =
        (i == depth - 1) ? cache.bottleneck.r_b : cache.dec[static_cast<std::size_t>(i + 1)].r_b;
    conv_transpose2d_param_grad(up_in, lvl.up, gu);
    g = conv_transpose2d_input_grad(gu, lvl.up, up_in.h, up_in.w);
  }

  // bottleneck, then back up the encoder
  g = conv_block_backward(model.bottleneck, cache.bottleneck, g);
  for (int i = depth - 1; i >= 0; --i) {
    const auto& bc = cache.enc[static_cast<std::size_t>(i)];
    BasicTensor<T> gpool = maxpool2d_input_grad(bc.r_b, g);
    BasicTensor<T>& gskip = skip_grads[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < gpool.data.size(); ++k) gpool.data[k] += gskip.data[k];
    g = conv_block_backward(model.enc[static_cast<std::size_t>(i)], bc, gpool);
  }
  return g;
}

template <typename T>
std::vector<ParamView<T>> named_state(UNetModelT<T>& model) {
  std::vector<ParamView<T>> out;
  for (std::size_t i = 0; i < model.enc.size(); ++i) {
    push_block_views(out, "enc" + std::to_string(i), model.enc[i]);
  }
  push_block_views(out, "bottleneck", model.bottleneck);
  for (int i = static_cast<int>(model.dec.size()) - 1; i >= 0; --i) {
    const std::string prefix = "dec" + std::to_string(i);
    push_conv_views(out, prefix + ".up", model.dec[static_cast<std::size_t>(i)].up);
    push_block_views(out, prefix, model.dec[static_cast<std::size_t>(i)].block);
  }
  push_conv_views(out, "classifier", model.classifier);
  return out;
}

template <typename T>
long param_count(const UNetModelT<T>& model) {
  long total = 0;
  auto& m = const_cast<UNetModelT<T>&>(model);
  for (const auto& view : named_state(m)) {
    if (view.trainable) total += view.count;
  }
  return total;
}

template <typename T>
void set_mode(UNetModelT<T>& model, Mode mode) {
  model.mode = mode;
  auto set_block = [mode](ConvBlock<T>& b) {
    b.bn1.mode = mode;
    b.bn2.mode = mode;
  };
  for (auto& b : model.enc) set_block(b);
  set_block(model.bottleneck);
  for (auto& lvl : model.dec) set_block(lvl.block);
}

template <typename T>
void zero_grad(UNetModelT<T>& model) {
  for (auto& view : named_state(model)) {
    if (view.grad) std::fill(view.grad, view.grad + view.count, T(0));
  }
}

#define UNETKIT_INSTANTIATE_UNET(T)                                                             \
  template UNetModelT<T> build_unet<T>(const UNetConfig&, unsigned long long);                  \
  template BasicTensor<T> conv_block_forward<T>(ConvBlock<T>&, const BasicTensor<T>&,           \
                                                BlockCache<T>*);                                \
  template BasicTensor<T> conv_block_backward<T>(ConvBlock<T>&, const BlockCache<T>&,           \
                                                 const BasicTensor<T>&);                        \
  template BasicTensor<T> unet_forward<T>(UNetModelT<T>&, const BasicTensor<T>&,                \
                                          UNetCache<T>*);                                       \
  template BasicTensor<T> unet_backward<T>(UNetModelT<T>&, const UNetCache<T>&,                 \
                                           const BasicTensor<T>&);                              \
  template std::vector<ParamView<T>> named_state<T>(UNetModelT<T>&);                            \
  template long param_count<T>(const UNetModelT<T>&);                                           \
  template void set_mode<T>(UNetModelT<T>&, Mode);                                              \
  template void zero_grad<T>(UNetModelT<T>&);

UNETKIT_INSTANTIATE_UNET(float)
UNETKIT_INSTANTIATE_UNET(double)

#undef UNETKIT_INSTANTIATE_UNET

}  // namespace unetkit
