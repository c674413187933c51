#include "unetkit/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace unetkit {

namespace {

// Geometry of one convolution, written from the conv2d point of view.
// conv_transpose2d reuses it with input/output roles swapped.
struct ConvGeom {
  int c, h, w;      // conv input planes
  int kh, kw;
  int stride, pad;
  int ho, wo;       // conv output planes
  int k() const { return c * kh * kw; }
  long s_out() const { return static_cast<long>(ho) * wo; }
};

// Spatial tile width so a K x tile column buffer stays cache-resident.
int tile_cols(const ConvGeom& g) {
  long budget = 1L << 20;  // column-buffer floats
  long ts = budget / std::max(1, g.k());
  ts = std::min<long>(ts, g.s_out());
  ts = std::max<long>(ts, 64);
  return static_cast<int>(std::min<long>(ts, g.s_out()));
}

// col[(ci*kh+ky)*kw+kx][s - s0] = x[ci][oy*stride - pad + ky][ox*stride - pad + kx]
// for output positions s in [s0, s1), zero outside the image.
template <typename T>
void im2col_tile(const T* src, const ConvGeom& g, int s0, int s1, T* col) {
  const int ts = s1 - s0;
  const long plane = static_cast<long>(g.h) * g.w;
  long row = 0;
  for (int ci = 0; ci < g.c; ++ci) {
    const T* sp = src + ci * plane;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx, ++row) {
        T* out = col + row * ts;
        int idx = 0;
        int s = s0;
        while (s < s1) {
          const int oy = s / g.wo;
          const int ox = s % g.wo;
          const int run = std::min(g.wo - ox, s1 - s);
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) {
            std::fill(out + idx, out + idx + run, T(0));
          } else {
            const T* srow = sp + static_cast<long>(iy) * g.w;
            for (int r = 0; r < run; ++r) {
              const int ix = (ox + r) * g.stride - g.pad + kx;
              out[idx + r] = (ix >= 0 && ix < g.w) ? srow[ix] : T(0);
            }
          }
          idx += run;
          s += run;
        }
      }
    }
  }
}

// Adjoint of im2col_tile: scatter-add the column tile back into the image.
template <typename T>
void col2im_tile(const T* col, const ConvGeom& g, int s0, int s1, T* dst) {
  const int ts = s1 - s0;
  const long plane = static_cast<long>(g.h) * g.w;
  long row = 0;
  for (int ci = 0; ci < g.c; ++ci) {
    T* dp = dst + ci * plane;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx, ++row) {
        const T* in = col + row * ts;
        int idx = 0;
        int s = s0;
        while (s < s1) {
          const int oy = s / g.wo;
          const int ox = s % g.wo;
          const int run = std::min(g.wo - ox, s1 - s);
          const int iy = oy * g.stride - g.pad + ky;
          if (iy >= 0 && iy < g.h) {
            T* drow = dp + static_cast<long>(iy) * g.w;
            for (int r = 0; r < run; ++r) {
              const int ix = (ox + r) * g.stride - g.pad + kx;
              if (ix >= 0 && ix < g.w) drow[ix] += in[idx + r];
            }
          }
          idx += run;
          s += run;
        }
      }
    }
  }
}

// C[m][j] += sum_k A[m*sa_m + k*sa_k] * B[k*ldb + j], for j in [0, cols).
// Register-blocked 4x16 micro kernel; remainders take the guarded path.
template <typename T>
void gemm_acc(T* C, long ldc, int m_rows, const T* A, long sa_m, long sa_k, const T* B, long ldb,
              int k_dim, int cols) {
  constexpr int MR = 4;
  constexpr int NR = 16;
  for (int m0 = 0; m0 < m_rows; m0 += MR) {
    const int mc = std::min(MR, m_rows - m0);
    for (int j0 = 0; j0 < cols; j0 += NR) {
      const int jc = std::min(NR, cols - j0);
      if (mc == MR && jc == NR) {
        T acc[MR][NR] = {};
        const T* a0 = A + (m0 + 0) * sa_m;
        const T* a1 = A + (m0 + 1) * sa_m;
        const T* a2 = A + (m0 + 2) * sa_m;
        const T* a3 = A + (m0 + 3) * sa_m;
        for (int k = 0; k < k_dim; ++k) {
          const T* b = B + static_cast<long>(k) * ldb + j0;
          const T w0 = a0[k * sa_k];
          const T w1 = a1[k * sa_k];
          const T w2 = a2[k * sa_k];
          const T w3 = a3[k * sa_k];
          for (int j = 0; j < NR; ++j) acc[0][j] += w0 * b[j];
          for (int j = 0; j < NR; ++j) acc[1][j] += w1 * b[j];
          for (int j = 0; j < NR; ++j) acc[2][j] += w2 * b[j];
          for (int j = 0; j < NR; ++j) acc[3][j] += w3 * b[j];
        }
        for (int a = 0; a < MR; ++a) {
          T* crow = C + (m0 + a) * ldc + j0;
          for (int j = 0; j < NR; ++j) crow[j] += acc[a][j];
        }
      } else {
        for (int a = 0; a < mc; ++a) {
          T* crow = C + (m0 + a) * ldc + j0;
          const T* arow = A + (m0 + a) * sa_m;
          for (int k = 0; k < k_dim; ++k) {
            const T w = arow[k * sa_k];
            const T* b = B + static_cast<long>(k) * ldb + j0;
            for (int j = 0; j < jc; ++j) crow[j] += w * b[j];
          }
        }
      }
    }
  }
}

// Fixed-lane dot product; the lane pattern keeps reductions vectorizable
// without relaxing FP semantics, and the summation order is fixed.
template <typename T>
T dot_lanes(const T* a, const T* b, int len) {
  T lanes[8] = {};
  int i = 0;
  for (; i + 8 <= len; i += 8) {
    for (int j = 0; j < 8; ++j) lanes[j] += a[i + j] * b[i + j];
  }
  T tail = 0;
  for (; i < len; ++i) tail += a[i] * b[i];
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
         ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7])) + tail;
}

template <typename T>
T sum_lanes(const T* a, long len) {
  T lanes[8] = {};
  long i = 0;
  for (; i + 8 <= len; i += 8) {
    for (int j = 0; j < 8; ++j) lanes[j] += a[i + j];
  }
  T tail = 0;
  for (; i < len; ++i) tail += a[i];
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
         ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7])) + tail;
}

// y[oc][:] = bias[oc] + W[oc][:] . col, tiled over output positions.
template <typename T>
void conv_fwd_item(const T* x, const ConvGeom& g, const BasicTensor<T>& weight, const T* bias,
                   int out_c, T* y, std::vector<T>& scratch) {
  const int K = g.k();
  const long S = g.s_out();
  for (int oc = 0; oc < out_c; ++oc) {
    std::fill(y + oc * S, y + (oc + 1) * S, bias ? bias[oc] : T(0));
  }
  const int ts = tile_cols(g);
  scratch.resize(static_cast<std::size_t>(K) * ts);
  for (long s0 = 0; s0 < S; s0 += ts) {
    const int s1 = static_cast<int>(std::min<long>(s0 + ts, S));
    const int cols = static_cast<int>(s1 - s0);
    im2col_tile(x, g, static_cast<int>(s0), s1, scratch.data());
    gemm_acc(y + s0, S, out_c, weight.data.data(), static_cast<long>(K), 1L, scratch.data(),
             static_cast<long>(cols), K, cols);
  }
}

// dx += col2im(W^T . gy), tiled. This is both conv2d's input gradient and
// conv_transpose2d's forward.
template <typename T>
void conv_dx_item(const T* gy, const ConvGeom& g, const BasicTensor<T>& weight, int out_c, T* dx,
                  std::vector<T>& scratch) {
  const int K = g.k();
  const long S = g.s_out();
  const int ts = tile_cols(g);
  scratch.resize(static_cast<std::size_t>(K) * ts);
  for (long s0 = 0; s0 < S; s0 += ts) {
    const int s1 = static_cast<int>(std::min<long>(s0 + ts, S));
    const int cols = static_cast<int>(s1 - s0);
    std::fill(scratch.begin(), scratch.begin() + static_cast<std::size_t>(K) * cols, T(0));
    // dcol[k][j] = sum_oc W[oc][k] * gy[oc][s0 + j]
    gemm_acc(scratch.data(), static_cast<long>(cols), K, weight.data.data(), 1L,
             static_cast<long>(K), gy + s0, S, out_c, cols);
    col2im_tile(scratch.data(), g, static_cast<int>(s0), s1, dx);
  }
}

// dW[oc][k] += gy[oc][:] . col[k][:], tiled.
template <typename T>
void conv_dw_item(const T* x, const ConvGeom& g, int out_c, const T* gy, T* dw,
                  std::vector<T>& scratch) {
  const int K = g.k();
  const long S = g.s_out();
  const int ts = tile_cols(g);
  scratch.resize(static_cast<std::size_t>(K) * ts);
  for (long s0 = 0; s0 < S; s0 += ts) {
    const int s1 = static_cast<int>(std::min<long>(s0 + ts, S));
    const int cols = static_cast<int>(s1 - s0);
    im2col_tile(x, g, static_cast<int>(s0), s1, scratch.data());
    for (int oc = 0; oc < out_c; ++oc) {
      const T* grow = gy + oc * S + s0;
      for (int k = 0; k < K; ++k) {
        dw[static_cast<long>(oc) * K + k] += dot_lanes(grow, scratch.data() + static_cast<long>(k) * cols, cols);
      }
    }
  }
}

template <typename T>
void check_conv_weight(const ConvParams<T>& p, const char* op) {
  if (p.weight.data.empty()) throw DimensionError(std::string(op) + ": empty weight tensor");
  if (p.stride < 1)
    throw DimensionError(std::string(op) + ": stride must be >= 1, got " +
                         std::to_string(p.stride));
  if (p.padding < 0)
    throw DimensionError(std::string(op) + ": padding must be >= 0, got " +
                         std::to_string(p.padding));
}

template <typename T>
ConvGeom conv_geom(const BasicTensor<T>& x, const ConvParams<T>& p) {
  auto [ho, wo] = conv2d_output_dims(x.h, x.w, p.weight.h, p.weight.w, p.stride, p.padding);
  return ConvGeom{x.c, x.h, x.w, p.weight.h, p.weight.w, p.stride, p.padding, ho, wo};
}

}  // namespace

std::pair<int, int> conv2d_output_dims(int h, int w, int kh, int kw, int stride, int padding) {
  const int num_h = h + 2 * padding - kh;
  const int num_w = w + 2 * padding - kw;
  if (num_h < 0 || num_h % stride != 0) {
    throw DimensionError("conv2d: h axis: (" + std::to_string(h) + " + 2*" +
                         std::to_string(padding) + " - " + std::to_string(kh) + ") / " +
                         std::to_string(stride) + " + 1 is not a positive integer");
  }
  if (num_w < 0 || num_w % stride != 0) {
    throw DimensionError("conv2d: w axis: (" + std::to_string(w) + " + 2*" +
                         std::to_string(padding) + " - " + std::to_string(kw) + ") / " +
                         std::to_string(stride) + " + 1 is not a positive integer");
  }
  return {num_h / stride + 1, num_w / stride + 1};
}

std::pair<int, int> conv_transpose2d_output_dims(int h, int w, int kh, int kw, int stride,
                                                 int padding) {
  const int ho = (h - 1) * stride - 2 * padding + kh;
  const int wo = (w - 1) * stride - 2 * padding + kw;
  if (ho < 1 || wo < 1) {
    throw DimensionError("conv_transpose2d: computed output dims (" + std::to_string(ho) + ", " +
                         std::to_string(wo) + ") are not positive");
  }
  return {ho, wo};
}

template <typename T>
ConvParams<T> make_conv_params(int out_c, int in_c, int kh, int kw, int stride, int padding) {
  if (kh < 1 || kw < 1)
    throw DimensionError("conv kernel dims must be >= 1, got (" + std::to_string(kh) + ", " +
                         std::to_string(kw) + ")");
  ConvParams<T> p;
  p.weight = BasicTensor<T>(out_c, in_c, kh, kw);
  p.weight.ensure_grad();
  p.bias.assign(out_c, T(0));
  p.bias_grad.assign(out_c, T(0));
  p.stride = stride;
  p.padding = padding;
  return p;
}

template <typename T>
ConvParams<T> make_conv_transpose_params(int in_c, int out_c, int kh, int kw, int stride,
                                         int padding) {
  // transpose weights are stored (in, out, kh, kw) and the bias follows axis 1
  ConvParams<T> p = make_conv_params<T>(in_c, out_c, kh, kw, stride, padding);
  p.bias.assign(out_c, T(0));
  p.bias_grad.assign(out_c, T(0));
  return p;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const ConvParams<T>& p) {
  check_conv_weight(p, "conv2d");
  if (x.c != p.weight.c) {
    throw DimensionError("conv2d: input channel axis (" + std::to_string(x.c) +
                         ") != weight in_c axis (" + std::to_string(p.weight.c) + ")");
  }
  if (static_cast<int>(p.bias.size()) != p.weight.n) {
    throw DimensionError("conv2d: bias length " + std::to_string(p.bias.size()) +
                         " != weight out_c axis " + std::to_string(p.weight.n));
  }
  const ConvGeom g = conv_geom(x, p);
  BasicTensor<T> y(x.n, p.weight.n, g.ho, g.wo);
  std::vector<T> scratch;
  for (int ni = 0; ni < x.n; ++ni) {
    conv_fwd_item(x.plane(ni, 0), g, p.weight, p.bias.data(), p.weight.n, y.plane(ni, 0),
                  scratch);
  }
  return y;
}

template <typename T>
BasicTensor<T> conv2d_input_grad(const BasicTensor<T>& grad_out, const ConvParams<T>& p, int h,
                                 int w) {
  check_conv_weight(p, "conv2d");
  ConvGeom g{p.weight.c, h, w, p.weight.h, p.weight.w, p.stride, p.padding, grad_out.h,
             grad_out.w};
  auto [ho, wo] = conv2d_output_dims(h, w, g.kh, g.kw, g.stride, g.pad);
  if (ho != grad_out.h || wo != grad_out.w || grad_out.c != p.weight.n) {
    throw DimensionError("conv2d backward: grad shape " + grad_out.shape_str() +
                         " does not match forward output");
  }
  BasicTensor<T> dx(grad_out.n, p.weight.c, h, w);
  std::vector<T> scratch;
  for (int ni = 0; ni < grad_out.n; ++ni) {
    conv_dx_item(grad_out.plane(ni, 0), g, p.weight, p.weight.n, dx.plane(ni, 0), scratch);
  }
  return dx;
}

template <typename T>
void conv2d_param_grad(const BasicTensor<T>& x, ConvParams<T>& p,
                       const BasicTensor<T>& grad_out) {
  const ConvGeom g = conv_geom(x, p);
  if (grad_out.c != p.weight.n || grad_out.h != g.ho || grad_out.w != g.wo ||
      grad_out.n != x.n) {
    throw DimensionError("conv2d backward: grad shape " + grad_out.shape_str() +
                         " does not match forward output");
  }
  p.weight.ensure_grad();
  if (p.bias_grad.size() != p.bias.size()) p.bias_grad.assign(p.bias.size(), T(0));
  std::vector<T> scratch;
  const long S = g.s_out();
  for (int ni = 0; ni < x.n; ++ni) {
    conv_dw_item(x.plane(ni, 0), g, p.weight.n, grad_out.plane(ni, 0), p.weight.grad.data(),
                 scratch);
    for (int oc = 0; oc < p.weight.n; ++oc) {
      p.bias_grad[oc] += sum_lanes(grad_out.plane(ni, oc), S);
    }
  }
}

template <typename T>
void conv2d_backward(BasicTensor<T>& x, ConvParams<T>& p, const BasicTensor<T>& grad_out) {
  conv2d_param_grad(x, p, grad_out);
  BasicTensor<T> dx = conv2d_input_grad(grad_out, p, x.h, x.w);
  x.ensure_grad();
  for (std::size_t i = 0; i < dx.data.size(); ++i) x.grad[i] += dx.data[i];
}

template <typename T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& x, const ConvParams<T>& p) {
  check_conv_weight(p, "conv_transpose2d");
  if (x.c != p.weight.n) {
    throw DimensionError("conv_transpose2d: input channel axis (" + std::to_string(x.c) +
                         ") != weight axis 0 (" + std::to_string(p.weight.n) + ")");
  }
  if (static_cast<int>(p.bias.size()) != p.weight.c) {
    throw DimensionError("conv_transpose2d: bias length " + std::to_string(p.bias.size()) +
                         " != weight axis 1 " + std::to_string(p.weight.c));
  }
  auto [ho, wo] = conv_transpose2d_output_dims(x.h, x.w, p.weight.h, p.weight.w, p.stride,
                                               p.padding);
  // Underlying conv geometry: the conv "input" is this op's output.
  ConvGeom g{p.weight.c, ho, wo, p.weight.h, p.weight.w, p.stride, p.padding, x.h, x.w};
  BasicTensor<T> y(x.n, p.weight.c, ho, wo);
  std::vector<T> scratch;
  for (int ni = 0; ni < x.n; ++ni) {
    conv_dx_item(x.plane(ni, 0), g, p.weight, p.weight.n, y.plane(ni, 0), scratch);
    const long plane = static_cast<long>(ho) * wo;
    for (int oc = 0; oc < p.weight.c; ++oc) {
      T* yp = y.plane(ni, oc);
      const T b = p.bias[oc];
      for (long i = 0; i < plane; ++i) yp[i] += b;
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> conv_transpose2d_input_grad(const BasicTensor<T>& grad_out, const ConvParams<T>& p,
                                           int h, int w) {
  auto [ho, wo] = conv_transpose2d_output_dims(h, w, p.weight.h, p.weight.w, p.stride, p.padding);
  if (grad_out.h != ho || grad_out.w != wo || grad_out.c != p.weight.c) {
    throw DimensionError("conv_transpose2d backward: grad shape " + grad_out.shape_str() +
                         " does not match forward output");
  }
  ConvGeom g{p.weight.c, ho, wo, p.weight.h, p.weight.w, p.stride, p.padding, h, w};
  BasicTensor<T> dx(grad_out.n, p.weight.n, h, w);
  std::vector<T> scratch;
  for (int ni = 0; ni < grad_out.n; ++ni) {
    conv_fwd_item(grad_out.plane(ni, 0), g, p.weight, static_cast<const T*>(nullptr), p.weight.n,
                  dx.plane(ni, 0), scratch);
  }
  return dx;
}

template <typename T>
void conv_transpose2d_param_grad(const BasicTensor<T>& x, ConvParams<T>& p,
                                 const BasicTensor<T>& grad_out) {
  auto [ho, wo] = conv_transpose2d_output_dims(x.h, x.w, p.weight.h, p.weight.w, p.stride,
                                               p.padding);
  if (grad_out.h != ho || grad_out.w != wo || grad_out.c != p.weight.c ||
      grad_out.n != x.n) {
    throw DimensionError("conv_transpose2d backward: grad shape " + grad_out.shape_str() +
                         " does not match forward output");
  }
  ConvGeom g{p.weight.c, ho, wo, p.weight.h, p.weight.w, p.stride, p.padding, x.h, x.w};
  p.weight.ensure_grad();
  if (p.bias_grad.size() != p.bias.size()) p.bias_grad.assign(p.bias.size(), T(0));
  std::vector<T> scratch;
  const long plane = static_cast<long>(ho) * wo;
  for (int ni = 0; ni < x.n; ++ni) {
    // Same kernel as conv2d's weight grad with the image/grad roles swapped.
    conv_dw_item(grad_out.plane(ni, 0), g, p.weight.n, x.plane(ni, 0), p.weight.grad.data(),
                 scratch);
    for (int oc = 0; oc < p.weight.c; ++oc) {
      p.bias_grad[oc] += sum_lanes(grad_out.plane(ni, oc), plane);
    }
  }
}

template <typename T>
void conv_transpose2d_backward(BasicTensor<T>& x, ConvParams<T>& p,
                               const BasicTensor<T>& grad_out) {
  conv_transpose2d_param_grad(x, p, grad_out);
  BasicTensor<T> dx = conv_transpose2d_input_grad(grad_out, p, x.h, x.w);
  x.ensure_grad();
  for (std::size_t i = 0; i < dx.data.size(); ++i) x.grad[i] += dx.data[i];
}

// ---- batchnorm ----

template <typename T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& x, BatchNormState<T>& s,
                           BatchNormCache<T>* cache) {
  if (x.c != s.channels()) {
    throw DimensionError("batchnorm2d: input channel axis (" + std::to_string(x.c) +
                         ") != state channel count (" + std::to_string(s.channels()) + ")");
  }
  BasicTensor<T> y(x.n, x.c, x.h, x.w);
  const long plane = static_cast<long>(x.h) * x.w;
  const long m = static_cast<long>(x.n) * plane;
  if (s.mode == Mode::Training) {
    if (cache) {
      cache->mean.assign(x.c, T(0));
      cache->invstd.assign(x.c, T(0));
      cache->xhat = BasicTensor<T>(x.n, x.c, x.h, x.w);
    }
    for (int ci = 0; ci < x.c; ++ci) {
      double sum = 0.0;
      for (int ni = 0; ni < x.n; ++ni) {
        const T* xp = x.plane(ni, ci);
        for (long i = 0; i < plane; ++i) sum += xp[i];
      }
      const double mean = sum / static_cast<double>(m);
      double sq = 0.0;
      for (int ni = 0; ni < x.n; ++ni) {
        const T* xp = x.plane(ni, ci);
        for (long i = 0; i < plane; ++i) {
          const double d = xp[i] - mean;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(m);
      const double invstd = 1.0 / std::sqrt(var + static_cast<double>(s.eps));
      const T g = s.gamma[ci];
      const T b = s.beta[ci];
      for (int ni = 0; ni < x.n; ++ni) {
        const T* xp = x.plane(ni, ci);
        T* yp = y.plane(ni, ci);
        T* xhp = cache ? cache->xhat.plane(ni, ci) : nullptr;
        for (long i = 0; i < plane; ++i) {
          const T xh = static_cast<T>((xp[i] - mean) * invstd);
          if (xhp) xhp[i] = xh;
          yp[i] = g * xh + b;
        }
      }
      s.running_mean[ci] =
          static_cast<T>((1.0 - s.momentum) * s.running_mean[ci] + s.momentum * mean);
      s.running_var[ci] =
          static_cast<T>((1.0 - s.momentum) * s.running_var[ci] + s.momentum * var);
      if (cache) {
        cache->mean[ci] = static_cast<T>(mean);
        cache->invstd[ci] = static_cast<T>(invstd);
      }
    }
  } else {
    for (int ci = 0; ci < x.c; ++ci) {
      const double invstd =
          1.0 / std::sqrt(static_cast<double>(s.running_var[ci]) + static_cast<double>(s.eps));
      const double mean = s.running_mean[ci];
      const T g = s.gamma[ci];
      const T b = s.beta[ci];
      for (int ni = 0; ni < x.n; ++ni) {
        const T* xp = x.plane(ni, ci);
        T* yp = y.plane(ni, ci);
        for (long i = 0; i < plane; ++i) {
          yp[i] = static_cast<T>(g * ((xp[i] - mean) * invstd) + b);
        }
      }
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> batchnorm2d_input_grad(const BasicTensor<T>& grad_out, BatchNormState<T>& s,
                                      const BatchNormCache<T>* cache) {
  if (grad_out.c != s.channels()) {
    throw DimensionError("batchnorm2d backward: grad channel axis (" +
                         std::to_string(grad_out.c) + ") != state channel count (" +
                         std::to_string(s.channels()) + ")");
  }
  BasicTensor<T> dx(grad_out.n, grad_out.c, grad_out.h, grad_out.w);
  const long plane = static_cast<long>(grad_out.h) * grad_out.w;
  const long m = static_cast<long>(grad_out.n) * plane;
  if (cache) {
    if (!cache->xhat.same_shape(grad_out)) {
      throw DimensionError("batchnorm2d backward: cache shape " + cache->xhat.shape_str() +
                           " != grad shape " + grad_out.shape_str());
    }
    for (int ci = 0; ci < grad_out.c; ++ci) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (int ni = 0; ni < grad_out.n; ++ni) {
        const T* gp = grad_out.plane(ni, ci);
        const T* xhp = cache->xhat.plane(ni, ci);
        for (long i = 0; i < plane; ++i) {
          sum_g += gp[i];
          sum_gx += static_cast<double>(gp[i]) * xhp[i];
        }
      }
      s.gamma_grad[ci] += static_cast<T>(sum_gx);
      s.beta_grad[ci] += static_cast<T>(sum_g);
      const double scale = static_cast<double>(s.gamma[ci]) * cache->invstd[ci] / m;
      for (int ni = 0; ni < grad_out.n; ++ni) {
        const T* gp = grad_out.plane(ni, ci);
        const T* xhp = cache->xhat.plane(ni, ci);
        T* dp = dx.plane(ni, ci);
        for (long i = 0; i < plane; ++i) {
          dp[i] = static_cast<T>(scale * (m * gp[i] - sum_g - xhp[i] * sum_gx));
        }
      }
    }
  } else {
    // Inference: a per-channel affine map.
    for (int ci = 0; ci < grad_out.c; ++ci) {
      const double invstd =
          1.0 / std::sqrt(static_cast<double>(s.running_var[ci]) + static_cast<double>(s.eps));
      const T k = static_cast<T>(s.gamma[ci] * invstd);
      double sum_g = 0.0;
      for (int ni = 0; ni < grad_out.n; ++ni) {
        const T* gp = grad_out.plane(ni, ci);
        T* dp = dx.plane(ni, ci);
        for (long i = 0; i < plane; ++i) {
          dp[i] = k * gp[i];
          sum_g += gp[i];
        }
      }
      s.beta_grad[ci] += static_cast<T>(sum_g);
    }
  }
  return dx;
}

template <typename T>
void batchnorm2d_backward(BasicTensor<T>& x, BatchNormState<T>& s, const BatchNormCache<T>* cache,
                          const BasicTensor<T>& grad_out) {
  if (!x.same_shape(grad_out)) {
    throw DimensionError("batchnorm2d backward: grad shape " + grad_out.shape_str() +
                         " != input shape " + x.shape_str());
  }
  BasicTensor<T> dx = batchnorm2d_input_grad(grad_out, s, cache);
  if (!cache) {
    // Recover gamma grad from x, which the affine path alone cannot provide.
    const long plane = static_cast<long>(x.h) * x.w;
    for (int ci = 0; ci < x.c; ++ci) {
      const double invstd =
          1.0 / std::sqrt(static_cast<double>(s.running_var[ci]) + static_cast<double>(s.eps));
      const double mean = s.running_mean[ci];
      double sum_gx = 0.0;
      for (int ni = 0; ni < x.n; ++ni) {
        const T* gp = grad_out.plane(ni, ci);
        const T* xp = x.plane(ni, ci);
        for (long i = 0; i < plane; ++i) sum_gx += gp[i] * ((xp[i] - mean) * invstd);
      }
      s.gamma_grad[ci] += static_cast<T>(sum_gx);
    }
  }
  x.ensure_grad();
  for (std::size_t i = 0; i < dx.data.size(); ++i) x.grad[i] += dx.data[i];
}

// ---- elementwise ----

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.n, x.c, x.h, x.w);
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
  return y;
}

template <typename T>
BasicTensor<T> relu_input_grad(const BasicTensor<T>& x, const BasicTensor<T>& grad_out) {
  if (!x.same_shape(grad_out)) {
    throw DimensionError("relu backward: grad shape " + grad_out.shape_str() + " != input shape " +
                         x.shape_str());
  }
  BasicTensor<T> dx(x.n, x.c, x.h, x.w);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    dx.data[i] = x.data[i] > T(0) ? grad_out.data[i] : T(0);
  }
  return dx;
}

template <typename T>
void relu_backward(BasicTensor<T>& x, const BasicTensor<T>& grad_out) {
  BasicTensor<T> dx = relu_input_grad(x, grad_out);
  x.ensure_grad();
  for (std::size_t i = 0; i < dx.data.size(); ++i) x.grad[i] += dx.data[i];
}

template <typename T>
void relu_mask_inplace(BasicTensor<T>& g, const BasicTensor<T>& ref) {
  if (!g.same_shape(ref)) {
    throw DimensionError("relu backward: grad shape " + g.shape_str() + " != reference shape " +
                         ref.shape_str());
  }
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    if (!(ref.data[i] > T(0))) g.data[i] = T(0);
  }
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.n, x.c, x.h, x.w);
  // Smallest positive / largest-below-one values keep the output strictly
  // inside (0, 1) even where exp saturates.
  const T lo = std::numeric_limits<T>::denorm_min();
  const T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const T v = x.data[i];
    T out;
    if (v >= T(0)) {
      const T e = std::exp(-v);
      out = T(1) / (T(1) + e);
    } else {
      const T e = std::exp(v);
      out = e / (T(1) + e);
    }
    y.data[i] = std::min(hi, std::max(lo, out));
  }
  return y;
}

template <typename T>
BasicTensor<T> sigmoid_input_grad(const BasicTensor<T>& y, const BasicTensor<T>& grad_out) {
  if (!y.same_shape(grad_out)) {
    throw DimensionError("sigmoid backward: grad shape " + grad_out.shape_str() +
                         " != output shape " + y.shape_str());
  }
  BasicTensor<T> dx(y.n, y.c, y.h, y.w);
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    dx.data[i] = grad_out.data[i] * y.data[i] * (T(1) - y.data[i]);
  }
  return dx;
}

template <typename T>
void sigmoid_backward(BasicTensor<T>& x, const BasicTensor<T>& y, const BasicTensor<T>& grad_out) {
  BasicTensor<T> dx = sigmoid_input_grad(y, grad_out);
  x.ensure_grad();
  for (std::size_t i = 0; i < dx.data.size(); ++i) x.grad[i] += dx.data[i];
}

// ---- maxpool ----

template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& x) {
  if (x.h % 2 != 0 || x.w % 2 != 0) {
    throw DimensionError("maxpool2d: spatial dims (" + std::to_string(x.h) + ", " +
                         std::to_string(x.w) + ") must be even; pad the input to even dims");
  }
  BasicTensor<T> y(x.n, x.c, x.h / 2, x.w / 2);
  for (int ni = 0; ni < x.n; ++ni) {
    for (int ci = 0; ci < x.c; ++ci) {
      const T* xp = x.plane(ni, ci);
      T* yp = y.plane(ni, ci);
      for (int oy = 0; oy < y.h; ++oy) {
        const T* r0 = xp + static_cast<long>(2 * oy) * x.w;
        const T* r1 = r0 + x.w;
        for (int ox = 0; ox < y.w; ++ox) {
          const int ix = 2 * ox;
          T best = r0[ix];
          if (r0[ix + 1] > best) best = r0[ix + 1];
          if (r1[ix] > best) best = r1[ix];
          if (r1[ix + 1] > best) best = r1[ix + 1];
          yp[static_cast<long>(oy) * y.w + ox] = best;
        }
      }
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> maxpool2d_input_grad(const BasicTensor<T>& x, const BasicTensor<T>& grad_out) {
  if (x.h % 2 != 0 || x.w % 2 != 0) {
    throw DimensionError("maxpool2d: spatial dims (" + std::to_string(x.h) + ", " +
                         std::to_string(x.w) + ") must be even; pad the input to even dims");
  }
  if (grad_out.n != x.n || grad_out.c != x.c || grad_out.h != x.h / 2 || grad_out.w != x.w / 2) {
    throw DimensionError("maxpool2d backward: grad shape " + grad_out.shape_str() +
                         " does not match pooled shape");
  }
  BasicTensor<T> dx(x.n, x.c, x.h, x.w);
  for (int ni = 0; ni < x.n; ++ni) {
    for (int ci = 0; ci < x.c; ++ci) {
      const T* xp = x.plane(ni, ci);
      const T* gp = grad_out.plane(ni, ci);
      T* dp = dx.plane(ni, ci);
      for (int oy = 0; oy < grad_out.h; ++oy) {
        for (int ox = 0; ox < grad_out.w; ++ox) {
          // First index in row-major window scan wins ties.
          long best_off = (static_cast<long>(2 * oy) * x.w) + 2 * ox;
          T best = xp[best_off];
          const long offs[3] = {best_off + 1, best_off + x.w, best_off + x.w + 1};
          for (long off : offs) {
            if (xp[off] > best) {
              best = xp[off];
              best_off = off;
            }
          }
          dp[best_off] += gp[static_cast<long>(oy) * grad_out.w + ox];
        }
      }
    }
  }
  return dx;
}

template <typename T>
void maxpool2d_backward(BasicTensor<T>& x, const BasicTensor<T>& grad_out) {
  BasicTensor<T> dx = maxpool2d_input_grad(x, grad_out);
  x.ensure_grad();
  for (std::size_t i = 0; i < dx.data.size(); ++i) x.grad[i] += dx.data[i];
}

// ---- concat ----

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) {
    throw DimensionError("concat_channels: shapes " + a.shape_str() + " and " + b.shape_str() +
                         " disagree on n/h/w; no implicit cropping");
  }
  BasicTensor<T> y(a.n, a.c + b.c, a.h, a.w);
  const long plane = static_cast<long>(a.h) * a.w;
  for (int ni = 0; ni < a.n; ++ni) {
    std::copy(a.plane(ni, 0), a.plane(ni, 0) + static_cast<long>(a.c) * plane, y.plane(ni, 0));
    std::copy(b.plane(ni, 0), b.plane(ni, 0) + static_cast<long>(b.c) * plane, y.plane(ni, a.c));
  }
  return y;
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& g, int c_first) {
  if (c_first < 1 || c_first >= g.c) {
    throw DimensionError("split_channels: cannot split " + std::to_string(g.c) +
                         " channels at " + std::to_string(c_first));
  }
  BasicTensor<T> a(g.n, c_first, g.h, g.w);
  BasicTensor<T> b(g.n, g.c - c_first, g.h, g.w);
  const long plane = static_cast<long>(g.h) * g.w;
  for (int ni = 0; ni < g.n; ++ni) {
    std::copy(g.plane(ni, 0), g.plane(ni, 0) + static_cast<long>(c_first) * plane, a.plane(ni, 0));
    std::copy(g.plane(ni, c_first), g.plane(ni, c_first) + static_cast<long>(g.c - c_first) * plane,
              b.plane(ni, 0));
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
void concat_channels_backward(BasicTensor<T>& a, BasicTensor<T>& b,
                              const BasicTensor<T>& grad_out) {
  if (grad_out.c != a.c + b.c || grad_out.n != a.n || grad_out.h != a.h || grad_out.w != a.w) {
    throw DimensionError("concat_channels backward: grad shape " + grad_out.shape_str() +
                         " does not match concatenated shape");
  }
  auto [ga, gb] = split_channels(grad_out, a.c);
  a.ensure_grad();
  b.ensure_grad();
  for (std::size_t i = 0; i < ga.data.size(); ++i) a.grad[i] += ga.data[i];
  for (std::size_t i = 0; i < gb.data.size(); ++i) b.grad[i] += gb.data[i];
}

// ---- explicit instantiations ----

#define UNETKIT_INSTANTIATE_LAYERS(T)                                                             \
  template ConvParams<T> make_conv_params<T>(int, int, int, int, int, int);                       \
  template ConvParams<T> make_conv_transpose_params<T>(int, int, int, int, int, int);             \
  template BasicTensor<T> conv2d<T>(const BasicTensor<T>&, const ConvParams<T>&);                 \
  template BasicTensor<T> conv2d_input_grad<T>(const BasicTensor<T>&, const ConvParams<T>&, int,  \
                                               int);                                              \
  template void conv2d_param_grad<T>(const BasicTensor<T>&, ConvParams<T>&,                       \
                                     const BasicTensor<T>&);                                      \
  template void conv2d_backward<T>(BasicTensor<T>&, ConvParams<T>&, const BasicTensor<T>&);       \
  template BasicTensor<T> conv_transpose2d<T>(const BasicTensor<T>&, const ConvParams<T>&);       \
  template BasicTensor<T> conv_transpose2d_input_grad<T>(const BasicTensor<T>&,                   \
                                                         const ConvParams<T>&, int, int);         \
  template void conv_transpose2d_param_grad<T>(const BasicTensor<T>&, ConvParams<T>&,             \
                                               const BasicTensor<T>&);                            \
  template void conv_transpose2d_backward<T>(BasicTensor<T>&, ConvParams<T>&,                     \
                                             const BasicTensor<T>&);                              \
  template BasicTensor<T> batchnorm2d<T>(const BasicTensor<T>&, BatchNormState<T>&,               \
                                         BatchNormCache<T>*);                                     \
  template BasicTensor<T> batchnorm2d_input_grad<T>(const BasicTensor<T>&, BatchNormState<T>&,    \
                                                    const BatchNormCache<T>*);                    \
  template void batchnorm2d_backward<T>(BasicTensor<T>&, BatchNormState<T>&,                      \
                                        const BatchNormCache<T>*, const BasicTensor<T>&);         \
  template BasicTensor<T> relu<T>(const BasicTensor<T>&);                                         \
  template BasicTensor<T> relu_input_grad<T>(const BasicTensor<T>&, const BasicTensor<T>&);       \
  template void relu_backward<T>(BasicTensor<T>&, const BasicTensor<T>&);                         \
  template void relu_mask_inplace<T>(BasicTensor<T>&, const BasicTensor<T>&);                     \
  template BasicTensor<T> sigmoid<T>(const BasicTensor<T>&);                                      \
  template BasicTensor<T> sigmoid_input_grad<T>(const BasicTensor<T>&, const BasicTensor<T>&);    \
  template void sigmoid_backward<T>(BasicTensor<T>&, const BasicTensor<T>&,                       \
                                    const BasicTensor<T>&);                                       \
  template BasicTensor<T> maxpool2d<T>(const BasicTensor<T>&);                                    \
  template BasicTensor<T> maxpool2d_input_grad<T>(const BasicTensor<T>&, const BasicTensor<T>&);  \
  template void maxpool2d_backward<T>(BasicTensor<T>&, const BasicTensor<T>&);                    \
  template BasicTensor<T> concat_channels<T>(const BasicTensor<T>&, const BasicTensor<T>&);       \
  template std::pair<BasicTensor<T>, BasicTensor<T>> split_channels<T>(const BasicTensor<T>&,     \
                                                                       int);                      \
  template void concat_channels_backward<T>(BasicTensor<T>&, BasicTensor<T>&,                     \
                                            const BasicTensor<T>&);

UNETKIT_INSTANTIATE_LAYERS(float)
UNETKIT_INSTANTIATE_LAYERS(double)

#undef UNETKIT_INSTANTIATE_LAYERS

}  // namespace unetkit
