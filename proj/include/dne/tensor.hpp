#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dne/error.hpp"

namespace dne {

namespace detail {
inline std::size_t checked_volume(int c, int h, int w) {
  if (c < 1 || h < 1 || w < 1)
    throw ShapeError("tensor dims must be >= 1, got (" + std::to_string(c) +
                     "," + std::to_string(h) + "," + std::to_string(w) + ")");
  return static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
         static_cast<std::size_t>(w);
}
}  // namespace detail

// Dense rank-3 value, channel-major then row-major. Holds both image data
// and intermediate feature maps.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Tensor() = default;

  Tensor(int c, int h, int w)
      : channels(c), height(h), width(w),
        data(detail::checked_volume(c, h, w), 0.0f) {}

  Tensor(int c, int h, int w, std::vector<float> values)
      : channels(c), height(h), width(w), data(std::move(values)) {
    if (data.size() != detail::checked_volume(c, h, w))
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape volume");
  }

  std::size_t size() const { return data.size(); }

  float& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  // Reuses storage; contents are unspecified afterwards.
  void resize(int c, int h, int w) {
    data.resize(detail::checked_volume(c, h, w));
    channels = c;
    height = h;
    width = w;
  }
};

// One bank of 3x3 filters. Kernel layout: [out][in][3][3] row-major.
struct ConvWeights {
  int out_channels = 0;
  int in_channels = 0;
  std::vector<float> kernel;
  std::vector<float> bias;

  ConvWeights() = default;

  ConvWeights(int oc, int ic)
      : out_channels(oc), in_channels(ic),
        kernel(detail::checked_volume(oc, ic, 9), 0.0f),
        bias(static_cast<std::size_t>(oc), 0.0f) {}
};

// Non-owning view of a filter bank; what the forward kernels consume.
struct ConvWeightsView {
  int out_channels = 0;
  int in_channels = 0;
  const float* kernel = nullptr;
  const float* bias = nullptr;

  ConvWeightsView() = default;
  ConvWeightsView(int oc, int ic, const float* k, const float* b)
      : out_channels(oc), in_channels(ic), kernel(k), bias(b) {}
  ConvWeightsView(const ConvWeights& w)  // NOLINT: implicit by design
      : out_channels(w.out_channels), in_channels(w.in_channels),
        kernel(w.kernel.data()), bias(w.bias.data()) {}
};

// floor((in + 2*pad - 3) / stride) + 1; 0 when the padded input is narrower
// than the kernel.
inline int conv_output_dim(int in, int stride, int pad) {
  const int padded = in + 2 * pad - 3;
  if (padded < 0) return 0;
  return padded / stride + 1;
}

namespace detail {

// Reference 3x3 convolution: float32 accumulation in the fixed loop order
// (out-channel, in-channel, kernel row, kernel col). Zero padding enters by
// skipping out-of-range taps. Every other kernel below must reproduce this
// bit for bit.
inline void conv2d_plain(const Tensor& in, const ConvWeightsView& w,
                         int stride, int pad, Tensor& out) {
  const int H = in.height;
  const int W = in.width;
  const int oh = out.height;
  const int ow = out.width;
  for (int oc = 0; oc < w.out_channels; ++oc) {
    float* oplane = out.data.data() + static_cast<std::size_t>(oc) * oh * ow;
    std::fill(oplane, oplane + static_cast<std::size_t>(oh) * ow, w.bias[oc]);
    for (int ic = 0; ic < w.in_channels; ++ic) {
      const float* iplane =
          in.data.data() + static_cast<std::size_t>(ic) * H * W;
      const float* kbase =
          w.kernel + (static_cast<std::size_t>(oc) * w.in_channels + ic) * 9;
      for (int kr = 0; kr < 3; ++kr) {
        // rows with iy = oy*stride + kr - pad inside [0, H)
        const int ty = pad - kr;
        const int oy0 = ty <= 0 ? 0 : (ty + stride - 1) / stride;
        const int uy = H - 1 + pad - kr;
        const int oy1 = std::min(oh - 1, uy < 0 ? -1 : uy / stride);
        for (int kc = 0; kc < 3; ++kc) {
          const float kv = kbase[kr * 3 + kc];
          const int tx = pad - kc;
          const int ox0 = tx <= 0 ? 0 : (tx + stride - 1) / stride;
          const int ux = W - 1 + pad - kc;
          const int ox1 = std::min(ow - 1, ux < 0 ? -1 : ux / stride);
          const int shift = kc - pad;
          for (int oy = oy0; oy <= oy1; ++oy) {
            const int iy = oy * stride + kr - pad;
            const float* irow = iplane + static_cast<std::size_t>(iy) * W;
            float* orow = oplane + static_cast<std::size_t>(oy) * ow;
            for (int ox = ox0; ox <= ox1; ++ox)
              orow[ox] += kv * irow[ox * stride + shift];
          }
        }
      }
    }
  }
}

// Stride-2 kernel: input rows are split into even/odd column halves so every
// tap runs at unit stride, and the three kernel-column taps of one kernel row
// fuse into a single pass over the output row. Tap values and their
// per-element accumulation order are identical to conv2d_plain, hence so are
// the bits.
inline void conv2d_stride2(const Tensor& in, const ConvWeightsView& w,
                           int pad, Tensor& out) {
  const int H = in.height;
  const int W = in.width;
  const int oh = out.height;
  const int ow = out.width;
  const int we = (W + 1) / 2;  // even-column half length

  static thread_local std::vector<float> dei;
  dei.resize(in.data.size());
  for (std::size_t row = 0;
       row < static_cast<std::size_t>(in.channels) * H; ++row) {
    const float* src = in.data.data() + row * W;
    float* even = dei.data() + row * W;
    float* odd = even + we;
    for (int x = 0; x < we; ++x) even[x] = src[2 * x];
    for (int x = 0; x < W / 2; ++x) odd[x] = src[2 * x + 1];
  }

  constexpr int stride = 2;
  // per kernel column: which half-row to read and the valid output columns
  struct ColTap {
    int base;  // half offset + column shift, index as row[base + ox]
    int ox0;
    int ox1;
  };
  ColTap cols[3];
  int body_lo = 0;
  int body_hi = ow - 1;
  for (int kc = 0; kc < 3; ++kc) {
    const int shift = kc - pad;
    const bool odd_half = (shift & 1) != 0;
    const int off = odd_half ? (shift - 1) / 2 : shift / 2;
    const int tx = pad - kc;
    const int ox0 = tx <= 0 ? 0 : (tx + stride - 1) / stride;
    const int ux = W - 1 + pad - kc;
    const int ox1 = std::min(ow - 1, ux < 0 ? -1 : ux / stride);
    cols[kc] = {(odd_half ? we : 0) + off, ox0, ox1};
    body_lo = std::max(body_lo, ox0);
    body_hi = std::min(body_hi, ox1);
  }

  for (int oc = 0; oc < w.out_channels; ++oc) {
    float* oplane = out.data.data() + static_cast<std::size_t>(oc) * oh * ow;
    std::fill(oplane, oplane + static_cast<std::size_t>(oh) * ow, w.bias[oc]);
    for (int ic = 0; ic < w.in_channels; ++ic) {
      const float* iplane = dei.data() + static_cast<std::size_t>(ic) * H * W;
      const float* kbase =
          w.kernel + (static_cast<std::size_t>(oc) * w.in_channels + ic) * 9;
      // one pass per output row accumulates all in-range taps of this
      // in-channel, in (kernel row, kernel col) order per element
      for (int oy = 0; oy < oh; ++oy) {
        float* orow = oplane + static_cast<std::size_t>(oy) * ow;
        const float* rows[3];
        int nrows = 0;
        const float* kvs[3];
        for (int kr = 0; kr < 3; ++kr) {
          const int iy = oy * stride + kr - pad;
          if (iy < 0 || iy >= H) continue;
          rows[nrows] = iplane + static_cast<std::size_t>(iy) * W;
          kvs[nrows] = kbase + kr * 3;
          ++nrows;
        }

        auto edge = [&](int from, int to) {
          for (int ox = from; ox < to; ++ox) {
            float acc = orow[ox];
            for (int r = 0; r < nrows; ++r)
              for (int kc = 0; kc < 3; ++kc)
                if (ox >= cols[kc].ox0 && ox <= cols[kc].ox1)
                  acc += kvs[r][kc] * rows[r][cols[kc].base + ox];
            orow[ox] = acc;
          }
        };

        if (body_hi < body_lo) {
          edge(0, ow);
          continue;
        }
        edge(0, body_lo);
        const int b0 = cols[0].base;
        const int b1 = cols[1].base;
        const int b2 = cols[2].base;
        if (nrows == 3) {
          // out rows never alias the deinterleave buffer
          float* __restrict__ od = orow;
          const float* __restrict__ r0 = rows[0];
          const float* __restrict__ r1 = rows[1];
          const float* __restrict__ r2 = rows[2];
          const float k00 = kvs[0][0], k01 = kvs[0][1], k02 = kvs[0][2];
          const float k10 = kvs[1][0], k11 = kvs[1][1], k12 = kvs[1][2];
          const float k20 = kvs[2][0], k21 = kvs[2][1], k22 = kvs[2][2];
          for (int ox = body_lo; ox <= body_hi; ++ox) {
            float acc = od[ox];
            acc += k00 * r0[b0 + ox];
            acc += k01 * r0[b1 + ox];
            acc += k02 * r0[b2 + ox];
            acc += k10 * r1[b0 + ox];
            acc += k11 * r1[b1 + ox];
            acc += k12 * r1[b2 + ox];
            acc += k20 * r2[b0 + ox];
            acc += k21 * r2[b1 + ox];
            acc += k22 * r2[b2 + ox];
            od[ox] = acc;
          }
        } else {
          for (int ox = body_lo; ox <= body_hi; ++ox) {
            float acc = orow[ox];
            for (int r = 0; r < nrows; ++r) {
              acc += kvs[r][0] * rows[r][b0 + ox];
              acc += kvs[r][1] * rows[r][b1 + ox];
              acc += kvs[r][2] * rows[r][b2 + ox];
            }
            orow[ox] = acc;
          }
        }
        edge(body_hi + 1, ow);
      }
    }
  }
}

}  // namespace detail

// 3x3 convolution with zero padding into a pre-sized output tensor.
//
// Accumulation is float32 in a fixed loop order (out-channel, in-channel,
// kernel row, kernel col), so results are bitwise reproducible regardless
// of caller threading or which specialized kernel runs underneath.
inline void conv2d_forward_into(const Tensor& in, const ConvWeightsView& w,
                                int stride, int pad, Tensor& out) {
  if (stride < 1) throw ConfigError("conv stride must be >= 1");
  if (pad < 0) throw ConfigError("conv pad must be >= 0");
  if (in.channels != w.in_channels)
    throw ShapeError("conv input channels " + std::to_string(in.channels) +
                     " != weight in_channels " +
                     std::to_string(w.in_channels));
  const int oh = conv_output_dim(in.height, stride, pad);
  const int ow = conv_output_dim(in.width, stride, pad);
  if (oh < 1 || ow < 1)
    throw ShapeError("degenerate conv output for input " +
                     std::to_string(in.height) + "x" +
                     std::to_string(in.width) + " with pad " +
                     std::to_string(pad));
  if (out.channels != w.out_channels || out.height != oh || out.width != ow)
    throw ShapeError("conv output tensor has wrong shape");

  if (stride == 2)
    detail::conv2d_stride2(in, w, pad, out);
  else
    detail::conv2d_plain(in, w, stride, pad, out);
}

inline Tensor conv2d_forward(const Tensor& in, const ConvWeightsView& w,
                             int stride, int pad) {
  if (stride < 1) throw ConfigError("conv stride must be >= 1");
  const int oh = conv_output_dim(in.height, stride, pad);
  const int ow = conv_output_dim(in.width, stride, pad);
  if (oh < 1 || ow < 1)
    throw ShapeError("degenerate conv output for input " +
                     std::to_string(in.height) + "x" +
                     std::to_string(in.width) + " with pad " +
                     std::to_string(pad));
  Tensor out(w.out_channels, oh, ow);
  conv2d_forward_into(in, w, stride, pad, out);
  return out;
}

inline void relu_inplace(std::span<float> v) {
  for (float& x : v) x = x > 0.0f ? x : 0.0f;
}

inline Tensor relu(Tensor t) {
  relu_inplace(t.data);
  return t;
}

// Self-normalizing constants; the activation is lambda*x for x > 0 and
// lambda*alpha*(exp(x) - 1) otherwise.
inline constexpr float kSeluLambda = 1.05070098f;
inline constexpr float kSeluAlpha = 1.67326324f;

inline float selu(float x) {
  return x > 0.0f ? kSeluLambda * x
                  : kSeluLambda * kSeluAlpha * (std::exp(x) - 1.0f);
}

inline void selu_inplace(std::span<float> v) {
  for (float& x : v) x = selu(x);
}

inline std::vector<float> selu(std::vector<float> v) {
  selu_inplace(v);
  return v;
}

// out_i = bias_i + sum_j weights[i*in + j] * x_j.
//
// The sum uses a fixed striped order: eight independent accumulators over
// j % 8, folded low-to-high, then the bias. The order never varies, so
// results are bitwise reproducible; the stripes exist so the loop is not
// one latency-bound chain.
inline void dense_forward_into(std::span<const float> x,
                               std::span<const float> weights,
                               std::span<const float> bias,
                               std::span<float> out) {
  const std::size_t n_out = bias.size();
  const std::size_t n_in = x.size();
  if (weights.size() != n_out * n_in)
    throw ShapeError("dense weights size " + std::to_string(weights.size()) +
                     " != out*in = " + std::to_string(n_out * n_in));
  if (out.size() != n_out) throw ShapeError("dense output size mismatch");
  const float* xs = x.data();
  for (std::size_t i = 0; i < n_out; ++i) {
    const float* row = weights.data() + i * n_in;
    float acc[8] = {0.0f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f};
    std::size_t j = 0;
    for (; j + 8 <= n_in; j += 8)
      for (int k = 0; k < 8; ++k) acc[k] += row[j + k] * xs[j + k];
    for (; j < n_in; ++j) acc[j & 7] += row[j] * xs[j];
    float s = acc[0];
    for (int k = 1; k < 8; ++k) s += acc[k];
    out[i] = bias[i] + s;
  }
}

inline std::vector<float> dense_forward(std::span<const float> x,
                                        std::span<const float> weights,
                                        std::span<const float> bias) {
  std::vector<float> out(bias.size());
  dense_forward_into(x, weights, bias, out);
  return out;
}

// Channel-major, then row-major; the inverse of reshape().
inline std::vector<float> flatten(const Tensor& t) { return t.data; }

inline Tensor reshape(int c, int h, int w, std::vector<float> values) {
  return Tensor(c, h, w, std::move(values));
}

}  // namespace dne
