#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "dne/rng.hpp"
#include "dne/tensor.hpp"

using namespace dne;

namespace {

// Independent quadruple-loop convolution oracle with explicit zero padding
// and double accumulation. Deliberately shares no code with the production
// kernel.
Tensor conv_oracle(const Tensor& in, const ConvWeights& w, int stride,
                   int pad) {
  const int oh = (in.height + 2 * pad - 3) / stride + 1;
  const int ow = (in.width + 2 * pad - 3) / stride + 1;
  Tensor out(w.out_channels, oh, ow);
  for (int oc = 0; oc < w.out_channels; ++oc) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = w.bias[oc];
        for (int ic = 0; ic < w.in_channels; ++ic) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = oy * stride + ky - pad;
              const int ix = ox * stride + kx - pad;
              double v = 0.0;
              if (iy >= 0 && iy < in.height && ix >= 0 && ix < in.width)
                v = in.at(ic, iy, ix);
              acc += v * w.kernel[((static_cast<std::size_t>(oc) *
                                        w.in_channels +
                                    ic) *
                                       3 +
                                   ky) *
                                      3 +
                                  kx];
            }
          }
        }
        out.at(oc, oy, ox) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Tensor random_tensor(int c, int h, int w, Xoshiro256SS& rng) {
  Tensor t(c, h, w);
  for (float& v : t.data)
    v = static_cast<float>(2.0 * rng.next_unit() - 1.0);
  return t;
}

ConvWeights random_weights(int oc, int ic, Xoshiro256SS& rng) {
  ConvWeights w(oc, ic);
  for (float& v : w.kernel)
    v = static_cast<float>(2.0 * rng.next_unit() - 1.0);
  for (float& v : w.bias)
    v = static_cast<float>(2.0 * rng.next_unit() - 1.0);
  return w;
}

}  // namespace

TEST_CASE("conv output shape formula") {
  // 64x64 input, stride 2, pad 1 halves the spatial dims
  Tensor in(1, 64, 64);
  ConvWeights w(32, 1);
  const Tensor out = conv2d_forward(in, w, 2, 1);
  REQUIRE(out.channels == 32);
  REQUIRE(out.height == 32);
  REQUIRE(out.width == 32);
}

TEST_CASE("conv output dim sweep matches floor arithmetic") {
  for (int n = 3; n <= 128; ++n) {
    for (const int stride : {1, 2}) {
      for (const int pad : {0, 1}) {
        const int expect =
            static_cast<int>(std::floor((n + 2.0 * pad - 3.0) / stride)) + 1;
        REQUIRE(conv_output_dim(n, stride, pad) == expect);
      }
    }
  }
  // spot-check against real convolutions on a subgrid
  Xoshiro256SS rng(5);
  for (const int n : {3, 4, 5, 8, 17, 31, 32}) {
    for (const int stride : {1, 2}) {
      for (const int pad : {0, 1}) {
        const Tensor in = random_tensor(1, n, n, rng);
        const ConvWeights w = random_weights(2, 1, rng);
        const Tensor out = conv2d_forward(in, w, stride, pad);
        REQUIRE(out.height == conv_output_dim(n, stride, pad));
        REQUIRE(out.width == conv_output_dim(n, stride, pad));
      }
    }
  }
}

TEST_CASE("conv with zero kernels returns the bias everywhere") {
  Xoshiro256SS rng(11);
  const Tensor in = random_tensor(3, 9, 7, rng);
  ConvWeights w(4, 3);
  for (int oc = 0; oc < 4; ++oc) w.bias[oc] = 0.25f * (oc + 1);
  const Tensor out = conv2d_forward(in, w, 1, 1);
  for (int oc = 0; oc < 4; ++oc)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        REQUIRE(out.at(oc, y, x) == 0.25f * (oc + 1));
}

TEST_CASE("hand-computed 2x2 convolution") {
  // single window covers all four pixels after padding
  Tensor in(1, 2, 2, {1.0f, 2.0f, 3.0f, 4.0f});
  ConvWeights w(1, 1);
  std::fill(w.kernel.begin(), w.kernel.end(), 1.0f);
  const Tensor out = conv2d_forward(in, w, 2, 1);
  REQUIRE(out.channels == 1);
  REQUIRE(out.height == 1);
  REQUIRE(out.width == 1);
  REQUIRE(out.at(0, 0, 0) == 10.0f);
}

TEST_CASE("conv agrees with the brute-force oracle") {
  Xoshiro256SS rng(2023);
  for (int trial = 0; trial < 100; ++trial) {
    const int ic = 1 + static_cast<int>(rng.next_unit() * 4);
    const int oc = 1 + static_cast<int>(rng.next_unit() * 4);
    const int h = 3 + static_cast<int>(rng.next_unit() * 14);
    const int w = 3 + static_cast<int>(rng.next_unit() * 14);
    const int stride = rng.next_unit() < 0.5 ? 1 : 2;
    const int pad = rng.next_unit() < 0.5 ? 0 : 1;
    const Tensor in = random_tensor(ic, h, w, rng);
    const ConvWeights cw = random_weights(oc, ic, rng);

    const Tensor got = conv2d_forward(in, cw, stride, pad);
    const Tensor want = conv_oracle(in, cw, stride, pad);
    REQUIRE(got.same_shape(want));
    // relative to the result tensor's magnitude; element-wise ratios are
    // meaningless where the convolution itself cancels to ~0
    double max_abs = 0.0, max_diff = 0.0;
    for (std::size_t i = 0; i < got.data.size(); ++i) {
      max_abs = std::max(max_abs, std::abs(double(want.data[i])));
      max_diff =
          std::max(max_diff, std::abs(double(got.data[i]) - want.data[i]));
    }
    REQUIRE(max_diff / std::max(max_abs, 1e-30) < 1e-5);
  }
}

TEST_CASE("stride-2 kernel is bitwise identical to the plain loop") {
  Xoshiro256SS rng(404);
  for (int trial = 0; trial < 60; ++trial) {
    const int ic = 1 + static_cast<int>(rng.next_unit() * 4);
    const int oc = 1 + static_cast<int>(rng.next_unit() * 4);
    const int h = 1 + static_cast<int>(rng.next_unit() * 20);
    const int w = 1 + static_cast<int>(rng.next_unit() * 20);
    const int pad = rng.next_unit() < 0.5 ? 0 : 1;
    if (h + 2 * pad < 3 || w + 2 * pad < 3) continue;
    const Tensor in = random_tensor(ic, h, w, rng);
    const ConvWeights cw = random_weights(oc, ic, rng);

    Tensor plain(oc, conv_output_dim(h, 2, pad), conv_output_dim(w, 2, pad));
    detail::conv2d_plain(in, cw, 2, pad, plain);
    const Tensor dispatched = conv2d_forward(in, cw, 2, pad);
    REQUIRE(dispatched.data == plain.data);
  }
}

TEST_CASE("conv rejects channel mismatch and degenerate outputs") {
  Tensor in(2, 8, 8);
  ConvWeights w(4, 3);
  REQUIRE_THROWS_AS(conv2d_forward(in, w, 2, 1), ShapeError);

  Tensor tiny(1, 2, 2);
  ConvWeights w1(1, 1);
  REQUIRE_THROWS_AS(conv2d_forward(tiny, w1, 1, 0), ShapeError);  // 2+0 < 3
  REQUIRE_NOTHROW(conv2d_forward(tiny, w1, 1, 1));
}

TEST_CASE("relu examples and idempotence") {
  Tensor t(1, 1, 3, {-1.0f, 2.5f, 0.0f});
  const Tensor r = relu(t);
  REQUIRE(r.data == std::vector<float>{0.0f, 2.5f, 0.0f});
  REQUIRE(relu(r).data == r.data);

  Xoshiro256SS rng(3);
  Tensor big = random_tensor(2, 10, 10, rng);
  const Tensor once = relu(big);
  REQUIRE(relu(once).data == once.data);
  for (const float v : once.data) REQUIRE(v >= 0.0f);
}

TEST_CASE("selu fixed points and asymptote") {
  REQUIRE(selu(0.0f) == 0.0f);
  REQUIRE(selu(1.0f) == Catch::Approx(1.05070098).epsilon(1e-6));
  REQUIRE(selu(-20.0f) == Catch::Approx(-1.75809932).epsilon(1e-5));
  REQUIRE(selu(2.0f) == Catch::Approx(2.10140196).epsilon(1e-6));
}

TEST_CASE("selu is monotonically non-decreasing") {
  float prev = selu(-10.0f);
  for (int i = 1; i <= 10000; ++i) {
    const float x = -10.0f + 20.0f * static_cast<float>(i) / 10000.0f;
    const float y = selu(x);
    REQUIRE(y >= prev);
    prev = y;
  }
}

TEST_CASE("dense layer examples") {
  // identity weights, zero bias
  const std::vector<float> x{3.0f, 4.0f};
  const std::vector<float> eye{1.0f, 0.0f, 0.0f, 1.0f};
  const std::vector<float> zero2{0.0f, 0.0f};
  REQUIRE(dense_forward(x, eye, zero2) == x);

  // zero weights pass the bias through
  const std::vector<float> zeros{0.0f, 0.0f, 0.0f, 0.0f};
  const std::vector<float> bias{1.0f, 2.0f};
  REQUIRE(dense_forward(x, zeros, bias) == bias);

  // [[1,1],[1,-1]] * [2,3]
  const std::vector<float> m{1.0f, 1.0f, 1.0f, -1.0f};
  const std::vector<float> x2{2.0f, 3.0f};
  const std::vector<float> got = dense_forward(x2, m, zero2);
  REQUIRE(got == std::vector<float>{5.0f, -1.0f});
}

TEST_CASE("dense layer rejects mismatched shapes") {
  const std::vector<float> x{1.0f, 2.0f, 3.0f};
  const std::vector<float> w{1.0f, 0.0f, 0.0f, 1.0f};
  const std::vector<float> b{0.0f, 0.0f};
  REQUIRE_THROWS_AS(dense_forward(x, w, b), ShapeError);
}

TEST_CASE("flatten layout and round trip") {
  Tensor t(2, 1, 1, {7.0f, 9.0f});
  REQUIRE(flatten(t) == std::vector<float>{7.0f, 9.0f});

  Tensor q(1, 2, 2, {1.0f, 2.0f, 3.0f, 4.0f});
  REQUIRE(flatten(q) == std::vector<float>{1.0f, 2.0f, 3.0f, 4.0f});

  Xoshiro256SS rng(8);
  for (const auto& [c, h, w] :
       {std::tuple{1, 1, 1}, {3, 2, 5}, {4, 16, 16}, {2, 7, 3}}) {
    const Tensor orig = random_tensor(c, h, w, rng);
    const Tensor back = reshape(c, h, w, flatten(orig));
    REQUIRE(back.same_shape(orig));
    REQUIRE(back.data == orig.data);
  }
}

TEST_CASE("tensor constructors validate shape") {
  REQUIRE_THROWS_AS(Tensor(1, 2, 2, {1.0f, 2.0f}), ShapeError);
  REQUIRE_THROWS_AS(Tensor(0, 2, 2), ShapeError);
  REQUIRE_NOTHROW(Tensor(1, 1, 1));
}

TEST_CASE("conv outputs stay finite on finite inputs") {
  Xoshiro256SS rng(77);
  const Tensor in = random_tensor(4, 16, 16, rng);
  const ConvWeights w = random_weights(4, 4, rng);
  const Tensor out = conv2d_forward(in, w, 2, 1);
  for (const float v : out.data) REQUIRE(std::isfinite(v));
}
