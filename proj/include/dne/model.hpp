#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dne/error.hpp"
#include "dne/rng.hpp"
#include "dne/tensor.hpp"

namespace dne {

// Architecture hyperparameters of the two-branch pair classifier. Defaults
// are the reference architecture: four stride-2 3x3 conv layers of 32
// channels per branch, a 256-node dense layer per branch, concat to 512,
// then 256 -> 128 -> 2.
struct ModelConfig {
  int input_size = 64;
  int input_channels = 1;
  int conv_layers = 4;
  int conv_channels = 32;
  int kernel = 3;
  int stride = 2;
  int pad = 1;
  int fc_branch = 256;
  int fc2 = 256;
  int fc3 = 128;
  int outputs = 2;
  bool share_branch_weights = false;

  void validate() const {
    if (input_size < 16)
      throw ConfigError("input_size must be >= 16, got " +
                        std::to_string(input_size));
    if (input_channels < 1) throw ConfigError("input_channels must be >= 1");
    if (conv_layers != 4) throw ConfigError("conv_layers is fixed at 4");
    if (kernel != 3) throw ConfigError("kernel is fixed at 3");
    if (stride < 1 || pad < 0) throw ConfigError("bad stride/pad");
    if (conv_channels < 1 || fc_branch < 1 || fc2 < 1 || fc3 < 1)
      throw ConfigError("layer widths must be >= 1");
    if (outputs != 2)
      throw ConfigError("outputs is fixed at 2 (progression, regression)");
  }

  bool operator==(const ModelConfig&) const = default;
};

// Flat parameter vector in canonical layout order: branch1 conv1..4 then its
// dense layer, branch2 likewise, then the three head dense layers; within
// each layer weights (row-major) before biases. With shared branch weights
// the branch block is stored once.
struct Genome {
  std::vector<float> values;

  std::size_t size() const { return values.size(); }
  bool operator==(const Genome&) const = default;
};

namespace detail {

struct LayerInfo {
  bool is_conv = false;
  int out_dim = 0;  // conv: out channels, dense: out features
  int in_dim = 0;   // conv: in channels,  dense: in features
  std::size_t w_off = 0;
  std::size_t b_off = 0;

  std::size_t w_len() const {
    return static_cast<std::size_t>(out_dim) * in_dim * (is_conv ? 9 : 1);
  }
  std::size_t b_len() const { return static_cast<std::size_t>(out_dim); }
};

// Offsets of every layer inside the flat genome. Layer index map:
// [0..4] branch1 conv0..3 + dense, [5..9] branch2 (aliases branch1 offsets
// when weights are shared), [10..12] head dense layers.
struct GenomeLayout {
  std::vector<LayerInfo> layers;
  std::size_t total = 0;
  int branch_dense_in = 0;
  std::array<int, 5> feature_dims{};  // spatial dim after each conv stage
};

inline GenomeLayout build_layout(const ModelConfig& cfg) {
  cfg.validate();
  GenomeLayout L;
  int dim = cfg.input_size;
  L.feature_dims[0] = dim;
  for (int i = 0; i < cfg.conv_layers; ++i) {
    dim = conv_output_dim(dim, cfg.stride, cfg.pad);
    if (dim < 1)
      throw ConfigError("input_size too small: conv stage " +
                        std::to_string(i + 1) + " collapses to zero");
    L.feature_dims[i + 1] = dim;
  }
  L.branch_dense_in = cfg.conv_channels * dim * dim;

  std::size_t off = 0;
  auto add = [&](bool is_conv, int out_dim, int in_dim) {
    LayerInfo li;
    li.is_conv = is_conv;
    li.out_dim = out_dim;
    li.in_dim = in_dim;
    li.w_off = off;
    li.b_off = off + li.w_len();
    off = li.b_off + li.b_len();
    L.layers.push_back(li);
  };
  auto add_branch = [&] {
    int ic = cfg.input_channels;
    for (int i = 0; i < cfg.conv_layers; ++i) {
      add(true, cfg.conv_channels, ic);
      ic = cfg.conv_channels;
    }
    add(false, cfg.fc_branch, L.branch_dense_in);
  };

  add_branch();
  if (cfg.share_branch_weights) {
    for (int i = 0; i < cfg.conv_layers + 1; ++i)
      L.layers.push_back(L.layers[i]);
  } else {
    add_branch();
  }
  add(false, cfg.fc2, 2 * cfg.fc_branch);
  add(false, cfg.fc3, cfg.fc2);
  add(false, cfg.outputs, cfg.fc3);
  L.total = off;
  return L;
}

}  // namespace detail

// Exact parameter count (weights + biases) of the flat genome.
inline std::size_t genome_len(const ModelConfig& cfg) {
  return detail::build_layout(cfg).total;
}

// The instantiated classifier: config + flat parameters in genome order.
// Immutable after construction; forward passes are pure and can run from
// many threads over shared Model data.
class Model {
 public:
  Model(const ModelConfig& cfg, std::vector<float> params)
      : cfg_(cfg), layout_(detail::build_layout(cfg)),
        params_(std::move(params)) {
    if (params_.size() != layout_.total)
      throw ShapeError("genome length " + std::to_string(params_.size()) +
                       " does not match config (expected " +
                       std::to_string(layout_.total) + ")");
  }

  const ModelConfig& config() const { return cfg_; }
  const detail::GenomeLayout& layout() const { return layout_; }
  std::span<const float> params() const { return params_; }

 private:
  ModelConfig cfg_;
  detail::GenomeLayout layout_;
  std::vector<float> params_;
};

// Read-only view of one layer's parameters inside a model.
struct LayerView {
  bool is_conv = false;
  int out_dim = 0;
  int in_dim = 0;
  std::span<const float> weights;
  std::span<const float> bias;
};

inline std::vector<LayerView> layers(const Model& m) {
  std::vector<LayerView> out;
  out.reserve(m.layout().layers.size());
  const std::span<const float> p = m.params();
  for (const auto& li : m.layout().layers)
    out.push_back({li.is_conv, li.out_dim, li.in_dim,
                   p.subspan(li.w_off, li.w_len()),
                   p.subspan(li.b_off, li.b_len())});
  return out;
}

// Glorot-uniform initialization drawn in canonical genome order from one
// seeded stream; biases stay zero and consume no draws.
inline Model build_model(const ModelConfig& cfg, std::uint64_t seed) {
  const auto layout = detail::build_layout(cfg);
  std::vector<float> params(layout.total, 0.0f);
  Xoshiro256SS rng(seed);
  std::size_t cursor = 0;
  for (const auto& li : layout.layers) {
    if (li.w_off < cursor) continue;  // shared-branch alias, already drawn
    const double fan_in = li.is_conv ? 9.0 * li.in_dim : li.in_dim;
    const double fan_out = li.is_conv ? 9.0 * li.out_dim : li.out_dim;
    // tiny margin keeps float rounding strictly inside the open interval
    const double bound = std::sqrt(6.0 / (fan_in + fan_out)) * (1.0 - 1e-7);
    float* w = params.data() + li.w_off;
    const std::size_t n = li.w_len();
    for (std::size_t j = 0; j < n; ++j)
      w[j] = static_cast<float>(bound * (2.0 * rng.next_unit_open() - 1.0));
    cursor = li.b_off + li.b_len();
  }
  return Model(cfg, std::move(params));
}

inline Genome to_genome(const Model& m) {
  return Genome{std::vector<float>(m.params().begin(), m.params().end())};
}

inline Model from_genome(const ModelConfig& cfg, Genome g) {
  return Model(cfg, std::move(g.values));
}

// Reusable activation buffers for one forward pass; one per worker thread.
struct ForwardScratch {
  Tensor map_a;
  Tensor map_b;
  std::vector<float> fc_branch1;
  std::vector<float> fc_branch2;
  std::vector<float> concat;
  std::vector<float> fc2;
  std::vector<float> fc3;
};

namespace detail {

inline void check_input_shape(const ModelConfig& cfg, const Tensor& t,
                              const char* which) {
  if (t.channels != cfg.input_channels || t.height != cfg.input_size ||
      t.width != cfg.input_size)
    throw ShapeError(std::string(which) + " has shape (" +
                     std::to_string(t.channels) + "," +
                     std::to_string(t.height) + "," + std::to_string(t.width) +
                     "), expected (" + std::to_string(cfg.input_channels) +
                     "," + std::to_string(cfg.input_size) + "," +
                     std::to_string(cfg.input_size) + ")");
}

// scan -> 4x(conv+ReLU) -> flatten -> dense -> SELU
inline void branch_forward(const GenomeLayout& L, const ModelConfig& cfg,
                           std::span<const float> params, int branch,
                           const Tensor& scan, ForwardScratch& s,
                           std::span<float> fc_out) {
  const int base = branch * (cfg.conv_layers + 1);
  const Tensor* cur = &scan;
  Tensor* bufs[2] = {&s.map_a, &s.map_b};
  for (int i = 0; i < cfg.conv_layers; ++i) {
    const LayerInfo& li = L.layers[base + i];
    const ConvWeightsView w(li.out_dim, li.in_dim, params.data() + li.w_off,
                            params.data() + li.b_off);
    Tensor& dst = *bufs[i & 1];
    const int d = L.feature_dims[i + 1];
    dst.resize(li.out_dim, d, d);
    conv2d_forward_into(*cur, w, cfg.stride, cfg.pad, dst);
    relu_inplace(dst.data);
    cur = &dst;
  }
  const LayerInfo& d = L.layers[base + cfg.conv_layers];
  dense_forward_into(cur->data, params.subspan(d.w_off, d.w_len()),
                     params.subspan(d.b_off, d.b_len()), fc_out);
  selu_inplace(fc_out);
}

inline void forward_into(const GenomeLayout& L, const ModelConfig& cfg,
                         std::span<const float> params, const Tensor& scan1,
                         const Tensor& scan2, ForwardScratch& s,
                         std::span<float> logits) {
  check_input_shape(cfg, scan1, "scan1");
  check_input_shape(cfg, scan2, "scan2");

  s.fc_branch1.resize(cfg.fc_branch);
  s.fc_branch2.resize(cfg.fc_branch);
  branch_forward(L, cfg, params, 0, scan1, s, s.fc_branch1);
  branch_forward(L, cfg, params, 1, scan2, s, s.fc_branch2);

  s.concat.resize(2 * static_cast<std::size_t>(cfg.fc_branch));
  std::copy(s.fc_branch1.begin(), s.fc_branch1.end(), s.concat.begin());
  std::copy(s.fc_branch2.begin(), s.fc_branch2.end(),
            s.concat.begin() + cfg.fc_branch);

  const int head = 2 * (cfg.conv_layers + 1);
  const LayerInfo& h0 = L.layers[head];
  const LayerInfo& h1 = L.layers[head + 1];
  const LayerInfo& h2 = L.layers[head + 2];

  s.fc2.resize(cfg.fc2);
  dense_forward_into(s.concat, params.subspan(h0.w_off, h0.w_len()),
                     params.subspan(h0.b_off, h0.b_len()), s.fc2);
  selu_inplace(s.fc2);

  s.fc3.resize(cfg.fc3);
  dense_forward_into(s.fc2, params.subspan(h1.w_off, h1.w_len()),
                     params.subspan(h1.b_off, h1.b_len()), s.fc3);
  selu_inplace(s.fc3);

  // raw two-node output, no activation
  dense_forward_into(s.fc3, params.subspan(h2.w_off, h2.w_len()),
                     params.subspan(h2.b_off, h2.b_len()), logits);
}

}  // namespace detail

inline void forward_into(const Model& m, const Tensor& scan1,
                         const Tensor& scan2, ForwardScratch& scratch,
                         std::span<float> logits) {
  detail::forward_into(m.layout(), m.config(), m.params(), scan1, scan2,
                       scratch, logits);
}

inline std::vector<float> forward(const Model& m, const Tensor& scan1,
                                  const Tensor& scan2) {
  ForwardScratch scratch;
  std::vector<float> logits(m.config().outputs);
  forward_into(m, scan1, scan2, scratch, logits);
  return logits;
}

// Larger logit wins; an exact tie resolves to class 0.
inline int argmax_class(std::span<const float> logits) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(logits.size()); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

inline int predict(const Model& m, const Tensor& scan1, const Tensor& scan2) {
  return argmax_class(forward(m, scan1, scan2));
}

}  // namespace dne
