#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dne/error.hpp"
#include "dne/evolution.hpp"
#include "dne/model.hpp"

namespace dne {

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"input_size", c.input_size},
                     {"input_channels", c.input_channels},
                     {"conv_layers", c.conv_layers},
                     {"conv_channels", c.conv_channels},
                     {"kernel", c.kernel},
                     {"stride", c.stride},
                     {"pad", c.pad},
                     {"fc_branch", c.fc_branch},
                     {"fc2", c.fc2},
                     {"fc3", c.fc3},
                     {"outputs", c.outputs},
                     {"share_branch_weights", c.share_branch_weights}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("input_size").get_to(c.input_size);
  j.at("input_channels").get_to(c.input_channels);
  j.at("conv_layers").get_to(c.conv_layers);
  j.at("conv_channels").get_to(c.conv_channels);
  j.at("kernel").get_to(c.kernel);
  j.at("stride").get_to(c.stride);
  j.at("pad").get_to(c.pad);
  j.at("fc_branch").get_to(c.fc_branch);
  j.at("fc2").get_to(c.fc2);
  j.at("fc3").get_to(c.fc3);
  j.at("outputs").get_to(c.outputs);
  j.at("share_branch_weights").get_to(c.share_branch_weights);
}

inline void to_json(nlohmann::json& j, const EvolutionConfig& c) {
  j = nlohmann::json{{"population", c.population},
                     {"sigma", c.sigma},
                     {"alpha", c.alpha},
                     {"generations", c.generations},
                     {"master_seed", c.master_seed},
                     {"fitness_shaping", to_string(c.fitness_shaping)},
                     {"eval_test_every", c.eval_test_every},
                     {"patience", c.patience}};
}

inline void from_json(const nlohmann::json& j, EvolutionConfig& c) {
  j.at("population").get_to(c.population);
  j.at("sigma").get_to(c.sigma);
  j.at("alpha").get_to(c.alpha);
  j.at("generations").get_to(c.generations);
  j.at("master_seed").get_to(c.master_seed);
  c.fitness_shaping =
      fitness_shaping_from_string(j.at("fitness_shaping").get<std::string>());
  j.at("eval_test_every").get_to(c.eval_test_every);
  j.at("patience").get_to(c.patience);
}

// Everything a run needs to resume: where it was, how it was configured,
// and the exact parent genome.
struct Checkpoint {
  std::uint64_t generation = 0;
  ModelConfig model;
  EvolutionConfig evo;
  std::vector<float> genome;
};

namespace detail {

inline constexpr char kCheckpointMagic[4] = {'D', 'N', 'E', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void put_u32le(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64le(std::string& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct ByteCursor {
  const unsigned char* p;
  std::size_t n;
  std::size_t pos = 0;
  const std::string& file;

  void need(std::size_t k) const {
    if (pos + k > n)
      throw DataError(file + ": truncated checkpoint");
  }
  std::uint32_t u32le() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64le() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
};

}  // namespace detail

// Binary layout, little-endian throughout:
//   "DNEC" | u32 version | u64 generation | u64 master_seed |
//   u64 json_len | json bytes | u64 genome_len | genome_len x f32
inline void save_checkpoint(const std::filesystem::path& path,
                            const Checkpoint& ck) {
  const nlohmann::json cfg = {{"model", ck.model}, {"evolution", ck.evo}};
  const std::string cfg_json = cfg.dump();

  std::string buf;
  buf.reserve(40 + cfg_json.size() + 4 * ck.genome.size());
  buf.append(detail::kCheckpointMagic, 4);
  detail::put_u32le(buf, detail::kCheckpointVersion);
  detail::put_u64le(buf, ck.generation);
  detail::put_u64le(buf, ck.evo.master_seed);
  detail::put_u64le(buf, cfg_json.size());
  buf.append(cfg_json);
  detail::put_u64le(buf, ck.genome.size());
  for (const float f : ck.genome)
    detail::put_u32le(buf, std::bit_cast<std::uint32_t>(f));

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(tmp.string() + ": cannot open for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError(tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    throw IoError(path.string() + ": atomic rename failed: " + ec.message());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(name + ": cannot open checkpoint");
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());

  detail::ByteCursor cur{reinterpret_cast<const unsigned char*>(buf.data()),
                         buf.size(), 0, name};
  cur.need(4);
  if (std::memcmp(buf.data(), detail::kCheckpointMagic, 4) != 0)
    throw DataError(name + ": bad magic, not a checkpoint file");
  cur.pos = 4;
  const std::uint32_t version = cur.u32le();
  if (version != detail::kCheckpointVersion)
    throw DataError(name + ": unsupported checkpoint version " +
                    std::to_string(version));

  Checkpoint ck;
  ck.generation = cur.u64le();
  const std::uint64_t master_seed = cur.u64le();
  const std::uint64_t json_len = cur.u64le();
  cur.need(json_len);
  const std::string cfg_json = buf.substr(cur.pos, json_len);
  cur.pos += json_len;

  try {
    const nlohmann::json cfg = nlohmann::json::parse(cfg_json);
    cfg.at("model").get_to(ck.model);
    cfg.at("evolution").get_to(ck.evo);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(name + ": bad config JSON: " + e.what());
  }
  if (ck.evo.master_seed != master_seed)
    throw DataError(name + ": master_seed mismatch between header and config");

  const std::uint64_t n = cur.u64le();
  const std::uint64_t expected = genome_len(ck.model);
  if (n != expected)
    throw DataError(name + ": genome length mismatch (file says " +
                    std::to_string(n) + ", config implies " +
                    std::to_string(expected) + ")");
  cur.need(n * 4);
  ck.genome.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k)
      v |= static_cast<std::uint32_t>(cur.p[cur.pos + 4 * i + k]) << (8 * k);
    ck.genome[i] = std::bit_cast<float>(v);
  }
  cur.pos += n * 4;
  if (cur.pos != buf.size())
    throw DataError(name + ": trailing bytes after genome");
  return ck;
}

inline constexpr const char* kMetricsHeader =
    "generation,best_child,mean_child,worst_child,parent_fitness,"
    "test_accuracy,wall_ms";

// Append-only CSV telemetry, one row per generation. test_accuracy is empty
// on generations where it was not evaluated.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path)
      : path_(path.string()), out_(path, std::ios::trunc) {
    if (!out_) throw IoError(path_ + ": cannot open metrics file");
    out_ << kMetricsHeader << '\n';
    check();
  }

  void append(const GenerationStats& s) {
    char buf[192];
    if (s.test_accuracy)
      std::snprintf(buf, sizeof buf, "%llu,%d,%.4f,%d,%d,%.4f,%lld",
                    static_cast<unsigned long long>(s.generation),
                    s.best_child, s.mean_child, s.worst_child,
                    s.parent_fitness, *s.test_accuracy,
                    static_cast<long long>(s.wall_ms));
    else
      std::snprintf(buf, sizeof buf, "%llu,%d,%.4f,%d,%d,,%lld",
                    static_cast<unsigned long long>(s.generation),
                    s.best_child, s.mean_child, s.worst_child,
                    s.parent_fitness, static_cast<long long>(s.wall_ms));
    out_ << buf << '\n';
    out_.flush();
    check();
  }

 private:
  void check() const {
    if (!out_) throw IoError(path_ + ": write failed");
  }

  std::string path_;
  std::ofstream out_;
};

}  // namespace dne
