#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "dne/error.hpp"
#include "dne/rng.hpp"
#include "dne/tensor.hpp"

namespace dne {

inline constexpr int kRegression = 0;
inline constexpr int kProgression = 1;

inline const char* class_name(int label) {
  return label == kProgression ? "progression" : "regression";
}

// One labeled (scan1, scan2) pair; tensors share shape, pixels in [0,1].
struct PairSample {
  Tensor scan1;
  Tensor scan2;
  int label = kRegression;
};

// Ordered sample collection; order equals manifest row order and is part of
// the deterministic contract.
struct Dataset {
  std::vector<PairSample> samples;
  std::string name;

  std::size_t size() const { return samples.size(); }
};

// Raw grayscale image as stored in a PGM file, row-major.
struct RawImage {
  int width = 0;
  int height = 0;
  int maxval = 255;
  std::vector<std::uint16_t> pixels;
};

namespace detail {

struct PgmCursor {
  const std::string& buf;
  std::size_t pos = 0;
  const std::string& file;

  void skip_space_and_comments() {
    while (pos < buf.size()) {
      const char c = buf[pos];
      if (c == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        break;
      }
    }
  }

  long next_int() {
    skip_space_and_comments();
    if (pos >= buf.size() || buf[pos] < '0' || buf[pos] > '9')
      throw DataError(file + ": malformed PGM header");
    long v = 0;
    while (pos < buf.size() && buf[pos] >= '0' && buf[pos] <= '9') {
      v = v * 10 + (buf[pos] - '0');
      if (v > 1 << 30) throw DataError(file + ": absurd PGM header value");
      ++pos;
    }
    return v;
  }
};

}  // namespace detail

// Binary PGM ("P5") reader; 16-bit samples are big-endian per the format.
inline RawImage load_pgm(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(name + ": cannot open file");
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());

  if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5')
    throw DataError(name + ": bad magic, expected binary PGM (P5)");
  detail::PgmCursor cur{buf, 2, name};
  const long w = cur.next_int();
  const long h = cur.next_int();
  const long maxval = cur.next_int();
  if (w < 1 || h < 1) throw DataError(name + ": bad PGM dimensions");
  if (maxval < 1 || maxval > 65535)
    throw DataError(name + ": maxval out of range (" + std::to_string(maxval) +
                    ", must be 1..65535)");
  if (cur.pos >= buf.size())
    throw DataError(name + ": truncated PGM (no raster)");
  ++cur.pos;  // single whitespace byte separates header from raster

  RawImage img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.maxval = static_cast<int>(maxval);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  if (buf.size() - cur.pos < n * bpp)
    throw DataError(name + ": truncated PGM raster (" +
                    std::to_string(buf.size() - cur.pos) + " bytes, need " +
                    std::to_string(n * bpp) + ")");
  img.pixels.resize(n);
  const unsigned char* raster =
      reinterpret_cast<const unsigned char*>(buf.data() + cur.pos);
  if (bpp == 1) {
    for (std::size_t i = 0; i < n; ++i) img.pixels[i] = raster[i];
  } else {
    for (std::size_t i = 0; i < n; ++i)
      img.pixels[i] = static_cast<std::uint16_t>((raster[2 * i] << 8) |
                                                 raster[2 * i + 1]);
  }
  return img;
}

inline void write_pgm(const std::filesystem::path& path, const RawImage& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << "P5\n" << img.width << " " << img.height << "\n" << img.maxval
      << "\n";
  if (img.maxval > 255) {
    for (const std::uint16_t p : img.pixels) {
      out.put(static_cast<char>(p >> 8));
      out.put(static_cast<char>(p & 0xFF));
    }
  } else {
    for (const std::uint16_t p : img.pixels)
      out.put(static_cast<char>(p & 0xFF));
  }
  if (!out) throw IoError(path.string() + ": write failed");
}

// Bilinear resize to target x target (sample centers at (i+0.5)*scale - 0.5,
// clamped), then scale into [0,1] by 1/maxval.
inline Tensor preprocess(const RawImage& img, int target_size) {
  if (img.width < 2 || img.height < 2)
    throw DataError("degenerate image: need at least 2x2 pixels");
  if (target_size < 1) throw ConfigError("target size must be >= 1");

  Tensor out(1, target_size, target_size);
  const double sx = static_cast<double>(img.width) / target_size;
  const double sy = static_cast<double>(img.height) / target_size;
  const float inv_max = 1.0f / static_cast<float>(img.maxval);
  for (int oy = 0; oy < target_size; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const float wy = static_cast<float>(fy - y0);
    for (int ox = 0; ox < target_size; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const float wx = static_cast<float>(fx - x0);
      const float v00 = img.pixels[static_cast<std::size_t>(y0) * img.width + x0];
      const float v01 = img.pixels[static_cast<std::size_t>(y0) * img.width + x1];
      const float v10 = img.pixels[static_cast<std::size_t>(y1) * img.width + x0];
      const float v11 = img.pixels[static_cast<std::size_t>(y1) * img.width + x1];
      const float top = v00 + (v01 - v00) * wx;
      const float bot = v10 + (v11 - v10) * wx;
      out.at(0, oy, ox) = (top + (bot - top) * wy) * inv_max;
    }
  }
  return out;
}

inline constexpr const char* kManifestHeader = "scan1,scan2,label";

// CSV manifest loader: header `scan1,scan2,label`, image paths relative to
// the manifest's directory, labels 0 (regression) or 1 (progression).
inline Dataset load_manifest(const std::filesystem::path& path,
                             int target_size) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open manifest");
  const std::filesystem::path dir = path.parent_path();

  auto strip_cr = [](std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  };

  std::string line;
  if (!std::getline(in, line))
    throw DataError(path.string() + ": empty manifest");
  strip_cr(line);
  if (line != kManifestHeader)
    throw DataError(path.string() + ": manifest header must be `" +
                    std::string(kManifestHeader) + "`, got `" + line + "`");

  Dataset ds;
  ds.name = path.stem().string();
  std::size_t row = 0;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    ++row;
    const std::string ctx = path.string() + ": row " + std::to_string(row);
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = c1 == std::string::npos
                               ? std::string::npos
                               : line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos ||
        line.find(',', c2 + 1) != std::string::npos)
      throw DataError(ctx + ": expected 3 comma-separated fields");
    const std::string f1 = line.substr(0, c1);
    const std::string f2 = line.substr(c1 + 1, c2 - c1 - 1);
    const std::string f3 = line.substr(c2 + 1);
    int label;
    if (f3 == "0")
      label = kRegression;
    else if (f3 == "1")
      label = kProgression;
    else
      throw DataError(ctx + ": bad label `" + f3 + "` (expected 0 or 1)");

    PairSample s;
    s.label = label;
    try {
      s.scan1 = preprocess(load_pgm(dir / f1), target_size);
      s.scan2 = preprocess(load_pgm(dir / f2), target_size);
    } catch (const DataError& e) {
      throw DataError(ctx + ": " + e.what());
    }
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty())
    throw DataError(path.string() + ": empty dataset (manifest has no rows)");
  return ds;
}

// Synthetic lesion-change task: bright soft-edged discs on a dark noisy
// background. Progression pairs grow disc radii and add discs; regression
// pairs shrink radii and remove discs.
struct SyntheticTaskConfig {
  int n_pairs = 20;
  int image_size = 64;
  int blob_count_min = 2;
  int blob_count_max = 4;
  double radius_min = 3.0;
  double radius_max = 6.0;
  int extra_blobs = 2;
  double radius_growth = 1.4;
  double noise_std = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_pairs < 1) throw ConfigError("n_pairs must be >= 1");
    if (image_size < 8) throw ConfigError("image_size must be >= 8");
    if (blob_count_min < 1 || blob_count_max < blob_count_min)
      throw ConfigError("bad blob count range");
    if (radius_min <= 0 || radius_max < radius_min)
      throw ConfigError("bad radius range");
    if (extra_blobs < 0) throw ConfigError("extra_blobs must be >= 0");
    if (radius_growth <= 1.0)
      throw ConfigError("radius_growth must be > 1");
    if (noise_std < 0) throw ConfigError("noise_std must be >= 0");
  }
};

namespace detail {

struct Disc {
  double cx, cy, r;
};

inline constexpr float kSynthBackground = 0.05f;
inline constexpr float kSynthPeak = 0.9f;
inline constexpr double kSynthEdge = 1.5;  // soft-edge half width in pixels

inline void render_discs(std::vector<float>& img, int size,
                         const std::vector<Disc>& discs) {
  std::fill(img.begin(), img.end(), kSynthBackground);
  for (const Disc& d : discs) {
    const int y0 = std::max(0, static_cast<int>(d.cy - d.r - kSynthEdge - 1));
    const int y1 =
        std::min(size - 1, static_cast<int>(d.cy + d.r + kSynthEdge + 1));
    const int x0 = std::max(0, static_cast<int>(d.cx - d.r - kSynthEdge - 1));
    const int x1 =
        std::min(size - 1, static_cast<int>(d.cx + d.r + kSynthEdge + 1));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dist =
            std::sqrt((x - d.cx) * (x - d.cx) + (y - d.cy) * (y - d.cy));
        double t = (d.r + kSynthEdge - dist) / (2.0 * kSynthEdge);
        t = std::clamp(t, 0.0, 1.0);
        const double s = t * t * (3.0 - 2.0 * t);
        const float v = kSynthBackground +
                        (kSynthPeak - kSynthBackground) * static_cast<float>(s);
        float& px = img[static_cast<std::size_t>(y) * size + x];
        px = std::max(px, v);
      }
    }
  }
}

inline void add_noise(std::vector<float>& img, double std_dev,
                      Xoshiro256SS& rng) {
  if (std_dev <= 0) return;
  const float sd = static_cast<float>(std_dev);
  std::size_t i = 0;
  for (; i + 1 < img.size(); i += 2) {
    const GaussPair g = box_muller(rng.next_unit_pos(), rng.next_unit_pos());
    img[i] = std::clamp(img[i] + sd * g.z0, 0.0f, 1.0f);
    img[i + 1] = std::clamp(img[i + 1] + sd * g.z1, 0.0f, 1.0f);
  }
  if (i < img.size()) {
    const GaussPair g = box_muller(rng.next_unit_pos(), rng.next_unit_pos());
    img[i] = std::clamp(img[i] + sd * g.z0, 0.0f, 1.0f);
  }
}

inline RawImage quantize_u8(const std::vector<float>& img, int size) {
  RawImage out;
  out.width = size;
  out.height = size;
  out.maxval = 255;
  out.pixels.resize(img.size());
  for (std::size_t i = 0; i < img.size(); ++i)
    out.pixels[i] =
        static_cast<std::uint16_t>(std::lround(img[i] * 255.0f));
  return out;
}

}  // namespace detail

// Writes `<name>_pNNNN_s1.pgm` / `_s2.pgm` image pairs plus `<name>.csv`
// into out_dir and returns the manifest path. Fully deterministic from
// cfg.seed; labels alternate so any even n_pairs is exactly class-balanced.
inline std::filesystem::path gen_synthetic(const SyntheticTaskConfig& cfg,
                                           const std::filesystem::path& out_dir,
                                           const std::string& name = "data") {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec && !std::filesystem::is_directory(out_dir))
    throw IoError(out_dir.string() + ": cannot create output directory");

  Xoshiro256SS rng(cfg.seed);
  auto uniform_in = [&](double lo, double hi) {
    return lo + (hi - lo) * rng.next_unit();
  };

  const int size = cfg.image_size;
  std::vector<float> img(static_cast<std::size_t>(size) * size);
  std::string manifest;
  manifest += kManifestHeader;
  manifest += '\n';

  const double margin = 0.2 * size;
  for (int p = 0; p < cfg.n_pairs; ++p) {
    const int label = (p % 2 == 1) ? kProgression : kRegression;
    const int span = cfg.blob_count_max - cfg.blob_count_min + 1;
    const int k =
        cfg.blob_count_min +
        std::min(span - 1, static_cast<int>(rng.next_unit() * span));

    std::vector<detail::Disc> base(k);
    for (auto& d : base) {
      d.cx = uniform_in(margin, size - margin);
      d.cy = uniform_in(margin, size - margin);
      d.r = uniform_in(cfg.radius_min, cfg.radius_max);
    }

    std::vector<detail::Disc> follow;
    if (label == kProgression) {
      follow = base;
      for (auto& d : follow) d.r *= cfg.radius_growth;
      for (int e = 0; e < cfg.extra_blobs; ++e)
        follow.push_back({uniform_in(margin, size - margin),
                          uniform_in(margin, size - margin),
                          uniform_in(cfg.radius_min, cfg.radius_max)});
    } else {
      const int keep = std::max(0, k - cfg.extra_blobs);
      follow.assign(base.begin(), base.begin() + keep);
      for (auto& d : follow) d.r /= cfg.radius_growth;
    }

    char f1[64], f2[64];
    std::snprintf(f1, sizeof f1, "%s_p%04d_s1.pgm", name.c_str(), p);
    std::snprintf(f2, sizeof f2, "%s_p%04d_s2.pgm", name.c_str(), p);

    detail::render_discs(img, size, base);
    detail::add_noise(img, cfg.noise_std, rng);
    write_pgm(out_dir / f1, detail::quantize_u8(img, size));

    detail::render_discs(img, size, follow);
    detail::add_noise(img, cfg.noise_std, rng);
    write_pgm(out_dir / f2, detail::quantize_u8(img, size));

    manifest += f1;
    manifest += ',';
    manifest += f2;
    manifest += ',';
    manifest += std::to_string(label);
    manifest += '\n';
  }

  const std::filesystem::path manifest_path = out_dir / (name + ".csv");
  std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(manifest_path.string() + ": cannot write manifest");
  out << manifest;
  if (!out) throw IoError(manifest_path.string() + ": write failed");
  return manifest_path;
}

}  // namespace dne
