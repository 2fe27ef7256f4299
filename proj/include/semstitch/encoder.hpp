// Copyright 2026 The semstitch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "semstitch/patchex.hpp"
#include "semstitch/protocol.hpp"

namespace semstitch {

/// K-dimensional patch embedding. Encoders return unit-L2 vectors.
struct FeatureVector {
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

enum class EncoderKind { baseline, ncc, oracle, external, loopback };

inline const char* to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::baseline: return "baseline";
    case EncoderKind::ncc: return "ncc";
    case EncoderKind::oracle: return "oracle";
    case EncoderKind::external: return "external";
    case EncoderKind::loopback: return "loopback";
  }
  return "?";
}

inline EncoderKind parse_encoder_kind(const std::string& s) {
  if (s == "baseline") return EncoderKind::baseline;
  if (s == "ncc") return EncoderKind::ncc;
  if (s == "oracle") return EncoderKind::oracle;
  if (s == "external") return EncoderKind::external;
  if (s == "loopback") return EncoderKind::loopback;
  throw Error("unknown encoder '" + s + "' (valid: baseline, ncc, oracle, external, loopback)");
}

/// Which encoder to run and its settings.
///
///  - baseline: grid of per-cell mean / x-gradient / y-gradient of the
///    standardised grey patch; K = 3 * grid^2 (192 for grid 8).
///  - ncc: 4x block-averaged, zero-mean grey patch; K = (patch_size / 4)^2.
///    Cosine of two such vectors is their normalised cross-correlation.
///  - oracle: K = 8 positional code of the patch's source-slide position,
///    cosines along four directions at one wavelength, plus Gaussian noise.
///    Test and benchmark use only.
///  - external: embeddings served by a bridge process (see protocol.hpp).
///  - loopback: per-patch mean byte value replicated K times; exercises the
///    bridge protocol.
struct EncoderSpec {
  EncoderKind kind = EncoderKind::baseline;
  int dim = 192;
  int patch_size = 224;
  int grid = 8;
  double sigma = 0.0;
  double wavelength = 2048.0;
  std::uint64_t seed = 42;
  std::string command;

  static EncoderSpec baseline(int grid = 8) {
    EncoderSpec s;
    s.kind = EncoderKind::baseline;
    s.grid = grid;
    s.dim = 3 * grid * grid;
    return s;
  }
  static EncoderSpec ncc(int patch_size = 224) {
    EncoderSpec s;
    s.kind = EncoderKind::ncc;
    s.patch_size = patch_size;
    s.dim = (patch_size / 4) * (patch_size / 4);
    return s;
  }
  static EncoderSpec oracle(double sigma = 0.0, std::uint64_t seed = 42, double wavelength = 2048.0) {
    EncoderSpec s;
    s.kind = EncoderKind::oracle;
    s.dim = 8;
    s.sigma = sigma;
    s.seed = seed;
    s.wavelength = wavelength;
    return s;
  }
  static EncoderSpec external(std::string command, int dim) {
    EncoderSpec s;
    s.kind = EncoderKind::external;
    s.command = std::move(command);
    s.dim = dim;
    return s;
  }
  static EncoderSpec loopback(int dim = 16) {
    EncoderSpec s;
    s.kind = EncoderKind::loopback;
    s.dim = dim;
    return s;
  }

  void validate() const {
    if (dim < 4) throw Error("encoder dimension must be at least 4");
    switch (kind) {
      case EncoderKind::baseline:
        if (grid < 1 || dim != 3 * grid * grid) throw Error("baseline encoder needs K = 3 * grid^2");
        break;
      case EncoderKind::ncc:
        if (patch_size < 8 || dim != (patch_size / 4) * (patch_size / 4))
          throw Error("ncc encoder needs K = (patch_size / 4)^2");
        break;
      case EncoderKind::oracle:
        if (dim != 8) throw Error("oracle encoder has K = 8");
        if (!(wavelength > 0.0) || sigma < 0.0) throw Error("invalid oracle parameters");
        break;
      case EncoderKind::external:
        if (command.empty()) throw Error("external encoder needs a bridge command");
        break;
      case EncoderKind::loopback:
        break;
    }
  }
};

/// Normalises in place; an all-zero vector becomes e1.
inline void l2_normalize(std::vector<float>& v) {
  double ss = 0.0;
  for (float x : v) ss += static_cast<double>(x) * x;
  if (ss <= 0.0 || !std::isfinite(ss)) {
    std::fill(v.begin(), v.end(), 0.0f);
    if (!v.empty()) v[0] = 1.0f;
    return;
  }
  const double inv = 1.0 / std::sqrt(ss);
  for (float& x : v) x = static_cast<float>(x * inv);
}

inline double cosine(std::span<const float> a, std::span<const float> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa <= 0.0 || bb <= 0.0) return 0.0;
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

inline double cosine(const FeatureVector& a, const FeatureVector& b) {
  if (a.dim() != b.dim()) throw Error("feature dimension mismatch");
  return cosine(std::span<const float>(a.values), std::span<const float>(b.values));
}

namespace detail {

inline std::vector<double> gray_plane(const Raster& r) {
  std::vector<double> g(r.pixel_count());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (r.channels == 1) {
      g[i] = r.pixels[i];
    } else {
      const auto* p = &r.pixels[i * 3];
      g[i] = luma(p[0], p[1], p[2]);
    }
  }
  return g;
}

inline std::vector<float> baseline_features(const Raster& patch, int grid) {
  const int w = patch.width;
  const int h = patch.height;
  std::vector<double> z = gray_plane(patch);
  double mean = 0.0;
  for (double v : z) mean += v;
  mean /= static_cast<double>(z.size());
  double var = 0.0;
  for (double v : z) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(z.size()));
  for (double& v : z) v = (v - mean) / (sd + 1e-6);

  auto zat = [&](int x, int y) { return z[static_cast<std::size_t>(y) * w + x]; };
  const std::size_t cells = static_cast<std::size_t>(grid) * grid;
  std::vector<double> sums(3 * cells, 0.0);
  std::vector<int> counts(cells, 0);
  for (int y = 0; y < h; ++y) {
    const int cy = std::min(grid - 1, y * grid / h);
    for (int x = 0; x < w; ++x) {
      const int cx = std::min(grid - 1, x * grid / w);
      const std::size_t c = static_cast<std::size_t>(cy) * grid + cx;
      const int xl = std::max(0, x - 1), xr = std::min(w - 1, x + 1);
      const int yu = std::max(0, y - 1), yd = std::min(h - 1, y + 1);
      const double gx = (zat(xr, y) - zat(xl, y)) / std::max(1, xr - xl);
      const double gy = (zat(x, yd) - zat(x, yu)) / std::max(1, yd - yu);
      sums[c] += zat(x, y);
      sums[cells + c] += gx;
      sums[2 * cells + c] += gy;
      ++counts[c];
    }
  }
  std::vector<float> out(3 * cells);
  for (std::size_t c = 0; c < cells; ++c) {
    const double n = std::max(1, counts[c]);
    out[c] = static_cast<float>(sums[c] / n);
    out[cells + c] = static_cast<float>(sums[cells + c] / n);
    out[2 * cells + c] = static_cast<float>(sums[2 * cells + c] / n);
  }
  return out;
}

inline std::vector<float> ncc_features(const Raster& patch) {
  const int bw = patch.width / 4;
  const int bh = patch.height / 4;
  const std::vector<double> g = gray_plane(patch);
  std::vector<double> blocks(static_cast<std::size_t>(bw) * bh, 0.0);
  for (int by = 0; by < bh; ++by)
    for (int bx = 0; bx < bw; ++bx) {
      double s = 0.0;
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
          s += g[static_cast<std::size_t>(by * 4 + y) * patch.width + bx * 4 + x];
      blocks[static_cast<std::size_t>(by) * bw + bx] = s / 16.0;
    }
  double mean = 0.0;
  for (double v : blocks) mean += v;
  mean /= static_cast<double>(blocks.size());
  std::vector<float> out(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) out[i] = static_cast<float>(blocks[i] - mean);
  return out;
}

// Standard normal from two uniform draws (Box-Muller); portable across
// standard libraries, unlike std::normal_distribution.
inline double gaussian(std::mt19937_64& rng) {
  constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
  const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * scale;
  const double u2 = static_cast<double>(rng() >> 11) * scale;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

inline std::vector<float> oracle_code(Vec2 p, std::uint64_t key, const EncoderSpec& spec) {
  std::vector<double> code(8);
  const double k = 2.0 * kPi / spec.wavelength;
  for (int d = 0; d < 4; ++d) {
    const double a = d * kPi / 4.0;
    const double phase = k * (p.x * std::cos(a) + p.y * std::sin(a));
    code[2 * d] = 0.5 * std::cos(phase);
    code[2 * d + 1] = 0.5 * std::sin(phase);
  }
  if (spec.sigma > 0.0) {
    std::mt19937_64 rng(mix64(mix64(mix64(spec.seed, key), std::bit_cast<std::uint64_t>(p.x)),
                              std::bit_cast<std::uint64_t>(p.y)));
    for (double& c : code) c += spec.sigma * gaussian(rng);
  }
  return {code.begin(), code.end()};
}

inline float mean_byte(const Raster& r) {
  double s = 0.0;
  for (auto v : r.pixels) s += v;
  return static_cast<float>(s / static_cast<double>(r.pixels.size()));
}

}  // namespace detail

/// Raw (unnormalised) output of a built-in encoder. For loopback this is the
/// exact vector a bridge would send back.
inline std::vector<float> encode_raw(const EncoderSpec& spec, const Patch& patch) {
  switch (spec.kind) {
    case EncoderKind::baseline:
      return detail::baseline_features(patch.pixels, spec.grid);
    case EncoderKind::ncc:
      if (patch.pixels.width != spec.patch_size || patch.pixels.height != spec.patch_size)
        throw Error("ncc encoder patch size mismatch");
      return detail::ncc_features(patch.pixels);
    case EncoderKind::oracle:
      if (!patch.source_point) throw Error("oracle encoder needs ground-truth patch positions");
      return detail::oracle_code(*patch.source_point, patch.noise_key, spec);
    case EncoderKind::loopback:
      return std::vector<float>(static_cast<std::size_t>(spec.dim), detail::mean_byte(patch.pixels));
    case EncoderKind::external:
      throw Error("external encoder runs in batches; use encode_batch");
  }
  throw Error("unknown encoder");
}

/// Encodes one patch into a unit-L2 feature vector.
inline FeatureVector encode(const EncoderSpec& spec, const Patch& patch) {
  spec.validate();
  FeatureVector f{encode_raw(spec, patch)};
  l2_normalize(f.values);
  return f;
}

inline protocol::PatchBatch make_patch_batch(std::span<const Patch> patches) {
  protocol::PatchBatch b;
  b.count = static_cast<std::uint32_t>(patches.size());
  if (!patches.empty()) {
    const Raster& first = patches.front().pixels;
    b.height = static_cast<std::uint32_t>(first.height);
    b.width = static_cast<std::uint32_t>(first.width);
    b.channels = static_cast<std::uint32_t>(first.channels);
  }
  b.samples.reserve(patches.size() * b.patch_bytes());
  for (const auto& p : patches) {
    if (static_cast<std::uint32_t>(p.pixels.width) != b.width ||
        static_cast<std::uint32_t>(p.pixels.height) != b.height ||
        static_cast<std::uint32_t>(p.pixels.channels) != b.channels)
      throw Error("patches in one batch must share a shape");
    b.samples.insert(b.samples.end(), p.pixels.pixels.begin(), p.pixels.pixels.end());
  }
  return b;
}

/// Sends a batch through the external bridge and returns the vectors exactly
/// as the bridge wrote them (no normalisation). The workdir must not be shared
/// by concurrent calls.
inline std::vector<FeatureVector> encode_batch_external(const EncoderSpec& spec,
                                                        std::span<const Patch> patches,
                                                        const std::filesystem::path& workdir) {
  if (spec.kind != EncoderKind::external) throw Error("encoder is not external");
  spec.validate();
  std::filesystem::create_directories(workdir);
  const auto request = workdir / "patches.bin";
  const auto response = workdir / "features.bin";
  std::filesystem::remove(response);
  protocol::write_patches(request, make_patch_batch(patches));
  const int status = protocol::run_bridge(spec.command, request, response);
  if (status != 0) throw Error("bridge exited with status " + std::to_string(status));
  const auto batch = protocol::read_features(response);
  if (batch.count != patches.size())
    throw Error("bridge returned " + std::to_string(batch.count) + " vectors for " +
                std::to_string(patches.size()) + " patches");
  if (batch.dim != static_cast<std::uint32_t>(spec.dim))
    throw Error("bridge returned K=" + std::to_string(batch.dim) + ", expected " +
                std::to_string(spec.dim));
  std::vector<FeatureVector> out(batch.count);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i].values.assign(batch.row(i), batch.row(i) + batch.dim);
  return out;
}

/// Encodes a whole list: built-in encoders per patch (optionally threaded),
/// external encoders through one bridge call. Always unit-L2.
inline std::vector<FeatureVector> encode_all(const EncoderSpec& spec, std::span<const Patch> patches,
                                             const std::filesystem::path& workdir,
                                             unsigned threads = 1) {
  spec.validate();
  if (spec.kind == EncoderKind::external) {
    auto out = encode_batch_external(spec, patches, workdir);
    for (auto& f : out) l2_normalize(f.values);
    return out;
  }
  std::vector<FeatureVector> out(patches.size());
  parallel_for(patches.size(), threads, [&](std::size_t i) { out[i] = encode(spec, patches[i]); });
  return out;
}

}  // namespace semstitch
