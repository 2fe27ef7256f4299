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

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "semstitch/common.hpp"

namespace semstitch {

/// 8-bit raster, row-major, channel-interleaved, with physical resolution.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;
  double mpp = 0.25;

  Raster() = default;
  Raster(int w, int h, int c, double mpp_ = 0.25, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w) * h * c, fill), mpp(mpp_) {
    if (w <= 0 || h <= 0) throw Error("zero-sized image");
    if (c != 1 && c != 3) throw Error("unsupported channel count");
    if (!(mpp_ > 0.0)) throw Error("mpp must be positive");
  }

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  std::uint8_t at(int x, int y, int c = 0) const { return pixels[index(x, y, c)]; }
  std::uint8_t& at(int x, int y, int c = 0) { return pixels[index(x, y, c)]; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

/// Binary tissue mask (true = tissue), same geometry as the raster it segments.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h, bool fill = false)
      : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  /// Out-of-bounds reads are background.
  bool test(int x, int y) const { return contains(x, y) && at(x, y); }
  void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b != 0;
    return n;
  }
};

/// Integer-rounded luma 0.299R + 0.587G + 0.114B.
inline std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return static_cast<std::uint8_t>((299u * r + 587u * g + 114u * b + 500u) / 1000u);
}

inline Raster to_gray(const Raster& img) {
  if (img.channels == 1) return img;
  Raster out(img.width, img.height, 1, img.mpp);
  const std::size_t n = img.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    const auto* p = &img.pixels[i * 3];
    out.pixels[i] = luma(p[0], p[1], p[2]);
  }
  return out;
}

namespace detail {

// One output sample along an axis: weighted sum over contiguous source taps.
struct AxisTaps {
  int first = 0;
  std::vector<double> weights;
};

// Area-average taps when shrinking, bilinear taps when enlarging.
inline std::vector<AxisTaps> axis_taps(int in, int out) {
  std::vector<AxisTaps> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  if (out < in) {
    for (int o = 0; o < out; ++o) {
      const double lo = o * scale;
      const double hi = (o + 1) * scale;
      const int first = static_cast<int>(std::floor(lo));
      const int last = std::min(in - 1, static_cast<int>(std::ceil(hi)) - 1);
      auto& t = taps[static_cast<std::size_t>(o)];
      t.first = first;
      for (int s = first; s <= last; ++s) {
        const double cover = std::min<double>(hi, s + 1) - std::max<double>(lo, s);
        t.weights.push_back(cover / scale);
      }
    }
  } else {
    for (int o = 0; o < out; ++o) {
      const double src = std::clamp((o + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
      const int s0 = std::min(static_cast<int>(std::floor(src)), in - 1);
      const double f = src - s0;
      auto& t = taps[static_cast<std::size_t>(o)];
      t.first = s0;
      if (f > 0.0 && s0 + 1 < in)
        t.weights = {1.0 - f, f};
      else
        t.weights = {1.0};
    }
  }
  return taps;
}

}  // namespace detail

/// Resample to a new resolution. Output size is round(dim * mpp / target),
/// at least 1; area averaging when shrinking, bilinear when enlarging.
inline Raster resample(const Raster& img, double target_mpp) {
  if (!(target_mpp > 0.0)) throw Error("target mpp must be positive");
  if (target_mpp == img.mpp) return img;
  const double ratio = img.mpp / target_mpp;
  const int ow = std::max(1, static_cast<int>(std::lround(img.width * ratio)));
  const int oh = std::max(1, static_cast<int>(std::lround(img.height * ratio)));
  const auto xt = detail::axis_taps(img.width, ow);
  const auto yt = detail::axis_taps(img.height, oh);
  const int c = img.channels;

  // Horizontal pass into a double buffer, then vertical pass with rounding.
  std::vector<double> tmp(static_cast<std::size_t>(ow) * img.height * c);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < ow; ++x) {
      const auto& t = xt[static_cast<std::size_t>(x)];
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t k = 0; k < t.weights.size(); ++k)
          acc += t.weights[k] * img.at(t.first + static_cast<int>(k), y, ch);
        tmp[(static_cast<std::size_t>(y) * ow + x) * c + ch] = acc;
      }
    }
  }
  Raster out(ow, oh, c, target_mpp);
  for (int y = 0; y < oh; ++y) {
    const auto& t = yt[static_cast<std::size_t>(y)];
    for (int x = 0; x < ow; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t k = 0; k < t.weights.size(); ++k)
          acc += t.weights[k] *
                 tmp[((static_cast<std::size_t>(t.first) + k) * ow + x) * c + ch];
        out.at(x, y, ch) = static_cast<std::uint8_t>(std::clamp(std::floor(acc + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

using Histogram = std::array<std::uint64_t, 256>;

inline Histogram gray_histogram(const Raster& img) {
  Histogram h{};
  if (img.channels == 1) {
    for (auto v : img.pixels) ++h[v];
  } else {
    const std::size_t n = img.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
      const auto* p = &img.pixels[i * 3];
      ++h[luma(p[0], p[1], p[2])];
    }
  }
  return h;
}

/// Otsu threshold of a 256-bin histogram. Class 0 is [0, t], class 1 is
/// (t, 255]. Returns the smallest t maximising between-class variance; if no
/// split leaves both classes non-empty, returns the lowest populated level.
///
/// Variance is proportional to (N*S0 - W0*S)^2 / (W0*W1); candidates are
/// compared by exact integer cross-multiplication so ties are real ties.
inline int otsu_threshold(const Histogram& hist) {
  using boost::multiprecision::int256_t;
  std::uint64_t total = 0;
  std::uint64_t total_sum = 0;
  for (int v = 0; v < 256; ++v) {
    total += hist[static_cast<std::size_t>(v)];
    total_sum += hist[static_cast<std::size_t>(v)] * static_cast<std::uint64_t>(v);
  }
  if (total == 0) throw Error("empty histogram");

  int best = -1;
  int256_t best_num = 0;
  int256_t best_den = 1;
  std::uint64_t w0 = 0;
  std::uint64_t s0 = 0;
  for (int t = 0; t < 255; ++t) {
    w0 += hist[static_cast<std::size_t>(t)];
    s0 += hist[static_cast<std::size_t>(t)] * static_cast<std::uint64_t>(t);
    const std::uint64_t w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const int256_t diff = int256_t(total) * s0 - int256_t(w0) * total_sum;
    const int256_t num = diff * diff;
    const int256_t den = int256_t(w0) * w1;
    if (best < 0 || num * best_den > best_num * den) {
      best = t;
      best_num = num;
      best_den = den;
    }
  }
  if (best < 0) {
    for (int v = 0; v < 256; ++v)
      if (hist[static_cast<std::size_t>(v)] != 0) return v;
  }
  return best;
}

inline int otsu_threshold(const Raster& img) { return otsu_threshold(gray_histogram(img)); }

enum class Polarity { automatic, dark_tissue, bright_tissue };

struct SegmentOptions {
  std::size_t min_component_area = 1024;
  Polarity polarity = Polarity::automatic;
};

/// Labels 8-connected foreground components. Returns labels (0 = background,
/// 1..n = component in raster-scan discovery order) and per-label areas
/// (index 0 unused).
inline std::pair<std::vector<int>, std::vector<std::size_t>> label_components(const Mask& m) {
  std::vector<int> labels(m.bits.size(), 0);
  std::vector<std::size_t> areas{0};
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * m.width + x;
      if (!m.bits[i] || labels[i]) continue;
      const int label = static_cast<int>(areas.size());
      std::size_t area = 0;
      labels[i] = label;
      stack.push_back({x, y});
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        ++area;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx;
            const int ny = cy + dy;
            if (!m.contains(nx, ny)) continue;
            const std::size_t j = static_cast<std::size_t>(ny) * m.width + nx;
            if (m.bits[j] && !labels[j]) {
              labels[j] = label;
              stack.push_back({nx, ny});
            }
          }
        }
      }
      areas.push_back(area);
    }
  }
  return {std::move(labels), std::move(areas)};
}

/// Sets every background region that is not 4-connected to the image border.
inline void fill_holes(Mask& m) {
  std::vector<std::uint8_t> outside(m.bits.size(), 0);
  std::vector<std::pair<int, int>> stack;
  auto seed = [&](int x, int y) {
    const std::size_t i = static_cast<std::size_t>(y) * m.width + x;
    if (!m.bits[i] && !outside[i]) {
      outside[i] = 1;
      stack.push_back({x, y});
    }
  };
  for (int x = 0; x < m.width; ++x) {
    seed(x, 0);
    seed(x, m.height - 1);
  }
  for (int y = 0; y < m.height; ++y) {
    seed(0, y);
    seed(m.width - 1, y);
  }
  constexpr int dx[4] = {1, -1, 0, 0};
  constexpr int dy[4] = {0, 0, 1, -1};
  while (!stack.empty()) {
    const auto [cx, cy] = stack.back();
    stack.pop_back();
    for (int k = 0; k < 4; ++k) {
      const int nx = cx + dx[k];
      const int ny = cy + dy[k];
      if (m.contains(nx, ny)) seed(nx, ny);
    }
  }
  for (std::size_t i = 0; i < m.bits.size(); ++i)
    if (!outside[i]) m.bits[i] = 1;
}

/// Drops 8-connected components smaller than `min_area` pixels.
inline void remove_small_components(Mask& m, std::size_t min_area) {
  const auto [labels, areas] = label_components(m);
  for (std::size_t i = 0; i < m.bits.size(); ++i)
    if (labels[i] && areas[static_cast<std::size_t>(labels[i])] < min_area) m.bits[i] = 0;
}

namespace detail {

// Separable square max (dilate) or min (erode) filter; off-canvas reads as
// background.
inline Mask square_filter(const Mask& m, int r, bool dilate) {
  Mask tmp(m.width, m.height), out(m.width, m.height);
  auto pass = [&](const Mask& src, Mask& dst, int dx, int dy) {
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x) {
        bool v = !dilate;
        for (int k = -r; k <= r; ++k) {
          const bool b = src.test(x + k * dx, y + k * dy);
          if (dilate ? b : !b) {
            v = dilate;
            break;
          }
        }
        dst.set(x, y, v);
      }
  };
  pass(m, tmp, 1, 0);
  pass(tmp, out, 0, 1);
  return out;
}

}  // namespace detail

/// Morphological closing with a (2r+1)^2 square.
inline Mask morph_close(const Mask& m, int r) {
  if (r <= 0) return m;
  return detail::square_filter(detail::square_filter(m, r, true), r, false);
}

/// Otsu foreground segmentation with automatic polarity, small-component
/// removal and hole filling.
inline Mask segment_tissue(const Raster& img, const SegmentOptions& opt = {}) {
  const Raster gray = to_gray(img);
  const int t = otsu_threshold(gray_histogram(gray));

  bool tissue_is_dark = true;
  if (opt.polarity == Polarity::bright_tissue) {
    tissue_is_dark = false;
  } else if (opt.polarity == Polarity::automatic) {
    std::size_t border = 0;
    std::size_t dark = 0;
    auto visit = [&](int x, int y) {
      ++border;
      dark += gray.at(x, y) <= t;
    };
    for (int x = 0; x < gray.width; ++x) {
      visit(x, 0);
      if (gray.height > 1) visit(x, gray.height - 1);
    }
    for (int y = 1; y + 1 < gray.height; ++y) {
      visit(0, y);
      if (gray.width > 1) visit(gray.width - 1, y);
    }
    tissue_is_dark = 2 * dark <= border;
  }

  Mask m(gray.width, gray.height);
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) {
    const bool dark = gray.pixels[i] <= t;
    m.bits[i] = (dark == tissue_is_dark) ? 1 : 0;
  }
  remove_small_components(m, opt.min_component_area);
  if (m.count() == 0) throw Error("no tissue found");
  fill_holes(m);
  return m;
}

}  // namespace semstitch
