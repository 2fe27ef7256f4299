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

#include <optional>
#include <vector>

#include "semstitch/contour.hpp"

namespace semstitch {

/// Oriented square sampling window attached to a boundary chain.
///
/// The x axis of the patch runs along `tangent`, the y axis along `normal`
/// (pointing into the tissue). Row 0 of the patch faces the boundary.
struct PatchFrame {
  Vec2 center;
  Vec2 tangent{1.0, 0.0};
  Vec2 normal{0.0, 1.0};
  int size = 224;
  std::size_t boundary_index = 0;
  /// Boundary-side reference point: the midpoint of the chord that defines
  /// the frame, moved half a pixel outwards onto the tissue edge. Opposing
  /// frames across a cut share this point, so it is the correspondence point
  /// used for alignment.
  Vec2 edge_point;
};

struct Patch {
  PatchFrame frame;
  Raster pixels;
  /// Position of `frame.edge_point` in source-slide coordinates, when the
  /// fragment carries ground truth (consumed by the oracle encoder only).
  std::optional<Vec2> source_point;
  /// Distinguishes patches that share a source point (opposite sides of a
  /// cut); keys the oracle encoder's noise.
  std::uint64_t noise_key = 0;
};

struct FramePlanOptions {
  int patch_size = 224;
  double stride = 112.0;
  double inward_shift = 10.0;
};

namespace detail {

inline bool mask_at(const Mask& m, Vec2 p) {
  return m.test(static_cast<int>(std::floor(p.x)), static_cast<int>(std::floor(p.y)));
}

// Fraction of the oriented square that lies on the image canvas.
inline double canvas_coverage(const PatchFrame& f, int width, int height) {
  constexpr int n = 16;
  int inside = 0;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double u = ((i + 0.5) / n - 0.5) * f.size;
      const double v = ((j + 0.5) / n - 0.5) * f.size;
      const Vec2 p = f.center + u * f.tangent + v * f.normal;
      inside += p.x >= 0.0 && p.y >= 0.0 && p.x < width && p.y < height;
    }
  }
  return static_cast<double>(inside) / (n * n);
}

// Tissue pixels in a 5x5 probe on the side of the chord that `n` points to.
inline int probe_occupancy(const Mask& m, Vec2 mid, Vec2 t, Vec2 n) {
  int count = 0;
  for (int a = 1; a <= 5; ++a)
    for (int b = -2; b <= 2; ++b) count += mask_at(m, mid + static_cast<double>(a) * n + static_cast<double>(b) * t);
  return count;
}

}  // namespace detail

/// Plans patch frames along the chain: anchors every `stride` of arc length
/// from index 0, each frame spanning the chord to the point `patch_size`
/// further along, with the patch placed inside the tissue and its
/// boundary-side edge `inward_shift` pixels in from the boundary.
inline std::vector<PatchFrame> plan_frames(const BoundaryChain& chain, const Mask& mask,
                                           const FramePlanOptions& opt = {}) {
  if (opt.patch_size < 2) throw Error("patch size must be at least 2");
  if (!(opt.stride >= 1.0)) throw Error("stride must be at least 1");
  std::vector<PatchFrame> frames;
  const std::size_t n = chain.size();
  if (n < 2) return frames;

  std::vector<double> cum(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) cum[i] = cum[i - 1] + chain.step_length(i - 1);
  const double total = cum[n - 1] + chain.step_length(n - 1);
  if (total < opt.patch_size) return frames;

  // Index of the first point at or beyond arc position s (s may exceed total).
  auto index_at = [&](double s) {
    s = std::fmod(s, total);
    const auto it = std::lower_bound(cum.begin(), cum.end(), s - 1e-9);
    return it == cum.end() ? std::size_t{0} : static_cast<std::size_t>(it - cum.begin());
  };

  const double half = opt.patch_size / 2.0;
  for (std::size_t m = 0;; ++m) {
    const double s = static_cast<double>(m) * opt.stride;
    if (s >= total - 1e-9) break;
    const std::size_t ia = index_at(s);
    if (m > 0 && ia == 0) break;  // wrapped past the start
    const std::size_t ib = index_at(cum[ia] + opt.patch_size);
    const Vec2 a = pixel_center(chain[ia]);
    const Vec2 b = pixel_center(chain[ib]);
    const Vec2 chord = b - a;
    if (norm(chord) < 1e-9) continue;
    const Vec2 t = normalized(chord);
    const Vec2 mid = 0.5 * (a + b);

    Vec2 nrm = perp(t);
    const bool plus_in = detail::mask_at(mask, mid + opt.inward_shift * nrm);
    const bool minus_in = detail::mask_at(mask, mid - opt.inward_shift * nrm);
    if (plus_in == minus_in) {
      const int plus = detail::probe_occupancy(mask, mid, t, nrm);
      const int minus = detail::probe_occupancy(mask, mid, t, -1.0 * nrm);
      if (minus > plus) nrm = -1.0 * nrm;
    } else if (minus_in) {
      nrm = -1.0 * nrm;
    }

    PatchFrame f;
    f.tangent = t;
    f.normal = nrm;
    f.size = opt.patch_size;
    f.boundary_index = ia;
    f.center = mid + (opt.inward_shift + half) * nrm;
    f.edge_point = mid - 0.5 * nrm;
    if (detail::canvas_coverage(f, mask.width, mask.height) < 0.5) continue;
    frames.push_back(f);
  }
  return frames;
}

/// Bilinear sample at continuous coordinates; samples that fall off the
/// canvas read as `fill`.
inline double sample_bilinear(const Raster& img, Vec2 p, int channel, double fill = 255.0) {
  const double x = p.x - 0.5;
  const double y = p.y - 0.5;
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  const double fx = x - fx0;
  const double fy = y - fy0;
  auto px = [&](int xx, int yy) -> double {
    return img.contains(xx, yy) ? img.at(xx, yy, channel) : fill;
  };
  const double top = fx == 0.0 ? px(x0, y0) : (1.0 - fx) * px(x0, y0) + fx * px(x0 + 1, y0);
  if (fy == 0.0) return top;
  const double bot = fx == 0.0 ? px(x0, y0 + 1) : (1.0 - fx) * px(x0, y0 + 1) + fx * px(x0 + 1, y0 + 1);
  return (1.0 - fy) * top + fy * bot;
}

inline std::uint8_t round_sample(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

/// Extracts the oriented square described by `frame`. Off-canvas samples are
/// white.
inline Patch extract(const Raster& img, const PatchFrame& frame) {
  if (frame.size < 2) throw Error("patch size must be at least 2");
  Patch patch;
  patch.frame = frame;
  patch.pixels = Raster(frame.size, frame.size, img.channels, img.mpp);
  const double half = frame.size / 2.0;
  for (int j = 0; j < frame.size; ++j) {
    for (int i = 0; i < frame.size; ++i) {
      const Vec2 p = frame.center + (i + 0.5 - half) * frame.tangent + (j + 0.5 - half) * frame.normal;
      for (int c = 0; c < img.channels; ++c)
        patch.pixels.at(i, j, c) = round_sample(sample_bilinear(img, p, c));
    }
  }
  return patch;
}

/// The patch the same frame yields when the boundary is walked the other
/// way (tangent reversed): columns mirrored.
inline Patch mirrored(const Patch& p) {
  Patch out = p;
  out.frame.tangent = -1.0 * p.frame.tangent;
  const int w = p.pixels.width;
  for (int j = 0; j < p.pixels.height; ++j)
    for (int i = 0; i < w; ++i)
      for (int c = 0; c < p.pixels.channels; ++c) out.pixels.at(i, j, c) = p.pixels.at(w - 1 - i, j, c);
  return out;
}

}  // namespace semstitch
