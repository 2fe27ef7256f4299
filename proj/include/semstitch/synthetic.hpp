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

// Procedural test slides and ground-truth fragmentation.

#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "semstitch/mosaic.hpp"

namespace semstitch {

struct SyntheticSlide {
  Raster image;
  Mask truth;  ///< generator's tissue silhouette
};

namespace detail {

inline double unit_uniform(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * (1.0 / 9007199254740992.0);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * unit_uniform(rng());
}

inline double lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
  return unit_uniform(mix64(seed, (static_cast<std::uint64_t>(ix) << 32) ^ static_cast<std::uint32_t>(iy)));
}

// Smoothstep-interpolated value noise in [0, 1); x, y in lattice cells.
inline double value_noise(std::uint64_t seed, double x, double y) {
  const double fx0 = std::floor(x), fy0 = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx0), iy = static_cast<std::int64_t>(fy0);
  double fx = x - fx0, fy = y - fy0;
  fx = fx * fx * (3.0 - 2.0 * fx);
  fy = fy * fy * (3.0 - 2.0 * fy);
  const double a = lattice(seed, ix, iy), b = lattice(seed, ix + 1, iy);
  const double c = lattice(seed, ix, iy + 1), d = lattice(seed, ix + 1, iy + 1);
  return (a + (b - a) * fx) * (1.0 - fy) + (c + (d - c) * fx) * fy;
}

// Octave sum normalised to [0, 1); each octave halves the cell size and
// scales the amplitude by `gain`.
inline double fbm(std::uint64_t seed, double x_um, double y_um, double cell_um, int octaves, double gain) {
  double sum = 0.0, amp = 1.0, total = 0.0, cell = cell_um;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * value_noise(mix64(seed, static_cast<std::uint64_t>(o)), x_um / cell, y_um / cell);
    total += amp;
    amp *= gain;
    cell *= 0.5;
  }
  return sum / total;
}

struct BlobShape {
  Vec2 center;
  double radius = 0.0;
  std::array<double, 6> amp{};
  std::array<double, 6> phase{};

  double radius_at(double phi, double limit) const {
    double r = 1.0;
    for (std::size_t k = 0; k < amp.size(); ++k) r += amp[k] * std::cos(static_cast<double>(k + 2) * phi + phase[k]);
    return std::min(radius * r, limit);
  }
};

inline Mask blob_mask(const BlobShape& s, int size) {
  Mask m(size, size);
  const double limit = 0.47 * size;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const Vec2 d = Vec2{x + 0.5, y + 0.5} - s.center;
      m.set(x, y, norm(d) < s.radius_at(std::atan2(d.y, d.x), limit));
    }
  return m;
}

}  // namespace detail

/// H&E-like textured tissue blob on a white background. Texture scales are
/// physical (micrometres), so the same seed renders the same tissue at any
/// `mpp`. The silhouette is re-drawn until it covers 40-80% of the canvas.
inline SyntheticSlide generate_synthetic_slide(std::uint64_t seed, int size, double mpp = 1.0) {
  if (size < 16) throw Error("synthetic slide too small");
  SyntheticSlide out;
  for (std::uint64_t attempt = 0;; ++attempt) {
    std::mt19937_64 rng(mix64(seed, 0xb10bULL + attempt));
    detail::BlobShape s;
    s.center = {size * detail::uniform(rng, 0.46, 0.54), size * detail::uniform(rng, 0.46, 0.54)};
    s.radius = size * detail::uniform(rng, 0.38, 0.46);
    for (std::size_t k = 0; k < s.amp.size(); ++k) {
      s.amp[k] = detail::uniform(rng, 0.0, 0.12) / std::pow(static_cast<double>(k + 1), 0.8);
      s.phase[k] = detail::uniform(rng, 0.0, 2.0 * kPi);
    }
    out.truth = detail::blob_mask(s, size);
    const double frac = static_cast<double>(out.truth.count()) / (static_cast<double>(size) * size);
    if (frac >= 0.40 && frac <= 0.80) break;
    if (attempt > 1000) throw Error("cannot draw a slide silhouette");
  }

  // Optical densities of haematoxylin and eosin (Beer-Lambert mixing).
  constexpr double kH[3] = {0.65, 0.70, 0.29};
  constexpr double kE[3] = {0.07, 0.99, 0.11};
  const std::uint64_t se = mix64(seed, 0xe0ULL), sh = mix64(seed, 0x4aULL), sl = mix64(seed, 0x1aULL);
  out.image = Raster(size, size, 3, mpp, 255);
  parallel_for(static_cast<std::size_t>(size), 1, [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < size; ++x) {
      if (!out.truth.at(x, y)) continue;
      const double ux = (x + 0.5) * mpp, uy = (y + 0.5) * mpp;
      const double layout = detail::fbm(sl, ux, uy, 700.0, 2, 0.5);
      const double e = 0.30 + 0.55 * detail::fbm(se, ux, uy, 220.0, 5, 0.45) + 0.25 * layout;
      const double nuc = detail::fbm(sh, ux, uy, 90.0, 4, 0.4);
      const double h = 0.15 + 1.6 * std::max(0.0, nuc - 0.45) + 0.35 * (1.0 - layout);
      for (int c = 0; c < 3; ++c)
        out.image.at(x, y, c) = round_sample(255.0 * std::exp(-(h * kH[c] + e * kE[c])));
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Fragmentation

enum class Layout { halves, quadrants, grid };

struct FragmentationSpec {
  Layout layout = Layout::quadrants;
  int rows = 2;
  int cols = 2;
  double gap_um = 0.0;
  double trim_min = 0.0;
  double trim_max = 0.0;
  /// Depth of the notch that shortens a trimmed seam.
  double trim_depth_um = 112.0;
  double rotation_deg = 0.0;    ///< uniform in [-r, r]
  double translation_px = 0.0;  ///< uniform in [-t, t] per axis
  std::uint64_t seed = 42;

  int grid_rows() const { return layout == Layout::halves ? 1 : layout == Layout::quadrants ? 2 : rows; }
  int grid_cols() const { return layout == Layout::halves ? 2 : layout == Layout::quadrants ? 2 : cols; }

  void validate() const {
    if (gap_um < 0.0) throw Error("gap must be non-negative");
    if (trim_min < 0.0 || trim_max > 0.5 || trim_min > trim_max) throw Error("edge trim must lie in [0, 0.5]");
    if (grid_rows() < 1 || grid_cols() < 1) throw Error("grid needs at least one row and column");
    if (rotation_deg < 0.0 || translation_px < 0.0) throw Error("perturbation ranges must be non-negative");
  }
};

struct FragmentTruth {
  std::string id;
  /// Fragment micrometres -> source-slide micrometres.
  RigidTransform to_source;
  Vec2 centroid_um;  ///< tissue centroid, fragment micrometres
};

/// Shared cut between two fragments. `point`/`direction` give the cut line in
/// source micrometres; `normal` points from `a` towards `b`.
struct Seam {
  std::string a;
  std::string b;
  Vec2 point;
  Vec2 direction;
  Vec2 normal;
  double gap_um = 0.0;
};

struct GroundTruth {
  double slide_mpp = 1.0;
  std::vector<FragmentTruth> fragments;
  std::vector<Seam> seams;

  const FragmentTruth& fragment(const std::string& id) const {
    for (const auto& f : fragments)
      if (f.id == id) return f;
    throw Error("no ground truth for fragment " + id);
  }
  /// Seam between a and b, either order.
  const Seam* seam(const std::string& a, const std::string& b) const {
    for (const auto& s : seams)
      if ((s.a == a && s.b == b) || (s.a == b && s.b == a)) return &s;
    return nullptr;
  }
};

struct SlideFragment {
  std::string id;
  Raster image;
  Mask truth;
};

struct FragmentSet {
  std::vector<SlideFragment> fragments;
  GroundTruth truth;
};

namespace detail {

// Erases a notch of `length` along one cut side, `depth` deep, from the end
// picked by `from_low`.
inline void trim_side(Raster& img, Mask& m, int side, double frac, int depth, bool from_low) {
  // side: 0 left, 1 right, 2 top, 3 bottom
  const bool vertical = side < 2;
  const int len = vertical ? m.height : m.width;
  int lo = len, hi = -1;
  for (int s = 0; s < len; ++s) {
    const int x = vertical ? (side == 0 ? 0 : m.width - 1) : s;
    const int y = vertical ? s : (side == 2 ? 0 : m.height - 1);
    if (m.at(x, y)) {
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
  }
  if (hi < lo) return;
  const int cut = static_cast<int>(std::lround(frac * (hi - lo + 1)));
  if (cut <= 0) return;
  const int a = from_low ? lo : hi - cut + 1;
  const int b = from_low ? lo + cut : hi + 1;
  for (int s = a; s < b; ++s)
    for (int d = 0; d < depth; ++d) {
      const int x = vertical ? (side == 0 ? d : m.width - 1 - d) : s;
      const int y = vertical ? s : (side == 2 ? d : m.height - 1 - d);
      if (!m.contains(x, y)) continue;
      m.set(x, y, false);
      for (int c = 0; c < img.channels; ++c) img.at(x, y, c) = 255;
    }
}

inline Vec2 mask_centroid(const Mask& m, double mpp) {
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.at(x, y)) {
        sx += x + 0.5;
        sy += y + 0.5;
        ++n;
      }
  if (n == 0) return {};
  return {mpp * sx / static_cast<double>(n), mpp * sy / static_cast<double>(n)};
}

}  // namespace detail

/// Cuts `slide` along straight lines, removes a `gap_um` strip centred on
/// each cut, notches each cut side by a random fraction of its tissue
/// length, and applies a random rigid perturbation per fragment.
inline FragmentSet fragment_slide(const SyntheticSlide& slide, const FragmentationSpec& spec) {
  spec.validate();
  const Raster& img = slide.image;
  const double mpp = img.mpp;
  const int rows = spec.grid_rows(), cols = spec.grid_cols();
  const double gap = spec.gap_um / mpp;
  const int depth = static_cast<int>(std::lround(spec.trim_depth_um / mpp));

  std::vector<double> xs(cols + 1), ys(rows + 1);
  for (int c = 0; c <= cols; ++c) xs[c] = img.width * static_cast<double>(c) / cols;
  for (int r = 0; r <= rows; ++r) ys[r] = img.height * static_cast<double>(r) / rows;

  FragmentSet out;
  out.truth.slide_mpp = mpp;
  auto id_of = [&](int r, int c) { return "f" + std::to_string(r * cols + c); };

  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int x0 = static_cast<int>(std::lround(c > 0 ? xs[c] + gap / 2 : xs[c]));
      const int x1 = static_cast<int>(std::lround(c < cols - 1 ? xs[c + 1] - gap / 2 : xs[c + 1]));
      const int y0 = static_cast<int>(std::lround(r > 0 ? ys[r] + gap / 2 : ys[r]));
      const int y1 = static_cast<int>(std::lround(r < rows - 1 ? ys[r + 1] - gap / 2 : ys[r + 1]));
      if (x1 - x0 < 8 || y1 - y0 < 8) throw Error("slide too small for this layout and gap");

      SlideFragment f;
      f.id = id_of(r, c);
      Raster crop(x1 - x0, y1 - y0, img.channels, mpp);
      Mask mcrop(x1 - x0, y1 - y0);
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
          for (int ch = 0; ch < img.channels; ++ch) crop.at(x - x0, y - y0, ch) = img.at(x, y, ch);
          mcrop.set(x - x0, y - y0, slide.truth.at(x, y));
        }

      std::mt19937_64 rng(mix64(spec.seed, 0xf7a9ULL + static_cast<std::uint64_t>(r * cols + c)));
      const bool sides[4] = {c > 0, c < cols - 1, r > 0, r < rows - 1};
      for (int side = 0; side < 4; ++side) {
        const double frac = detail::uniform(rng, spec.trim_min, spec.trim_max);
        const bool from_low = (rng() & 1u) != 0;
        if (sides[side]) detail::trim_side(crop, mcrop, side, frac, depth, from_low);
      }

      // crop pixel -> slide pixel
      RigidTransform crop_to_slide = RigidTransform::translation({static_cast<double>(x0), static_cast<double>(y0)});
      const double theta = deg_to_rad(detail::uniform(rng, -spec.rotation_deg, spec.rotation_deg));
      const double tx = detail::uniform(rng, -spec.translation_px, spec.translation_px);
      const double ty = detail::uniform(rng, -spec.translation_px, spec.translation_px);
      if (theta != 0.0 || tx != 0.0 || ty != 0.0) {
        const Vec2 mid{crop.width / 2.0, crop.height / 2.0};
        RigidTransform spin{theta, {}};
        spin.t = mid - spin.rotate(mid);
        const RenderLayer layer{&crop, &mcrop, 1.0, spin};
        Canvas cv = render_layers(std::span<const RenderLayer>(&layer, 1), mpp, 4e9, 16);
        // Integer translation as asymmetric white padding.
        const int pad = static_cast<int>(std::ceil(spec.translation_px));
        const int dx = pad + static_cast<int>(std::lround(tx));
        const int dy = pad + static_cast<int>(std::lround(ty));
        Raster moved(cv.image.width + 2 * pad, cv.image.height + 2 * pad, cv.image.channels, mpp, 255);
        Mask mm(moved.width, moved.height);
        for (int y = 0; y < cv.image.height; ++y)
          for (int x = 0; x < cv.image.width; ++x) {
            for (int ch = 0; ch < moved.channels; ++ch) moved.at(x + dx, y + dy, ch) = cv.image.at(x, y, ch);
            mm.set(x + dx, y + dy, cv.labels[static_cast<std::size_t>(y) * cv.image.width + x] >= 0);
          }
        // fragment pixel -> crop pixel
        const RigidTransform place =
            RigidTransform::translation({dx - cv.origin.x, dy - cv.origin.y}) * spin;
        crop_to_slide = crop_to_slide * place.inverse();
        f.image = std::move(moved);
        f.truth = std::move(mm);
      } else {
        f.image = std::move(crop);
        f.truth = std::move(mcrop);
      }

      FragmentTruth t;
      t.id = f.id;
      t.to_source = crop_to_slide.scaled(mpp);
      t.centroid_um = detail::mask_centroid(f.truth, mpp);
      out.truth.fragments.push_back(t);
      out.fragments.push_back(std::move(f));
    }
  }

  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (c + 1 < cols)
        out.truth.seams.push_back({id_of(r, c), id_of(r, c + 1), {xs[c + 1] * mpp, ys[r] * mpp},
                                   {0.0, 1.0}, {1.0, 0.0}, spec.gap_um});
      if (r + 1 < rows)
        out.truth.seams.push_back({id_of(r, c), id_of(r + 1, c), {xs[c] * mpp, ys[r + 1] * mpp},
                                   {1.0, 0.0}, {0.0, 1.0}, spec.gap_um});
    }
  return out;
}

inline nlohmann::ordered_json ground_truth_to_json(const GroundTruth& gt) {
  nlohmann::ordered_json j;
  j["slide_mpp"] = gt.slide_mpp;
  auto frags = nlohmann::ordered_json::array();
  for (const auto& f : gt.fragments)
    frags.push_back({{"id", f.id},
                     {"theta_deg", rad_to_deg(f.to_source.theta)},
                     {"tx_um", f.to_source.t.x},
                     {"ty_um", f.to_source.t.y},
                     {"centroid_um", {f.centroid_um.x, f.centroid_um.y}}});
  j["fragments"] = frags;
  auto seams = nlohmann::ordered_json::array();
  for (const auto& s : gt.seams)
    seams.push_back({{"a", s.a},
                     {"b", s.b},
                     {"point_um", {s.point.x, s.point.y}},
                     {"direction", {s.direction.x, s.direction.y}},
                     {"normal", {s.normal.x, s.normal.y}},
                     {"gap_um", s.gap_um}});
  j["seams"] = seams;
  return j;
}

inline GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  GroundTruth gt;
  gt.slide_mpp = j.at("slide_mpp").get<double>();
  for (const auto& f : j.at("fragments")) {
    FragmentTruth t;
    t.id = f.at("id").get<std::string>();
    t.to_source = {deg_to_rad(f.at("theta_deg").get<double>()),
                   {f.at("tx_um").get<double>(), f.at("ty_um").get<double>()}};
    t.centroid_um = {f.at("centroid_um")[0].get<double>(), f.at("centroid_um")[1].get<double>()};
    gt.fragments.push_back(t);
  }
  for (const auto& s : j.at("seams")) {
    Seam m;
    m.a = s.at("a").get<std::string>();
    m.b = s.at("b").get<std::string>();
    m.point = {s.at("point_um")[0].get<double>(), s.at("point_um")[1].get<double>()};
    m.direction = {s.at("direction")[0].get<double>(), s.at("direction")[1].get<double>()};
    m.normal = {s.at("normal")[0].get<double>(), s.at("normal")[1].get<double>()};
    m.gap_um = s.at("gap_um").get<double>();
    gt.seams.push_back(m);
  }
  return gt;
}

}  // namespace semstitch
