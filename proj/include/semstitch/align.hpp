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

#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "semstitch/common.hpp"

namespace semstitch {

/// p -> R(theta) p + t. No reflection, no scale.
struct RigidTransform {
  double theta = 0.0;  ///< radians
  Vec2 t;

  static RigidTransform identity() { return {}; }
  static RigidTransform translation(Vec2 t) { return {0.0, t}; }

  double c() const { return std::cos(theta); }
  double s() const { return std::sin(theta); }
  Vec2 rotate(Vec2 p) const {
    const double cs = c(), sn = s();
    return {cs * p.x - sn * p.y, sn * p.x + cs * p.y};
  }
  Vec2 apply(Vec2 p) const { return rotate(p) + t; }

  RigidTransform inverse() const {
    RigidTransform inv{-theta, {}};
    inv.t = -1.0 * inv.rotate(t);
    return inv;
  }
  /// (a * b)(p) = a(b(p)).
  friend RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
    return {wrap_angle(a.theta + b.theta), a.rotate(b.t) + a.t};
  }
  /// Same rotation, translation scaled; re-expresses the pose for images
  /// resampled by `factor` (continuous coordinates scale exactly).
  RigidTransform scaled(double factor) const { return {theta, factor * t}; }
};

struct PointMatch {
  Vec2 moving;
  Vec2 fixed;
};

/// Least-squares rigid fit of src onto dst (closed-form 2-D Procrustes).
inline RigidTransform fit_rigid(std::span<const Vec2> src, std::span<const Vec2> dst) {
  if (src.size() != dst.size()) throw Error("point count mismatch");
  if (src.size() < 2) throw Error("degenerate sample");
  const double n = static_cast<double>(src.size());
  Vec2 ms, md;
  for (std::size_t i = 0; i < src.size(); ++i) {
    ms = ms + src[i];
    md = md + dst[i];
  }
  ms = (1.0 / n) * ms;
  md = (1.0 / n) * md;
  double sxx = 0.0, num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec2 a = src[i] - ms;
    const Vec2 b = dst[i] - md;
    sxx += dot(a, a);
    num += a.x * b.y - a.y * b.x;
    den += a.x * b.x + a.y * b.y;
  }
  // Relative tolerance: coincident points up to rounding of their coordinates.
  const double scale = std::max({1.0, std::abs(ms.x), std::abs(ms.y)});
  if (sxx <= 1e-18 * scale * scale * n) throw Error("degenerate sample");
  RigidTransform r;
  r.theta = std::atan2(num, den);
  r.t = md - r.rotate(ms);
  return r;
}

inline RigidTransform fit_rigid(std::span<const PointMatch> matches) {
  std::vector<Vec2> src, dst;
  src.reserve(matches.size());
  dst.reserve(matches.size());
  for (const auto& m : matches) {
    src.push_back(m.moving);
    dst.push_back(m.fixed);
  }
  return fit_rigid(src, dst);
}

struct RansacConfig {
  double inlier_threshold = 500.0;
  int max_iterations = 1000;
  int sample_size = 6;
  std::uint64_t seed = 42;
  int min_inliers = 6;
  /// Iterations of the robust re-fit applied after the consensus step
  /// (0 = plain re-fit on all consensus inliers).
  int polish_iterations = 20;
  unsigned threads = 1;

  void validate() const {
    if (sample_size < 2) throw Error("sample size must be at least 2");
    if (!(inlier_threshold > 0.0)) throw Error("inlier threshold must be positive");
    if (max_iterations < 1) throw Error("need at least one iteration");
  }
};

struct RansacResult {
  RigidTransform transform;
  std::vector<std::uint8_t> inliers;  ///< final inlier mask, one per match
  std::size_t inlier_count = 0;
  std::size_t consensus_count = 0;    ///< inliers of the best sampled model
  int best_iteration = -1;
  std::vector<std::size_t> sample_counts;  ///< inlier count per iteration
};

namespace detail {

inline std::size_t bounded(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do v = rng();
  while (v >= limit);
  return static_cast<std::size_t>(v % n);
}

// Draw for iteration i depends only on (seed, i).
inline std::vector<std::size_t> draw_sample(std::uint64_t seed, int iteration, std::size_t n,
                                            std::size_t k) {
  std::mt19937_64 rng(mix64(seed, static_cast<std::uint64_t>(iteration)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + bounded(rng, n - i)]);
  idx.resize(k);
  return idx;
}

inline double residual(const RigidTransform& m, const PointMatch& pm) {
  return norm(m.apply(pm.moving) - pm.fixed);
}

inline std::vector<PointMatch> select(std::span<const PointMatch> all, const std::vector<std::uint8_t>& mask) {
  std::vector<PointMatch> out;
  for (std::size_t i = 0; i < all.size(); ++i)
    if (mask[i]) out.push_back(all[i]);
  return out;
}

}  // namespace detail

/// RANSAC over rigid transforms. Each iteration fits `sample_size` distinct
/// matches drawn from a stream keyed by (seed, iteration) and counts
/// residuals within the threshold; the best count wins (ties: earlier
/// iteration). The winner is re-fit on its inliers, then optionally polished
/// by a local consensus search inside that inlier set: the radius is halved
/// each round (floor: 1% of the threshold), every drawn hypothesis and the
/// current model are re-scored at the new radius, and the model is re-fit on
/// the best one's matches. Shrinking stops before fewer than `sample_size`
/// matches would remain. Matches that are only loosely consistent (a wide
/// threshold on small fragments) then stop biasing the final pose.
inline RansacResult ransac_rigid(std::span<const PointMatch> matches, const RansacConfig& cfg) {
  cfg.validate();
  const std::size_t n = matches.size();
  const std::size_t k = static_cast<std::size_t>(cfg.sample_size);
  if (n < k) throw Error("no consensus: fewer matches than sample size");

  struct Trial {
    RigidTransform model;
    std::size_t count = 0;
  };
  std::vector<Trial> trials(static_cast<std::size_t>(cfg.max_iterations));
  parallel_for(trials.size(), cfg.threads, [&](std::size_t i) {
    const auto idx = detail::draw_sample(cfg.seed, static_cast<int>(i), n, k);
    std::vector<Vec2> src, dst;
    for (auto j : idx) {
      src.push_back(matches[j].moving);
      dst.push_back(matches[j].fixed);
    }
    try {
      trials[i].model = fit_rigid(src, dst);
    } catch (const Error&) {
      return;  // degenerate draw scores zero
    }
    std::size_t count = 0;
    for (const auto& m : matches) count += detail::residual(trials[i].model, m) <= cfg.inlier_threshold;
    trials[i].count = count;
  });

  RansacResult res;
  res.sample_counts.reserve(trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    res.sample_counts.push_back(trials[i].count);
    if (trials[i].count > res.consensus_count) {
      res.consensus_count = trials[i].count;
      res.best_iteration = static_cast<int>(i);
    }
  }
  if (res.best_iteration < 0 || res.consensus_count < static_cast<std::size_t>(cfg.min_inliers) ||
      res.consensus_count < 2)
    throw Error("no consensus");

  const RigidTransform best = trials[static_cast<std::size_t>(res.best_iteration)].model;
  std::vector<std::uint8_t> mask(n, 0);
  for (std::size_t i = 0; i < n; ++i) mask[i] = detail::residual(best, matches[i]) <= cfg.inlier_threshold;
  RigidTransform model = fit_rigid(detail::select(matches, mask));

  const std::size_t keep_at_least = std::max<std::size_t>(2, std::min<std::size_t>(k, res.consensus_count));
  const double floor = 0.01 * cfg.inlier_threshold;
  double tau = cfg.inlier_threshold;
  for (int it = 0; it < cfg.polish_iterations && tau > floor; ++it) {
    tau = std::max(floor, 0.5 * tau);
    auto inside = [&](const RigidTransform& m) {
      std::vector<std::uint8_t> sel(n, 0);
      for (std::size_t i = 0; i < n; ++i) sel[i] = mask[i] && detail::residual(m, matches[i]) <= tau;
      return sel;
    };
    std::vector<std::uint8_t> next = inside(model);
    std::size_t count = static_cast<std::size_t>(std::count(next.begin(), next.end(), 1));
    for (const auto& t : trials) {
      if (t.count == 0) continue;
      auto sel = inside(t.model);
      const auto c = static_cast<std::size_t>(std::count(sel.begin(), sel.end(), 1));
      if (c > count) {
        count = c;
        next = std::move(sel);
      }
    }
    if (count < keep_at_least) break;
    try {
      model = fit_rigid(detail::select(matches, next));
    } catch (const Error&) {
      break;
    }
    mask = std::move(next);
  }

  res.transform = model;
  res.inliers = std::move(mask);
  res.inlier_count = static_cast<std::size_t>(std::count(res.inliers.begin(), res.inliers.end(), 1));
  return res;
}

}  // namespace semstitch
