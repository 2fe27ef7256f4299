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

#include <vector>

#include "semstitch/raster.hpp"

namespace semstitch {

/// Closed outer contour of one tissue component. Consecutive points (and the
/// last/first pair) are 8-neighbours; the shoelace area is positive.
struct BoundaryChain {
  std::vector<Pixel> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  const Pixel& operator[](std::size_t i) const { return points[i]; }
  std::size_t next(std::size_t i) const { return i + 1 == points.size() ? 0 : i + 1; }

  /// Twice the shoelace area, in pixel units.
  double signed_area2() const {
    double a = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const Pixel p = points[i];
      const Pixel q = points[next(i)];
      a += static_cast<double>(p.x) * q.y - static_cast<double>(q.x) * p.y;
    }
    return a;
  }

  /// Euclidean length of the closed polyline (steps of 1 or sqrt 2).
  double perimeter() const {
    if (points.size() < 2) return 0.0;
    double len = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) len += step_length(i);
    return len;
  }

  /// Length of the step from point i to point i+1 (wrapping).
  double step_length(std::size_t i) const {
    const Pixel p = points[i];
    const Pixel q = points[next(i)];
    return std::hypot(static_cast<double>(q.x - p.x), static_cast<double>(q.y - p.y));
  }
};

namespace detail {

// Clockwise on screen (y down), starting west.
constexpr int kDirX[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr int kDirY[8] = {0, -1, -1, -1, 0, 1, 1, 1};

inline int direction_of(int dx, int dy) {
  for (int d = 0; d < 8; ++d)
    if (kDirX[d] == dx && kDirY[d] == dy) return d;
  return -1;
}

}  // namespace detail

/// Traces the outer border of the largest 8-connected component of `mask`
/// (ties: first in raster order) by Moore-neighbour border following. The
/// chain starts at the component's topmost-then-leftmost pixel.
inline BoundaryChain trace_boundary(const Mask& mask) {
  const auto [labels, areas] = label_components(mask);
  if (areas.size() <= 1) throw Error("empty mask");
  int best = 1;
  for (int l = 2; l < static_cast<int>(areas.size()); ++l)
    if (areas[static_cast<std::size_t>(l)] > areas[static_cast<std::size_t>(best)]) best = l;

  auto inside = [&](int x, int y) {
    return mask.contains(x, y) &&
           labels[static_cast<std::size_t>(y) * mask.width + x] == best;
  };

  Pixel start{};
  bool found = false;
  for (int y = 0; y < mask.height && !found; ++y)
    for (int x = 0; x < mask.width && !found; ++x)
      if (inside(x, y)) {
        start = {x, y};
        found = true;
      }

  BoundaryChain chain;
  chain.points.push_back(start);

  // Backtrack direction: from the current pixel towards the last background
  // neighbour examined. West of the start pixel is background by construction.
  Pixel cur = start;
  int back = 0;
  bool have_first_move = false;
  Pixel first_move{};
  for (;;) {
    int found_dir = -1;
    for (int k = 1; k <= 8; ++k) {
      const int d = (back + k) % 8;
      if (inside(cur.x + detail::kDirX[d], cur.y + detail::kDirY[d])) {
        found_dir = d;
        break;
      }
    }
    if (found_dir < 0) break;  // isolated pixel
    const Pixel nxt{cur.x + detail::kDirX[found_dir], cur.y + detail::kDirY[found_dir]};
    if (cur == start) {
      if (have_first_move && nxt == first_move) break;
      if (!have_first_move) {
        have_first_move = true;
        first_move = nxt;
      }
    }
    const int prev = (found_dir + 7) % 8;
    const Pixel b{cur.x + detail::kDirX[prev], cur.y + detail::kDirY[prev]};
    back = detail::direction_of(b.x - nxt.x, b.y - nxt.y);
    cur = nxt;
    chain.points.push_back(cur);
  }
  // The walk ends standing on the start pixel again.
  if (chain.points.size() > 1 && chain.points.back() == start) chain.points.pop_back();

  if (chain.signed_area2() < 0.0) std::reverse(chain.points.begin() + 1, chain.points.end());
  return chain;
}

struct ArcPosition {
  Pixel point;
  std::size_t index = 0;
};

/// Walks forward from `start_index` and returns the first chain point whose
/// cumulative arc length reaches `distance`. Distances beyond the perimeter
/// wrap around the closed chain.
inline ArcPosition point_at_arclength(const BoundaryChain& chain, std::size_t start_index,
                                      double distance) {
  if (chain.empty()) throw Error("empty boundary chain");
  if (distance < 0.0) throw Error("negative arc length");
  const double total = chain.perimeter();
  if (total <= 0.0) return {chain[start_index], start_index};
  double remaining = std::fmod(distance, total);
  // Tolerate accumulated rounding when distance is a whole number of laps.
  if (total - remaining < 1e-9) remaining = 0.0;
  std::size_t i = start_index;
  double walked = 0.0;
  while (walked + 1e-9 < remaining) {
    walked += chain.step_length(i);
    i = chain.next(i);
  }
  return {chain[i], i};
}

}  // namespace semstitch
