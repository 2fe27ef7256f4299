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


#include <gtest/gtest.h>

#include <set>

#include "test_support.hpp"

namespace semstitch {
namespace {

// Tissue pixels with a 4-neighbour outside the mask.
std::set<std::pair<int, int>> border_pixels(const Mask& m) {
  std::set<std::pair<int, int>> out;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      const bool edge = !m.test(x - 1, y) || !m.test(x + 1, y) || !m.test(x, y - 1) || !m.test(x, y + 1);
      if (edge) out.insert({x, y});
    }
  return out;
}

void expect_valid_chain(const BoundaryChain& c) {
  ASSERT_FALSE(c.empty());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Pixel p = c[i], q = c[c.next(i)];
    EXPECT_LE(std::abs(p.x - q.x), 1);
    EXPECT_LE(std::abs(p.y - q.y), 1);
    EXPECT_FALSE(p == q);
  }
  EXPECT_GT(c.signed_area2(), 0.0);
}

TEST(Trace, SquarePerimeter) {
  const Mask m = testing::rect_mask(20, 20, 5, 5, 14, 14);
  const BoundaryChain c = trace_boundary(m);
  EXPECT_EQ(c.size(), 36u);
  expect_valid_chain(c);
  std::set<std::pair<int, int>> got;
  for (const auto& p : c.points) got.insert({p.x, p.y});
  EXPECT_EQ(got, border_pixels(m));
  EXPECT_EQ(c[0].x, 5);
  EXPECT_EQ(c[0].y, 5);
  EXPECT_DOUBLE_EQ(c.perimeter(), 36.0);
}

TEST(Trace, SinglePixel) {
  Mask m(5, 5);
  m.set(2, 3, true);
  const BoundaryChain c = trace_boundary(m);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].x, 2);
  EXPECT_EQ(c[0].y, 3);
}

TEST(Trace, LargestComponentOnly) {
  Mask m = testing::rect_mask(40, 40, 2, 2, 11, 11);
  for (int y = 30; y < 33; ++y)
    for (int x = 30; x < 33; ++x) m.set(x, y, true);
  const BoundaryChain c = trace_boundary(m);
  for (const auto& p : c.points) EXPECT_LT(p.x, 12);
  EXPECT_EQ(c.size(), 36u);
}

TEST(Trace, EmptyMaskThrows) { EXPECT_THROW(trace_boundary(Mask(4, 4)), Error); }

TEST(Trace, ConvexShapesVisitEveryBorderPixelOnce) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 60 + static_cast<int>(rng() % 60), h = 60 + static_cast<int>(rng() % 60);
    const Vec2 c{w / 2.0 + static_cast<double>(rng() % 7), h / 2.0 - static_cast<double>(rng() % 7)};
    const double r = 10 + static_cast<double>(rng() % 18);
    const Mask m = trial % 2 ? testing::disk_mask(w, h, c, r)
                             : testing::rect_mask(w, h, 3 + trial, 4, w - 5, h - 3 - trial);
    const BoundaryChain chain = trace_boundary(m);
    expect_valid_chain(chain);
    std::set<std::pair<int, int>> got;
    for (const auto& p : chain.points) EXPECT_TRUE(got.insert({p.x, p.y}).second);
    EXPECT_EQ(got, border_pixels(m));
  }
}

TEST(Trace, SyntheticSilhouettesAreCounterClockwise) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto slide = generate_synthetic_slide(seed, 256, 1.0);
    const BoundaryChain chain = trace_boundary(slide.truth);
    expect_valid_chain(chain);
    const auto border = border_pixels(slide.truth);
    for (const auto& p : chain.points) EXPECT_TRUE(border.count({p.x, p.y}));
  }
}

TEST(ArcLength, WalksAlongSquareEdge) {
  const BoundaryChain c = trace_boundary(testing::rect_mask(20, 20, 5, 5, 14, 14));
  EXPECT_EQ(point_at_arclength(c, 0, 0.0).index, 0u);
  const auto p = point_at_arclength(c, 0, 5.0);
  const bool along_top = p.point.x == 10 && p.point.y == 5;
  const bool along_left = p.point.x == 5 && p.point.y == 10;
  EXPECT_TRUE(along_top || along_left);
}

TEST(ArcLength, WrapsModuloPerimeter) {
  const BoundaryChain c = trace_boundary(testing::disk_mask(80, 80, {40, 40}, 25));
  const double total = c.perimeter();
  for (std::size_t start : {std::size_t{0}, c.size() / 3}) {
    EXPECT_EQ(point_at_arclength(c, start, total).index, start);
    EXPECT_EQ(point_at_arclength(c, start, total + 17.0).index, point_at_arclength(c, start, 17.0).index);
  }
  EXPECT_THROW(point_at_arclength(c, 0, -1.0), Error);
}

}  // namespace
}  // namespace semstitch
