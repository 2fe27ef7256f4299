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

#include "test_support.hpp"

namespace semstitch {
namespace {

using testing::grid_search_fit;
using testing::make_problem;
using testing::Problem;
using testing::sse;

TEST(Rigid, IdentityAndExactRecovery) {
  const std::vector<Vec2> src{{0, 0}, {10, 0}, {3, 8}, {-4, 2}};
  const auto id = fit_rigid(src, src);
  EXPECT_NEAR(id.theta, 0.0, 1e-12);
  EXPECT_NEAR(norm(id.t), 0.0, 1e-12);
  const RigidTransform truth{kPi / 2, {5, 7}};
  std::vector<Vec2> dst;
  for (auto p : src) dst.push_back(truth.apply(p));
  const auto r = fit_rigid(src, dst);
  EXPECT_NEAR(r.theta, kPi / 2, 1e-9);
  EXPECT_NEAR(r.t.x, 5.0, 1e-9);
  EXPECT_NEAR(r.t.y, 7.0, 1e-9);
}

TEST(Rigid, NoisyFitMatchesGridSearch) {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  std::normal_distribution<double> g;
  const RigidTransform truth{deg_to_rad(33.0), {12.0, -4.0}};
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Vec2> src, dst;
    for (int i = 0; i < 20; ++i) {
      src.push_back({u(rng), u(rng)});
      dst.push_back(truth.apply(src.back()) + Vec2{g(rng), g(rng)});
    }
    const auto fit = fit_rigid(src, dst);
    const auto oracle = grid_search_fit(src, dst);
    EXPECT_LE(std::abs(rad_to_deg(wrap_angle(fit.theta - oracle.theta))), 0.5);
    EXPECT_LE(norm(fit.t - oracle.t), 1.0);
    EXPECT_LE(sse(fit, src, dst), sse(oracle, src, dst) + 1e-9);
  }
}

TEST(Rigid, DegenerateInputs) {
  const std::vector<Vec2> same{{3, 3}, {3, 3}, {3, 3}};
  EXPECT_THROW(fit_rigid(same, same), Error);
  const std::vector<Vec2> one{{1, 2}};
  EXPECT_THROW(fit_rigid(one, one), Error);
  const std::vector<Vec2> two{{1, 2}, {3, 4}};
  EXPECT_THROW(fit_rigid(two, one), Error);
}

TEST(Rigid, CompositionAndInverse) {
  const RigidTransform a{0.7, {3, -2}}, b{-2.1, {10, 4}};
  const Vec2 p{5.5, -1.25};
  EXPECT_NEAR(norm((a * b).apply(p) - a.apply(b.apply(p))), 0.0, 1e-12);
  EXPECT_NEAR(norm(a.inverse().apply(a.apply(p)) - p), 0.0, 1e-12);
  for (const auto& r : {a, b, a * b}) {
    // R^T R = I and det R = +1 for the matrix built from theta.
    const double c = r.c(), s = r.s();
    EXPECT_NEAR(c * c + s * s, 1.0, 1e-12);
    EXPECT_NEAR(c * c - (-s) * s, 1.0, 1e-12);
  }
  EXPECT_NEAR(norm(a.scaled(4.0).t - 4.0 * a.t), 0.0, 1e-12);
}

TEST(Ransac, ExactDataAllInliers) {
  const auto p = make_problem(1, 0.0);
  const auto r = ransac_rigid(p.matches, RansacConfig{});
  EXPECT_NEAR(wrap_angle(r.transform.theta - p.truth.theta), 0.0, 1e-9);
  EXPECT_NEAR(norm(r.transform.t - p.truth.t), 0.0, 1e-6);
  EXPECT_EQ(r.inlier_count, p.matches.size());
}

TEST(Ransac, RecoversPoseUnderThirtyPercentOutliers) {
  int ok = 0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const auto p = make_problem(100 + trial, 0.3);
    RansacConfig cfg;
    cfg.seed = trial;
    const auto r = ransac_rigid(p.matches, cfg);
    ok += std::abs(rad_to_deg(wrap_angle(r.transform.theta - p.truth.theta))) <= 0.5 &&
          norm(r.transform.t - p.truth.t) <= 2.0;
  }
  EXPECT_GE(ok, 19);
}

TEST(Ransac, TooFewMatches) {
  const auto p = make_problem(2, 0.0, 0.0, 5);
  EXPECT_THROW(ransac_rigid(p.matches, RansacConfig{}), Error);
  RansacConfig bad;
  bad.sample_size = 1;
  EXPECT_THROW(ransac_rigid(make_problem(2, 0.0).matches, bad), Error);
}

TEST(Ransac, DeterministicAcrossThreadCounts) {
  const auto p = make_problem(5, 0.4, 2.0);
  RansacConfig one, four;
  four.threads = 4;
  const auto a = ransac_rigid(p.matches, one), b = ransac_rigid(p.matches, one), c = ransac_rigid(p.matches, four);
  EXPECT_EQ(a.inliers, b.inliers);
  EXPECT_EQ(a.inliers, c.inliers);
  EXPECT_EQ(a.transform.theta, c.transform.theta);
  EXPECT_EQ(a.sample_counts, c.sample_counts);
}

TEST(Ransac, ReturnedModelIsMaximal) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = make_problem(200 + seed, 0.3, 1.0);
    RansacConfig cfg;
    cfg.inlier_threshold = 20.0;
    const auto r = ransac_rigid(p.matches, cfg);
    std::size_t within = 0;
    for (const auto& m : p.matches) within += norm(r.transform.apply(m.moving) - m.fixed) <= cfg.inlier_threshold;
    for (auto c : r.sample_counts) EXPECT_GE(within, c);
    EXPECT_EQ(r.consensus_count, *std::max_element(r.sample_counts.begin(), r.sample_counts.end()));
  }
}

TEST(Ransac, RotationEquivariance) {
  const auto p = make_problem(9, 0.0);
  const RigidTransform q{0.9, {}};
  auto rotated = p.matches;
  for (auto& m : rotated) m.moving = q.apply(m.moving);
  const auto a = ransac_rigid(p.matches, RansacConfig{}), b = ransac_rigid(rotated, RansacConfig{});
  EXPECT_NEAR(wrap_angle(b.transform.theta - (a.transform.theta - q.theta)), 0.0, 1e-6);
}

}  // namespace
}  // namespace semstitch
