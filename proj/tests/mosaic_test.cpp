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

using testing::TempDir;

// Textured disk on white.
Raster disk_image(std::uint64_t seed, int size = 320) {
  Raster img = testing::textured(size, size, seed);
  const Mask m = testing::disk_mask(size, size, {size / 2.0, size / 2.0}, size * 0.375);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      if (!m.test(x, y)) img.at(x, y) = 255;
      else img.at(x, y) = static_cast<std::uint8_t>(img.at(x, y) / 2);
  return img;
}

RunConfig small_config(const TempDir& dir) {
  RunConfig c;
  c.output_mpp = 1.0;
  c.workdir = dir.path();
  c.segment.min_component_area = 50;
  return c;
}

TEST(PrepareFragment, BuildsFramesFeaturesAndStacks) {
  TempDir dir("prep");
  const auto cfg = small_config(dir);
  const auto f = prepare_fragment("disk", disk_image(1), cfg);
  ASSERT_FALSE(f.frames.empty());
  EXPECT_EQ(f.features.size(), f.frames.size());
  EXPECT_EQ(f.mirrored_features.size(), f.frames.size());
  EXPECT_EQ(f.stacks.size(), f.frames.size());
  ASSERT_EQ(f.members.size(), 1u);
  EXPECT_EQ(f.members[0].pose.theta, 0.0);
  EXPECT_EQ(f.members[0].pose.t.x, 0.0);
  EXPECT_EQ(f.members[0].merge_step, 0);
  for (std::size_t i = 0; i < f.labels.size(); ++i) EXPECT_EQ(f.labels[i] >= 0, f.mask.bits[i] != 0);
  // Perimeter of a radius-120 disk is about 754 px; one frame per stride.
  EXPECT_NEAR(static_cast<double>(f.frames.size()), 2 * kPi * 120 / 112.0, 1.5);
}

TEST(PrepareFragment, BlankImageHasNoTissue) {
  TempDir dir("blank");
  const Raster blank(200, 200, 3, 1.0, 255);
  try {
    prepare_fragment("blank", blank, small_config(dir));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "no tissue found");
  }
}

TEST(PrepareFragment, Deterministic) {
  TempDir dir("det");
  auto cfg = small_config(dir);
  const auto a = prepare_fragment("disk", disk_image(7), cfg);
  cfg.threads = 3;
  const auto b = prepare_fragment("disk", disk_image(7), cfg);
  ASSERT_EQ(a.features.size(), b.features.size());
  for (std::size_t i = 0; i < a.features.size(); ++i) EXPECT_EQ(a.features[i], b.features[i]);
}

TEST(PrepareFragment, ResamplesToProcessingResolution) {
  TempDir dir("res");
  auto cfg = small_config(dir);
  Raster img = disk_image(3, 640);
  img.mpp = 0.5;
  const auto f = prepare_fragment("half", img, cfg);
  EXPECT_EQ(f.image.width, 320);
  EXPECT_EQ(f.members[0].full_image->width, 320);
}

TEST(Stitch, SingleFragmentIsComplete) {
  TempDir dir("single");
  const auto cfg = small_config(dir);
  std::vector<Fragment> pool{prepare_fragment("only", disk_image(2), cfg)};
  const auto r = stitch(pool, cfg);
  EXPECT_TRUE(r.complete);
  EXPECT_TRUE(r.merges.empty());
  ASSERT_EQ(r.pool.size(), 1u);
  EXPECT_EQ(r.pool[0].members[0].pose.theta, 0.0);
}

TEST(Stitch, EmptyPoolThrows) {
  RunConfig cfg;
  EXPECT_THROW(stitch({}, cfg), Error);
}

// Halves of a synthetic slide, the right one rotated; oracle embeddings
// should recover the relative pose.
TEST(Stitch, OracleRecoversHalvesPose) {
  TempDir dir("halves");
  const auto slide = generate_synthetic_slide(11, 2048);
  auto spec = detail::halves(11, 0.0);
  spec.rotation_deg = 60.0;
  spec.translation_px = 20.0;
  const auto set = fragment_slide(slide, spec);
  RunConfig cfg = small_config(dir);
  cfg.encoder = EncoderSpec::oracle(0.0, 0);
  const auto r = stitch(detail::prepare_set(set, cfg), cfg);
  ASSERT_TRUE(r.complete);
  ASSERT_EQ(r.merges.size(), 1u);
  EXPECT_EQ(r.pool.size(), 1u);
  const auto poses = poses_um(r, cfg.processing_mpp);
  EXPECT_EQ(score_boundary_matches(poses, set.truth, 0.5, 2.0), 100.0);
  for (const auto& m : r.pool[0].members) EXPECT_EQ(m.merge_step, 1);
}

TEST(Render, SingleLayerIdentityReproducesImage) {
  const Raster img = testing::rgb_noise(40, 30, 5);
  const RenderLayer l{&img, nullptr, 1.0, RigidTransform{}};
  const Canvas cv = render_layers(std::span<const RenderLayer>(&l, 1), 1.0, 1e9, 16);
  EXPECT_EQ(cv.image.width, 72);
  EXPECT_EQ(cv.image.height, 62);
  EXPECT_EQ(cv.origin.x, -16.0);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x)
      for (int c = 0; c < 3; ++c) ASSERT_EQ(cv.image.at(x + 16, y + 16, c), img.at(x, y, c));
  EXPECT_EQ(cv.image.at(0, 0, 0), 255);
}

TEST(Render, QuarterTurnPermutesPixels) {
  const Raster img = testing::rgb_noise(20, 10, 6);
  const RigidTransform quarter{kPi / 2, {10.0, 0.0}};  // (x, y) -> (10 - y, x)
  const RenderLayer l{&img, nullptr, 1.0, quarter};
  const Canvas cv = render_layers(std::span<const RenderLayer>(&l, 1), 1.0, 1e9, 0);
  ASSERT_EQ(cv.image.width, 10);
  ASSERT_EQ(cv.image.height, 20);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 20; ++x)
      EXPECT_NEAR(cv.image.at(9 - y, x, 1), img.at(x, y, 1), 2) << x << "," << y;
}

TEST(Render, EarlierTissueLayerWins) {
  Raster a(10, 10, 1, 1.0, 10), b(10, 10, 1, 1.0, 200);
  Mask ma(10, 10), mb(10, 10);
  ma.bits.assign(100, 1);
  mb.bits.assign(100, 1);
  const std::vector<RenderLayer> layers{{&a, &ma, 1.0, {}}, {&b, &mb, 1.0, RigidTransform::translation({5, 0})}};
  const Canvas cv = render_layers(layers, 1.0, 1e9, 0);
  EXPECT_EQ(cv.image.at(7, 5), 10);
  EXPECT_EQ(cv.image.at(12, 5), 200);
  EXPECT_EQ(cv.labels[5 * cv.image.width + 7], 0);
  EXPECT_EQ(cv.labels[5 * cv.image.width + 12], 1);
}

TEST(Render, CanvasBudgetEnforced) {
  const Raster img(100, 100, 1, 1.0, 0);
  const RenderLayer l{&img, nullptr, 1.0, {}};
  EXPECT_THROW(render_layers(std::span<const RenderLayer>(&l, 1), 1.0, 1000.0), Error);
}

TEST(Render, CompositeOfSingleFragmentMatchesInput) {
  TempDir dir("comp");
  const auto cfg = small_config(dir);
  const Raster img = disk_image(4);
  const auto f = prepare_fragment("disk", img, cfg);
  const auto cv = render_composite(f, 1.0, 1.0);
  for (int y = 0; y < img.height; y += 7)
    for (int x = 0; x < img.width; x += 7) ASSERT_EQ(cv.image.at(x + 16, y + 16), img.at(x, y));
}

TEST(Config, JsonRoundTrip) {
  RunConfig a;
  a.stride = 64;
  a.neighborhood = 2;
  a.encoder = EncoderSpec::oracle(0.25, 0);
  a.ransac.inlier_threshold = 123;
  a.seam_close_radius = 5;
  RunConfig b;
  apply_config_json(b, nlohmann::json::parse(config_to_json(a).dump()));
  EXPECT_EQ(config_to_json(a).dump(), config_to_json(b).dump());
}

TEST(Config, ValidateRejectsBadValues) {
  RunConfig c;
  c.stride = 0.5;
  EXPECT_THROW(c.validate(), Error);
  c = RunConfig{};
  c.neighborhood = -1;
  EXPECT_THROW(c.validate(), Error);
  c = RunConfig{};
  c.processing_mpp = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Manifest, SchemaAndPoolShrink) {
  TempDir dir("manifest");
  const auto slide = generate_synthetic_slide(5, 1024);
  auto spec = detail::quadrant_protocol(5, 0.0);
  spec.rotation_deg = 0.0;
  spec.trim_max = 0.0;
  const auto set = fragment_slide(slide, spec);
  RunConfig cfg = small_config(dir);
  cfg.encoder = EncoderSpec::oracle(0.0, 0);
  const auto r = stitch(detail::prepare_set(set, cfg), cfg);
  // Every merge removes exactly one fragment from the pool.
  EXPECT_EQ(r.pool.size() + r.merges.size() - (r.complete ? 0 : 1), 4u);
  const auto j = make_manifest(r, cfg);
  EXPECT_EQ(j["status"], r.complete ? "complete" : "partial");
  ASSERT_EQ(j["fragments"].size(), 4u);
  for (const auto& f : j["fragments"])
    for (const char* k : {"id", "theta_deg", "tx", "ty", "merge_step", "component"}) EXPECT_TRUE(f.contains(k)) << k;
  for (const auto& m : j["merges"])
    for (const char* k : {"step", "moving", "fixed", "score", "candidates", "inliers", "attempts"})
      EXPECT_TRUE(m.contains(k)) << k;
  EXPECT_EQ(j["config"]["patch_size"], 224);
  EXPECT_EQ(j["config"]["ransac"]["inlier_threshold"], 500.0);
}

}  // namespace
}  // namespace semstitch
