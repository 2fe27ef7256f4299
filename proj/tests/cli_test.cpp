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


#include <cstdlib>
#include <sstream>

#include <gtest/gtest.h>

#include "semstitch/cli.hpp"
#include "test_support.hpp"

namespace semstitch {
namespace {

using testing::TempDir;

int run_cli(std::vector<std::string> args, std::string* out = nullptr, std::string* err = nullptr) {
  args.insert(args.begin(), "semstitch");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream log, diag;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), log, diag);
  if (out) *out = log.str();
  if (err) *err = diag.str();
  return code;
}

Raster tissue_image(std::uint64_t seed) {
  Raster img = testing::textured(300, 300, seed, 1.0);
  const Mask m = testing::disk_mask(300, 300, {150, 150}, 110);
  for (int y = 0; y < 300; ++y)
    for (int x = 0; x < 300; ++x) img.at(x, y) = m.test(x, y) ? img.at(x, y) / 2 : 255;
  return img;
}

TEST(Cli, HelpExitsZero) {
  std::string out;
  EXPECT_EQ(run_cli({"--help"}, &out), 0);
  EXPECT_NE(out.find("stitch"), std::string::npos);
  EXPECT_NE(out.find("evaluate"), std::string::npos);
}

TEST(Cli, MissingSubcommandFails) { EXPECT_EQ(run_cli({}), 1); }

TEST(Cli, UnknownExperimentFails) {
  TempDir dir("cli_unknown");
  std::string err;
  EXPECT_EQ(run_cli({"evaluate", "bogus", "--out-dir", dir.path().string()}, nullptr, &err), 1);
  EXPECT_NE(err.find("unknown experiment"), std::string::npos);
}

TEST(Cli, EncodeRejectsBadMagic) {
  TempDir dir("cli_magic");
  protocol::detail::spill(dir / "req.bin", std::string(32, 'A'));
  std::string err;
  EXPECT_EQ(run_cli({"encode", (dir / "req.bin").string(), (dir / "resp.bin").string()}, nullptr, &err), 1);
  EXPECT_FALSE(err.empty());
}

TEST(Cli, UnreadableInputFails) {
  TempDir dir("cli_unreadable");
  std::string err;
  EXPECT_EQ(run_cli({"stitch", (dir / "absent.png").string(), "--out-dir", dir.path().string()}, nullptr, &err), 1);
  EXPECT_NE(err.find("semstitch:"), std::string::npos);
}

TEST(Cli, DuplicateInputNamesFail) {
  TempDir dir("cli_dup");
  std::filesystem::create_directories(dir / "a");
  std::filesystem::create_directories(dir / "b");
  save_png(tissue_image(1), dir / "a" / "x.png");
  save_png(tissue_image(1), dir / "b" / "x.png");
  EXPECT_EQ(run_cli({"stitch", (dir / "a" / "x.png").string(), (dir / "b" / "x.png").string(), "--mpp", "1",
                     "--out-dir", (dir / "out").string()}),
            1);
}

TEST(Cli, SingleInputCompositeIsInput) {
  TempDir dir("cli_single");
  const Raster img = tissue_image(2);
  save_png(img, dir / "one.png");
  ASSERT_EQ(run_cli({"stitch", (dir / "one.png").string(), "--mpp", "1", "--output-mpp", "1", "--out-dir",
                     (dir / "out").string()}),
            0);
  const Raster back = load_image(dir / "out" / "composite.png");
  EXPECT_EQ(back.width, img.width);
  EXPECT_EQ(back.pixels, img.pixels);
  EXPECT_DOUBLE_EQ(back.mpp, 1.0);
  const auto j = cli::read_json_file(dir / "out" / "manifest.json");
  EXPECT_EQ(j["status"], "complete");
  EXPECT_EQ(j["fragments"].size(), 1u);
  EXPECT_TRUE(j["merges"].empty());
}

TEST(Cli, FragmentThenStitchWithOracle) {
  TempDir dir("cli_roundtrip");
  const auto frag = dir / "frag";
  ASSERT_EQ(run_cli({"fragment", "--synthetic", "1024", "--layout", "quadrants", "--seed", "3", "--out-dir",
                     frag.string()}),
            0);
  for (const char* f : {"slide.png", "f0.png", "f1.png", "f2.png", "f3.png", "ground_truth.json"})
    EXPECT_TRUE(std::filesystem::exists(frag / f)) << f;
  const auto gt = ground_truth_from_json(cli::read_json_file(frag / "ground_truth.json"));
  EXPECT_EQ(gt.seams.size(), 4u);

  std::vector<std::string> args{"stitch"};
  for (const char* f : {"f0.png", "f1.png", "f2.png", "f3.png"}) args.push_back((frag / f).string());
  for (const char* a : {"--encoder", "oracle", "--output-mpp", "1", "--ground-truth"}) args.push_back(a);
  args.push_back((frag / "ground_truth.json").string());
  args.push_back("--out-dir");
  args.push_back((dir / "out").string());
  std::string log;
  ASSERT_EQ(run_cli(args, &log), 0) << log;
  const auto j = cli::read_json_file(dir / "out" / "manifest.json");
  EXPECT_EQ(j["status"], "complete");
  EXPECT_EQ(j["merges"].size(), 3u);
  EXPECT_EQ(j["config"]["encoder"]["kind"], "oracle");
  const Raster composite = load_image(dir / "out" / "composite.png");
  EXPECT_EQ(composite.width, j["canvas"]["width"].get<int>());
}

TEST(Cli, OracleWithoutGroundTruthFails) {
  TempDir dir("cli_oracle");
  save_png(tissue_image(3), dir / "a.png");
  save_png(tissue_image(4), dir / "b.png");
  EXPECT_EQ(run_cli({"stitch", (dir / "a.png").string(), (dir / "b.png").string(), "--mpp", "1", "--encoder",
                     "oracle", "--out-dir", (dir / "out").string()}),
            1);
}

struct EnvGuard {
  explicit EnvGuard(const char* value) {
    if (value) ::setenv("SEMSTITCH_BRIDGE", value, 1);
    else ::unsetenv("SEMSTITCH_BRIDGE");
  }
  ~EnvGuard() { ::unsetenv("SEMSTITCH_BRIDGE"); }
};

TEST(ResolveConfig, DefaultsMatchReferenceSettings) {
  EnvGuard env(nullptr);
  const RunConfig c = cli::resolve_config({});
  EXPECT_EQ(c.patch_size, 224);
  EXPECT_EQ(c.stride, 112.0);
  EXPECT_EQ(c.inward_shift, 10.0);
  EXPECT_EQ(c.neighborhood, 3);
  EXPECT_EQ(c.ransac.inlier_threshold, 500.0);
  EXPECT_EQ(c.ransac.max_iterations, 1000);
  EXPECT_EQ(c.ransac.sample_size, 6);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.processing_mpp, 1.0);
  EXPECT_EQ(c.output_mpp, 0.25);
  EXPECT_EQ(c.encoder.kind, EncoderKind::baseline);
}

TEST(ResolveConfig, FlagsOverrideFileOverridesDefaults) {
  EnvGuard env(nullptr);
  TempDir dir("cfg");
  cli::write_text(dir / "c.json", R"({"stride": 80, "neighborhood": 1, "seed": 9,
                                      "ransac": {"inlier_threshold": 250}})");
  cli::RunFlags f;
  f.config = (dir / "c.json").string();
  RunConfig c = cli::resolve_config(f);
  EXPECT_EQ(c.stride, 80.0);
  EXPECT_EQ(c.neighborhood, 1);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.ransac.inlier_threshold, 250.0);
  f.neighborhood = 2;
  f.inlier_threshold = 100.0;
  c = cli::resolve_config(f);
  EXPECT_EQ(c.neighborhood, 2);
  EXPECT_EQ(c.stride, 80.0);
  EXPECT_EQ(c.ransac.inlier_threshold, 100.0);
}

TEST(ResolveConfig, BridgePrecedence) {
  cli::RunFlags f;
  f.encoder = "external";
  {
    EnvGuard env(nullptr);
    EXPECT_THROW(cli::resolve_config(f), Error);
  }
  EnvGuard env("env-bridge");
  EXPECT_EQ(cli::resolve_config(f).encoder.command, "env-bridge");
  f.bridge = "flag-bridge";
  EXPECT_EQ(cli::resolve_config(f).encoder.command, "flag-bridge");
}

TEST(ResolveConfig, InvalidValuesRejected) {
  EnvGuard env(nullptr);
  cli::RunFlags f;
  f.stride = 0.0;
  EXPECT_THROW(cli::resolve_config(f), Error);
  f = {};
  f.encoder = "mystery";
  EXPECT_THROW(cli::resolve_config(f), Error);
  f = {};
  f.config = "/nonexistent/config.json";
  EXPECT_THROW(cli::resolve_config(f), Error);
}

TEST(Cli, EvaluateWritesCsv) {
  TempDir dir("cli_eval");
  ASSERT_EQ(run_cli({"evaluate", "similarity-vs-offset", "--encoders", "oracle", "--seeds", "1", "--slide-size",
                     "768", "--pairs", "2", "--offsets", "0,224", "--out-dir", dir.path().string()}),
            0);
  EXPECT_TRUE(std::filesystem::exists(dir / "similarity-vs-offset.csv"));
}

}  // namespace
}  // namespace semstitch
