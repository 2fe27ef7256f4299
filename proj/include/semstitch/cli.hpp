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

// Command-line front end: stitch, fragment, evaluate, encode.
//
// Settings resolve as flag > --config file > built-in default. The
// SEMSTITCH_BRIDGE environment variable replaces the external encoder
// command from the config file; --bridge still wins over it.

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "semstitch/harness.hpp"

namespace semstitch::cli {

enum ExitCode : int { kSuccess = 0, kFailure = 1, kPartial = 2 };

/// Canvases above this many pixels are written as tiled TIFF under
/// `--format auto`.
inline constexpr double kPngPixelLimit = 64.0 * 1024 * 1024;

/// Run-configuration flags shared by every subcommand. Unset flags leave the
/// config-file or default value alone.
struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<double> processing_mpp;
  std::optional<double> output_mpp;
  std::optional<int> patch_size;
  std::optional<double> stride;
  std::optional<int> neighborhood;
  std::optional<std::string> encoder;
  std::optional<int> dim;
  std::optional<double> sigma;
  std::optional<std::string> bridge;
  std::optional<double> inlier_threshold;
  std::optional<int> iterations;
  std::optional<int> sample_size;
  std::optional<std::string> out_dir;
};

inline void add_run_flags(CLI::App& app, RunFlags& f) {
  app.add_option("--config", f.config, "JSON run configuration (keys as in manifest.json \"config\")");
  app.add_option("--seed", f.seed, "Seed for every random choice [42]");
  app.add_option("--threads", f.threads, "Worker threads [1]");
  app.add_option("--processing-mpp", f.processing_mpp, "Processing resolution, um/px [1.0]");
  app.add_option("--output-mpp", f.output_mpp, "Composite resolution, um/px [0.25]");
  app.add_option("--patch-size", f.patch_size, "Patch side, px [224]");
  app.add_option("--stride", f.stride, "Boundary step between patches, px [112]");
  app.add_option("--neighborhood", f.neighborhood, "Context radius n (stack of 2n+1) [3]");
  app.add_option("--encoder", f.encoder, "baseline | ncc | oracle | external | loopback [baseline]");
  app.add_option("--k", f.dim, "Feature dimension for external/loopback encoders [1024/16]");
  app.add_option("--sigma", f.sigma, "Oracle encoder noise [0]");
  app.add_option("--bridge", f.bridge, "External encoder command [$SEMSTITCH_BRIDGE]");
  app.add_option("--inlier-threshold", f.inlier_threshold, "RANSAC inlier radius, processing px [500]");
  app.add_option("--iterations", f.iterations, "RANSAC iterations [1000]");
  app.add_option("--sample-size", f.sample_size, "RANSAC sample size [6]");
  app.add_option("--out-dir", f.out_dir, "Output directory [.]");
}

inline nlohmann::json read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid JSON in " + p.string() + ": " + e.what());
  }
}

inline EncoderSpec default_encoder(EncoderKind kind, int patch_size) {
  switch (kind) {
    case EncoderKind::baseline: return EncoderSpec::baseline();
    case EncoderKind::ncc: return EncoderSpec::ncc(patch_size);
    case EncoderKind::oracle: return EncoderSpec::oracle();
    case EncoderKind::external: return EncoderSpec::external("", 1024);
    case EncoderKind::loopback: return EncoderSpec::loopback();
  }
  throw Error("unknown encoder");
}

inline RunConfig resolve_config(const RunFlags& f) {
  RunConfig c;
  if (!f.config.empty()) {
    const auto j = read_json_file(f.config);
    apply_config_json(c, j);
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  }
  if (const char* env = std::getenv("SEMSTITCH_BRIDGE"); env && *env) c.encoder.command = env;
  if (f.seed) c.seed = *f.seed;
  if (f.threads) c.threads = *f.threads;
  if (f.processing_mpp) c.processing_mpp = *f.processing_mpp;
  if (f.output_mpp) c.output_mpp = *f.output_mpp;
  if (f.patch_size) c.patch_size = *f.patch_size;
  if (f.stride) c.stride = *f.stride;
  if (f.neighborhood) c.neighborhood = *f.neighborhood;
  if (f.encoder) {
    const auto kind = parse_encoder_kind(*f.encoder);
    if (kind != c.encoder.kind) {
      const std::string command = c.encoder.command;
      c.encoder = default_encoder(kind, c.patch_size);
      c.encoder.command = command;
    }
  }
  if (f.dim) c.encoder.dim = *f.dim;
  if (f.sigma) c.encoder.sigma = *f.sigma;
  if (f.bridge) c.encoder.command = *f.bridge;
  if (f.inlier_threshold) c.ransac.inlier_threshold = *f.inlier_threshold;
  if (f.iterations) c.ransac.max_iterations = *f.iterations;
  if (f.sample_size) {
    c.ransac.sample_size = *f.sample_size;
    c.ransac.min_inliers = *f.sample_size;
  }
  if (f.out_dir) c.out_dir = *f.out_dir;
  if (c.encoder.kind == EncoderKind::external && c.encoder.command.empty())
    throw Error("external encoder needs --bridge or SEMSTITCH_BRIDGE");
  c.validate();
  return c;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

// ---------------------------------------------------------------------------
// stitch

struct StitchFlags {
  std::vector<std::string> inputs;
  std::optional<double> input_mpp;
  std::string ground_truth;
  std::string format = "auto";
};

/// Stitches the inputs into `composite.{png,tif}` + `manifest.json`.
/// Returns kSuccess for a single mosaic, kPartial when merging stopped early.
inline int cmd_stitch(const StitchFlags& s, const RunConfig& cfg, std::ostream& log) {
  if (s.inputs.empty()) throw Error("no input images");
  std::optional<GroundTruth> gt;
  if (!s.ground_truth.empty()) gt = ground_truth_from_json(read_json_file(s.ground_truth));

  std::set<std::string> ids;
  std::vector<Raster> images;
  std::vector<std::string> names;
  for (const auto& in : s.inputs) {
    const std::filesystem::path p(in);
    const std::string id = p.stem().string();
    if (!ids.insert(id).second) throw Error("duplicate input name '" + id + "'");
    images.push_back(load_image(p, s.input_mpp));
    names.push_back(id);
  }
  std::filesystem::create_directories(cfg.out_dir);

  std::vector<Fragment> pool(images.size());
  parallel_for(images.size(), cfg.threads, [&](std::size_t i) {
    std::optional<RigidTransform> truth;
    if (gt) truth = gt->fragment(names[i]).to_source;
    RunConfig local = cfg;
    local.threads = 1;
    pool[i] = prepare_fragment(names[i], images[i], local, truth);
  });
  log << "prepared " << pool.size() << " fragment(s)\n";

  const StitchResult res = stitch(std::move(pool), cfg);
  for (const auto& m : res.merges) {
    if (m.fixed_id.empty()) continue;
    log << "merge " << m.step << ": " << m.moving_id << " -> " << m.fixed_id << " (" << m.inliers << "/"
        << m.candidates << " inliers)\n";
  }

  Raster composite;
  Vec2 origin;
  if (res.input_ids.size() == 1) {
    composite = *res.pool.front().members.front().full_image;
  } else {
    Canvas cv = render_composite(res.pool.front(), cfg.processing_mpp, cfg.output_mpp, cfg.max_canvas_pixels,
                                 cfg.threads);
    composite = std::move(cv.image);
    origin = cv.origin;
  }
  const bool tiff = s.format == "tif" ||
                    (s.format == "auto" && static_cast<double>(composite.width) * composite.height > kPngPixelLimit);
  if (s.format != "auto" && s.format != "png" && s.format != "tif")
    throw Error("unknown format '" + s.format + "' (valid: auto, png, tif)");
  const auto image_path = cfg.out_dir / (tiff ? "composite.tif" : "composite.png");
  if (tiff) save_tiled_tiff(composite, image_path);
  else save_png(composite, image_path);
  write_mpp_sidecar(image_path, cfg.output_mpp);

  const auto manifest = make_manifest(res, cfg, origin, composite.width, composite.height);
  write_text(cfg.out_dir / "manifest.json", manifest.dump(2) + "\n");
  if (!res.complete) {
    log << "partial mosaic: " << res.abort_reason << "\n";
    return kPartial;
  }
  return kSuccess;
}

// ---------------------------------------------------------------------------
// fragment

struct FragmentFlags {
  std::string slide;
  int synthetic = 0;
  std::optional<double> slide_mpp;
  std::string layout = "quadrants";
  int rows = 2;
  int cols = 2;
  double gap_um = 0.0;
  double trim_min = 0.0;
  double trim_max = 0.0;
  double rotation_deg = 0.0;
  double translation_px = 0.0;
};

inline Layout parse_layout(const std::string& s) {
  if (s == "halves") return Layout::halves;
  if (s == "quadrants") return Layout::quadrants;
  if (s == "grid") return Layout::grid;
  throw Error("unknown layout '" + s + "' (valid: halves, quadrants, grid)");
}

/// Cuts a slide (file or synthetic) into fragment PNGs plus
/// `ground_truth.json`.
inline int cmd_fragment(const FragmentFlags& f, const RunConfig& cfg, std::ostream& log) {
  SyntheticSlide slide;
  if (f.synthetic > 0) {
    slide = generate_synthetic_slide(cfg.seed, f.synthetic, f.slide_mpp.value_or(1.0));
  } else {
    if (f.slide.empty()) throw Error("need a slide image or --synthetic SIZE");
    slide.image = load_image(f.slide, f.slide_mpp);
  }
  FragmentationSpec spec;
  spec.layout = parse_layout(f.layout);
  spec.rows = f.rows;
  spec.cols = f.cols;
  spec.gap_um = f.gap_um;
  spec.trim_min = f.trim_min;
  spec.trim_max = f.trim_max;
  spec.rotation_deg = f.rotation_deg;
  spec.translation_px = f.translation_px;
  spec.seed = cfg.seed;
  const FragmentSet set = fragment_slide(slide, spec);

  std::filesystem::create_directories(cfg.out_dir);
  if (f.synthetic > 0) {
    save_png(slide.image, cfg.out_dir / "slide.png");
    write_mpp_sidecar(cfg.out_dir / "slide.png", slide.image.mpp);
  }
  for (const auto& fr : set.fragments) {
    const auto p = cfg.out_dir / (fr.id + ".png");
    save_png(fr.image, p);
    write_mpp_sidecar(p, fr.image.mpp);
  }
  write_text(cfg.out_dir / "ground_truth.json", ground_truth_to_json(set.truth).dump(2) + "\n");
  log << "wrote " << set.fragments.size() << " fragment(s), " << set.truth.seams.size() << " seam(s)\n";
  return kSuccess;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateFlags {
  std::string experiment;
  std::vector<std::string> encoders;
  std::optional<int> seeds;
  std::optional<int> slide_size;
  std::vector<double> gaps;
  std::vector<double> offsets;
  std::vector<int> neighborhoods;
  std::vector<double> mpps;
  std::optional<int> pairs;
  std::optional<double> correct_factor;
  std::optional<double> oracle_sigma;
};

inline int cmd_evaluate(const EvaluateFlags& e, const RunConfig& cfg, std::ostream& log) {
  HarnessOptions o;
  o.run = cfg;
  o.out_dir = cfg.out_dir;
  if (!e.encoders.empty()) {
    o.encoders.clear();
    for (const auto& name : e.encoders) {
      EncoderSpec spec = default_encoder(parse_encoder_kind(name), cfg.patch_size);
      if (spec.kind == cfg.encoder.kind) spec = cfg.encoder;
      if (spec.kind == EncoderKind::external) spec.command = cfg.encoder.command;
      o.encoders.push_back(spec);
    }
  }
  if (e.seeds) o.seeds = *e.seeds;
  if (e.slide_size) o.slide_size = *e.slide_size;
  if (!e.gaps.empty()) o.gaps_um = e.gaps;
  if (!e.offsets.empty()) o.offsets_um = e.offsets;
  if (!e.neighborhoods.empty()) o.neighborhoods = e.neighborhoods;
  if (!e.mpps.empty()) o.mpps = e.mpps;
  if (e.pairs) o.pairs = *e.pairs;
  if (e.correct_factor) o.correct_factor = *e.correct_factor;
  if (e.oracle_sigma) o.oracle_sigma = *e.oracle_sigma;
  std::filesystem::create_directories(o.out_dir);
  const auto rows = run_experiment(e.experiment, o);
  log << "wrote " << (o.out_dir / (e.experiment + ".csv")).string() << " (" << rows.size() << " rows)\n";
  return kSuccess;
}

// ---------------------------------------------------------------------------
// encode

/// Acts as an encoder bridge: reads a patch request, writes the feature
/// response. Loopback vectors are written raw (what a bridge would send);
/// the other built-in encoders write unit vectors.
inline int cmd_encode(const std::filesystem::path& request, const std::filesystem::path& response,
                      EncoderSpec spec) {
  if (spec.kind == EncoderKind::oracle || spec.kind == EncoderKind::external)
    throw Error(std::string("encoder '") + to_string(spec.kind) + "' cannot serve patch files");
  const auto batch = protocol::read_patches(request);
  if (spec.kind == EncoderKind::ncc && batch.count > 0) {
    spec.patch_size = static_cast<int>(batch.width);
    spec.dim = (spec.patch_size / 4) * (spec.patch_size / 4);
  }
  spec.validate();
  protocol::FeatureBatch out;
  out.count = batch.count;
  out.dim = static_cast<std::uint32_t>(spec.dim);
  out.values.reserve(static_cast<std::size_t>(out.count) * out.dim);
  const std::size_t bytes = batch.patch_bytes();
  for (std::uint32_t i = 0; i < batch.count; ++i) {
    Patch p;
    p.pixels = Raster(static_cast<int>(batch.width), static_cast<int>(batch.height),
                      static_cast<int>(batch.channels), 1.0, 0);
    std::copy_n(batch.samples.begin() + static_cast<std::ptrdiff_t>(i * bytes), bytes, p.pixels.pixels.begin());
    const auto v = spec.kind == EncoderKind::loopback ? encode_raw(spec, p) : encode(spec, p).values;
    if (v.size() != out.dim) throw Error("encoder produced K=" + std::to_string(v.size()));
    out.values.insert(out.values.end(), v.begin(), v.end());
  }
  protocol::write_features(response, out);
  return kSuccess;
}

// ---------------------------------------------------------------------------

/// Parses and runs one command. Diagnostics go to `err`, progress to `log`.
inline int run(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Reassembles whole-mount tissue images from fragment scans.", "semstitch"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "semstitch 0.1.0");

  RunFlags rf;
  StitchFlags sf;
  FragmentFlags ff;
  EvaluateFlags ef;
  std::string request, response;

  auto* stitch_cmd = app.add_subcommand("stitch", "Stitch fragment images into one composite");
  add_run_flags(*stitch_cmd, rf);
  stitch_cmd->add_option("inputs", sf.inputs, "Fragment images (PNG/TIFF)")->required();
  stitch_cmd->add_option("--mpp", sf.input_mpp, "Input resolution override, um/px [sidecar, else 0.25]");
  stitch_cmd->add_option("--ground-truth", sf.ground_truth, "ground_truth.json (enables the oracle encoder)");
  stitch_cmd->add_option("--format", sf.format, "Composite format: auto | png | tif [auto]");

  auto* frag_cmd = app.add_subcommand("fragment", "Cut a slide into fragments with ground truth");
  add_run_flags(*frag_cmd, rf);
  frag_cmd->add_option("slide", ff.slide, "Slide image (omit with --synthetic)");
  frag_cmd->add_option("--synthetic", ff.synthetic, "Generate a synthetic slide of this side length, px");
  frag_cmd->add_option("--mpp", ff.slide_mpp, "Slide resolution, um/px [sidecar, else 0.25; synthetic 1.0]");
  frag_cmd->add_option("--layout", ff.layout, "halves | quadrants | grid [quadrants]");
  frag_cmd->add_option("--rows", ff.rows, "Grid rows [2]");
  frag_cmd->add_option("--cols", ff.cols, "Grid columns [2]");
  frag_cmd->add_option("--gap", ff.gap_um, "Strip removed along each cut, um [0]");
  frag_cmd->add_option("--trim-min", ff.trim_min, "Minimum cut-edge trim fraction [0]");
  frag_cmd->add_option("--trim-max", ff.trim_max, "Maximum cut-edge trim fraction [0]");
  frag_cmd->add_option("--rotation", ff.rotation_deg, "Random rotation range, +-degrees [0]");
  frag_cmd->add_option("--translation", ff.translation_px, "Random translation range, +-px [0]");

  auto* eval_cmd = app.add_subcommand("evaluate", "Run a benchmark experiment and write its CSV report");
  add_run_flags(*eval_cmd, rf);
  std::string ids;
  for (const auto& id : experiment_ids()) ids += (ids.empty() ? "" : " | ") + id;
  eval_cmd->add_option("experiment", ef.experiment, ids)->required();
  eval_cmd->add_option("--encoders", ef.encoders, "Encoders to sweep [baseline,ncc,oracle]")->delimiter(',');
  eval_cmd->add_option("--seeds", ef.seeds, "Synthetic slides per sweep point [3]");
  eval_cmd->add_option("--slide-size", ef.slide_size, "Synthetic slide side, px [2048]");
  eval_cmd->add_option("--gaps", ef.gaps, "Gap sweep, um [0,100,200,250,...,900]")->delimiter(',');
  eval_cmd->add_option("--offsets", ef.offsets, "Offset sweep, um [0,100,...,900]")->delimiter(',');
  eval_cmd->add_option("--neighborhoods", ef.neighborhoods, "Neighborhood sweep [0..5]")->delimiter(',');
  eval_cmd->add_option("--mpps", ef.mpps, "Resolution sweep, um/px [0.25,0.5,1,2,4]")->delimiter(',');
  eval_cmd->add_option("--pairs", ef.pairs, "Patch pairs per point [100]");
  eval_cmd->add_option("--correct-factor", ef.correct_factor, "Correct-match radius, strides [1.5]");
  eval_cmd->add_option("--oracle-sigma", ef.oracle_sigma, "Neighborhood-sweep oracle noise [calibrated]");

  auto* enc_cmd = app.add_subcommand("encode", "Serve one patch request with a built-in encoder");
  add_run_flags(*enc_cmd, rf);
  enc_cmd->add_option("request", request, "patches.bin (SSPB)")->required();
  enc_cmd->add_option("response", response, "features.bin (SSFV)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, log, err);
    return code == 0 ? kSuccess : kFailure;
  }

  try {
    if (*enc_cmd) {
      RunFlags local = rf;
      if (!local.encoder) local.encoder = "loopback";
      EncoderSpec spec = resolve_config(local).encoder_spec();
      return cmd_encode(request, response, spec);
    }
    const RunConfig cfg = resolve_config(rf);
    if (*stitch_cmd) return cmd_stitch(sf, cfg, log);
    if (*frag_cmd) return cmd_fragment(ff, cfg, log);
    if (*eval_cmd) return cmd_evaluate(ef, cfg, log);
  } catch (const std::exception& e) {
    err << "semstitch: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace semstitch::cli
