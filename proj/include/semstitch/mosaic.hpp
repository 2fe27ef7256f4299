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

#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "semstitch/align.hpp"
#include "semstitch/image_io.hpp"
#include "semstitch/matching.hpp"

namespace semstitch {

/// Every tunable of a stitch run.
struct RunConfig {
  double processing_mpp = 1.0;
  double output_mpp = 0.25;
  int patch_size = 224;
  double stride = 112.0;
  double inward_shift = 10.0;
  int neighborhood = 3;
  EncoderSpec encoder = EncoderSpec::baseline();
  RansacConfig ransac;
  std::uint64_t seed = 42;
  unsigned threads = 1;
  SegmentOptions segment;
  /// Closing radius applied to merged masks so hairline cracks along an
  /// aligned seam do not enter the boundary chain.
  int seam_close_radius = 3;
  double max_canvas_pixels = 2e9;
  std::filesystem::path out_dir = ".";
  /// Scratch space for the external encoder protocol.
  std::filesystem::path workdir;

  FramePlanOptions frame_options() const { return {patch_size, stride, inward_shift}; }

  /// Encoder spec with the run-level patch size and seed folded in.
  EncoderSpec encoder_spec() const {
    EncoderSpec e = encoder;
    e.patch_size = patch_size;
    if (e.kind == EncoderKind::ncc) e.dim = (patch_size / 4) * (patch_size / 4);
    e.seed = seed;
    return e;
  }
  RansacConfig ransac_config() const {
    RansacConfig r = ransac;
    r.seed = seed;
    r.threads = threads;
    return r;
  }
  std::filesystem::path scratch() const { return workdir.empty() ? out_dir / "encoder" : workdir; }

  void validate() const {
    if (!(processing_mpp > 0.0) || !(output_mpp > 0.0)) throw Error("mpp must be positive");
    if (patch_size < 8) throw Error("patch size must be at least 8");
    if (!(stride >= 1.0)) throw Error("stride must be at least 1");
    if (inward_shift < 0.0) throw Error("inward shift must be non-negative");
    if (neighborhood < 0) throw Error("neighborhood must be non-negative");
    if (!(max_canvas_pixels > 0.0)) throw Error("canvas budget must be positive");
    encoder_spec().validate();
    ransac_config().validate();
  }
};

/// One original input inside a (possibly merged) fragment.
struct Member {
  std::string id;
  /// Original pixels (processing resolution) -> fragment canvas pixels.
  RigidTransform pose;
  /// Merge that first involved this input (1-based); 0 while unmerged.
  int merge_step = 0;
  std::shared_ptr<const Raster> proc_image;
  std::shared_ptr<const Mask> proc_mask;
  /// Original at output resolution (for the final render).
  std::shared_ptr<const Raster> full_image;
  /// Original micrometres -> source-slide micrometres, when known.
  std::optional<RigidTransform> ground_truth;
};

struct Fragment {
  std::string id;
  Raster image;  ///< processing resolution
  Mask mask;
  /// Index into `members` of the input that painted each canvas pixel (-1: none).
  std::vector<int> labels;
  std::vector<PatchFrame> frames;
  /// Source-slide position (micrometres) of each frame's edge point, when
  /// ground truth is attached.
  std::vector<std::optional<Vec2>> source_points;
  std::vector<FeatureVector> features;
  std::vector<FeatureVector> mirrored_features;  ///< patches sampled walking backward
  std::vector<ContextStack> stacks;
  std::vector<Member> members;
};

/// Oracle-noise key of frame `i` of fragment `id`.
inline std::uint64_t patch_noise_key(const std::string& id, std::size_t i) {
  return mix64(hash_string(id), static_cast<std::uint64_t>(i));
}

// ---------------------------------------------------------------------------
// Rendering

struct RenderLayer {
  const Raster* image = nullptr;
  const Mask* mask = nullptr;
  double mask_scale = 1.0;  ///< image pixel -> mask pixel factor
  RigidTransform pose;      ///< image pixels -> frame coordinates
};

struct Canvas {
  Raster image;
  std::vector<int> labels;  ///< painting layer per pixel, -1 for none
  /// Frame coordinate of the canvas's (0, 0) corner.
  Vec2 origin;
};

namespace detail {

struct Box {
  double x0 = std::numeric_limits<double>::infinity();
  double y0 = std::numeric_limits<double>::infinity();
  double x1 = -std::numeric_limits<double>::infinity();
  double y1 = -std::numeric_limits<double>::infinity();

  void add(Vec2 p) {
    x0 = std::min(x0, p.x);
    y0 = std::min(y0, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
};

inline Box warped_extent(const RenderLayer& l) {
  Box b;
  const double w = l.image->width, h = l.image->height;
  for (Vec2 c : {Vec2{0, 0}, Vec2{w, 0}, Vec2{0, h}, Vec2{w, h}}) b.add(l.pose.apply(c));
  return b;
}

}  // namespace detail

/// Composites layers on a fresh canvas covering every warped image extent
/// plus `margin` pixels. Inverse-mapped bilinear sampling. Tissue pixels are
/// painted first, in layer order (earlier layers win); then the non-tissue
/// parts of each image fill what is still empty; the rest stays white.
inline Canvas render_layers(std::span<const RenderLayer> layers, double mpp, double max_pixels,
                            int margin = 16, unsigned threads = 1) {
  if (layers.empty()) throw Error("nothing to render");
  detail::Box box;
  int channels = 1;
  for (const auto& l : layers) {
    const auto b = detail::warped_extent(l);
    box.add({b.x0, b.y0});
    box.add({b.x1, b.y1});
    channels = std::max(channels, l.image->channels);
  }
  const double ox = std::floor(box.x0 + 1e-7) - margin;
  const double oy = std::floor(box.y0 + 1e-7) - margin;
  const double w = std::ceil(box.x1 - 1e-7) + margin - ox;
  const double h = std::ceil(box.y1 - 1e-7) + margin - oy;
  if (w * h > max_pixels || w > INT32_MAX || h > INT32_MAX) throw Error("canvas too large");

  Canvas cv;
  cv.origin = {ox, oy};
  cv.image = Raster(static_cast<int>(w), static_cast<int>(h), channels, mpp, 255);
  cv.labels.assign(cv.image.pixel_count(), -1);
  std::vector<std::uint8_t> filled(cv.image.pixel_count(), 0);

  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const auto& l = layers[li];
      const auto inv = l.pose.inverse();
      const auto b = detail::warped_extent(l);
      const int xa = std::max(0, static_cast<int>(std::floor(b.x0 - ox)) - 1);
      const int ya = std::max(0, static_cast<int>(std::floor(b.y0 - oy)) - 1);
      const int xb = std::min(cv.image.width, static_cast<int>(std::ceil(b.x1 - ox)) + 1);
      const int yb = std::min(cv.image.height, static_cast<int>(std::ceil(b.y1 - oy)) + 1);
      parallel_for(static_cast<std::size_t>(std::max(0, yb - ya)), threads, [&](std::size_t row) {
        const int y = ya + static_cast<int>(row);
        for (int x = xa; x < xb; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * cv.image.width + x;
          if (filled[i]) continue;
          const Vec2 q = inv.apply({x + 0.5 + ox, y + 0.5 + oy});
          if (q.x < 0.0 || q.y < 0.0 || q.x >= l.image->width || q.y >= l.image->height) continue;
          const bool tissue =
              l.mask && l.mask->test(static_cast<int>(std::floor(q.x * l.mask_scale)),
                                     static_cast<int>(std::floor(q.y * l.mask_scale)));
          if (pass == 0 && !tissue) continue;
          for (int c = 0; c < channels; ++c) {
            const int sc = l.image->channels == 1 ? 0 : c;
            cv.image.at(x, y, c) = round_sample(sample_bilinear(*l.image, q, sc));
          }
          filled[i] = 1;
          if (pass == 0) cv.labels[i] = static_cast<int>(li);
        }
      });
    }
  }
  return cv;
}

namespace detail {

inline std::vector<RenderLayer> processing_layers(const std::vector<Member>& members) {
  std::vector<RenderLayer> layers;
  for (const auto& m : members) layers.push_back({m.proc_image.get(), m.proc_mask.get(), 1.0, m.pose});
  return layers;
}

}  // namespace detail

/// Final whole-mount render at `out_mpp`: every member's full-resolution
/// original warped by its pose, translation rescaled from processing pixels.
inline Canvas render_composite(const Fragment& f, double processing_mpp, double out_mpp,
                               double max_pixels = 2e9, unsigned threads = 1) {
  std::vector<RenderLayer> layers;
  const double factor = processing_mpp / out_mpp;
  for (const auto& m : f.members) {
    if (!m.full_image) throw Error("fragment " + m.id + " has no full-resolution image");
    layers.push_back({m.full_image.get(), m.proc_mask.get(), out_mpp / processing_mpp, m.pose.scaled(factor)});
  }
  return render_layers(layers, out_mpp, max_pixels, 16, threads);
}

// ---------------------------------------------------------------------------
// Fragment preparation

namespace detail {

// Source-slide position of a canvas point, through the member that painted
// the tissue just inside it.
inline std::optional<Vec2> source_point(const Fragment& f, Vec2 p, Vec2 inward, double processing_mpp) {
  int member = -1;
  if (f.members.size() == 1) {
    member = 0;
  } else {
    for (int step = 1; step <= 32 && member < 0; ++step) {
      const Vec2 q = p + static_cast<double>(step) * inward;
      const int x = static_cast<int>(std::floor(q.x)), y = static_cast<int>(std::floor(q.y));
      if (f.image.contains(x, y)) member = f.labels[static_cast<std::size_t>(y) * f.image.width + x];
    }
    // Otherwise the nearest painted pixel (hole filling can put boundary
    // points next to unpainted canvas), searched in growing square rings.
    const int cx = static_cast<int>(std::floor(p.x)), cy = static_cast<int>(std::floor(p.y));
    const int reach = std::max(f.image.width, f.image.height);
    for (int r = 0; member < 0 && r <= reach; ++r) {
      int best = INT32_MAX;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; dx += (std::abs(dy) == r || r == 0) ? 1 : 2 * r) {
          if (!f.image.contains(cx + dx, cy + dy)) continue;
          const int l = f.labels[static_cast<std::size_t>(cy + dy) * f.image.width + cx + dx];
          if (l >= 0 && dx * dx + dy * dy < best) {
            best = dx * dx + dy * dy;
            member = l;
          }
        }
    }
  }
  if (member < 0) return std::nullopt;
  const auto& m = f.members[static_cast<std::size_t>(member)];
  if (!m.ground_truth) return std::nullopt;
  return m.ground_truth->apply(processing_mpp * m.pose.inverse().apply(p));
}

}  // namespace detail

/// Boundary -> frames -> patches -> embeddings -> stacks for a fragment
/// whose image, mask and members are set.
inline void analyze_fragment(Fragment& f, const RunConfig& cfg) {
  const BoundaryChain chain = trace_boundary(f.mask);
  f.frames = plan_frames(chain, f.mask, cfg.frame_options());
  if (f.frames.empty()) throw Error("fragment too small");
  std::vector<Patch> patches(f.frames.size());
  f.source_points.assign(f.frames.size(), std::nullopt);
  parallel_for(patches.size(), cfg.threads, [&](std::size_t i) {
    patches[i] = extract(f.image, f.frames[i]);
    f.source_points[i] = detail::source_point(f, f.frames[i].edge_point, f.frames[i].normal, cfg.processing_mpp);
    patches[i].source_point = f.source_points[i];
    patches[i].noise_key = patch_noise_key(f.id, i);
  });
  const std::size_t m = patches.size();
  patches.reserve(2 * m);
  for (std::size_t i = 0; i < m; ++i) patches.push_back(mirrored(patches[i]));
  auto all = encode_all(cfg.encoder_spec(), patches, cfg.scratch() / f.id, cfg.threads);
  f.mirrored_features.assign(std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(m)),
                             std::make_move_iterator(all.end()));
  all.resize(m);
  f.features = std::move(all);
  f.stacks = build_stacks(f.features, cfg.neighborhood, f.mirrored_features);
}

/// Builds an input fragment from an image at any resolution. `ground_truth`
/// maps the image's micrometre coordinates into the source slide.
inline Fragment prepare_fragment(std::string id, const Raster& img, const RunConfig& cfg,
                                 std::optional<RigidTransform> ground_truth = std::nullopt) {
  Fragment f;
  f.id = std::move(id);
  f.image = resample(img, cfg.processing_mpp);
  f.mask = segment_tissue(f.image, cfg.segment);
  f.labels.assign(f.image.pixel_count(), -1);
  for (std::size_t i = 0; i < f.labels.size(); ++i)
    if (f.mask.bits[i]) f.labels[i] = 0;
  Member m;
  m.id = f.id;
  m.proc_image = std::make_shared<const Raster>(f.image);
  m.proc_mask = std::make_shared<const Mask>(f.mask);
  m.full_image = std::make_shared<const Raster>(resample(img, cfg.output_mpp));
  m.ground_truth = ground_truth;
  f.members.push_back(std::move(m));
  analyze_fragment(f, cfg);
  return f;
}

inline Fragment prepare_fragment(const std::filesystem::path& path, const RunConfig& cfg,
                                 std::optional<double> mpp_override = std::nullopt) {
  return prepare_fragment(path.stem().string(), load_image(path, mpp_override), cfg);
}

// ---------------------------------------------------------------------------
// Alignment of one fragment pair

/// Boundary-side correspondence points for candidate matches: the moving
/// frame's edge point and the fixed edge point interpolated along the fixed
/// boundary at the refined peak position.
inline std::vector<PointMatch> correspondence_points(const Fragment& moving, const Fragment& fixed,
                                                     std::span<const CandidateMatch> matches) {
  std::vector<PointMatch> pts;
  pts.reserve(matches.size());
  const std::size_t n = fixed.frames.size();
  for (const auto& m : matches) {
    const double off = refine_fixed_offset(moving.stacks[m.moving_index], fixed.stacks, m);
    const Vec2 e0 = fixed.frames[m.fixed_index].edge_point;
    Vec2 e = e0;
    if (off > 0.0) e = e0 + off * (fixed.frames[(m.fixed_index + 1) % n].edge_point - e0);
    if (off < 0.0) e = e0 + (-off) * (fixed.frames[(m.fixed_index + n - 1) % n].edge_point - e0);
    pts.push_back({moving.frames[m.moving_index].edge_point, e});
  }
  return pts;
}

/// Merges `moving` into `fixed` using `pose` (moving canvas -> fixed canvas).
/// Fixed members keep precedence.
inline Fragment merge_fragments(const Fragment& fixed, const Fragment& moving, const RigidTransform& pose,
                                int step, const RunConfig& cfg) {
  Fragment out;
  out.id = "merge-" + std::to_string(step);
  for (auto m : fixed.members) {
    if (m.merge_step == 0) m.merge_step = step;
    out.members.push_back(std::move(m));
  }
  for (auto m : moving.members) {
    if (m.merge_step == 0) m.merge_step = step;
    m.pose = pose * m.pose;
    out.members.push_back(std::move(m));
  }
  const auto layers = detail::processing_layers(out.members);
  Canvas cv = render_layers(layers, cfg.processing_mpp, cfg.max_canvas_pixels, 16, cfg.threads);
  // Canvas origin becomes the new frame origin (integer shift: fixed pixels
  // are reproduced exactly).
  const auto shift = RigidTransform::translation(-1.0 * cv.origin);
  for (auto& m : out.members) m.pose = shift * m.pose;
  out.image = std::move(cv.image);
  out.labels = std::move(cv.labels);
  out.mask = Mask(out.image.width, out.image.height);
  for (std::size_t i = 0; i < out.labels.size(); ++i) out.mask.bits[i] = out.labels[i] >= 0;
  out.mask = morph_close(out.mask, cfg.seam_close_radius);
  remove_small_components(out.mask, cfg.segment.min_component_area);
  if (out.mask.count() == 0) throw Error("no tissue found");
  fill_holes(out.mask);
  analyze_fragment(out, cfg);
  return out;
}

// ---------------------------------------------------------------------------
// Stitch loop

struct MergeAttempt {
  std::string fixed_id;
  double score = 0.0;
  std::string error;  ///< empty on success
};

struct MergeRecord {
  int step = 0;
  std::string moving_id;
  std::string fixed_id;
  double score = 0.0;
  std::size_t candidates = 0;
  std::size_t inliers = 0;
  std::size_t consensus = 0;
  RigidTransform pose;  ///< moving canvas -> fixed canvas, processing pixels
  std::vector<std::string> moving_members;
  std::vector<std::string> fixed_members;
  std::vector<CandidateMatch> matches;
  std::vector<PointMatch> points;
  std::vector<std::uint8_t> inlier_mask;
  std::vector<MergeAttempt> attempts;
};

struct StitchResult {
  bool complete = false;
  std::vector<Fragment> pool;  ///< remaining fragments; one when complete
  std::vector<MergeRecord> merges;
  std::vector<std::string> input_ids;
  std::string abort_reason;
};

/// Merges the pool down to one fragment. Each step picks the moving
/// fragment uniformly at random (stream keyed by seed and step), ranks fixed
/// candidates by pairing score, and merges with the best one whose RANSAC
/// reaches consensus. If none does, the run stops with a partial result.
inline StitchResult stitch(std::vector<Fragment> pool, const RunConfig& cfg) {
  cfg.validate();
  if (pool.empty()) throw Error("empty pool");
  StitchResult res;
  for (const auto& f : pool) res.input_ids.push_back(f.id);
  int step = 0;
  while (pool.size() > 1) {
    ++step;
    std::mt19937_64 rng(mix64(cfg.seed, 0x5717c4ULL + static_cast<std::uint64_t>(step)));
    const std::size_t mi = detail::bounded(rng, pool.size());
    std::vector<FragmentFeatures> feats;
    for (const auto& f : pool) feats.push_back({f.id, f.stacks});
    const auto ranked = rank_pairings(pool[mi].id, feats, cfg.threads);

    MergeRecord rec;
    rec.step = step;
    rec.moving_id = pool[mi].id;
    bool merged = false;
    for (const auto& cand : ranked) {
      std::size_t fi = 0;
      while (pool[fi].id != cand.fixed_id) ++fi;
      const auto pts = correspondence_points(pool[mi], pool[fi], cand.matches);
      RansacResult rr;
      try {
        rr = ransac_rigid(pts, cfg.ransac_config());
      } catch (const Error& e) {
        rec.attempts.push_back({cand.fixed_id, cand.score, e.what()});
        continue;
      }
      rec.attempts.push_back({cand.fixed_id, cand.score, ""});
      rec.fixed_id = cand.fixed_id;
      rec.score = cand.score;
      rec.candidates = cand.matches.size();
      rec.inliers = rr.inlier_count;
      rec.consensus = rr.consensus_count;
      rec.pose = rr.transform;
      for (const auto& m : pool[mi].members) rec.moving_members.push_back(m.id);
      for (const auto& m : pool[fi].members) rec.fixed_members.push_back(m.id);
      rec.matches = cand.matches;
      rec.points = pts;
      rec.inlier_mask = rr.inliers;

      Fragment merged_fragment = merge_fragments(pool[fi], pool[mi], rr.transform, step, cfg);
      pool[fi] = std::move(merged_fragment);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(mi));
      merged = true;
      break;
    }
    res.merges.push_back(std::move(rec));
    if (!merged) {
      res.abort_reason = "no consensus for fragment " + res.merges.back().moving_id + " with any partner";
      break;
    }
  }
  res.complete = pool.size() == 1;
  res.pool = std::move(pool);
  return res;
}

// ---------------------------------------------------------------------------
// Manifest

inline nlohmann::ordered_json encoder_to_json(const EncoderSpec& e) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(e.kind);
  j["dim"] = e.dim;
  j["patch_size"] = e.patch_size;
  if (e.kind == EncoderKind::baseline) j["grid"] = e.grid;
  if (e.kind == EncoderKind::oracle) {
    j["sigma"] = e.sigma;
    j["wavelength"] = e.wavelength;
  }
  if (e.kind == EncoderKind::external) j["command"] = e.command;
  return j;
}

inline nlohmann::ordered_json config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["processing_mpp"] = c.processing_mpp;
  j["output_mpp"] = c.output_mpp;
  j["patch_size"] = c.patch_size;
  j["stride"] = c.stride;
  j["inward_shift"] = c.inward_shift;
  j["neighborhood"] = c.neighborhood;
  j["encoder"] = encoder_to_json(c.encoder_spec());
  j["ransac"] = {{"inlier_threshold", c.ransac.inlier_threshold},
                 {"max_iterations", c.ransac.max_iterations},
                 {"sample_size", c.ransac.sample_size},
                 {"min_inliers", c.ransac.min_inliers},
                 {"polish_iterations", c.ransac.polish_iterations}};
  j["min_component_area"] = c.segment.min_component_area;
  j["seam_close_radius"] = c.seam_close_radius;
  j["max_canvas_pixels"] = c.max_canvas_pixels;
  return j;
}

/// Reads the keys present in `j` into `c` (config-file layer).
inline void apply_config_json(RunConfig& c, const nlohmann::json& j) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("processing_mpp", c.processing_mpp);
  get("output_mpp", c.output_mpp);
  get("patch_size", c.patch_size);
  get("stride", c.stride);
  get("inward_shift", c.inward_shift);
  get("neighborhood", c.neighborhood);
  get("seed", c.seed);
  get("threads", c.threads);
  get("seam_close_radius", c.seam_close_radius);
  get("max_canvas_pixels", c.max_canvas_pixels);
  get("min_component_area", c.segment.min_component_area);
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    const auto kind = parse_encoder_kind(e.value("kind", std::string(to_string(c.encoder.kind))));
    if (kind != c.encoder.kind) {
      switch (kind) {
        case EncoderKind::baseline: c.encoder = EncoderSpec::baseline(); break;
        case EncoderKind::ncc: c.encoder = EncoderSpec::ncc(c.patch_size); break;
        case EncoderKind::oracle: c.encoder = EncoderSpec::oracle(); break;
        case EncoderKind::external: c.encoder = EncoderSpec::external("", 1024); break;
        case EncoderKind::loopback: c.encoder = EncoderSpec::loopback(); break;
      }
    }
    if (e.contains("grid")) {
      c.encoder.grid = e.at("grid").get<int>();
      c.encoder.dim = 3 * c.encoder.grid * c.encoder.grid;
    }
    if (e.contains("dim")) c.encoder.dim = e.at("dim").get<int>();
    if (e.contains("sigma")) c.encoder.sigma = e.at("sigma").get<double>();
    if (e.contains("wavelength")) c.encoder.wavelength = e.at("wavelength").get<double>();
    if (e.contains("command")) c.encoder.command = e.at("command").get<std::string>();
  }
  if (j.contains("ransac")) {
    const auto& r = j.at("ransac");
    if (r.contains("inlier_threshold")) c.ransac.inlier_threshold = r.at("inlier_threshold").get<double>();
    if (r.contains("max_iterations")) c.ransac.max_iterations = r.at("max_iterations").get<int>();
    if (r.contains("sample_size")) c.ransac.sample_size = r.at("sample_size").get<int>();
    if (r.contains("min_inliers")) c.ransac.min_inliers = r.at("min_inliers").get<int>();
    if (r.contains("polish_iterations")) c.ransac.polish_iterations = r.at("polish_iterations").get<int>();
  }
}

/// Pose of every input in output pixels. `origin` is the frame coordinate
/// (output pixels) of the rendered canvas corner for component 0.
struct PlacedInput {
  std::string id;
  RigidTransform pose;  ///< input pixels at output mpp -> canvas pixels
  int merge_step = 0;
  int component = 0;
};

inline std::vector<PlacedInput> placements(const StitchResult& r, double processing_mpp, double output_mpp,
                                           Vec2 origin0 = {}) {
  std::vector<PlacedInput> out;
  for (const auto& id : r.input_ids) {
    for (std::size_t c = 0; c < r.pool.size(); ++c) {
      for (const auto& m : r.pool[c].members) {
        if (m.id != id) continue;
        RigidTransform p = m.pose.scaled(processing_mpp / output_mpp);
        if (c == 0) p = RigidTransform::translation(-1.0 * origin0) * p;
        out.push_back({id, p, m.merge_step, static_cast<int>(c)});
      }
    }
  }
  return out;
}

inline nlohmann::ordered_json make_manifest(const StitchResult& r, const RunConfig& cfg, Vec2 origin0 = {},
                                            int canvas_width = 0, int canvas_height = 0) {
  nlohmann::ordered_json j;
  j["status"] = r.complete ? "complete" : "partial";
  j["seed"] = cfg.seed;
  j["config"] = config_to_json(cfg);
  j["canvas"] = {{"width", canvas_width}, {"height", canvas_height}, {"mpp", cfg.output_mpp}};
  auto frags = nlohmann::ordered_json::array();
  for (const auto& p : placements(r, cfg.processing_mpp, cfg.output_mpp, origin0)) {
    frags.push_back({{"id", p.id},
                     {"theta_deg", rad_to_deg(p.pose.theta)},
                     {"tx", p.pose.t.x},
                     {"ty", p.pose.t.y},
                     {"merge_step", p.merge_step},
                     {"component", p.component}});
  }
  j["fragments"] = frags;
  auto merges = nlohmann::ordered_json::array();
  for (const auto& m : r.merges) {
    nlohmann::ordered_json e;
    e["step"] = m.step;
    e["moving"] = m.moving_id;
    e["fixed"] = m.fixed_id.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(m.fixed_id);
    e["score"] = m.score;
    e["candidates"] = m.candidates;
    e["inliers"] = m.inliers;
    e["consensus"] = m.consensus;
    auto attempts = nlohmann::ordered_json::array();
    for (const auto& a : m.attempts)
      attempts.push_back({{"fixed", a.fixed_id}, {"score", a.score}, {"error", a.error}});
    e["attempts"] = attempts;
    merges.push_back(e);
  }
  j["merges"] = merges;
  if (!r.complete && !r.abort_reason.empty()) j["abort_reason"] = r.abort_reason;
  return j;
}

}  // namespace semstitch
