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

// Ground-truth scoring and the benchmark experiments.
//
// Reports are CSV with header `experiment,variable,value,metric,mean,std,n`.
// Wall-clock measurements go to a separate `<experiment>_timing.csv` so the
// main reports stay byte-reproducible.

#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "semstitch/synthetic.hpp"

namespace semstitch {

struct ReportRow {
  std::string experiment;
  std::string variable;
  std::string value;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s = buf;
  if (s == "-0.000000") s = "0.000000";
  return s;
}

inline std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline void write_report(const std::filesystem::path& path, const std::vector<ReportRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "experiment,variable,value,metric,mean,std,n\n";
  for (const auto& r : rows)
    out << r.experiment << ',' << r.variable << ',' << r.value << ',' << r.metric << ',' << format_number(r.mean)
        << ',' << format_number(r.std) << ',' << r.n << '\n';
}

/// Mean and sample standard deviation over the finite entries.
struct Summary {
  double mean = std::nan("");
  double std = 0.0;
  std::size_t n = 0;
};

inline Summary summarize(const std::vector<double>& xs) {
  Summary s;
  double sum = 0.0;
  for (double x : xs)
    if (std::isfinite(x)) {
      sum += x;
      ++s.n;
    }
  if (s.n == 0) return s;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double x : xs)
      if (std::isfinite(x)) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

inline ReportRow make_row(std::string experiment, std::string variable, std::string value, std::string metric,
                          const std::vector<double>& xs) {
  const Summary s = summarize(xs);
  return {std::move(experiment), std::move(variable), std::move(value), std::move(metric), s.mean, s.std, s.n};
}

// ---------------------------------------------------------------------------
// Scoring

/// Pose of each input in micrometres: input micrometres -> component frame
/// micrometres.
struct PoseUm {
  RigidTransform pose;
  int component = 0;
};

inline std::map<std::string, PoseUm> poses_um(const StitchResult& r, double processing_mpp) {
  std::map<std::string, PoseUm> out;
  for (std::size_t c = 0; c < r.pool.size(); ++c)
    for (const auto& m : r.pool[c].members) out[m.id] = {m.pose.scaled(processing_mpp), static_cast<int>(c)};
  return out;
}

/// Percentage of ground-truth seams whose two fragments ended up in one
/// component with a relative pose within tolerance (rotation in degrees,
/// translation of fragment a's tissue centroid in micrometres).
inline double score_boundary_matches(const std::map<std::string, PoseUm>& poses, const GroundTruth& gt,
                                     double tol_deg, double tol_um) {
  if (gt.seams.empty()) return 100.0;
  std::size_t matched = 0;
  for (const auto& s : gt.seams) {
    const auto ia = poses.find(s.a), ib = poses.find(s.b);
    if (ia == poses.end() || ib == poses.end()) continue;
    if (ia->second.component != ib->second.component) continue;
    const auto& ga = gt.fragment(s.a);
    const auto& gb = gt.fragment(s.b);
    const RigidTransform rec = ib->second.pose.inverse() * ia->second.pose;
    const RigidTransform tru = gb.to_source.inverse() * ga.to_source;
    const double dtheta = std::abs(rad_to_deg(wrap_angle(rec.theta - tru.theta)));
    const double dt = norm(rec.apply(ga.centroid_um) - tru.apply(ga.centroid_um));
    matched += dtheta <= tol_deg && dt <= tol_um;
  }
  return 100.0 * static_cast<double>(matched) / static_cast<double>(gt.seams.size());
}

/// Mean absolute intensity difference between the processing-resolution
/// composite and the source slide over covered tissue pixels.
inline double covered_pixel_mad(const Fragment& merged, const SyntheticSlide& slide, const GroundTruth& gt,
                                double processing_mpp) {
  const Raster src = resample(slide.image, processing_mpp);
  const double scale = slide.truth.width / static_cast<double>(src.width);
  const Member& anchor = merged.members.front();
  const RigidTransform canvas_to_source =
      gt.fragment(anchor.id).to_source * anchor.pose.scaled(processing_mpp).inverse();
  double diff = 0.0;
  std::size_t count = 0;
  const Raster& img = merged.image;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      if (merged.labels[static_cast<std::size_t>(y) * img.width + x] < 0) continue;
      const Vec2 s = (1.0 / processing_mpp) * canvas_to_source.apply(processing_mpp * Vec2{x + 0.5, y + 0.5});
      if (!slide.truth.test(static_cast<int>(std::floor(s.x * scale)), static_cast<int>(std::floor(s.y * scale))))
        continue;
      for (int c = 0; c < img.channels; ++c) {
        const int sc = src.channels == 1 ? 0 : c;
        diff += std::abs(img.at(x, y, c) - sample_bilinear(src, s, sc));
        ++count;
      }
    }
  return count ? diff / static_cast<double>(count) : std::nan("");
}

struct MatchAccuracy {
  std::size_t seam_candidates = 0;
  std::size_t seam_correct = 0;
  std::size_t inliers = 0;          ///< seam frames kept by RANSAC
  std::size_t inliers_correct = 0;
  bool consensus = false;

  double before() const {
    return seam_candidates ? static_cast<double>(seam_correct) / static_cast<double>(seam_candidates) : std::nan("");
  }
  double after() const {
    return inliers ? static_cast<double>(inliers_correct) / static_cast<double>(inliers) : std::nan("");
  }
};

/// Correctness of candidate matches between two original fragments that
/// share a seam. A moving frame is a seam frame when its edge point lies on
/// its side of the cut (within a quarter stride). A match is correct when the
/// matched edge points, after removing the cut strip, are within
/// `factor * stride` in the source slide. Both fractions count seam frames
/// only: all of them before RANSAC, the inliers among them after.
inline MatchAccuracy score_candidate_matches(const Fragment& moving, const Fragment& fixed,
                                             std::span<const CandidateMatch> matches,
                                             std::span<const std::uint8_t> inlier_mask, const GroundTruth& gt,
                                             double stride_um, double factor = 1.5) {
  const Seam* seam = gt.seam(moving.id, fixed.id);
  if (!seam) throw Error("fragments " + moving.id + " and " + fixed.id + " share no seam");
  const Vec2 n = seam->a == moving.id ? seam->normal : -1.0 * seam->normal;
  const double half_gap = 0.5 * seam->gap_um;
  MatchAccuracy acc;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const auto& m = matches[i];
    const auto& pm = moving.source_points.at(m.moving_index);
    const auto& pf = fixed.source_points.at(m.fixed_index);
    if (!pm || !pf) throw Error("match scoring needs ground-truth positions");
    const bool on_seam = std::abs(dot(*pm - seam->point, n) + half_gap) <= 0.25 * stride_um;
    const bool correct = on_seam && norm(*pf - *pm - seam->gap_um * n) <= factor * stride_um;
    acc.seam_candidates += on_seam;
    acc.seam_correct += correct;
    if (on_seam && !inlier_mask.empty() && inlier_mask[i]) {
      ++acc.inliers;
      acc.inliers_correct += correct;
    }
  }
  acc.consensus = !inlier_mask.empty();
  return acc;
}

// ---------------------------------------------------------------------------
// Experiments

struct HarnessOptions {
  RunConfig run;
  int slide_size = 2048;
  double slide_mpp = 1.0;
  int seeds = 3;
  std::vector<EncoderSpec> encoders{EncoderSpec::baseline(), EncoderSpec::ncc(), EncoderSpec::oracle()};
  double correct_factor = 1.5;  ///< correct match radius, in strides
  double pose_tol_deg = 10.0;
  double pose_tol_patches = 2.0;  ///< seam translation tolerance, in patch sizes
  std::vector<double> gaps_um{0, 100, 200, 250, 300, 400, 500, 600, 700, 800, 900};
  std::vector<int> neighborhoods{0, 1, 2, 3, 4, 5};
  std::vector<double> neighborhood_gaps_um{0, 224, 448};
  std::optional<double> oracle_sigma;  ///< neighborhood sweep noise; calibrated when unset
  double calibration_target = 0.3;
  std::vector<double> offsets_um{0, 100, 200, 300, 400, 500, 600, 700, 800, 900};
  int pairs = 100;
  double rotation_step_deg = 15.0;
  std::vector<double> mpps{0.25, 0.5, 1.0, 2.0, 4.0};
  std::filesystem::path out_dir = ".";
};

inline const std::vector<std::string>& experiment_ids() {
  static const std::vector<std::string> ids{"boundary-match", "match-dump", "match-vs-gap", "similarity-vs-offset",
                                            "rotation", "neighborhood", "resolution"};
  return ids;
}

namespace detail {

inline RunConfig harness_run(const HarnessOptions& o, const EncoderSpec& enc) {
  RunConfig c = o.run;
  c.encoder = enc;
  c.output_mpp = c.processing_mpp;
  if (c.workdir.empty()) c.workdir = o.out_dir / "encoder";
  return c;
}

inline std::uint64_t slide_seed(const HarnessOptions& o, int k) {
  return mix64(o.run.seed, static_cast<std::uint64_t>(k));
}

inline std::vector<Fragment> prepare_set(const FragmentSet& set, const RunConfig& cfg) {
  std::vector<Fragment> out;
  for (std::size_t i = 0; i < set.fragments.size(); ++i)
    out.push_back(prepare_fragment(set.fragments[i].id, set.fragments[i].image, cfg,
                                   set.truth.fragment(set.fragments[i].id).to_source));
  return out;
}

inline FragmentationSpec quadrant_protocol(std::uint64_t seed, double gap_um) {
  FragmentationSpec f;
  f.layout = Layout::quadrants;
  f.gap_um = gap_um;
  f.trim_min = 0.0;
  f.trim_max = 0.2;
  f.rotation_deg = 180.0;
  f.translation_px = 32.0;
  f.seed = seed;
  return f;
}

inline FragmentationSpec halves(std::uint64_t seed, double gap_um) {
  FragmentationSpec f;
  f.layout = Layout::halves;
  f.gap_um = gap_um;
  f.seed = seed;
  return f;
}

inline std::string enc_name(const EncoderSpec& e) { return to_string(e.kind); }

// Oracle embeddings of an already-analysed fragment under another noise level.
inline std::vector<FeatureVector> oracle_features(const Fragment& f, const EncoderSpec& spec) {
  std::vector<FeatureVector> out(f.frames.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    Patch p;
    p.source_point = f.source_points[i];
    p.noise_key = patch_noise_key(f.id, i);
    out[i] = encode(spec, p);
  }
  return out;
}

struct PairRun {
  std::vector<CandidateMatch> matches;
  std::vector<PointMatch> points;
  std::vector<std::uint8_t> inliers;  ///< empty without consensus
  MatchAccuracy accuracy;
};

inline PairRun run_pair(const Fragment& moving, const Fragment& fixed, const GroundTruth& gt, const RunConfig& cfg,
                        double factor) {
  PairRun r;
  r.matches = match_candidates(moving.stacks, fixed.stacks, cfg.threads);
  r.points = correspondence_points(moving, fixed, r.matches);
  try {
    r.inliers = ransac_rigid(r.points, cfg.ransac_config()).inliers;
  } catch (const Error&) {
    r.inliers.clear();
  }
  r.accuracy = score_candidate_matches(moving, fixed, r.matches, r.inliers, gt, cfg.stride * cfg.processing_mpp, factor);
  return r;
}

}  // namespace detail

/// Quadrant protocol: gap one patch, seam trim 0-20%, random rotation and
/// translation; boundary-match percentage per encoder over seeds.
inline std::vector<ReportRow> run_boundary_match(const HarnessOptions& o) {
  std::vector<ReportRow> rows;
  const double gap = o.run.patch_size * o.run.processing_mpp;
  for (const auto& enc : o.encoders) {
    const RunConfig cfg = detail::harness_run(o, enc);
    std::vector<double> rate, complete;
    for (int k = 0; k < o.seeds; ++k) {
      const auto slide = generate_synthetic_slide(detail::slide_seed(o, k), o.slide_size, o.slide_mpp);
      const auto set = fragment_slide(slide, detail::quadrant_protocol(detail::slide_seed(o, k), gap));
      double pct = 0.0;
      bool done = false;
      try {
        const auto res = stitch(detail::prepare_set(set, cfg), cfg);
        pct = score_boundary_matches(poses_um(res, cfg.processing_mpp), set.truth, o.pose_tol_deg,
                                     o.pose_tol_patches * cfg.patch_size * cfg.processing_mpp);
        done = res.complete;
      } catch (const Error&) {
        pct = 0.0;
      }
      rate.push_back(pct);
      complete.push_back(done ? 1.0 : 0.0);
    }
    rows.push_back(make_row("boundary-match", "encoder", detail::enc_name(enc), "boundary_match_pct", rate));
    rows.push_back(make_row("boundary-match", "encoder", detail::enc_name(enc), "complete_fraction", complete));
  }
  return rows;
}

/// Candidate matches before and after RANSAC on one halves split (gap one
/// patch); per encoder, a `match_dump_<encoder>.csv` in the matcher's debug
/// format and a `match_points_<encoder>.csv` with positions and flags.
inline std::vector<ReportRow> run_match_dump(const HarnessOptions& o) {
  std::vector<ReportRow> rows;
  const double gap = o.run.patch_size * o.run.processing_mpp;
  const auto slide = generate_synthetic_slide(detail::slide_seed(o, 0), o.slide_size, o.slide_mpp);
  const auto set = fragment_slide(slide, detail::halves(detail::slide_seed(o, 0), gap));
  for (const auto& enc : o.encoders) {
    const RunConfig cfg = detail::harness_run(o, enc);
    const auto frags = detail::prepare_set(set, cfg);
    const auto pr = detail::run_pair(frags[0], frags[1], set.truth, cfg, o.correct_factor);
    const std::string name = detail::enc_name(enc);
    std::filesystem::create_directories(o.out_dir);
    write_match_csv(o.out_dir / ("match_dump_" + name + ".csv"), pr.matches);
    std::ofstream pts(o.out_dir / ("match_points_" + name + ".csv"), std::ios::binary | std::ios::trunc);
    pts << "moving_index,fixed_index,moving_x,moving_y,fixed_x,fixed_y,inlier\n";
    for (std::size_t i = 0; i < pr.matches.size(); ++i) {
      pts << pr.matches[i].moving_index << ',' << pr.matches[i].fixed_index << ','
          << format_number(pr.points[i].moving.x) << ',' << format_number(pr.points[i].moving.y) << ','
          << format_number(pr.points[i].fixed.x) << ',' << format_number(pr.points[i].fixed.y) << ','
          << (pr.inliers.empty() ? 0 : static_cast<int>(pr.inliers[i])) << '\n';
    }
    rows.push_back(make_row("match-dump", "encoder", name, "candidates", {static_cast<double>(pr.matches.size())}));
    rows.push_back(make_row("match-dump", "encoder", name, "inliers", {static_cast<double>(pr.accuracy.inliers)}));
    rows.push_back(make_row("match-dump", "encoder", name, "correct_before", {pr.accuracy.before()}));
    rows.push_back(make_row("match-dump", "encoder", name, "correct_after", {pr.accuracy.after()}));
  }
  return rows;
}

/// Fraction of correct candidate matches (seam frames) before RANSAC and
/// among RANSAC inliers, halves split, gap swept.
inline std::vector<ReportRow> run_match_vs_gap(const HarnessOptions& o) {
  std::vector<ReportRow> rows;
  std::vector<SyntheticSlide> slides;
  for (int k = 0; k < o.seeds; ++k)
    slides.push_back(generate_synthetic_slide(detail::slide_seed(o, k), o.slide_size, o.slide_mpp));
  for (const auto& enc : o.encoders) {
    const RunConfig cfg = detail::harness_run(o, enc);
    const std::string name = detail::enc_name(enc);
    for (double gap : o.gaps_um) {
      std::vector<double> before, after, consensus;
      for (int k = 0; k < o.seeds; ++k) {
        const auto set = fragment_slide(slides[static_cast<std::size_t>(k)], detail::halves(detail::slide_seed(o, k), gap));
        const auto frags = detail::prepare_set(set, cfg);
        const auto pr = detail::run_pair(frags[0], frags[1], set.truth, cfg, o.correct_factor);
        before.push_back(pr.accuracy.before());
        after.push_back(pr.accuracy.after());
        consensus.push_back(pr.accuracy.consensus ? 1.0 : 0.0);
      }
      const std::string v = format_value(gap);
      rows.push_back(make_row("match-vs-gap", "gap_um", v, name + "/correct_before", before));
      rows.push_back(make_row("match-vs-gap", "gap_um", v, name + "/correct_after", after));
      rows.push_back(make_row("match-vs-gap", "gap_um", v, name + "/consensus", consensus));
    }
  }
  return rows;
}

namespace detail {

// Random frame of size `s` whose square (and the given margin around it)
// lies inside the tissue.
inline std::optional<PatchFrame> interior_frame(const SyntheticSlide& slide, std::mt19937_64& rng, int s,
                                                double margin) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    PatchFrame f;
    f.size = s;
    f.center = {uniform(rng, 0.0, slide.image.width), uniform(rng, 0.0, slide.image.height)};
    const double a = uniform(rng, 0.0, 2.0 * kPi);
    f.tangent = {std::cos(a), std::sin(a)};
    f.normal = perp(f.tangent);
    f.edge_point = f.center;
    const double r = s / 2.0 + margin;
    bool ok = true;
    for (int j = -4; j <= 4 && ok; ++j)
      for (int i = -4; i <= 4 && ok; ++i) {
        const Vec2 p = f.center + (r * i / 4.0) * f.tangent + (r * j / 4.0) * f.normal;
        ok = slide.truth.test(static_cast<int>(std::floor(p.x)), static_cast<int>(std::floor(p.y)));
      }
    if (ok) return f;
  }
  return std::nullopt;
}

inline FeatureVector encode_frame(const SyntheticSlide& slide, const PatchFrame& f, const EncoderSpec& spec) {
  Patch p = extract(slide.image, f);
  p.source_point = slide.image.mpp * f.center;
  return encode(spec, p);
}

}  // namespace detail

/// Cosine of patch pairs against tangential offset: same-side pairs (the
/// offset-0 pair is one patch twice) and pairs facing each other across a
/// virtual cut.
inline std::vector<ReportRow> run_similarity_vs_offset(const HarnessOptions& o) {
  std::vector<ReportRow> rows;
  const int s = o.run.patch_size;
  const double shift = o.run.inward_shift;
  for (const auto& enc0 : o.encoders) {
    EncoderSpec enc = detail::harness_run(o, enc0).encoder_spec();
    std::map<double, std::vector<double>> same, across;
    for (int k = 0; k < o.seeds; ++k) {
      const auto slide = generate_synthetic_slide(detail::slide_seed(o, k), o.slide_size, o.slide_mpp);
      std::mt19937_64 rng(mix64(detail::slide_seed(o, k), 0x0ff5e7ULL));
      const int pairs = std::max(1, o.pairs / std::max(1, o.seeds));
      for (int p = 0; p < pairs; ++p) {
        auto base = detail::interior_frame(slide, rng, s, 0.0);
        if (!base) break;
        const PatchFrame a = *base;
        const FeatureVector fa = detail::encode_frame(slide, a, enc);
        for (double off : o.offsets_um) {
          const double d = off / o.slide_mpp;
          PatchFrame b = a;
          b.center = a.center + d * a.tangent;
          PatchFrame c = a;
          c.normal = -1.0 * a.normal;
          c.tangent = -1.0 * a.tangent;
          c.center = a.center - (s + 2.0 * shift) * a.normal + d * a.tangent;
          const bool b_in = slide.truth.test(static_cast<int>(b.center.x), static_cast<int>(b.center.y));
          const bool c_in = slide.truth.test(static_cast<int>(c.center.x), static_cast<int>(c.center.y));
          if (b_in) same[off].push_back(cosine(fa, detail::encode_frame(slide, b, enc)));
          if (c_in) across[off].push_back(cosine(fa, detail::encode_frame(slide, c, enc)));
        }
      }
    }
    for (double off : o.offsets_um) {
      rows.push_back(make_row("similarity-vs-offset", "offset_um", format_value(off),
                              detail::enc_name(enc) + "/cosine_same_side", same[off]));
      rows.push_back(make_row("similarity-vs-offset", "offset_um", format_value(off),
                              detail::enc_name(enc) + "/cosine_across", across[off]));
    }
  }
  return rows;
}

/// Self-similarity of rotated patches against their four one-patch
/// neighbours.
inline std::vector<ReportRow> run_rotation(const HarnessOptions& o) {
  std::vector<ReportRow> rows;
  const int s = o.run.patch_size;
  const int steps = std::max(1, static_cast<int>(std::lround(360.0 / o.rotation_step_deg)));
  for (const auto& enc0 : o.encoders) {
    const EncoderSpec enc = detail::harness_run(o, enc0).encoder_spec();
    std::vector<std::vector<double>> self(steps), neigh(steps), wins(steps);
    for (int k = 0; k < o.seeds; ++k) {
      const auto slide = generate_synthetic_slide(detail::slide_seed(o, k), o.slide_size, o.slide_mpp);
      std::mt19937_64 rng(mix64(detail::slide_seed(o, k), 0x207a7eULL));
      const int count = std::max(1, o.pairs / std::max(1, o.seeds));
      for (int p = 0; p < count; ++p) {
        auto base = detail::interior_frame(slide, rng, s, 1.5 * s);
        if (!base) break;
        const PatchFrame a = *base;
        const FeatureVector fa = detail::encode_frame(slide, a, enc);
        std::vector<FeatureVector> nb;
        for (Vec2 d : {a.tangent, -1.0 * a.tangent, a.normal, -1.0 * a.normal}) {
          PatchFrame q = a;
          q.center = a.center + static_cast<double>(s) * d;
          nb.push_back(detail::encode_frame(slide, q, enc));
        }
        for (int i = 0; i < steps; ++i) {
          const double th = deg_to_rad(i * o.rotation_step_deg);
          PatchFrame r = a;
          r.tangent = RigidTransform{th, {}}.rotate(a.tangent);
          r.normal = perp(r.tangent);
          const FeatureVector fr = detail::encode_frame(slide, r, enc);
          const double cs = cosine(fr, fa);
          double best = -1.0;
          for (const auto& v : nb) best = std::max(best, cosine(fr, v));
          self[i].push_back(cs);
          neigh[i].push_back(best);
          wins[i].push_back(cs > best ? 1.0 : 0.0);
        }
      }
    }
    for (int i = 0; i < steps; ++i) {
      const std::string v = format_value(i * o.rotation_step_deg);
      const std::string name = detail::enc_name(enc);
      rows.push_back(make_row("rotation", "angle_deg", v, name + "/cosine_self", self[i]));
      rows.push_back(make_row("rotation", "angle_deg", v, name + "/cosine_best_neighbor", neigh[i]));
      rows.push_back(make_row("rotation", "angle_deg", v, name + "/self_beats_neighbors", wins[i]));
    }
  }
  return rows;
}

namespace detail {

struct HalvesCase {
  GroundTruth truth;
  std::vector<Fragment> frags;
};

inline double oracle_accuracy(const HalvesCase& h, double sigma, int n, const RunConfig& cfg, double factor) {
  EncoderSpec spec = EncoderSpec::oracle(sigma, cfg.seed);
  Fragment a = h.frags[0], b = h.frags[1];
  a.stacks = build_stacks(oracle_features(a, spec), n);
  b.stacks = build_stacks(oracle_features(b, spec), n);
  const auto matches = match_candidates(a.stacks, b.stacks);
  return score_candidate_matches(a, b, matches, {}, h.truth, cfg.stride * cfg.processing_mpp, factor).before();
}

inline double mean_accuracy(const std::vector<HalvesCase>& cases, double sigma, int n, const RunConfig& cfg,
                            double factor) {
  double s = 0.0;
  for (const auto& c : cases) s += oracle_accuracy(c, sigma, n, cfg, factor);
  return s / static_cast<double>(cases.size());
}

inline std::vector<HalvesCase> halves_cases(const HarnessOptions& o, int first, int count, double gap,
                                            const RunConfig& cfg) {
  std::vector<HalvesCase> out;
  for (int k = first; k < first + count; ++k) {
    const auto slide = generate_synthetic_slide(slide_seed(o, k), o.slide_size, o.slide_mpp);
    const auto set = fragment_slide(slide, halves(slide_seed(o, k), gap));
    out.push_back({set.truth, prepare_set(set, cfg)});
  }
  return out;
}

}  // namespace detail

/// Oracle noise level at which single-patch (n = 0) matching at gap 0 hits
/// `target` accuracy, by bisection on log(sigma) over calibration seeds
/// disjoint from the evaluation seeds.
inline double calibrate_oracle_sigma(const HarnessOptions& o, double target, int calibration_seeds = 5) {
  RunConfig cfg = detail::harness_run(o, EncoderSpec::oracle());
  cfg.neighborhood = 0;
  const auto cases = detail::halves_cases(o, 100000, calibration_seeds, 0.0, cfg);
  double lo = std::log(1e-4), hi = std::log(10.0);
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double acc = detail::mean_accuracy(cases, std::exp(mid), 0, cfg, o.correct_factor);
    if (acc > target) lo = mid;
    else hi = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

/// Seam match accuracy for neighbourhood radii and gaps under a noisy oracle.
inline std::vector<ReportRow> run_neighborhood(const HarnessOptions& o) {
  std::vector<ReportRow> rows;
  const double sigma = o.oracle_sigma ? *o.oracle_sigma : calibrate_oracle_sigma(o, o.calibration_target);
  rows.push_back(make_row("neighborhood", "sigma", "calibrated", "oracle_sigma", {sigma}));
  RunConfig cfg = detail::harness_run(o, EncoderSpec::oracle());
  cfg.neighborhood = 0;
  for (double gap : o.neighborhood_gaps_um) {
    const auto cases = detail::halves_cases(o, 0, o.seeds, gap, cfg);
    for (int n : o.neighborhoods) {
      std::vector<double> acc;
      for (const auto& c : cases) acc.push_back(detail::oracle_accuracy(c, sigma, n, cfg, o.correct_factor));
      rows.push_back(make_row("neighborhood", "n", std::to_string(n), "accuracy@gap" + format_value(gap), acc));
    }
  }
  return rows;
}

struct TimingRow {
  std::string variable;
  std::string value;
  double seconds = 0.0;
};

/// End-to-end quadrant stitching at several processing resolutions; the
/// slide is rendered once at the finest resolution and kept at constant
/// physical size.
inline std::vector<ReportRow> run_resolution(const HarnessOptions& o, std::vector<TimingRow>* timing = nullptr) {
  std::vector<ReportRow> rows;
  const double finest = *std::min_element(o.mpps.begin(), o.mpps.end());
  const double physical = o.slide_size * o.slide_mpp;
  const int size = static_cast<int>(std::lround(physical / finest));
  const double gap = o.run.patch_size * o.run.processing_mpp;
  for (const auto& enc : o.encoders) {
    for (double mpp : o.mpps) {
      RunConfig cfg = detail::harness_run(o, enc);
      cfg.processing_mpp = mpp;
      cfg.output_mpp = mpp;
      std::vector<double> rate;
      double secs = 0.0;
      for (int k = 0; k < o.seeds; ++k) {
        const auto slide = generate_synthetic_slide(detail::slide_seed(o, k), size, finest);
        const auto set = fragment_slide(slide, detail::quadrant_protocol(detail::slide_seed(o, k), gap));
        const auto t0 = std::chrono::steady_clock::now();
        double pct = 0.0;
        try {
          const auto res = stitch(detail::prepare_set(set, cfg), cfg);
          pct = score_boundary_matches(poses_um(res, mpp), set.truth, o.pose_tol_deg,
                                       o.pose_tol_patches * cfg.patch_size * o.run.processing_mpp);
        } catch (const Error&) {
          pct = 0.0;
        }
        secs += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rate.push_back(pct);
      }
      rows.push_back(make_row("resolution", "mpp", format_value(mpp), detail::enc_name(enc) + "/boundary_match_pct", rate));
      if (timing) timing->push_back({detail::enc_name(enc) + "@mpp", format_value(mpp), secs / std::max(1, o.seeds)});
    }
  }
  return rows;
}

/// Runs one experiment by id and writes `<id>.csv` (and `<id>_timing.csv`
/// where applicable) under `o.out_dir`.
inline std::vector<ReportRow> run_experiment(const std::string& id, const HarnessOptions& o) {
  std::vector<ReportRow> rows;
  std::vector<TimingRow> timing;
  if (id == "boundary-match") rows = run_boundary_match(o);
  else if (id == "match-dump") rows = run_match_dump(o);
  else if (id == "match-vs-gap") rows = run_match_vs_gap(o);
  else if (id == "similarity-vs-offset") rows = run_similarity_vs_offset(o);
  else if (id == "rotation") rows = run_rotation(o);
  else if (id == "neighborhood") rows = run_neighborhood(o);
  else if (id == "resolution") rows = run_resolution(o, &timing);
  else {
    std::string valid;
    for (const auto& e : experiment_ids()) valid += (valid.empty() ? "" : ", ") + e;
    throw Error("unknown experiment '" + id + "' (valid: " + valid + ")");
  }
  write_report(o.out_dir / (id + ".csv"), rows);
  if (!timing.empty()) {
    std::ofstream out(o.out_dir / (id + "_timing.csv"), std::ios::binary | std::ios::trunc);
    out << "variable,value,seconds\n";
    for (const auto& t : timing) out << t.variable << ',' << t.value << ',' << format_number(t.seconds) << '\n';
  }
  return rows;
}

}  // namespace semstitch
