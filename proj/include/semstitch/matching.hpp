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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "semstitch/encoder.hpp"

namespace semstitch {

/// Concatenation [f(k-n) ... f(k) ... f(k+n)] of boundary-neighbour
/// embeddings, indices taken modulo the frame count, re-normalised to unit L2.
///
/// `backward` is the same neighbourhood seen while walking the boundary the
/// other way: blocks in reverse order, each the embedding of the patch
/// sampled with the reversed tangent (a column-mirrored patch). Empty when
/// mirrored embeddings are not available; reversed comparisons then reverse
/// the blocks of `values`.
struct ContextStack {
  std::size_t center_index = 0;
  int radius = 0;
  std::size_t dim = 0;  ///< K of each constituent vector
  std::vector<float> values;
  std::vector<float> backward;

  std::size_t blocks() const { return 2 * static_cast<std::size_t>(radius) + 1; }
  std::span<const float> block(std::size_t b) const {
    return std::span<const float>(values).subspan(b * dim, dim);
  }
};

struct CandidateMatch {
  std::size_t moving_index = 0;
  std::size_t fixed_index = 0;
  double similarity = 0.0;
  /// The fixed stack was compared with its constituents in reverse order.
  bool reversed = false;
};

inline std::vector<ContextStack> build_stacks(std::span<const FeatureVector> features, int radius,
                                              std::span<const FeatureVector> mirrored = {}) {
  if (radius < 0) throw Error("neighbourhood radius must be non-negative");
  const std::size_t m = features.size();
  const std::size_t width = 2 * static_cast<std::size_t>(radius) + 1;
  if (m < width) throw Error("fragment boundary too short for neighborhood");
  const std::size_t dim = features.front().dim();
  for (const auto& f : features)
    if (f.dim() != dim) throw Error("feature dimension mismatch");
  if (!mirrored.empty() && mirrored.size() != m) throw Error("mirrored feature count mismatch");
  for (const auto& f : mirrored)
    if (f.dim() != dim) throw Error("feature dimension mismatch");

  std::vector<ContextStack> stacks(m);
  for (std::size_t k = 0; k < m; ++k) {
    auto& s = stacks[k];
    s.center_index = k;
    s.radius = radius;
    s.dim = dim;
    s.values.reserve(width * dim);
    for (std::size_t b = 0; b < width; ++b) {
      const std::size_t idx = (k + m + b - static_cast<std::size_t>(radius)) % m;
      const auto& v = features[idx].values;
      s.values.insert(s.values.end(), v.begin(), v.end());
    }
    l2_normalize(s.values);
    if (mirrored.empty()) continue;
    s.backward.reserve(width * dim);
    for (std::size_t b = 0; b < width; ++b) {
      const std::size_t idx = (k + m + static_cast<std::size_t>(radius) - b) % m;
      const auto& v = mirrored[idx].values;
      s.backward.insert(s.backward.end(), v.begin(), v.end());
    }
    l2_normalize(s.backward);
  }
  return stacks;
}

namespace detail {

inline double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

inline double stack_norm(const ContextStack& s) { return std::sqrt(dot(s.values, s.values)); }
inline double backward_norm(const ContextStack& s) {
  return s.backward.empty() ? stack_norm(s) : std::sqrt(dot(s.backward, s.backward));
}

// Cosine of moving stack `a` against fixed stack `b`, forward or walked
// backward. `nb` is the norm of the side of `b` being compared.
inline double stack_similarity(const ContextStack& a, double na, const ContextStack& b, double nb,
                               bool reversed) {
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  double s = 0.0;
  if (!reversed) {
    s = dot(a.values, b.values);
  } else if (!b.backward.empty()) {
    s = dot(a.values, b.backward);
  } else {
    const std::size_t w = a.blocks();
    for (std::size_t i = 0; i < w; ++i) s += dot(a.block(i), b.block(w - 1 - i));
  }
  return std::clamp(s / (na * nb), -1.0, 1.0);
}

inline void check_compatible(std::span<const ContextStack> moving, std::span<const ContextStack> fixed) {
  if (moving.empty() || fixed.empty()) throw Error("empty stack list");
  const auto& a = moving.front();
  for (const auto& s : moving)
    if (s.dim != a.dim || s.radius != a.radius) throw Error("K mismatch between stacks");
  for (const auto& s : fixed)
    if (s.dim != a.dim || s.radius != a.radius) throw Error("K mismatch between stacks");
}

}  // namespace detail

inline double stack_similarity(const ContextStack& moving, const ContextStack& fixed, bool reversed) {
  return detail::stack_similarity(moving, detail::stack_norm(moving), fixed,
                                  reversed ? detail::backward_norm(fixed) : detail::stack_norm(fixed), reversed);
}

/// For every moving stack, the best fixed stack over both traversal
/// directions (ties: smaller fixed index, forward before reversed).
inline std::vector<CandidateMatch> match_candidates(std::span<const ContextStack> moving,
                                                    std::span<const ContextStack> fixed,
                                                    unsigned threads = 1) {
  detail::check_compatible(moving, fixed);
  std::vector<double> fixed_norms(fixed.size()), backward_norms(fixed.size());
  for (std::size_t j = 0; j < fixed.size(); ++j) {
    fixed_norms[j] = detail::stack_norm(fixed[j]);
    backward_norms[j] = detail::backward_norm(fixed[j]);
  }
  std::vector<CandidateMatch> out(moving.size());
  parallel_for(moving.size(), threads, [&](std::size_t k) {
    const double nk = detail::stack_norm(moving[k]);
    CandidateMatch best{k, 0, -2.0, false};
    for (std::size_t j = 0; j < fixed.size(); ++j) {
      for (bool rev : {false, true}) {
        const double s =
            detail::stack_similarity(moving[k], nk, fixed[j], rev ? backward_norms[j] : fixed_norms[j], rev);
        if (s > best.similarity) best = {k, j, s, rev};
      }
    }
    out[k] = best;
  });
  return out;
}

/// Sub-frame position of a match along the fixed boundary: a parabola through
/// the similarities at fixed indices j-1, j, j+1 (same orientation, cyclic).
/// Returns the peak offset in frames, within [-0.5, 0.5].
inline double refine_fixed_offset(const ContextStack& moving, std::span<const ContextStack> fixed,
                                  const CandidateMatch& m) {
  const std::size_t n = fixed.size();
  if (n < 3) return 0.0;
  const std::size_t jm = (m.fixed_index + n - 1) % n;
  const std::size_t jp = (m.fixed_index + 1) % n;
  const double s0 = stack_similarity(moving, fixed[m.fixed_index], m.reversed);
  const double sm = stack_similarity(moving, fixed[jm], m.reversed);
  const double sp = stack_similarity(moving, fixed[jp], m.reversed);
  const double curvature = sm - 2.0 * s0 + sp;
  if (curvature >= 0.0) return 0.0;
  return std::clamp(0.5 * (sm - sp) / curvature, -0.5, 0.5);
}

/// Embeddings of one fragment as seen by the pairing step.
struct FragmentFeatures {
  std::string id;
  std::vector<ContextStack> stacks;
};

struct PairingResult {
  std::string fixed_id;
  double score = 0.0;
  std::vector<CandidateMatch> matches;
};

/// Sum of per-moving-stack best similarities against one fixed fragment.
inline double pairing_score(std::span<const CandidateMatch> matches) {
  double s = 0.0;
  for (const auto& m : matches) s += m.similarity;
  return s;
}

/// All fixed fragments ranked by pairing score (descending; ties by id).
inline std::vector<PairingResult> rank_pairings(const std::string& moving_id,
                                                std::span<const FragmentFeatures> pool,
                                                unsigned threads = 1) {
  const FragmentFeatures* moving = nullptr;
  for (const auto& f : pool)
    if (f.id == moving_id) moving = &f;
  if (!moving) throw Error("moving fragment '" + moving_id + "' not in pool");
  std::vector<PairingResult> ranked;
  for (const auto& f : pool) {
    if (f.id == moving_id) continue;
    PairingResult r;
    r.fixed_id = f.id;
    r.matches = match_candidates(moving->stacks, f.stacks, threads);
    r.score = pairing_score(r.matches);
    ranked.push_back(std::move(r));
  }
  if (ranked.empty()) throw Error("empty pool");
  std::stable_sort(ranked.begin(), ranked.end(), [](const PairingResult& a, const PairingResult& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.fixed_id < b.fixed_id;
  });
  return ranked;
}

/// Best fixed fragment for `moving_id` and its candidate matches.
inline PairingResult pair_fragment(const std::string& moving_id, std::span<const FragmentFeatures> pool,
                                   unsigned threads = 1) {
  return rank_pairings(moving_id, pool, threads).front();
}

/// Debug dump, header `moving_index,fixed_index,similarity,reversed`.
inline void write_match_csv(const std::filesystem::path& path, std::span<const CandidateMatch> matches) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "moving_index,fixed_index,similarity,reversed\n";
  char buf[96];
  for (const auto& m : matches) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f,%d\n", m.moving_index, m.fixed_index, m.similarity,
                  m.reversed ? 1 : 0);
    out << buf;
  }
}

}  // namespace semstitch
