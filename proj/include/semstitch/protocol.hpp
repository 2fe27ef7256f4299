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

// File protocol between the pipeline and an external embedding bridge.
//
//   patches.bin  "SSPB" u32 count u32 height u32 width u32 channels, then
//                count*height*width*channels u8 samples (row-major, interleaved)
//   features.bin "SSFV" u32 count u32 K, then count*K float32
//
// All integers and floats are little-endian.

#pragma once

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "semstitch/common.hpp"

namespace semstitch::protocol {

inline constexpr char kPatchMagic[4] = {'S', 'S', 'P', 'B'};
inline constexpr char kFeatureMagic[4] = {'S', 'S', 'F', 'V'};
inline constexpr std::size_t kPatchHeaderBytes = 20;
inline constexpr std::size_t kFeatureHeaderBytes = 12;

struct PatchBatch {
  std::uint32_t count = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
  std::vector<std::uint8_t> samples;

  std::size_t patch_bytes() const {
    return static_cast<std::size_t>(height) * width * channels;
  }
};

struct FeatureBatch {
  std::uint32_t count = 0;
  std::uint32_t dim = 0;
  std::vector<float> values;

  const float* row(std::size_t i) const { return values.data() + i * dim; }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
  return v;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spill(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("cannot write " + path.string());
}

}  // namespace detail

inline std::string encode_patches(const PatchBatch& b) {
  if (b.samples.size() != static_cast<std::size_t>(b.count) * b.patch_bytes())
    throw Error("patch payload size does not match header");
  std::string out(kPatchMagic, 4);
  detail::put_u32(out, b.count);
  detail::put_u32(out, b.height);
  detail::put_u32(out, b.width);
  detail::put_u32(out, b.channels);
  out.append(reinterpret_cast<const char*>(b.samples.data()), b.samples.size());
  return out;
}

inline PatchBatch decode_patches(const std::string& bytes) {
  if (bytes.size() < kPatchHeaderBytes) throw Error("malformed patch header");
  if (std::memcmp(bytes.data(), kPatchMagic, 4) != 0) throw Error("bad magic in patch request");
  PatchBatch b;
  b.count = detail::get_u32(bytes, 4);
  b.height = detail::get_u32(bytes, 8);
  b.width = detail::get_u32(bytes, 12);
  b.channels = detail::get_u32(bytes, 16);
  if (b.count > 0 && (b.height == 0 || b.width == 0 || (b.channels != 1 && b.channels != 3)))
    throw Error("malformed patch header");
  // 128-bit arithmetic: a hostile header must not overflow the size check.
  const unsigned __int128 payload =
      static_cast<unsigned __int128>(b.count) * b.height * b.width * b.channels;
  if (payload != bytes.size() - kPatchHeaderBytes) throw Error("patch payload size mismatch");
  b.samples.assign(bytes.begin() + kPatchHeaderBytes, bytes.end());
  return b;
}

inline std::string encode_features(const FeatureBatch& b) {
  if (b.values.size() != static_cast<std::size_t>(b.count) * b.dim)
    throw Error("feature payload size does not match header");
  std::string out(kFeatureMagic, 4);
  detail::put_u32(out, b.count);
  detail::put_u32(out, b.dim);
  for (float v : b.values) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline FeatureBatch decode_features(const std::string& bytes) {
  if (bytes.size() < kFeatureHeaderBytes) throw Error("malformed feature header");
  if (std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) throw Error("bad magic in feature response");
  FeatureBatch b;
  b.count = detail::get_u32(bytes, 4);
  b.dim = detail::get_u32(bytes, 8);
  const unsigned __int128 payload = static_cast<unsigned __int128>(b.count) * b.dim * 4u;
  if (payload != bytes.size() - kFeatureHeaderBytes) throw Error("feature payload size mismatch");
  b.values.resize(static_cast<std::size_t>(b.count) * b.dim);
  for (std::size_t i = 0; i < b.values.size(); ++i) {
    const float v = std::bit_cast<float>(detail::get_u32(bytes, kFeatureHeaderBytes + 4 * i));
    if (!std::isfinite(v)) throw Error("non-finite value in feature response");
    b.values[i] = v;
  }
  return b;
}

inline void write_patches(const std::filesystem::path& p, const PatchBatch& b) {
  detail::spill(p, encode_patches(b));
}
inline PatchBatch read_patches(const std::filesystem::path& p) {
  return decode_patches(detail::slurp(p));
}
inline void write_features(const std::filesystem::path& p, const FeatureBatch& b) {
  detail::spill(p, encode_features(b));
}
inline FeatureBatch read_features(const std::filesystem::path& p) {
  return decode_features(detail::slurp(p));
}

/// Runs `<command> <request> <response>` through /bin/sh and returns the exit
/// status (or 128 + signal). The paths are passed as positional parameters,
/// so they need no quoting.
inline int run_bridge(const std::string& command, const std::filesystem::path& request,
                      const std::filesystem::path& response) {
  const std::string script = command + " \"$1\" \"$2\"";
  const pid_t pid = fork();
  if (pid < 0) throw Error("cannot start bridge");
  if (pid == 0) {
    execl("/bin/sh", "sh", "-c", script.c_str(), "semstitch-bridge", request.c_str(),
          response.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  int status = 0;
  while (waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) throw Error("cannot wait for bridge");
  }
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
  return 1;
}

}  // namespace semstitch::protocol
