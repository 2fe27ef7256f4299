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

// PNG / 8-bit TIFF input and output, plus the `{ "mpp": <float> }` sidecar.

#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>

#include <png.h>
#include <tiffio.h>
#include "json.hpp"

#include "semstitch/raster.hpp"

namespace semstitch {

namespace detail {

inline std::string read_magic(const std::filesystem::path& path, std::size_t n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string buf(n, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(n));
  buf.resize(static_cast<std::size_t>(in.gcount()));
  return buf;
}

inline Raster load_png(const std::filesystem::path& path, double mpp) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw Error("decode failure: " + path.string());
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    throw Error("zero-sized image");
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw Error("unsupported bit depth: " + path.string());
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Raster out(static_cast<int>(image.width), static_cast<int>(image.height), color ? 3 : 1, mpp);
  // Alpha, if any, is composited onto white background.
  png_color background{255, 255, 255};
  if (!png_image_finish_read(&image, &background, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error("decode failure: " + path.string());
  }
  return out;
}

struct TiffCloser {
  void operator()(TIFF* t) const {
    if (t) TIFFClose(t);
  }
};

inline Raster load_tiff(const std::filesystem::path& path, double mpp) {
  TIFFSetWarningHandler(nullptr);
  TIFFSetErrorHandler(nullptr);
  std::unique_ptr<TIFF, TiffCloser> tif(TIFFOpen(path.c_str(), "r"));
  if (!tif) throw Error("decode failure: " + path.string());
  std::uint32_t w = 0, h = 0;
  std::uint16_t bps = 0, spp = 1;
  TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &w);
  TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &h);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_BITSPERSAMPLE, &bps);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLESPERPIXEL, &spp);
  if (w == 0 || h == 0) throw Error("zero-sized image");
  if (bps != 8) throw Error("unsupported bit depth: " + path.string());
  std::vector<std::uint32_t> rgba(static_cast<std::size_t>(w) * h);
  if (!TIFFReadRGBAImageOriented(tif.get(), w, h, rgba.data(), ORIENTATION_TOPLEFT, 0))
    throw Error("decode failure: " + path.string());
  const int channels = spp >= 3 ? 3 : 1;
  Raster out(static_cast<int>(w), static_cast<int>(h), channels, mpp);
  for (std::size_t i = 0; i < rgba.size(); ++i) {
    const std::uint32_t p = rgba[i];
    if (channels == 3) {
      out.pixels[i * 3 + 0] = static_cast<std::uint8_t>(TIFFGetR(p));
      out.pixels[i * 3 + 1] = static_cast<std::uint8_t>(TIFFGetG(p));
      out.pixels[i * 3 + 2] = static_cast<std::uint8_t>(TIFFGetB(p));
    } else {
      out.pixels[i] = static_cast<std::uint8_t>(TIFFGetR(p));
    }
  }
  return out;
}

}  // namespace detail

/// Looks for `<stem>.json` and then `<path>.json` next to the image.
inline std::optional<double> read_mpp_sidecar(const std::filesystem::path& image_path) {
  auto candidates = {std::filesystem::path(image_path).replace_extension(".json"),
                     std::filesystem::path(image_path.string() + ".json")};
  for (const auto& p : candidates) {
    if (!std::filesystem::exists(p)) continue;
    std::ifstream in(p);
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("mpp") || !j["mpp"].is_number())
      throw Error("malformed sidecar " + p.string());
    const double mpp = j["mpp"].get<double>();
    if (!(mpp > 0.0)) throw Error("sidecar mpp must be positive: " + p.string());
    return mpp;
  }
  return std::nullopt;
}

/// Loads a PNG or 8-bit TIFF. Resolution comes from `mpp_override`, then the
/// sidecar, then 0.25.
inline Raster load_image(const std::filesystem::path& path,
                         std::optional<double> mpp_override = std::nullopt) {
  if (!std::filesystem::exists(path)) throw Error("cannot open " + path.string());
  double mpp = 0.25;
  if (mpp_override) {
    mpp = *mpp_override;
  } else if (auto side = read_mpp_sidecar(path)) {
    mpp = *side;
  }
  if (!(mpp > 0.0)) throw Error("mpp must be positive");
  const std::string magic = detail::read_magic(path, 8);
  if (magic.size() >= 8 && std::memcmp(magic.data(), "\x89PNG\r\n\x1a\n", 8) == 0)
    return detail::load_png(path, mpp);
  if (magic.size() >= 4 &&
      (std::memcmp(magic.data(), "II*\0", 4) == 0 || std::memcmp(magic.data(), "MM\0*", 4) == 0 ||
       std::memcmp(magic.data(), "II+\0", 4) == 0 || std::memcmp(magic.data(), "MM\0+", 4) == 0))
    return detail::load_tiff(path, mpp);
  throw Error("decode failure: unsupported format " + path.string());
}

inline void save_png(const Raster& img, const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr))
    throw Error("cannot write " + path.string());
}

/// Tiled (256x256), deflate-compressed 8-bit TIFF for large canvases.
inline void save_tiled_tiff(const Raster& img, const std::filesystem::path& path) {
  TIFFSetWarningHandler(nullptr);
  std::unique_ptr<TIFF, detail::TiffCloser> tif(TIFFOpen(path.c_str(), "w8"));
  if (!tif) throw Error("cannot write " + path.string());
  constexpr std::uint32_t tile = 256;
  TIFF* t = tif.get();
  TIFFSetField(t, TIFFTAG_IMAGEWIDTH, static_cast<std::uint32_t>(img.width));
  TIFFSetField(t, TIFFTAG_IMAGELENGTH, static_cast<std::uint32_t>(img.height));
  TIFFSetField(t, TIFFTAG_BITSPERSAMPLE, 8);
  TIFFSetField(t, TIFFTAG_SAMPLESPERPIXEL, img.channels);
  TIFFSetField(t, TIFFTAG_PHOTOMETRIC, img.channels == 3 ? PHOTOMETRIC_RGB : PHOTOMETRIC_MINISBLACK);
  TIFFSetField(t, TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
  TIFFSetField(t, TIFFTAG_COMPRESSION, COMPRESSION_ADOBE_DEFLATE);
  TIFFSetField(t, TIFFTAG_TILEWIDTH, tile);
  TIFFSetField(t, TIFFTAG_TILELENGTH, tile);
  const double px_per_cm = 1e4 / img.mpp;
  TIFFSetField(t, TIFFTAG_RESOLUTIONUNIT, RESUNIT_CENTIMETER);
  TIFFSetField(t, TIFFTAG_XRESOLUTION, static_cast<float>(px_per_cm));
  TIFFSetField(t, TIFFTAG_YRESOLUTION, static_cast<float>(px_per_cm));
  const int c = img.channels;
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(tile) * tile * c);
  for (std::uint32_t ty = 0; ty < static_cast<std::uint32_t>(img.height); ty += tile) {
    for (std::uint32_t tx = 0; tx < static_cast<std::uint32_t>(img.width); tx += tile) {
      std::fill(buf.begin(), buf.end(), std::uint8_t{255});
      for (std::uint32_t y = 0; y < tile && ty + y < static_cast<std::uint32_t>(img.height); ++y) {
        const std::uint32_t n = std::min(tile, static_cast<std::uint32_t>(img.width) - tx);
        std::memcpy(&buf[static_cast<std::size_t>(y) * tile * c],
                    &img.pixels[img.index(static_cast<int>(tx), static_cast<int>(ty + y))],
                    static_cast<std::size_t>(n) * c);
      }
      if (TIFFWriteTile(t, buf.data(), tx, ty, 0, 0) < 0)
        throw Error("cannot write " + path.string());
    }
  }
}

inline void write_mpp_sidecar(const std::filesystem::path& image_path, double mpp) {
  std::ofstream out(std::filesystem::path(image_path).replace_extension(".json"));
  out << nlohmann::json{{"mpp", mpp}}.dump() << "\n";
}

}  // namespace semstitch
