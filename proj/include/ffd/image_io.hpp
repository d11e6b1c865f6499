// Copyright 2026 The FFD Toolkit Authors
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

// 8-bit grayscale image files. PGM is parsed directly; PNG goes through
// libpng's simplified API. Intensities map to [0, 1] by division by 255.

#include <png.h>

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ffd/error.hpp"
#include "ffd/image.hpp"

namespace ffd {

namespace detail {

inline std::string read_pnm_token(std::istream& in) {
  std::string token;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  return token;
}

inline std::size_t parse_pnm_size(std::istream& in, const std::string& what, const std::filesystem::path& path) {
  const std::string token = read_pnm_token(in);
  try {
    std::size_t used = 0;
    const unsigned long v = std::stoul(token, &used);
    if (used == token.size()) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  fail(Errc::invalid_input, path.string() + ": bad PGM " + what + " '" + token + "'");
}

inline GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  const std::string magic = read_pnm_token(in);
  require(magic == "P5" || magic == "P2", Errc::invalid_input, path.string() + ": not a PGM file");
  const std::size_t width = parse_pnm_size(in, "width", path);
  const std::size_t height = parse_pnm_size(in, "height", path);
  const std::size_t maxval = parse_pnm_size(in, "maxval", path);
  require(maxval >= 1 && maxval <= 255, Errc::invalid_input, path.string() + ": only 8-bit PGM is supported");
  require(width >= 1 && height >= 1, Errc::invalid_input, path.string() + ": empty image");

  std::vector<double> pixels(width * height);
  if (magic == "P5") {
    std::vector<unsigned char> raw(pixels.size());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    require(static_cast<std::size_t>(in.gcount()) == raw.size(), Errc::invalid_input,
            path.string() + ": truncated PGM data");
    for (std::size_t i = 0; i < raw.size(); ++i) pixels[i] = raw[i] / 255.0;
  } else {
    for (double& p : pixels) {
      const std::size_t v = parse_pnm_size(in, "pixel", path);
      require(v <= maxval, Errc::invalid_input, path.string() + ": pixel exceeds maxval");
      p = static_cast<double>(v) / 255.0;
    }
  }
  return GrayImage(width, height, std::move(pixels));
}

inline GrayImage read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    const std::string msg = image.message;
    png_image_free(&image);
    fail(Errc::invalid_input, path.string() + ": " + msg);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<unsigned char> raw(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, raw.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    fail(Errc::invalid_input, path.string() + ": " + msg);
  }
  std::vector<double> pixels(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) pixels[i] = raw[i] / 255.0;
  return GrayImage(image.width, image.height, std::move(pixels));
}

}  // namespace detail

/// Reads an 8-bit grayscale PGM (P2/P5) or PNG, sniffing the format from the
/// file signature.
inline GrayImage read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  char sig[2] = {0, 0};
  in.read(sig, 2);
  in.close();
  if (sig[0] == 'P' && (sig[1] == '5' || sig[1] == '2')) return detail::read_pgm(path);
  if (static_cast<unsigned char>(sig[0]) == 0x89 && sig[1] == 'P') return detail::read_png(path);
  fail(Errc::invalid_input, path.string() + ": unsupported image format");
}

inline bool is_image_file(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".png" || ext == ".pgm";
}

/// Writes a binary PGM, quantizing to 8 bits.
inline void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io, "cannot write " + path.string());
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  for (double v : img.pixels()) out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  if (!out) fail(Errc::io, "write failed for " + path.string());
}

/// Writes an 8-bit grayscale PNG.
inline void write_png(const GrayImage& img, const std::filesystem::path& path) {
  std::vector<unsigned char> raw(img.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<unsigned char>(std::lround(img.pixels()[i] * 255.0));
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, raw.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    fail(Errc::io, "cannot write " + path.string() + ": " + msg);
  }
}

}  // namespace ffd
