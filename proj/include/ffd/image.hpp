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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ffd/error.hpp"

namespace ffd {

/// Single-channel image, row-major, intensities in [0, 1].
class GrayImage {
 public:
  GrayImage() = default;

  GrayImage(std::size_t width, std::size_t height, std::vector<double> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    require(width_ >= 1 && height_ >= 1, Errc::invalid_input, "image dimensions must be at least 1x1");
    require(pixels_.size() == width_ * height_, Errc::invalid_input,
            "pixel count " + std::to_string(pixels_.size()) + " does not match " +
                std::to_string(width_) + "x" + std::to_string(height_));
    for (double v : pixels_) {
      require(std::isfinite(v) && v >= 0.0 && v <= 1.0, Errc::invalid_input,
              "pixel intensity outside [0, 1]");
    }
  }

  static GrayImage constant(std::size_t width, std::size_t height, double value) {
    return GrayImage(width, height, std::vector<double>(width * height, value));
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  double at(std::size_t x, std::size_t y) const { return pixels_[y * width_ + x]; }

  std::span<const double> pixels() const noexcept { return pixels_; }

  double mean() const {
    double sum = 0.0;
    for (double v : pixels_) sum += v;
    return sum / static_cast<double>(pixels_.size());
  }

  bool operator==(const GrayImage&) const = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> pixels_;
};

namespace detail {

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

inline double sample_clamped(const GrayImage& img, long x, long y) {
  const long w = static_cast<long>(img.width());
  const long h = static_cast<long>(img.height());
  return img.at(static_cast<std::size_t>(std::clamp(x, 0L, w - 1)),
                static_cast<std::size_t>(std::clamp(y, 0L, h - 1)));
}

// Bilinear sample at a continuous pixel-center coordinate, clamp-to-edge.
inline double sample_bilinear(const GrayImage& img, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const double ax = x - fx;
  const double ay = y - fy;
  const long x0 = static_cast<long>(fx);
  const long y0 = static_cast<long>(fy);
  const double top = (1.0 - ax) * sample_clamped(img, x0, y0) + ax * sample_clamped(img, x0 + 1, y0);
  const double bottom =
      (1.0 - ax) * sample_clamped(img, x0, y0 + 1) + ax * sample_clamped(img, x0 + 1, y0 + 1);
  return (1.0 - ay) * top + ay * bottom;
}

}  // namespace detail

/// Separable Gaussian blur with clamp-to-edge borders. sigma <= 0 is identity.
inline GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  if (!(sigma > 0.0)) return img;
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> weights(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    const double w = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    weights[static_cast<std::size_t>(i + radius)] = w;
    total += w;
  }
  for (double& w : weights) w /= total;

  const std::size_t width = img.width();
  const std::size_t height = img.height();
  std::vector<double> horizontal(img.size());
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double acc = 0.0;
      for (long i = -radius; i <= radius; ++i) {
        acc += weights[static_cast<std::size_t>(i + radius)] *
               detail::sample_clamped(img, static_cast<long>(x) + i, static_cast<long>(y));
      }
      horizontal[y * width + x] = acc;
    }
  }
  const GrayImage pass(width, height, [&] {
    for (double& v : horizontal) v = detail::clamp01(v);
    return horizontal;
  }());
  std::vector<double> out(img.size());
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double acc = 0.0;
      for (long i = -radius; i <= radius; ++i) {
        acc += weights[static_cast<std::size_t>(i + radius)] *
               detail::sample_clamped(pass, static_cast<long>(x), static_cast<long>(y) + i);
      }
      out[y * width + x] = detail::clamp01(acc);
    }
  }
  return GrayImage(width, height, std::move(out));
}

inline GrayImage mirror_horizontal(const GrayImage& img) {
  std::vector<double> out(img.size());
  const std::size_t w = img.width();
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < w; ++x) out[y * w + x] = img.at(w - 1 - x, y);
  }
  return GrayImage(w, img.height(), std::move(out));
}

/// Rotation about the image center by `degrees` (counter-clockwise in
/// display coordinates), bilinear resampling, clamp-to-edge.
inline GrayImage rotate(const GrayImage& img, double degrees) {
  const double theta = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double cx = (static_cast<double>(img.width()) - 1.0) / 2.0;
  const double cy = (static_cast<double>(img.height()) - 1.0) / 2.0;
  std::vector<double> out(img.size());
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      // inverse map: rotate the destination coordinate by -theta
      const double sx = c * dx - s * dy + cx;
      const double sy = s * dx + c * dy + cy;
      out[y * img.width() + x] = detail::clamp01(detail::sample_bilinear(img, sx, sy));
    }
  }
  return GrayImage(img.width(), img.height(), std::move(out));
}

/// Bilinear resize using pixel-center alignment.
inline GrayImage resize_bilinear(const GrayImage& img, std::size_t width, std::size_t height) {
  require(width >= 1 && height >= 1, Errc::invalid_parameter, "resize target must be at least 1x1");
  const double scale_x = static_cast<double>(img.width()) / static_cast<double>(width);
  const double scale_y = static_cast<double>(img.height()) / static_cast<double>(height);
  std::vector<double> out(width * height);
  for (std::size_t y = 0; y < height; ++y) {
    const double sy = (static_cast<double>(y) + 0.5) * scale_y - 0.5;
    for (std::size_t x = 0; x < width; ++x) {
      const double sx = (static_cast<double>(x) + 0.5) * scale_x - 0.5;
      out[y * width + x] = detail::clamp01(detail::sample_bilinear(img, sx, sy));
    }
  }
  return GrayImage(width, height, std::move(out));
}

/// Multiplies every intensity by `factor`, clamping to [0, 1].
inline GrayImage scale_intensity(const GrayImage& img, double factor) {
  std::vector<double> out(img.pixels().begin(), img.pixels().end());
  for (double& v : out) v = detail::clamp01(v * factor);
  return GrayImage(img.width(), img.height(), std::move(out));
}

}  // namespace ffd
