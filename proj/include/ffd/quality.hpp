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

// Frame quality: Laplacian-of-Gaussian sharpness, best-frame selection, and
// the deterministic preprocessing applied before feature extraction.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "ffd/error.hpp"
#include "ffd/image.hpp"
#include "ffd/random.hpp"

namespace ffd::quality {

inline constexpr double kDefaultSigma = 1.4;
inline constexpr std::size_t kModelInputSize = 224;

/// Square Laplacian-of-Gaussian kernel sampled at integer offsets.
///
/// `taps` holds the closed-form LoG values exactly. `filter` holds the same
/// taps shifted by their mean so that the discrete kernel sums to zero; this
/// is what `sharpness` convolves with, so flat regions give no response even
/// though the support is truncated.
struct LogKernel {
  double sigma = kDefaultSigma;
  std::size_t radius = 0;
  std::vector<double> taps;
  std::vector<double> filter;

  std::size_t width() const noexcept { return 2 * radius + 1; }

  /// Raw tap at offset (dx, dy), both in [-radius, radius].
  double tap(long dx, long dy) const {
    const long r = static_cast<long>(radius);
    return taps[static_cast<std::size_t>((dy + r) * static_cast<long>(width()) + (dx + r))];
  }

  double filter_tap(long dx, long dy) const {
    const long r = static_cast<long>(radius);
    return filter[static_cast<std::size_t>((dy + r) * static_cast<long>(width()) + (dx + r))];
  }
};

struct SharpnessScore {
  double value = 0.0;
  auto operator<=>(const SharpnessScore&) const = default;
};

/// ceil(4 sigma): keeps all but a negligible tail of the kernel.
inline std::size_t default_radius(double sigma) {
  return static_cast<std::size_t>(std::ceil(4.0 * sigma));
}

inline double log_value(double sigma, double x, double y) {
  const double s2 = sigma * sigma;
  const double q = (x * x + y * y) / (2.0 * s2);
  return -(1.0 / (std::numbers::pi * s2 * s2)) * (1.0 - q) * std::exp(-q);
}

inline LogKernel make_log_kernel(double sigma, std::size_t radius) {
  require(std::isfinite(sigma) && sigma > 0.0, Errc::invalid_parameter, "LoG sigma must be positive");
  require(radius >= 1, Errc::invalid_parameter, "LoG radius must be at least 1");
  LogKernel kernel;
  kernel.sigma = sigma;
  kernel.radius = radius;
  const long r = static_cast<long>(radius);
  kernel.taps.reserve(kernel.width() * kernel.width());
  for (long dy = -r; dy <= r; ++dy) {
    for (long dx = -r; dx <= r; ++dx) {
      kernel.taps.push_back(log_value(sigma, static_cast<double>(dx), static_cast<double>(dy)));
    }
  }
  // Mean over a symmetric traversal so the filter keeps the exact symmetry
  // of the raw taps.
  const double mean =
      std::accumulate(kernel.taps.begin(), kernel.taps.end(), 0.0) / static_cast<double>(kernel.taps.size());
  kernel.filter.reserve(kernel.taps.size());
  for (double t : kernel.taps) kernel.filter.push_back(t - mean);
  return kernel;
}

inline LogKernel make_log_kernel(double sigma = kDefaultSigma) {
  require(std::isfinite(sigma) && sigma > 0.0, Errc::invalid_parameter, "LoG sigma must be positive");
  return make_log_kernel(sigma, default_radius(sigma));
}

/// Mean squared LoG response over the valid (unpadded) region.
inline SharpnessScore sharpness(const GrayImage& img, const LogKernel& kernel) {
  const std::size_t kw = kernel.width();
  require(img.width() > kw && img.height() > kw, Errc::invalid_input,
          "image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
              " is not larger than the " + std::to_string(kw) + "x" + std::to_string(kw) + " kernel");
  const std::size_t out_w = img.width() - kw + 1;
  const std::size_t out_h = img.height() - kw + 1;
  const std::span<const double> px = img.pixels();
  const std::size_t stride = img.width();

  double power = 0.0;
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      double response = 0.0;
      for (std::size_t ky = 0; ky < kw; ++ky) {
        const double* row = px.data() + (y + ky) * stride + x;
        const double* taps = kernel.filter.data() + ky * kw;
        for (std::size_t kx = 0; kx < kw; ++kx) response += taps[kx] * row[kx];
      }
      power += response * response;
    }
  }
  return {power / static_cast<double>(out_w * out_h)};
}

struct FrameSelection {
  std::size_t index = 0;
  SharpnessScore score;
  std::vector<SharpnessScore> scores;
};

/// Picks the sharpest frame; ties go to the lowest index.
inline FrameSelection select_best_frame(std::span<const GrayImage> frames, const LogKernel& kernel) {
  require(!frames.empty(), Errc::empty_input, "no frames to select from");
  FrameSelection result;
  result.scores.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const SharpnessScore s = sharpness(frames[i], kernel);
    result.scores.push_back(s);
    if (i == 0 || s.value > result.score.value) {
      result.index = i;
      result.score = s;
    }
  }
  return result;
}

/// Bilinear resize to the model input geometry.
inline GrayImage preprocess(const GrayImage& img, std::size_t target_width = kModelInputSize,
                            std::size_t target_height = kModelInputSize) {
  require(img.width() >= 2 && img.height() >= 2, Errc::invalid_input,
          "preprocess needs a source of at least 2x2 pixels");
  return resize_bilinear(img, target_width, target_height);
}

/// Which augmentations are candidates, and the probability with which each
/// candidate is applied. With probability 1 every enabled transform runs.
struct AugmentRecipe {
  bool illumination = false;
  bool mirror = false;
  bool blur = false;
  bool rotation = false;
  bool noise = false;
  double probability = 1.0;

  static AugmentRecipe all() { return {true, true, true, true, true, 0.5}; }
};

inline constexpr double kIlluminationMin = 0.7;
inline constexpr double kIlluminationMax = 1.3;
inline constexpr double kBlurSigmaMin = 0.5;
inline constexpr double kBlurSigmaMax = 1.5;
inline constexpr double kNoiseStddev = 0.02;
inline constexpr double kRotationDegrees = 15.0;

/// Applies the enabled transforms in a fixed order (illumination, mirror,
/// blur, rotation, noise). Every random draw comes from `seed`.
inline GrayImage augment(const GrayImage& img, std::uint64_t seed, const AugmentRecipe& recipe) {
  require(recipe.probability >= 0.0 && recipe.probability <= 1.0, Errc::invalid_parameter,
          "augmentation probability must lie in [0, 1]");
  Rng rng(mix_seed(seed, 0x61756775));
  auto chosen = [&](bool enabled) { return enabled && rng.uniform() < recipe.probability; };

  GrayImage out = img;
  if (chosen(recipe.illumination)) {
    out = scale_intensity(out, rng.uniform(kIlluminationMin, kIlluminationMax));
  }
  if (chosen(recipe.mirror)) out = mirror_horizontal(out);
  if (chosen(recipe.blur)) out = gaussian_blur(out, rng.uniform(kBlurSigmaMin, kBlurSigmaMax));
  if (chosen(recipe.rotation)) out = rotate(out, rng.coin() ? kRotationDegrees : -kRotationDegrees);
  if (chosen(recipe.noise)) {
    std::vector<double> px(out.pixels().begin(), out.pixels().end());
    for (double& v : px) v = detail::clamp01(v + rng.normal(0.0, kNoiseStddev));
    out = GrayImage(out.width(), out.height(), std::move(px));
  }
  return out;
}

}  // namespace ffd::quality
