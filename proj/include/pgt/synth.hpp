#pragma once

// Procedural fingerprint triplets: a clean ridge pattern, its binary ridge
// map, and a wet (darkened) copy produced by stamping Gaussian blobs on ridge
// pixels.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pgt/image.hpp"

namespace pgt {

inline constexpr int kStripHeight = 36;
inline constexpr int kStripWidth = 176;

struct NoiseParams {
  std::vector<int> kernel_sizes{13, 15, 17, 19, 21};
  double kernel_stddev = 1.0;
  double appearance_prob = 0.2;
  double darkness = -0.2;
  double darkness_lo = -0.01;
  double darkness_hi = 0.01;

  // Throws ImageError when a field is out of its domain.
  void validate() const;
  int max_kernel() const;
  bool operator==(const NoiseParams&) const = default;
};

// Knobs of the clean-pattern model. Ridges are dark: pixel = mean -
// contrast * shape(sinusoid), so binary ridge pixels (sinusoid >= 0) sit below
// the image mean.
struct RidgeParams {
  double period_min = 6.0;
  double period_max = 10.0;
  double mean_min = 0.45;
  double mean_max = 0.65;
  double contrast_min = 0.02;
  double contrast_max = 0.04;
  // tanh sharpness of the ridge profile; larger is closer to a square wave.
  double sharpness = 2.0;
  // Orientation field: 2..4 components of amplitude <= max_bend radians.
  double max_bend = 0.3;
  double bend_frequency = 1.0 / 150.0;
  double jitter = 0.3;  // pixels of smooth elastic displacement

  void validate() const;
  bool operator==(const RidgeParams&) const = default;
};

struct CleanPair {
  GrayImage clean;
  GrayImage binary;
};

CleanPair generate_clean(std::uint64_t seed, int height = kStripHeight,
                         int width = kStripWidth, const RidgeParams& ridge = {});

// Adaptive threshold against the local block mean; dark pixels (ridges)
// map to 1. `block` must be odd, >= 3 and fit inside the image.
GrayImage binarize(const GrayImage& clean, int block = 15);

struct WetResult {
  GrayImage noisy;
  // Ridge pixels chosen as stamp centers, in scan order (y * width + x).
  std::vector<std::size_t> stamp_centers;
};

// Additive Gaussian stamps on ridge pixels, then a clamp to [0,1].
WetResult synthesize_wet_detailed(const GrayImage& clean, const GrayImage& binary,
                                  const NoiseParams& params, std::uint64_t seed);
GrayImage synthesize_wet(const GrayImage& clean, const GrayImage& binary,
                         const NoiseParams& params, std::uint64_t seed);

struct SampleTriplet {
  GrayImage noisy;
  GrayImage clean;
  GrayImage binary;
  std::uint64_t seed = 0;
  NoiseParams params;
};

SampleTriplet generate_triplet(std::uint64_t seed, const NoiseParams& params,
                               const RidgeParams& ridge = {},
                               int height = kStripHeight, int width = kStripWidth);

// Rounds to the nearest 1/255 step; what a write/read through PGM produces.
GrayImage quantize_8bit(const GrayImage& img);

}  // namespace pgt
