#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "pgt/random.hpp"
#include "pgt/synth.hpp"

namespace pgt {

void NoiseParams::validate() const {
  if (kernel_sizes.empty()) throw ImageError("noise: kernel_sizes is empty");
  for (int k : kernel_sizes) {
    if (k < 1 || k % 2 == 0) {
      throw ImageError("noise: kernel size must be odd and positive, got " +
                       std::to_string(k));
    }
  }
  if (!(kernel_stddev > 0.0)) throw ImageError("noise: kernel_stddev must be > 0");
  if (!(appearance_prob >= 0.0 && appearance_prob <= 1.0)) {
    throw ImageError("noise: appearance_prob must be in [0,1]");
  }
  if (!std::isfinite(darkness)) throw ImageError("noise: darkness must be finite");
  if (!(darkness_lo <= darkness_hi) || !std::isfinite(darkness_lo) ||
      !std::isfinite(darkness_hi)) {
    throw ImageError("noise: darkness range must satisfy lo <= hi");
  }
}

int NoiseParams::max_kernel() const {
  return *std::max_element(kernel_sizes.begin(), kernel_sizes.end());
}

void RidgeParams::validate() const {
  if (!(period_min >= 4.0 && period_max <= 12.0 && period_min <= period_max)) {
    throw ImageError("ridge: period range must lie within [4, 12] px");
  }
  if (!(mean_min <= mean_max && contrast_min <= contrast_max && contrast_min >= 0.0)) {
    throw ImageError("ridge: inverted mean or contrast range");
  }
  if (mean_min - contrast_max < 0.0 || mean_max + contrast_max > 1.0) {
    throw ImageError("ridge: mean +/- contrast must stay inside [0,1]");
  }
  if (!(sharpness > 0.0)) throw ImageError("ridge: sharpness must be > 0");
  if (max_bend < 0.0 || jitter < 0.0 || bend_frequency < 0.0) {
    throw ImageError("ridge: bend and jitter must be non-negative");
  }
}

namespace {

struct Wave {
  double amp = 0.0;
  double fx = 0.0;
  double fy = 0.0;
  double phase = 0.0;

  double operator()(double x, double y) const {
    return amp * std::sin(2.0 * std::numbers::pi * (fx * x + fy * y) + phase);
  }
};

Wave random_wave(Rng& rng, double max_amp, double max_freq) {
  Wave w;
  w.amp = rng.uniform(0.25, 1.0) * max_amp;
  w.fx = rng.uniform(-1.0, 1.0) * max_freq;
  w.fy = rng.uniform(-1.0, 1.0) * max_freq;
  w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return w;
}

}  // namespace

CleanPair generate_clean(std::uint64_t seed, int height, int width,
                         const RidgeParams& ridge) {
  if (height < 8 || width < 8 || static_cast<long>(height) * width < 32 * 32) {
    throw ImageError("generate_clean: degenerate dimensions " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  ridge.validate();
  Rng rng(seed);
  const double period = rng.uniform(ridge.period_min, ridge.period_max);
  const double theta0 = rng.uniform(0.0, std::numbers::pi);
  const int n_bends = 2 + static_cast<int>(rng.below(3));
  std::vector<Wave> bends;
  for (int i = 0; i < n_bends; ++i) {
    bends.push_back(random_wave(rng, ridge.max_bend, ridge.bend_frequency));
  }
  const Wave jitter_x = random_wave(rng, ridge.jitter, 1.0 / 40.0);
  const Wave jitter_y = random_wave(rng, ridge.jitter, 1.0 / 40.0);
  const double phase0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double mean = rng.uniform(ridge.mean_min, ridge.mean_max);
  const double contrast = rng.uniform(ridge.contrast_min, ridge.contrast_max);

  const double cx = 0.5 * (width - 1);
  const double cy = 0.5 * (height - 1);
  const double k = 2.0 * std::numbers::pi / period;
  const double norm = std::tanh(ridge.sharpness);

  CleanPair out{GrayImage(height, width), GrayImage(height, width)};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double px = x + jitter_x(x, y) - cx;
      const double py = y + jitter_y(x, y) - cy;
      double theta = theta0;
      for (const auto& b : bends) theta += b(x, y);
      const double s =
          std::sin(k * (px * std::cos(theta) + py * std::sin(theta)) + phase0);
      const double v = mean - contrast * std::tanh(ridge.sharpness * s) / norm;
      out.clean.at(y, x) = std::clamp(v, 0.0, 1.0);
      out.binary.at(y, x) = s >= 0.0 ? 1.0 : 0.0;
    }
  }
  return out;
}

GrayImage binarize(const GrayImage& clean, int block) {
  if (block < 3 || block % 2 == 0) {
    throw ImageError("binarize: block must be odd and >= 3");
  }
  if (block > clean.height || block > clean.width) {
    throw ImageError("binarize: block larger than image");
  }
  const int H = clean.height, W = clean.width;
  // Summed-area tables of values and squares.
  std::vector<double> s1(static_cast<std::size_t>(H + 1) * (W + 1), 0.0);
  std::vector<double> s2(s1.size(), 0.0);
  auto idx = [W](int y, int x) { return static_cast<std::size_t>(y) * (W + 1) + x; };
  double global = 0.0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double v = clean.at(y, x);
      global += v;
      s1[idx(y + 1, x + 1)] = v + s1[idx(y, x + 1)] + s1[idx(y + 1, x)] - s1[idx(y, x)];
      s2[idx(y + 1, x + 1)] = v * v + s2[idx(y, x + 1)] + s2[idx(y + 1, x)] - s2[idx(y, x)];
    }
  }
  global /= static_cast<double>(clean.size());

  // Flat neighborhoods carry no local evidence; they fall back to the global
  // mean so a two-level image still separates.
  constexpr double kFlatStd = 1e-3;
  constexpr double kTie = 1e-12;
  const int r = block / 2;
  GrayImage out(H, W, 0.0);
  for (int y = 0; y < H; ++y) {
    const int y0 = std::max(0, y - r), y1 = std::min(H, y + r + 1);
    for (int x = 0; x < W; ++x) {
      const int x0 = std::max(0, x - r), x1 = std::min(W, x + r + 1);
      const double n = static_cast<double>((y1 - y0) * (x1 - x0));
      const double a = s1[idx(y1, x1)] - s1[idx(y0, x1)] - s1[idx(y1, x0)] + s1[idx(y0, x0)];
      const double b = s2[idx(y1, x1)] - s2[idx(y0, x1)] - s2[idx(y1, x0)] + s2[idx(y0, x0)];
      const double m = a / n;
      const double var = std::max(0.0, b / n - m * m);
      const double threshold = std::sqrt(var) < kFlatStd ? global : m;
      out.at(y, x) = clean.at(y, x) < threshold - kTie ? 1.0 : 0.0;
    }
  }
  return out;
}

WetResult synthesize_wet_detailed(const GrayImage& clean, const GrayImage& binary,
                                  const NoiseParams& params, std::uint64_t seed) {
  params.validate();
  if (!clean.same_shape(binary)) {
    throw ImageError("synthesize_wet: clean and binary are not aligned");
  }
  std::vector<Kernel2D> kernels;
  for (int size : params.kernel_sizes) {
    kernels.push_back(gaussian_kernel(size, params.kernel_stddev));
  }
  Rng rng(seed);
  WetResult result{clean, {}};
  GrayImage& img = result.noisy;
  const int H = clean.height, W = clean.width;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (binary.at(y, x) < 0.5) continue;
      if (!rng.bernoulli(params.appearance_prob)) continue;
      const Kernel2D& k = kernels[rng.below(kernels.size())];
      const double darkness =
          params.darkness + rng.uniform(params.darkness_lo, params.darkness_hi);
      result.stamp_centers.push_back(static_cast<std::size_t>(y) * W + x);
      const int r = k.size / 2;
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= H) continue;
        for (int dx = -r; dx <= r; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= W) continue;
          img.at(yy, xx) += darkness * k.at(dy + r, dx + r);
        }
      }
    }
  }
  clamp01(img);
  return result;
}

GrayImage synthesize_wet(const GrayImage& clean, const GrayImage& binary,
                         const NoiseParams& params, std::uint64_t seed) {
  return synthesize_wet_detailed(clean, binary, params, seed).noisy;
}

SampleTriplet generate_triplet(std::uint64_t seed, const NoiseParams& params,
                               const RidgeParams& ridge, int height, int width) {
  CleanPair pair = generate_clean(seed, height, width, ridge);
  GrayImage noisy = synthesize_wet(pair.clean, pair.binary, params,
                                   derive_seed(seed, SeedStream::noise));
  return {std::move(noisy), std::move(pair.clean), std::move(pair.binary), seed,
          params};
}

GrayImage quantize_8bit(const GrayImage& img) {
  GrayImage out = img;
  for (auto& v : out.pixels) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return out;
}

}  // namespace pgt
