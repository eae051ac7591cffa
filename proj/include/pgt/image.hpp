#pragma once

// Grayscale images and the quality metrics used by the loss and the
// evaluation harness.

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace pgt {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Row-major grayscale image. Pixel values live in [0,1] for anything that
// came from disk or the generator; filter responses may leave that range.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(int h, int w, double fill = 0.0);
  GrayImage(int h, int w, std::vector<double> values);

  double& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return pixels.size(); }
  bool same_shape(const GrayImage& o) const {
    return height == o.height && width == o.width;
  }
  bool operator==(const GrayImage&) const = default;
};

struct Kernel2D {
  int size = 0;
  std::vector<double> values;  // size*size, row-major

  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * size + x]; }
};

// 3x3 discrete Laplacian used by the edge loss.
inline constexpr std::array<double, 9> kLaplacianKernel = {
    -1.0, -1.0, -1.0,  //
    -1.0, 8.0,  -1.0,  //
    -1.0, -1.0, -1.0};

// Normalized (sum = 1) Gaussian with integer offsets from the center.
// Throws ImageError for even size or nonpositive stddev.
Kernel2D gaussian_kernel(int size, double stddev);

// Zero-padded 3x3 Laplacian response, same size as `img`.
GrayImage laplacian_filter(const GrayImage& img);

struct SsimConfig {
  int window = 7;
  double stddev = 1.5;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

double mse(const GrayImage& x, const GrayImage& y);
// Mean of the local SSIM map over windows fully inside the image.
double ssim(const GrayImage& x, const GrayImage& y, const SsimConfig& cfg = {});
// 10*log10(1/mse); +infinity when the images are identical.
double psnr(const GrayImage& x, const GrayImage& y);
double psnr_from_mse(double mse);

struct MetricReport {
  double mse = 0.0;
  double ssim = 1.0;
  double psnr = 0.0;
};

MetricReport compare(const GrayImage& result, const GrayImage& reference,
                     const SsimConfig& cfg = {});

void clamp01(GrayImage& img);

}  // namespace pgt
