#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pgt/image.hpp"

namespace pgt {

GrayImage::GrayImage(int h, int w, double fill)
    : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {
  if (h <= 0 || w <= 0) throw ImageError("image dimensions must be positive");
}

GrayImage::GrayImage(int h, int w, std::vector<double> values)
    : height(h), width(w), pixels(std::move(values)) {
  if (h <= 0 || w <= 0) throw ImageError("image dimensions must be positive");
  if (pixels.size() != static_cast<std::size_t>(h) * w) {
    throw ImageError("pixel count does not match " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
}

Kernel2D gaussian_kernel(int size, double stddev) {
  if (size < 1 || size % 2 == 0) {
    throw ImageError("gaussian kernel size must be odd and positive, got " +
                     std::to_string(size));
  }
  if (!(stddev > 0.0)) throw ImageError("gaussian stddev must be positive");
  Kernel2D k{size, std::vector<double>(static_cast<std::size_t>(size) * size)};
  const int r = size / 2;
  const double denom = 2.0 * stddev * stddev;
  double total = 0.0;
  for (int y = -r; y <= r; ++y) {
    for (int x = -r; x <= r; ++x) {
      const double v = std::exp(-(x * x + y * y) / denom);
      k.values[static_cast<std::size_t>(y + r) * size + (x + r)] = v;
      total += v;
    }
  }
  for (auto& v : k.values) v /= total;
  return k;
}

GrayImage laplacian_filter(const GrayImage& img) {
  if (img.height < 3 || img.width < 3) {
    throw ImageError("laplacian filter needs at least a 3x3 image");
  }
  // Written as a sum of center-minus-neighbor differences so a flat region
  // gives exactly zero. Missing neighbors at the border count as zero.
  GrayImage out(img.height, img.width, 0.0);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double c = img.at(y, x);
      double acc = 0.0;
      int inside = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= img.height) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx;
          if ((dy == 0 && dx == 0) || xx < 0 || xx >= img.width) continue;
          acc += c - img.at(yy, xx);
          ++inside;
        }
      }
      out.at(y, x) = acc + (8 - inside) * c;
    }
  }
  return out;
}

namespace {

void require_same(const GrayImage& x, const GrayImage& y, const char* what) {
  if (!x.same_shape(y)) {
    throw ImageError(std::string(what) + ": shape mismatch " +
                     std::to_string(x.height) + "x" + std::to_string(x.width) +
                     " vs " + std::to_string(y.height) + "x" +
                     std::to_string(y.width));
  }
}

}  // namespace

double mse(const GrayImage& x, const GrayImage& y) {
  require_same(x, y, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.pixels[i] - y.pixels[i];
    acc += d * d;
  }
  return acc / static_cast<double>(x.size());
}

double ssim(const GrayImage& x, const GrayImage& y, const SsimConfig& cfg) {
  require_same(x, y, "ssim");
  if (cfg.window > x.height || cfg.window > x.width) {
    throw ImageError("ssim window larger than image");
  }
  const Kernel2D k = gaussian_kernel(cfg.window, cfg.stddev);
  const int oh = x.height - cfg.window + 1;
  const int ow = x.width - cfg.window + 1;
  double total = 0.0;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (int dy = 0; dy < cfg.window; ++dy) {
        for (int dx = 0; dx < cfg.window; ++dx) {
          const double w = k.at(dy, dx);
          const double a = x.at(oy + dy, ox + dx);
          const double b = y.at(oy + dy, ox + dx);
          mx += w * a;
          my += w * b;
          xx += w * (a * a);
          yy += w * (b * b);
          xy += w * (a * b);
        }
      }
      const double vx = xx - mx * mx;
      const double vy = yy - my * my;
      const double cxy = xy - mx * my;
      total += ((2 * mx * my + cfg.c1) * (2 * cxy + cfg.c2)) /
               ((mx * mx + my * my + cfg.c1) * (vx + vy + cfg.c2));
    }
  }
  return total / (static_cast<double>(oh) * ow);
}

double psnr_from_mse(double m) {
  if (m <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

double psnr(const GrayImage& x, const GrayImage& y) {
  return psnr_from_mse(mse(x, y));
}

MetricReport compare(const GrayImage& result, const GrayImage& reference,
                     const SsimConfig& cfg) {
  MetricReport r;
  r.mse = mse(result, reference);
  r.ssim = ssim(result, reference, cfg);
  r.psnr = psnr_from_mse(r.mse);
  return r;
}

void clamp01(GrayImage& img) {
  for (auto& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
}

}  // namespace pgt
