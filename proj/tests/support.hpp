#pragma once

// Shared helpers for the unit and acceptance tests: random tensors,
// central finite differences and brute-force image metrics written
// independently of the library code.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pgt/image.hpp"
#include "pgt/loss.hpp"
#include "pgt/ops.hpp"
#include "pgt/random.hpp"
#include "pgt/tensor.hpp"

namespace pgt::testing {

inline Tensor random_tensor(Rng& rng, Shape s, double lo, double hi, bool grad = true) {
  std::vector<double> d(static_cast<std::size_t>(s.size()));
  for (auto& v : d) v = rng.uniform(lo, hi);
  return Tensor::from(s, std::move(d), grad);
}

// Values away from zero so relu/clamp kinks stay out of the FD stencil.
inline Tensor random_nonzero(Rng& rng, Shape s, double margin, bool grad = true) {
  std::vector<double> d(static_cast<std::size_t>(s.size()));
  for (auto& v : d) {
    const double m = rng.uniform(margin, 1.0);
    v = rng.bernoulli(0.5) ? m : -m;
  }
  return Tensor::from(s, std::move(d), grad);
}

struct GradCheck {
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double max_abs = 0.0;
  std::size_t checked = 0;
};

// Compares backward() against central differences of `f` for every input.
// `f` must build a fresh graph from the given leaves each call. When
// max_coords > 0 only that many randomly chosen coordinates per input are
// perturbed.
inline GradCheck grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                            std::vector<Tensor> inputs, double h = 1e-6,
                            std::size_t max_coords = 0, std::uint64_t seed = 1) {
  for (auto& t : inputs) t.clear_grad();
  Tensor loss = f(inputs);
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(static_cast<std::size_t>(t.size()), 0.0);
    }
  }
  Rng rng(seed);
  double num2 = 0.0, diff2 = 0.0, an2 = 0.0;
  GradCheck out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (!inputs[k].requires_grad()) continue;
    const auto n = static_cast<std::size_t>(inputs[k].size());
    std::vector<std::size_t> coords;
    if (max_coords == 0 || max_coords >= n) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      while (coords.size() < max_coords) {
        const auto c = static_cast<std::size_t>(rng.below(n));
        if (std::find(coords.begin(), coords.end(), c) == coords.end()) coords.push_back(c);
      }
    }
    for (auto i : coords) {
      auto data = inputs[k].mutable_data();
      const double orig = data[i];
      data[i] = orig + h;
      const double fp = f(inputs).item();
      data[i] = orig - h;
      const double fm = f(inputs).item();
      data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[k][i];
      num2 += numeric * numeric;
      an2 += a * a;
      diff2 += (a - numeric) * (a - numeric);
      out.max_abs = std::max(out.max_abs, std::abs(a - numeric));
      ++out.checked;
    }
  }
  const double denom = std::max(std::sqrt(num2), std::sqrt(an2));
  out.rel_error = denom > 0.0 ? std::sqrt(diff2) / denom : std::sqrt(diff2);
  return out;
}

inline GrayImage random_image(Rng& rng, int h, int w) {
  GrayImage img(h, w);
  for (auto& p : img.pixels) p = rng.uniform();
  return img;
}

// Straightforward reference metrics, deliberately not sharing code with the
// library.
inline double ref_mse(const GrayImage& a, const GrayImage& b) {
  long double s = 0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      const long double d = static_cast<long double>(a.at(y, x)) - b.at(y, x);
      s += d * d;
    }
  }
  return static_cast<double>(s / (static_cast<long double>(a.height) * a.width));
}

inline double ref_psnr(const GrayImage& a, const GrayImage& b) {
  const double m = ref_mse(a, b);
  return m == 0.0 ? INFINITY : 10.0 * std::log10(1.0 / m);
}

// Direct evaluation of the local statistics of every 7x7 window with a
// Gaussian (sigma 1.5) weight, using the two-pass variance formula.
inline double ref_ssim(const GrayImage& a, const GrayImage& b) {
  const int win = 7;
  const int r = win / 2;
  long double wsum = 0;
  std::vector<long double> w(win * win);
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const long double v = std::exp(-static_cast<long double>(dx * dx + dy * dy) / (2.0L * 1.5L * 1.5L));
      w[(dy + r) * win + (dx + r)] = v;
      wsum += v;
    }
  }
  for (auto& v : w) v /= wsum;
  const long double c1 = 0.0001L, c2 = 0.0009L;
  long double total = 0;
  int count = 0;
  for (int y = 0; y + win <= a.height; ++y) {
    for (int x = 0; x + win <= a.width; ++x) {
      long double ma = 0, mb = 0;
      for (int i = 0; i < win; ++i) {
        for (int j = 0; j < win; ++j) {
          ma += w[i * win + j] * a.at(y + i, x + j);
          mb += w[i * win + j] * b.at(y + i, x + j);
        }
      }
      long double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < win; ++i) {
        for (int j = 0; j < win; ++j) {
          const long double da = a.at(y + i, x + j) - ma;
          const long double db = b.at(y + i, x + j) - mb;
          va += w[i * win + j] * da * da;
          vb += w[i * win + j] * db * db;
          cov += w[i * win + j] * da * db;
        }
      }
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return static_cast<double>(total / count);
}

// Four residual blocks wired like the network: stem, one shared block, a
// sigmoid binary block with head, and two main blocks behind a concat guide.
// `loss` rebuilds the graph from the parameter leaves and returns total_loss.
struct MiniGraph {
  std::vector<Tensor> params;
  std::function<Tensor(const std::vector<Tensor>&)> loss;
};

inline MiniGraph make_mini_graph(Rng& rng, int C = 2, int H = 8, int W = 8) {
  MiniGraph m;
  const Tensor x = random_tensor(rng, {1, 1, H, W}, 0, 1, false);
  const Tensor bg = random_tensor(rng, {1, 1, H, W}, 0, 1, false);
  const Tensor mg = random_tensor(rng, {1, 1, H, W}, 0, 1, false);
  auto conv = [&](int in, int out) {
    m.params.push_back(random_tensor(rng, {out, in, 3, 3}, -0.5, 0.5));
    m.params.push_back(random_tensor(rng, {1, out, 1, 1}, -0.1, 0.1));
  };
  conv(1, C);                // 0,1 stem
  conv(C, C), conv(C, C);    // 2..5 shared block
  conv(C, C), conv(C, C);    // 6..9 binary block
  conv(C, 1);                // 10,11 binary head
  conv(C + 1, C);            // 12,13 guide
  conv(C, C), conv(C, C);    // 14..17 main block
  conv(C, C), conv(C, C);    // 18..21 main block
  conv(C, 1);                // 22,23 main head
  m.loss = [x, bg, mg](const std::vector<Tensor>& v) {
    auto cv = [&](const Tensor& t, int i) { return conv2d(t, v[i], v[i + 1]); };
    auto block = [&](const Tensor& t, int i, double eps, bool sig) {
      const Tensor h = cv(t, i);
      return scaled_residual_add(t, cv(sig ? sigmoid(h) : relu(h), i + 2), eps);
    };
    const Tensor s = block(cv(x, 0), 2, 0.09, false);
    const Tensor b = sigmoid(cv(block(s, 6, 0.01, true), 10));
    Tensor mm = cv(concat_channels({s, b}), 12);
    mm = block(block(mm, 14, -0.01, false), 18, -0.06, false);
    return total_loss(b, bg, cv(mm, 22), mg);
  };
  return m;
}

}  // namespace pgt::testing
