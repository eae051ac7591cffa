#include "pgt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pgt/detail/text.hpp"
#include "pgt/ops.hpp"
#include "pgt/random.hpp"

namespace pgt {

void TrainingSet::validate() const {
  if (noisy.empty()) throw TrainError("training set is empty");
  if (clean.size() != noisy.size() || binary.size() != noisy.size()) {
    throw TrainError("training set has mismatched noisy/clean/binary counts");
  }
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    if (!noisy[i].same_shape(noisy[0]) || !clean[i].same_shape(noisy[0]) ||
        !binary[i].same_shape(noisy[0])) {
      throw TrainError("training images must share one size (sample " + std::to_string(i) + ")");
    }
  }
}

TrainingSet to_training_set(const std::vector<SampleTriplet>& samples) {
  TrainingSet t;
  for (const auto& s : samples) {
    t.noisy.push_back(s.noisy);
    t.clean.push_back(s.clean);
    t.binary.push_back(s.binary);
  }
  return t;
}

Adam::Adam(double lr, double beta1, double beta2, double epsilon)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(epsilon) {}

void Adam::step(std::vector<ParamRef>& params, const std::vector<bool>& mask) {
  if (mask.size() != params.size()) throw TrainError("adam: mask size mismatch");
  if (s_.m.empty()) {
    s_.t.assign(params.size(), 0);
    for (const auto& p : params) {
      s_.m.emplace_back(static_cast<std::size_t>(p.tensor.size()), 0.0);
      s_.v.emplace_back(static_cast<std::size_t>(p.tensor.size()), 0.0);
    }
  }
  if (s_.m.size() != params.size()) throw TrainError("adam: parameter list changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!mask[i]) continue;
    auto& m = s_.m[i];
    auto& v = s_.v[i];
    auto w = params[i].tensor.mutable_data();
    if (m.size() != w.size()) throw TrainError("adam: state size mismatch for " + params[i].name);
    const bool has = params[i].tensor.has_grad();
    const auto g = params[i].tensor.grad();
    const std::uint64_t t = ++s_.t[i];
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t));
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = has ? g[k] : 0.0;
      m[k] = b1_ * m[k] + (1.0 - b1_) * gk;
      v[k] = b2_ * v[k] + (1.0 - b2_) * gk * gk;
      w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

namespace {

TraceRow make_row(std::int64_t step, int phase, const TotalTerms& t, const LossWeights& w,
                  bool multitask) {
  TraceRow r;
  r.step = step;
  r.phase = phase;
  r.loss_total = t.total;
  if (phase == 1) {
    r.loss_mse = t.binary.mse;
    r.loss_lap = t.binary.lap;
    r.loss_ssim = t.binary.ssim;
    r.loss_binary = t.binary.total;
  } else if (multitask) {
    r.loss_mse = w.w_binary_task * t.binary.mse + w.w_main_task * t.main.mse;
    r.loss_lap = w.w_binary_task * t.binary.lap + w.w_main_task * t.main.lap;
    r.loss_ssim = w.w_binary_task * t.binary.ssim + w.w_main_task * t.main.ssim;
    r.loss_binary = t.binary.total;
    r.loss_main = t.main.total;
  } else {
    r.loss_mse = t.main.mse;
    r.loss_lap = t.main.lap;
    r.loss_ssim = t.main.ssim;
    r.loss_main = t.main.total;
  }
  return r;
}

std::string describe(const TotalTerms& t) {
  using detail::format_double;
  std::ostringstream o;
  o << "total=" << format_double(t.total) << " binary(mse=" << format_double(t.binary.mse)
    << " lap=" << format_double(t.binary.lap) << " ssim=" << format_double(t.binary.ssim)
    << ") main(mse=" << format_double(t.main.mse) << " lap=" << format_double(t.main.lap)
    << " ssim=" << format_double(t.main.ssim) << ")";
  return o.str();
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, TrainingSet data)
    : cfg_(std::move(cfg)),
      data_(std::move(data)),
      adam_(cfg_.learning_rate, cfg_.beta1, cfg_.beta2, cfg_.adam_epsilon) {
  cfg_.validate();
  data_.validate();
  if (cfg_.train_limit > 0 && static_cast<std::size_t>(cfg_.train_limit) < data_.size()) {
    const auto n = static_cast<std::size_t>(cfg_.train_limit);
    data_.noisy.resize(n);
    data_.clean.resize(n);
    data_.binary.resize(n);
  }
  const GrayImage& first = data_.noisy.front();
  if (cfg_.crop_height > first.height || cfg_.crop_width > first.width) {
    throw TrainError("crop larger than the training images");
  }
  if (cfg_.crop_height == 0 && (first.height < 7 || first.width < 7)) {
    throw TrainError("training images smaller than the SSIM window");
  }
  const auto n = static_cast<std::int64_t>(data_.size());
  steps_per_epoch_ = (n + cfg_.batch_size - 1) / cfg_.batch_size;
  total_steps_ = cfg_.max_steps > 0 ? cfg_.max_steps : steps_per_epoch_ * cfg_.epochs;
  graph_ = build(cfg_.build_options());
  graph_.set_requires_grad(true);
  trace_.label = cfg_.scaling().label();
}

Trainer::Trainer(TrainConfig cfg, TrainingSet data, Checkpoint resume)
    : Trainer(std::move(cfg), std::move(data)) {
  const BuildOptions want = cfg_.build_options();
  const BuildOptions& got = resume.graph.options;
  if (got.variant != want.variant || !(got.policy == want.policy) ||
      got.base_channels != want.base_channels ||
      got.sequential_main_stages != want.sequential_main_stages) {
    throw TrainError("checkpoint model does not match the training configuration");
  }
  graph_ = std::move(resume.graph);
  graph_.set_requires_grad(true);
  adam_.restore(std::move(resume.adam));
  step_ = static_cast<std::int64_t>(resume.step);
}

int Trainer::phase_of(std::int64_t step) const {
  return step < cfg_.phase1_steps ? 1 : 2;
}

Trainer::BatchPlan Trainer::plan(std::int64_t step) const {
  const auto n = data_.size();
  const auto epoch = static_cast<std::uint64_t>(step / steps_per_epoch_);
  const auto pos = static_cast<std::size_t>(step % steps_per_epoch_);
  const std::uint64_t epoch_seed = derive_seed(cfg_.seed, SeedStream::shuffle, epoch);

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng shuffle(epoch_seed);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(perm[i - 1], perm[shuffle.below(i)]);
  }

  BatchPlan p;
  const std::size_t begin = pos * static_cast<std::size_t>(cfg_.batch_size);
  const std::size_t end = std::min(n, begin + static_cast<std::size_t>(cfg_.batch_size));
  p.indices.assign(perm.begin() + static_cast<std::ptrdiff_t>(begin),
                   perm.begin() + static_cast<std::ptrdiff_t>(end));

  Rng crops(derive_seed(epoch_seed, SeedStream::sample, pos));
  const GrayImage& img = data_.noisy.front();
  for (std::size_t k = 0; k < p.indices.size(); ++k) {
    if (cfg_.crop_height == 0) {
      p.offsets.emplace_back(0, 0);
    } else {
      const int y = static_cast<int>(crops.below(static_cast<std::uint64_t>(img.height - cfg_.crop_height + 1)));
      const int x = static_cast<int>(crops.below(static_cast<std::uint64_t>(img.width - cfg_.crop_width + 1)));
      p.offsets.emplace_back(y, x);
    }
  }
  return p;
}

void Trainer::make_batch(const BatchPlan& p, Tensor& noisy, Tensor& clean,
                         Tensor& binary) const {
  const GrayImage& first = data_.noisy.front();
  const int h = cfg_.crop_height ? cfg_.crop_height : first.height;
  const int w = cfg_.crop_width ? cfg_.crop_width : first.width;
  const int b = static_cast<int>(p.indices.size());
  const Shape shape{b, 1, h, w};
  std::vector<double> nv, cv, bv;
  nv.reserve(static_cast<std::size_t>(shape.size()));
  cv.reserve(nv.capacity());
  bv.reserve(nv.capacity());
  for (int k = 0; k < b; ++k) {
    const std::size_t i = p.indices[static_cast<std::size_t>(k)];
    const auto [oy, ox] = p.offsets[static_cast<std::size_t>(k)];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        nv.push_back(data_.noisy[i].at(oy + y, ox + x));
        cv.push_back(data_.clean[i].at(oy + y, ox + x));
        bv.push_back(data_.binary[i].at(oy + y, ox + x));
      }
    }
  }
  noisy = Tensor::from(shape, std::move(nv));
  clean = Tensor::from(shape, std::move(cv));
  binary = Tensor::from(shape, std::move(bv));
}

StepReport Trainer::step() {
  if (done()) throw TrainError("training already finished");
  StepReport rep;
  rep.step = step_;
  rep.phase = phase_of(step_);
  const bool multitask = graph_.multitask();

  Tensor noisy, clean, binary;
  make_batch(plan(step_), noisy, clean, binary);
  graph_.zero_grad();

  Tensor loss;
  try {
    if (rep.phase == 1) {
      ForwardOptions fo;
      fo.binary_only = true;
      const ForwardOutputs out = forward(graph_, noisy, fo);
      loss = single_task_loss(out.binary, binary, cfg_.weights, &rep.terms.binary);
      rep.terms.total = rep.terms.binary.total;
    } else {
      const ForwardOutputs out = forward(graph_, noisy);
      loss = total_loss(multitask ? out.binary : Tensor{}, binary, out.main, clean,
                        cfg_.weights, &rep.terms);
    }
  } catch (const TensorError& e) {
    throw TrainError("non-finite value at step " + std::to_string(step_) + " phase " +
                     std::to_string(rep.phase) + ": " + e.what());
  }
  if (!std::isfinite(rep.terms.total)) {
    throw TrainError("non-finite loss at step " + std::to_string(step_) + " phase " +
                     std::to_string(rep.phase) + ": " + describe(rep.terms));
  }
  loss.backward();

  auto params = graph_.parameters();
  std::vector<bool> mask(params.size(), true);
  if (rep.phase == 1) {
    for (std::size_t i = 0; i < params.size(); ++i) mask[i] = params[i].phase1;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!mask[i] || !params[i].tensor.has_grad()) continue;
    for (double g : params[i].tensor.grad()) {
      if (!std::isfinite(g)) {
        throw TrainError("non-finite gradient in " + params[i].name + " at step " +
                         std::to_string(step_) + ": " + describe(rep.terms));
      }
    }
  }
  adam_.step(params, mask);
  graph_.zero_grad();

  if (step_ % cfg_.log_every == 0 || step_ + 1 == total_steps_) {
    trace_.rows.push_back(make_row(step_, rep.phase, rep.terms, cfg_.weights, multitask));
  }
  ++step_;
  return rep;
}

void Trainer::run(const std::function<void(const StepReport&)>& on_step) {
  while (!done()) {
    const StepReport r = step();
    if (on_step) on_step(r);
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.graph = graph_.clone();
  ck.step = static_cast<std::uint64_t>(step_);
  ck.adam = adam_.state();
  ck.config_text = config_to_text(cfg_);
  return ck;
}

}  // namespace pgt
