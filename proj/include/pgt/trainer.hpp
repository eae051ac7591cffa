#pragma once

// Two-phase training loop, Adam, checkpoints and loss traces.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pgt/dataset.hpp"
#include "pgt/image.hpp"
#include "pgt/loss.hpp"
#include "pgt/model.hpp"

namespace pgt {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  Variant variant = Variant::block84_multitask;
  ScalingKind policy = ScalingKind::proposed;
  double alpha = 24.0;
  int base_channels = 64;

  std::string manifest;   // dataset manifest path (CLI use)
  int train_limit = 0;    // use only the first N training triplets, 0 = all

  int epochs = 1;
  int max_steps = 0;      // > 0 overrides epochs
  int batch_size = 4;
  int crop_height = 0;    // random training crops, 0 = full image
  int crop_width = 0;
  int phase1_steps = 0;   // multitask only

  std::string optimizer = "adam";
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;

  LossWeights weights;
  std::uint64_t seed = 0;

  int log_every = 1;          // trace row every N steps
  int checkpoint_every = 0;   // 0 = final checkpoint only

  ScalingPolicy scaling() const;
  BuildOptions build_options() const;
  void validate() const;
};

// Flat "key = value" text; '#' starts a comment. Unknown keys are rejected.
TrainConfig parse_config(std::string_view text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
std::string config_to_text(const TrainConfig& cfg);

struct TrainingSet {
  std::vector<GrayImage> noisy;
  std::vector<GrayImage> clean;
  std::vector<GrayImage> binary;

  std::size_t size() const { return noisy.size(); }
  void validate() const;
};

TrainingSet to_training_set(const std::vector<SampleTriplet>& samples);

class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double epsilon);

  struct State {
    std::vector<std::uint64_t> t;  // per-tensor update count (bias correction)
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
  };

  // Updates every tensor in `params` whose mask entry is true using its
  // accumulated gradient (zero when absent). Masked tensors and their
  // moments are left untouched.
  void step(std::vector<ParamRef>& params, const std::vector<bool>& mask);

  const State& state() const { return s_; }
  void restore(State s) { s_ = std::move(s); }

 private:
  double lr_, b1_, b2_, eps_;
  State s_;
};

struct TraceRow {
  std::int64_t step = 0;
  int phase = 2;
  double loss_total = 0.0;
  // Task-weighted term values: loss_total = w_mse*loss_mse + w_lap*loss_lap
  // + w_ssim*loss_ssim. Phase 1 rows carry the binary task alone.
  double loss_mse = 0.0;
  double loss_lap = 0.0;
  double loss_ssim = 0.0;
  double loss_binary = 0.0;  // single-task loss of the binary output, 0 if none
  double loss_main = 0.0;    // single-task loss of the main output, 0 in phase 1
};

struct LossTrace {
  std::string label;
  std::vector<TraceRow> rows;
};

inline constexpr std::string_view kTraceHeader =
    "step,phase,loss_total,loss_mse,loss_lap,loss_ssim,loss_binary,loss_main";

std::string trace_to_csv(const LossTrace& trace);
LossTrace trace_from_csv(std::string_view text, std::string label = {});

struct TraceSummary {
  std::string label;
  double final_loss = 0.0;
  double initial_loss = 0.0;
  double auc = 0.0;  // trapezoidal area under loss_total over step
};

struct TraceComparison {
  std::vector<TraceSummary> summaries;
  std::vector<std::int64_t> steps;
  // table[i][k]: trace k's total loss at steps[i]
  std::vector<std::vector<double>> table;
  std::vector<std::string> final_loss_order;  // labels, lowest final loss first
};

// Throws TrainError when fewer than two traces or step grids differ.
TraceComparison loss_trace_compare(const std::vector<LossTrace>& traces);
std::string format_comparison(const TraceComparison& cmp);

struct Checkpoint {
  ModelGraph graph;
  std::uint64_t step = 0;
  Adam::State adam;
  std::string config_text;
};

// "PGTC" u32 version, blob weights, u64 step, u32 n, n x { u64 t,
// u64 len, f64 m[len], f64 v[len] }, str config.
std::vector<std::uint8_t> save_checkpoint(const Checkpoint& ck);
Checkpoint load_checkpoint(std::span<const std::uint8_t> bytes);
// Accepts either a checkpoint or a bare weight file.
ModelGraph load_model_file(const std::filesystem::path& path);

struct StepReport {
  std::int64_t step = 0;
  int phase = 2;
  TotalTerms terms;
};

class Trainer {
 public:
  Trainer(TrainConfig cfg, TrainingSet data);
  // Continues from a checkpoint written by an identically configured run.
  Trainer(TrainConfig cfg, TrainingSet data, Checkpoint resume);

  std::int64_t total_steps() const { return total_steps_; }
  std::int64_t steps_done() const { return step_; }
  bool done() const { return step_ >= total_steps_; }
  int phase_of(std::int64_t step) const;

  StepReport step();
  // Runs the remaining steps; on_step sees every step report.
  void run(const std::function<void(const StepReport&)>& on_step = {});

  const ModelGraph& graph() const { return graph_; }
  ModelGraph& graph() { return graph_; }
  const TrainConfig& config() const { return cfg_; }
  const LossTrace& trace() const { return trace_; }
  Checkpoint checkpoint() const;

  // Indices and crop offsets drawn for a given step; a pure function of
  // (seed, step) so resumed runs see the same batches.
  struct BatchPlan {
    std::vector<std::size_t> indices;
    std::vector<std::pair<int, int>> offsets;  // (y, x) crop origin
  };
  BatchPlan plan(std::int64_t step) const;

 private:
  void make_batch(const BatchPlan& p, Tensor& noisy, Tensor& clean, Tensor& binary) const;

  TrainConfig cfg_;
  TrainingSet data_;
  ModelGraph graph_;
  Adam adam_;
  std::int64_t step_ = 0;
  std::int64_t steps_per_epoch_ = 0;
  std::int64_t total_steps_ = 0;
  LossTrace trace_;
};

}  // namespace pgt
