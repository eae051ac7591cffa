#pragma once

// Evaluation tables, single-image denoising and the residual-scaling
// ablation driver shared by the command line tool and the tests.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pgt/image.hpp"
#include "pgt/model.hpp"
#include "pgt/synth.hpp"
#include "pgt/trainer.hpp"

namespace pgt {

// (result - base) / base * 100; 0 when result == base (including both
// infinite or both zero).
double improvement_percent(double result, double base);

struct EvalRow {
  std::string label;
  double mse = 0.0;
  double ssim = 0.0;
  double psnr = 0.0;
  double mse_improvement = 0.0;
  double ssim_improvement = 0.0;
  double psnr_improvement = 0.0;
};

using Denoiser = std::function<GrayImage(const GrayImage&)>;

// Per-image metrics averaged over the split (PSNR is the mean of per-image
// PSNR). An empty denoiser evaluates the noisy input itself.
MetricReport average_metrics(const std::vector<SampleTriplet>& samples,
                             const Denoiser& denoiser = {});

EvalRow make_row(std::string label, const MetricReport& m, const MetricReport& baseline);
EvalRow no_enhance_row(const std::vector<SampleTriplet>& samples);

// Model output for one image through the double-precision tape-free path.
GrayImage denoise(const ModelGraph& graph, const GrayImage& noisy,
                  GrayImage* binary_out = nullptr);
Denoiser model_denoiser(const ModelGraph& graph);

inline constexpr std::string_view kEvalHeader =
    "model,mse,ssim,psnr,mse_improvement_pct,ssim_improvement_pct,psnr_improvement_pct";
std::string eval_to_csv(const std::vector<EvalRow>& rows);
std::vector<EvalRow> eval_from_csv(std::string_view text);
std::string format_eval_table(const std::vector<EvalRow>& rows);

// Variant, policy, per-block stage/epsilon table, per-layer shapes with
// phase tags and the parameter count.
std::string inspect_report(const ModelGraph& graph);

struct AblationRun {
  ScalingPolicy policy;
  BuildOptions options;
  std::vector<double> epsilons;  // per block, construction order
  LossTrace trace;
};

struct AblationResult {
  std::vector<AblationRun> runs;  // proposed, all_positive(61), all_positive(85)
  TraceComparison comparison;
  // Labels of all-positive runs whose final loss beat the proposed policy.
  std::vector<std::string> soft_check_failures;
};

// Trains the three residual-scaling settings from one base configuration
// with identical seeds and data. Only variant/policy/alpha are overridden.
AblationResult ablate_scaling(const TrainConfig& base, const TrainingSet& data,
                              const std::function<void(const std::string&)>& log = {});

}  // namespace pgt
