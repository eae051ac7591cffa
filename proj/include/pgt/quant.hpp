#pragma once

// Dynamic fixed-point quantization: every tensor gets its own fraction
// length f, codes are signed bit_width-bit integers and a code c stands for
// c * 2^-f. Inference is simulated by quantize -> dequantize around double
// arithmetic.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pgt/model.hpp"

namespace pgt {

class QuantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class QuantMode { weight_only, weight_and_activations };
std::string_view to_string(QuantMode m);
QuantMode parse_quant_mode(std::string_view s);

struct QuantSpec {
  int bit_width = 8;
  QuantMode mode = QuantMode::weight_only;

  void validate() const;  // 2 <= bit_width <= 32
  std::int64_t max_code() const { return (std::int64_t{1} << (bit_width - 1)) - 1; }
  std::int64_t min_code() const { return -(std::int64_t{1} << (bit_width - 1)); }
};

// Largest f with max|v| <= max_code * 2^-f; bit_width - 1 for an all-zero
// (or empty) tensor. f can be negative for large magnitudes.
int choose_fraction_length(std::span<const double> values, int bit_width);
int fraction_length_for_max(double max_abs, int bit_width);

struct QuantizedTensor {
  std::vector<std::int64_t> codes;
  int fraction_length = 0;
  int bit_width = 8;
};

// Round half away from zero, saturating at the code range.
std::int64_t quantize_value(double v, int fraction_length, int bit_width);
double dequantize_value(std::int64_t code, int fraction_length);

QuantizedTensor quantize_tensor(std::span<const double> values, int bit_width);
QuantizedTensor quantize_tensor(std::span<const double> values, int bit_width,
                                int fraction_length);
std::vector<double> dequantize(const QuantizedTensor& q);
// In-place quantize -> dequantize with a given fraction length.
void fake_quantize(std::span<double> values, int fraction_length, int bit_width);

struct TensorQuant {
  std::string name;
  int fraction_length = 0;
  std::int64_t count = 0;
};

// Per-conv activation range observed during calibration.
struct ActivationRange {
  std::string layer;
  double max_in = 0.0;
  double max_out = 0.0;
  int f_in = 0;
  int f_out = 0;
};

struct QuantizedModel {
  QuantSpec spec;
  ModelGraph graph;  // parameters hold dequantized values
  std::vector<TensorQuant> tensors;
  std::vector<ActivationRange> activations;  // empty until calibrated
  int calibration_samples = 0;

  bool calibrated() const { return !activations.empty(); }
};

QuantizedModel quantize_model(const ModelGraph& graph, const QuantSpec& spec);

// Records per-tensor max |activation| at every conv input and output over
// `samples` ((N,1,H,W), run one image at a time with the quantized weights)
// and derives fraction lengths from them.
void calibrate(QuantizedModel& qm, const Tensor& samples);

// Forward with quantized weights; in weight_and_activations mode every conv
// input and output passes through quantize -> dequantize. Main output is
// clamped to [0,1] like infer(). Throws QuantError when activation mode is
// requested on an uncalibrated model.
ForwardOutputs quantized_forward(const QuantizedModel& qm, const Tensor& input);

struct SizeReport {
  std::int64_t parameters = 0;
  int bit_width = 8;
  std::int64_t float32_bytes = 0;
  double quantized_bytes = 0.0;  // payload only: parameters * bit_width / 8
  std::int64_t metadata_bytes = 0;  // one byte of fraction length per tensor
  std::vector<TensorQuant> tensors;
  double ratio = 0.0;  // float32_bytes / quantized_bytes
};

SizeReport size_report(const ModelGraph& graph, const QuantSpec& spec);
std::string format_size_report(const SizeReport& r);

// "PGTQ" u32 version, u32 bit_width, u32 mode, model header as in the weight
// file, u32 n tensors x { str name, u32 dims[4], i32 f, codes as
// ceil(bit_width/8)-byte little-endian two's complement }, u32 calibration
// samples, u32 n ranges x { str layer, f64 max_in, f64 max_out, i32 f_in,
// i32 f_out }.
std::vector<std::uint8_t> save_quantized(const QuantizedModel& qm);
QuantizedModel load_quantized(std::span<const std::uint8_t> bytes);

}  // namespace pgt
