#pragma once

// PGT-Net graph construction and forward pass.
//
// Dataflow of the multi-task variant:
//
//   noisy -> stem.conv1 -> relu -> stem.conv2 = BFM
//   BFM -> shared blocks (stages 1..24) = S
//   S -> binary blocks (25..60, sigmoid) -> concat BFM -> binary.merge
//     -> binary.head -> sigmoid = binary_out
//   concat(S, binary_out) -> main.guide -> main blocks (25..48, relu)
//     -> concat BFM -> main.merge -> main.head = main_out
//
// A residual block computes x + eps * conv2(act(conv1(x))). Each concat is
// followed by a 3x3 conv that projects back to the branch width.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pgt/ops.hpp"
#include "pgt/tensor.hpp"

namespace pgt {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Variant { block84_multitask, block84_singletask, edge };
std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

enum class ScalingKind { proposed, all_positive };
std::string_view to_string(ScalingKind k);
ScalingKind parse_scaling_kind(std::string_view s);

// Residual scaling factor per stage: eps(s) = (alpha - s) / 100, except that
// the proposed policy replaces the zero at s == alpha with -0.01 so that
// every block from stage alpha on is negative.
struct ScalingPolicy {
  ScalingKind kind = ScalingKind::proposed;
  double alpha = 24.0;

  static ScalingPolicy proposed() { return {ScalingKind::proposed, 24.0}; }
  static ScalingPolicy all_positive(double alpha) {
    return {ScalingKind::all_positive, alpha};
  }
  double epsilon(int stage) const;
  std::string label() const;
  bool operator==(const ScalingPolicy&) const = default;
};

double epsilon(const ScalingPolicy& policy, int stage);

enum class Activation { none, relu, sigmoid };
enum class Segment { stem, shared, binary, main };
std::string_view to_string(Activation a);
std::string_view to_string(Segment s);

struct ConvLayer {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  Segment segment = Segment::stem;
  bool phase1 = false;  // trainable during phase 1
  Tensor weight;        // (out, in, k, k)
  Tensor bias;          // (1, out, 1, 1)

  std::int64_t parameter_count() const;
};

struct BlockSpec {
  int stage = 0;
  int channels = 0;
  Activation activation = Activation::relu;
  double epsilon = 0.0;
  Segment branch = Segment::shared;
  std::size_t conv1 = 0;  // indices into ModelGraph::convs
  std::size_t conv2 = 0;
};

struct ConcatEdge {
  std::string source;
  std::string target;
};

struct BuildOptions {
  Variant variant = Variant::block84_multitask;
  ScalingPolicy policy = ScalingPolicy::proposed();
  int base_channels = 64;
  // Main-branch stages continue after the binary branch (61..84) instead of
  // running in parallel with it (25..48). Used by the alpha = 85 ablation.
  bool sequential_main_stages = false;
  std::uint64_t init_seed = 0;
};

// Stage numbering convention for a policy: alpha = 85 numbers the main
// branch after the binary branch.
BuildOptions options_for(Variant variant, const ScalingPolicy& policy,
                         int base_channels, std::uint64_t init_seed = 0);

struct LayerCount {
  std::string name;
  std::vector<std::int64_t> weight_shape;
  std::int64_t parameters = 0;
};

struct ParamRef {
  std::string name;
  Tensor tensor;
  bool phase1 = false;
};

class ModelGraph {
 public:
  BuildOptions options;
  std::vector<ConvLayer> convs;
  std::vector<BlockSpec> blocks;
  std::vector<ConcatEdge> edges;

  Variant variant() const { return options.variant; }
  const ScalingPolicy& policy() const { return options.policy; }
  bool multitask() const { return options.variant == Variant::block84_multitask; }

  const ConvLayer& conv(std::string_view name) const;
  std::optional<std::size_t> find_conv(std::string_view name) const;

  std::int64_t parameter_count() const;
  std::vector<LayerCount> breakdown() const;
  // Weight then bias of every conv, in construction order.
  std::vector<ParamRef> parameters() const;
  void set_requires_grad(bool flag);
  void zero_grad();

  // Deep copy of all parameter storage.
  ModelGraph clone() const;
};

// Throws ModelError for an unknown variant or base_channels < 8.
ModelGraph build(const BuildOptions& options);

// Seeded Kaiming (relu), Xavier (sigmoid) or LeCun (linear) normal init.
void initialize(ModelGraph& graph, std::uint64_t seed);

struct ForwardOutputs {
  Tensor binary;  // undefined for single-task and Edge variants
  Tensor main;    // undefined when only the binary path was run
};

struct ForwardOptions {
  bool binary_only = false;  // stop after the binary head (phase 1)
};

// Taped forward used for training; main output is not clamped.
ForwardOutputs forward(const ModelGraph& graph, const Tensor& noisy,
                       const ForwardOptions& opts = {});

// Tape-free forward in the requested precision; main output clamped to [0,1].
ForwardOutputs infer(const ModelGraph& graph, const Tensor& noisy);
ForwardOutputs infer_f32(const ModelGraph& graph, const Tensor& noisy);

}  // namespace pgt
