#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pgt/model.hpp"
#include "pgt/random.hpp"

namespace pgt {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::block84_multitask: return "block84_multitask";
    case Variant::block84_singletask: return "block84_singletask";
    case Variant::edge: return "edge";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  if (s == "block84_multitask" || s == "multitask") return Variant::block84_multitask;
  if (s == "block84_singletask" || s == "singletask") return Variant::block84_singletask;
  if (s == "edge") return Variant::edge;
  throw ModelError("unknown variant '" + std::string(s) + "'");
}

std::string_view to_string(ScalingKind k) {
  return k == ScalingKind::proposed ? "proposed" : "all_positive";
}

ScalingKind parse_scaling_kind(std::string_view s) {
  if (s == "proposed") return ScalingKind::proposed;
  if (s == "all_positive") return ScalingKind::all_positive;
  throw ModelError("unknown scaling policy '" + std::string(s) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

std::string_view to_string(Segment s) {
  switch (s) {
    case Segment::stem: return "stem";
    case Segment::shared: return "shared";
    case Segment::binary: return "binary";
    case Segment::main: return "main";
  }
  return "?";
}

double ScalingPolicy::epsilon(int stage) const {
  // Dividing the integer difference keeps (24 - 15) / 100 == 0.09 exact.
  const double base = (alpha - static_cast<double>(stage)) / 100.0;
  // The proposed schedule never uses a zero factor: the stage where
  // alpha - stage vanishes takes -0.01, which is also where the sign flips.
  if (kind == ScalingKind::proposed && base == 0.0) return -0.01;
  return base;
}

std::string ScalingPolicy::label() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s(alpha=%g)", std::string(to_string(kind)).c_str(), alpha);
  return buf;
}

double epsilon(const ScalingPolicy& policy, int stage) {
  if (stage < 1) throw ModelError("stage numbers start at 1");
  return policy.epsilon(stage);
}

std::int64_t ConvLayer::parameter_count() const {
  return static_cast<std::int64_t>(out_channels) * in_channels * kernel * kernel +
         out_channels;
}

BuildOptions options_for(Variant variant, const ScalingPolicy& policy,
                         int base_channels, std::uint64_t init_seed) {
  BuildOptions o;
  o.variant = variant;
  o.policy = policy;
  o.base_channels = base_channels;
  o.sequential_main_stages =
      variant == Variant::block84_multitask && policy.kind == ScalingKind::all_positive &&
      policy.alpha >= 85.0;
  o.init_seed = init_seed;
  return o;
}

const ConvLayer& ModelGraph::conv(std::string_view name) const {
  auto i = find_conv(name);
  if (!i) throw ModelError("graph has no layer '" + std::string(name) + "'");
  return convs[*i];
}

std::optional<std::size_t> ModelGraph::find_conv(std::string_view name) const {
  for (std::size_t i = 0; i < convs.size(); ++i) {
    if (convs[i].name == name) return i;
  }
  return std::nullopt;
}

std::int64_t ModelGraph::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& c : convs) n += c.parameter_count();
  return n;
}

std::vector<LayerCount> ModelGraph::breakdown() const {
  std::vector<LayerCount> out;
  for (const auto& c : convs) {
    out.push_back({c.name, {c.out_channels, c.in_channels, c.kernel, c.kernel},
                   c.parameter_count()});
  }
  return out;
}

std::vector<ParamRef> ModelGraph::parameters() const {
  std::vector<ParamRef> out;
  out.reserve(convs.size() * 2);
  for (const auto& c : convs) {
    out.push_back({c.name + ".weight", c.weight, c.phase1});
    out.push_back({c.name + ".bias", c.bias, c.phase1});
  }
  return out;
}

void ModelGraph::set_requires_grad(bool flag) {
  for (auto& c : convs) {
    c.weight.set_requires_grad(flag);
    c.bias.set_requires_grad(flag);
  }
}

void ModelGraph::zero_grad() {
  for (auto& c : convs) {
    c.weight.clear_grad();
    c.bias.clear_grad();
  }
}

ModelGraph ModelGraph::clone() const {
  ModelGraph g = *this;
  for (auto& c : g.convs) {
    const bool rg = c.weight.requires_grad();
    c.weight = c.weight.detach();
    c.bias = c.bias.detach();
    c.weight.set_requires_grad(rg);
    c.bias.set_requires_grad(rg);
  }
  return g;
}

namespace {

class Builder {
 public:
  explicit Builder(ModelGraph& g) : g_(g) {}

  std::size_t conv(std::string name, int in, int out, Segment seg, bool phase1) {
    ConvLayer c;
    c.name = std::move(name);
    c.in_channels = in;
    c.out_channels = out;
    c.kernel = 3;
    c.segment = seg;
    c.phase1 = phase1;
    c.weight = Tensor::zeros({out, in, 3, 3});
    c.bias = Tensor::zeros({1, out, 1, 1});
    g_.convs.push_back(std::move(c));
    return g_.convs.size() - 1;
  }

  void block(int stage, int channels, Segment branch, bool phase1) {
    const Activation act = branch == Segment::binary ? Activation::sigmoid : Activation::relu;
    char prefix[48];
    std::snprintf(prefix, sizeof prefix, "%s.s%02d",
                  std::string(to_string(branch)).c_str(), stage);
    BlockSpec b;
    b.stage = stage;
    b.channels = channels;
    b.activation = act;
    b.epsilon = g_.options.policy.epsilon(stage);
    b.branch = branch;
    b.conv1 = conv(std::string(prefix) + ".conv1", channels, channels, branch, phase1);
    b.conv2 = conv(std::string(prefix) + ".conv2", channels, channels, branch, phase1);
    g_.blocks.push_back(b);
  }

 private:
  ModelGraph& g_;
};

}  // namespace

ModelGraph build(const BuildOptions& options) {
  if (options.base_channels < 8) {
    throw ModelError("base_channels must be >= 8, got " +
                     std::to_string(options.base_channels));
  }
  ModelGraph g;
  g.options = options;
  Builder b(g);
  const int C = options.base_channels;

  switch (options.variant) {
    case Variant::block84_multitask: {
      b.conv("stem.conv1", 1, C, Segment::stem, true);
      b.conv("stem.conv2", C, C, Segment::stem, true);
      for (int s = 1; s <= 24; ++s) b.block(s, C, Segment::shared, true);
      for (int s = 25; s <= 60; ++s) b.block(s, C, Segment::binary, true);
      b.conv("binary.merge", 2 * C, C, Segment::binary, true);
      b.conv("binary.head", C, 1, Segment::binary, true);
      b.conv("main.guide", C + 1, C, Segment::main, false);
      const int first_main = options.sequential_main_stages ? 61 : 25;
      for (int s = first_main; s < first_main + 24; ++s) b.block(s, C, Segment::main, false);
      b.conv("main.merge", 2 * C, C, Segment::main, false);
      b.conv("main.head", C, 1, Segment::main, false);
      g.edges = {{"stem.conv2 (BFM)", "binary.merge"},
                 {"stem.conv2 (BFM)", "main.merge"},
                 {"binary.head", "main.guide"}};
      break;
    }
    case Variant::block84_singletask: {
      b.conv("stem.conv1", 1, C, Segment::stem, true);
      b.conv("stem.conv2", C, C, Segment::stem, true);
      for (int s = 1; s <= 24; ++s) b.block(s, C, Segment::shared, true);
      for (int s = 25; s <= 84; ++s) b.block(s, C, Segment::main, false);
      b.conv("main.merge", 2 * C, C, Segment::main, false);
      b.conv("main.head", C, 1, Segment::main, false);
      g.edges = {{"stem.conv2 (BFM)", "main.merge"}};
      break;
    }
    case Variant::edge: {
      const int narrow = C / 2;
      b.conv("stem.conv1", 1, C, Segment::stem, true);
      b.conv("stem.conv2", C, C, Segment::stem, true);
      for (int s = 1; s <= 24; ++s) b.block(s, C, Segment::shared, true);
      for (int s = 25; s <= 28; ++s) b.block(s, C, Segment::main, false);
      b.conv("main.reduce", C, narrow, Segment::main, false);
      for (int s = 29; s <= 32; ++s) b.block(s, narrow, Segment::main, false);
      b.conv("main.merge", narrow + C, narrow, Segment::main, false);
      b.conv("main.head", narrow, 1, Segment::main, false);
      g.edges = {{"stem.conv2 (BFM)", "main.merge"}};
      break;
    }
  }
  initialize(g, options.init_seed);
  return g;
}

void initialize(ModelGraph& graph, std::uint64_t seed) {
  // Activation that follows each conv decides the fan scaling.
  std::vector<Activation> follows(graph.convs.size(), Activation::none);
  if (auto i = graph.find_conv("stem.conv1")) follows[*i] = Activation::relu;
  if (auto i = graph.find_conv("binary.head")) follows[*i] = Activation::sigmoid;
  for (const auto& b : graph.blocks) {
    follows[b.conv1] = b.activation;
    follows[b.conv2] = b.activation == Activation::sigmoid ? Activation::sigmoid
                                                           : Activation::none;
  }
  for (std::size_t i = 0; i < graph.convs.size(); ++i) {
    ConvLayer& c = graph.convs[i];
    const double fan_in = static_cast<double>(c.in_channels) * c.kernel * c.kernel;
    const double fan_out = static_cast<double>(c.out_channels) * c.kernel * c.kernel;
    double stddev = 0.0;
    switch (follows[i]) {
      case Activation::relu: stddev = std::sqrt(2.0 / fan_in); break;
      case Activation::sigmoid: stddev = std::sqrt(2.0 / (fan_in + fan_out)); break;
      case Activation::none: stddev = std::sqrt(1.0 / fan_in); break;
    }
    Rng rng(derive_seed(seed, SeedStream::init, i));
    const bool rg = c.weight.requires_grad();
    std::vector<double> w(static_cast<std::size_t>(c.weight.size()));
    for (auto& v : w) v = stddev * rng.normal();
    c.weight = Tensor::from(c.weight.shape(), std::move(w), rg);
    c.bias = Tensor::zeros(c.bias.shape(), rg);
  }
}

}  // namespace pgt
