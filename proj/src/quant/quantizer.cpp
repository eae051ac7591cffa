#include "pgt/quant.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pgt/detail/backends.hpp"
#include "pgt/detail/bytes.hpp"
#include "pgt/detail/text.hpp"

namespace pgt {

std::string_view to_string(QuantMode m) {
  return m == QuantMode::weight_only ? "weight_only" : "weight_and_activations";
}

QuantMode parse_quant_mode(std::string_view s) {
  if (s == "weight_only" || s == "weights") return QuantMode::weight_only;
  if (s == "weight_and_activations" || s == "all") return QuantMode::weight_and_activations;
  throw QuantError("unknown quantization mode '" + std::string(s) + "'");
}

void QuantSpec::validate() const {
  if (bit_width < 2 || bit_width > 32) {
    throw QuantError("bit_width must be in [2, 32], got " + std::to_string(bit_width));
  }
}

int fraction_length_for_max(double max_abs, int bit_width) {
  QuantSpec{bit_width}.validate();
  if (!std::isfinite(max_abs) || max_abs < 0.0) throw QuantError("range must be finite");
  if (max_abs == 0.0) return bit_width - 1;
  const double qmax = static_cast<double>((std::int64_t{1} << (bit_width - 1)) - 1);
  int f = static_cast<int>(std::floor(std::log2(qmax / max_abs)));
  // log2 can be off by one near powers of two; settle it exactly.
  while (max_abs > std::ldexp(qmax, -f)) --f;
  while (max_abs <= std::ldexp(qmax, -(f + 1))) ++f;
  return f;
}

int choose_fraction_length(std::span<const double> values, int bit_width) {
  double m = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw QuantError("cannot quantize non-finite values");
    m = std::max(m, std::abs(v));
  }
  return fraction_length_for_max(m, bit_width);
}

std::int64_t quantize_value(double v, int fraction_length, int bit_width) {
  const double lo = -std::ldexp(1.0, bit_width - 1);
  const double hi = std::ldexp(1.0, bit_width - 1) - 1.0;
  // std::round is half away from zero.
  const double r = std::round(std::ldexp(v, fraction_length));
  return static_cast<std::int64_t>(std::clamp(r, lo, hi));
}

double dequantize_value(std::int64_t code, int fraction_length) {
  return std::ldexp(static_cast<double>(code), -fraction_length);
}

QuantizedTensor quantize_tensor(std::span<const double> values, int bit_width,
                                int fraction_length) {
  QuantSpec{bit_width}.validate();
  QuantizedTensor q;
  q.bit_width = bit_width;
  q.fraction_length = fraction_length;
  q.codes.reserve(values.size());
  for (double v : values) {
    if (!std::isfinite(v)) throw QuantError("cannot quantize non-finite values");
    q.codes.push_back(quantize_value(v, fraction_length, bit_width));
  }
  return q;
}

QuantizedTensor quantize_tensor(std::span<const double> values, int bit_width) {
  return quantize_tensor(values, bit_width, choose_fraction_length(values, bit_width));
}

std::vector<double> dequantize(const QuantizedTensor& q) {
  std::vector<double> out;
  out.reserve(q.codes.size());
  for (auto c : q.codes) out.push_back(dequantize_value(c, q.fraction_length));
  return out;
}

void fake_quantize(std::span<double> values, int fraction_length, int bit_width) {
  for (double& v : values) {
    v = dequantize_value(quantize_value(v, fraction_length, bit_width), fraction_length);
  }
}

QuantizedModel quantize_model(const ModelGraph& graph, const QuantSpec& spec) {
  spec.validate();
  QuantizedModel qm;
  qm.spec = spec;
  qm.graph = graph.clone();
  qm.graph.set_requires_grad(false);
  for (auto& p : qm.graph.parameters()) {
    auto data = p.tensor.mutable_data();
    const int f = choose_fraction_length(data, spec.bit_width);
    fake_quantize(data, f, spec.bit_width);
    qm.tensors.push_back({p.name, f, p.tensor.size()});
  }
  return qm;
}

namespace {

std::size_t layer_index(const ModelGraph& g, const ConvLayer& c) {
  return static_cast<std::size_t>(&c - g.convs.data());
}

}  // namespace

void calibrate(QuantizedModel& qm, const Tensor& samples) {
  const Shape s = samples.shape();
  if (s.n < 1 || s.c != 1) throw QuantError("calibration expects (N,1,H,W) samples");
  std::vector<double> max_in(qm.graph.convs.size(), 0.0);
  std::vector<double> max_out(qm.graph.convs.size(), 0.0);
  auto hook = [&](const ConvLayer& c, detail::ActivationSite site, std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    auto& slot = site == detail::ActivationSite::input ? max_in : max_out;
    auto& cur = slot[layer_index(qm.graph, c)];
    cur = std::max(cur, m);
  };
  const auto plane = static_cast<std::size_t>(s.h) * static_cast<std::size_t>(s.w);
  const auto all = samples.data();
  for (int i = 0; i < s.n; ++i) {
    std::vector<double> one(all.begin() + static_cast<std::ptrdiff_t>(i * plane),
                            all.begin() + static_cast<std::ptrdiff_t>((i + 1) * plane));
    detail::run_plain<double>(qm.graph, Tensor::from({1, 1, s.h, s.w}, std::move(one)), hook);
  }
  qm.activations.clear();
  for (std::size_t k = 0; k < qm.graph.convs.size(); ++k) {
    ActivationRange r;
    r.layer = qm.graph.convs[k].name;
    r.max_in = max_in[k];
    r.max_out = max_out[k];
    r.f_in = fraction_length_for_max(r.max_in, qm.spec.bit_width);
    r.f_out = fraction_length_for_max(r.max_out, qm.spec.bit_width);
    qm.activations.push_back(r);
  }
  qm.calibration_samples = s.n;
}

ForwardOutputs quantized_forward(const QuantizedModel& qm, const Tensor& input) {
  const Shape& s = input.shape();
  if (s.c != 1 || s.n < 1) throw QuantError("quantized_forward expects (B,1,H,W) input");
  if (qm.spec.mode == QuantMode::weight_only) {
    return detail::run_plain<double>(qm.graph, input);
  }
  if (!qm.calibrated()) {
    throw QuantError("weight_and_activations mode needs calibrated activation ranges");
  }
  if (qm.activations.size() != qm.graph.convs.size()) {
    throw QuantError("activation table does not match the model");
  }
  const int bw = qm.spec.bit_width;
  auto hook = [&](const ConvLayer& c, detail::ActivationSite site, std::vector<double>& v) {
    const auto& r = qm.activations[layer_index(qm.graph, c)];
    fake_quantize(v, site == detail::ActivationSite::input ? r.f_in : r.f_out, bw);
  };
  return detail::run_plain<double>(qm.graph, input, hook);
}

SizeReport size_report(const ModelGraph& graph, const QuantSpec& spec) {
  spec.validate();
  SizeReport r;
  r.bit_width = spec.bit_width;
  r.parameters = graph.parameter_count();
  r.float32_bytes = 4 * r.parameters;
  r.quantized_bytes = static_cast<double>(r.parameters) * spec.bit_width / 8.0;
  for (const auto& p : graph.parameters()) {
    r.tensors.push_back({p.name, choose_fraction_length(p.tensor.data(), spec.bit_width),
                         p.tensor.size()});
  }
  r.metadata_bytes = static_cast<std::int64_t>(r.tensors.size());
  r.ratio = static_cast<double>(r.float32_bytes) / r.quantized_bytes;
  return r;
}

std::string format_size_report(const SizeReport& r) {
  std::ostringstream o;
  o << "parameters: " << r.parameters << "\n"
    << "float32 payload: " << r.float32_bytes << " bytes ("
    << detail::format_fixed(r.float32_bytes / 1e6, 3) << " MB)\n"
    << r.bit_width << "-bit payload: " << detail::format_double(r.quantized_bytes) << " bytes ("
    << detail::format_fixed(r.quantized_bytes / 1e6, 3) << " MB)\n"
    << "fraction-length metadata: " << r.metadata_bytes << " bytes (" << r.tensors.size()
    << " tensors)\n"
    << "compression ratio (payload): " << detail::format_fixed(r.ratio, 2) << "x\n"
    << "tensor,count,fraction_length\n";
  for (const auto& t : r.tensors) o << t.name << ',' << t.count << ',' << t.fraction_length << '\n';
  return o.str();
}

namespace {
constexpr std::uint32_t kQuantVersion = 1;
}

std::vector<std::uint8_t> save_quantized(const QuantizedModel& qm) {
  detail::ByteWriter w;
  w.raw("PGTQ", 4);
  w.u32(kQuantVersion);
  w.u32(static_cast<std::uint32_t>(qm.spec.bit_width));
  w.u32(static_cast<std::uint32_t>(qm.spec.mode));
  const BuildOptions& o = qm.graph.options;
  w.u32(static_cast<std::uint32_t>(o.variant));
  w.u32(static_cast<std::uint32_t>(o.policy.kind));
  w.f64(o.policy.alpha);
  w.u32(static_cast<std::uint32_t>(o.base_channels));
  w.u8(o.sequential_main_stages ? 1 : 0);
  const auto params = qm.graph.parameters();
  if (params.size() != qm.tensors.size()) throw QuantError("tensor table does not match model");
  const int nbytes = (qm.spec.bit_width + 7) / 8;
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const Shape& s = p.tensor.shape();
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(s.n));
    w.u32(static_cast<std::uint32_t>(s.c));
    w.u32(static_cast<std::uint32_t>(s.h));
    w.u32(static_cast<std::uint32_t>(s.w));
    const int f = qm.tensors[i].fraction_length;
    w.i32(f);
    for (double v : p.tensor.data()) {
      const auto code = static_cast<std::uint64_t>(quantize_value(v, f, qm.spec.bit_width));
      for (int b = 0; b < nbytes; ++b) w.u8(static_cast<std::uint8_t>(code >> (8 * b)));
    }
  }
  w.u32(static_cast<std::uint32_t>(qm.calibration_samples));
  w.u32(static_cast<std::uint32_t>(qm.activations.size()));
  for (const auto& r : qm.activations) {
    w.str(r.layer);
    w.f64(r.max_in);
    w.f64(r.max_out);
    w.i32(r.f_in);
    w.i32(r.f_out);
  }
  return std::move(w.bytes());
}

QuantizedModel load_quantized(std::span<const std::uint8_t> bytes) {
  try {
    detail::ByteReader r(bytes);
    r.expect_magic("PGTQ");
    if (r.u32() != kQuantVersion) throw QuantError("unsupported quantized model version");
    QuantizedModel qm;
    qm.spec.bit_width = static_cast<int>(r.u32());
    qm.spec.validate();
    const std::uint32_t mode = r.u32();
    if (mode > 1) throw QuantError("unknown quantization mode code");
    qm.spec.mode = static_cast<QuantMode>(mode);
    BuildOptions o;
    const std::uint32_t variant = r.u32();
    if (variant > static_cast<std::uint32_t>(Variant::edge)) throw QuantError("unknown variant code");
    o.variant = static_cast<Variant>(variant);
    const std::uint32_t kind = r.u32();
    if (kind > 1) throw QuantError("unknown policy code");
    o.policy.kind = static_cast<ScalingKind>(kind);
    o.policy.alpha = r.f64();
    o.base_channels = static_cast<int>(r.u32());
    o.sequential_main_stages = r.u8() != 0;
    qm.graph = build(o);
    auto params = qm.graph.parameters();
    if (r.u32() != params.size()) throw QuantError("tensor count does not match model");
    const int bw = qm.spec.bit_width;
    const int nbytes = (bw + 7) / 8;
    for (auto& p : params) {
      const std::string name = r.str();
      if (name != p.name) throw QuantError("unexpected tensor '" + name + "'");
      Shape s;
      s.n = r.u32();
      s.c = r.u32();
      s.h = r.u32();
      s.w = r.u32();
      if (s != p.tensor.shape()) throw QuantError("shape mismatch for " + name);
      const int f = r.i32();
      for (double& v : p.tensor.mutable_data()) {
        std::uint64_t u = 0;
        for (int b = 0; b < nbytes; ++b) u |= static_cast<std::uint64_t>(r.u8()) << (8 * b);
        // Sign-extend from bit_width bits.
        const int shift = 64 - bw;
        const auto code = static_cast<std::int64_t>(u << shift) >> shift;
        v = dequantize_value(code, f);
      }
      qm.tensors.push_back({name, f, p.tensor.size()});
    }
    qm.calibration_samples = static_cast<int>(r.u32());
    const std::uint32_t n = r.u32();
    if (n != 0 && n != qm.graph.convs.size()) throw QuantError("activation table does not match model");
    for (std::uint32_t i = 0; i < n; ++i) {
      ActivationRange a;
      a.layer = r.str();
      if (a.layer != qm.graph.convs[i].name) throw QuantError("activation table order mismatch");
      a.max_in = r.f64();
      a.max_out = r.f64();
      a.f_in = r.i32();
      a.f_out = r.i32();
      qm.activations.push_back(a);
    }
    if (!r.at_end()) throw QuantError("trailing bytes in quantized model");
    return qm;
  } catch (const detail::FormatError& e) {
    throw QuantError(std::string("quantized model: ") + e.what());
  }
}

}  // namespace pgt
