#include "pgt/weights.hpp"

#include <fstream>
#include <iterator>

#include "pgt/detail/bytes.hpp"

namespace pgt {

namespace {

constexpr std::uint32_t kWeightsVersion = 1;

void write_header(detail::ByteWriter& w, const ModelGraph& g, Precision p) {
  w.raw("PGTW", 4);
  w.u32(kWeightsVersion);
  w.u32(static_cast<std::uint32_t>(g.options.variant));
  w.u32(static_cast<std::uint32_t>(g.options.policy.kind));
  w.f64(g.options.policy.alpha);
  w.u32(static_cast<std::uint32_t>(g.options.base_channels));
  w.u8(g.options.sequential_main_stages ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(p));
}

struct Header {
  BuildOptions options;
  Precision precision = Precision::f64;
};

Header read_header(detail::ByteReader& r) {
  r.expect_magic("PGTW");
  const std::uint32_t version = r.u32();
  if (version != kWeightsVersion) {
    throw ModelError("unsupported weight file version " + std::to_string(version));
  }
  Header h;
  const std::uint32_t variant = r.u32();
  if (variant > static_cast<std::uint32_t>(Variant::edge)) {
    throw ModelError("weight file has unknown variant code " + std::to_string(variant));
  }
  h.options.variant = static_cast<Variant>(variant);
  const std::uint32_t kind = r.u32();
  if (kind > 1) throw ModelError("weight file has unknown policy code");
  h.options.policy.kind = static_cast<ScalingKind>(kind);
  h.options.policy.alpha = r.f64();
  h.options.base_channels = static_cast<int>(r.u32());
  h.options.sequential_main_stages = r.u8() != 0;
  const std::uint32_t p = r.u32();
  if (p > 1) throw ModelError("weight file has unknown dtype");
  h.precision = static_cast<Precision>(p);
  return h;
}

void read_params(detail::ByteReader& r, ModelGraph& g) {
  const std::uint32_t n = r.u32();
  auto params = g.parameters();
  if (n != params.size()) {
    throw ModelError("weight file has " + std::to_string(n) + " tensors, graph expects " +
                     std::to_string(params.size()));
  }
  for (auto& p : params) {
    const std::string name = r.str();
    if (name != p.name) throw ModelError("weight file tensor '" + name + "' where '" + p.name + "' expected");
    Shape s;
    s.n = r.u32();
    s.c = r.u32();
    s.h = r.u32();
    s.w = r.u32();
    if (s != p.tensor.shape()) {
      throw ModelError("shape mismatch for " + name + ": file " + s.str() + " graph " +
                       p.tensor.shape().str());
    }
    const std::uint32_t dtype = r.u32();
    auto dst = p.tensor.mutable_data();
    if (dtype == static_cast<std::uint32_t>(Precision::f64)) {
      for (auto& v : dst) v = r.f64();
    } else if (dtype == static_cast<std::uint32_t>(Precision::f32)) {
      for (auto& v : dst) v = static_cast<double>(r.f32());
    } else {
      throw ModelError("unknown dtype for " + name);
    }
    ensure_finite(dst, "weight file");
  }
  if (!r.at_end()) throw ModelError("trailing bytes after weight tensors");
}

}  // namespace

std::vector<std::uint8_t> save_weights(const ModelGraph& graph, Precision precision) {
  detail::ByteWriter w;
  write_header(w, graph, precision);
  const auto params = graph.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.str(p.name);
    const Shape& s = p.tensor.shape();
    w.u32(static_cast<std::uint32_t>(s.n));
    w.u32(static_cast<std::uint32_t>(s.c));
    w.u32(static_cast<std::uint32_t>(s.h));
    w.u32(static_cast<std::uint32_t>(s.w));
    w.u32(static_cast<std::uint32_t>(precision));
    for (double v : p.tensor.data()) {
      if (precision == Precision::f64) {
        w.f64(v);
      } else {
        w.f32(static_cast<float>(v));
      }
    }
  }
  return std::move(w.bytes());
}

ModelGraph load_weights(std::span<const std::uint8_t> bytes, Precision* stored) {
  try {
    detail::ByteReader r(bytes);
    const Header h = read_header(r);
    ModelGraph g = build(h.options);
    read_params(r, g);
    if (stored) *stored = h.precision;
    return g;
  } catch (const detail::FormatError& e) {
    throw ModelError(std::string("weight file: ") + e.what());
  }
}

void load_weights_into(ModelGraph& graph, std::span<const std::uint8_t> bytes) {
  try {
    detail::ByteReader r(bytes);
    const Header h = read_header(r);
    if (h.options.variant != graph.options.variant) {
      throw ModelError("weight file variant " + std::string(to_string(h.options.variant)) +
                       " does not match graph variant " +
                       std::string(to_string(graph.options.variant)));
    }
    if (!(h.options.policy == graph.options.policy) ||
        h.options.base_channels != graph.options.base_channels ||
        h.options.sequential_main_stages != graph.options.sequential_main_stages) {
      throw ModelError("weight file policy or channel configuration differs from graph");
    }
    read_params(r, graph);
  } catch (const detail::FormatError& e) {
    throw ModelError(std::string("weight file: ") + e.what());
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ModelError("write failed: " + path.string());
}

}  // namespace pgt
