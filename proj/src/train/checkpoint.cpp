#include <cstring>

#include "pgt/detail/bytes.hpp"
#include "pgt/trainer.hpp"
#include "pgt/weights.hpp"

namespace pgt {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

std::vector<std::uint8_t> save_checkpoint(const Checkpoint& ck) {
  detail::ByteWriter w;
  w.raw("PGTC", 4);
  w.u32(kCheckpointVersion);
  w.blob(save_weights(ck.graph, Precision::f64));
  w.u64(ck.step);
  const auto& a = ck.adam;
  w.u32(static_cast<std::uint32_t>(a.m.size()));
  for (std::size_t i = 0; i < a.m.size(); ++i) {
    w.u64(a.t[i]);
    w.u64(a.m[i].size());
    for (double v : a.m[i]) w.f64(v);
    for (double v : a.v[i]) w.f64(v);
  }
  w.str(ck.config_text);
  return std::move(w.bytes());
}

Checkpoint load_checkpoint(std::span<const std::uint8_t> bytes) {
  try {
    detail::ByteReader r(bytes);
    r.expect_magic("PGTC");
    if (r.u32() != kCheckpointVersion) throw TrainError("unsupported checkpoint version");
    Checkpoint ck;
    const auto weights = r.blob();
    ck.graph = load_weights(weights);
    ck.step = r.u64();
    const std::uint32_t n = r.u32();
    const auto params = ck.graph.parameters();
    if (n != 0 && n != params.size()) throw TrainError("checkpoint optimizer state does not match model");
    for (std::uint32_t i = 0; i < n; ++i) {
      ck.adam.t.push_back(r.u64());
      const std::uint64_t len = r.u64();
      if (len != static_cast<std::uint64_t>(params[i].tensor.size())) {
        throw TrainError("checkpoint optimizer state size mismatch for " + params[i].name);
      }
      r.need(len * 16);
      std::vector<double> m(len), v(len);
      for (auto& x : m) x = r.f64();
      for (auto& x : v) x = r.f64();
      ck.adam.m.push_back(std::move(m));
      ck.adam.v.push_back(std::move(v));
    }
    ck.config_text = r.str();
    if (!r.at_end()) throw TrainError("trailing bytes in checkpoint");
    return ck;
  } catch (const detail::FormatError& e) {
    throw TrainError(std::string("checkpoint: ") + e.what());
  }
}

ModelGraph load_model_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "PGTC", 4) == 0) {
    return load_checkpoint(bytes).graph;
  }
  return load_weights(bytes);
}

}  // namespace pgt
