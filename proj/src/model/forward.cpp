#include "pgt/detail/backends.hpp"
#include "pgt/model.hpp"

namespace pgt {

namespace {

void check_input(const ModelGraph& graph, const Tensor& noisy) {
  const Shape& s = noisy.shape();
  const int in_c = graph.conv("stem.conv1").in_channels;
  if (s.c != in_c || s.n < 1 || s.h < 1 || s.w < 1) {
    throw ModelError("model expects (B," + std::to_string(in_c) + ",H,W) input, got " +
                     s.str());
  }
}

}  // namespace

ForwardOutputs forward(const ModelGraph& graph, const Tensor& noisy,
                       const ForwardOptions& opts) {
  check_input(graph, noisy);
  detail::TapedBackend be;
  auto r = detail::run_dataflow(graph, be, noisy, opts.binary_only);
  ForwardOutputs out;
  if (r.has_binary) out.binary = r.binary;
  if (r.has_main) out.main = r.main;
  return out;
}

ForwardOutputs infer(const ModelGraph& graph, const Tensor& noisy) {
  check_input(graph, noisy);
  return detail::run_plain<double>(graph, noisy);
}

ForwardOutputs infer_f32(const ModelGraph& graph, const Tensor& noisy) {
  check_input(graph, noisy);
  return detail::run_plain<float>(graph, noisy);
}

}  // namespace pgt
