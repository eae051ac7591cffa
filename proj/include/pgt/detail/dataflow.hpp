#pragma once

// The PGT-Net dataflow written once over an execution backend. A backend
// supplies Value plus conv/relu/sigmoid/concat/residual; the taped trainer
// path, plain inference, and quantized inference all walk this function.

#include <vector>

#include "pgt/model.hpp"

namespace pgt::detail {

template <class Value>
struct DataflowOutputs {
  Value binary;
  Value main;
  bool has_binary = false;
  bool has_main = false;
};

template <class Backend>
typename Backend::Value run_block(const ModelGraph& g, Backend& be,
                                  const BlockSpec& b,
                                  const typename Backend::Value& x) {
  auto h = be.conv(g.convs[b.conv1], x);
  h = b.activation == Activation::sigmoid ? be.sigmoid(h) : be.relu(h);
  auto r = be.conv(g.convs[b.conv2], h);
  return be.residual(x, r, b.epsilon);
}

template <class Backend>
DataflowOutputs<typename Backend::Value> run_dataflow(
    const ModelGraph& g, Backend& be, const typename Backend::Value& input,
    bool binary_only) {
  using Value = typename Backend::Value;
  DataflowOutputs<Value> out;

  Value bfm = be.conv(g.conv("stem.conv2"), be.relu(be.conv(g.conv("stem.conv1"), input)));

  Value x = bfm;
  std::size_t i = 0;
  for (; i < g.blocks.size() && g.blocks[i].branch == Segment::shared; ++i) {
    x = run_block(g, be, g.blocks[i], x);
  }
  const Value shared = x;

  Value main_in = shared;
  if (g.multitask()) {
    Value y = shared;
    for (; i < g.blocks.size() && g.blocks[i].branch == Segment::binary; ++i) {
      y = run_block(g, be, g.blocks[i], y);
    }
    y = be.conv(g.conv("binary.merge"), be.concat({y, bfm}));
    out.binary = be.sigmoid(be.conv(g.conv("binary.head"), y));
    out.has_binary = true;
    if (binary_only) return out;
    main_in = be.conv(g.conv("main.guide"), be.concat({shared, out.binary}));
  } else {
    // Skip to the main branch (no binary blocks exist in these variants).
    while (i < g.blocks.size() && g.blocks[i].branch != Segment::main) ++i;
  }

  Value m = main_in;
  const auto reduce = g.find_conv("main.reduce");
  for (; i < g.blocks.size(); ++i) {
    const BlockSpec& b = g.blocks[i];
    if (reduce && b.channels != g.convs[g.blocks[i - 1].conv2].out_channels) {
      m = be.conv(g.convs[*reduce], m);
    }
    m = run_block(g, be, b, m);
  }
  m = be.conv(g.conv("main.merge"), be.concat({m, bfm}));
  out.main = be.conv(g.conv("main.head"), m);
  out.has_main = true;
  return out;
}

}  // namespace pgt::detail
