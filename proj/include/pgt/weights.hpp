#pragma once

// Versioned weight container, little-endian:
//
//   "PGTW" u32 version(=1)
//   u32 variant  u32 policy_kind  f64 alpha  u32 base_channels
//   u8 sequential_main_stages  u32 dtype(0 = f64, 1 = f32)  u32 n_params
//   n_params x { str name, u32 dims[4], u32 dtype, data }
//
// Strings are u32 length + bytes.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pgt/model.hpp"

namespace pgt {

enum class Precision : std::uint32_t { f64 = 0, f32 = 1 };

std::vector<std::uint8_t> save_weights(const ModelGraph& graph,
                                       Precision precision = Precision::f64);
// Builds a graph from the header and fills its parameters.
ModelGraph load_weights(std::span<const std::uint8_t> bytes,
                        Precision* stored = nullptr);
// Fills an existing graph; throws ModelError when variant, policy or
// channel configuration differ from the file.
void load_weights_into(ModelGraph& graph, std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace pgt
