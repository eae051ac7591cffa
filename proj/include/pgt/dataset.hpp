#pragma once

// On-disk datasets: 8-bit binary PGM images plus one JSON manifest.
//
// manifest.json:
//   { "format": "pgt-dataset", "version": 1, "base_seed": S,
//     "height": H, "width": W,
//     "params": { noise parameters }, "ridge": { clean-pattern parameters },
//     "splits": { "train": [ {"noisy": rel, "clean": rel, "binary": rel,
//                             "seed": s}, ... ], "val": [...], "test": [...] } }
// Paths are relative to the manifest's directory.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pgt/image.hpp"
#include "pgt/synth.hpp"

namespace pgt {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pgm(const GrayImage& img);
GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes);

struct ManifestEntry {
  std::string noisy;
  std::string clean;
  std::string binary;
  std::uint64_t seed = 0;
};

struct DatasetSpec {
  int n_train = 0;
  int n_val = 0;
  int n_test = 0;
  NoiseParams params;
  RidgeParams ridge;
  std::uint64_t base_seed = 0;
  int height = kStripHeight;
  int width = kStripWidth;
};

struct Manifest {
  DatasetSpec spec;
  std::map<std::string, std::vector<ManifestEntry>> splits;

  std::size_t total() const;
};

inline const std::vector<std::string> kSplitNames = {"train", "val", "test"};

// Sample i of the dataset (counting train, then val, then test) uses
// derive_seed(base_seed, sample, i); its noise seed derives from that.
std::uint64_t sample_seed(std::uint64_t base_seed, std::uint64_t global_index);

// Refuses a non-empty `dir` unless `force` is set.
Manifest write_dataset(const std::filesystem::path& dir, const DatasetSpec& spec,
                       bool force = false);
Manifest read_manifest(const std::filesystem::path& manifest_path);
std::string manifest_to_json(const Manifest& m);

struct Dataset {
  std::vector<SampleTriplet> samples;
  int height = 0;
  int width = 0;
};

// Loads the images listed for `split`; throws IoError for missing files.
Dataset load_split(const std::filesystem::path& manifest_path,
                   const std::string& split, std::size_t limit = 0);

}  // namespace pgt
