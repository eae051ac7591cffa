#include "pgt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "pgt/random.hpp"

namespace pgt {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  const std::string header = "P5\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + img.size());
  for (double v : img.pixels) {
    bytes.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  return bytes;
}

GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> long {
    skip_space();
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
      if (v > 1'000'000) throw IoError("pgm: header value too large");
    }
    if (!any) throw IoError("pgm: malformed header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw IoError("pgm: not a binary P5 file");
  }
  pos = 2;
  const long w = read_int();
  const long h = read_int();
  const long maxval = read_int();
  if (w <= 0 || h <= 0) throw IoError("pgm: empty image");
  if (maxval != 255) throw IoError("pgm: only 8-bit (maxval 255) is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw IoError("pgm: malformed header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() - pos < n) throw IoError("pgm: truncated pixel data");
  std::vector<double> px(n);
  for (std::size_t i = 0; i < n; ++i) px[i] = bytes[pos + i] / 255.0;
  return GrayImage(static_cast<int>(h), static_cast<int>(w), std::move(px));
}

void write_pgm(const fs::path& path, const GrayImage& img) {
  const auto bytes = encode_pgm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

GrayImage read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_pgm(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::size_t Manifest::total() const {
  std::size_t n = 0;
  for (const auto& [name, entries] : splits) n += entries.size();
  return n;
}

std::uint64_t sample_seed(std::uint64_t base_seed, std::uint64_t global_index) {
  return derive_seed(base_seed, SeedStream::sample, global_index);
}

namespace {

json noise_to_json(const NoiseParams& p) {
  return {{"kernel_sizes", p.kernel_sizes},
          {"kernel_stddev", p.kernel_stddev},
          {"appearance_prob", p.appearance_prob},
          {"darkness", p.darkness},
          {"darkness_range", {p.darkness_lo, p.darkness_hi}}};
}

NoiseParams noise_from_json(const json& j) {
  NoiseParams p;
  p.kernel_sizes = j.at("kernel_sizes").get<std::vector<int>>();
  p.kernel_stddev = j.at("kernel_stddev").get<double>();
  p.appearance_prob = j.at("appearance_prob").get<double>();
  p.darkness = j.at("darkness").get<double>();
  p.darkness_lo = j.at("darkness_range").at(0).get<double>();
  p.darkness_hi = j.at("darkness_range").at(1).get<double>();
  p.validate();
  return p;
}

json ridge_to_json(const RidgeParams& r) {
  return {{"period", {r.period_min, r.period_max}},
          {"mean", {r.mean_min, r.mean_max}},
          {"contrast", {r.contrast_min, r.contrast_max}},
          {"sharpness", r.sharpness},
          {"max_bend", r.max_bend},
          {"bend_frequency", r.bend_frequency},
          {"jitter", r.jitter}};
}

RidgeParams ridge_from_json(const json& j) {
  RidgeParams r;
  r.period_min = j.at("period").at(0).get<double>();
  r.period_max = j.at("period").at(1).get<double>();
  r.mean_min = j.at("mean").at(0).get<double>();
  r.mean_max = j.at("mean").at(1).get<double>();
  r.contrast_min = j.at("contrast").at(0).get<double>();
  r.contrast_max = j.at("contrast").at(1).get<double>();
  r.sharpness = j.at("sharpness").get<double>();
  r.max_bend = j.at("max_bend").get<double>();
  r.bend_frequency = j.at("bend_frequency").get<double>();
  r.jitter = j.at("jitter").get<double>();
  r.validate();
  return r;
}

std::string entry_name(const std::string& split, std::size_t i, const char* kind) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s/%06zu_%s.pgm", split.c_str(), i, kind);
  return buf;
}

}  // namespace

std::string manifest_to_json(const Manifest& m) {
  json splits = json::object();
  for (const auto& name : kSplitNames) {
    json arr = json::array();
    auto it = m.splits.find(name);
    if (it != m.splits.end()) {
      for (const auto& e : it->second) {
        arr.push_back({{"noisy", e.noisy}, {"clean", e.clean},
                       {"binary", e.binary}, {"seed", e.seed}});
      }
    }
    splits[name] = std::move(arr);
  }
  json j = {{"format", "pgt-dataset"},
            {"version", 1},
            {"base_seed", m.spec.base_seed},
            {"height", m.spec.height},
            {"width", m.spec.width},
            {"params", noise_to_json(m.spec.params)},
            {"ridge", ridge_to_json(m.spec.ridge)},
            {"splits", std::move(splits)}};
  return j.dump(2) + "\n";
}

Manifest write_dataset(const fs::path& dir, const DatasetSpec& spec, bool force) {
  if (spec.n_train < 0 || spec.n_val < 0 || spec.n_test < 0) {
    throw IoError("dataset split sizes must be non-negative");
  }
  spec.params.validate();
  spec.ridge.validate();
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw IoError(dir.string() + " is not empty (use --force to overwrite)");
    }
  }
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  Manifest m;
  m.spec = spec;
  const int counts[] = {spec.n_train, spec.n_val, spec.n_test};
  std::uint64_t global = 0;
  for (std::size_t s = 0; s < kSplitNames.size(); ++s) {
    const std::string& split = kSplitNames[s];
    fs::create_directories(dir / split, ec);
    if (ec) throw IoError("cannot create " + (dir / split).string());
    auto& entries = m.splits[split];
    for (int i = 0; i < counts[s]; ++i, ++global) {
      const std::uint64_t seed = sample_seed(spec.base_seed, global);
      const SampleTriplet t =
          generate_triplet(seed, spec.params, spec.ridge, spec.height, spec.width);
      ManifestEntry e{entry_name(split, i, "noisy"), entry_name(split, i, "clean"),
                      entry_name(split, i, "binary"), seed};
      write_pgm(dir / e.noisy, t.noisy);
      write_pgm(dir / e.clean, t.clean);
      write_pgm(dir / e.binary, t.binary);
      entries.push_back(std::move(e));
    }
  }
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << manifest_to_json(m);
  if (!out) throw IoError("manifest write failed in " + dir.string());
  return m;
}

Manifest read_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path.string());
  json j;
  try {
    j = json::parse(in);
    if (j.at("format").get<std::string>() != "pgt-dataset") {
      throw IoError("not a pgt-dataset manifest");
    }
    if (j.at("version").get<int>() != 1) throw IoError("unsupported manifest version");
    Manifest m;
    m.spec.base_seed = j.at("base_seed").get<std::uint64_t>();
    m.spec.height = j.at("height").get<int>();
    m.spec.width = j.at("width").get<int>();
    m.spec.params = noise_from_json(j.at("params"));
    m.spec.ridge = ridge_from_json(j.at("ridge"));
    for (const auto& [split, arr] : j.at("splits").items()) {
      auto& entries = m.splits[split];
      for (const auto& e : arr) {
        entries.push_back({e.at("noisy").get<std::string>(), e.at("clean").get<std::string>(),
                           e.at("binary").get<std::string>(),
                           e.at("seed").get<std::uint64_t>()});
      }
    }
    m.spec.n_train = static_cast<int>(m.splits["train"].size());
    m.spec.n_val = static_cast<int>(m.splits["val"].size());
    m.spec.n_test = static_cast<int>(m.splits["test"].size());
    return m;
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
  } catch (const ImageError& e) {
    throw IoError("invalid parameters in " + manifest_path.string() + ": " + e.what());
  }
}

Dataset load_split(const fs::path& manifest_path, const std::string& split,
                   std::size_t limit) {
  const Manifest m = read_manifest(manifest_path);
  auto it = m.splits.find(split);
  if (it == m.splits.end()) throw IoError("manifest has no split '" + split + "'");
  const fs::path root = manifest_path.parent_path();
  Dataset ds;
  ds.height = m.spec.height;
  ds.width = m.spec.width;
  std::size_t n = it->second.size();
  if (limit > 0) n = std::min(n, limit);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = it->second[i];
    SampleTriplet t{read_pgm(root / e.noisy), read_pgm(root / e.clean),
                    read_pgm(root / e.binary), e.seed, m.spec.params};
    if (t.noisy.height != ds.height || t.noisy.width != ds.width ||
        !t.noisy.same_shape(t.clean) || !t.noisy.same_shape(t.binary)) {
      throw IoError("image size mismatch for " + e.noisy);
    }
    ds.samples.push_back(std::move(t));
  }
  return ds;
}

}  // namespace pgt
