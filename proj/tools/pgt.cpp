// pgt: dataset synthesis, training, evaluation, denoising, quantization,
// model inspection and the residual-scaling ablation.

#include <CLI11.hpp>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "pgt/dataset.hpp"
#include "pgt/harness.hpp"
#include "pgt/quant.hpp"
#include "pgt/random.hpp"
#include "pgt/trainer.hpp"
#include "pgt/weights.hpp"

namespace fs = std::filesystem;
using namespace pgt;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string config;
  std::string out;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void need_out(const Common& c, const char* what) {
  if (c.out.empty()) throw UsageError(std::string(what) + " needs --out");
}

// ---------------------------------------------------------------- synth-data

struct SynthArgs {
  int n_train = 512, n_val = 64, n_test = 64;
  int height = kStripHeight, width = kStripWidth;
  double prob = NoiseParams{}.appearance_prob;
  double darkness = NoiseParams{}.darkness;
  bool force = false;
};

int cmd_synth(const Common& c, const SynthArgs& a) {
  need_out(c, "synth-data");
  DatasetSpec spec;
  spec.n_train = a.n_train;
  spec.n_val = a.n_val;
  spec.n_test = a.n_test;
  spec.height = a.height;
  spec.width = a.width;
  spec.base_seed = c.seed;
  spec.params.appearance_prob = a.prob;
  spec.params.darkness = a.darkness;
  const Manifest m = write_dataset(c.out, spec, a.force);
  std::cout << "wrote " << m.total() << " triplets to " << (fs::path(c.out) / "manifest.json").string()
            << "\n";
  return 0;
}

// --------------------------------------------------------------------- train

struct TrainArgs {
  std::string manifest;
  int steps = -1;
  int phase1 = -1;
  std::string resume;
};

TrainConfig config_from(const Common& c) {
  TrainConfig cfg;
  if (!c.config.empty()) cfg = load_config(c.config);
  if (c.seed_set) cfg.seed = c.seed;
  return cfg;
}

TrainingSet training_data(const TrainConfig& cfg) {
  if (cfg.manifest.empty()) throw UsageError("no dataset: pass --manifest or set manifest in the config");
  const Dataset d = load_split(cfg.manifest, "train", static_cast<std::size_t>(cfg.train_limit));
  return to_training_set(d.samples);
}

int cmd_train(const Common& c, const TrainArgs& a) {
  need_out(c, "train");
  TrainConfig cfg = config_from(c);
  if (!a.manifest.empty()) cfg.manifest = a.manifest;
  if (a.steps >= 0) cfg.max_steps = a.steps;
  if (a.phase1 >= 0) cfg.phase1_steps = a.phase1;
  cfg.validate();
  const fs::path out = c.out;
  fs::create_directories(out);

  TrainingSet data = training_data(cfg);
  std::optional<Trainer> trainer;
  if (!a.resume.empty()) {
    trainer.emplace(cfg, std::move(data), load_checkpoint(read_file(a.resume)));
  } else {
    trainer.emplace(cfg, std::move(data));
  }
  Trainer& t = *trainer;
  write_text(out / "config.txt", config_to_text(cfg));
  std::cout << "training " << to_string(cfg.variant) << " " << cfg.scaling().label() << " C="
            << cfg.base_channels << " for " << t.total_steps() - t.steps_done() << " steps\n";
  t.run([&](const StepReport& r) {
    if (r.step % 25 == 0 || r.step + 1 == t.total_steps()) {
      std::cout << "step " << r.step << " phase " << r.phase << " loss " << r.terms.total << "\n"
                << std::flush;
    }
    if (cfg.checkpoint_every > 0 && (r.step + 1) % cfg.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_%06lld.pgtc", static_cast<long long>(r.step + 1));
      write_file(out / name, save_checkpoint(t.checkpoint()));
    }
  });
  write_file(out / "model.pgtc", save_checkpoint(t.checkpoint()));
  write_file(out / "weights.pgtw", save_weights(t.graph()));
  const fs::path trace_path = out / "trace.csv";
  std::string csv = trace_to_csv(t.trace());
  if (!a.resume.empty() && fs::exists(trace_path)) {
    // Append rows after the header of the existing trace.
    csv = read_text(trace_path) + csv.substr(csv.find('\n') + 1);
  }
  write_text(trace_path, csv);
  std::cout << "wrote " << (out / "model.pgtc").string() << ", " << (out / "weights.pgtw").string()
            << ", " << trace_path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------- eval

bool is_quantized(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  char magic[4] = {};
  f.read(magic, 4);
  return f && std::memcmp(magic, "PGTQ", 4) == 0;
}

struct EvalArgs {
  std::string manifest;
  std::string split = "test";
  std::vector<std::string> models;
  std::vector<std::string> labels;
};

int cmd_eval(const Common& c, const EvalArgs& a) {
  const Dataset d = load_split(a.manifest, a.split);
  if (d.samples.empty()) throw IoError("split '" + a.split + "' is empty");
  if (!a.labels.empty() && a.labels.size() != a.models.size()) {
    throw UsageError("--label must be given once per model");
  }
  const MetricReport base = average_metrics(d.samples);
  std::vector<EvalRow> rows{make_row("No enhance", base, base)};
  for (std::size_t i = 0; i < a.models.size(); ++i) {
    const fs::path p = a.models[i];
    const std::string label = a.labels.empty() ? p.filename().string() : a.labels[i];
    MetricReport m;
    if (is_quantized(p)) {
      const QuantizedModel qm = load_quantized(read_file(p));
      m = average_metrics(d.samples, [&](const GrayImage& img) {
        const auto out = quantized_forward(qm, Tensor::from({1, 1, img.height, img.width}, img.pixels));
        const auto v = out.main.data();
        return GrayImage(img.height, img.width, std::vector<double>(v.begin(), v.end()));
      });
    } else {
      const ModelGraph g = load_model_file(p);
      m = average_metrics(d.samples, model_denoiser(g));
    }
    rows.push_back(make_row(label, m, base));
  }
  std::cout << format_eval_table(rows);
  if (!c.out.empty()) {
    write_text(c.out, eval_to_csv(rows));
    std::cout << "wrote " << c.out << "\n";
  }
  return 0;
}

// ------------------------------------------------------------------- denoise

struct DenoiseArgs {
  std::string model;
  std::string input;
  std::string emit_binary;
};

int cmd_denoise(const Common& c, const DenoiseArgs& a) {
  need_out(c, "denoise");
  const ModelGraph g = load_model_file(a.model);
  const GrayImage in = read_pgm(a.input);
  if (in.height < 7 || in.width < 7) throw ImageError("input image must be at least 7x7");
  GrayImage binary;
  const GrayImage out = denoise(g, in, a.emit_binary.empty() ? nullptr : &binary);
  write_pgm(c.out, out);
  if (!a.emit_binary.empty()) {
    if (binary.size() == 0) throw ModelError("this model has no binary output");
    write_pgm(a.emit_binary, binary);
  }
  return 0;
}

// ------------------------------------------------------------------ quantize

struct QuantArgs {
  std::string model;
  std::string manifest;
  int bits = 8;
  std::string mode = "weight_only";
  int calibration = 32;
};

int cmd_quantize(const Common& c, const QuantArgs& a) {
  QuantSpec spec;
  spec.bit_width = a.bits;
  spec.mode = parse_quant_mode(a.mode);
  spec.validate();
  const ModelGraph g = load_model_file(a.model);
  QuantizedModel qm = quantize_model(g, spec);
  if (!a.manifest.empty() && a.calibration > 0) {
    const Dataset d = load_split(a.manifest, "train");
    if (d.samples.empty()) throw IoError("calibration needs a non-empty train split");
    // Distinct training samples drawn from the calibration stream.
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(a.calibration), d.samples.size());
    Rng rng(derive_seed(c.seed, SeedStream::calibration, 0));
    std::set<std::size_t> picked;
    while (picked.size() < n) picked.insert(static_cast<std::size_t>(rng.below(d.samples.size())));
    std::vector<double> data;
    for (auto i : picked) {
      const auto& px = d.samples[i].noisy.pixels;
      data.insert(data.end(), px.begin(), px.end());
    }
    calibrate(qm, Tensor::from({static_cast<std::int64_t>(n), 1, d.height, d.width}, std::move(data)));
  } else if (spec.mode == QuantMode::weight_and_activations) {
    throw UsageError("weight_and_activations mode needs --manifest for calibration");
  }
  std::cout << format_size_report(size_report(g, spec));
  if (!c.out.empty()) {
    write_file(c.out, save_quantized(qm));
    std::cout << "wrote " << c.out << "\n";
  }
  return 0;
}

// ------------------------------------------------------------- inspect-model

int cmd_inspect(const Common& c, const std::string& model) {
  std::string report;
  if (is_quantized(model)) {
    const QuantizedModel qm = load_quantized(read_file(model));
    report = inspect_report(qm.graph) + "\nquantized: " + std::to_string(qm.spec.bit_width) +
             "-bit " + std::string(to_string(qm.spec.mode)) + ", calibration samples " +
             std::to_string(qm.calibration_samples) + "\n";
  } else {
    report = inspect_report(load_model_file(model));
  }
  std::cout << report;
  if (!c.out.empty()) write_text(c.out, report);
  return 0;
}

// ------------------------------------------------------------ ablate-scaling

int cmd_ablate(const Common& c, const TrainArgs& a) {
  need_out(c, "ablate-scaling");
  TrainConfig cfg = config_from(c);
  if (!a.manifest.empty()) cfg.manifest = a.manifest;
  if (a.steps >= 0) cfg.max_steps = a.steps;
  cfg.variant = Variant::block84_multitask;
  cfg.validate();
  const TrainingSet data = training_data(cfg);
  const fs::path out = c.out;
  fs::create_directories(out);
  const AblationResult r =
      ablate_scaling(cfg, data, [](const std::string& m) { std::cout << m << "\n" << std::flush; });
  const char* names[] = {"trace_proposed.csv", "trace_all_positive_61.csv", "trace_all_positive_85.csv"};
  for (std::size_t i = 0; i < r.runs.size(); ++i) {
    write_text(out / names[i], trace_to_csv(r.runs[i].trace));
  }
  const std::string report = format_comparison(r.comparison);
  write_text(out / "comparison.csv", report);
  std::cout << report;
  for (const auto& l : r.soft_check_failures) {
    std::cout << "warning: " << l << " ended with a lower loss than the proposed policy\n";
  }
  return 0;
}

std::string one_line(std::string s) {
  for (auto& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  return s;
}

int fail(const char* kind, const std::string& msg, int code) {
  std::cerr << "pgt: error: " << kind << ": " << one_line(msg) << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PGT-Net wet-fingerprint denoising toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { common.seed = s; common.seed_set = true; },
      "Root seed for all randomness");
  app.add_option("--config", common.config, "Training config file (key = value)");
  app.add_option("--out", common.out, "Output file or directory");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth-data", "Write a synthetic dataset (PGM + manifest.json)");
  s->add_option("--train", synth.n_train, "Training triplets");
  s->add_option("--val", synth.n_val, "Validation triplets");
  s->add_option("--test", synth.n_test, "Test triplets");
  s->add_option("--height", synth.height, "Image height");
  s->add_option("--width", synth.width, "Image width");
  s->add_option("--prob", synth.prob, "Noise appearance probability per ridge pixel");
  s->add_option("--darkness", synth.darkness, "Noise darkness");
  s->add_flag("--force", synth.force, "Write into a non-empty directory");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--manifest", train.manifest, "Dataset manifest");
  t->add_option("--steps", train.steps, "Override max_steps");
  t->add_option("--phase1-steps", train.phase1, "Override phase1_steps");
  t->add_option("--resume", train.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluation table against the No-enhance baseline");
  e->add_option("--manifest", ev.manifest, "Dataset manifest")->required();
  e->add_option("--split", ev.split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  e->add_option("models", ev.models, "Checkpoints, weight files or quantized models");
  e->add_option("--label", ev.labels, "Row label per model");

  DenoiseArgs dn;
  auto* d = app.add_subcommand("denoise", "Denoise one PGM image");
  d->add_option("--model", dn.model, "Checkpoint or weight file")->required();
  d->add_option("--in", dn.input, "Input PGM")->required();
  d->add_option("--emit-binary", dn.emit_binary, "Also write the binary-branch output");

  QuantArgs qa;
  auto* q = app.add_subcommand("quantize", "Dynamic fixed-point quantization");
  q->add_option("--model", qa.model, "Checkpoint or weight file")->required();
  q->add_option("--manifest", qa.manifest, "Dataset for activation calibration");
  q->add_option("--bits", qa.bits, "Bit width");
  q->add_option("--mode", qa.mode, "weight_only or weight_and_activations");
  q->add_option("--calibration", qa.calibration, "Calibration samples from the train split");

  std::string inspect_model;
  auto* in = app.add_subcommand("inspect-model", "Print the layer/stage table of a model file");
  in->add_option("model", inspect_model, "Model file")->required();

  TrainArgs ab;
  auto* a = app.add_subcommand("ablate-scaling", "Train proposed vs all-positive scaling");
  a->add_option("--manifest", ab.manifest, "Dataset manifest");
  a->add_option("--steps", ab.steps, "Override max_steps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    return fail("usage", ex.what(), 2);
  }

  try {
    if (s->parsed()) return cmd_synth(common, synth);
    if (t->parsed()) return cmd_train(common, train);
    if (e->parsed()) return cmd_eval(common, ev);
    if (d->parsed()) return cmd_denoise(common, dn);
    if (q->parsed()) return cmd_quantize(common, qa);
    if (in->parsed()) return cmd_inspect(common, inspect_model);
    if (a->parsed()) return cmd_ablate(common, ab);
  } catch (const UsageError& ex) {
    return fail("usage", ex.what(), 2);
  } catch (const ConfigError& ex) {
    return fail("config", ex.what(), 1);
  } catch (const IoError& ex) {
    return fail("io", ex.what(), 1);
  } catch (const TrainError& ex) {
    return fail("train", ex.what(), 1);
  } catch (const QuantError& ex) {
    return fail("quantize", ex.what(), 1);
  } catch (const ModelError& ex) {
    return fail("model", ex.what(), 1);
  } catch (const ImageError& ex) {
    return fail("image", ex.what(), 1);
  } catch (const std::exception& ex) {
    return fail("internal", ex.what(), 1);
  }
  return 0;
}
