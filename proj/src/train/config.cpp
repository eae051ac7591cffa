#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "pgt/detail/text.hpp"
#include "pgt/random.hpp"
#include "pgt/trainer.hpp"

namespace pgt {

using detail::format_double;

ScalingPolicy TrainConfig::scaling() const { return {policy, alpha}; }

BuildOptions TrainConfig::build_options() const {
  return options_for(variant, scaling(), base_channels, derive_seed(seed, SeedStream::init, 0));
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (base_channels < 8) fail("base_channels must be >= 8");
  if (variant == Variant::edge && base_channels % 2 != 0) fail("edge needs even base_channels");
  if (epochs < 1 && max_steps < 1) fail("need epochs >= 1 or max_steps >= 1");
  if (max_steps < 0) fail("max_steps must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if ((crop_height == 0) != (crop_width == 0)) fail("set both crop_height and crop_width or neither");
  if (crop_height < 0 || crop_width < 0) fail("crop size must be >= 0");
  if (crop_height != 0 && (crop_height < 7 || crop_width < 7)) {
    fail("crops must be at least 7x7 (SSIM window)");
  }
  if (phase1_steps < 0) fail("phase1_steps must be >= 0");
  if (phase1_steps > 0 && variant != Variant::block84_multitask) {
    fail("phase1_steps applies only to the multitask variant");
  }
  if (optimizer != "adam") fail("unsupported optimizer '" + optimizer + "'");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    fail("adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) fail("adam_epsilon must be > 0");
  for (double w : {weights.w_mse, weights.w_lap, weights.w_ssim, weights.w_binary_task,
                   weights.w_main_task}) {
    if (!std::isfinite(w) || w < 0.0) fail("loss weights must be finite and >= 0");
  }
  if (train_limit < 0) fail("train_limit must be >= 0");
  if (log_every < 1) fail("log_every must be >= 1");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (policy == ScalingKind::proposed && alpha != 24.0) {
    fail("the proposed policy uses alpha = 24");
  }
}

namespace {

template <class T>
T number(std::string_view key, std::string_view v) {
  if constexpr (std::is_floating_point_v<T>) {
    auto d = detail::parse_double(v);
    if (!d || !std::isfinite(*d)) throw ConfigError("bad number for " + std::string(key) + ": '" + std::string(v) + "'");
    return *d;
  } else {
    auto i = detail::parse_int<T>(v);
    if (!i) throw ConfigError("bad integer for " + std::string(key) + ": '" + std::string(v) + "'");
    return *i;
  }
}

}  // namespace

TrainConfig parse_config(std::string_view text, TrainConfig cfg) {
  bool alpha_set = false;
  bool policy_set = false;
  using Setter = std::function<void(std::string_view, std::string_view)>;
  const std::map<std::string, Setter, std::less<>> setters = {
      {"variant", [&](auto, auto v) {
         try {
           cfg.variant = parse_variant(v);
         } catch (const ModelError& e) {
           throw ConfigError(e.what());
         }
       }},
      {"policy", [&](auto, auto v) {
         try {
           cfg.policy = parse_scaling_kind(v);
         } catch (const ModelError& e) {
           throw ConfigError(e.what());
         }
         policy_set = true;
       }},
      {"alpha", [&](auto k, auto v) { cfg.alpha = number<double>(k, v); alpha_set = true; }},
      {"base_channels", [&](auto k, auto v) { cfg.base_channels = number<int>(k, v); }},
      {"manifest", [&](auto, auto v) { cfg.manifest = std::string(v); }},
      {"train_limit", [&](auto k, auto v) { cfg.train_limit = number<int>(k, v); }},
      {"epochs", [&](auto k, auto v) { cfg.epochs = number<int>(k, v); }},
      {"max_steps", [&](auto k, auto v) { cfg.max_steps = number<int>(k, v); }},
      {"batch_size", [&](auto k, auto v) { cfg.batch_size = number<int>(k, v); }},
      {"crop_height", [&](auto k, auto v) { cfg.crop_height = number<int>(k, v); }},
      {"crop_width", [&](auto k, auto v) { cfg.crop_width = number<int>(k, v); }},
      {"phase1_steps", [&](auto k, auto v) { cfg.phase1_steps = number<int>(k, v); }},
      {"optimizer", [&](auto, auto v) { cfg.optimizer = std::string(v); }},
      {"learning_rate", [&](auto k, auto v) { cfg.learning_rate = number<double>(k, v); }},
      {"beta1", [&](auto k, auto v) { cfg.beta1 = number<double>(k, v); }},
      {"beta2", [&](auto k, auto v) { cfg.beta2 = number<double>(k, v); }},
      {"adam_epsilon", [&](auto k, auto v) { cfg.adam_epsilon = number<double>(k, v); }},
      {"w_mse", [&](auto k, auto v) { cfg.weights.w_mse = number<double>(k, v); }},
      {"w_lap", [&](auto k, auto v) { cfg.weights.w_lap = number<double>(k, v); }},
      {"w_ssim", [&](auto k, auto v) { cfg.weights.w_ssim = number<double>(k, v); }},
      {"w_binary_task", [&](auto k, auto v) { cfg.weights.w_binary_task = number<double>(k, v); }},
      {"w_main_task", [&](auto k, auto v) { cfg.weights.w_main_task = number<double>(k, v); }},
      {"seed", [&](auto k, auto v) { cfg.seed = number<std::uint64_t>(k, v); }},
      {"log_every", [&](auto k, auto v) { cfg.log_every = number<int>(k, v); }},
      {"checkpoint_every", [&](auto k, auto v) { cfg.checkpoint_every = number<int>(k, v); }},
  };

  int line_no = 0;
  for (auto raw : detail::split(text, '\n')) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const auto line = detail::trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" +
                        std::string(key) + "'");
    }
    it->second(key, value);
  }
  if (policy_set && !alpha_set) {
    cfg.alpha = cfg.policy == ScalingKind::proposed ? 24.0 : 61.0;
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string config_to_text(const TrainConfig& c) {
  std::ostringstream o;
  o << "variant = " << to_string(c.variant) << "\n"
    << "policy = " << to_string(c.policy) << "\n"
    << "alpha = " << format_double(c.alpha) << "\n"
    << "base_channels = " << c.base_channels << "\n";
  if (!c.manifest.empty()) o << "manifest = " << c.manifest << "\n";
  o << "train_limit = " << c.train_limit << "\n"
    << "epochs = " << c.epochs << "\n"
    << "max_steps = " << c.max_steps << "\n"
    << "batch_size = " << c.batch_size << "\n"
    << "crop_height = " << c.crop_height << "\n"
    << "crop_width = " << c.crop_width << "\n"
    << "phase1_steps = " << c.phase1_steps << "\n"
    << "optimizer = " << c.optimizer << "\n"
    << "learning_rate = " << format_double(c.learning_rate) << "\n"
    << "beta1 = " << format_double(c.beta1) << "\n"
    << "beta2 = " << format_double(c.beta2) << "\n"
    << "adam_epsilon = " << format_double(c.adam_epsilon) << "\n"
    << "w_mse = " << format_double(c.weights.w_mse) << "\n"
    << "w_lap = " << format_double(c.weights.w_lap) << "\n"
    << "w_ssim = " << format_double(c.weights.w_ssim) << "\n"
    << "w_binary_task = " << format_double(c.weights.w_binary_task) << "\n"
    << "w_main_task = " << format_double(c.weights.w_main_task) << "\n"
    << "seed = " << c.seed << "\n"
    << "log_every = " << c.log_every << "\n"
    << "checkpoint_every = " << c.checkpoint_every << "\n";
  return o.str();
}

}  // namespace pgt
