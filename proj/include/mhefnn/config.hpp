#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mhefnn/errors.hpp"
#include "mhefnn/relu_net.hpp"

namespace mhefnn {

enum class Mode { Synthetic, Wine, ObservabilityAnalysis, InputDesign };

inline Mode parse_mode(const std::string& s) {
  if (s == "synthetic") return Mode::Synthetic;
  if (s == "wine") return Mode::Wine;
  if (s == "observability-analysis") return Mode::ObservabilityAnalysis;
  if (s == "input-design") return Mode::InputDesign;
  throw ConfigError("unknown mode '" + s + "'");
}

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::Synthetic: return "synthetic";
    case Mode::Wine: return "wine";
    case Mode::ObservabilityAnalysis: return "observability-analysis";
    case Mode::InputDesign: return "input-design";
  }
  return "?";
}

inline const std::set<std::string>& known_methods() {
  static const std::set<std::string> m{"mhe", "regularized-mhe", "gd", "adam"};
  return m;
}

struct ExperimentConfig {
  Mode mode = Mode::Synthetic;
  Variant variant = Variant::FixedOutputTwoLayer;
  int m = 2;
  int n = 10;

  // synthetic
  int samples = 90;
  int batches = 5;
  double eps_bar = 1e-4;
  double init_perturbation = 0.5;
  int test_samples = 90;
  bool widest_first = false;  // orthant order when picking T
  bool unit_margin = true;    // cone vector scaling

  // wine
  std::string data_path = "data/winequality-red.csv";
  std::string target_column = "quality";
  double test_fraction = 0.1;
  int batch_size = 32;
  bool standardize_targets = true;

  // analysis / design
  std::string weights_path;
  bool weights_have_bias = false;

  int epochs = 60;
  int repeats = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> methods{"mhe", "gd"};
  double gd_lr = 0.1;
  double adam_lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double reg_lambda = 1e-4;
  double error_threshold = 5e-3;
  int limsup_epochs = 50;
  bool log_every_step = true;
  std::string out = "out";

  void validate() const {
    if (m < 1 || n < 1) throw ConfigError("m and n must be positive");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (repeats < 1) throw ConfigError("repeats must be at least 1");
    if (eps_bar < 0) throw ConfigError("eps_bar must be non-negative");
    if (methods.empty()) throw ConfigError("no methods selected");
    for (const auto& s : methods)
      if (!known_methods().count(s)) throw ConfigError("unknown method '" + s + "'");
    if (mode == Mode::Synthetic) {
      if (batches < 1 || samples % batches != 0)
        throw ConfigError("samples must split into equal mini-batches");
      if (variant == Variant::GeneralTwoLayer)
        throw ConfigError("synthetic mode needs an observable architecture (fixed-output or bias)");
    }
    if (mode == Mode::Wine) {
      if (batch_size < 1) throw ConfigError("batch_size must be positive");
      for (const auto& s : methods)
        if (s == "mhe") throw ConfigError("constrained mhe needs a persistently exciting design; use regularized-mhe");
    }
    if ((mode == Mode::ObservabilityAnalysis || mode == Mode::InputDesign) && weights_path.empty())
      throw ConfigError("weights_path is required in this mode");
  }
};

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  static const std::set<std::string> keys{
      "mode",         "variant",       "m",          "n",          "samples",      "batches",
      "eps_bar",      "init_perturbation", "orthant_order", "input_scaling", "test_samples", "data_path", "target_column", "test_fraction",
      "batch_size",   "standardize_targets", "weights_path", "weights_have_bias", "epochs", "repeats",
      "seed",         "methods",       "gd_lr",      "adam_lr",    "adam_beta1",   "adam_beta2",
      "adam_epsilon", "reg_lambda",    "error_threshold", "limsup_epochs", "log_every", "out"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!keys.count(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
  try {
    if (j.contains("mode")) c.mode = parse_mode(j["mode"].get<std::string>());
    if (j.contains("variant")) c.variant = parse_variant(j["variant"].get<std::string>());
    auto get = [&](const char* k, auto& field) {
      if (j.contains(k)) field = j[k].get<std::decay_t<decltype(field)>>();
    };
    get("m", c.m);
    get("n", c.n);
    get("samples", c.samples);
    get("batches", c.batches);
    get("eps_bar", c.eps_bar);
    get("init_perturbation", c.init_perturbation);
    get("test_samples", c.test_samples);
    get("data_path", c.data_path);
    get("target_column", c.target_column);
    get("test_fraction", c.test_fraction);
    get("batch_size", c.batch_size);
    get("standardize_targets", c.standardize_targets);
    get("weights_path", c.weights_path);
    get("weights_have_bias", c.weights_have_bias);
    get("epochs", c.epochs);
    get("repeats", c.repeats);
    get("seed", c.seed);
    get("methods", c.methods);
    get("gd_lr", c.gd_lr);
    get("adam_lr", c.adam_lr);
    get("adam_beta1", c.adam_beta1);
    get("adam_beta2", c.adam_beta2);
    get("adam_epsilon", c.adam_epsilon);
    get("reg_lambda", c.reg_lambda);
    get("error_threshold", c.error_threshold);
    get("limsup_epochs", c.limsup_epochs);
    get("out", c.out);
    if (j.contains("orthant_order")) {
      const auto s = j["orthant_order"].get<std::string>();
      if (s != "lexicographic" && s != "widest-first")
        throw ConfigError("orthant_order must be 'lexicographic' or 'widest-first'");
      c.widest_first = s == "widest-first";
    }
    if (j.contains("input_scaling")) {
      const auto s = j["input_scaling"].get<std::string>();
      if (s != "unit-margin" && s != "unit-max") throw ConfigError("input_scaling must be 'unit-margin' or 'unit-max'");
      c.unit_margin = s == "unit-margin";
    }
    if (j.contains("log_every")) {
      const auto s = j["log_every"].get<std::string>();
      if (s != "step" && s != "epoch") throw ConfigError("log_every must be 'step' or 'epoch'");
      c.log_every_step = s == "step";
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  return {{"mode", mode_name(c.mode)},
          {"variant", variant_name(c.variant)},
          {"m", c.m},
          {"n", c.n},
          {"samples", c.samples},
          {"batches", c.batches},
          {"eps_bar", c.eps_bar},
          {"init_perturbation", c.init_perturbation},
          {"test_samples", c.test_samples},
          {"orthant_order", c.widest_first ? "widest-first" : "lexicographic"},
          {"input_scaling", c.unit_margin ? "unit-margin" : "unit-max"},
          {"data_path", c.data_path},
          {"target_column", c.target_column},
          {"test_fraction", c.test_fraction},
          {"batch_size", c.batch_size},
          {"standardize_targets", c.standardize_targets},
          {"weights_path", c.weights_path},
          {"weights_have_bias", c.weights_have_bias},
          {"epochs", c.epochs},
          {"repeats", c.repeats},
          {"seed", c.seed},
          {"methods", c.methods},
          {"gd_lr", c.gd_lr},
          {"adam_lr", c.adam_lr},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"reg_lambda", c.reg_lambda},
          {"error_threshold", c.error_threshold},
          {"limsup_epochs", c.limsup_epochs},
          {"log_every", c.log_every_step ? "step" : "epoch"},
          {"out", c.out}};
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace mhefnn
