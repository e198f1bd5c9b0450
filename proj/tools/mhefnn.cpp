// Command line front end: analyze, design-input, train, benchmark.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mhefnn/mhefnn.hpp"

namespace {

using namespace mhefnn;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> epochs;
  std::optional<std::string> methods;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void apply(ExperimentConfig& c, const Overrides& o) {
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.methods) c.methods = split_list(*o.methods);
  c.validate();
}

void print_aggregate(const nlohmann::json& summary) {
  std::printf("%-16s %6s %18s %16s %10s\n", "method", "runs", "test RMSE", "final error", "diverged");
  for (auto it = summary["aggregate"].begin(); it != summary["aggregate"].end(); ++it) {
    const auto& a = it.value();
    auto num = [](const nlohmann::json& v) { return v.is_number() ? v.get<double>() : std::nan(""); };
    std::printf("%-16s %6d %9.4f +- %-6.4f", it.key().c_str(), a["runs"].get<int>(), num(a["test_rmse_mean"]),
                num(a["test_rmse_std"]));
    if (a.contains("final_error_mean")) std::printf(" %16.3e", num(a["final_error_mean"]));
    else std::printf(" %16s", "-");
    std::printf(" %10d\n", a["diverged"].get<int>());
    if (a.contains("bound_checked"))
      std::printf("  limsup error within the convergence bound on %d/%d runs\n", a["bound_holds"].get<int>(),
                  a["bound_checked"].get<int>());
    if (a.contains("within_one_epoch"))
      std::printf("  error threshold reached within one epoch on %d/%d runs\n", a["within_one_epoch"].get<int>(),
                  a["runs"].get<int>());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MHE training and observability analysis for two-layer ReLU networks"};
  app.require_subcommand(1);

  Overrides ov;
  auto add_overrides = [&](CLI::App* sub) {
    sub->add_option("--seed", ov.seed, "RNG seed");
    sub->add_option("--out", ov.out, "output directory");
    sub->add_option("--epochs", ov.epochs, "number of epochs");
    sub->add_option("--method", ov.methods, "comma separated subset of mhe,regularized-mhe,gd,adam");
  };

  std::string weights;
  bool bias = false;
  auto* analyze = app.add_subcommand("analyze", "local observability certificate of a weights CSV");
  analyze->add_option("weights", weights, "weights CSV (row = input, column = hidden node)")->required();
  analyze->add_flag("--bias", bias, "last row of the file is the bias vector");
  analyze->add_option("--out", ov.out, "also write analysis.json here");

  auto* design = app.add_subcommand("design-input", "persistently exciting input design for a weights CSV");
  design->add_option("weights", weights, "weights CSV (row = input, column = hidden node)")->required();
  design->add_flag("--bias", bias, "last row of the file is the bias vector");
  design->add_option("--seed", ov.seed, "randomize cone bases with this seed (0 = canonical design)");
  design->add_option("--out", ov.out, "output directory for design.csv and plan.json");

  std::string config;
  auto* trn = app.add_subcommand("train", "single training run from a JSON config");
  trn->add_option("config", config, "config JSON")->required();
  add_overrides(trn);
  auto* bench = app.add_subcommand("benchmark", "all repeats of a JSON config with aggregate statistics");
  bench->add_option("config", config, "config JSON")->required();
  add_overrides(bench);

  CLI11_PARSE(app, argc, argv);

  try {
    if (analyze->parsed()) {
      ExperimentConfig c;
      c.mode = Mode::ObservabilityAnalysis;
      c.weights_path = weights;
      c.weights_have_bias = bias;
      if (ov.out) {
        c.out = *ov.out;
        std::cout << run(c).dump(2) << '\n';
      } else {
        const auto [W, b] = split_weights(read_weights_csv(weights), bias);
        std::cout << analyze_weights(W, b).dump(2) << '\n';
      }
      return 0;
    }
    if (design->parsed()) {
      ExperimentConfig c;
      c.mode = Mode::InputDesign;
      c.weights_path = weights;
      c.weights_have_bias = bias;
      c.out = ov.out.value_or("out");
      c.seed = ov.seed.value_or(0);
      std::cout << run(c).dump(2) << '\n';
      std::cout << "inputs written to " << c.out << "/design.csv\n";
      return 0;
    }
    ExperimentConfig c = load_config(config);
    if (trn->parsed()) c.repeats = 1;
    apply(c, ov);
    const nlohmann::json s = run(c);
    if (c.mode == Mode::Synthetic || c.mode == Mode::Wine) {
      print_aggregate(s);
      std::cout << "metrics written to " << c.out << "/\n";
    } else {
      std::cout << s.dump(2) << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
