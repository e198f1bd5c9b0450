#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "oracles.hpp"

using namespace mhefnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mhefnn_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& text) {
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ExperimentConfig small_synthetic(const fs::path& out) {
  ExperimentConfig c;
  c.m = 2;
  c.n = 4;
  c.samples = 16;
  c.batches = 4;
  c.test_samples = 10;
  c.epochs = 3;
  c.repeats = 2;
  c.seed = 5;
  c.methods = {"mhe", "gd", "adam", "regularized-mhe"};
  c.limsup_epochs = 2;
  c.out = out.string();
  return c;
}

}  // namespace

TEST(Csv, ToyFileShapes) {
  const fs::path d = scratch("csv");
  const fs::path p = write_file(d, "toy.csv", "a,b,target\n1,2,3\n4,5,6\n7,8,9\n");
  const CsvTable t = read_csv_table(p.string(), true);
  EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b", "target"}));
  EXPECT_EQ(t.data.rows(), 3);
  EXPECT_EQ(t.data.cols(), 3);
  EXPECT_EQ(t.data(2, 1), 8.0);
  const fs::path q = write_file(d, "semi.csv", "\"x\";\"y\"\n1.5;-2\n");
  const CsvTable s = read_csv_table(q.string(), true);
  EXPECT_EQ(s.header[1], "y");
  EXPECT_EQ(s.data(0, 1), -2.0);
}

TEST(Csv, MalformedReportsLine) {
  const fs::path d = scratch("bad");
  const fs::path p = write_file(d, "bad.csv", "a,b\n1,2\n3,oops\n");
  try {
    read_csv_table(p.string(), true);
    FAIL() << "expected MalformedCsv";
  } catch (const MalformedCsv& e) {
    EXPECT_EQ(e.line(), 3);
  }
  const fs::path r = write_file(d, "ragged.csv", "a,b\n1,2\n3\n");
  EXPECT_THROW(read_csv_table(r.string(), true), MalformedCsv);
}

TEST(Csv, MissingTargetColumn) {
  const fs::path d = scratch("missing");
  const fs::path p = write_file(d, "toy.csv", "a,b\n1,2\n3,4\n");
  EXPECT_THROW(load_csv(p.string(), "quality", 1), MissingColumn);
}

TEST(Csv, StandardizesWithTrainingStatistics) {
  const fs::path d = scratch("std");
  std::string text = "f1,f2,y\n";
  for (int i = 0; i < 20; ++i) text += std::to_string(i) + "," + std::to_string(3 * i % 7) + "," + std::to_string(i % 3) + "\n";
  const Dataset ds = load_csv(write_file(d, "t.csv", text).string(), "y", 9);
  EXPECT_EQ(ds.train.size(), 18u);
  EXPECT_EQ(ds.test.size(), 2u);
  const Matrix X = ds.train_inputs();
  const Vector mean = X.colwise().mean().transpose();
  EXPECT_LT(mean.norm(), 1e-12);
  for (Index j = 0; j < 2; ++j) EXPECT_NEAR(std::sqrt(X.col(j).array().square().mean()), 1.0, 1e-12);
  EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"f1", "f2"}));
}

TEST(Csv, WineSplitSizes) {
  const Dataset ds = load_csv(std::string(MHEFNN_SOURCE_DIR) + "/data/winequality-red.csv", "quality", 1);
  EXPECT_EQ(ds.inputs.rows(), 1599);
  EXPECT_EQ(ds.inputs.cols(), 11);
  EXPECT_EQ(ds.train.size(), 1439u);
  EXPECT_EQ(ds.test.size(), 160u);
  std::vector<int> all(ds.train);
  all.insert(all.end(), ds.test.begin(), ds.test.end());
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 1599; ++i) EXPECT_EQ(all[i], i);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(config_from_json(nlohmann::json{{"mode", "synthetic"}, {"bogus", 1}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"mode", "nope"}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"samples", 91}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"mode", "wine"}, {"methods", {"mhe"}}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"variant", "general"}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"methods", {"sgd"}}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"m", "two"}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"mode", "input-design"}}), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, RoundTrip) {
  ExperimentConfig c;
  c.seed = 77;
  c.widest_first = true;
  c.unit_margin = false;
  c.log_every_step = false;
  const ExperimentConfig d = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(d), config_to_json(c));
}

TEST(Config, ShippedConfigsLoad) {
  EXPECT_NO_THROW(load_config(std::string(MHEFNN_SOURCE_DIR) + "/configs/synthetic.json"));
  EXPECT_NO_THROW(load_config(std::string(MHEFNN_SOURCE_DIR) + "/configs/wine.json"));
}

TEST(Synthetic, NoiselessTargetsEqualTeacherOutputs) {
  ExperimentConfig c = small_synthetic(scratch("noiseless"));
  c.eps_bar = 0.0;
  Rng rng(3);
  const SyntheticProblem p = gen_synthetic(c, rng);
  EXPECT_EQ(p.y, observability_map(p.teacher, p.U));
  EXPECT_TRUE(p.neigh->contains(p.teacher));
  EXPECT_TRUE(verify_pe(p.U, p.teacher).pe);
}

TEST(Synthetic, NoiseWithinBound) {
  ExperimentConfig c = small_synthetic(scratch("noisy"));
  c.eps_bar = 1e-3;
  Rng rng(4);
  const SyntheticProblem p = gen_synthetic(c, rng);
  EXPECT_LE((p.y - observability_map(p.teacher, p.U)).cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_GT(p.noise.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Synthetic, BiasVariant) {
  ExperimentConfig c = small_synthetic(scratch("bias"));
  c.variant = Variant::BiasTwoLayer;
  c.samples = 24;
  c.batches = 4;
  Rng rng(5);
  const SyntheticProblem p = gen_synthetic(c, rng);
  EXPECT_EQ(p.U.rows(), 24);
  EXPECT_TRUE(verify_pe(p.U, p.teacher).pe);
  EXPECT_TRUE(p.neigh->contains(p.teacher));
}

TEST(Run, DeterministicTrajectories) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  run(small_synthetic(a));
  run(small_synthetic(b));
  EXPECT_EQ(slurp(a / "trajectory.csv"), slurp(b / "trajectory.csv"));
  EXPECT_FALSE(slurp(a / "trajectory.csv").empty());
  const nlohmann::json s = nlohmann::json::parse(slurp(a / "summary.json"));
  EXPECT_EQ(s["repeats"].size(), 2u);
  EXPECT_TRUE(s["aggregate"].contains("mhe"));
  EXPECT_TRUE(s["aggregate"].contains("adam"));
}

TEST(Run, SeedChangesData) {
  const fs::path a = scratch("seed_a"), b = scratch("seed_b");
  ExperimentConfig c = small_synthetic(a);
  run(c);
  c.seed = 6;
  c.out = b.string();
  run(c);
  EXPECT_NE(slurp(a / "trajectory.csv"), slurp(b / "trajectory.csv"));
}

TEST(Analysis, ExampleOneIsNotObservable) {
  Matrix W(1, 3);
  W << 1, 2, -1;
  const nlohmann::json j = analyze_weights(W, std::nullopt);
  EXPECT_FALSE(j["observable"].get<bool>());
  EXPECT_NE(j["explanation"].get<std::string>().find("cannot be determined"), std::string::npos);
  EXPECT_EQ(j["indicator_rank"].get<int>(), 2);
}

TEST(Analysis, ZeroColumnIsExplained) {
  const nlohmann::json j = analyze_weights(Matrix::Identity(2, 3), std::nullopt);
  EXPECT_FALSE(j["observable"].get<bool>());
  EXPECT_NE(j["explanation"].get<std::string>().find("zero column"), std::string::npos);
}

TEST(Design, WritesInputsAndPlan) {
  const fs::path d = scratch("design");
  const fs::path w = write_file(d, "w.csv", "1,0\n0,1\n0.1,-0.2\n");
  ExperimentConfig c;
  c.mode = Mode::InputDesign;
  c.weights_path = w.string();
  c.weights_have_bias = true;
  c.out = (d / "out").string();
  const nlohmann::json j = run(c);
  EXPECT_TRUE(j["certified"].get<bool>());
  EXPECT_EQ(j["N"].get<int>(), 6);
  const Matrix U = read_weights_csv((d / "out" / "design.csv").string());
  EXPECT_EQ(U.rows(), 6);
  Vector b(2);
  b << 0.1, -0.2;
  EXPECT_TRUE(verify_pe(U, WeightState::with_bias(Matrix::Identity(2, 2), b)).pe);
}
