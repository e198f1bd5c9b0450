#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mhefnn/baselines.hpp"
#include "mhefnn/config.hpp"
#include "mhefnn/dataset.hpp"
#include "mhefnn/errors.hpp"
#include "mhefnn/mhe_train.hpp"
#include "mhefnn/neighborhood.hpp"
#include "mhefnn/orthant_geo.hpp"
#include "mhefnn/pe_design.hpp"
#include "mhefnn/relu_net.hpp"
#include "mhefnn/rng.hpp"

namespace mhefnn {

inline constexpr int kMaxTeacherDraws = 10000;

// Seed of repeat r, decorrelated from neighbouring repeats by splitmix64.
inline std::uint64_t repeat_seed(std::uint64_t seed, int r) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * std::uint64_t(r + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct SyntheticProblem {
  WeightState teacher;
  Matrix U;       // designed training inputs
  Vector y;       // noisy targets
  Vector noise;
  Matrix test_U;
  Vector test_y;  // noiseless
  std::shared_ptr<const ObservableNeighborhood> neigh;  // around init
  WeightState init;
  int teacher_draws = 0;

  Evaluator evaluator() const { return {U, y, test_U, test_y, teacher.vec(), 1.0}; }
};

namespace detail {

inline bool certified(const Matrix& W, const std::optional<Vector>& b) {
  try {
    return observability_certificate(W, b).observable;
  } catch (const ZeroColumn&) {
    return false;
  } catch (const RankDeficientW&) {
    return false;
  }
}

}  // namespace detail

// Teacher drawn from N(0, 1) until certified; inputs from concatenated
// randomized PE designs; init = teacher + s delta with s chosen so that no
// pre-activation of the design moves by more than init_perturbation of its
// size, which keeps the teacher inside the neighborhood of init.
inline SyntheticProblem gen_synthetic(const ExperimentConfig& cfg, Rng& rng) {
  if (cfg.mode != Mode::Synthetic) throw ConfigError("gen_synthetic needs synthetic mode");
  cfg.validate();
  if (!(cfg.init_perturbation > 0.0 && cfg.init_perturbation < 1.0))
    throw ConfigError("init_perturbation must lie in (0, 1)");
  const bool bias = cfg.variant == Variant::BiasTwoLayer;
  SyntheticProblem p;

  Matrix W;
  std::optional<Vector> b;
  for (p.teacher_draws = 1;; ++p.teacher_draws) {
    if (p.teacher_draws > kMaxTeacherDraws)
      throw ConstructionFailed("no locally observable teacher after " + std::to_string(kMaxTeacherDraws) +
                               " draws for m = " + std::to_string(cfg.m) + ", n = " + std::to_string(cfg.n));
    W = rng.normal_matrix(cfg.m, cfg.n);
    if (bias) b = rng.normal_matrix(cfg.n, 1).col(0);
    if (cfg.m <= cfg.n && detail::certified(W, b)) break;
  }
  p.teacher = bias ? WeightState::with_bias(W, *b) : WeightState::fixed_output(W);
  DesignOptions design;
  design.unit_margin = cfg.unit_margin;
  design.widest_first = cfg.widest_first;
  p.U = bias ? extend_pe_input_bias(W, *b, cfg.samples, rng, design) : extend_pe_input(W, cfg.samples, rng, design);

  p.noise.resize(cfg.samples);
  for (int i = 0; i < cfg.samples; ++i) p.noise(i) = cfg.eps_bar > 0 ? rng.uniform(-cfg.eps_bar, cfg.eps_bar) : 0.0;
  p.y = observability_map(p.teacher, p.U) + p.noise;

  const double scale = std::sqrt(p.U.rowwise().squaredNorm().mean() / cfg.m);
  p.test_U = scale * rng.normal_matrix(cfg.test_samples, cfg.m);
  p.test_y = observability_map(p.teacher, p.test_U);

  const Vector delta = rng.normal_matrix(p.teacher.arch().state_dim(), 1).col(0);
  const Matrix Z = pre_activations(p.teacher, p.U);
  const Matrix dZ = pre_activations(p.teacher.with_vec(p.teacher.vec() + delta), p.U) - Z;
  const double worst = (dZ.array() / Z.array()).abs().maxCoeff();
  const double s = worst > 0 ? cfg.init_perturbation / worst : 0.0;
  p.init = p.teacher.with_vec(p.teacher.vec() + s * delta);
  p.neigh = std::make_shared<const ObservableNeighborhood>(p.init, p.U);
  if (!p.neigh->contains(p.teacher)) throw ConstructionFailed("teacher is outside the neighborhood of the initial state");
  return p;
}

struct MethodRun {
  std::string method;
  TrainingResult result;
  double wall_time = 0.0;
};

struct MethodMetrics {
  double final_train_rmse = 0.0;
  double final_test_rmse = 0.0;
  double final_error = std::numeric_limits<double>::quiet_NaN();
  double limsup_error = std::numeric_limits<double>::quiet_NaN();
  int steps_to_threshold = -1;
  bool within_one_epoch = false;
  bool diverged = false;
  int retractions = 0;
};

inline MethodMetrics summarize_run(const TrainingResult& r, int k, int epochs, int limsup_epochs, double threshold) {
  MethodMetrics m;
  const auto& last = r.trajectory.back();
  m.final_train_rmse = std::sqrt(last.train_loss);
  m.final_test_rmse = std::sqrt(last.test_loss);
  m.final_error = last.estimation_error;
  m.diverged = r.diverged;
  m.retractions = r.retractions;
  double ls = -std::numeric_limits<double>::infinity();
  for (const auto& pt : r.trajectory) {
    if (m.steps_to_threshold < 0 && pt.estimation_error < threshold) m.steps_to_threshold = pt.step;
    if (pt.epoch > epochs - limsup_epochs) ls = std::max(ls, pt.estimation_error);
  }
  if (std::isfinite(ls)) m.limsup_error = ls;
  m.within_one_epoch = m.steps_to_threshold >= 0 && m.steps_to_threshold <= k;
  return m;
}

struct SyntheticRepeat {
  int repeat = 0;
  std::uint64_t seed = 0;
  SyntheticProblem problem;
  BatchSchedule schedule;
  std::vector<MethodRun> runs;
};

template <typename F>
MethodRun timed(const std::string& name, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  MethodRun mr{name, f(), 0.0};
  mr.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return mr;
}

inline LogEvery log_policy(const ExperimentConfig& cfg) { return cfg.log_every_step ? LogEvery::Step : LogEvery::Epoch; }

inline SyntheticRepeat run_synthetic_repeat(const ExperimentConfig& cfg, int r, const MheObserver& observer = {}) {
  SyntheticRepeat out;
  out.repeat = r;
  out.seed = repeat_seed(cfg.seed, r);
  Rng rng(out.seed);
  out.problem = gen_synthetic(cfg, rng);
  const SyntheticProblem& p = out.problem;
  out.schedule = BatchSchedule::periodic(p.U, p.y, cfg.batches);
  const Evaluator ev = p.evaluator();
  const LogEvery log = log_policy(cfg);
  for (const auto& name : cfg.methods) {
    if (name == "mhe") {
      out.runs.push_back(timed(name, [&] {
        return train(ev, out.schedule, TrainerState{p.init, 0, p.neigh}, cfg.epochs, cfg.eps_bar, log, observer);
      }));
    } else if (name == "gd") {
      out.runs.push_back(timed(name, [&] { return gd_baseline(ev, out.schedule, p.init, cfg.gd_lr, cfg.epochs, log); }));
    } else if (name == "adam") {
      const AdamOptions o{cfg.adam_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon};
      out.runs.push_back(timed(name, [&] { return adam_baseline(ev, out.schedule, p.init, o, cfg.epochs, log); }));
    } else if (name == "regularized-mhe") {
      out.runs.push_back(timed(
          name, [&] { return regularized_mhe_baseline(ev, out.schedule, p.init, cfg.reg_lambda, cfg.epochs, log); }));
    }
  }
  return out;
}

struct WineRepeat {
  int repeat = 0;
  std::uint64_t seed = 0;
  int train_size = 0, test_size = 0;
  std::vector<MethodRun> runs;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every layer.
inline WeightState default_init(const Architecture& a, Rng& rng) {
  const double b1 = 1.0 / std::sqrt(double(a.m));
  const double b2 = 1.0 / std::sqrt(double(a.n));
  Vector w(a.state_dim());
  for (int i = 0; i < a.m * a.n + (a.has_bias() ? a.n : 0); ++i) w(i) = rng.uniform(-b1, b1);
  for (int i = a.m * a.n + (a.has_bias() ? a.n : 0); i < a.state_dim(); ++i) w(i) = rng.uniform(-b2, b2);
  return WeightState(a, std::move(w));
}

inline WineRepeat run_wine_repeat(const ExperimentConfig& cfg, int r) {
  WineRepeat out;
  out.repeat = r;
  out.seed = repeat_seed(cfg.seed, r);
  Rng rng(out.seed);
  const Dataset d = load_csv(cfg.data_path, cfg.target_column, rng.bits(), cfg.test_fraction);
  out.train_size = int(d.train.size());
  out.test_size = int(d.test.size());

  Evaluator ev;
  ev.train_inputs = d.train_inputs();
  ev.test_inputs = d.test_inputs();
  Vector ytr = d.train_targets(), yte = d.test_targets();
  if (cfg.standardize_targets) {
    const double mu = ytr.mean();
    double sd = std::sqrt((ytr.array() - mu).square().mean());
    if (sd <= 0) sd = 1.0;
    ytr = (ytr.array() - mu) / sd;
    yte = (yte.array() - mu) / sd;
    ev.target_scale = sd;
  }
  ev.train_targets = ytr;
  ev.test_targets = yte;

  const Architecture arch(cfg.variant, int(ev.train_inputs.cols()), cfg.n);
  const WeightState init = default_init(arch, rng);
  const BatchSchedule sched = BatchSchedule::by_size(ev.train_inputs, ev.train_targets, cfg.batch_size);
  const LogEvery log = log_policy(cfg);
  for (const auto& name : cfg.methods) {
    if (name == "gd") {
      out.runs.push_back(timed(name, [&] { return gd_baseline(ev, sched, init, cfg.gd_lr, cfg.epochs, log); }));
    } else if (name == "adam") {
      const AdamOptions o{cfg.adam_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon};
      out.runs.push_back(timed(name, [&] { return adam_baseline(ev, sched, init, o, cfg.epochs, log); }));
    } else if (name == "regularized-mhe") {
      out.runs.push_back(
          timed(name, [&] { return regularized_mhe_baseline(ev, sched, init, cfg.reg_lambda, cfg.epochs, log); }));
    }
  }
  return out;
}

inline nlohmann::json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return nullptr;
  return v > 0 ? "inf" : "-inf";
}

inline nlohmann::json report_json(const ConvergenceReport& rep) {
  nlohmann::json sig = nlohmann::json::array(), ob = nlohmann::json::array();
  for (double s : rep.sigma) sig.push_back(number(s));
  for (double s : rep.per_step_obs_bound) ob.push_back(number(s));
  return {{"k", rep.k},           {"eps_bar", rep.eps_bar},     {"sigma", sig},
          {"per_step_obs_bound", ob}, {"mu", number(rep.mu)},   {"rho", number(rep.rho)},
          {"rho_used", number(rep.rho_used)}, {"zeta", number(rep.zeta)}, {"zeta_is_empirical", true},
          {"bound", number(rep.bound)}, {"stacked_rank", rep.stacked_rank}, {"non_pe_dataset", rep.non_pe_dataset}};
}

inline nlohmann::json metrics_json(const MethodMetrics& m) {
  return {{"final_train_rmse", number(m.final_train_rmse)},
          {"final_test_rmse", number(m.final_test_rmse)},
          {"final_error", number(m.final_error)},
          {"limsup_error", number(m.limsup_error)},
          {"steps_to_threshold", m.steps_to_threshold},
          {"within_one_epoch", m.within_one_epoch},
          {"diverged", m.diverged},
          {"retractions", m.retractions}};
}

struct Aggregate {
  std::vector<double> test_rmse, final_error;
  int within_one_epoch = 0, diverged = 0, bound_holds = 0, bound_checked = 0, count = 0;
};

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double mu = 0;
  for (double x : v) mu += x;
  mu /= double(v.size());
  double ss = 0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return {mu, v.size() > 1 ? std::sqrt(ss / double(v.size() - 1)) : 0.0};
}

// Trajectory and timing writers keep deterministic columns apart from the
// wall clock, so two runs with one seed give identical trajectory files.
struct RunWriters {
  std::ofstream traj, timing;
  explicit RunWriters(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    traj.open(dir / "trajectory.csv");
    timing.open(dir / "timing.csv");
    if (!traj || !timing) throw Error("cannot write into '" + dir.string() + "'");
    traj << "repeat,method,step,epoch,train_loss,test_loss,estimation_error\n";
    timing << "repeat,method,wall_time\n";
  }
  void write(int repeat, const MethodRun& mr) {
    for (const auto& p : mr.result.trajectory)
      traj << repeat << ',' << mr.method << ',' << p.step << ',' << p.epoch << ',' << format_double(p.train_loss)
           << ',' << format_double(p.test_loss) << ',' << format_double(p.estimation_error) << '\n';
    timing << repeat << ',' << mr.method << ',' << format_double(mr.wall_time) << '\n';
  }
};

inline nlohmann::json run_training(const ExperimentConfig& cfg) {
  const std::filesystem::path dir(cfg.out);
  RunWriters w(dir);
  nlohmann::json reps = nlohmann::json::array();
  std::map<std::string, Aggregate> agg;
  for (int r = 0; r < cfg.repeats; ++r) {
    nlohmann::json rj;
    std::vector<MethodRun> runs;
    int k = 0;
    if (cfg.mode == Mode::Synthetic) {
      SyntheticRepeat sr = run_synthetic_repeat(cfg, r);
      rj = {{"repeat", r}, {"seed", sr.seed}, {"teacher_draws", sr.problem.teacher_draws}};
      runs = std::move(sr.runs);
      k = sr.schedule.k();
    } else {
      WineRepeat wr = run_wine_repeat(cfg, r);
      rj = {{"repeat", r}, {"seed", wr.seed}, {"train_size", wr.train_size}, {"test_size", wr.test_size}};
      runs = std::move(wr.runs);
      k = (wr.train_size + cfg.batch_size - 1) / cfg.batch_size;
    }
    nlohmann::json mj = nlohmann::json::object();
    for (const auto& mr : runs) {
      w.write(r, mr);
      const MethodMetrics m = summarize_run(mr.result, k, cfg.epochs, cfg.limsup_epochs, cfg.error_threshold);
      nlohmann::json one = metrics_json(m);
      Aggregate& a = agg[mr.method];
      ++a.count;
      a.test_rmse.push_back(m.final_test_rmse);
      if (!std::isnan(m.final_error)) a.final_error.push_back(m.final_error);
      a.within_one_epoch += m.within_one_epoch;
      a.diverged += m.diverged;
      if (mr.result.report) {
        one["convergence"] = report_json(*mr.result.report);
        const bool holds = m.limsup_error <= mr.result.report->bound;
        one["bound_holds"] = holds;
        ++a.bound_checked;
        a.bound_holds += holds;
      }
      mj[mr.method] = one;
    }
    rj["methods"] = mj;
    reps.push_back(rj);
  }
  nlohmann::json aj = nlohmann::json::object();
  for (const auto& [name, a] : agg) {
    const auto [rm, rs] = mean_std(a.test_rmse);
    nlohmann::json one = {{"runs", a.count}, {"test_rmse_mean", number(rm)}, {"test_rmse_std", number(rs)},
                          {"diverged", a.diverged}};
    if (!a.final_error.empty()) {
      const auto [em, es] = mean_std(a.final_error);
      one["final_error_mean"] = number(em);
      one["final_error_std"] = number(es);
      one["within_one_epoch"] = a.within_one_epoch;
    }
    if (a.bound_checked) {
      one["bound_holds"] = a.bound_holds;
      one["bound_checked"] = a.bound_checked;
    }
    aj[name] = one;
  }
  nlohmann::json summary = {{"config", config_to_json(cfg)}, {"repeats", reps}, {"aggregate", aj}};
  std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
  return summary;
}

inline nlohmann::json analyze_weights(const Matrix& W, const std::optional<Vector>& b) {
  nlohmann::json j = {{"m", W.rows()}, {"n", W.cols()}, {"bias", b.has_value()}};
  j["rank_W"] = numeric_rank(W).rank;
  try {
    const ObservabilityCertificate c = observability_certificate(W, b);
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : c.sign_matrix.rows) rows.push_back(s.str());
    j["sign_matrix"] = rows;
    j["indicator_rank"] = c.rank;
    j["observable"] = c.observable;
    j["explanation"] =
        c.observable
            ? "the " + std::string(b ? "affine set R(W1) + b" : "row space R(W)") + " meets " +
                  std::to_string(c.sign_matrix.size()) + " orthants whose indicators span all " +
                  std::to_string(W.cols()) + " hidden nodes"
            : "the indicators of the " + std::to_string(c.sign_matrix.size()) + " orthants met by " +
                  std::string(b ? "R(W1) + b" : "R(W)") + " have rank " + std::to_string(c.rank) + " < " +
                  std::to_string(W.cols()) + ", so the individual hidden-node weights cannot be determined";
  } catch (const ZeroColumn& e) {
    j["observable"] = false;
    j["explanation"] = std::string("zero column: ") + e.what();
  } catch (const RankDeficientW& e) {
    j["observable"] = false;
    j["explanation"] = std::string("W is not full row rank: ") + e.what();
  }
  return j;
}

// Splits a weights file into W and an optional trailing bias row.
inline std::pair<Matrix, std::optional<Vector>> split_weights(const Matrix& M, bool has_bias) {
  if (!has_bias) return {M, std::nullopt};
  if (M.rows() < 2) throw InvalidArgument("a weights file with a bias row needs at least two rows");
  return {M.topRows(M.rows() - 1), Vector(M.row(M.rows() - 1).transpose())};
}

inline nlohmann::json plan_json(const ExcitationPlan& p) {
  nlohmann::json orth = nlohmann::json::array();
  for (const auto& s : p.orthants) orth.push_back(s.str());
  nlohmann::json T = nlohmann::json::array();
  for (Index i = 0; i < p.T.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < p.T.cols(); ++j) row.push_back(int(p.T(i, j)));
    T.push_back(row);
  }
  return {{"N", p.U.rows()},        {"orthants", orth},           {"T", T},
          {"certified", p.certified}, {"rank", p.check.rank}, {"sigma_min", p.check.sigma_min}};
}

inline nlohmann::json run_design(const ExperimentConfig& cfg) {
  const auto [W, b] = split_weights(read_weights_csv(cfg.weights_path), cfg.weights_have_bias);
  Rng rng(cfg.seed);
  DesignOptions o;
  o.rng = cfg.seed ? &rng : nullptr;
  const ExcitationPlan p = b ? design_pe_input_bias(W, *b, o) : design_pe_input(W, o);
  const std::filesystem::path dir(cfg.out);
  std::filesystem::create_directories(dir);
  std::ofstream f(dir / "design.csv");
  write_matrix_csv(f, p.U);
  const nlohmann::json j = plan_json(p);
  std::ofstream(dir / "plan.json") << j.dump(2) << '\n';
  return j;
}

inline nlohmann::json run(const ExperimentConfig& cfg) {
  cfg.validate();
  switch (cfg.mode) {
    case Mode::Synthetic:
    case Mode::Wine: return run_training(cfg);
    case Mode::ObservabilityAnalysis: {
      const auto [W, b] = split_weights(read_weights_csv(cfg.weights_path), cfg.weights_have_bias);
      const nlohmann::json j = analyze_weights(W, b);
      const std::filesystem::path dir(cfg.out);
      std::filesystem::create_directories(dir);
      std::ofstream(dir / "analysis.json") << j.dump(2) << '\n';
      return j;
    }
    case Mode::InputDesign: return run_design(cfg);
  }
  return {};
}

}  // namespace mhefnn
