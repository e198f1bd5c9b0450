#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "mhefnn/errors.hpp"
#include "mhefnn/neighborhood.hpp"
#include "mhefnn/numlin.hpp"
#include "mhefnn/relu_net.hpp"

namespace mhefnn {

struct Batch {
  Matrix inputs;                // N1 x m
  Vector targets;               // N1, noisy outputs
  std::vector<int> index_set;   // rows of the full training set
};

// Mini-batches visited cyclically: step t (from 1) uses batch (t - 1) mod k.
class BatchSchedule {
 public:
  BatchSchedule() = default;
  explicit BatchSchedule(std::vector<Batch> batches) : batches_(std::move(batches)) {
    if (batches_.empty()) throw InvalidArgument("schedule needs at least one batch");
    std::set<int> seen;
    for (const auto& b : batches_) {
      if (b.inputs.rows() < 1) throw InvalidArgument("empty mini-batch");
      if (b.targets.size() != b.inputs.rows() || Index(b.index_set.size()) != b.inputs.rows())
        throw DimensionMismatch("mini-batch inputs, targets and indices disagree in length");
      for (int i : b.index_set)
        if (!seen.insert(i).second) throw InvalidArgument("mini-batches overlap at sample " + std::to_string(i));
    }
  }

  // Consecutive blocks of `size` rows; the last block may be shorter.
  static BatchSchedule by_size(const Eigen::Ref<const Matrix>& U, const Eigen::Ref<const Vector>& y, int size) {
    if (size < 1) throw InvalidArgument("batch size must be positive");
    if (U.rows() != y.size()) throw DimensionMismatch("inputs and targets disagree in length");
    std::vector<Batch> out;
    for (Index s = 0; s < U.rows(); s += size) {
      const Index len = std::min<Index>(size, U.rows() - s);
      Batch b{U.middleRows(s, len), y.segment(s, len), {}};
      for (Index i = 0; i < len; ++i) b.index_set.push_back(int(s + i));
      out.push_back(std::move(b));
    }
    return BatchSchedule(std::move(out));
  }

  // k equal consecutive blocks.
  static BatchSchedule periodic(const Eigen::Ref<const Matrix>& U, const Eigen::Ref<const Vector>& y, int k) {
    if (k < 1 || U.rows() % k != 0)
      throw InvalidArgument("cannot split " + std::to_string(U.rows()) + " samples into " + std::to_string(k) +
                            " equal mini-batches");
    return by_size(U, y, int(U.rows() / k));
  }

  int k() const { return int(batches_.size()); }
  const Batch& batch(int i) const { return batches_.at(i); }
  const Batch& at_step(int t) const { return batches_[(t - 1) % k()]; }
  const std::vector<Batch>& batches() const { return batches_; }

 private:
  std::vector<Batch> batches_;
};

struct TrainerState {
  WeightState w_hat;
  int t = 0;
  std::shared_ptr<const ObservableNeighborhood> neigh;
};

inline Matrix assemble_H(const Batch& batch, const ObservableNeighborhood& neigh) {
  return observability_jacobian(neigh.anchor(), batch.inputs).DH;
}

inline SubspaceProjectors projectors_for_batch(const Eigen::Ref<const Matrix>& H) { return subspace_projectors(H); }

struct MheStepResult {
  TrainerState state;
  Matrix H;
  Vector delta;  // unretracted step
  bool retracted = false;
};

// Inside the neighborhood the batch outputs are affine in the weights with
// slope H, so the constrained problem is a least-squares solve restricted to
// the row space of H. The pseudoinverse gives the minimum-norm minimizer.
inline MheStepResult mhe_step_detailed(const TrainerState& state, const Batch& batch) {
  if (!state.neigh) throw InvalidArgument("trainer state has no neighborhood");
  const ObservableNeighborhood& nb = *state.neigh;
  if (!nb.contains(state.w_hat)) throw InfeasibleStart("current estimate is outside the observable neighborhood");
  MheStepResult r;
  r.H = assemble_H(batch, nb);
  const Vector resid = batch.targets - observability_map(state.w_hat, batch.inputs);
  r.delta = pinv(r.H) * resid;
  const WeightState cand = state.w_hat.with_vec(state.w_hat.vec() + r.delta);
  const WeightState next = nb.retract(state.w_hat, cand);
  r.retracted = next.vec() != cand.vec();
  r.state = {next, state.t + 1, state.neigh};
  return r;
}

inline TrainerState mhe_step(const TrainerState& state, const Batch& batch) {
  return mhe_step_detailed(state, batch).state;
}

struct ConvergenceReport {
  int k = 0;
  double eps_bar = 0.0;
  std::vector<double> sigma;               // smallest nonzero singular value of each H_t
  std::vector<double> per_step_obs_bound;  // 2 eps_bar sqrt(N_t) / sigma_t
  double mu = 0.0;
  Matrix Q;              // P_obar,k ... P_obar,1
  double rho = 0.0;      // spectral radius of Q
  double rho_used = 0.0; // rate the bound is stated with, rho <= rho_used < 1
  double zeta = 1.0;     // max over l <= 64 of |Q^l| / rho_used^l
  double bound = 0.0;
  int stacked_rank = 0;
  bool non_pe_dataset = false;
};

inline constexpr int kGelfandPowers = 64;

inline ConvergenceReport convergence_report(const BatchSchedule& schedule, const ObservableNeighborhood& neigh,
                                            double eps_bar) {
  if (eps_bar < 0.0) throw InvalidArgument("noise bound must be non-negative");
  ConvergenceReport rep;
  rep.k = schedule.k();
  rep.eps_bar = eps_bar;
  const int dim = neigh.anchor().arch().state_dim();
  rep.Q = Matrix::Identity(dim, dim);
  Matrix stacked(0, dim);
  for (const Batch& b : schedule.batches()) {
    const Matrix H = assemble_H(b, neigh);
    const RankDecision d = numeric_rank(H);
    const double s = d.rank > 0 ? d.singular_values(d.rank - 1) : 0.0;
    rep.sigma.push_back(s);
    const double n1 = double(b.inputs.rows());
    const double m = s > 0.0 ? 2.0 * std::sqrt(n1) / s : std::numeric_limits<double>::infinity();
    rep.per_step_obs_bound.push_back(m * eps_bar);
    rep.mu = std::max(rep.mu, m);
    rep.Q = projectors_for_batch(H).unobservable * rep.Q;
    Matrix next(stacked.rows() + H.rows(), dim);
    next << stacked, H;
    stacked = std::move(next);
  }
  rep.stacked_rank = numeric_rank(stacked).rank;
  rep.non_pe_dataset = rep.stacked_rank < dim;

  const double qn = rep.Q.norm();
  if (qn <= 1e-10) {
    rep.rho = rep.rho_used = 0.0;
    rep.zeta = 1.0;
  } else {
    rep.rho = Eigen::EigenSolver<Matrix>(rep.Q, false).eigenvalues().cwiseAbs().maxCoeff();
    std::vector<double> norms(kGelfandPowers + 1);
    Matrix P = Matrix::Identity(dim, dim);
    for (int l = 0; l <= kGelfandPowers; ++l) {
      norms[l] = Eigen::JacobiSVD<Matrix>(P).singularValues()(0);
      P = rep.Q * P;
    }
    // Near-nilpotent products have a tiny spectral radius but large early
    // powers; the stated rate may be any value in [rho, 1). Pick the one
    // that gives the smallest bound over a fixed grid.
    double best = std::numeric_limits<double>::infinity();
    for (int g = 0; g <= 200; ++g) {
      const double rate = rep.rho + (1.0 - rep.rho) * g / 201.0;
      if (rate <= 0.0) continue;
      double z = 1.0;
      for (int l = 0; l <= kGelfandPowers; ++l) z = std::max(z, norms[l] / std::pow(rate, l));
      if (!std::isfinite(z)) continue;
      const double val = z / (1.0 - rate);
      if (val < best) {
        best = val;
        rep.rho_used = rate;
        rep.zeta = z;
      }
    }
  }
  if (rep.non_pe_dataset || rep.rho >= 1.0) {
    rep.bound = std::numeric_limits<double>::infinity();
  } else {
    rep.bound = rep.k * rep.mu * rep.zeta / (1.0 - rep.rho_used) * eps_bar;
  }
  return rep;
}

struct TrajectoryPoint {
  int step = 0;
  int epoch = 0;
  double train_loss = 0.0;  // mean squared error, original target units
  double test_loss = 0.0;
  double estimation_error = std::numeric_limits<double>::quiet_NaN();
};

struct Evaluator {
  Matrix train_inputs;
  Vector train_targets;
  Matrix test_inputs;
  Vector test_targets;
  std::optional<Vector> truth;  // ideal weights, when known
  double target_scale = 1.0;    // losses are reported times scale^2

  static double mse(const WeightState& w, const Matrix& U, const Vector& y) {
    if (U.rows() == 0) return std::numeric_limits<double>::quiet_NaN();
    return (observability_map(w, U) - y).squaredNorm() / double(U.rows());
  }

  TrajectoryPoint evaluate(int step, int epoch, const WeightState& w) const {
    TrajectoryPoint p;
    p.step = step;
    p.epoch = epoch;
    const double s2 = target_scale * target_scale;
    p.train_loss = mse(w, train_inputs, train_targets) * s2;
    p.test_loss = mse(w, test_inputs, test_targets) * s2;
    if (truth) p.estimation_error = (w.vec() - *truth).norm();
    return p;
  }
};

enum class LogEvery { Step, Epoch };

struct TrainingResult {
  std::vector<TrajectoryPoint> trajectory;
  WeightState final_weights;
  std::optional<ConvergenceReport> report;
  int retractions = 0;
  bool diverged = false;
};

using MheObserver = std::function<void(const Batch&, const MheStepResult&)>;

// Runs epochs * k MHE steps from init. The trajectory starts with step 0.
inline TrainingResult train(const Evaluator& eval, const BatchSchedule& schedule, const TrainerState& init,
                            int epochs, double eps_bar, LogEvery log = LogEvery::Step,
                            const MheObserver& observer = {}) {
  if (epochs < 0) throw InvalidArgument("epochs must be non-negative");
  TrainingResult res;
  res.report = convergence_report(schedule, *init.neigh, eps_bar);
  TrainerState st = init;
  res.trajectory.push_back(eval.evaluate(0, 0, st.w_hat));
  const int k = schedule.k();
  for (int e = 1; e <= epochs; ++e) {
    for (int i = 0; i < k; ++i) {
      const Batch& b = schedule.at_step(st.t + 1);
      MheStepResult r = mhe_step_detailed(st, b);
      if (r.retracted) ++res.retractions;
      if (observer) observer(b, r);
      st = std::move(r.state);
      if (log == LogEvery::Step || i == k - 1) res.trajectory.push_back(eval.evaluate(st.t, e, st.w_hat));
    }
  }
  res.final_weights = st.w_hat;
  return res;
}

}  // namespace mhefnn
