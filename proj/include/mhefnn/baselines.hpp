#pragma once

#include <cmath>

#include "mhefnn/errors.hpp"
#include "mhefnn/mhe_train.hpp"
#include "mhefnn/relu_net.hpp"

namespace mhefnn {

// Gradient of the batch mean squared error, chi(0) = 0 at the kink.
inline Vector batch_gradient(const WeightState& w, const Batch& b) {
  const Vector r = observability_map(w, b.inputs) - b.targets;
  return (2.0 / double(b.inputs.rows())) * (output_jacobian(w, b.inputs).transpose() * r);
}

namespace detail {

// step(w, batch, t) returns the next weight vector; a non-finite result
// stops the run and marks it diverged.
template <typename Step>
TrainingResult run_steps(const Evaluator& eval, const BatchSchedule& schedule, const WeightState& init, int epochs,
                         LogEvery log, Step&& step) {
  if (epochs < 0) throw InvalidArgument("epochs must be non-negative");
  TrainingResult res;
  WeightState w = init;
  res.trajectory.push_back(eval.evaluate(0, 0, w));
  int t = 0;
  for (int e = 1; e <= epochs; ++e) {
    for (int i = 0; i < schedule.k(); ++i) {
      ++t;
      Vector next = step(w, schedule.at_step(t), t);
      if (!next.allFinite()) {
        res.diverged = true;
        res.final_weights = w;
        return res;
      }
      w = w.with_vec(std::move(next));
      if (log == LogEvery::Step || i == schedule.k() - 1) res.trajectory.push_back(eval.evaluate(t, e, w));
    }
  }
  res.final_weights = w;
  return res;
}

}  // namespace detail

inline TrainingResult gd_baseline(const Evaluator& eval, const BatchSchedule& schedule, const WeightState& init,
                                  double learning_rate, int epochs, LogEvery log = LogEvery::Step) {
  return detail::run_steps(eval, schedule, init, epochs, log, [&](const WeightState& w, const Batch& b, int) {
    return Vector(w.vec() - learning_rate * batch_gradient(w, b));
  });
}

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

inline TrainingResult adam_baseline(const Evaluator& eval, const BatchSchedule& schedule, const WeightState& init,
                                    const AdamOptions& opt, int epochs, LogEvery log = LogEvery::Step) {
  Vector m1 = Vector::Zero(init.vec().size());
  Vector m2 = m1;
  return detail::run_steps(eval, schedule, init, epochs, log, [&](const WeightState& w, const Batch& b, int t) {
    const Vector g = batch_gradient(w, b);
    m1 = opt.beta1 * m1 + (1.0 - opt.beta1) * g;
    m2 = opt.beta2 * m2 + (1.0 - opt.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(opt.beta1, t);
    const double c2 = 1.0 - std::pow(opt.beta2, t);
    const Vector step = (m1 / c1).array() / ((m2 / c2).array().sqrt() + opt.epsilon);
    return Vector(w.vec() - opt.lr * step);
  });
}

// One damped Gauss-Newton step on lambda |y - y~|^2 + |w - w_prev|^2:
// delta = -lambda J^T (I + lambda J J^T)^{-1} r, which equals
// -(lambda J^T J + I)^{-1} lambda J^T r with an N1 x N1 solve.
inline WeightState regularized_mhe_step(const WeightState& w, const Batch& b, double weight_lambda) {
  if (weight_lambda < 0.0) throw InvalidArgument("regularization weight must be non-negative");
  if (weight_lambda == 0.0) return w;
  const Matrix J = output_jacobian(w, b.inputs);
  const Vector r = observability_map(w, b.inputs) - b.targets;
  Matrix A = weight_lambda * (J * J.transpose());
  A.diagonal().array() += 1.0;
  const Vector z = A.llt().solve(r);
  return w.with_vec(w.vec() - weight_lambda * (J.transpose() * z));
}

inline TrainingResult regularized_mhe_baseline(const Evaluator& eval, const BatchSchedule& schedule,
                                               const WeightState& init, double weight_lambda, int epochs,
                                               LogEvery log = LogEvery::Step) {
  return detail::run_steps(eval, schedule, init, epochs, log, [&](const WeightState& w, const Batch& b, int) {
    return regularized_mhe_step(w, b, weight_lambda).vec();
  });
}

}  // namespace mhefnn
