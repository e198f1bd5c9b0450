// Certify a 2 x 4 weight matrix, design inputs for it, and recover a nearby
// teacher from noisy outputs with MHE training.

#include <cstdio>
#include <memory>

#include <mhefnn/mhefnn.hpp>

using namespace mhefnn;

int main() {
  Matrix W0(2, 4);
  W0 << 1, 0, 1, 1,
        0, 1, 1, -2;

  const ObservabilityCertificate cert = observability_certificate(W0);
  std::printf("observable: %s (%zu orthants met)\n", cert.observable ? "yes" : "no", cert.sign_matrix.rows.size());
  if (!cert.observable) return 1;

  // Three randomized PE designs back to back, 24 inputs in all.
  Rng rng(1);
  const Matrix U = extend_pe_input(W0, 24, rng);
  auto nb = std::make_shared<const ObservableNeighborhood>(WeightState::fixed_output(W0), U);

  // Teacher inside the neighborhood, outputs with bounded noise.
  const double eps = 1e-3;
  const Vector dir = rng.normal_matrix(8, 1).col(0).normalized();
  const WeightState teacher = nb->anchor().with_vec(nb->anchor().vec() + 0.5 * nb->safe_radius() * dir);
  Vector y = observability_map(teacher, U);
  for (Index i = 0; i < y.size(); ++i) y(i) += eps * rng.uniform(-1.0, 1.0);

  const BatchSchedule sched = BatchSchedule::periodic(U, y, 4);
  const Evaluator ev{U, y, U, y, teacher.vec(), 1.0};
  const TrainingResult r = train(ev, sched, TrainerState{nb->anchor(), 0, nb}, 20, eps, LogEvery::Epoch);

  for (const auto& p : r.trajectory)
    std::printf("epoch %2d  |w - w*| = %.3e\n", p.epoch, p.estimation_error);
  std::printf("asymptotic bound %.3e (rho %.3g)\n", r.report->bound, r.report->rho);
  return 0;
}
