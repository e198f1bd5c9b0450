#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace mhefnn;

namespace {

// Certified 2 x 4 anchor, a teacher inside its neighborhood and PE data.
struct Problem {
  Matrix U;
  Vector y;
  WeightState teacher;
  std::shared_ptr<const ObservableNeighborhood> nb;
};

Problem make(int rows, double noise, std::uint64_t seed) {
  Rng rng(seed);
  Matrix W0;
  do {
    W0 = rng.normal_matrix(2, 4);
  } while (!observability_certificate(W0).observable);
  Problem p;
  p.U = extend_pe_input(W0, rows, rng);
  p.nb = std::make_shared<const ObservableNeighborhood>(WeightState::fixed_output(W0), p.U);
  const Vector d = rng.normal_matrix(8, 1).col(0).normalized();
  p.teacher = p.nb->anchor().with_vec(p.nb->anchor().vec() + 0.5 * p.nb->safe_radius() * d);
  p.y = observability_map(p.teacher, p.U);
  for (Index i = 0; i < p.y.size(); ++i) p.y(i) += noise * rng.uniform(-1.0, 1.0);
  return p;
}

Batch whole(const Problem& p) { return BatchSchedule::periodic(p.U, p.y, 1).batch(0); }

// Dominant eigenvalue magnitude by power iteration.
double power_rho(const Matrix& Q) {
  Vector x = Vector::Ones(Q.rows()).normalized();
  double lam = 0.0;
  for (int it = 0; it < 5000; ++it) {
    const Vector z = Q * x;
    const double nz = z.norm();
    if (nz == 0.0) return 0.0;
    lam = nz;
    x = z / nz;
  }
  return lam;
}

}  // namespace

TEST(Schedule, CyclesAndValidates) {
  Rng rng(1);
  const Matrix U = rng.normal_matrix(10, 2);
  const Vector y = rng.normal_matrix(10, 1).col(0);
  const BatchSchedule s = BatchSchedule::periodic(U, y, 5);
  EXPECT_EQ(s.k(), 5);
  EXPECT_EQ(&s.at_step(1), &s.batch(0));
  EXPECT_EQ(&s.at_step(6), &s.batch(0));
  EXPECT_EQ(&s.at_step(7), &s.batch(1));
  EXPECT_EQ(s.batch(4).index_set, (std::vector<int>{8, 9}));
  EXPECT_THROW(BatchSchedule::periodic(U, y, 3), InvalidArgument);
  EXPECT_EQ(BatchSchedule::by_size(U, y, 4).batch(2).inputs.rows(), 2);
  std::vector<Batch> b{s.batch(0), s.batch(0)};
  EXPECT_THROW(BatchSchedule{b}, InvalidArgument);
}

TEST(Assemble, RowsAndRank) {
  const Problem p = make(8, 0.0, 2);
  const Batch all = whole(p);
  EXPECT_EQ(oracle::lu_rank(assemble_H(all, *p.nb)), 8);
  Batch one{p.U.topRows(1), p.y.head(1), {0}};
  const Matrix H1 = assemble_H(one, *p.nb);
  EXPECT_EQ(H1.rows(), 1);
  EXPECT_EQ(oracle::lu_rank(H1), 1);
  EXPECT_LT(projectors_for_batch(assemble_H(all, *p.nb)).unobservable.norm(), 1e-10);
  const SubspaceProjectors q = projectors_for_batch(H1);
  EXPECT_NEAR(q.observable.trace(), 1.0, 1e-12);
}

TEST(Step, NoiselessPeBatchRecoversTeacher) {
  const Problem p = make(8, 0.0, 3);
  const MheStepResult r = mhe_step_detailed({p.nb->anchor(), 0, p.nb}, whole(p));
  EXPECT_FALSE(r.retracted);
  EXPECT_LT((r.state.w_hat.vec() - p.teacher.vec()).norm(), 1e-9);
  // Dense least squares on the affine model.
  const Vector ls = p.nb->anchor().vec() +
                    Eigen::CompleteOrthogonalDecomposition<Matrix>(p.nb->jacobian().DH)
                        .solve(Vector(p.y - observability_map(p.nb->anchor(), p.U)));
  EXPECT_LT((r.state.w_hat.vec() - ls).norm(), 1e-9);
  EXPECT_EQ(r.state.t, 1);
}

TEST(Step, FullBatchMatchesGlobalLeastSquaresWithNoise) {
  const Problem p = make(24, 1e-3, 4);
  const TrainerState s0{p.nb->anchor(), 0, p.nb};
  const WeightState w = mhe_step(s0, whole(p)).w_hat;
  const Vector ls = p.nb->anchor().vec() + oracle::pinv_cod(p.nb->jacobian().DH) *
                                               (p.y - observability_map(p.nb->anchor(), p.U));
  EXPECT_LT((w.vec() - ls).norm(), 1e-8);
}

TEST(Step, NonPeBatchKeepsUnobservablePart) {
  const Problem p = make(8, 1e-3, 5);
  Batch b{p.U.topRows(3), p.y.head(3), {0, 1, 2}};
  const TrainerState s0{p.nb->anchor(), 0, p.nb};
  const MheStepResult r = mhe_step_detailed(s0, b);
  const SubspaceProjectors P = projectors_for_batch(r.H);
  EXPECT_LT((P.unobservable * (r.state.w_hat.vec() - s0.w_hat.vec())).norm(), 1e-10);
}

TEST(Step, PerStepObservableErrorBound) {
  const double eps = 1e-3;
  const Problem p = make(24, eps, 6);
  const BatchSchedule s = BatchSchedule::periodic(p.U, p.y, 4);
  TrainerState st{p.nb->anchor(), 0, p.nb};
  for (int t = 1; t <= 40; ++t) {
    const Batch& b = s.at_step(t);
    const MheStepResult r = mhe_step_detailed(st, b);
    const RankDecision d = numeric_rank(r.H);
    const double sigma = d.singular_values(d.rank - 1);
    const SubspaceProjectors P = projectors_for_batch(r.H);
    const double lhs = (P.observable * (r.state.w_hat.vec() - p.teacher.vec())).norm();
    EXPECT_LE(lhs, 2 * eps * std::sqrt(double(b.inputs.rows())) / sigma + 1e-12);
    st = r.state;
  }
}

TEST(Train, NoiselessErrorFollowsProjectionProducts) {
  const Problem p = make(16, 0.0, 7);
  const BatchSchedule s = BatchSchedule::periodic(p.U, p.y, 4);
  TrainerState st{p.nb->anchor(), 0, p.nb};
  Vector e = st.w_hat.vec() - p.teacher.vec();
  const double e0 = e.norm();
  for (int t = 1; t <= 4 * 50; ++t) {
    const MheStepResult r = mhe_step_detailed(st, s.at_step(t));
    e = projectors_for_batch(r.H).unobservable * e;
    st = r.state;
    EXPECT_LT((st.w_hat.vec() - p.teacher.vec() - e).norm(), 1e-10 * (1 + e0));
  }
  EXPECT_LT((st.w_hat.vec() - p.teacher.vec()).norm(), 1e-8);
}

TEST(Train, LogsStepZeroAndEveryStep) {
  const Problem p = make(16, 0.0, 8);
  const BatchSchedule s = BatchSchedule::periodic(p.U, p.y, 4);
  Evaluator ev{p.U, p.y, p.U, p.y, p.teacher.vec(), 1.0};
  const TrainingResult r = train(ev, s, {p.nb->anchor(), 0, p.nb}, 3, 0.0);
  ASSERT_EQ(r.trajectory.size(), 13u);
  EXPECT_EQ(r.trajectory[0].step, 0);
  EXPECT_EQ(r.trajectory.back().step, 12);
  EXPECT_EQ(r.trajectory.back().epoch, 3);
  const TrainingResult q = train(ev, s, {p.nb->anchor(), 0, p.nb}, 3, 0.0, LogEvery::Epoch);
  ASSERT_EQ(q.trajectory.size(), 4u);
  EXPECT_EQ(q.trajectory.back().estimation_error, r.trajectory.back().estimation_error);
}

TEST(Report, EveryBatchPe) {
  const Problem p = make(16, 0.0, 9);
  const BatchSchedule s = BatchSchedule::periodic(p.U, p.y, 2);
  const ConvergenceReport rep = convergence_report(s, *p.nb, 1e-4);
  EXPECT_EQ(rep.rho, 0.0);
  EXPECT_EQ(rep.zeta, 1.0);
  EXPECT_FALSE(rep.non_pe_dataset);
  EXPECT_NEAR(rep.bound, 2 * rep.mu * 1e-4, 1e-15 * rep.bound);
}

TEST(Report, ComplementaryBatches) {
  const Problem p = make(8, 0.0, 10);
  const BatchSchedule s = BatchSchedule::periodic(p.U, p.y, 2);
  const ConvergenceReport rep = convergence_report(s, *p.nb, 1e-4);
  EXPECT_FALSE(rep.non_pe_dataset);
  EXPECT_LT(rep.rho, 1.0);
  EXPECT_NEAR(rep.rho, power_rho(rep.Q), 1e-6);
  Matrix Qn = Matrix::Identity(8, 8);
  for (int i = 0; i < 200; ++i) Qn = rep.Q * Qn;
  EXPECT_LT(Qn.norm(), 1e-6);
  // zeta bounds every computed power at the stated rate.
  Matrix P = Matrix::Identity(8, 8);
  for (int l = 0; l <= kGelfandPowers; ++l) {
    EXPECT_LE(Eigen::JacobiSVD<Matrix>(P).singularValues()(0), rep.zeta * std::pow(rep.rho_used, l) * (1 + 1e-12));
    P = rep.Q * P;
  }
  EXPECT_TRUE(std::isfinite(rep.bound));
}

TEST(Report, NonSpanningIsFlagged) {
  const Problem p = make(8, 0.0, 11);
  Matrix U(6, 2);
  Vector y(6);
  for (int i = 0; i < 6; ++i) {
    U.row(i) = p.U.row(i % 2);
    y(i) = p.y(i % 2);
  }
  const ConvergenceReport rep = convergence_report(BatchSchedule::periodic(U, y, 3), *p.nb, 1e-4);
  EXPECT_TRUE(rep.non_pe_dataset);
  EXPECT_TRUE(std::isinf(rep.bound));
}

TEST(Step, OutsideNeighborhoodIsRejected) {
  const Problem p = make(8, 0.0, 12);
  const WeightState bad = p.nb->anchor().with_vec(-p.nb->anchor().vec());
  EXPECT_THROW(mhe_step({bad, 0, p.nb}, whole(p)), InfeasibleStart);
  EXPECT_THROW(mhe_step({bad, 0, nullptr}, whole(p)), InvalidArgument);
}
