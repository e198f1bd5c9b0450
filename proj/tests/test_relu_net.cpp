#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace mhefnn;

namespace {

// Weights and inputs with every pre-activation at least `gap` from the kink.
WeightState random_state(Variant v, int m, int n, Rng& rng) {
  const Architecture a(v, m, n);
  return WeightState(a, rng.normal_matrix(a.state_dim(), 1).col(0));
}

Matrix inputs_off_kink(const WeightState& w, int N, Rng& rng, double gap) {
  Matrix U(N, w.arch().m);
  for (int i = 0; i < N; ++i) {
    do {
      U.row(i) = rng.normal_matrix(1, w.arch().m);
    } while (pre_activations(w, U.row(i)).cwiseAbs().minCoeff() < gap);
  }
  return U;
}

}  // namespace

TEST(Activations, Scalar) {
  EXPECT_EQ(relu(-2.0), 0.0);
  EXPECT_EQ(chi(-2.0), 0.0);
  EXPECT_EQ(chi(0.0), 0.0);
  EXPECT_EQ(relu(3.0), 3.0);
  Matrix A(2, 2);
  A << 1, -1, 0, 2;
  Matrix E(2, 2);
  E << 1, 0, 0, 1;
  EXPECT_EQ(chi(A), E);
}

TEST(Forward, ExampleOneNegativeInputGivesCTimesU) {
  Matrix W(1, 3);
  W << 1, 2, -1;
  const WeightState w = WeightState::fixed_output(W);
  Vector u(1);
  u << -2;
  EXPECT_DOUBLE_EQ(forward(w, u), 2.0);
}

TEST(Forward, ZeroWeightsGiveZero) {
  const WeightState w(Architecture(Variant::GeneralTwoLayer, 3, 4), Vector::Zero(20));
  Rng rng(1);
  EXPECT_EQ(observability_map(w, rng.normal_matrix(5, 3)).norm(), 0.0);
}

TEST(Forward, BiasByHand) {
  Vector b(2);
  b << 1, -5;
  const WeightState w = WeightState::with_bias(Matrix::Identity(2, 2), b);
  Vector u(2);
  u << 1, 1;
  EXPECT_DOUBLE_EQ(forward(w, u), 2.0);
}

TEST(ObservabilityMap, RepeatedRowAndLoopOracle) {
  Rng rng(2);
  for (Variant v : {Variant::FixedOutputTwoLayer, Variant::BiasTwoLayer, Variant::GeneralTwoLayer}) {
    const WeightState w = random_state(v, 3, 5, rng);
    Matrix U = rng.normal_matrix(6, 3);
    U.row(4) = U.row(1);
    const Vector y = observability_map(w, U);
    EXPECT_EQ(y(1), y(4));
    for (int i = 0; i < 6; ++i)
      EXPECT_NEAR(y(i), oracle::forward_loop(w.W(), w.b(), w.output_weights(), U.row(i).transpose()), 1e-12);
  }
}

TEST(ObservabilityMap, DimensionErrors) {
  const WeightState w = WeightState::fixed_output(Matrix::Ones(2, 3));
  EXPECT_THROW(observability_map(w, Matrix::Ones(4, 3)), DimensionMismatch);
  EXPECT_THROW(WeightState(Architecture(Variant::BiasTwoLayer, 2, 3), Vector::Ones(6)), DimensionMismatch);
  Vector bad = Vector::Ones(6);
  bad(2) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(WeightState(Architecture(Variant::FixedOutputTwoLayer, 2, 3), bad), InvalidArgument);
}

TEST(Jacobian, ScalarCase) {
  const WeightState w = WeightState::fixed_output(Matrix::Ones(1, 1));
  const ObservabilityJacobian J = observability_jacobian(w, Matrix::Ones(1, 1));
  EXPECT_EQ(J.DH, Matrix::Ones(1, 1));
}

TEST(Jacobian, FiniteDifferencesAllArchitectures) {
  Rng rng(3);
  for (Variant v : {Variant::FixedOutputTwoLayer, Variant::BiasTwoLayer, Variant::GeneralTwoLayer}) {
    for (int rep = 0; rep < 30; ++rep) {
      const WeightState w = random_state(v, 1 + int(rng.index(4)), 1 + int(rng.index(6)), rng);
      const Matrix U = inputs_off_kink(w, 12, rng, 1e-3);
      const Matrix DH = observability_jacobian(w, U).DH;
      const Matrix fd = oracle::fd_jacobian(w, U);
      EXPECT_LE((DH - fd).norm() / std::max(DH.norm(), 1e-300), 1e-6);
    }
  }
}

TEST(Jacobian, BoundaryIsRejected) {
  Matrix W(1, 2);
  W << 1, -1;
  const WeightState w = WeightState::fixed_output(W);
  EXPECT_THROW(observability_jacobian(w, Matrix::Zero(1, 1)), BoundaryActivation);
  // The unchecked form uses chi(0) = 0.
  EXPECT_EQ(output_jacobian(w, Matrix::Zero(1, 1)).norm(), 0.0);
}

TEST(Jacobian, FactorizationIsExact) {
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const WeightState w = random_state(Variant::FixedOutputTwoLayer, 3, 4, rng);
    const Matrix U = inputs_off_kink(w, 9, rng, 1e-6);
    const ObservabilityJacobian J = observability_jacobian(w, U);
    EXPECT_EQ((J.DH - factored_jacobian(J, 3)).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(J.T_chi, chi(U * w.W()));
  }
}

TEST(MultiLayer, DependencePerNode) {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const WeightState w = random_state(Variant::GeneralTwoLayer, 2, 3, rng);
    const Matrix U = rng.normal_matrix(50, 2);
    const DeficiencyCertificate c = multilayer_rank_deficiency(w, U);
    EXPECT_TRUE(c.deficient);
    EXPECT_LE(c.rank.rank, 9);
    EXPECT_LE(oracle::lu_rank(output_jacobian(w, U)), 9);
    ASSERT_EQ(c.nodes.size(), 3u);
    for (const auto& d : c.nodes) EXPECT_LE(d.residual, 1e-10);
  }
}

TEST(MultiLayer, ZeroOutputWeightKillsInputColumns) {
  Rng rng(6);
  Vector w2(3);
  w2 << 0, 1, -2;
  const WeightState w = WeightState::general(rng.normal_matrix(2, 3), rng.normal_matrix(3, 1).col(0), w2);
  const Matrix U = rng.normal_matrix(20, 2);
  const Matrix DH = output_jacobian(w, U);
  EXPECT_EQ(DH.leftCols(2).norm(), 0.0);
  EXPECT_EQ(DH.col(6).norm(), 0.0);  // bias column of node 0
  const DeficiencyCertificate c = multilayer_rank_deficiency(w, U);
  EXPECT_TRUE(c.nodes[0].zero_output_weight);
  EXPECT_EQ(c.nodes[0].residual, 0.0);
}

TEST(MultiLayer, RejectsOtherVariants) {
  const WeightState w = WeightState::fixed_output(Matrix::Ones(2, 2));
  EXPECT_THROW(multilayer_rank_deficiency(w, Matrix::Ones(3, 2)), InvalidArgument);
}

TEST(Variant, Names) {
  for (Variant v : {Variant::FixedOutputTwoLayer, Variant::BiasTwoLayer, Variant::GeneralTwoLayer})
    EXPECT_EQ(parse_variant(variant_name(v)), v);
  EXPECT_THROW(parse_variant("deep"), InvalidArgument);
}
