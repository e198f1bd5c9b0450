#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mhefnn/errors.hpp"
#include "mhefnn/numlin.hpp"

namespace mhefnn {

// Pre-activations at or below this magnitude are treated as on the kink.
inline constexpr double kBoundaryTolerance = 1e-12;

enum class Variant { FixedOutputTwoLayer, BiasTwoLayer, GeneralTwoLayer };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::FixedOutputTwoLayer: return "fixed-output";
    case Variant::BiasTwoLayer: return "bias";
    case Variant::GeneralTwoLayer: return "general";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "fixed-output" || s == "fixed") return Variant::FixedOutputTwoLayer;
  if (s == "bias") return Variant::BiasTwoLayer;
  if (s == "general") return Variant::GeneralTwoLayer;
  throw InvalidArgument("unknown architecture variant '" + s + "'");
}

struct Architecture {
  Variant variant = Variant::FixedOutputTwoLayer;
  int m = 1;  // inputs
  int n = 1;  // hidden nodes

  Architecture() = default;
  Architecture(Variant v, int inputs, int hidden) : variant(v), m(inputs), n(hidden) {
    if (m < 1 || n < 1) throw InvalidArgument("architecture needs m >= 1 and n >= 1");
  }

  bool has_bias() const { return variant != Variant::FixedOutputTwoLayer; }
  bool has_output_weights() const { return variant == Variant::GeneralTwoLayer; }

  int state_dim() const {
    switch (variant) {
      case Variant::FixedOutputTwoLayer: return m * n;
      case Variant::BiasTwoLayer: return (m + 1) * n;
      case Variant::GeneralTwoLayer: return (m + 2) * n;
    }
    return 0;
  }

  bool operator==(const Architecture&) const = default;
};

// Layout of w: columns of W stacked, then b, then W2.
class WeightState {
 public:
  WeightState() = default;
  WeightState(Architecture arch, Vector w) : arch_(arch), w_(std::move(w)) {
    if (w_.size() != arch_.state_dim())
      throw DimensionMismatch("weight vector has length " + std::to_string(w_.size()) + ", expected " +
                              std::to_string(arch_.state_dim()));
    require_finite(w_, "WeightState");
  }

  static WeightState fixed_output(const Eigen::Ref<const Matrix>& W) {
    Architecture a(Variant::FixedOutputTwoLayer, int(W.rows()), int(W.cols()));
    return WeightState(a, Eigen::Map<const Vector>(Matrix(W).data(), W.size()));
  }

  static WeightState with_bias(const Eigen::Ref<const Matrix>& W1, const Eigen::Ref<const Vector>& b) {
    if (b.size() != W1.cols()) throw DimensionMismatch("bias length must equal the hidden width");
    Architecture a(Variant::BiasTwoLayer, int(W1.rows()), int(W1.cols()));
    Vector w(a.state_dim());
    w << Eigen::Map<const Vector>(Matrix(W1).data(), W1.size()), b;
    return WeightState(a, std::move(w));
  }

  static WeightState general(const Eigen::Ref<const Matrix>& W1, const Eigen::Ref<const Vector>& b,
                             const Eigen::Ref<const Vector>& w2) {
    if (b.size() != W1.cols() || w2.size() != W1.cols())
      throw DimensionMismatch("bias and output weights must match the hidden width");
    Architecture a(Variant::GeneralTwoLayer, int(W1.rows()), int(W1.cols()));
    Vector w(a.state_dim());
    w << Eigen::Map<const Vector>(Matrix(W1).data(), W1.size()), b, w2;
    return WeightState(a, std::move(w));
  }

  const Architecture& arch() const { return arch_; }
  const Vector& vec() const { return w_; }

  Matrix W() const { return Eigen::Map<const Matrix>(w_.data(), arch_.m, arch_.n); }

  Vector b() const {
    if (!arch_.has_bias()) return Vector::Zero(arch_.n);
    return w_.segment(arch_.m * arch_.n, arch_.n);
  }

  Vector output_weights() const {
    if (!arch_.has_output_weights()) return Vector::Ones(arch_.n);
    return w_.tail(arch_.n);
  }

  WeightState with_vec(Vector w) const { return WeightState(arch_, std::move(w)); }

 private:
  Architecture arch_;
  Vector w_;
};

inline double relu(double a) { return a > 0.0 ? a : 0.0; }
inline double chi(double a) { return a > 0.0 ? 1.0 : 0.0; }

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& a) {
  return a.cwiseMax(0.0).eval();
}

// Binary indicator with chi(0) = 0, stored as doubles for arithmetic.
template <typename Derived>
Matrix chi(const Eigen::MatrixBase<Derived>& a) {
  return (a.array() > 0.0).template cast<double>().matrix();
}

inline void check_inputs(const WeightState& ws, const Eigen::Ref<const Matrix>& U) {
  if (U.cols() != ws.arch().m)
    throw DimensionMismatch("input matrix has " + std::to_string(U.cols()) + " columns, network expects " +
                            std::to_string(ws.arch().m));
}

// Z(i, j) = u_i^T w_j + b_j
inline Matrix pre_activations(const WeightState& ws, const Eigen::Ref<const Matrix>& U) {
  check_inputs(ws, U);
  Matrix Z = U * ws.W();
  if (ws.arch().has_bias()) Z.rowwise() += ws.b().transpose();
  return Z;
}

inline Vector observability_map(const WeightState& ws, const Eigen::Ref<const Matrix>& U) {
  return relu(pre_activations(ws, U)) * ws.output_weights();
}

inline double forward(const WeightState& ws, const Eigen::Ref<const Vector>& u) {
  if (u.size() != ws.arch().m) throw DimensionMismatch("input length does not match the network");
  return observability_map(ws, u.transpose())(0);
}

struct ObservabilityJacobian {
  Matrix DH;                           // N x state_dim
  Eigen::SparseMatrix<double> T_u;     // N x N*m, block diagonal of u_i^T
  Matrix T_chi;                        // N x n, binary
};

// Block-diagonal T_u with u_i^T in block i.
inline Eigen::SparseMatrix<double> input_block_matrix(const Eigen::Ref<const Matrix>& U) {
  const Index N = U.rows(), m = U.cols();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(N * m);
  for (Index i = 0; i < N; ++i)
    for (Index l = 0; l < m; ++l) t.emplace_back(i, i * m + l, U(i, l));
  Eigen::SparseMatrix<double> T(N, N * m);
  T.setFromTriplets(t.begin(), t.end());
  return T;
}

// Jacobian of the observability map with the chi(0) = 0 convention and no
// boundary check. The gradient baselines use this form.
inline Matrix output_jacobian(const WeightState& ws, const Eigen::Ref<const Matrix>& U) {
  const auto& a = ws.arch();
  const Matrix Z = pre_activations(ws, U);
  const Matrix X = chi(Z);
  const Vector w2 = ws.output_weights();
  const Index N = U.rows(), m = a.m, n = a.n;
  Matrix DH = Matrix::Zero(N, a.state_dim());
  for (Index j = 0; j < n; ++j) {
    const Vector g = X.col(j) * w2(j);
    DH.middleCols(j * m, m) = g.asDiagonal() * U;
  }
  if (a.has_bias()) {
    DH.middleCols(m * n, n) = X * w2.asDiagonal();
  }
  if (a.has_output_weights()) {
    DH.rightCols(n) = relu(Z);
  }
  return DH;
}

inline void require_off_boundary(const Eigen::Ref<const Matrix>& Z) {
  for (Index i = 0; i < Z.rows(); ++i)
    for (Index j = 0; j < Z.cols(); ++j)
      if (std::abs(Z(i, j)) <= kBoundaryTolerance)
        throw BoundaryActivation("pre-activation of sample " + std::to_string(i) + " at hidden node " +
                                 std::to_string(j) + " is on the activation boundary");
}

inline ObservabilityJacobian observability_jacobian(const WeightState& ws, const Eigen::Ref<const Matrix>& U) {
  const Matrix Z = pre_activations(ws, U);
  require_off_boundary(Z);
  return {output_jacobian(ws, U), input_block_matrix(U), chi(Z)};
}

// T_u (T_chi kron I_m), the factored form of the fixed-output Jacobian.
inline Matrix factored_jacobian(const ObservabilityJacobian& J, int m) {
  const Index N = J.T_chi.rows(), n = J.T_chi.cols();
  Eigen::SparseMatrix<double> K(N * m, n * m);
  std::vector<Eigen::Triplet<double>> t;
  for (Index i = 0; i < N; ++i)
    for (Index j = 0; j < n; ++j)
      if (J.T_chi(i, j) != 0.0)
        for (Index l = 0; l < m; ++l) t.emplace_back(i * m + l, j * m + l, J.T_chi(i, j));
  K.setFromTriplets(t.begin(), t.end());
  return Matrix(J.T_u * K);
}

struct NodeDependence {
  int node = 0;
  bool zero_output_weight = false;
  Vector coefficients;  // length state_dim, DH * coefficients = 0
  double residual = 0.0;
};

struct DeficiencyCertificate {
  std::vector<NodeDependence> nodes;
  RankDecision rank;
  int state_dim = 0;
  int dependencies = 0;  // nodes with an explicit null vector
  bool deficient = false;
};

// For every hidden node of a general network the columns of w1_j, b_j and
// w2_j are tied: DH_w1 * w1_j / w2_j + DH_b * b_j / w2_j = DH_w2.
inline DeficiencyCertificate multilayer_rank_deficiency(const WeightState& ws, const Eigen::Ref<const Matrix>& U) {
  const auto& a = ws.arch();
  if (a.variant != Variant::GeneralTwoLayer)
    throw InvalidArgument("multilayer_rank_deficiency needs a general two-layer network");
  const Matrix DH = output_jacobian(ws, U);
  const Matrix W1 = ws.W();
  const Vector b = ws.b(), w2 = ws.output_weights();
  const int m = a.m, n = a.n;

  DeficiencyCertificate cert;
  cert.state_dim = a.state_dim();
  for (int j = 0; j < n; ++j) {
    NodeDependence d;
    d.node = j;
    d.coefficients = Vector::Zero(a.state_dim());
    if (w2(j) == 0.0) {
      // The w1_j and b_j columns vanish, so any of them is a null direction.
      d.zero_output_weight = true;
      d.coefficients(j * m) = 1.0;
    } else {
      d.coefficients.segment(j * m, m) = W1.col(j) / w2(j);
      d.coefficients(m * n + j) = b(j) / w2(j);
      d.coefficients(m * n + n + j) = -1.0;
    }
    d.residual = (DH * d.coefficients).norm();
    ++cert.dependencies;
    cert.nodes.push_back(std::move(d));
  }
  cert.rank = numeric_rank(DH);
  cert.deficient = cert.rank.rank < cert.state_dim;
  return cert;
}

}  // namespace mhefnn
