#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mhefnn/errors.hpp"
#include "mhefnn/numlin.hpp"
#include "mhefnn/orthant_geo.hpp"
#include "mhefnn/relu_net.hpp"
#include "mhefnn/rng.hpp"

namespace mhefnn {

struct PeCheck {
  bool pe = false;
  int rank = 0;
  double sigma_min = 0.0;  // smallest singular value counted in the rank
};

struct ExcitationPlan {
  Matrix U;                          // N x m
  std::vector<Matrix> blocks;        // U_k
  Matrix C;                          // stacked targets U W (+ 1 b^T)
  Matrix T;                          // n x n binary, row k = chi(s_k)
  std::vector<SignVector> orthants;  // s_k
  bool certified = false;
  PeCheck check;
};

struct DesignOptions {
  double step_fraction = 0.5;
  // Rescale each cone vector so its smallest entry has magnitude one. Keeps
  // the activation margin of every input at least one.
  bool unit_margin = true;
  // Visit sign-matrix rows by decreasing witness margin instead of in
  // lexicographic order when picking T.
  bool widest_first = false;
  Rng* rng = nullptr;
};

inline PeCheck verify_pe(const Eigen::Ref<const Matrix>& U, const WeightState& ws) {
  const ObservabilityJacobian J = observability_jacobian(ws, U);
  const RankDecision d = numeric_rank(J.DH);
  PeCheck c;
  c.rank = d.rank;
  c.sigma_min = d.rank > 0 ? d.singular_values(d.rank - 1) : 0.0;
  c.pe = d.rank == ws.arch().state_dim();
  return c;
}

// min |w| / max |w| of the witness of each row.
inline std::vector<double> witness_margins(const SignMatrix& S) {
  std::vector<double> out;
  for (const auto& w : S.witnesses) out.push_back(w.cwiseAbs().minCoeff() / w.cwiseAbs().maxCoeff());
  return out;
}

// Greedy pick of sign-matrix rows with linearly independent indicators, in
// sign-matrix order or by decreasing witness margin.
inline std::vector<int> select_orthants(const SignMatrix& S, int count, bool widest_first = false) {
  std::vector<int> order(S.size());
  for (int i = 0; i < S.size(); ++i) order[i] = i;
  if (widest_first) {
    const std::vector<double> mg = witness_margins(S);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return mg[a] > mg[b]; });
  }
  std::vector<int> chosen;
  Matrix T(0, S.n);
  for (int i : order) {
    if (int(chosen.size()) == count) break;
    const RowVector t = S.rows[i].indicator();
    if (t.isZero()) continue;
    Matrix Tn(T.rows() + 1, S.n);
    Tn << T, t;
    if (numeric_rank(Tn).rank == Tn.rows()) {
      T = std::move(Tn);
      chosen.push_back(i);
    }
  }
  return chosen;
}

namespace detail {

inline void reject_wide(Index m, Index n) {
  if (m > n)
    throw UnsupportedShape("input design needs m <= n, got m = " + std::to_string(m) + ", n = " +
                           std::to_string(n));
}

inline void finish_plan(ExcitationPlan& p, const WeightState& ws) {
  p.U.resize(0, ws.arch().m);
  for (const auto& B : p.blocks) {
    Matrix next(p.U.rows() + B.rows(), p.U.cols());
    next << p.U, B;
    p.U = std::move(next);
  }
  const Matrix Z = pre_activations(ws, p.U);
  if ((Z - p.C).norm() > 1e-9 * std::max(1.0, p.C.norm()))
    throw ConstructionFailed("designed inputs do not reproduce the cone vectors");
  p.check = verify_pe(p.U, ws);
  if (!p.check.pe)
    throw ConstructionFailed("designed input reaches rank " + std::to_string(p.check.rank) + " of " +
                             std::to_string(ws.arch().state_dim()));
  p.certified = true;
}

}  // namespace detail

inline ExcitationPlan design_pe_input(const Eigen::Ref<const Matrix>& W, const DesignOptions& opt = {}) {
  require_nonempty(W, "design_pe_input");
  const Index m = W.rows(), n = W.cols();
  detail::reject_wide(m, n);
  const SubspaceGeometry g(W);
  require_full_row_rank(W);
  const ObservabilityCertificate cert = certificate_from(g);
  if (!cert.observable)
    throw CertificateFailed("indicator rank " + std::to_string(cert.rank) + " < " + std::to_string(n) +
                            ": weights are not locally observable");

  const std::vector<int> idx = select_orthants(cert.sign_matrix, int(n), opt.widest_first);
  const Matrix Wp = pinv(W);
  ExcitationPlan p;
  p.T.resize(n, n);
  p.C.resize(m * n, n);
  for (Index k = 0; k < n; ++k) {
    const SignVector& s = cert.sign_matrix.rows[idx[k]];
    Matrix Ck = g.cone_basis(s, {opt.step_fraction, opt.rng});
    if (opt.unit_margin)
      for (Index i = 0; i < Ck.rows(); ++i) Ck.row(i) /= Ck.row(i).cwiseAbs().minCoeff();
    p.orthants.push_back(s);
    p.T.row(k) = s.indicator();
    p.C.middleRows(k * m, m) = Ck;
    p.blocks.push_back(Ck * Wp);
  }
  detail::finish_plan(p, WeightState::fixed_output(W));
  return p;
}

// Inputs for the bias network: cone points of the affine set R(W1) + b,
// pulled back through U_k = (C_k - 1 b^T) W1^+.
inline ExcitationPlan design_pe_input_bias(const Eigen::Ref<const Matrix>& W1, const Eigen::Ref<const Vector>& b,
                                           const DesignOptions& opt = {}) {
  require_nonempty(W1, "design_pe_input_bias");
  const Index m = W1.rows(), n = W1.cols();
  detail::reject_wide(m, n);
  const SubspaceGeometry g(W1, b);
  require_full_row_rank(W1);
  const ObservabilityCertificate cert = certificate_from(g);
  if (!cert.observable)
    throw CertificateFailed("indicator rank " + std::to_string(cert.rank) + " < " + std::to_string(n) +
                            ": weights are not locally observable");

  const std::vector<int> idx = select_orthants(cert.sign_matrix, int(n), opt.widest_first);
  const Matrix Wp = pinv(W1);
  ExcitationPlan p;
  p.T.resize(n, n);
  p.C.resize((m + 1) * n, n);
  for (Index k = 0; k < n; ++k) {
    const SignVector& s = cert.sign_matrix.rows[idx[k]];
    const Matrix Ck = g.cone_basis(s, {opt.step_fraction, opt.rng});
    p.orthants.push_back(s);
    p.T.row(k) = s.indicator();
    p.C.middleRows(k * (m + 1), m + 1) = Ck;
    p.blocks.push_back((Ck.rowwise() - b.transpose()) * Wp);
  }
  detail::finish_plan(p, WeightState::with_bias(W1, b));
  return p;
}

// Residual of C_k (b^T - b^T W1^+ W1)^+ = 1 over all blocks. Only meaningful
// when [W1; b^T] has full row rank; otherwise returns NaN.
inline double bias_condition_residual(const ExcitationPlan& p, const Eigen::Ref<const Matrix>& W1,
                                      const Eigen::Ref<const Vector>& b) {
  Matrix S(W1.rows() + 1, W1.cols());
  S << W1, b.transpose();
  if (numeric_rank(S).rank != S.rows()) return std::numeric_limits<double>::quiet_NaN();
  const RowVector r = b.transpose() - b.transpose() * pinv(W1) * W1;
  const Vector alpha = pinv(r);
  const Index m1 = W1.rows() + 1;
  double worst = 0.0;
  for (Index k = 0; k * m1 < p.C.rows(); ++k) {
    const Vector e = p.C.middleRows(k * m1, m1) * alpha - Vector::Ones(m1);
    worst = std::max(worst, e.cwiseAbs().maxCoeff());
  }
  return worst;
}

// Concatenates independently randomized designs and keeps the first N rows.
inline Matrix extend_design(const std::function<ExcitationPlan(const DesignOptions&)>& design, int N, Rng& rng,
                            DesignOptions opt = {}) {
  if (N < 1) throw InvalidArgument("extend_design: N must be positive");
  opt.rng = &rng;
  Matrix U;
  while (U.rows() < N) {
    const ExcitationPlan p = design(opt);
    Matrix next(U.rows() + p.U.rows(), p.U.cols());
    if (U.rows() > 0) next << U, p.U;
    else next = p.U;
    U = std::move(next);
  }
  return U.topRows(N);
}

inline Matrix extend_pe_input(const Eigen::Ref<const Matrix>& W, int N, Rng& rng, const DesignOptions& opt = {}) {
  const Matrix Wc = W;
  return extend_design([&](const DesignOptions& o) { return design_pe_input(Wc, o); }, N, rng, opt);
}

inline Matrix extend_pe_input_bias(const Eigen::Ref<const Matrix>& W1, const Eigen::Ref<const Vector>& b, int N,
                                   Rng& rng, const DesignOptions& opt = {}) {
  const Matrix Wc = W1;
  const Vector bc = b;
  return extend_design([&](const DesignOptions& o) { return design_pe_input_bias(Wc, bc, o); }, N, rng, opt);
}

}  // namespace mhefnn
