#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "mhefnn/errors.hpp"

namespace mhefnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Eigen::Index;

struct RankDecision {
  int rank = 0;
  Vector singular_values;  // descending
  double tolerance_used = 0.0;
};

struct SubspaceProjectors {
  Matrix observable;    // onto the row space
  Matrix unobservable;  // onto the null space
};

inline void require_finite(const Eigen::Ref<const Matrix>& A, const char* what) {
  if (!A.allFinite()) throw InvalidArgument(std::string(what) + ": non-finite entry");
}

inline void require_nonempty(const Eigen::Ref<const Matrix>& A, const char* what) {
  if (A.rows() == 0 || A.cols() == 0) throw InvalidArgument(std::string(what) + ": empty matrix");
}

namespace detail {

// Jacobi is the accurate choice for the small matrices this library lives on;
// divide and conquer takes over when it starts to matter.
template <int Options>
struct Svd {
  explicit Svd(const Eigen::Ref<const Matrix>& A) {
    if (std::min(A.rows(), A.cols()) <= 64) {
      Eigen::JacobiSVD<Matrix> s(A, Options);
      sv = s.singularValues();
      if constexpr ((Options & (Eigen::ComputeThinU | Eigen::ComputeFullU)) != 0) U = s.matrixU();
      if constexpr ((Options & (Eigen::ComputeThinV | Eigen::ComputeFullV)) != 0) V = s.matrixV();
    } else {
      Eigen::BDCSVD<Matrix> s(A, Options);
      sv = s.singularValues();
      if constexpr ((Options & (Eigen::ComputeThinU | Eigen::ComputeFullU)) != 0) U = s.matrixU();
      if constexpr ((Options & (Eigen::ComputeThinV | Eigen::ComputeFullV)) != 0) V = s.matrixV();
    }
  }
  Vector sv;
  Matrix U, V;
};

inline int count_above(const Vector& sv, double rel_tol, double* tol_out = nullptr) {
  const double smax = sv.size() ? sv(0) : 0.0;
  const double tol = smax > 0.0 ? rel_tol * smax : rel_tol;
  if (tol_out) *tol_out = tol;
  int r = 0;
  while (r < sv.size() && sv(r) > tol) ++r;
  return r;
}

}  // namespace detail

inline double default_rank_tolerance(const Eigen::Ref<const Matrix>& A) {
  return 1e-10 * static_cast<double>(std::max<Index>({A.rows(), A.cols(), 1}));
}

inline RankDecision numeric_rank(const Eigen::Ref<const Matrix>& A, double rel_tol) {
  if (!(rel_tol > 0.0 && rel_tol < 1.0)) throw InvalidArgument("numeric_rank: rel_tol must lie in (0, 1)");
  require_finite(A, "numeric_rank");
  RankDecision d;
  if (A.size() == 0) {
    d.tolerance_used = rel_tol;
    return d;
  }
  d.singular_values = detail::Svd<0>(A).sv;
  d.rank = detail::count_above(d.singular_values, rel_tol, &d.tolerance_used);
  return d;
}

inline RankDecision numeric_rank(const Eigen::Ref<const Matrix>& A) {
  return numeric_rank(A, default_rank_tolerance(A));
}

inline Matrix pinv(const Eigen::Ref<const Matrix>& A) {
  require_nonempty(A, "pinv");
  require_finite(A, "pinv");
  detail::Svd<Eigen::ComputeThinU | Eigen::ComputeThinV> s(A);
  const int r = detail::count_above(s.sv, default_rank_tolerance(A));
  if (r == 0) return Matrix::Zero(A.cols(), A.rows());
  const Vector inv = s.sv.head(r).cwiseInverse();
  return s.V.leftCols(r) * inv.asDiagonal() * s.U.leftCols(r).transpose();
}

// Pseudoinverse of [A_prev; a] from that of A_prev. The branch on c follows
// Greville; the zero branch uses A_prev^+ d^T so that the shapes agree.
inline Matrix greville_append(const Eigen::Ref<const Matrix>& pinv_prev, const Eigen::Ref<const Matrix>& A_prev,
                              const Eigen::Ref<const RowVector>& a) {
  const Index n = a.size();
  const Index k = A_prev.rows();
  if (A_prev.cols() != n && k > 0) throw DimensionMismatch("greville_append: row width differs from A_prev");
  if (k > 0 && (pinv_prev.rows() != n || pinv_prev.cols() != k))
    throw DimensionMismatch("greville_append: pinv_prev has the wrong shape");
  require_finite(a, "greville_append");

  if (k == 0) {
    const double nn = a.squaredNorm();
    if (nn == 0.0) return Matrix::Zero(n, 1);
    return a.transpose() / nn;
  }

  const RowVector d = a * pinv_prev;  // 1 x k
  const RowVector c = a - d * A_prev;
  Vector b;
  if (c.norm() > 1e-12 * (1.0 + a.norm())) {
    b = c.transpose() / c.squaredNorm();
  } else {
    b = pinv_prev * d.transpose() / (1.0 + d.squaredNorm());
  }
  Matrix out(n, k + 1);
  out.leftCols(k) = pinv_prev - b * d;
  out.col(k) = b;
  return out;
}

inline Matrix greville_pinv(const Eigen::Ref<const Matrix>& A) {
  require_nonempty(A, "greville_pinv");
  Matrix P(A.cols(), 0);
  for (Index i = 0; i < A.rows(); ++i) P = greville_append(P, A.topRows(i), A.row(i));
  return P;
}

// Orthonormal basis of the row space, one basis vector per row.
inline Matrix row_space_basis(const Eigen::Ref<const Matrix>& A) {
  require_finite(A, "row_space_basis");
  if (A.size() == 0) return Matrix(0, A.cols());
  detail::Svd<Eigen::ComputeThinV> s(A);
  const int r = detail::count_above(s.sv, default_rank_tolerance(A));
  return s.V.leftCols(r).transpose();
}

// Orthonormal basis of the null space, one basis vector per column.
inline Matrix null_space_basis(const Eigen::Ref<const Matrix>& A) {
  require_finite(A, "null_space_basis");
  const Index n = A.cols();
  if (A.rows() == 0) return Matrix::Identity(n, n);
  detail::Svd<Eigen::ComputeFullV> s(A);
  const int r = detail::count_above(s.sv, default_rank_tolerance(A));
  return s.V.rightCols(n - r);
}

inline SubspaceProjectors subspace_projectors(const Eigen::Ref<const Matrix>& H) {
  require_nonempty(H, "subspace_projectors");
  const Matrix B = row_space_basis(H);
  Matrix Po = B.transpose() * B;
  Po = 0.5 * (Po + Po.transpose()).eval();
  const Index n = H.cols();
  return {Po, Matrix::Identity(n, n) - Po};
}

}  // namespace mhefnn
