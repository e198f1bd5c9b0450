#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mhefnn/errors.hpp"
#include "mhefnn/numlin.hpp"
#include "mhefnn/relu_net.hpp"
#include "mhefnn/rng.hpp"

namespace mhefnn {

class SignVector {
 public:
  SignVector() = default;
  explicit SignVector(std::vector<int> s) : s_(std::move(s)) {
    for (int e : s_)
      if (e != 1 && e != -1) throw InvalidArgument("sign vector entries must be +1 or -1");
  }

  // Strict signs of v; throws if an entry is within zero_tol of zero.
  static SignVector of(const Eigen::Ref<const Vector>& v, double zero_tol = 0.0) {
    std::vector<int> s(v.size());
    for (Index i = 0; i < v.size(); ++i) {
      if (std::abs(v(i)) <= zero_tol) throw InvalidArgument("vector has a zero entry, no open orthant");
      s[i] = v(i) > 0 ? 1 : -1;
    }
    return SignVector(std::move(s));
  }

  static SignVector parse(const std::string& str) {
    std::vector<int> s;
    for (char c : str) {
      if (c == '+') s.push_back(1);
      else if (c == '-') s.push_back(-1);
      else throw InvalidArgument("sign string may only contain '+' and '-'");
    }
    return SignVector(std::move(s));
  }

  int size() const { return int(s_.size()); }
  int operator[](int i) const { return s_[i]; }
  const std::vector<int>& entries() const { return s_; }

  RowVector as_row() const {
    RowVector r(size());
    for (int i = 0; i < size(); ++i) r(i) = s_[i];
    return r;
  }
  RowVector indicator() const { return chi(as_row()); }

  bool contains(const Eigen::Ref<const Vector>& v) const {
    if (v.size() != size()) return false;
    for (int i = 0; i < size(); ++i)
      if (!(s_[i] * v(i) > 0.0)) return false;
    return true;
  }

  std::string str() const {
    std::string out;
    for (int e : s_) out += e > 0 ? '+' : '-';
    return out;
  }

  bool operator==(const SignVector&) const = default;
  // Lexicographic with '+' ordered before '-'.
  std::strong_ordering operator<=>(const SignVector& o) const {
    const std::size_t k = std::min(s_.size(), o.s_.size());
    for (std::size_t i = 0; i < k; ++i)
      if (s_[i] != o.s_[i]) return s_[i] > o.s_[i] ? std::strong_ordering::less : std::strong_ordering::greater;
    return s_.size() <=> o.s_.size();
  }

 private:
  std::vector<int> s_;
};

struct SignMatrix {
  int n = 0;
  std::vector<SignVector> rows;
  std::vector<Vector> witnesses;  // witnesses[i] realizes rows[i]

  int size() const { return int(rows.size()); }
  Matrix as_matrix() const {
    Matrix S(rows.size(), n);
    for (std::size_t i = 0; i < rows.size(); ++i) S.row(i) = rows[i].as_row();
    return S;
  }
  Matrix indicator() const { return chi(as_matrix()); }
};

struct ElementaryVectorSet {
  int n = 0;
  std::vector<Vector> vectors;  // first nonzero entry is +1, ordered by support

  int size() const { return int(vectors.size()); }
  Matrix as_rows() const {
    Matrix E(vectors.size(), n);
    for (std::size_t i = 0; i < vectors.size(); ++i) E.row(i) = vectors[i].transpose();
    return E;
  }
};

struct ObservabilityCertificate {
  bool observable = false;
  int rank = 0;  // rank of chi(S)
  SignMatrix sign_matrix;
};

struct ConeOptions {
  double step_fraction = 0.5;  // of the distance to the orthant boundary
  Rng* rng = nullptr;          // randomizes the interior point and the simplex orientation
};

inline constexpr double kElementaryZeroTol = 1e-9;
inline constexpr double kInteriorMargin = 1e-6;

namespace detail {

using Mask = std::uint64_t;

struct SignedSupport {
  Mask pos = 0, neg = 0;
};

inline SignedSupport signed_support(const Vector& v) {
  SignedSupport s;
  for (Index i = 0; i < v.size(); ++i) {
    if (v(i) > 0) s.pos |= Mask(1) << i;
    if (v(i) < 0) s.neg |= Mask(1) << i;
  }
  return s;
}

inline std::vector<int> support_list(Mask m) {
  std::vector<int> out;
  for (int i = 0; m; ++i, m >>= 1)
    if (m & 1) out.push_back(i);
  return out;
}

// Visits every k-subset of {0..n-1} in lexicographic order.
template <typename F>
void for_each_subset(int n, int k, F&& f) {
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  if (k > n) return;
  while (true) {
    f(idx);
    int i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) return;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

// Elementary vectors of the row space of an orthonormal basis B (r x n).
// Every elementary vector vanishes on r-1 independent coordinates, so it is
// the unique subspace direction orthogonal to those coordinate axes.
inline ElementaryVectorSet elementary_from_basis(const Matrix& B) {
  const int r = int(B.rows()), n = int(B.cols());
  if (n > 62) throw UnsupportedShape("orthant geometry supports at most 62 coordinates");
  std::map<Mask, Vector> found;
  for_each_subset(n, r - 1, [&](const std::vector<int>& I) {
    Vector y;
    if (r == 1) {
      y = Vector::Ones(1);
    } else {
      Matrix M(r, r - 1);
      for (int c = 0; c < r - 1; ++c) M.col(c) = B.col(I[c]);
      Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeFullU);
      const Vector& sv = svd.singularValues();
      if (sv(r - 2) <= 1e-10 * std::max(1.0, sv(0))) return;  // columns dependent
      y = svd.matrixU().col(r - 1);
    }
    Vector v = B.transpose() * y;
    const double vmax = v.cwiseAbs().maxCoeff();
    if (vmax == 0.0) return;
    for (Index i = 0; i < v.size(); ++i)
      if (std::abs(v(i)) <= kElementaryZeroTol * vmax) v(i) = 0.0;
    Index first = 0;
    while (v(first) == 0.0) ++first;
    v /= v(first);
    const SignedSupport s = signed_support(v);
    found.emplace(s.pos | s.neg, std::move(v));
  });
  std::vector<std::pair<std::vector<int>, Vector>> ordered;
  for (auto& [mask, v] : found) ordered.emplace_back(support_list(mask), std::move(v));
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  ElementaryVectorSet out;
  out.n = n;
  for (auto& p : ordered) out.vectors.push_back(std::move(p.second));
  return out;
}

inline bool conformal(const SignedSupport& e, Mask pos, Mask neg) { return (e.pos & ~pos) == 0 && (e.neg & ~neg) == 0; }

}  // namespace detail

inline ElementaryVectorSet elementary_vectors(const Eigen::Ref<const Matrix>& V) {
  require_finite(V, "elementary_vectors");
  const Matrix B = row_space_basis(V);
  if (B.rows() == 0) throw InvalidArgument("elementary_vectors: subspace is zero");
  return detail::elementary_from_basis(B);
}

// Orthant geometry of R(W), or of the affine set R(W1) + b through the
// homogenized subspace R([W1 0; b^T 1]) restricted to a positive last entry.
// An open orthant meets a subspace iff the elementary vectors conformal to
// it cover every coordinate; their sum is then an interior witness.
class SubspaceGeometry {
 public:
  explicit SubspaceGeometry(const Eigen::Ref<const Matrix>& W) : n_(int(W.cols())), affine_(false) {
    require_nonempty(W, "SubspaceGeometry");
    require_finite(W, "SubspaceGeometry");
    reject_zero_columns(W);
    init(W);
  }

  SubspaceGeometry(const Eigen::Ref<const Matrix>& W1, const Eigen::Ref<const Vector>& b)
      : n_(int(W1.cols())), affine_(true) {
    require_nonempty(W1, "SubspaceGeometry");
    if (b.size() != W1.cols()) throw DimensionMismatch("bias length must equal the number of columns of W1");
    Matrix Wh = Matrix::Zero(W1.rows() + 1, W1.cols() + 1);
    Wh.topLeftCorner(W1.rows(), W1.cols()) = W1;
    Wh.bottomLeftCorner(1, W1.cols()) = b.transpose();
    Wh(W1.rows(), W1.cols()) = 1.0;
    require_finite(Wh, "SubspaceGeometry");
    reject_zero_columns(Wh.leftCols(n_));
    init(Wh);
  }

  int n() const { return n_; }
  bool affine() const { return affine_; }
  // Dimension of the (homogenized) subspace.
  int rank() const { return int(basis_.rows()); }
  const Matrix& basis() const { return basis_; }
  const ElementaryVectorSet& elementary() const { return elem_; }

  const SignMatrix& sign_matrix() const {
    if (!topes_) topes_ = std::make_shared<SignMatrix>(enumerate());
    return *topes_;
  }

  bool intersects(const SignVector& s) const {
    if (s.size() != n_) throw DimensionMismatch("sign vector length does not match the subspace");
    detail::Mask pos, neg;
    to_masks(s, pos, neg);
    return covered(pos, neg);
  }

  // A point of the subspace (affine set) strictly inside O_s.
  Vector interior_point(const SignVector& s, Rng* rng = nullptr) const {
    Vector v = homogeneous_interior(s, rng);
    if (affine_) return v.head(n_) / v(n_);
    return v;
  }

  // rank() linearly independent vectors inside O_s (affinely independent
  // points for an affine set), spread around an interior point along the
  // vertices of a regular simplex.
  Matrix cone_basis(const SignVector& s, const ConeOptions& opt = {}) const {
    if (!(opt.step_fraction > 0.0 && opt.step_fraction < 1.0))
      throw InvalidArgument("cone_basis: step_fraction must lie in (0, 1)");
    const Vector v = homogeneous_interior(s, opt.rng);
    const int r = rank();
    const int na = int(v.size());
    std::vector<int> sh = s.entries();
    if (affine_) sh.push_back(1);

    Matrix C(r, na);
    if (r == 1) {
      C.row(0) = v.transpose();
    } else {
      // Orthonormal basis of the subspace inside the complement of v.
      const Vector vh = v.normalized();
      Matrix Bp = basis_ - (basis_ * vh) * vh.transpose();
      Matrix D = row_space_basis(Bp);
      if (D.rows() != r - 1) throw ConstructionFailed("cone_basis: degenerate complement basis");
      // Rows of Q are the centred vertices of a regular simplex in R^{r-1}.
      Matrix Q = null_space_basis(RowVector::Ones(r));
      if (opt.rng) Q = Q * random_orthogonal(r - 1, *opt.rng);
      const Matrix G = Q * D;
      for (int i = 0; i < r; ++i) {
        double tau = std::numeric_limits<double>::infinity();
        for (int j = 0; j < na; ++j)
          if (sh[j] * G(i, j) < 0) tau = std::min(tau, std::abs(v(j)) / std::abs(G(i, j)));
        const double step = std::isfinite(tau) ? opt.step_fraction * tau : v.norm() / G.row(i).norm();
        C.row(i) = v.transpose() + step * G.row(i);
      }
    }

    Matrix out(r, n_);
    for (int i = 0; i < r; ++i) {
      Vector c = C.row(i).transpose();
      if (affine_) c = Vector(c.head(n_) / c(n_));
      if (!s.contains(c) || c.cwiseAbs().minCoeff() < kInteriorMargin * c.cwiseAbs().maxCoeff())
        throw ConstructionFailed("cone_basis: vector " + std::to_string(i) + " misses the interior margin of " +
                                 s.str());
      out.row(i) = c.transpose();
    }
    return out;
  }

 private:
  void init(const Matrix& W) {
    basis_ = row_space_basis(W);
    if (basis_.rows() == 0) throw InvalidArgument("subspace is zero");
    elem_ = detail::elementary_from_basis(basis_);
    for (const auto& e : elem_.vectors) supports_.push_back(detail::signed_support(e));
  }

  static void reject_zero_columns(const Eigen::Ref<const Matrix>& W) {
    for (Index j = 0; j < W.cols(); ++j)
      if (W.col(j).cwiseAbs().maxCoeff() == 0.0) throw ZeroColumn("column " + std::to_string(j) + " is zero");
  }

  static Matrix random_orthogonal(int k, Rng& rng) {
    Eigen::HouseholderQR<Matrix> qr(rng.normal_matrix(k, k));
    return qr.householderQ() * Matrix::Identity(k, k);
  }

  int ambient() const { return n_ + (affine_ ? 1 : 0); }
  detail::Mask full_mask() const { return (detail::Mask(1) << ambient()) - 1; }

  void to_masks(const SignVector& s, detail::Mask& pos, detail::Mask& neg) const {
    pos = neg = 0;
    for (int i = 0; i < n_; ++i) (s[i] > 0 ? pos : neg) |= detail::Mask(1) << i;
    if (affine_) pos |= detail::Mask(1) << n_;
  }

  // Union of supports of elementary vectors conformal to (pos, neg), either orientation.
  detail::Mask cover(detail::Mask pos, detail::Mask neg) const {
    detail::Mask u = 0;
    for (const auto& e : supports_)
      if (detail::conformal(e, pos, neg) || detail::conformal({e.neg, e.pos}, pos, neg)) u |= e.pos | e.neg;
    return u;
  }
  bool covered(detail::Mask pos, detail::Mask neg) const { return cover(pos, neg) == full_mask(); }

  Vector homogeneous_interior(const SignVector& s, Rng* rng) const {
    if (s.size() != n_) throw DimensionMismatch("sign vector length does not match the subspace");
    detail::Mask pos, neg;
    to_masks(s, pos, neg);
    Vector v = Vector::Zero(ambient());
    detail::Mask u = 0;
    for (std::size_t k = 0; k < supports_.size(); ++k) {
      const auto& e = supports_[k];
      double sign = 0.0;
      if (detail::conformal(e, pos, neg)) sign = 1.0;
      else if (detail::conformal({e.neg, e.pos}, pos, neg)) sign = -1.0;
      if (sign == 0.0) continue;
      const Vector& ev = elem_.vectors[k];
      const double w = rng ? rng->uniform(0.5, 1.5) : 1.0;
      v += (sign * w / ev.cwiseAbs().maxCoeff()) * ev;
      u |= e.pos | e.neg;
    }
    if (u != full_mask()) throw EmptyIntersection("orthant " + s.str() + " does not meet the subspace");
    return v / v.cwiseAbs().maxCoeff();
  }

  SignMatrix enumerate() const {
    const int na = ambient();
    SignMatrix S;
    S.n = n_;
    std::vector<detail::Mask> found;

    // Depth-first over coordinates. A coordinate that no elementary vector
    // conformal to the partial pattern can reach prunes the branch.
    std::vector<int> sign(na, 0);
    auto viable = [&](int depth, detail::Mask pos, detail::Mask neg) {
      const detail::Mask assigned = (detail::Mask(1) << depth) - 1;
      detail::Mask u = 0;
      for (const auto& e : supports_) {
        const detail::SignedSupport r{e.pos & assigned, e.neg & assigned};
        if (detail::conformal(r, pos, neg) || detail::conformal({r.neg, r.pos}, pos, neg)) u |= e.pos | e.neg;
      }
      return (u & assigned) == assigned;
    };
    auto rec = [&](auto&& self, int depth, detail::Mask pos, detail::Mask neg) -> void {
      if (!viable(depth, pos, neg)) return;
      if (depth == na) {
        if (covered(pos, neg)) found.push_back(pos);
        return;
      }
      const detail::Mask bit = detail::Mask(1) << depth;
      if (affine_ && depth == n_) {
        self(self, depth + 1, pos | bit, neg);
        return;
      }
      self(self, depth + 1, pos | bit, neg);
      self(self, depth + 1, pos, neg | bit);
    };
    rec(rec, 0, 0, 0);

    if (na <= 16) {
      // Exhaustive pass over every orthant as a check on the pruning.
      std::vector<detail::Mask> all;
      const detail::Mask full = full_mask();
      for (detail::Mask pos = 0; pos <= full; ++pos) {
        if (affine_ && !(pos >> n_ & 1)) continue;
        if (covered(pos, full & ~pos)) all.push_back(pos);
      }
      std::vector<detail::Mask> a = found, b = all;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      if (a != b) throw ConstructionFailed("sign pattern enumeration disagrees with the exhaustive pass");
    }

    for (detail::Mask pos : found) {
      std::vector<int> s(n_);
      for (int i = 0; i < n_; ++i) s[i] = (pos >> i & 1) ? 1 : -1;
      S.rows.emplace_back(std::move(s));
    }
    std::sort(S.rows.begin(), S.rows.end());
    for (const auto& s : S.rows) {
      Vector w = interior_point(s);
      if (!s.contains(w)) throw ConstructionFailed("witness for " + s.str() + " has the wrong signs");
      S.witnesses.push_back(std::move(w));
    }
    return S;
  }

  int n_;
  bool affine_;
  Matrix basis_;
  ElementaryVectorSet elem_;
  std::vector<detail::SignedSupport> supports_;
  mutable std::shared_ptr<SignMatrix> topes_;
};

inline SubspaceGeometry make_geometry(const Eigen::Ref<const Matrix>& W, const std::optional<Vector>& b) {
  return b ? SubspaceGeometry(W, *b) : SubspaceGeometry(W);
}

inline SignMatrix sign_matrix(const Eigen::Ref<const Matrix>& W, const std::optional<Vector>& b = std::nullopt) {
  return make_geometry(W, b).sign_matrix();
}

inline ObservabilityCertificate certificate_from(const SubspaceGeometry& g) {
  ObservabilityCertificate c;
  c.sign_matrix = g.sign_matrix();
  c.rank = numeric_rank(c.sign_matrix.indicator()).rank;
  c.observable = c.rank == g.n();
  return c;
}

inline void require_full_row_rank(const Eigen::Ref<const Matrix>& W) {
  const int r = numeric_rank(W).rank;
  if (r != W.rows())
    throw RankDeficientW("W has rank " + std::to_string(r) + " but " + std::to_string(W.rows()) + " rows");
}

inline ObservabilityCertificate observability_certificate(const Eigen::Ref<const Matrix>& W,
                                                          const std::optional<Vector>& b = std::nullopt) {
  require_nonempty(W, "observability_certificate");
  const SubspaceGeometry g = make_geometry(W, b);  // rejects zero columns first
  require_full_row_rank(W);
  return certificate_from(g);
}

inline Matrix cone_basis(const Eigen::Ref<const Matrix>& W, const SignVector& s,
                         const std::optional<Vector>& b = std::nullopt, const ConeOptions& opt = {}) {
  return make_geometry(W, b).cone_basis(s, opt);
}

}  // namespace mhefnn
