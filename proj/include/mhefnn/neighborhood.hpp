#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "mhefnn/errors.hpp"
#include "mhefnn/numlin.hpp"
#include "mhefnn/pe_design.hpp"
#include "mhefnn/relu_net.hpp"

namespace mhefnn {

inline constexpr double kDefaultMembershipMargin = 1e-9;

// Weights that keep every pre-activation of U on the anchor's side of the
// kink, i.e. K = (Z' - Z0) / Z0 > -1 entrywise. All members share the
// anchor's Jacobian, and the set is convex.
class ObservableNeighborhood {
 public:
  ObservableNeighborhood(WeightState anchor, Matrix U, double margin = kDefaultMembershipMargin)
      : anchor_(std::move(anchor)), U_(std::move(U)), margin_(margin) {
    if (!(margin_ > 0.0 && margin_ < 1.0)) throw InvalidArgument("neighborhood margin must lie in (0, 1)");
    if (anchor_.arch().variant == Variant::GeneralTwoLayer)
      throw UnsupportedShape("general two-layer networks have no locally observable neighborhood");
    Z0_ = pre_activations(anchor_, U_);
    jac_ = observability_jacobian(anchor_, U_);  // rejects boundary activations
    const RankDecision d = numeric_rank(jac_.DH);
    if (d.rank != anchor_.arch().state_dim())
      throw CertificateFailed("input is not persistently exciting at the anchor (rank " + std::to_string(d.rank) +
                              " of " + std::to_string(anchor_.arch().state_dim()) + ")");
    ref_signs_ = Z0_.array().sign().matrix();
  }

  const WeightState& anchor() const { return anchor_; }
  const Matrix& inputs() const { return U_; }
  const Matrix& reference_signs() const { return ref_signs_; }
  const Matrix& anchor_pre_activations() const { return Z0_; }
  const ObservabilityJacobian& jacobian() const { return jac_; }
  double margin() const { return margin_; }

  Matrix k_matrix(const WeightState& w) const {
    check_arch(w);
    return ((pre_activations(w, U_) - Z0_).array() / Z0_.array()).matrix();
  }

  // Fixed-output shorthand on the weight matrix.
  Matrix k_matrix(const Eigen::Ref<const Matrix>& W) const {
    return k_matrix(anchor_.arch().has_bias() ? WeightState::with_bias(W, anchor_.b()) : WeightState::fixed_output(W));
  }

  bool contains(const WeightState& w) const { return (k_matrix(w).array() > -1.0 + margin_).all(); }

  // Farthest member on [from, to], by bisection on the step.
  WeightState retract(const WeightState& from, const WeightState& to) const {
    check_arch(to);
    if (!contains(from)) throw InfeasibleStart("retract: starting point is outside the neighborhood");
    if (contains(to)) return to;
    const Vector d = to.vec() - from.vec();
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 40; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (contains(from.with_vec(from.vec() + mid * d))) lo = mid;
      else hi = mid;
    }
    return from.with_vec(from.vec() + lo * d);
  }

  // Any weight perturbation of Euclidean norm below this stays a member.
  // |u~_i^T delta_j| <= |u~_i| |delta| must stay below (1 - margin)|Z0_ij|.
  double safe_radius() const {
    double r = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < U_.rows(); ++i) {
      double un = U_.row(i).squaredNorm();
      if (anchor_.arch().has_bias()) un += 1.0;
      un = std::sqrt(un);
      if (un == 0.0) continue;
      r = std::min(r, (1.0 - margin_) * Z0_.row(i).cwiseAbs().minCoeff() / un);
    }
    return r;
  }

 private:
  void check_arch(const WeightState& w) const {
    if (!(w.arch() == anchor_.arch())) throw DimensionMismatch("weights do not match the neighborhood architecture");
  }

  WeightState anchor_;
  Matrix U_;
  double margin_;
  Matrix Z0_;
  Matrix ref_signs_;
  ObservabilityJacobian jac_;
};

}  // namespace mhefnn
