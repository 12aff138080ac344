#pragma once

#include <cmath>
#include <string>

#include <Eigen/Core>

#include "tvmf/errors.hpp"

namespace tvmf {

/// Tolerance for floating-point overshoot of a cosine outside [0, 1].
inline constexpr double kCosineDomainSlack = 1e-9;

struct SimilarityParams {
  double kappa = 0.0;
  double gamma = 1.0;
};

/// Snaps a cosine within kCosineDomainSlack of [0, 1] back into the interval.
/// Anything further out (or NaN) is a DomainError.
template <typename Scalar>
Scalar clamp_cosine(Scalar cos_theta) {
  const Scalar lo = Scalar(-kCosineDomainSlack);
  const Scalar hi = Scalar(1) + Scalar(kCosineDomainSlack);
  if (!(cos_theta >= lo && cos_theta <= hi)) {
    throw DomainError("cosine " + std::to_string(static_cast<double>(cos_theta)) +
                      " outside [0, 1]");
  }
  if (cos_theta < Scalar(0)) return Scalar(0);
  if (cos_theta > Scalar(1)) return Scalar(1);
  return cos_theta;
}

namespace detail {
template <typename Scalar>
void require_kappa(Scalar kappa) {
  if (!(kappa >= Scalar(0))) {
    throw DomainError("kappa must be >= 0, got " + std::to_string(static_cast<double>(kappa)));
  }
}
}  // namespace detail

/// Smoothed cosine between two nonnegative vectors:
///   (a.b + gamma) / (|a| |b| + gamma)
/// With gamma > 0 an empty prediction against an empty target scores 1.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b,
                                            typename DerivedA::Scalar gamma) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) {
    throw DimensionError("cosine_similarity: length mismatch " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  }
  if (a.size() == 0) throw DimensionError("cosine_similarity: empty vectors");
  if (!(gamma >= Scalar(0))) throw DomainError("cosine_similarity: gamma must be >= 0");
  const Scalar dot = a.cwiseProduct(b).sum();
  const Scalar den = a.norm() * b.norm() + gamma;
  if (den == Scalar(0)) {
    throw DegenerateInputError("cosine_similarity: zero-norm input with gamma = 0");
  }
  return (dot + gamma) / den;
}

/// t-vMF similarity phi(c; kappa) = (1 + c) / (1 + kappa (1 - c)) - 1.
///
/// Evaluated as (c - u) / (1 + u) with u = kappa (1 - c), which is the same
/// rational function but returns c exactly at kappa = 0 and 1 exactly at c = 1.
template <typename Scalar>
Scalar t_vmf_similarity(Scalar cos_theta, Scalar kappa) {
  detail::require_kappa(kappa);
  const Scalar c = clamp_cosine(cos_theta);
  const Scalar u = kappa * (Scalar(1) - c);
  return (c - u) / (Scalar(1) + u);
}

/// d phi / d cos_theta = (1 + 2 kappa) / (1 + kappa (1 - c))^2.
template <typename Scalar>
Scalar t_vmf_similarity_derivative(Scalar cos_theta, Scalar kappa) {
  detail::require_kappa(kappa);
  const Scalar c = clamp_cosine(cos_theta);
  const Scalar den = Scalar(1) + kappa * (Scalar(1) - c);
  return (Scalar(1) + Scalar(2) * kappa) / (den * den);
}

/// Cosine value together with its gradient with respect to the first argument.
template <typename Scalar>
struct CosineTerms {
  Scalar value;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> grad_a;
};

/// Same quantity as cosine_similarity, plus d cos / d a. Where |a| = 0 the
/// norm's subgradient is taken as zero.
template <typename DerivedA, typename DerivedB>
CosineTerms<typename DerivedA::Scalar> cosine_with_gradient(const Eigen::MatrixBase<DerivedA>& a,
                                                            const Eigen::MatrixBase<DerivedB>& b,
                                                            typename DerivedA::Scalar gamma) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar value = cosine_similarity(a, b, gamma);
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  const Scalar den = na * nb + gamma;
  const Scalar dot = a.cwiseProduct(b).sum();
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Vec av = a;
  const Vec bv = b;
  CosineTerms<Scalar> out{value, bv / den};
  if (na > Scalar(0)) out.grad_a -= ((dot + gamma) * nb / (den * den * na)) * av;
  return out;
}

}  // namespace tvmf
