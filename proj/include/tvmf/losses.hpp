#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tvmf/errors.hpp"
#include "tvmf/similarity.hpp"

namespace tvmf {

/// Class-by-pixel grid: row c holds class c flattened over every pixel of the batch.
template <typename Scalar>
using Volume = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct LossResult {
  Scalar value{0};
  Vector<Scalar> per_class;
  Volume<Scalar> grad;  // d value / d pred, same shape as pred
};

/// Checks a soft prediction: C >= 2, N >= 1, entries in [0, 1], columns summing to 1.
template <typename Derived>
void validate_prediction(const Eigen::MatrixBase<Derived>& pred, double tol = 1e-6) {
  if (pred.rows() < 2 || pred.cols() < 1) {
    throw DimensionError("prediction volume needs >= 2 classes and >= 1 pixel");
  }
  for (Eigen::Index n = 0; n < pred.cols(); ++n) {
    const double s = static_cast<double>(pred.col(n).sum());
    if (!(std::abs(s - 1.0) <= tol)) {
      throw DomainError("prediction column " + std::to_string(n) + " sums to " + std::to_string(s));
    }
    for (Eigen::Index c = 0; c < pred.rows(); ++c) {
      const double v = static_cast<double>(pred(c, n));
      if (!(v >= 0.0 && v <= 1.0)) {
        throw DomainError("prediction entry outside [0, 1] at pixel " + std::to_string(n));
      }
    }
  }
}

/// Checks a one-hot target: exactly one 1 per column, all other entries 0.
template <typename Derived>
void validate_target(const Eigen::MatrixBase<Derived>& target) {
  using Scalar = typename Derived::Scalar;
  for (Eigen::Index n = 0; n < target.cols(); ++n) {
    int ones = 0;
    for (Eigen::Index c = 0; c < target.rows(); ++c) {
      const Scalar v = target(c, n);
      if (v == Scalar(1)) {
        ++ones;
      } else if (v != Scalar(0)) {
        throw DomainError("target entry not in {0, 1} at pixel " + std::to_string(n));
      }
    }
    if (ones != 1) throw DomainError("target pixel " + std::to_string(n) + " is not one-hot");
  }
}

namespace detail {

template <typename DP, typename DT>
void require_same_shape(const Eigen::MatrixBase<DP>& pred, const Eigen::MatrixBase<DT>& target,
                        const char* who) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw DimensionError(std::string(who) + ": prediction is " + std::to_string(pred.rows()) + "x" +
                         std::to_string(pred.cols()) + ", target is " +
                         std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
  }
  if (pred.rows() < 1 || pred.cols() < 1) throw DimensionError(std::string(who) + ": empty volume");
}

template <typename Scalar>
void require_gamma(Scalar gamma) {
  if (!(gamma >= Scalar(0))) throw DomainError("gamma must be >= 0");
}

template <typename Scalar>
LossResult<Scalar> make_result(Eigen::Index classes, Eigen::Index pixels) {
  LossResult<Scalar> r;
  r.per_class = Vector<Scalar>::Zero(classes);
  r.grad = Volume<Scalar>::Zero(classes, pixels);
  return r;
}

}  // namespace detail

/// Soft Dice loss with squared denominators, averaged over classes:
///   1 - (2 sum(AB) + gamma) / (sum(A^2) + sum(B^2) + gamma)
template <typename DP, typename DT>
LossResult<typename DP::Scalar> dice_loss(const Eigen::MatrixBase<DP>& pred,
                                          const Eigen::MatrixBase<DT>& target,
                                          typename DP::Scalar gamma = 1) {
  using Scalar = typename DP::Scalar;
  detail::require_same_shape(pred, target, "dice_loss");
  detail::require_gamma(gamma);
  const Eigen::Index classes = pred.rows();
  auto r = detail::make_result<Scalar>(classes, pred.cols());
  for (Eigen::Index c = 0; c < classes; ++c) {
    const auto a = pred.row(c);
    const auto b = target.row(c).template cast<Scalar>();
    const Scalar inter = a.cwiseProduct(b).sum();
    const Scalar den = a.squaredNorm() + b.squaredNorm() + gamma;
    if (den == Scalar(0)) throw DegenerateInputError("dice_loss: empty class with gamma = 0");
    const Scalar num = Scalar(2) * inter + gamma;
    r.per_class(c) = Scalar(1) - num / den;
    r.grad.row(c) = -(Scalar(2) * den * b - Scalar(2) * num * a) / (den * den * Scalar(classes));
  }
  r.value = r.per_class.mean();
  return r;
}

/// 1 - cos(theta) per class, using the smoothed cosine of cosine_similarity.
template <typename DP, typename DT>
LossResult<typename DP::Scalar> normalized_dice_loss(const Eigen::MatrixBase<DP>& pred,
                                                     const Eigen::MatrixBase<DT>& target,
                                                     typename DP::Scalar gamma = 1) {
  using Scalar = typename DP::Scalar;
  detail::require_same_shape(pred, target, "normalized_dice_loss");
  detail::require_gamma(gamma);
  const Eigen::Index classes = pred.rows();
  auto r = detail::make_result<Scalar>(classes, pred.cols());
  for (Eigen::Index c = 0; c < classes; ++c) {
    const auto cos = cosine_with_gradient(pred.row(c), target.row(c).template cast<Scalar>(), gamma);
    r.per_class(c) = Scalar(1) - cos.value;
    r.grad.row(c) = -cos.grad_a.transpose() / Scalar(classes);
  }
  r.value = r.per_class.mean();
  return r;
}

/// Squared t-vMF Dice loss, one concentration per class:
///   (1 - phi(cos theta_c; kappa_c))^2 averaged over classes.
template <typename DP, typename DT>
LossResult<typename DP::Scalar> t_vmf_dice_loss(const Eigen::MatrixBase<DP>& pred,
                                                const Eigen::MatrixBase<DT>& target,
                                                const std::vector<typename DP::Scalar>& kappas,
                                                typename DP::Scalar gamma = 1) {
  using Scalar = typename DP::Scalar;
  detail::require_same_shape(pred, target, "t_vmf_dice_loss");
  detail::require_gamma(gamma);
  const Eigen::Index classes = pred.rows();
  if (static_cast<Eigen::Index>(kappas.size()) != classes) {
    throw ConfigError("t_vmf_dice_loss: " + std::to_string(kappas.size()) + " kappas for " +
                      std::to_string(classes) + " classes");
  }
  auto r = detail::make_result<Scalar>(classes, pred.cols());
  for (Eigen::Index c = 0; c < classes; ++c) {
    const Scalar kappa = kappas[static_cast<std::size_t>(c)];
    const auto cos = cosine_with_gradient(pred.row(c), target.row(c).template cast<Scalar>(), gamma);
    const Scalar residual = Scalar(1) - t_vmf_similarity(cos.value, kappa);
    r.per_class(c) = residual * residual;
    const Scalar scale =
        -Scalar(2) * residual * t_vmf_similarity_derivative(cos.value, kappa) / Scalar(classes);
    r.grad.row(c) = scale * cos.grad_a.transpose();
  }
  r.value = r.per_class.mean();
  return r;
}

/// Generalized Dice loss with inverse-squared-volume class weights
/// w_c = 1 / (sum B_c)^2; classes absent from the target get weight 0.
///
/// The loss does not decompose over classes, so every per_class entry holds
/// the overall value.
template <typename DP, typename DT>
LossResult<typename DP::Scalar> generalized_dice_loss(const Eigen::MatrixBase<DP>& pred,
                                                      const Eigen::MatrixBase<DT>& target,
                                                      typename DP::Scalar gamma = 1) {
  using Scalar = typename DP::Scalar;
  detail::require_same_shape(pred, target, "generalized_dice_loss");
  detail::require_gamma(gamma);
  const Eigen::Index classes = pred.rows();
  auto r = detail::make_result<Scalar>(classes, pred.cols());

  Vector<Scalar> weights(classes);
  Scalar num = gamma;
  Scalar den = gamma;
  for (Eigen::Index c = 0; c < classes; ++c) {
    const auto b = target.row(c).template cast<Scalar>();
    const Scalar volume = b.sum();
    weights(c) = volume > Scalar(0) ? Scalar(1) / (volume * volume) : Scalar(0);
    num += Scalar(2) * weights(c) * pred.row(c).cwiseProduct(b).sum();
    den += weights(c) * (pred.row(c).sum() + volume);
  }
  if (den == Scalar(0)) throw DegenerateInputError("generalized_dice_loss: zero denominator");

  r.value = Scalar(1) - num / den;
  r.per_class.setConstant(r.value);
  for (Eigen::Index c = 0; c < classes; ++c) {
    const auto b = target.row(c).template cast<Scalar>();
    r.grad.row(c) = -weights(c) * (Scalar(2) * den * b.array() - num).matrix() / (den * den);
  }
  return r;
}

struct TverskyParams {
  double alpha = 0.7;
  double beta = 0.3;
  double focal_gamma = 4.0 / 3.0;
};

/// Focal Tversky loss: (1 - TI_c)^(1 / focal_gamma) averaged over classes, with
///   TI = (TP + gamma) / (TP + alpha FN + beta FP + gamma).
/// At TI = 1 the gradient is taken as zero (the power is not differentiable there
/// for focal_gamma > 1).
template <typename DP, typename DT>
LossResult<typename DP::Scalar> focal_tversky_loss(const Eigen::MatrixBase<DP>& pred,
                                                   const Eigen::MatrixBase<DT>& target,
                                                   const TverskyParams& params = {},
                                                   typename DP::Scalar gamma = 1) {
  using Scalar = typename DP::Scalar;
  detail::require_same_shape(pred, target, "focal_tversky_loss");
  detail::require_gamma(gamma);
  if (!(params.alpha >= 0 && params.alpha <= 1 && params.beta >= 0 && params.beta <= 1)) {
    throw ConfigError("focal_tversky_loss: alpha and beta must lie in [0, 1]");
  }
  if (!(params.focal_gamma > 0)) throw ConfigError("focal_tversky_loss: focal_gamma must be > 0");
  const Scalar alpha = Scalar(params.alpha);
  const Scalar beta = Scalar(params.beta);
  const Scalar power = Scalar(1) / Scalar(params.focal_gamma);

  const Eigen::Index classes = pred.rows();
  auto r = detail::make_result<Scalar>(classes, pred.cols());
  for (Eigen::Index c = 0; c < classes; ++c) {
    const auto a = pred.row(c).array();
    const auto b = target.row(c).template cast<Scalar>().array();
    const Scalar tp = (a * b).sum();
    const Scalar fn = (b * (Scalar(1) - a)).sum();
    const Scalar fp = (a * (Scalar(1) - b)).sum();
    const Scalar num = tp + gamma;
    const Scalar den = tp + alpha * fn + beta * fp + gamma;
    if (den == Scalar(0)) throw DegenerateInputError("focal_tversky_loss: empty class with gamma = 0");
    const Scalar gap = std::max(Scalar(0), Scalar(1) - num / den);
    r.per_class(c) = std::pow(gap, power);
    if (gap > Scalar(0)) {
      // d den / d a_n = b_n (1 - alpha) + beta (1 - b_n)
      const auto d_den = b * (Scalar(1) - alpha) + beta * (Scalar(1) - b);
      const auto d_ti = (b * den - num * d_den) / (den * den);
      const Scalar outer = -power * std::pow(gap, power - Scalar(1)) / Scalar(classes);
      r.grad.row(c) = (outer * d_ti).matrix();
    }
  }
  r.value = r.per_class.mean();
  return r;
}

}  // namespace tvmf
