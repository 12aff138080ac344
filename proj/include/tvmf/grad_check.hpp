#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "tvmf/errors.hpp"

namespace tvmf {

struct GradCheckReport {
  double max_rel_error = 0.0;
  Eigen::Index worst_class = 0;
  Eigen::Index worst_pixel = 0;
  double tolerance = 0.0;
  bool passed = true;
};

inline constexpr double kDefaultAbsFloor = 1e-8;

/// Central-difference gradient of a scalar function of a grid, in double precision.
///
/// The perturbed grid is handed to loss_fn as-is; nothing re-normalizes the
/// columns, so this checks the unconstrained gradient.
template <typename LossFn>
Eigen::MatrixXd finite_difference_gradient(LossFn&& loss_fn, const Eigen::MatrixXd& x, double step) {
  if (!(step > 0.0)) throw DomainError("finite_difference_gradient: step must be > 0");
  Eigen::MatrixXd probe = x;
  Eigen::MatrixXd grad(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double original = probe(i, j);
      probe(i, j) = original + step;
      const double up = static_cast<double>(loss_fn(static_cast<const Eigen::MatrixXd&>(probe)));
      probe(i, j) = original - step;
      const double down = static_cast<double>(loss_fn(static_cast<const Eigen::MatrixXd&>(probe)));
      probe(i, j) = original;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericalError("finite_difference_gradient: non-finite loss at (" + std::to_string(i) +
                             ", " + std::to_string(j) + ")");
      }
      grad(i, j) = (up - down) / (2.0 * step);
    }
  }
  return grad;
}

/// Per-coordinate error |a - n| / max(|a|, |n|, abs_floor); reports the worst one.
template <typename DA, typename DN>
GradCheckReport assert_gradients_match(const Eigen::MatrixBase<DA>& analytic,
                                       const Eigen::MatrixBase<DN>& numeric, double rel_tol,
                                       double abs_floor = kDefaultAbsFloor) {
  if (analytic.rows() != numeric.rows() || analytic.cols() != numeric.cols()) {
    throw DimensionError("assert_gradients_match: shape mismatch");
  }
  if (!(rel_tol > 0.0) || !(abs_floor >= 0.0)) {
    throw DomainError("assert_gradients_match: need rel_tol > 0 and abs_floor >= 0");
  }
  GradCheckReport report;
  report.tolerance = rel_tol;
  for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
    for (Eigen::Index i = 0; i < analytic.rows(); ++i) {
      const double a = static_cast<double>(analytic(i, j));
      const double n = static_cast<double>(numeric(i, j));
      const double scale = std::max({std::abs(a), std::abs(n), abs_floor});
      double err = scale > 0.0 ? std::abs(a - n) / scale : std::abs(a - n);
      if (std::isnan(err)) err = INFINITY;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_class = i;
        report.worst_pixel = j;
      }
    }
  }
  report.passed = report.max_rel_error <= rel_tol;
  return report;
}

}  // namespace tvmf
