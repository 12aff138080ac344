#pragma once

#include <random>
#include <vector>

#include <Eigen/Core>

namespace tvmf::testing {

// Softmax of Gaussian logits: a valid soft prediction, C x N.
inline Eigen::MatrixXd random_prediction(std::mt19937_64& rng, int classes, int pixels, double spread = 1.5) {
  std::normal_distribution<double> logit(0.0, spread);
  Eigen::MatrixXd p(classes, pixels);
  for (int n = 0; n < pixels; ++n) {
    for (int c = 0; c < classes; ++c) p(c, n) = std::exp(logit(rng));
    p.col(n) /= p.col(n).sum();
  }
  return p;
}

inline std::vector<std::uint8_t> random_labels(std::mt19937_64& rng, int classes, int pixels) {
  std::uniform_int_distribution<int> pick(0, classes - 1);
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(pixels));
  for (auto& l : labels) l = static_cast<std::uint8_t>(pick(rng));
  return labels;
}

inline Eigen::MatrixXd random_onehot(std::mt19937_64& rng, int classes, int pixels) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(classes, pixels);
  const auto labels = random_labels(rng, classes, pixels);
  for (int n = 0; n < pixels; ++n) t(labels[static_cast<std::size_t>(n)], n) = 1.0;
  return t;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace tvmf::testing
