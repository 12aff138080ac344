#include "tvmf/metrics.hpp"

#include <numeric>
#include <string>

#include "tvmf/errors.hpp"

namespace tvmf {

void DscCounts::accumulate(std::span<const std::uint8_t> pred_mask,
                           std::span<const std::uint8_t> gt_mask) {
  if (pred_mask.size() != gt_mask.size()) {
    throw DimensionError("mask size mismatch: " + std::to_string(pred_mask.size()) + " vs " +
                         std::to_string(gt_mask.size()));
  }
  const std::size_t classes = num_classes();
  for (std::size_t i = 0; i < pred_mask.size(); ++i) {
    const std::size_t p = pred_mask[i];
    const std::size_t g = gt_mask[i];
    if (p >= classes || g >= classes) {
      throw DataError("mask label out of range at pixel " + std::to_string(i));
    }
    ++predicted[p];
    ++ground_truth[g];
    if (p == g) ++intersection[p];
  }
}

DscCounts& DscCounts::operator+=(const DscCounts& other) {
  if (other.num_classes() != num_classes()) throw DimensionError("class count mismatch");
  for (std::size_t c = 0; c < num_classes(); ++c) {
    intersection[c] += other.intersection[c];
    predicted[c] += other.predicted[c];
    ground_truth[c] += other.ground_truth[c];
  }
  return *this;
}

LabelMap hard_masks(const Eigen::Ref<const Eigen::MatrixXd>& pred) {
  LabelMap mask(static_cast<std::size_t>(pred.cols()));
  for (Eigen::Index n = 0; n < pred.cols(); ++n) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < pred.rows(); ++c) {
      if (pred(c, n) > pred(best, n)) best = c;
    }
    mask[static_cast<std::size_t>(n)] = static_cast<std::uint8_t>(best);
  }
  return mask;
}

std::vector<double> dsc_from_counts(const DscCounts& counts, double gamma) {
  if (!(gamma >= 0.0)) throw DomainError("gamma must be >= 0");
  std::vector<double> dsc(counts.num_classes());
  for (std::size_t c = 0; c < dsc.size(); ++c) {
    const double num = 2.0 * static_cast<double>(counts.intersection[c]) + gamma;
    const double den =
        static_cast<double>(counts.predicted[c]) + static_cast<double>(counts.ground_truth[c]) + gamma;
    // empty vs empty with gamma = 0: perfect agreement
    dsc[c] = den > 0.0 ? num / den : 1.0;
  }
  return dsc;
}

std::vector<double> dsc_per_class(std::span<const std::uint8_t> pred_mask,
                                  std::span<const std::uint8_t> gt_mask, std::size_t num_classes,
                                  double gamma) {
  DscCounts counts(num_classes);
  counts.accumulate(pred_mask, gt_mask);
  return dsc_from_counts(counts, gamma);
}

MetricsReport report_from_counts(const DscCounts& counts, double gamma) {
  if (counts.num_classes() < 2) throw DimensionError("report needs at least 2 classes");
  MetricsReport report;
  report.per_class_dsc = dsc_from_counts(counts, gamma);
  report.pixel_counts = counts.ground_truth;
  const auto& d = report.per_class_dsc;
  report.mean_dsc = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
  report.foreground_mean_dsc =
      std::accumulate(d.begin() + 1, d.end(), 0.0) / static_cast<double>(d.size() - 1);
  return report;
}

MetricsReport build_report(const Eigen::Ref<const Eigen::MatrixXd>& pred,
                           const Eigen::Ref<const Eigen::MatrixXd>& gt, double gamma) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) {
    throw DimensionError("build_report: prediction and target shapes differ");
  }
  DscCounts counts(static_cast<std::size_t>(pred.rows()));
  counts.accumulate(hard_masks(pred), hard_masks(gt));
  return report_from_counts(counts, gamma);
}

}  // namespace tvmf
