#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace tvmf {

using LabelMap = std::vector<std::uint8_t>;

/// Per-class overlap counts, additive across images.
struct DscCounts {
  std::vector<std::int64_t> intersection;
  std::vector<std::int64_t> predicted;
  std::vector<std::int64_t> ground_truth;

  explicit DscCounts(std::size_t num_classes = 0)
      : intersection(num_classes, 0), predicted(num_classes, 0), ground_truth(num_classes, 0) {}

  void accumulate(std::span<const std::uint8_t> pred_mask, std::span<const std::uint8_t> gt_mask);
  DscCounts& operator+=(const DscCounts& other);
  std::size_t num_classes() const noexcept { return intersection.size(); }
};

struct MetricsReport {
  std::vector<double> per_class_dsc;
  double mean_dsc = 0.0;
  double foreground_mean_dsc = 0.0;
  std::vector<std::int64_t> pixel_counts;  // ground-truth pixels per class

  bool operator==(const MetricsReport&) const = default;
};

/// Argmax over classes for every pixel; ties go to the lowest class index.
LabelMap hard_masks(const Eigen::Ref<const Eigen::MatrixXd>& pred);

/// DSC_c = (2 |P_c & G_c| + gamma) / (|P_c| + |G_c| + gamma).
std::vector<double> dsc_per_class(std::span<const std::uint8_t> pred_mask,
                                  std::span<const std::uint8_t> gt_mask, std::size_t num_classes,
                                  double gamma = 1.0);

std::vector<double> dsc_from_counts(const DscCounts& counts, double gamma = 1.0);

MetricsReport report_from_counts(const DscCounts& counts, double gamma = 1.0);

/// Hard-mask DSC report for a soft prediction against a one-hot target.
MetricsReport build_report(const Eigen::Ref<const Eigen::MatrixXd>& pred,
                           const Eigen::Ref<const Eigen::MatrixXd>& gt, double gamma = 1.0);

}  // namespace tvmf
