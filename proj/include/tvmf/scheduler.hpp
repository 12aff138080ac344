#pragma once

#include <cstddef>
#include <vector>

namespace tvmf {

/// Per-class concentration schedule driven by validation Dice scores.
///
/// kappa_c for the next epoch is lambda times the latest validation DSC of
/// class c; before the first validation every kappa is zero.
class KappaSchedule {
 public:
  struct Entry {
    std::vector<double> dsc;
    std::vector<double> kappas;
  };

  KappaSchedule(std::size_t num_classes, double lambda);

  double lambda() const noexcept { return lambda_; }
  std::size_t num_classes() const noexcept { return kappas_.size(); }
  const std::vector<double>& kappas() const noexcept { return kappas_; }
  const std::vector<Entry>& history() const noexcept { return history_; }

  /// Replaces every kappa with lambda * dsc and appends to the history.
  void update_from_validation(const std::vector<double>& dsc_per_class);

  double kappa_for_class(std::size_t class_index) const;

 private:
  double lambda_;
  std::vector<double> kappas_;
  std::vector<Entry> history_;
};

KappaSchedule init_schedule(std::size_t num_classes, double lambda);

}  // namespace tvmf
