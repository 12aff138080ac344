#include "tvmf/scheduler.hpp"

#include <string>

#include "tvmf/errors.hpp"

namespace tvmf {

KappaSchedule::KappaSchedule(std::size_t num_classes, double lambda)
    : lambda_(lambda), kappas_(num_classes, 0.0) {
  if (num_classes < 2) throw ConfigError("kappa schedule needs at least 2 classes");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
}

void KappaSchedule::update_from_validation(const std::vector<double>& dsc_per_class) {
  if (dsc_per_class.size() != kappas_.size()) {
    throw ConfigError("expected " + std::to_string(kappas_.size()) + " class scores, got " +
                      std::to_string(dsc_per_class.size()));
  }
  for (std::size_t c = 0; c < dsc_per_class.size(); ++c) {
    const double d = dsc_per_class[c];
    if (!(d >= 0.0 && d <= 1.0)) {
      throw DomainError("validation DSC of class " + std::to_string(c) + " outside [0, 1]");
    }
  }
  for (std::size_t c = 0; c < dsc_per_class.size(); ++c) kappas_[c] = lambda_ * dsc_per_class[c];
  history_.push_back({dsc_per_class, kappas_});
}

double KappaSchedule::kappa_for_class(std::size_t class_index) const {
  if (class_index >= kappas_.size()) {
    throw ConfigError("class index " + std::to_string(class_index) + " out of range");
  }
  return kappas_[class_index];
}

KappaSchedule init_schedule(std::size_t num_classes, double lambda) {
  return KappaSchedule(num_classes, lambda);
}

}  // namespace tvmf
