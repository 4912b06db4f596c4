#include "sqt/train/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sqt::train {

double lr_schedule(std::int64_t step, std::int64_t warmup, double base_lr) {
  if (step < 1) throw std::invalid_argument("lr_schedule: step must be >= 1");
  if (warmup < 1) return base_lr;
  const double s = static_cast<double>(step), w = static_cast<double>(warmup);
  return base_lr * std::min(s / w, std::sqrt(w / s));
}

}  // namespace sqt::train
