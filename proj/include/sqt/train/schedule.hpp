#pragma once

#include <cstdint>

namespace sqt::train {

/// Linear warmup to base_lr at `warmup`, then inverse square-root decay.
/// warmup 0 gives a constant rate.
double lr_schedule(std::int64_t step, std::int64_t warmup, double base_lr);

}  // namespace sqt::train
