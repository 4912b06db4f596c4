#pragma once

#include "sqt/train/adam.hpp"

#include <cstdint>

namespace sqt::train {

struct TrainConfig {
  double lr = 5e-4;
  std::int64_t warmup_steps = 4000;
  std::int64_t total_steps = 20000;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;
  AdamConfig adam;
  double clip_norm = 1.0;
  std::int64_t eval_every = 1000;
  /// Dev examples decoded per evaluation; 0 means all.
  std::size_t dev_limit = 500;
  /// Save a checkpoint of the current state at every evaluation.
  bool checkpoint_every_eval = true;

  void validate() const {
    if (!(lr > 0)) throw std::invalid_argument("lr must be > 0");
    if (warmup_steps < 0) throw std::invalid_argument("warmup_steps must be >= 0");
    if (total_steps < 0) throw std::invalid_argument("total_steps must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (eval_every < 0) throw std::invalid_argument("eval_every must be >= 0");
    adam.validate();
  }
};

}  // namespace sqt::train
