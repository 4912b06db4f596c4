#pragma once

#include "json.hpp"
#include "sqt/model/config.hpp"
#include "sqt/train/trainer.hpp"

#include <string>
#include <vector>

namespace sqt::cli {

/// Everything a run needs, read from one flat JSON object. Unknown keys
/// are rejected; a single `seed` drives model init, batching and dropout.
struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  train::DecodeOptions decode;
  std::uint64_t seed = 1;
  std::string data_dir;
  std::string out_dir;
  /// Test examples decoded after training; 0 means all.
  std::size_t test_limit = 0;

  RunConfig();

  /// Overlays the keys present in `j` on the current values.
  void merge(const nlohmann::json& j);
  /// Sets one key from its command-line text form.
  void set(const std::string& key, const std::string& value);
  nlohmann::json to_json() const;
  /// Copies the shared seed into the model and training configs.
  void sync_seed();

  static const std::vector<std::string>& keys();
};

RunConfig load_run_config(const std::string& path);

}  // namespace sqt::cli
