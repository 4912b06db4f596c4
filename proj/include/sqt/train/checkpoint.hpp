#pragma once

#include "json.hpp"
#include "sqt/data/vocab.hpp"
#include "sqt/model/seq2seq.hpp"
#include "sqt/train/config.hpp"

#include <filesystem>
#include <optional>

namespace sqt::train {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const model::ModelConfig& c);
model::ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct CheckpointEntry {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  std::uint64_t offset = 0;
};

struct CheckpointManifest {
  int version = kCheckpointVersion;
  std::int64_t step = 0;
  model::ModelConfig model;
  TrainConfig train;
  std::vector<CheckpointEntry> entries;
  std::uint64_t total_bytes = 0;
  std::uint64_t checksum = 0;
  bool has_optimizer = false;
  std::int64_t optimizer_t = 0;
  nlohmann::json extra;
};

struct CheckpointContents {
  const model::Seq2Seq<float>* model = nullptr;
  const AdamState<float>* adam = nullptr;
  std::int64_t step = 0;
  TrainConfig train;
  const data::Vocab* src_vocab = nullptr;
  const data::Vocab* tgt_vocab = nullptr;
  nlohmann::json extra = nlohmann::json::object();
};

/// Writes manifest.json and weights.bin (little-endian float32, row-major,
/// manifest order). Every file is written to a temporary name and renamed.
void save_checkpoint(const std::filesystem::path& dir, const CheckpointContents& c);

struct LoadedCheckpoint {
  CheckpointManifest manifest;
  model::Seq2Seq<float> model;
  std::optional<AdamState<float>> adam;
  std::optional<data::Vocab> src_vocab;
  std::optional<data::Vocab> tgt_vocab;
};

CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& dir);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

/// FNV-1a over a byte range.
std::uint64_t fnv1a(const char* data, std::size_t n);

}  // namespace sqt::train
