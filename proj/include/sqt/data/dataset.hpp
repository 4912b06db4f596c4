#pragma once

#include "sqt/data/scan.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sqt::data {

using Dataset = std::vector<Example>;

struct Splits {
  Dataset train;
  Dataset dev;
  Dataset test;
};

struct GenerationOptions {
  /// Upper bound on distinct composed training commands; larger command
  /// spaces are subsampled uniformly.
  std::size_t max_train = 200000;
  /// Dev examples held out from the composed training commands.
  std::size_t dev_size = 1000;
};

/// AddJump with primitive augmentation: training covers every command over
/// the non-jump primitives plus each primitive's atomic form repeated
/// `n_atomic` times; 'jump' appears only atomically. Test is every composed
/// command that contains 'jump'.
Splits gen_addjump(int n_aug, int n_atomic, std::uint64_t seed, const GenerationOptions& options = {});

/// AroundRight: training excludes every command containing "around right";
/// test is exactly those commands.
Splits gen_aroundright(std::uint64_t seed, const GenerationOptions& options = {});

/// UTF-8 TSV: source TAB target, tokens separated by single spaces.
void write_tsv(const std::string& path, const Dataset& data);
Dataset read_tsv(const std::string& path);

struct Manifest {
  std::string task;
  int n_aug = 0;
  int n_atomic = 0;
  std::uint64_t seed = 0;
  std::size_t train = 0;
  std::size_t dev = 0;
  std::size_t test = 0;
};

/// Writes train.tsv, dev.tsv, test.tsv and meta.json under `dir`.
void write_splits(const std::string& dir, const Splits& splits, const Manifest& manifest);
Splits read_splits(const std::string& dir);
Manifest read_manifest(const std::string& dir);

bool contains_token(const Tokens& tokens, const std::string& token);
bool contains_bigram(const Tokens& tokens, const std::string& first, const std::string& second);

}  // namespace sqt::data
