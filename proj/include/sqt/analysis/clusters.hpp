#pragma once

#include "sqt/analysis/attention_metrics.hpp"
#include "sqt/data/vocab.hpp"
#include "sqt/model/seq2seq.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>

namespace sqt::analysis {

/// Unordered pairs of distinct sentences with identical source code
/// sequences; indices refer to `sentences`, which holds no duplicates.
struct PairSet {
  std::vector<std::vector<int>> sentences;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

using CodeFunction = std::function<std::vector<int>(std::span<const int>)>;

/// `max_pairs` > 0 keeps a seeded uniform subsample of that size.
PairSet find_code_equal_pairs(const std::vector<std::vector<int>>& sentences, const CodeFunction& codes_of,
                              std::size_t max_pairs = 0, std::uint64_t seed = 0);
PairSet find_code_equal_pairs(const std::vector<std::vector<int>>& sentences, const model::Seq2Seq<float>& model,
                              std::size_t max_pairs = 0, std::uint64_t seed = 0);

struct PairStats {
  std::size_t pairs = 0;
  double mean_kl = 0;
  double mean_kl_symmetric = 0;
  double agreement = 0;
  double max_kl = 0;
  Index underflow_rows = 0;
  Index rows = 0;
};

PairStats pair_statistics(const model::Seq2Seq<float>& model, const PairSet& set);

/// Pair file: `sentenceA TAB sentenceB`, space-separated tokens.
void write_pair_file(const std::filesystem::path& path, const PairSet& set, const data::Vocab& vocab);
PairSet read_pair_file(const std::filesystem::path& path, const data::Vocab& vocab);

using TagMap = std::map<std::string, std::string>;

/// Syntactic tags for SCAN source tokens: verb, direction, adverb,
/// preposition, conjunction.
TagMap scan_reference_tags(const data::Vocab& src_vocab);
/// Tag file: `token TAB tag` per line.
TagMap read_tag_file(const std::filesystem::path& path);

struct ClusterReport {
  Index codes = 0;
  std::vector<std::string> tokens;
  std::vector<int> assignment;
  std::optional<double> purity;

  std::vector<std::vector<std::string>> groups() const;
  int code_of(const std::string& token) const;
  /// Aligned plain-text grouping.
  std::string text() const;
  /// `token TAB code` rows.
  std::string tsv() const;
};

/// Majority-tag purity: per code, the count of its most frequent tag,
/// summed and divided by the number of tagged tokens.
double cluster_purity(const std::vector<std::string>& tokens, const std::vector<int>& assignment, const TagMap& tags);

ClusterReport cluster_report(const std::vector<std::string>& tokens, const std::vector<int>& assignment, Index codes,
                             const TagMap* tags = nullptr);
/// Source-vocabulary clustering of a model; specials excluded.
ClusterReport cluster_report(const model::Seq2Seq<float>& model, const data::Vocab& src_vocab,
                             const TagMap* tags = nullptr);

enum class Side { source, target };

/// TSV rows `token TAB code TAB v_1 ... v_D` with 9 significant digits,
/// specials excluded.
void export_embeddings(const model::Seq2Seq<float>& model, const data::Vocab& vocab, Side side,
                       const std::filesystem::path& path);

struct EmbeddingRow {
  std::string token;
  int code = 0;
  std::vector<double> values;
};

std::vector<EmbeddingRow> read_embeddings(const std::filesystem::path& path);

}  // namespace sqt::analysis
