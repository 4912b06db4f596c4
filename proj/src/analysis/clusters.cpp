#include "sqt/analysis/clusters.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

namespace sqt::analysis {

namespace fs = std::filesystem;

PairSet find_code_equal_pairs(const std::vector<std::vector<int>>& sentences, const CodeFunction& codes_of,
                              std::size_t max_pairs, std::uint64_t seed) {
  PairSet out;
  std::set<std::vector<int>> seen;
  for (const auto& s : sentences) {
    if (seen.insert(s).second) out.sentences.push_back(s);
  }
  std::map<std::vector<int>, std::vector<std::size_t>> by_codes;
  for (std::size_t i = 0; i < out.sentences.size(); ++i) by_codes[codes_of(out.sentences[i])].push_back(i);
  for (const auto& [codes, members] : by_codes) {
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) out.pairs.emplace_back(members[a], members[b]);
    }
  }
  if (max_pairs > 0 && out.pairs.size() > max_pairs) {
    std::mt19937_64 rng(seed);
    std::shuffle(out.pairs.begin(), out.pairs.end(), rng);
    out.pairs.resize(max_pairs);
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  return out;
}

PairSet find_code_equal_pairs(const std::vector<std::vector<int>>& sentences, const model::Seq2Seq<float>& model,
                              std::size_t max_pairs, std::uint64_t seed) {
  return find_code_equal_pairs(
      sentences, [&model](std::span<const int> ids) { return model.source_codes(ids); }, max_pairs, seed);
}

PairStats pair_statistics(const model::Seq2Seq<float>& model, const PairSet& set) {
  PairStats s;
  std::map<std::size_t, model::AttentionTrace> traces;
  auto trace_of = [&](std::size_t i) -> const model::AttentionTrace& {
    auto it = traces.find(i);
    if (it == traces.end()) it = traces.emplace(i, model.trace(set.sentences[i])).first;
    return it->second;
  };
  for (const auto& [a, b] : set.pairs) {
    const auto& ta = trace_of(a);
    const auto& tb = trace_of(b);
    KlResult kl = attention_kl(ta, tb);
    s.mean_kl += kl.mean;
    s.max_kl = std::max(s.max_kl, kl.mean);
    s.mean_kl_symmetric += attention_kl(ta, tb, true).mean;
    s.agreement += argmax_agreement(ta, tb);
    s.underflow_rows += kl.underflow_rows;
    s.rows += kl.rows;
    ++s.pairs;
  }
  if (s.pairs > 0) {
    const double n = static_cast<double>(s.pairs);
    s.mean_kl /= n;
    s.mean_kl_symmetric /= n;
    s.agreement /= n;
  }
  return s;
}

void write_pair_file(const fs::path& path, const PairSet& set, const data::Vocab& vocab) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& [a, b] : set.pairs) {
    out << data::detokenize(vocab.decode(set.sentences[a])) << '\t' << data::detokenize(vocab.decode(set.sentences[b]))
        << '\n';
  }
}

PairSet read_pair_file(const fs::path& path, const data::Vocab& vocab) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  PairSet set;
  std::map<std::vector<int>, std::size_t> index;
  auto intern = [&](const std::vector<int>& s) {
    auto [it, fresh] = index.emplace(s, set.sentences.size());
    if (fresh) set.sentences.push_back(s);
    return it->second;
  };
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected two tab-separated sentences");
    }
    auto a = vocab.encode(data::tokenize(line.substr(0, tab)));
    auto b = vocab.encode(data::tokenize(line.substr(tab + 1)));
    if (a.size() != b.size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": sentences differ in length");
    }
    std::size_t ia = intern(a), ib = intern(b);
    if (ia == ib) continue;
    set.pairs.emplace_back(std::min(ia, ib), std::max(ia, ib));
  }
  std::sort(set.pairs.begin(), set.pairs.end());
  set.pairs.erase(std::unique(set.pairs.begin(), set.pairs.end()), set.pairs.end());
  return set;
}

TagMap scan_reference_tags(const data::Vocab& src_vocab) {
  static const std::map<std::string, std::string> fixed = {
      {"turn", "verb"},        {"left", "direction"},     {"right", "direction"},  {"twice", "adverb"},
      {"thrice", "adverb"},    {"around", "preposition"}, {"opposite", "preposition"},
      {"and", "conjunction"},  {"after", "conjunction"}};
  TagMap tags;
  for (int id = data::Vocab::kNumSpecials; id < src_vocab.size(); ++id) {
    const std::string& t = src_vocab.token(id);
    auto it = fixed.find(t);
    if (it != fixed.end()) {
      tags[t] = it->second;
    } else {
      tags[t] = "verb";
    }
  }
  return tags;
}

TagMap read_tag_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  TagMap tags;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error("tag file line without tab: " + line);
    tags[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return tags;
}

std::vector<std::vector<std::string>> ClusterReport::groups() const {
  std::vector<std::vector<std::string>> g(static_cast<std::size_t>(codes));
  for (std::size_t i = 0; i < tokens.size(); ++i) g[static_cast<std::size_t>(assignment[i])].push_back(tokens[i]);
  return g;
}

int ClusterReport::code_of(const std::string& token) const {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == token) return assignment[i];
  }
  throw std::out_of_range("cluster report has no token '" + token + "'");
}

std::string ClusterReport::text() const {
  std::ostringstream os;
  auto g = groups();
  for (std::size_t k = 0; k < g.size(); ++k) {
    os << "code " << std::setw(2) << k << " (" << std::setw(3) << g[k].size() << "):";
    for (const auto& t : g[k]) os << ' ' << t;
    os << '\n';
  }
  if (purity) os << "purity " << std::setprecision(4) << *purity << '\n';
  return os.str();
}

std::string ClusterReport::tsv() const {
  std::ostringstream os;
  os << "token\tcode\n";
  for (std::size_t i = 0; i < tokens.size(); ++i) os << tokens[i] << '\t' << assignment[i] << '\n';
  return os.str();
}

double cluster_purity(const std::vector<std::string>& tokens, const std::vector<int>& assignment, const TagMap& tags) {
  std::map<int, std::map<std::string, std::size_t>> counts;
  std::size_t tagged = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto it = tags.find(tokens[i]);
    if (it == tags.end()) continue;
    ++counts[assignment[i]][it->second];
    ++tagged;
  }
  if (tagged == 0) throw std::invalid_argument("cluster_purity: no tagged tokens");
  std::size_t majority = 0;
  for (const auto& [code, by_tag] : counts) {
    std::size_t best = 0;
    for (const auto& [tag, n] : by_tag) best = std::max(best, n);
    majority += best;
  }
  return static_cast<double>(majority) / static_cast<double>(tagged);
}

ClusterReport cluster_report(const std::vector<std::string>& tokens, const std::vector<int>& assignment, Index codes,
                             const TagMap* tags) {
  if (tokens.size() != assignment.size()) throw DimensionError("cluster_report: tokens and codes differ in count");
  ClusterReport r;
  r.codes = codes;
  r.tokens = tokens;
  r.assignment = assignment;
  for (int a : assignment) {
    if (a < 0 || a >= codes) throw std::out_of_range("cluster_report: code " + std::to_string(a));
  }
  if (tags != nullptr) r.purity = cluster_purity(tokens, assignment, *tags);
  return r;
}

ClusterReport cluster_report(const model::Seq2Seq<float>& model, const data::Vocab& src_vocab, const TagMap* tags) {
  if (!model.config().uses_codebooks()) throw std::invalid_argument("cluster_report: model has no codebook");
  std::vector<int> ids;
  std::vector<std::string> tokens;
  for (int id = data::Vocab::kNumSpecials; id < src_vocab.size(); ++id) {
    ids.push_back(id);
    tokens.push_back(src_vocab.token(id));
  }
  return cluster_report(tokens, model.source_codes(ids), model.config().sovq.codes_src, tags);
}

void export_embeddings(const model::Seq2Seq<float>& model, const data::Vocab& vocab, Side side, const fs::path& path) {
  const auto& table = side == Side::source ? model.src_embeddings() : model.tgt_embeddings();
  if (table.rows() != vocab.size()) throw DimensionError("export_embeddings: vocabulary does not match model");
  std::vector<int> ids;
  for (int id = data::Vocab::kNumSpecials; id < vocab.size(); ++id) ids.push_back(id);
  std::vector<int> codes(ids.size(), 0);
  if (model.config().uses_codebooks()) codes = side == Side::source ? model.source_codes(ids) : model.target_codes(ids);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(9);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << vocab.token(ids[i]) << '\t' << codes[i];
    for (Index j = 0; j < table.cols(); ++j) out << '\t' << static_cast<double>(table(ids[i], j));
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<EmbeddingRow> read_embeddings(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<EmbeddingRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    EmbeddingRow r;
    std::string field;
    std::getline(ss, r.token, '\t');
    std::getline(ss, field, '\t');
    r.code = std::stoi(field);
    while (std::getline(ss, field, '\t')) r.values.push_back(std::stod(field));
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace sqt::analysis
