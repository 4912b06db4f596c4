#include "sqt/data/dataset.hpp"

#include "json.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <limits>
#include <random>

namespace sqt::data {

bool contains_token(const Tokens& tokens, const std::string& token) {
  return std::find(tokens.begin(), tokens.end(), token) != tokens.end();
}

bool contains_bigram(const Tokens& tokens, const std::string& first, const std::string& second) {
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (tokens[i] == first && tokens[i + 1] == second) return true;
  }
  return false;
}

namespace {

/// Moves up to `count` random examples of `pool` into the returned set.
Dataset hold_out(Dataset& pool, std::size_t count, std::mt19937_64& rng) {
  count = std::min(count, pool.size() / 10);
  std::shuffle(pool.begin(), pool.end(), rng);
  Dataset held(pool.end() - static_cast<std::ptrdiff_t>(count), pool.end());
  pool.resize(pool.size() - count);
  return held;
}

/// Indices of the command space passing `keep`, subsampled to at most `cap`.
template <typename Keep>
Dataset select_commands(const std::vector<Clause>& clauses, Keep keep, std::size_t cap, std::mt19937_64& rng) {
  const std::size_t total = command_space_size(clauses.size());
  std::vector<std::uint32_t> chosen;
  for (std::size_t i = 0; i < total; ++i) {
    Example e = command_at(clauses, i);
    if (keep(e)) chosen.push_back(static_cast<std::uint32_t>(i));
  }
  if (chosen.size() > cap) {
    std::shuffle(chosen.begin(), chosen.end(), rng);
    chosen.resize(cap);
    std::sort(chosen.begin(), chosen.end());
  }
  Dataset out;
  out.reserve(chosen.size());
  for (auto i : chosen) out.push_back(command_at(clauses, i));
  return out;
}

}  // namespace

Splits gen_addjump(int n_aug, int n_atomic, std::uint64_t seed, const GenerationOptions& options) {
  if (n_aug < 1) throw std::invalid_argument("gen_addjump: n_aug must be >= 1");
  if (n_atomic < 1) throw std::invalid_argument("gen_addjump: n_atomic must be >= 1");
  std::mt19937_64 rng(seed);
  GrammarSpec grammar = GrammarSpec::augmented(n_aug);
  auto clauses = enumerate_clauses(grammar);

  Splits s;
  s.train = select_commands(
      clauses, [](const Example& e) { return e.src.size() >= 2 && !contains_token(e.src, "jump"); }, options.max_train,
      rng);
  s.dev = hold_out(s.train, options.dev_size, rng);
  for (const auto& p : grammar.primitives) {
    for (int i = 0; i < n_atomic; ++i) s.train.push_back({{p.word}, {p.action}});
  }
  std::shuffle(s.train.begin(), s.train.end(), rng);
  s.test = select_commands(
      clauses, [](const Example& e) { return e.src.size() >= 2 && contains_token(e.src, "jump"); },
      std::numeric_limits<std::size_t>::max(), rng);
  return s;
}

Splits gen_aroundright(std::uint64_t seed, const GenerationOptions& options) {
  std::mt19937_64 rng(seed);
  auto clauses = enumerate_clauses(GrammarSpec::standard());
  Splits s;
  s.train = select_commands(
      clauses, [](const Example& e) { return !contains_bigram(e.src, "around", "right"); }, options.max_train, rng);
  s.dev = hold_out(s.train, options.dev_size, rng);
  std::shuffle(s.train.begin(), s.train.end(), rng);
  s.test = select_commands(
      clauses, [](const Example& e) { return contains_bigram(e.src, "around", "right"); },
      std::numeric_limits<std::size_t>::max(), rng);
  return s;
}

void write_tsv(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& e : data) out << detokenize(e.src) << '\t' << detokenize(e.tgt) << '\n';
}

Dataset read_tsv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  Dataset out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": missing TAB separator");
    }
    out.push_back({tokenize(std::string_view(line).substr(0, tab)), tokenize(std::string_view(line).substr(tab + 1))});
  }
  return out;
}

void write_splits(const std::string& dir, const Splits& splits, const Manifest& manifest) {
  std::filesystem::create_directories(dir);
  write_tsv(dir + "/train.tsv", splits.train);
  write_tsv(dir + "/dev.tsv", splits.dev);
  write_tsv(dir + "/test.tsv", splits.test);
  nlohmann::json j = {{"task", manifest.task},
                      {"n_aug", manifest.n_aug},
                      {"n_atomic", manifest.n_atomic},
                      {"seed", manifest.seed},
                      {"counts", {{"train", splits.train.size()}, {"dev", splits.dev.size()}, {"test", splits.test.size()}}}};
  std::ofstream out(dir + "/meta.json");
  out << j.dump(2) << '\n';
}

Manifest read_manifest(const std::string& dir) {
  std::ifstream in(dir + "/meta.json");
  if (!in) throw std::runtime_error("cannot read " + dir + "/meta.json");
  nlohmann::json j = nlohmann::json::parse(in);
  Manifest m;
  m.task = j.at("task").get<std::string>();
  m.n_aug = j.value("n_aug", 0);
  m.n_atomic = j.value("n_atomic", 0);
  m.seed = j.value("seed", std::uint64_t{0});
  m.train = j.at("counts").at("train").get<std::size_t>();
  m.dev = j.at("counts").at("dev").get<std::size_t>();
  m.test = j.at("counts").at("test").get<std::size_t>();
  return m;
}

Splits read_splits(const std::string& dir) {
  return {read_tsv(dir + "/train.tsv"), read_tsv(dir + "/dev.tsv"), read_tsv(dir + "/test.tsv")};
}

}  // namespace sqt::data
