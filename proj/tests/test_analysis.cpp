#include "doctest.h"

#include "sqt/analysis/clusters.hpp"
#include "sqt/analysis/traces.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

using namespace sqt;
using namespace sqt::analysis;
namespace fs = std::filesystem;

namespace {

model::AttentionTrace single_map(const Eigen::MatrixXd& m, std::vector<int> tokens = {}) {
  model::AttentionTrace t;
  if (tokens.empty()) tokens.assign(static_cast<std::size_t>(m.cols()), 3);
  t.tokens = tokens;
  t.maps = {{m}};
  return t;
}

Eigen::MatrixXd random_stochastic(std::mt19937_64& rng, Index n) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Eigen::MatrixXd m(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) m(i, j) = u(rng);
    m.row(i) /= m.row(i).sum();
  }
  return m;
}

model::ModelConfig small(model::LayerKind kind) {
  model::ModelConfig c;
  c.src_vocab = 12;
  c.tgt_vocab = 8;
  c.enc_layers = 2;
  c.dec_layers = 1;
  c.heads = 2;
  c.d_model = 8;
  c.d_ff = 16;
  c.kind = kind;
  c.dropout = 0;
  c.seed = 5;
  return c;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("sqt_test_analysis_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("row KL of worked distributions") {
  Eigen::RowVectorXd p(2), q(2);
  p << 1.0, 0.0;
  q << 0.5, 0.5;
  CHECK(row_kl(p, q) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(row_kl(q, q) == 0.0);
  p << 0.75, 0.25;
  double expected = 0.75 * std::log(0.75 / 0.5) + 0.25 * std::log(0.25 / 0.5);
  CHECK(row_kl(p, q) == doctest::Approx(expected));
  Eigen::RowVectorXd three(3);
  CHECK_THROWS_AS(row_kl(p, three), DimensionError);
}

TEST_CASE("attention KL averages rows and counts underflow") {
  Eigen::MatrixXd a(2, 2), b(2, 2);
  a << 1, 0, 0.5, 0.5;
  b << 0.5, 0.5, 0.5, 0.5;
  auto r = attention_kl(single_map(a), single_map(b));
  CHECK(r.rows == 2);
  CHECK(r.mean == doctest::Approx(std::log(2.0) / 2).epsilon(1e-9));
  CHECK(r.underflow_rows == 1);
  auto sym = attention_kl(single_map(a), single_map(b), true);
  double reverse = 0.5 * std::log(0.5 / 1.0) + 0.5 * std::log(0.5 / 1e-12);
  CHECK(sym.mean == doctest::Approx((0.5 * (std::log(2.0) + reverse)) / 2).epsilon(1e-9));
}

TEST_CASE("KL is zero exactly for identical traces and positive otherwise") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    Index n = 2 + trial % 7;
    auto a = random_stochastic(rng, n), b = random_stochastic(rng, n);
    CHECK(attention_kl(single_map(a), single_map(a)).mean == 0.0);
    CHECK(argmax_agreement(single_map(a), single_map(a)) == 1.0);
    CHECK(attention_kl(single_map(a), single_map(b)).mean > 0.0);
    CHECK(attention_kl(single_map(a), single_map(b), true).mean ==
          doctest::Approx(attention_kl(single_map(b), single_map(a), true).mean));
  }
}

TEST_CASE("argmax agreement of worked maps") {
  Eigen::MatrixXd a(3, 3), b(3, 3);
  a << 0.8, 0.1, 0.1, 0.1, 0.8, 0.1, 0.3, 0.3, 0.4;
  b << 0.7, 0.2, 0.1, 0.1, 0.1, 0.8, 0.2, 0.2, 0.6;
  CHECK(argmax_agreement(single_map(a), single_map(b)) == doctest::Approx(2.0 / 3.0));
  Eigen::MatrixXd c(2, 2);
  c << 1, 0, 0, 1;
  CHECK_THROWS_AS(argmax_agreement(single_map(a), single_map(c)), DimensionError);
  CHECK_THROWS_AS(attention_kl(single_map(a), single_map(c)), DimensionError);
}

TEST_CASE("code-equal pairs group sentences by code sequence") {
  // Code = token parity.
  CodeFunction parity = [](std::span<const int> s) {
    std::vector<int> c;
    for (int t : s) c.push_back(t % 2);
    return c;
  };
  std::vector<std::vector<int>> sents{{3, 4}, {5, 6}, {3, 6}, {4, 3}, {7}, {3, 4}, {9, 8}};
  auto set = find_code_equal_pairs(sents, parity);
  CHECK(set.sentences.size() == 6);
  std::set<std::pair<std::vector<int>, std::vector<int>>> got;
  for (auto [i, j] : set.pairs) {
    CHECK(i != j);
    CHECK(parity(set.sentences[i]) == parity(set.sentences[j]));
    auto a = set.sentences[i], b = set.sentences[j];
    if (b < a) std::swap(a, b);
    got.insert({a, b});
  }
  // Group {3 4, 5 6, 3 6, 9 8} gives 6 pairs; {4 3} and {7} are alone.
  CHECK(set.pairs.size() == 6);
  CHECK(got.size() == 6);

  auto sub = find_code_equal_pairs(sents, parity, 3, 1);
  CHECK(sub.pairs.size() == 3);
  auto again = find_code_equal_pairs(sents, parity, 3, 1);
  CHECK(sub.pairs == again.pairs);
  for (auto [i, j] : sub.pairs) CHECK(parity(sub.sentences[i]) == parity(sub.sentences[j]));
}

TEST_CASE("SAL pair statistics show exact invariance") {
  model::Seq2Seq<float> m(small(model::LayerKind::sal));
  std::vector<std::vector<int>> sents;
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> tok(3, 11);
  for (int i = 0; i < 60; ++i) sents.push_back({tok(rng), tok(rng), tok(rng)});
  auto set = find_code_equal_pairs(sents, m);
  REQUIRE(set.pairs.size() >= 5);
  auto stats = pair_statistics(m, set);
  CHECK(stats.pairs == set.pairs.size());
  CHECK(stats.mean_kl == 0.0);
  CHECK(stats.max_kl == 0.0);
  CHECK(stats.agreement == 1.0);
  CHECK(stats.rows == static_cast<Index>(set.pairs.size()) * 2 * 2 * 3);

  model::Seq2Seq<float> v(small(model::LayerKind::vanilla));
  auto vstats = pair_statistics(v, set);
  CHECK(vstats.mean_kl > 0.0);
}

TEST_CASE("pair files round trip") {
  auto dir = scratch("pairs");
  data::Vocab vocab;
  for (std::string t : {"walk", "run", "twice", "left"}) vocab.add(t);
  PairSet set;
  set.sentences = {{3, 5}, {4, 5}, {3, 6}};
  set.pairs = {{0, 1}, {1, 2}};
  write_pair_file(dir / "p.tsv", set, vocab);
  std::ifstream in(dir / "p.tsv");
  std::string first;
  std::getline(in, first);
  CHECK(first == "walk twice\trun twice");
  auto back = read_pair_file(dir / "p.tsv", vocab);
  REQUIRE(back.pairs.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(back.sentences[back.pairs[k].first] == set.sentences[set.pairs[k].first]);
    CHECK(back.sentences[back.pairs[k].second] == set.sentences[set.pairs[k].second]);
  }
  fs::remove_all(dir);
}

TEST_CASE("cluster purity of worked assignments") {
  std::vector<std::string> tokens{"walk", "run", "jump", "left", "right", "twice"};
  TagMap tags{{"walk", "verb"},       {"run", "verb"},       {"jump", "verb"},
              {"left", "direction"},  {"right", "direction"}, {"twice", "adverb"}};
  CHECK(cluster_purity(tokens, {0, 0, 0, 1, 1, 2}, tags) == 1.0);
  CHECK(cluster_purity(tokens, {0, 0, 1, 1, 1, 2}, tags) == doctest::Approx(5.0 / 6.0));
  CHECK(cluster_purity(tokens, {0, 0, 0, 0, 0, 0}, tags) == doctest::Approx(0.5));
  TagMap partial{{"walk", "verb"}, {"left", "direction"}};
  CHECK(cluster_purity(tokens, {0, 0, 0, 0, 1, 1}, partial) == doctest::Approx(0.5));
}

TEST_CASE("cluster report groups tokens by code") {
  std::vector<std::string> tokens{"walk", "left", "run", "twice"};
  auto r = cluster_report(tokens, {1, 0, 1, 2}, 4);
  auto groups = r.groups();
  REQUIRE(groups.size() == 4);
  CHECK(groups[1] == std::vector<std::string>{"walk", "run"});
  CHECK(groups[3].empty());
  CHECK(r.code_of("run") == 1);
  CHECK(r.code_of("twice") == 2);
  CHECK(!r.purity);
  CHECK(r.tsv().find("left\t0") != std::string::npos);
  CHECK(r.text().find("walk") != std::string::npos);
}

TEST_CASE("reference tags cover the SCAN source vocabulary") {
  data::Vocab v;
  for (std::string t : {"walk", "jump", "walk1", "left", "twice", "around", "and", "turn"}) v.add(t);
  auto tags = scan_reference_tags(v);
  CHECK(tags.size() == 8);
  CHECK(tags["walk1"] == "verb");
  CHECK(tags["jump"] == "verb");
  CHECK(tags["around"] == "preposition");
  CHECK(tags["and"] == "conjunction");
  auto dir = scratch("tags");
  {
    std::ofstream out(dir / "t.tsv");
    out << "walk\tverb\nleft\tdirection\n";
  }
  auto read = read_tag_file(dir / "t.tsv");
  CHECK(read.size() == 2);
  CHECK(read["left"] == "direction");
  {
    std::ofstream out(dir / "bad.tsv");
    out << "walk verb\n";
  }
  CHECK_THROWS(read_tag_file(dir / "bad.tsv"));
  fs::remove_all(dir);
}

TEST_CASE("model cluster report matches hard codes and excludes specials") {
  model::Seq2Seq<float> m(small(model::LayerKind::sal));
  data::Vocab v;
  for (int i = 0; i < 9; ++i) v.add("w" + std::to_string(i));
  REQUIRE(v.size() == 12);
  auto r = cluster_report(m, v);
  CHECK(r.tokens.size() == 9);
  CHECK(r.codes == m.config().sovq.codes_src);
  for (std::size_t i = 0; i < r.tokens.size(); ++i) {
    std::vector<int> id{v.id(r.tokens[i])};
    CHECK(r.assignment[i] == m.source_codes(id)[0]);
  }
}

TEST_CASE("embedding export round trips") {
  auto dir = scratch("emb");
  model::Seq2Seq<float> m(small(model::LayerKind::sal));
  data::Vocab v;
  for (int i = 0; i < 9; ++i) v.add("w" + std::to_string(i));
  export_embeddings(m, v, Side::source, dir / "src.tsv");
  auto rows = read_embeddings(dir / "src.tsv");
  REQUIRE(rows.size() == 9);
  for (const auto& r : rows) {
    int id = v.id(r.token);
    std::vector<int> ids{id};
    CHECK(r.code == m.source_codes(ids)[0]);
    REQUIRE(r.values.size() == 8);
    for (std::size_t j = 0; j < 8; ++j) {
      CHECK(r.values[j] == doctest::Approx(m.src_embeddings()(id, static_cast<Index>(j))).epsilon(1e-8));
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("trace files round trip") {
  auto dir = scratch("trace");
  model::Seq2Seq<float> m(small(model::LayerKind::vanilla));
  auto t = m.trace(std::vector<int>{3, 4, 5, 6});
  write_trace(dir / "t.txt", t);
  auto back = read_trace(dir / "t.txt");
  CHECK(back.tokens == t.tokens);
  REQUIRE(back.layers() == t.layers());
  REQUIRE(back.heads() == t.heads());
  for (Index l = 0; l < t.layers(); ++l) {
    for (Index h = 0; h < t.heads(); ++h) {
      CHECK((back.maps[l][h] - t.maps[l][h]).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
  CHECK(attention_kl(t, back).mean < 1e-8);
  {
    std::ofstream out(dir / "bad.txt");
    out << "3 4\nlayer 0 head 0\n0.5 0.5\n";
  }
  CHECK_THROWS(read_trace(dir / "bad.txt"));
  fs::remove_all(dir);
}
