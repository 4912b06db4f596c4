#include "doctest.h"

#include "sqt/data/batch.hpp"
#include "sqt/data/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

using namespace sqt;
using namespace sqt::data;

namespace {

// Independent recursive-descent reading of the grammar:
//   C -> S | S and S | S after S
//   S -> V | V twice | V thrice
//   V -> D | U opposite DIR | U around DIR | turn opposite DIR | turn around DIR
//   D -> U | U DIR | turn DIR
class Oracle {
 public:
  Oracle(const Tokens& t, const GrammarSpec& g) : t_(t), g_(g) {}

  Tokens command() {
    Tokens first = sentence();
    if (pos_ == t_.size()) return first;
    std::string conj = t_[pos_++];
    Tokens second = sentence();
    if (pos_ != t_.size()) throw std::runtime_error("trailing tokens");
    if (conj == "and") return cat(first, second);
    if (conj == "after") return cat(second, first);
    throw std::runtime_error("bad conjunction");
  }

 private:
  static Tokens cat(Tokens a, const Tokens& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }
  static Tokens repeat(const Tokens& a, int n) {
    Tokens out;
    for (int i = 0; i < n; ++i) out = cat(out, a);
    return out;
  }
  bool peek(const char* w) const { return pos_ < t_.size() && t_[pos_] == w; }

  Tokens sentence() {
    Tokens v = verb_phrase();
    if (peek("twice")) {
      ++pos_;
      return repeat(v, 2);
    }
    if (peek("thrice")) {
      ++pos_;
      return repeat(v, 3);
    }
    return v;
  }

  Tokens verb_phrase() {
    if (pos_ >= t_.size()) throw std::runtime_error("unexpected end");
    Tokens act;
    if (t_[pos_] == "turn") {
      ++pos_;
    } else {
      const Primitive* p = g_.find(t_[pos_]);
      if (p == nullptr) throw std::runtime_error("unknown word " + t_[pos_]);
      act = {p->action};
      ++pos_;
    }
    std::string mod;
    if (peek("opposite") || peek("around")) mod = t_[pos_++];
    if (!(peek("left") || peek("right"))) {
      if (!mod.empty() || act.empty()) throw std::runtime_error("missing direction");
      return act;
    }
    Tokens turn = {t_[pos_++] == "left" ? "LTURN" : "RTURN"};
    if (mod == "opposite") return cat(repeat(turn, 2), act);
    if (mod == "around") return repeat(cat(turn, act), 4);
    return cat(turn, act);
  }

  const Tokens& t_;
  const GrammarSpec& g_;
  std::size_t pos_ = 0;
};

Tokens oracle(const Tokens& t, const GrammarSpec& g) { return Oracle(t, g).command(); }

std::set<std::string> sources(const Dataset& d) {
  std::set<std::string> s;
  for (const auto& e : d) s.insert(detokenize(e.src));
  return s;
}

const Splits& addjump2() {
  static Splits s = gen_addjump(2, 3, 7);
  return s;
}

const Splits& aroundright() {
  static Splits s = gen_aroundright(7);
  return s;
}

}  // namespace

TEST_CASE("scan_interpret: worked commands") {
  CHECK(scan_interpret(tokenize("jump")) == tokenize("JUMP"));
  CHECK(scan_interpret(tokenize("walk twice")) == tokenize("WALK WALK"));
  CHECK(scan_interpret(tokenize("walk around left")) == tokenize("LTURN WALK LTURN WALK LTURN WALK LTURN WALK"));
  CHECK(scan_interpret(tokenize("turn left")) == tokenize("LTURN"));
  CHECK(scan_interpret(tokenize("look opposite right")) == tokenize("RTURN RTURN LOOK"));
  CHECK(scan_interpret(tokenize("run left thrice")) == tokenize("LTURN RUN LTURN RUN LTURN RUN"));
  CHECK(scan_interpret(tokenize("walk and jump left")) == tokenize("WALK LTURN JUMP"));
  CHECK(scan_interpret(tokenize("walk after jump left")) == tokenize("LTURN JUMP WALK"));
  CHECK(scan_interpret(tokenize("turn around right")) == tokenize("RTURN RTURN RTURN RTURN"));
}

TEST_CASE("scan_interpret: parse errors report a position") {
  for (const char* bad : {"", "walk walk", "twice", "walk around", "walk and", "fly", "turn", "walk left left"}) {
    INFO(bad);
    CHECK_THROWS_AS(scan_interpret(tokenize(bad)), ScanParseError);
  }
  try {
    scan_interpret(tokenize("walk and fly"));
    FAIL("expected parse error");
  } catch (const ScanParseError& e) {
    CHECK(e.position() == 2);
  }
}

TEST_CASE("scan_interpret: augmented primitives") {
  auto g = GrammarSpec::augmented(2);
  CHECK(scan_interpret(tokenize("walk2 twice"), g) == tokenize("WALK2 WALK2"));
  CHECK(scan_interpret(tokenize("look1 left"), g) == tokenize("LTURN LOOK1"));
  CHECK_THROWS_AS(scan_interpret(tokenize("walk3"), g), ScanParseError);
}

TEST_CASE("scan: enumeration agrees with parser and independent oracle") {
  auto g = GrammarSpec::standard();
  auto clauses = enumerate_clauses(g);
  std::size_t total = command_space_size(clauses.size());
  CHECK(total == clauses.size() + 2 * clauses.size() * clauses.size());
  std::set<std::string> seen;
  for (std::size_t i = 0; i < total; i += 7) {
    Example e = command_at(clauses, i);
    CHECK(scan_interpret(e.src, g) == e.tgt);
    CHECK(oracle(e.src, g) == e.tgt);
    CHECK(seen.insert(detokenize(e.src)).second);
  }
}

TEST_CASE("tokenize/detokenize round trip") {
  for (const auto& e : aroundright().test) {
    CHECK(tokenize(detokenize(e.src)) == e.src);
    CHECK(scan_interpret(tokenize(detokenize(e.src))) == e.tgt);
  }
  CHECK(tokenize("  walk   twice ") == Tokens{"walk", "twice"});
}

TEST_CASE("gen_addjump: split definition") {
  const auto& s = addjump2();
  auto g = GrammarSpec::augmented(2);
  REQUIRE(!s.test.empty());
  for (const auto& e : s.test) {
    CHECK(contains_token(e.src, "jump"));
    CHECK(e.src.size() >= 2);
    CHECK(oracle(e.src, g) == e.tgt);
  }
  std::size_t atomic_jump = 0;
  for (const auto& e : s.train) {
    if (contains_token(e.src, "jump")) {
      CHECK(e.src == Tokens{"jump"});
      CHECK(e.tgt == Tokens{"JUMP"});
      ++atomic_jump;
    }
    CHECK(oracle(e.src, g) == e.tgt);
  }
  CHECK(atomic_jump == 3);
  for (const auto& e : s.dev) CHECK_FALSE(contains_token(e.src, "jump"));
}

TEST_CASE("gen_addjump: splits are disjoint and deterministic") {
  const auto& s = addjump2();
  auto train = sources(s.train), dev = sources(s.dev), test = sources(s.test);
  for (const auto& d : dev) CHECK(train.count(d) == 0);
  for (const auto& t : test) {
    CHECK(train.count(t) == 0);
    CHECK(dev.count(t) == 0);
  }
  Splits again = gen_addjump(2, 3, 7);
  CHECK(again.train == s.train);
  CHECK(again.dev == s.dev);
  CHECK(again.test == s.test);
  Splits other = gen_addjump(2, 3, 8);
  CHECK_FALSE(other.train == s.train);
}

TEST_CASE("gen_addjump: primitive vocabulary counts") {
  auto g = GrammarSpec::augmented(20);
  CHECK(g.primitives.size() == 3 + 1 + 20 * 3);
  std::set<std::string> verbs;
  for (const auto& p : g.primitives) verbs.insert(p.word);
  CHECK(verbs.count("jump") == 1);
  CHECK(verbs.count("walk20") == 1);
  CHECK(verbs.count("run1") == 1);
  CHECK(verbs.count("look21") == 0);

  GenerationOptions small;
  small.max_train = 2000;
  small.dev_size = 100;
  Splits s = gen_addjump(20, 1, 3, small);
  std::set<std::string> seen;
  for (const auto& e : s.train)
    for (const auto& w : e.src)
      if (g.find(w) != nullptr) seen.insert(w);
  CHECK(seen.size() == 64);
  CHECK(s.train.size() == 2000 - 100 + 64);
  CHECK(s.dev.size() == 100);
}

TEST_CASE("gen_addjump: invalid arguments") {
  CHECK_THROWS_AS(gen_addjump(0, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(gen_addjump(1, 0, 1), std::invalid_argument);
}

TEST_CASE("gen_aroundright: split definition") {
  const auto& s = aroundright();
  bool around_left = false, opposite_right = false;
  for (const auto& e : s.train) {
    CHECK_FALSE(contains_bigram(e.src, "around", "right"));
    around_left = around_left || contains_bigram(e.src, "around", "left");
    opposite_right = opposite_right || contains_bigram(e.src, "opposite", "right");
  }
  CHECK(around_left);
  CHECK(opposite_right);
  REQUIRE(!s.test.empty());
  for (const auto& e : s.test) {
    CHECK(contains_bigram(e.src, "around", "right"));
    CHECK(oracle(e.src, GrammarSpec::standard()) == e.tgt);
  }
  auto train = sources(s.train);
  for (const auto& t : sources(s.test)) CHECK(train.count(t) == 0);
}

TEST_CASE("vocab: specials, encode, decode, save and load") {
  Vocab v;
  CHECK(v.size() == 3);
  CHECK(v.token(Vocab::kPad) == "<pad>");
  int walk = v.add("walk");
  CHECK(walk == 3);
  CHECK(v.add("walk") == walk);
  v.add("twice");
  CHECK(v.encode({"walk", "twice"}) == std::vector<int>{3, 4});
  CHECK(v.decode({1, 3, 4, 2, 0}) == Tokens{"walk", "twice"});
  CHECK_THROWS_AS(v.id("run"), std::out_of_range);
  auto path = std::filesystem::temp_directory_path() / "sqt_test_vocab.txt";
  v.save(path.string());
  Vocab back = Vocab::load(path.string());
  CHECK(back.tokens() == v.tokens());
  std::filesystem::remove(path);
}

TEST_CASE("tsv and manifest round trip") {
  auto dir = std::filesystem::temp_directory_path() / "sqt_test_splits";
  std::filesystem::remove_all(dir);
  Splits s;
  s.train = {{{"walk"}, {"WALK"}}, {{"walk", "twice"}, {"WALK", "WALK"}}};
  s.dev = {{{"look"}, {"LOOK"}}};
  s.test = {{{"jump", "left"}, {"LTURN", "JUMP"}}};
  Manifest m;
  m.task = "addjump";
  m.n_aug = 2;
  m.n_atomic = 5;
  m.seed = 9;
  write_splits(dir.string(), s, m);
  Splits back = read_splits(dir.string());
  CHECK(back.train == s.train);
  CHECK(back.dev == s.dev);
  CHECK(back.test == s.test);
  Manifest mb = read_manifest(dir.string());
  CHECK(mb.task == "addjump");
  CHECK(mb.n_atomic == 5);
  CHECK(mb.seed == 9);
  CHECK(mb.train == 2);
  {
    std::ofstream bad(dir / "bad.tsv");
    bad << "walk WALK\n";
  }
  CHECK_THROWS_AS(read_tsv((dir / "bad.tsv").string()), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("build_vocabs: sorted tokens over all splits") {
  const auto& s = addjump2();
  auto [sv, tv] = build_vocabs(s);
  CHECK(sv.contains("jump"));
  CHECK(tv.contains("JUMP"));
  CHECK(std::is_sorted(sv.tokens().begin() + 3, sv.tokens().end()));
  CHECK(sv.size() == 3 + 10 + 9);
}

TEST_CASE("make_batch: padding, masks and framing") {
  std::vector<EncodedExample> data = {{{3, 4, 5}, {6, 7}}, {{3, 4, 5, 6, 7}, {8}}};
  std::vector<std::size_t> one{0};
  Batch b1 = make_batch(data, one);
  CHECK(b1.src_mask.all());
  CHECK(b1.tgt_mask.all());

  Batch b = make_batch(data);
  CHECK(b.size == 2);
  CHECK(b.src_len == 5);
  CHECK((b.src_mask == false).count() == 2);
  CHECK(b.src == std::vector<int>{3, 4, 5, 0, 0, 3, 4, 5, 6, 7});
  CHECK(b.tgt_len == 3);
  CHECK(b.tgt_in == std::vector<int>{1, 6, 7, 1, 8, 0});
  CHECK(b.tgt_out == std::vector<int>{6, 7, 2, 8, 2, 0});
  CHECK(b.tgt_full == std::vector<int>{1, 6, 7, 2, 1, 8, 2, 0});
  CHECK(b.tgt_mask(1, 2) == false);
  CHECK(b.tgt_full_mask.row(0).all());
  CHECK(b.tgt_full_mask(1, 3) == false);
}

TEST_CASE("batch_iter: epoch covers every example once, order fixed by seed") {
  std::vector<EncodedExample> data;
  for (int i = 0; i < 103; ++i) data.push_back({{3 + i % 5}, {3}});
  auto epoch = epoch_batches(data.size(), 10, 5, 0, true);
  std::multiset<std::size_t> all;
  for (const auto& b : epoch) {
    CHECK(b.size() <= 10);
    all.insert(b.begin(), b.end());
  }
  std::multiset<std::size_t> expected;
  for (std::size_t i = 0; i < data.size(); ++i) expected.insert(i);
  CHECK(all == expected);
  CHECK(epoch_batches(data.size(), 10, 5, 0, true) == epoch);
  CHECK_FALSE(epoch_batches(data.size(), 10, 5, 1, true) == epoch);
  CHECK_FALSE(epoch_batches(data.size(), 10, 6, 0, true) == epoch);
  auto plain = epoch_batches(data.size(), 10, 5, 0, false);
  CHECK(plain[0] == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});

  BatchIterator it(data, 10, 5, true);
  CHECK(it.batches_per_epoch() == 11);
  Batch fifth = it.at(4);
  for (int i = 0; i < 4; ++i) it.next();
  CHECK(it.next().indices == fifth.indices);
  CHECK(it.at(11 + 2).indices == make_batch(data, epoch_batches(data.size(), 10, 5, 1, true)[2]).indices);
}
