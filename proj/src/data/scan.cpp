#include "sqt/data/scan.hpp"

namespace sqt::data {

GrammarSpec GrammarSpec::standard() {
  return GrammarSpec{{{"walk", "WALK"}, {"look", "LOOK"}, {"run", "RUN"}, {"jump", "JUMP"}}};
}

GrammarSpec GrammarSpec::augmented(int n_aug) {
  GrammarSpec g = standard();
  for (const char* base : {"walk", "look", "run"}) {
    std::string action = base;
    for (auto& c : action) c = static_cast<char>(c - 'a' + 'A');
    for (int i = 1; i <= n_aug; ++i) {
      g.primitives.push_back({base + std::to_string(i), action + std::to_string(i)});
    }
  }
  return g;
}

const Primitive* GrammarSpec::find(const std::string& word) const {
  for (const auto& p : primitives) {
    if (p.word == word) return &p;
  }
  return nullptr;
}

namespace {

std::string turn_action(const std::string& direction) { return direction == "left" ? "LTURN" : "RTURN"; }

bool is_direction(const std::string& w) { return w == "left" || w == "right"; }

class Parser {
 public:
  Parser(const Tokens& words, const GrammarSpec& grammar) : words_(words), grammar_(grammar) {}

  Tokens command() {
    if (words_.empty()) throw ScanParseError("empty command", 0);
    Tokens first = clause();
    if (pos_ == words_.size()) return first;
    const std::string& conj = words_[pos_];
    if (conj != "and" && conj != "after") throw ScanParseError("expected 'and' or 'after', got '" + conj + "'", pos_);
    ++pos_;
    Tokens second = clause();
    if (pos_ != words_.size()) throw ScanParseError("trailing token '" + words_[pos_] + "'", pos_);
    if (conj == "after") std::swap(first, second);
    first.insert(first.end(), second.begin(), second.end());
    return first;
  }

 private:
  const std::string* peek() const { return pos_ < words_.size() ? &words_[pos_] : nullptr; }

  Tokens clause() {
    Tokens phrase = verb_phrase();
    const std::string* w = peek();
    int repeat = 1;
    if (w != nullptr && *w == "twice") repeat = 2;
    if (w != nullptr && *w == "thrice") repeat = 3;
    if (repeat == 1) return phrase;
    ++pos_;
    Tokens out;
    for (int i = 0; i < repeat; ++i) out.insert(out.end(), phrase.begin(), phrase.end());
    return out;
  }

  std::string direction() {
    const std::string* w = peek();
    if (w == nullptr) throw ScanParseError("expected 'left' or 'right', got end of command", pos_);
    if (!is_direction(*w)) throw ScanParseError("expected 'left' or 'right', got '" + *w + "'", pos_);
    ++pos_;
    return *w;
  }

  Tokens verb_phrase() {
    const std::string* w = peek();
    if (w == nullptr) throw ScanParseError("expected a verb, got end of command", pos_);
    bool is_turn = *w == "turn";
    const Primitive* prim = is_turn ? nullptr : grammar_.find(*w);
    if (!is_turn && prim == nullptr) throw ScanParseError("expected a verb, got '" + *w + "'", pos_);
    ++pos_;
    const std::string* next = peek();
    if (next == nullptr || (!is_direction(*next) && *next != "opposite" && *next != "around")) {
      if (is_turn) throw ScanParseError("'turn' requires a direction", pos_);
      return {prim->action};
    }
    Tokens out;
    if (is_direction(*next)) {
      std::string d = direction();
      out.push_back(turn_action(d));
      if (!is_turn) out.push_back(prim->action);
      return out;
    }
    std::string mod = *next;
    ++pos_;
    std::string d = direction();
    int reps = mod == "opposite" ? 1 : 4;
    for (int i = 0; i < reps; ++i) {
      if (mod == "opposite") {
        out.push_back(turn_action(d));
        out.push_back(turn_action(d));
      } else {
        out.push_back(turn_action(d));
      }
      if (!is_turn) out.push_back(prim->action);
    }
    return out;
  }

  const Tokens& words_;
  const GrammarSpec& grammar_;
  std::size_t pos_ = 0;
};

Tokens repeat(const Tokens& t, int n) {
  Tokens out;
  for (int i = 0; i < n; ++i) out.insert(out.end(), t.begin(), t.end());
  return out;
}

Tokens concat(Tokens a, const Tokens& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

Tokens scan_interpret(const Tokens& command, const GrammarSpec& grammar) {
  return Parser(command, grammar).command();
}

std::vector<Clause> enumerate_clauses(const GrammarSpec& grammar) {
  std::vector<Clause> verbs;
  // [[turn d]] = TURN_d; [[u d]] = TURN_d [[u]]
  // [[x opposite d]] = TURN_d TURN_d [[x]]; [[x around d]] = (TURN_d [[x]]) x 4
  std::vector<std::pair<std::string, Tokens>> heads;
  for (const auto& p : grammar.primitives) heads.push_back({p.word, {p.action}});
  heads.push_back({"turn", {}});
  for (const auto& [word, meaning] : heads) {
    if (word != "turn") verbs.push_back({{word}, meaning});
    for (const std::string d : {"left", "right"}) {
      Tokens turn{turn_action(d)};
      verbs.push_back({{word, d}, concat(turn, meaning)});
      verbs.push_back({{word, "opposite", d}, concat(repeat(turn, 2), meaning)});
      verbs.push_back({{word, "around", d}, repeat(concat(turn, meaning), 4)});
    }
  }
  std::vector<Clause> clauses;
  clauses.reserve(verbs.size() * 3);
  for (const auto& v : verbs) {
    clauses.push_back(v);
    clauses.push_back({concat(v.words, {"twice"}), repeat(v.actions, 2)});
    clauses.push_back({concat(v.words, {"thrice"}), repeat(v.actions, 3)});
  }
  return clauses;
}

std::size_t command_space_size(std::size_t clauses) { return clauses + 2 * clauses * clauses; }

Example command_at(const std::vector<Clause>& clauses, std::size_t index) {
  const std::size_t n = clauses.size();
  if (index >= command_space_size(n)) throw std::out_of_range("command index out of range");
  if (index < n) return {clauses[index].words, clauses[index].actions};
  index -= n;
  bool after = index >= n * n;
  if (after) index -= n * n;
  const Clause& a = clauses[index / n];
  const Clause& b = clauses[index % n];
  Tokens src = a.words;
  src.push_back(after ? "after" : "and");
  src.insert(src.end(), b.words.begin(), b.words.end());
  Tokens tgt = after ? concat(b.actions, a.actions) : concat(a.actions, b.actions);
  return {std::move(src), std::move(tgt)};
}

}  // namespace sqt::data
