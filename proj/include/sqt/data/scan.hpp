#pragma once

#include "sqt/data/vocab.hpp"

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sqt::data {

struct Example {
  Tokens src;
  Tokens tgt;

  bool operator==(const Example&) const = default;
};

struct Primitive {
  std::string word;
  std::string action;
};

/// Primitive inventory of a SCAN-style grammar. Modifiers (twice, thrice,
/// left, right, around, opposite, and, after, turn) are fixed.
struct GrammarSpec {
  std::vector<Primitive> primitives;

  /// walk, look, run, jump.
  static GrammarSpec standard();
  /// standard() plus walk1..walkN, look1..lookN, run1..runN with actions
  /// WALK1.., LOOK1.., RUN1...
  static GrammarSpec augmented(int n_aug);

  const Primitive* find(const std::string& word) const;
};

class ScanParseError : public std::invalid_argument {
 public:
  ScanParseError(const std::string& what, std::size_t position)
      : std::invalid_argument(what + " at token " + std::to_string(position)), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// Parses a command and returns its action sequence.
Tokens scan_interpret(const Tokens& command, const GrammarSpec& grammar = GrammarSpec::standard());

/// One verb phrase with optional repetition ("walk around left twice").
struct Clause {
  Tokens words;
  Tokens actions;
};

/// Every clause of the grammar, built compositionally from the semantic
/// rules (independent of the parser).
std::vector<Clause> enumerate_clauses(const GrammarSpec& grammar);

/// Full command space size: clauses + 2 * clauses^2.
std::size_t command_space_size(std::size_t clauses);

/// Command number `index` in a fixed enumeration: first single clauses, then
/// "a and b" pairs, then "a after b" pairs.
Example command_at(const std::vector<Clause>& clauses, std::size_t index);

}  // namespace sqt::data
