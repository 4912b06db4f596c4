#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sqt::data {

using Tokens = std::vector<std::string>;

Tokens tokenize(std::string_view text);
std::string detokenize(const Tokens& tokens);

/// Token <-> id map with fixed specials PAD=0, BOS=1, EOS=2.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kNumSpecials = 3;

  Vocab();

  /// Returns the id of `token`, adding it when new.
  int add(const std::string& token);
  /// Throws std::out_of_range for unknown tokens.
  int id(const std::string& token) const;
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  static bool is_special(int id) { return id < kNumSpecials; }

  std::vector<int> encode(const Tokens& tokens) const;
  /// Drops specials.
  Tokens decode(const std::vector<int>& ids) const;

  /// One token per line, specials included, id = line number.
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace sqt::data
