#include "sqt/data/vocab.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sqt::data {

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ') ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string detokenize(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i != 0) out += ' ';
    out += tokens[i];
  }
  return out;
}

Vocab::Vocab() {
  add("<pad>");
  add("<s>");
  add("</s>");
}

int Vocab::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) throw std::out_of_range("unknown token: " + token);
  return it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const Tokens& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

Tokens Vocab::decode(const std::vector<int>& ids) const {
  Tokens out;
  for (int i : ids) {
    if (!is_special(i)) out.push_back(token(i));
  }
  return out;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocab: " + path);
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read vocab: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  Vocab v;
  if (lines.size() < kNumSpecials) throw std::runtime_error("vocab file too short: " + path);
  for (int i = 0; i < kNumSpecials; ++i) {
    if (lines[static_cast<std::size_t>(i)] != v.token(i)) {
      throw std::runtime_error("vocab file has unexpected special token at line " + std::to_string(i + 1));
    }
  }
  for (std::size_t i = kNumSpecials; i < lines.size(); ++i) {
    if (v.contains(lines[i])) throw std::runtime_error("duplicate token in vocab file: " + lines[i]);
    v.add(lines[i]);
  }
  return v;
}

}  // namespace sqt::data
