#include "sqt/analysis/traces.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace sqt::analysis {

void write_trace(const std::filesystem::path& path, const model::AttentionTrace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < trace.tokens.size(); ++i) out << (i ? " " : "") << trace.tokens[i];
  out << '\n' << std::setprecision(9);
  for (Index l = 0; l < trace.layers(); ++l) {
    for (Index h = 0; h < trace.heads(); ++h) {
      out << "layer " << l << " head " << h << '\n';
      const auto& m = trace.maps[l][h];
      for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << m(r, c);
        out << '\n';
      }
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

model::AttentionTrace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  model::AttentionTrace t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty trace file");
  {
    std::istringstream ss(line);
    int id;
    while (ss >> id) t.tokens.push_back(id);
  }
  const Index n = t.length();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream head(line);
    std::string w1, w2;
    Index l = 0, h = 0;
    if (!(head >> w1 >> l >> w2 >> h) || w1 != "layer" || w2 != "head") {
      throw std::runtime_error(path.string() + ": expected 'layer L head H', got '" + line + "'");
    }
    if (l == static_cast<Index>(t.maps.size())) t.maps.emplace_back();
    if (l != static_cast<Index>(t.maps.size()) - 1 || h != static_cast<Index>(t.maps.back().size())) {
      throw std::runtime_error(path.string() + ": layer/head blocks out of order");
    }
    Eigen::MatrixXd m(n, n);
    for (Index r = 0; r < n; ++r) {
      if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": truncated matrix");
      std::istringstream row(line);
      for (Index c = 0; c < n; ++c) {
        if (!(row >> m(r, c))) throw std::runtime_error(path.string() + ": short matrix row");
      }
    }
    t.maps.back().push_back(std::move(m));
  }
  return t;
}

}  // namespace sqt::analysis
