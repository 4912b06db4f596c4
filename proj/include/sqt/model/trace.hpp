#pragma once

#include "sqt/core/tensor.hpp"

#include <vector>

namespace sqt::model {

/// Encoder attention captured for one sentence: maps[layer][head] is a
/// len x len matrix, rows are queries.
struct AttentionTrace {
  std::vector<int> tokens;
  std::vector<std::vector<Eigen::MatrixXd>> maps;

  Index layers() const { return static_cast<Index>(maps.size()); }
  Index heads() const { return maps.empty() ? 0 : static_cast<Index>(maps.front().size()); }
  Index length() const { return static_cast<Index>(tokens.size()); }
};

}  // namespace sqt::model
