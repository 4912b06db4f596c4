#pragma once

#include "sqt/model/trace.hpp"

#include <filesystem>

namespace sqt::analysis {

/// First line: token ids. Then, per layer and head, a `layer L head H`
/// line followed by the row-major probability matrix, 9 significant digits.
void write_trace(const std::filesystem::path& path, const model::AttentionTrace& trace);
model::AttentionTrace read_trace(const std::filesystem::path& path);

}  // namespace sqt::analysis
