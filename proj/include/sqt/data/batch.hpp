#pragma once

#include "sqt/core/tensor.hpp"
#include "sqt/data/dataset.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace sqt::data {

struct EncodedExample {
  std::vector<int> src;
  std::vector<int> tgt;
};

std::vector<EncodedExample> encode_dataset(const Dataset& data, const Vocab& src_vocab, const Vocab& tgt_vocab);

/// Builds source and target vocabularies over every split.
std::pair<Vocab, Vocab> build_vocabs(const Splits& splits);

/// Padded id matrices (row-major, PAD = 0) with masks. Targets are framed
/// three ways: decoder input BOS y, decoder output y EOS, and the full
/// BOS y EOS sequence.
struct Batch {
  Index size = 0;
  Index src_len = 0;
  /// Length of decoder input/output rows (longest target + 1).
  Index tgt_len = 0;
  std::vector<int> src;
  Mask src_mask;
  std::vector<int> tgt_in;
  std::vector<int> tgt_out;
  Mask tgt_mask;
  std::vector<int> tgt_full;
  Mask tgt_full_mask;
  std::vector<std::size_t> indices;
};

Batch make_batch(std::span<const EncodedExample> data, std::span<const std::size_t> indices);
Batch make_batch(std::span<const EncodedExample> data);

/// Batch membership for one epoch; deterministic in (seed, epoch).
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::uint64_t epoch, bool shuffle);

/// Endless stream of batches over a dataset, reshuffled every epoch.
class BatchIterator {
 public:
  BatchIterator(const std::vector<EncodedExample>& data, std::size_t batch_size, std::uint64_t seed, bool shuffle);

  Batch next();
  /// Batch number `step` (0-based) of the stream, without advancing.
  Batch at(std::uint64_t step) const;
  std::size_t batches_per_epoch() const;
  void seek(std::uint64_t step) { step_ = step; }
  std::uint64_t position() const { return step_; }

 private:
  const std::vector<EncodedExample>* data_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool shuffle_;
  std::uint64_t step_ = 0;
  mutable std::uint64_t cached_epoch_ = ~std::uint64_t{0};
  mutable std::vector<std::vector<std::size_t>> cached_;
};

}  // namespace sqt::data
