#include "sqt/data/batch.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

namespace sqt::data {

std::vector<EncodedExample> encode_dataset(const Dataset& data, const Vocab& src_vocab, const Vocab& tgt_vocab) {
  std::vector<EncodedExample> out;
  out.reserve(data.size());
  for (const auto& e : data) {
    if (e.src.empty()) throw std::invalid_argument("example with empty source");
    out.push_back({src_vocab.encode(e.src), tgt_vocab.encode(e.tgt)});
  }
  return out;
}

std::pair<Vocab, Vocab> build_vocabs(const Splits& splits) {
  std::set<std::string> src_tokens, tgt_tokens;
  for (const Dataset* d : {&splits.train, &splits.dev, &splits.test}) {
    for (const auto& e : *d) {
      src_tokens.insert(e.src.begin(), e.src.end());
      tgt_tokens.insert(e.tgt.begin(), e.tgt.end());
    }
  }
  auto build = [](const std::set<std::string>& tokens) {
    Vocab v;
    for (const auto& t : tokens) v.add(t);
    return v;
  };
  return {build(src_tokens), build(tgt_tokens)};
}

Batch make_batch(std::span<const EncodedExample> data, std::span<const std::size_t> indices) {
  Batch b;
  b.size = static_cast<Index>(indices.size());
  b.indices.assign(indices.begin(), indices.end());
  for (auto i : indices) {
    b.src_len = std::max<Index>(b.src_len, static_cast<Index>(data[i].src.size()));
    b.tgt_len = std::max<Index>(b.tgt_len, static_cast<Index>(data[i].tgt.size()) + 1);
  }
  const Index full_len = b.tgt_len + 1;
  b.src.assign(static_cast<std::size_t>(b.size * b.src_len), Vocab::kPad);
  b.tgt_in.assign(static_cast<std::size_t>(b.size * b.tgt_len), Vocab::kPad);
  b.tgt_out.assign(static_cast<std::size_t>(b.size * b.tgt_len), Vocab::kPad);
  b.tgt_full.assign(static_cast<std::size_t>(b.size * full_len), Vocab::kPad);
  b.src_mask = Mask::Constant(b.size, b.src_len, false);
  b.tgt_mask = Mask::Constant(b.size, b.tgt_len, false);
  b.tgt_full_mask = Mask::Constant(b.size, full_len, false);
  for (Index r = 0; r < b.size; ++r) {
    const auto& e = data[indices[static_cast<std::size_t>(r)]];
    const Index ns = static_cast<Index>(e.src.size()), nt = static_cast<Index>(e.tgt.size());
    for (Index t = 0; t < ns; ++t) {
      b.src[static_cast<std::size_t>(r * b.src_len + t)] = e.src[static_cast<std::size_t>(t)];
      b.src_mask(r, t) = true;
    }
    b.tgt_in[static_cast<std::size_t>(r * b.tgt_len)] = Vocab::kBos;
    b.tgt_full[static_cast<std::size_t>(r * full_len)] = Vocab::kBos;
    for (Index t = 0; t < nt; ++t) {
      int tok = e.tgt[static_cast<std::size_t>(t)];
      b.tgt_in[static_cast<std::size_t>(r * b.tgt_len + t + 1)] = tok;
      b.tgt_out[static_cast<std::size_t>(r * b.tgt_len + t)] = tok;
      b.tgt_full[static_cast<std::size_t>(r * full_len + t + 1)] = tok;
    }
    b.tgt_out[static_cast<std::size_t>(r * b.tgt_len + nt)] = Vocab::kEos;
    b.tgt_full[static_cast<std::size_t>(r * full_len + nt + 1)] = Vocab::kEos;
    for (Index t = 0; t <= nt; ++t) b.tgt_mask(r, t) = true;
    for (Index t = 0; t <= nt + 1; ++t) b.tgt_full_mask(r, t) = true;
  }
  return b;
}

Batch make_batch(std::span<const EncodedExample> data) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  return make_batch(data, idx);
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::uint64_t epoch, bool shuffle) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return out;
}

BatchIterator::BatchIterator(const std::vector<EncodedExample>& data, std::size_t batch_size, std::uint64_t seed,
                             bool shuffle)
    : data_(&data), batch_size_(batch_size), seed_(seed), shuffle_(shuffle) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (data.empty()) throw std::invalid_argument("BatchIterator over an empty dataset");
}

std::size_t BatchIterator::batches_per_epoch() const { return (data_->size() + batch_size_ - 1) / batch_size_; }

Batch BatchIterator::at(std::uint64_t step) const {
  const std::uint64_t per = batches_per_epoch();
  const std::uint64_t epoch = step / per;
  if (epoch != cached_epoch_) {
    cached_ = epoch_batches(data_->size(), batch_size_, seed_, epoch, shuffle_);
    cached_epoch_ = epoch;
  }
  return make_batch(*data_, cached_[static_cast<std::size_t>(step % per)]);
}

Batch BatchIterator::next() { return at(step_++); }

}  // namespace sqt::data
