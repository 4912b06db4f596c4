#pragma once

#include "sqt/model/decode.hpp"
#include "sqt/train/checkpoint.hpp"
#include "sqt/train/config.hpp"

#include <filesystem>
#include <functional>
#include <optional>

namespace sqt::train {

enum class DecodeMode { greedy, beam };

struct DecodeOptions {
  DecodeMode mode = DecodeMode::greedy;
  Index beam = 5;
  model::LengthRule rule;
};

std::vector<std::vector<int>> decode_all(const model::Seq2Seq<float>& model,
                                         const std::vector<std::vector<int>>& sources, const DecodeOptions& opts);

/// Fraction of examples decoded to exactly their target.
double evaluate_exact_match(const model::Seq2Seq<float>& model, const std::vector<data::EncodedExample>& examples,
                            const DecodeOptions& opts = {});

/// Model losses with every component checked; a non-finite component
/// raises NumericError naming it.
model::LossTerms<float> total_loss(Graph<float>& g, const model::Seq2Seq<float>& model, const data::Batch& batch,
                                   const DropoutContext& drop = {});

struct StepLog {
  std::int64_t step = 0;
  double lr = 0;
  double loss = 0;
  double ce = 0;
  double sovq_src = 0;
  double sovq_tgt = 0;
  double srl = 0;
  double code_ce = 0;
  double prior_fit = 0;
  double entropy_src = 0;
  double entropy_tgt = 0;
  double grad_norm = 0;
};

struct EvalLog {
  std::int64_t step = 0;
  /// Component means over the steps since the previous evaluation.
  StepLog mean;
  double dev_acc = 0;
  double dev_ce = 0;
};

/// Metrics file header and row, tab separated.
std::string metrics_header();
std::string metrics_row(const EvalLog& e);

/// Single-threaded training loop. Batches are a pure function of
/// (seed, step) and dropout is reseeded every step, so a resumed run
/// continues the unbroken trajectory exactly.
class Trainer {
 public:
  Trainer(model::Seq2Seq<float>& model, TrainConfig cfg, const std::vector<data::EncodedExample>& train,
          const std::vector<data::EncodedExample>& dev, DecodeOptions eval_decode = {});

  /// Enables metrics.tsv plus `last` and `best` checkpoints under `dir`.
  void set_run_dir(const std::filesystem::path& dir, const data::Vocab* src_vocab, const data::Vocab* tgt_vocab);

  /// Restores optimizer state and step counter from a checkpoint whose
  /// model weights were already loaded into the model.
  void resume(const AdamState<float>& adam, std::int64_t step);

  StepLog step();
  EvalLog evaluate();
  /// Trains to total_steps, evaluating every eval_every steps and at the end.
  void run();
  /// Loads the best-on-dev parameters and codebooks seen so far.
  void restore_best();

  std::int64_t current_step() const { return step_; }
  const std::vector<StepLog>& history() const { return history_; }
  const std::vector<EvalLog>& evals() const { return evals_; }
  const AdamState<float>& adam() const { return adam_; }
  double best_dev_acc() const { return best_acc_; }
  std::int64_t best_step() const { return best_step_; }

  std::function<void(const StepLog&)> on_step;
  std::function<void(const EvalLog&)> on_eval;

 private:
  struct Snapshot {
    std::vector<Matrix<float>> values;
    std::vector<sovq::Codebook<float>> codebooks;
  };

  Snapshot snapshot() const;
  void save(const std::filesystem::path& dir) const;

  model::Seq2Seq<float>* model_;
  TrainConfig cfg_;
  const std::vector<data::EncodedExample>* train_;
  const std::vector<data::EncodedExample>* dev_;
  DecodeOptions decode_;
  data::BatchIterator batches_;
  AdamState<float> adam_;
  std::int64_t step_ = 0;
  std::vector<StepLog> history_;
  std::vector<EvalLog> evals_;
  std::size_t last_eval_index_ = 0;
  double best_acc_ = -1;
  double best_ce_ = 0;
  std::int64_t best_step_ = -1;
  std::optional<Snapshot> best_;
  std::optional<std::filesystem::path> run_dir_;
  const data::Vocab* src_vocab_ = nullptr;
  const data::Vocab* tgt_vocab_ = nullptr;
};

}  // namespace sqt::train
