#include "sqt/train/trainer.hpp"

#include "sqt/train/schedule.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace sqt::train {

namespace fs = std::filesystem;

std::vector<std::vector<int>> decode_all(const model::Seq2Seq<float>& model,
                                         const std::vector<std::vector<int>>& sources, const DecodeOptions& opts) {
  if (opts.mode == DecodeMode::greedy) return model::greedy_decode(model, sources, opts.rule);
  std::vector<std::vector<int>> out;
  out.reserve(sources.size());
  for (const auto& s : sources) out.push_back(model::beam_decode(model, s, opts.beam, opts.rule));
  return out;
}

double evaluate_exact_match(const model::Seq2Seq<float>& model, const std::vector<data::EncodedExample>& examples,
                            const DecodeOptions& opts) {
  if (examples.empty()) throw std::invalid_argument("evaluate_exact_match: empty dataset");
  std::vector<std::vector<int>> sources;
  sources.reserve(examples.size());
  for (const auto& e : examples) sources.push_back(e.src);
  auto decoded = decode_all(model, sources, opts);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) hits += decoded[i] == examples[i].tgt ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

model::LossTerms<float> total_loss(Graph<float>& g, const model::Seq2Seq<float>& model, const data::Batch& batch,
                                   const DropoutContext& drop) {
  auto t = model.losses(g, batch, drop);
  const std::pair<const char*, double> parts[] = {{"ce", t.ce},         {"code_ce", t.code_ce},
                                                  {"sovq_src", t.sovq_src}, {"sovq_tgt", t.sovq_tgt},
                                                  {"srl", t.srl},       {"prior_fit", t.prior_fit}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss component ") + name);
  }
  if (!std::isfinite(t.total.item())) throw NumericError("non-finite total loss");
  return t;
}

std::string metrics_header() { return "step\tloss\tce\tsovq_src\tsovq_tgt\tsrl\tcode_ce\tdev_acc"; }

std::string metrics_row(const EvalLog& e) {
  std::ostringstream os;
  os << std::setprecision(6) << e.step << '\t' << e.mean.loss << '\t' << e.mean.ce << '\t' << e.mean.sovq_src << '\t'
     << e.mean.sovq_tgt << '\t' << e.mean.srl << '\t' << e.mean.code_ce << '\t' << e.dev_acc;
  return os.str();
}

Trainer::Trainer(model::Seq2Seq<float>& model, TrainConfig cfg, const std::vector<data::EncodedExample>& train,
                 const std::vector<data::EncodedExample>& dev, DecodeOptions eval_decode)
    : model_(&model),
      cfg_(std::move(cfg)),
      train_(&train),
      dev_(&dev),
      decode_(eval_decode),
      batches_(train, cfg_.batch_size, cfg_.seed, true),
      adam_(model.params()) {
  cfg_.validate();
}

void Trainer::set_run_dir(const fs::path& dir, const data::Vocab* src_vocab, const data::Vocab* tgt_vocab) {
  fs::create_directories(dir);
  run_dir_ = dir;
  src_vocab_ = src_vocab;
  tgt_vocab_ = tgt_vocab;
  fs::path metrics = dir / "metrics.tsv";
  if (!fs::exists(metrics)) {
    std::ofstream out(metrics);
    out << metrics_header() << '\n';
  }
}

void Trainer::resume(const AdamState<float>& adam, std::int64_t step) {
  if (adam.m.size() != adam_.m.size()) throw CheckpointError("optimizer state does not match model");
  adam_ = adam;
  step_ = step;
  batches_.seek(static_cast<std::uint64_t>(step));
}

StepLog Trainer::step() {
  auto& model = *model_;
  data::Batch batch = batches_.at(static_cast<std::uint64_t>(step_));
  std::seed_seq seq{static_cast<std::uint32_t>(cfg_.seed), static_cast<std::uint32_t>(cfg_.seed >> 32),
                    static_cast<std::uint32_t>(step_), static_cast<std::uint32_t>(step_ >> 32), 0xd50u};
  std::mt19937_64 rng(seq);
  DropoutContext drop{model.config().dropout, &rng};

  model.params().zero_grad();
  Graph<float> g;
  auto terms = total_loss(g, model, batch, drop);
  g.backward(terms.total);
  StepLog log;
  log.step = step_ + 1;
  log.grad_norm = clip_grad_norm(model.params(), cfg_.clip_norm);
  log.lr = lr_schedule(log.step, cfg_.warmup_steps, cfg_.lr);
  adam_step(model.params(), adam_, log.lr, cfg_.adam);
  model.apply_ema(terms);
  ++step_;

  log.loss = terms.total.item();
  log.ce = terms.ce;
  log.sovq_src = terms.sovq_src;
  log.sovq_tgt = terms.sovq_tgt;
  log.srl = terms.srl;
  log.code_ce = terms.code_ce;
  log.prior_fit = terms.prior_fit;
  log.entropy_src = terms.entropy_src;
  log.entropy_tgt = terms.entropy_tgt;
  history_.push_back(log);
  if (on_step) on_step(log);
  return log;
}

EvalLog Trainer::evaluate() {
  EvalLog e;
  e.step = step_;
  std::size_t n = history_.size() - last_eval_index_;
  if (n > 0) {
    for (std::size_t i = last_eval_index_; i < history_.size(); ++i) {
      const auto& s = history_[i];
      e.mean.loss += s.loss;
      e.mean.ce += s.ce;
      e.mean.sovq_src += s.sovq_src;
      e.mean.sovq_tgt += s.sovq_tgt;
      e.mean.srl += s.srl;
      e.mean.code_ce += s.code_ce;
      e.mean.prior_fit += s.prior_fit;
      e.mean.entropy_src += s.entropy_src;
      e.mean.entropy_tgt += s.entropy_tgt;
      e.mean.grad_norm += s.grad_norm;
    }
    for (double* v : {&e.mean.loss, &e.mean.ce, &e.mean.sovq_src, &e.mean.sovq_tgt, &e.mean.srl, &e.mean.code_ce,
                      &e.mean.prior_fit, &e.mean.entropy_src, &e.mean.entropy_tgt, &e.mean.grad_norm}) {
      *v /= static_cast<double>(n);
    }
    e.mean.lr = history_.back().lr;
  }
  e.mean.step = step_;
  last_eval_index_ = history_.size();

  if (!dev_->empty()) {
    std::size_t limit = cfg_.dev_limit == 0 ? dev_->size() : std::min(cfg_.dev_limit, dev_->size());
    std::vector<data::EncodedExample> subset(dev_->begin(), dev_->begin() + static_cast<std::ptrdiff_t>(limit));
    e.dev_acc = evaluate_exact_match(*model_, subset, decode_);
    double ce = 0;
    std::size_t batches = 0;
    for (std::size_t i = 0; i < subset.size(); i += cfg_.batch_size) {
      std::vector<std::size_t> idx;
      for (std::size_t j = i; j < std::min(subset.size(), i + cfg_.batch_size); ++j) idx.push_back(j);
      Graph<float> g(false);
      ce += model_->losses(g, data::make_batch(subset, idx)).ce;
      ++batches;
    }
    e.dev_ce = ce / static_cast<double>(batches);
  }
  bool better = e.dev_acc > best_acc_ || (e.dev_acc == best_acc_ && e.dev_ce < best_ce_);
  if (better) {
    best_acc_ = e.dev_acc;
    best_ce_ = e.dev_ce;
    best_step_ = step_;
    best_ = snapshot();
    if (run_dir_) save(*run_dir_ / "best");
  }
  if (run_dir_) {
    std::ofstream out(*run_dir_ / "metrics.tsv", std::ios::app);
    out << metrics_row(e) << '\n';
    if (cfg_.checkpoint_every_eval) save(*run_dir_ / "last");
  }
  evals_.push_back(e);
  if (on_eval) on_eval(e);
  return e;
}

void Trainer::run() {
  while (step_ < cfg_.total_steps) {
    step();
    if (cfg_.eval_every > 0 && step_ % cfg_.eval_every == 0) evaluate();
  }
  if (evals_.empty() || evals_.back().step != step_) evaluate();
}

Trainer::Snapshot Trainer::snapshot() const {
  Snapshot s;
  for (const auto& p : model_->params()) s.values.push_back(p->value);
  s.codebooks = {model_->codebook_src(), model_->codebook_tgt()};
  return s;
}

void Trainer::restore_best() {
  if (!best_) return;
  std::size_t i = 0;
  for (auto& p : model_->params()) p->value = best_->values[i++];
  model_->codebook_src() = best_->codebooks[0];
  model_->codebook_tgt() = best_->codebooks[1];
}

void Trainer::save(const fs::path& dir) const {
  CheckpointContents c;
  c.model = model_;
  c.adam = &adam_;
  c.step = step_;
  c.train = cfg_;
  c.src_vocab = src_vocab_;
  c.tgt_vocab = tgt_vocab_;
  c.extra = {{"best_dev_acc", best_acc_}, {"best_step", best_step_}};
  save_checkpoint(dir, c);
}

}  // namespace sqt::train
