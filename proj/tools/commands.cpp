#include "commands.hpp"

#include "sqt/analysis/clusters.hpp"
#include "sqt/analysis/traces.hpp"
#include "sqt/cli/run_config.hpp"
#include "sqt/data/batch.hpp"
#include "sqt/data/dataset.hpp"
#include "sqt/train/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace sqt::tools {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve_checkpoint(const std::string& path) {
  fs::path p(path);
  if (fs::exists(p / "best" / "manifest.json")) return p / "best";
  if (fs::exists(p / "manifest.json")) return p;
  throw std::runtime_error("no checkpoint found in " + path);
}

struct Loaded {
  train::LoadedCheckpoint ckpt;
  cli::RunConfig run;
};

Loaded load(const std::string& path) {
  fs::path dir = resolve_checkpoint(path);
  Loaded l{train::load_checkpoint(dir), cli::RunConfig()};
  if (!l.ckpt.src_vocab || !l.ckpt.tgt_vocab) throw std::runtime_error("checkpoint " + dir.string() + " has no vocabularies");
  for (const fs::path& cfg : {dir / "config.json", dir.parent_path() / "config.json"}) {
    if (fs::exists(cfg)) {
      l.run = cli::load_run_config(cfg.string());
      break;
    }
  }
  return l;
}

data::Dataset read_split(const std::string& dir, const std::string& split) {
  return data::read_tsv((fs::path(dir) / (split + ".tsv")).string());
}

std::vector<std::vector<int>> encode_sources(const data::Dataset& d, const data::Vocab& v) {
  std::vector<std::vector<int>> out;
  out.reserve(d.size());
  for (const auto& e : d) out.push_back(v.encode(e.src));
  return out;
}

}  // namespace

int gen_data(const GenDataArgs& a) {
  data::GenerationOptions opts;
  opts.max_train = a.max_train;
  opts.dev_size = a.dev_size;
  data::Splits s;
  data::Manifest m;
  m.task = a.task;
  m.seed = a.seed;
  if (a.task == "addjump") {
    if (a.augment < 1 || a.atomic < 1) throw UsageError("--augment and --atomic must be >= 1");
    s = data::gen_addjump(a.augment, a.atomic, a.seed, opts);
    m.n_aug = a.augment;
    m.n_atomic = a.atomic;
  } else {
    s = data::gen_aroundright(a.seed, opts);
  }
  m.train = s.train.size();
  m.dev = s.dev.size();
  m.test = s.test.size();
  data::write_splits(a.out, s, m);
  std::cout << "wrote " << a.out << ": train " << m.train << ", dev " << m.dev << ", test " << m.test << '\n';
  return 0;
}

int train(const TrainArgs& a) {
  cli::RunConfig run;
  try {
    if (!a.config.empty()) run = cli::load_run_config(a.config);
    if (!a.data.empty()) run.data_dir = a.data;
    if (!a.out.empty()) run.out_dir = a.out;
    if (!a.layer_kind.empty()) run.model.kind = model::parse_layer_kind(a.layer_kind);
    if (a.seed >= 0) run.seed = static_cast<std::uint64_t>(a.seed);
    if (a.steps >= 0) run.train.total_steps = a.steps;
    if (a.adam_beta1 >= 0) run.train.adam.beta1 = a.adam_beta1;
    if (a.test_limit >= 0) run.test_limit = static_cast<std::size_t>(a.test_limit);
    for (const auto& o : a.overrides) {
      auto eq = o.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + o + "'");
      run.set(o.substr(0, eq), o.substr(eq + 1));
    }
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (run.data_dir.empty()) throw UsageError("train needs --data (or \"data\" in the config)");
  if (run.out_dir.empty()) throw UsageError("train needs --out (or \"out\" in the config)");
  run.sync_seed();

  data::Splits splits = data::read_splits(run.data_dir);
  auto [src_vocab, tgt_vocab] = data::build_vocabs(splits);
  auto train_set = data::encode_dataset(splits.train, src_vocab, tgt_vocab);
  auto dev_set = data::encode_dataset(splits.dev, src_vocab, tgt_vocab);
  auto test_set = data::encode_dataset(splits.test, src_vocab, tgt_vocab);
  run.model.src_vocab = src_vocab.size();
  run.model.tgt_vocab = tgt_vocab.size();

  fs::create_directories(run.out_dir);
  {
    std::ofstream cfg(fs::path(run.out_dir) / "config.json");
    cfg << run.to_json().dump(2) << '\n';
  }

  std::optional<train::LoadedCheckpoint> resumed;
  if (!a.resume.empty()) {
    fs::path r(a.resume);
    resumed = train::load_checkpoint(fs::exists(r / "last" / "manifest.json") ? r / "last" : r);
  }
  model::Seq2Seq<float> net = resumed ? std::move(resumed->model) : model::Seq2Seq<float>(run.model);
  train::Trainer trainer(net, run.train, train_set, dev_set, run.decode);
  if (resumed) {
    if (!resumed->adam) throw std::runtime_error("checkpoint has no optimizer state to resume from");
    trainer.resume(*resumed->adam, resumed->manifest.step);
  }
  trainer.set_run_dir(run.out_dir, &src_vocab, &tgt_vocab);
  std::cout << train::metrics_header() << '\n';
  trainer.on_eval = [](const train::EvalLog& e) { std::cout << train::metrics_row(e) << std::endl; };
  if (!a.quiet) {
    trainer.on_step = [](const train::StepLog& s) {
      if (s.step % 100 == 0) {
        std::cerr << "step " << s.step << " loss " << s.loss << " ce " << s.ce << " sovq " << s.sovq_src << "/"
                  << s.sovq_tgt << " srl " << s.srl << " code " << s.code_ce << " lr " << s.lr << '\n';
      }
    };
  }
  trainer.run();
  trainer.restore_best();

  std::vector<data::EncodedExample> test_eval = test_set;
  if (run.test_limit > 0 && test_eval.size() > run.test_limit) test_eval.resize(run.test_limit);
  double test_acc = test_eval.empty() ? 0.0 : train::evaluate_exact_match(net, test_eval, run.decode);
  json result{{"best_step", trainer.best_step()},
              {"best_dev_acc", trainer.best_dev_acc()},
              {"test_acc", test_acc},
              {"test_examples", test_eval.size()}};
  std::ofstream(fs::path(run.out_dir) / "result.json") << result.dump(2) << '\n';
  std::cout << "best_step " << trainer.best_step() << " best_dev_acc " << trainer.best_dev_acc() << " test_acc "
            << test_acc << '\n';
  return 0;
}

int eval(const EvalArgs& a) {
  Loaded l = load(a.ckpt);
  const auto& sv = *l.ckpt.src_vocab;
  const auto& tv = *l.ckpt.tgt_vocab;
  data::Dataset d = read_split(a.data, a.split);
  if (a.limit > 0 && d.size() > a.limit) d.resize(a.limit);
  auto examples = data::encode_dataset(d, sv, tv);
  train::DecodeOptions opts = l.run.decode;
  if (a.beam > 0) {
    opts.mode = train::DecodeMode::beam;
    opts.beam = a.beam;
  }
  std::vector<std::vector<int>> sources;
  for (const auto& e : examples) sources.push_back(e.src);
  auto decoded = train::decode_all(l.ckpt.model, sources, opts);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) hits += decoded[i] == examples[i].tgt ? 1 : 0;
  if (!a.predictions.empty()) {
    std::ofstream out(a.predictions);
    for (std::size_t i = 0; i < examples.size(); ++i) {
      out << data::detokenize(d[i].src) << '\t' << data::detokenize(tv.decode(decoded[i])) << '\t'
          << data::detokenize(d[i].tgt) << '\n';
    }
  }
  if (examples.empty()) throw std::runtime_error("split " + a.split + " is empty");
  std::cout << "exact_match " << std::setprecision(6) << static_cast<double>(hits) / static_cast<double>(examples.size())
            << " (" << hits << "/" << examples.size() << ")\n";
  return 0;
}

int analyze_kl(const KlArgs& a) {
  if (a.pairs.empty() == a.data.empty()) throw UsageError("analyze kl needs exactly one of --pairs or --data");
  Loaded l = load(a.ckpt);
  const auto& net = l.ckpt.model;
  const auto& sv = *l.ckpt.src_vocab;
  analysis::PairSet set;
  if (!a.pairs.empty()) {
    set = analysis::read_pair_file(a.pairs, sv);
    for (const auto& [i, j] : set.pairs) {
      if (net.config().uses_codebooks() && net.source_codes(set.sentences[i]) != net.source_codes(set.sentences[j])) {
        std::cerr << "warning: pair '" << data::detokenize(sv.decode(set.sentences[i])) << "' / '"
                  << data::detokenize(sv.decode(set.sentences[j])) << "' is not code-equal under this model\n";
      }
    }
  } else {
    if (!net.config().uses_codebooks()) throw std::runtime_error("model has no codebook to find code-equal pairs");
    set = analysis::find_code_equal_pairs(encode_sources(read_split(a.data, a.split), sv), net, a.max_pairs,
                                          l.ckpt.manifest.model.seed);
  }
  if (!a.write_pairs.empty()) analysis::write_pair_file(a.write_pairs, set, sv);
  if (!a.trace_dir.empty()) {
    fs::create_directories(a.trace_dir);
    std::size_t k = 0;
    for (const auto& s : set.sentences) {
      std::ostringstream name;
      name << "trace_" << std::setw(5) << std::setfill('0') << k++ << ".txt";
      analysis::write_trace(fs::path(a.trace_dir) / name.str(), net.trace(s));
    }
  }
  auto st = analysis::pair_statistics(net, set);
  std::cout << std::setprecision(6) << "pairs " << st.pairs << '\n'
            << "mean_kl " << (a.symmetric ? st.mean_kl_symmetric : st.mean_kl) << '\n'
            << "mean_kl_directional " << st.mean_kl << '\n'
            << "mean_kl_symmetric " << st.mean_kl_symmetric << '\n'
            << "argmax_agreement " << st.agreement << '\n'
            << "underflow_rows " << st.underflow_rows << '/' << st.rows << '\n';
  return 0;
}

int analyze_clusters(const ClusterArgs& a) {
  if (!a.tags.empty() && a.scan_tags) throw UsageError("use either --tags or --scan-tags");
  Loaded l = load(a.ckpt);
  const auto& sv = *l.ckpt.src_vocab;
  std::optional<analysis::TagMap> tags;
  if (!a.tags.empty()) tags = analysis::read_tag_file(a.tags);
  if (a.scan_tags) tags = analysis::scan_reference_tags(sv);
  auto report = analysis::cluster_report(l.ckpt.model, sv, tags ? &*tags : nullptr);
  std::cout << report.text();
  if (!a.tsv.empty()) std::ofstream(a.tsv) << report.tsv();
  return 0;
}

int export_embeddings(const ExportArgs& a) {
  Loaded l = load(a.ckpt);
  bool source = a.side == "source";
  analysis::export_embeddings(l.ckpt.model, source ? *l.ckpt.src_vocab : *l.ckpt.tgt_vocab,
                              source ? analysis::Side::source : analysis::Side::target, a.out);
  std::cout << "wrote " << a.out << '\n';
  return 0;
}

}  // namespace sqt::tools
