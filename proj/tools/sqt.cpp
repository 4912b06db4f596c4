#include "CLI11.hpp"
#include "commands.hpp"

#include <iostream>

int main(int argc, char** argv) {
  using namespace sqt::tools;
  CLI::App app{"sqt: structure-oriented quantized transformer toolkit"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate SCAN AddJump / AroundRight splits");
  gen_cmd->add_option("--task", gen.task, "addjump or aroundright")->check(CLI::IsMember({"addjump", "aroundright"}));
  gen_cmd->add_option("--augment", gen.augment, "Augmented copies of each base primitive (addjump)");
  gen_cmd->add_option("--atomic", gen.atomic, "Repetitions of each atomic primitive command (addjump)");
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--max-train", gen.max_train, "Cap on composed training commands");
  gen_cmd->add_option("--dev-size", gen.dev_size, "Dev examples held out from training commands");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoints + metrics.tsv");
  train_cmd->add_option("--config", tr.config, "Flat JSON run config");
  train_cmd->add_option("--data", tr.data, "Directory written by gen-data");
  train_cmd->add_option("--out", tr.out, "Run directory");
  train_cmd->add_option("--layer-kind", tr.layer_kind, "vanilla, sal or srl")
      ->check(CLI::IsMember({"vanilla", "sal", "srl"}));
  train_cmd->add_option("--seed", tr.seed, "Seed for init, batching and dropout");
  train_cmd->add_option("--steps", tr.steps, "Total optimizer steps");
  train_cmd->add_option("--adam-beta1", tr.adam_beta1, "Adam first-moment decay");
  train_cmd->add_option("--set", tr.overrides, "Config override key=value (repeatable)");
  train_cmd->add_option("--resume", tr.resume, "Checkpoint directory to continue from");
  train_cmd->add_option("--test-limit", tr.test_limit, "Test examples decoded after training (0 = all)");
  train_cmd->add_flag("--quiet", tr.quiet, "Only print evaluation lines");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Exact-match accuracy of a checkpoint");
  eval_cmd->add_option("--ckpt", ev.ckpt, "Run or checkpoint directory")->required();
  eval_cmd->add_option("--data", ev.data, "Data directory")->required();
  eval_cmd->add_option("--split", ev.split, "train, dev or test")->check(CLI::IsMember({"train", "dev", "test"}));
  eval_cmd->add_option("--beam", ev.beam, "Beam size (0 = greedy)");
  eval_cmd->add_option("--limit", ev.limit, "Evaluate the first N examples (0 = all)");
  eval_cmd->add_option("--predictions", ev.predictions, "Write source/prediction/target TSV");

  auto* analyze_cmd = app.add_subcommand("analyze", "Attention and cluster diagnostics");
  analyze_cmd->require_subcommand(1);
  KlArgs kl;
  auto* kl_cmd = analyze_cmd->add_subcommand("kl", "Attention KL and argmax agreement over code-equal pairs");
  kl_cmd->add_option("--ckpt", kl.ckpt, "Run or checkpoint directory")->required();
  kl_cmd->add_option("--pairs", kl.pairs, "Pair file (sentenceA TAB sentenceB)");
  kl_cmd->add_option("--data", kl.data, "Find code-equal pairs in this data directory instead");
  kl_cmd->add_option("--split", kl.split, "Split searched with --data")->check(CLI::IsMember({"train", "dev", "test"}));
  kl_cmd->add_option("--max-pairs", kl.max_pairs, "Subsample at most N pairs (0 = all)");
  kl_cmd->add_option("--write-pairs", kl.write_pairs, "Write the pairs used to this file");
  kl_cmd->add_option("--trace-dir", kl.trace_dir, "Dump one attention trace file per sentence");
  kl_cmd->add_flag("--symmetric", kl.symmetric, "Report the symmetrized KL as the headline value");
  ClusterArgs cl;
  auto* cl_cmd = analyze_cmd->add_subcommand("clusters", "Source-token code assignments");
  cl_cmd->add_option("--ckpt", cl.ckpt, "Run or checkpoint directory")->required();
  cl_cmd->add_option("--tags", cl.tags, "Reference tag file (token TAB tag)");
  cl_cmd->add_flag("--scan-tags", cl.scan_tags, "Use the built-in SCAN syntactic tags");
  cl_cmd->add_option("--tsv", cl.tsv, "Write token TAB code rows here");

  auto* export_cmd = app.add_subcommand("export", "Export model artifacts");
  export_cmd->require_subcommand(1);
  ExportArgs ex;
  auto* emb_cmd = export_cmd->add_subcommand("embeddings", "Word embeddings with code assignments");
  emb_cmd->add_option("--ckpt", ex.ckpt, "Run or checkpoint directory")->required();
  emb_cmd->add_option("--out", ex.out, "Output TSV")->required();
  emb_cmd->add_option("--side", ex.side, "source or target")->check(CLI::IsMember({"source", "target"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*gen_cmd) return gen_data(gen);
    if (*train_cmd) return train(tr);
    if (*eval_cmd) return eval(ev);
    if (*kl_cmd) return analyze_kl(kl);
    if (*cl_cmd) return analyze_clusters(cl);
    if (*emb_cmd) return export_embeddings(ex);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
