#include "doctest.h"

#include "sqt/cli/run_config.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sqt;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path work_dir() {
  static fs::path p = [] {
    fs::path d = fs::temp_directory_path() / "sqt_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run(const std::string& args) {
  fs::path out = work_dir() / "stdout.txt", err = work_dir() / "stderr.txt";
  std::string cmd = std::string(SQT_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

const std::string kTinyModel =
    "--set d_model=16 --set d_ff=32 --set enc_layers=1 --set dec_layers=1 --set batch_size=8 --set eval_every=10 "
    "--set dev_limit=10 --set warmup_steps=5 --quiet";

}  // namespace

TEST_CASE("run config defaults and round trip") {
  cli::RunConfig c;
  CHECK(c.model.d_model == 64);
  CHECK(c.model.heads == 2);
  CHECK(c.decode.rule.a == 5.0);
  auto j = c.to_json();
  CHECK(j.size() == cli::RunConfig::keys().size());
  cli::RunConfig d;
  d.set("d_model", "32");
  d.set("layer_kind", "srl");
  d.set("straight_through", "false");
  d.set("data", "some/dir");
  d.merge(c.to_json());
  CHECK(d.to_json() == c.to_json());
}

TEST_CASE("run config parses typed values") {
  cli::RunConfig c;
  c.set("beta", "0.25");
  c.set("layer_kind", "vanilla");
  c.set("codes_src", "9");
  c.set("adam_beta1", "0.5");
  c.set("max_len_b", "3");
  c.set("out", "runs/x");
  CHECK(c.model.beta == 0.25);
  CHECK(c.model.kind == model::LayerKind::vanilla);
  CHECK(c.model.sovq.codes_src == 9);
  CHECK(c.train.adam.beta1 == 0.5);
  CHECK(c.decode.rule.b == 3.0);
  CHECK(c.out_dir == "runs/x");
  c.seed = 42;
  c.sync_seed();
  CHECK(c.model.seed == 42);
  CHECK(c.train.seed == 42);
}

TEST_CASE("run config rejects unknown keys and bad values") {
  cli::RunConfig c;
  CHECK_THROWS_WITH_AS(c.set("d_modle", "3"), doctest::Contains("unknown config key 'd_modle'"), std::invalid_argument);
  CHECK_THROWS_AS(c.set("d_model", "abc"), std::invalid_argument);
  CHECK_THROWS_AS(c.set("layer_kind", "dense"), std::invalid_argument);
  CHECK_THROWS_AS(c.merge(nlohmann::json{{"heads", "two"}}), std::invalid_argument);
  CHECK_THROWS_AS(c.merge(nlohmann::json::array()), std::invalid_argument);
  CHECK_THROWS_AS(c.merge(nlohmann::json{{"lr", 1e-3}, {"bogus", 1}}), std::invalid_argument);
}

TEST_CASE("run config files load and reject malformed input") {
  fs::path p = work_dir() / "cfg.json";
  std::ofstream(p) << R"({"d_model": 32, "layer_kind": "srl", "seed": 5})";
  auto c = cli::load_run_config(p.string());
  CHECK(c.model.d_model == 32);
  CHECK(c.model.kind == model::LayerKind::srl);
  CHECK(c.seed == 5);
  std::ofstream(p) << "{ broken";
  CHECK_THROWS_AS(cli::load_run_config(p.string()), std::invalid_argument);
  CHECK_THROWS_AS(cli::load_run_config((work_dir() / "nope.json").string()), std::runtime_error);
}

TEST_CASE("command line usage errors exit with 2") {
  CHECK(run("").code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("gen-data --out x --bogus").code == 2);
  CHECK(run("gen-data --task nope --out x").code == 2);
  CHECK(run("eval --data x").code == 2);
  CHECK(run("analyze").code == 2);
  auto r = run("train --data x --out y --set nonsense=1");
  CHECK(r.code == 2);
  CHECK(r.err.find("nonsense") != std::string::npos);
  CHECK(run("train --data x --out y --set noequals").code == 2);
  CHECK(run("train --out y").code == 2);
  CHECK(run("--help").code == 0);
}

TEST_CASE("end-to-end pipeline through every subcommand") {
  fs::path data = work_dir() / "data", runs = work_dir() / "runs";
  auto gen = run("gen-data --task addjump --augment 1 --atomic 5 --seed 7 --max-train 300 --dev-size 20 --out " +
                 data.string());
  REQUIRE(gen.code == 0);
  for (const char* f : {"train.tsv", "dev.tsv", "test.tsv", "meta.json"}) CHECK(fs::exists(data / f));
  CHECK(gen.out.find("dev 20") != std::string::npos);

  auto cfg = work_dir() / "run.json";
  std::ofstream(cfg) << R"({"heads": 2, "codes_src": 6})";
  fs::path r1 = runs / "r1";
  auto tr = run("train --config " + cfg.string() + " --data " + data.string() + " --layer-kind sal --seed 3 --steps 20 " +
                kTinyModel + " --test-limit 10 --out " + r1.string());
  REQUIRE(tr.code == 0);
  CHECK(fs::exists(r1 / "config.json"));
  CHECK(fs::exists(r1 / "metrics.tsv"));
  CHECK(fs::exists(r1 / "best" / "manifest.json"));
  CHECK(fs::exists(r1 / "result.json"));
  auto echoed = cli::load_run_config((r1 / "config.json").string());
  CHECK(echoed.model.d_model == 16);
  CHECK(echoed.model.kind == model::LayerKind::sal);
  CHECK(echoed.seed == 3);
  CHECK(echoed.train.total_steps == 20);
  CHECK(tr.out.find("step\tloss\tce") != std::string::npos);

  auto ev = run("eval --ckpt " + r1.string() + " --data " + data.string() + " --split dev --predictions " +
                (work_dir() / "pred.tsv").string());
  CHECK(ev.code == 0);
  CHECK(ev.out.find("exact_match") != std::string::npos);
  CHECK(fs::exists(work_dir() / "pred.tsv"));
  CHECK(run("eval --ckpt " + r1.string() + " --data " + data.string() + " --split dev --beam 2 --limit 3").code == 0);

  fs::path pairs = work_dir() / "pairs.tsv";
  auto kl = run("analyze kl --ckpt " + r1.string() + " --data " + data.string() + " --max-pairs 5 --write-pairs " +
                pairs.string() + " --trace-dir " + (work_dir() / "traces").string());
  CHECK(kl.code == 0);
  CHECK(kl.out.find("mean_kl ") != std::string::npos);
  CHECK(kl.out.find("argmax_agreement 1") != std::string::npos);
  auto kl2 = run("analyze kl --ckpt " + r1.string() + " --pairs " + pairs.string() + " --symmetric");
  CHECK(kl2.code == 0);
  CHECK(run("analyze kl --ckpt " + r1.string()).code == 2);

  auto cl = run("analyze clusters --ckpt " + r1.string() + " --scan-tags --tsv " + (work_dir() / "cl.tsv").string());
  CHECK(cl.code == 0);
  CHECK(cl.out.find("jump") != std::string::npos);
  CHECK(run("analyze clusters --ckpt " + r1.string() + " --scan-tags --tags x").code == 2);

  auto ex = run("export embeddings --ckpt " + r1.string() + " --side target --out " + (work_dir() / "e.tsv").string());
  CHECK(ex.code == 0);
  CHECK(fs::file_size(work_dir() / "e.tsv") > 0);

  auto res = run("train --data " + data.string() + " --layer-kind sal --seed 3 --steps 30 " + kTinyModel +
                 " --set codes_src=6 --test-limit 10 --resume " + r1.string() + " --out " + (runs / "r1b").string());
  CHECK(res.code == 0);

  CHECK(run("eval --ckpt " + (runs / "missing").string() + " --data " + data.string()).code == 1);
  CHECK(run("train --data " + (work_dir() / "no_data").string() + " --out " + (runs / "r2").string()).code == 1);
}

TEST_CASE("reruns from the echoed config reproduce the metrics") {
  fs::path data = work_dir() / "data_repro", runs = work_dir() / "runs_repro";
  REQUIRE(run("gen-data --task aroundright --seed 2 --max-train 200 --dev-size 10 --out " + data.string()).code == 0);
  std::string common = " --data " + data.string() + " --layer-kind srl --seed 9 --steps 20 " + kTinyModel +
                       " --test-limit 5";
  REQUIRE(run("train" + common + " --out " + (runs / "a").string()).code == 0);
  REQUIRE(run("train --config " + (runs / "a" / "config.json").string() + " --out " + (runs / "b").string()).code ==
          0);
  CHECK(slurp(runs / "a" / "metrics.tsv") == slurp(runs / "b" / "metrics.tsv"));
  CHECK(slurp(runs / "a" / "result.json") == slurp(runs / "b" / "result.json"));
}
