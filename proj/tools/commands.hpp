#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sqt::tools {

/// Raised for bad arguments detected after parsing; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenDataArgs {
  std::string task = "addjump";
  int augment = 2;
  int atomic = 1000;
  std::uint64_t seed = 1;
  std::size_t max_train = 200000;
  std::size_t dev_size = 1000;
  std::string out;
};

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string layer_kind;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
  std::int64_t steps = -1;
  double adam_beta1 = -1;
  std::string resume;
  std::int64_t test_limit = -1;
  bool quiet = false;
};

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string split = "test";
  int beam = 0;
  std::size_t limit = 0;
  std::string predictions;
};

struct KlArgs {
  std::string ckpt;
  std::string pairs;
  std::string data;
  std::string split = "test";
  std::size_t max_pairs = 0;
  std::string write_pairs;
  std::string trace_dir;
  bool symmetric = false;
};

struct ClusterArgs {
  std::string ckpt;
  std::string tags;
  bool scan_tags = false;
  std::string tsv;
};

struct ExportArgs {
  std::string ckpt;
  std::string out;
  std::string side = "source";
};

int gen_data(const GenDataArgs& a);
int train(const TrainArgs& a);
int eval(const EvalArgs& a);
int analyze_kl(const KlArgs& a);
int analyze_clusters(const ClusterArgs& a);
int export_embeddings(const ExportArgs& a);

}  // namespace sqt::tools
