#include "sqt/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sqt::train {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : it->get<T>();
}

void write_atomic(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Tensor {
  std::string name;
  const float* data;
  Index rows, cols;
};

}  // namespace

json to_json(const model::ModelConfig& c) {
  return json{{"src_vocab", c.src_vocab},
              {"tgt_vocab", c.tgt_vocab},
              {"enc_layers", c.enc_layers},
              {"dec_layers", c.dec_layers},
              {"heads", c.heads},
              {"d_model", c.d_model},
              {"d_ff", c.d_ff},
              {"layer_kind", model::to_string(c.kind)},
              {"beta", c.beta},
              {"lambda_code", c.lambda_code},
              {"dropout", c.dropout},
              {"tie_decoder_embeddings", c.tie_decoder_embeddings},
              {"srl_stop_grad_z", c.srl_stop_grad_z},
              {"codes_src", c.sovq.codes_src},
              {"codes_tgt", c.sovq.codes_tgt},
              {"temperature", c.sovq.temperature},
              {"alpha", c.sovq.alpha},
              {"ema_decay", c.sovq.decay},
              {"ema_smoothing", c.sovq.smoothing},
              {"straight_through", c.sovq.straight_through},
              {"boundary_markers", c.sovq.boundary_markers},
              {"joint_prior", c.sovq.joint_prior},
              {"target_bidirectional", c.sovq.target_bidirectional},
              {"seed", c.seed}};
}

model::ModelConfig model_config_from_json(const json& j) {
  model::ModelConfig c;
  c.src_vocab = j.at("src_vocab").get<Index>();
  c.tgt_vocab = j.at("tgt_vocab").get<Index>();
  c.enc_layers = j.at("enc_layers").get<Index>();
  c.dec_layers = j.at("dec_layers").get<Index>();
  c.heads = j.at("heads").get<Index>();
  c.d_model = j.at("d_model").get<Index>();
  c.d_ff = j.at("d_ff").get<Index>();
  c.kind = model::parse_layer_kind(j.at("layer_kind").get<std::string>());
  c.beta = j.at("beta").get<double>();
  c.lambda_code = j.at("lambda_code").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.tie_decoder_embeddings = j.at("tie_decoder_embeddings").get<bool>();
  c.srl_stop_grad_z = get_or(j, "srl_stop_grad_z", false);
  c.sovq.codes_src = j.at("codes_src").get<Index>();
  c.sovq.codes_tgt = j.at("codes_tgt").get<Index>();
  c.sovq.temperature = j.at("temperature").get<double>();
  c.sovq.alpha = j.at("alpha").get<double>();
  c.sovq.decay = j.at("ema_decay").get<double>();
  c.sovq.smoothing = j.at("ema_smoothing").get<double>();
  c.sovq.straight_through = j.at("straight_through").get<bool>();
  c.sovq.boundary_markers = get_or(j, "boundary_markers", true);
  c.sovq.joint_prior = get_or(j, "joint_prior", true);
  c.sovq.target_bidirectional = get_or(j, "target_bidirectional", false);
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

json to_json(const TrainConfig& c) {
  return json{{"lr", c.lr},
              {"warmup_steps", c.warmup_steps},
              {"total_steps", c.total_steps},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"adam_beta1", c.adam.beta1},
              {"adam_beta2", c.adam.beta2},
              {"adam_eps", c.adam.eps},
              {"clip_norm", c.clip_norm},
              {"eval_every", c.eval_every},
              {"dev_limit", c.dev_limit},
              {"checkpoint_every_eval", c.checkpoint_every_eval}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.lr = j.at("lr").get<double>();
  c.warmup_steps = j.at("warmup_steps").get<std::int64_t>();
  c.total_steps = j.at("total_steps").get<std::int64_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.adam.beta1 = j.at("adam_beta1").get<double>();
  c.adam.beta2 = j.at("adam_beta2").get<double>();
  c.adam.eps = j.at("adam_eps").get<double>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.eval_every = j.at("eval_every").get<std::int64_t>();
  c.dev_limit = j.at("dev_limit").get<std::size_t>();
  c.checkpoint_every_eval = get_or(j, "checkpoint_every_eval", true);
  return c;
}

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ull;
  }
  return h;
}

void save_checkpoint(const fs::path& dir, const CheckpointContents& c) {
  if (c.model == nullptr) throw std::invalid_argument("save_checkpoint: no model");
  fs::create_directories(dir);
  const auto& m = *c.model;
  std::vector<Tensor> tensors;
  for (const auto& p : m.params()) tensors.push_back({p->name, p->value.data(), p->rows(), p->cols()});
  if (m.config().uses_codebooks()) {
    for (auto [tag, cb] : {std::pair{"codebook_src", &m.codebook_src()}, std::pair{"codebook_tgt", &m.codebook_tgt()}}) {
      std::string t = tag;
      tensors.push_back({t + ".embeddings", cb->embeddings().data(), cb->size(), cb->width()});
      tensors.push_back({t + ".counts", cb->ema_counts().data(), cb->size(), 1});
      tensors.push_back({t + ".sums", cb->ema_sums().data(), cb->size(), cb->width()});
    }
  }
  if (c.adam != nullptr) {
    std::size_t i = 0;
    for (const auto& p : m.params()) {
      tensors.push_back({"adam.m." + p->name, c.adam->m[i].data(), p->rows(), p->cols()});
      tensors.push_back({"adam.v." + p->name, c.adam->v[i].data(), p->rows(), p->cols()});
      ++i;
    }
  }

  std::string bytes;
  json entries = json::array();
  for (const auto& t : tensors) {
    const std::size_t n = static_cast<std::size_t>(t.rows * t.cols) * sizeof(float);
    entries.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}, {"offset", bytes.size()}});
    bytes.append(reinterpret_cast<const char*>(t.data), n);
  }
  json manifest{{"version", kCheckpointVersion},
                {"step", c.step},
                {"model", to_json(m.config())},
                {"train", to_json(c.train)},
                {"tensors", entries},
                {"total_bytes", bytes.size()},
                {"checksum", fnv1a(bytes.data(), bytes.size())},
                {"optimizer", c.adam != nullptr},
                {"optimizer_t", c.adam != nullptr ? c.adam->t : 0},
                {"vocab", c.src_vocab != nullptr && c.tgt_vocab != nullptr},
                {"extra", c.extra}};
  if (c.src_vocab != nullptr && c.tgt_vocab != nullptr) {
    c.src_vocab->save((dir / "src_vocab.txt").string());
    c.tgt_vocab->save((dir / "tgt_vocab.txt").string());
  }
  write_atomic(dir / "weights.bin", bytes);
  write_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

CheckpointManifest read_checkpoint_manifest(const fs::path& dir) {
  json j;
  try {
    j = json::parse(read_all(dir / "manifest.json"));
  } catch (const json::parse_error& e) {
    throw CheckpointError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  CheckpointManifest m;
  m.version = j.at("version").get<int>();
  if (m.version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(m.version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  m.step = j.at("step").get<std::int64_t>();
  m.model = model_config_from_json(j.at("model"));
  m.train = train_config_from_json(j.at("train"));
  std::uint64_t expected = 0;
  for (const auto& e : j.at("tensors")) {
    CheckpointEntry ce{e.at("name").get<std::string>(), e.at("shape").at(0).get<Index>(),
                       e.at("shape").at(1).get<Index>(), e.at("offset").get<std::uint64_t>()};
    if (ce.offset != expected) throw CheckpointError("manifest offsets not contiguous at " + ce.name);
    expected += static_cast<std::uint64_t>(ce.rows * ce.cols) * sizeof(float);
    m.entries.push_back(std::move(ce));
  }
  m.total_bytes = j.at("total_bytes").get<std::uint64_t>();
  if (m.total_bytes != expected) throw CheckpointError("manifest total_bytes disagrees with tensor shapes");
  m.checksum = j.at("checksum").get<std::uint64_t>();
  m.has_optimizer = j.at("optimizer").get<bool>();
  m.optimizer_t = j.at("optimizer_t").get<std::int64_t>();
  m.extra = get_or(j, "extra", json::object());
  return m;
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  CheckpointManifest man = read_checkpoint_manifest(dir);
  std::string bytes = read_all(dir / "weights.bin");
  if (bytes.size() != man.total_bytes) {
    throw CheckpointError("weights.bin has " + std::to_string(bytes.size()) + " bytes, manifest expects " +
                          std::to_string(man.total_bytes));
  }
  if (fnv1a(bytes.data(), bytes.size()) != man.checksum) throw CheckpointError("weights.bin checksum mismatch");

  LoadedCheckpoint out{man, model::Seq2Seq<float>(man.model), std::nullopt, std::nullopt, std::nullopt};
  std::unordered_map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : man.entries) by_name[e.name] = &e;
  auto read = [&](const std::string& name, Index rows, Index cols) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint lacks tensor " + name);
    const auto& e = *it->second;
    if (e.rows != rows || e.cols != cols) {
      throw CheckpointError("tensor " + name + " has shape " + shape_string(e.rows, e.cols) + ", model expects " +
                            shape_string(rows, cols));
    }
    Matrix<float> m(rows, cols);
    std::memcpy(m.data(), bytes.data() + e.offset, static_cast<std::size_t>(rows * cols) * sizeof(float));
    return m;
  };
  auto& model = out.model;
  for (auto& p : model.params()) p->value = read(p->name, p->rows(), p->cols());
  if (model.config().uses_codebooks()) {
    for (auto [tag, cb] : {std::pair{"codebook_src", &model.codebook_src()}, std::pair{"codebook_tgt", &model.codebook_tgt()}}) {
      std::string t = tag;
      Matrix<float> counts = read(t + ".counts", cb->size(), 1);
      cb->set_state(read(t + ".embeddings", cb->size(), cb->width()), Eigen::VectorXf(counts.col(0)),
                    read(t + ".sums", cb->size(), cb->width()));
    }
  }
  if (man.has_optimizer) {
    AdamState<float> adam(model.params());
    std::size_t i = 0;
    for (const auto& p : model.params()) {
      adam.m[i] = read("adam.m." + p->name, p->rows(), p->cols());
      adam.v[i] = read("adam.v." + p->name, p->rows(), p->cols());
      ++i;
    }
    adam.t = man.optimizer_t;
    out.adam = std::move(adam);
  }
  if (fs::exists(dir / "src_vocab.txt") && fs::exists(dir / "tgt_vocab.txt")) {
    out.src_vocab = data::Vocab::load((dir / "src_vocab.txt").string());
    out.tgt_vocab = data::Vocab::load((dir / "tgt_vocab.txt").string());
  }
  return out;
}

}  // namespace sqt::train
