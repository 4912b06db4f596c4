#include "sqt/cli/run_config.hpp"

#include <fstream>
#include <functional>
#include <map>

namespace sqt::cli {

using nlohmann::json;

namespace {

struct Field {
  std::function<void(RunConfig&, const json&)> set;
  std::function<json(const RunConfig&)> get;
};

template <typename T>
Field field(T RunConfig::*outer) {
  return {[outer](RunConfig& c, const json& v) { c.*outer = v.get<T>(); },
          [outer](const RunConfig& c) { return json(c.*outer); }};
}

template <typename M, typename T>
Field field(M RunConfig::*outer, T M::*inner) {
  return {[outer, inner](RunConfig& c, const json& v) { (c.*outer).*inner = v.get<T>(); },
          [outer, inner](const RunConfig& c) { return json((c.*outer).*inner); }};
}

template <typename T>
Field sovq_field(T sovq::SoVQConfig::*inner) {
  return {[inner](RunConfig& c, const json& v) { c.model.sovq.*inner = v.get<T>(); },
          [inner](const RunConfig& c) { return json(c.model.sovq.*inner); }};
}

template <typename T>
Field adam_field(T train::AdamConfig::*inner) {
  return {[inner](RunConfig& c, const json& v) { c.train.adam.*inner = v.get<T>(); },
          [inner](const RunConfig& c) { return json(c.train.adam.*inner); }};
}

const std::map<std::string, Field>& fields() {
  using model::ModelConfig;
  using train::DecodeOptions;
  using train::TrainConfig;
  static const std::map<std::string, Field> table = {
      {"enc_layers", field(&RunConfig::model, &ModelConfig::enc_layers)},
      {"dec_layers", field(&RunConfig::model, &ModelConfig::dec_layers)},
      {"heads", field(&RunConfig::model, &ModelConfig::heads)},
      {"d_model", field(&RunConfig::model, &ModelConfig::d_model)},
      {"d_ff", field(&RunConfig::model, &ModelConfig::d_ff)},
      {"layer_kind",
       {[](RunConfig& c, const json& v) { c.model.kind = model::parse_layer_kind(v.get<std::string>()); },
        [](const RunConfig& c) { return json(model::to_string(c.model.kind)); }}},
      {"beta", field(&RunConfig::model, &ModelConfig::beta)},
      {"lambda_code", field(&RunConfig::model, &ModelConfig::lambda_code)},
      {"dropout", field(&RunConfig::model, &ModelConfig::dropout)},
      {"tie_decoder_embeddings", field(&RunConfig::model, &ModelConfig::tie_decoder_embeddings)},
      {"srl_stop_grad_z", field(&RunConfig::model, &ModelConfig::srl_stop_grad_z)},
      {"codes_src", sovq_field(&sovq::SoVQConfig::codes_src)},
      {"codes_tgt", sovq_field(&sovq::SoVQConfig::codes_tgt)},
      {"temperature", sovq_field(&sovq::SoVQConfig::temperature)},
      {"alpha", sovq_field(&sovq::SoVQConfig::alpha)},
      {"ema_decay", sovq_field(&sovq::SoVQConfig::decay)},
      {"ema_smoothing", sovq_field(&sovq::SoVQConfig::smoothing)},
      {"straight_through", sovq_field(&sovq::SoVQConfig::straight_through)},
      {"boundary_markers", sovq_field(&sovq::SoVQConfig::boundary_markers)},
      {"joint_prior", sovq_field(&sovq::SoVQConfig::joint_prior)},
      {"target_bidirectional", sovq_field(&sovq::SoVQConfig::target_bidirectional)},
      {"lr", field(&RunConfig::train, &TrainConfig::lr)},
      {"warmup_steps", field(&RunConfig::train, &TrainConfig::warmup_steps)},
      {"total_steps", field(&RunConfig::train, &TrainConfig::total_steps)},
      {"batch_size", field(&RunConfig::train, &TrainConfig::batch_size)},
      {"clip_norm", field(&RunConfig::train, &TrainConfig::clip_norm)},
      {"eval_every", field(&RunConfig::train, &TrainConfig::eval_every)},
      {"dev_limit", field(&RunConfig::train, &TrainConfig::dev_limit)},
      {"checkpoint_every_eval", field(&RunConfig::train, &TrainConfig::checkpoint_every_eval)},
      {"adam_beta1", adam_field(&train::AdamConfig::beta1)},
      {"adam_beta2", adam_field(&train::AdamConfig::beta2)},
      {"adam_eps", adam_field(&train::AdamConfig::eps)},
      {"beam", field(&RunConfig::decode, &DecodeOptions::beam)},
      {"max_len_a",
       {[](RunConfig& c, const json& v) { c.decode.rule.a = v.get<double>(); },
        [](const RunConfig& c) { return json(c.decode.rule.a); }}},
      {"max_len_b",
       {[](RunConfig& c, const json& v) { c.decode.rule.b = v.get<double>(); },
        [](const RunConfig& c) { return json(c.decode.rule.b); }}},
      {"seed", field(&RunConfig::seed)},
      {"data", field(&RunConfig::data_dir)},
      {"out", field(&RunConfig::out_dir)},
      {"test_limit", field(&RunConfig::test_limit)},
  };
  return table;
}

}  // namespace

RunConfig::RunConfig() {
  model.enc_layers = 2;
  model.dec_layers = 2;
  model.heads = 2;
  model.d_model = 64;
  model.d_ff = 128;
  decode.rule = {5.0, 10.0};
}

void RunConfig::merge(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("run config must be a JSON object");
  const auto& table = fields();
  for (const auto& [key, value] : j.items()) {
    auto it = table.find(key);
    if (it == table.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    try {
      it->second.set(*this, value);
    } catch (const json::exception& e) {
      throw std::invalid_argument("config key '" + key + "': " + e.what());
    }
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& table = fields();
  auto it = table.find(key);
  if (it == table.end()) throw std::invalid_argument("unknown config key '" + key + "'");
  json current = it->second.get(*this);
  json parsed;
  if (current.is_string()) {
    parsed = value;
  } else {
    try {
      parsed = json::parse(value);
    } catch (const json::parse_error&) {
      throw std::invalid_argument("config key '" + key + "': cannot parse '" + value + "'");
    }
  }
  merge(json{{key, parsed}});
}

json RunConfig::to_json() const {
  json j = json::object();
  for (const auto& [key, f] : fields()) j[key] = f.get(*this);
  return j;
}

void RunConfig::sync_seed() {
  model.seed = seed;
  train.seed = seed;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [key, f] : fields()) out.push_back(key);
    return out;
  }();
  return k;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("malformed config " + path + ": " + e.what());
  }
  RunConfig c;
  c.merge(j);
  return c;
}

}  // namespace sqt::cli
