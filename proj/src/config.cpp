// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dbt/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include <json.hpp>

#include "dbt/error.hpp"

namespace dbt {

using nlohmann::json;

namespace {

static_assert(std::is_same_v<std::uint64_t, std::size_t>);

// Reads fields out of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    require(j.is_object(), ErrorCode::kConfig, where_ + ": expected an object");
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      check(v->is_boolean(), key, "a boolean");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      check(v->is_number(), key, "a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      check(v->is_number_unsigned(), key, "a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void get(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      check(v->is_number_integer(), key, "an integer");
      out = v->get<int>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      check(v->is_string(), key, "a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, std::filesystem::path& out) {
    std::string s = out.string();
    get(key, s);
    out = s;
  }
  void get(const std::string& key, std::vector<std::size_t>& out) {
    if (const json* v = find(key)) {
      check(v->is_array(), key, "an array");
      out.clear();
      for (const json& e : *v) {
        check(e.is_number_unsigned(), key, "an array of non-negative integers");
        out.push_back(e.get<std::size_t>());
      }
    }
  }
  Section sub(const std::string& key) {
    static const json kEmpty = json::object();
    const json* v = find(key);
    return Section(v ? *v : kEmpty, where_ + "." + key);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      require(seen_.count(key) > 0, ErrorCode::kConfig,
              where_ + ": unknown key '" + key + "'");
  }

 private:
  void check(bool ok, const std::string& key, const char* what) const {
    require(ok, ErrorCode::kConfig, where_ + "." + key + ": expected " + what);
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json model_json(const ModelConfig& c) {
  return {
      {"variant", variant_name(c.variant)},
      {"channels", c.channels},
      {"attention_dim", c.attention_dim},
      {"heads", c.heads},
      {"blocks", c.blocks},
      {"dilations", c.dilations},
      {"depth", c.depth},
      {"bins", c.bins},
      {"use_time", c.use_time},
      {"use_freq", c.use_freq},
      {"use_aggregate", c.use_aggregate},
      {"interaction", c.interaction},
      {"shared_transformer", c.shared_transformer},
      {"collect_before_interaction", c.collect_before_interaction},
      {"mu", c.mu},
      {"compression", c.compression},
      {"phase_eps", c.phase_eps},
  };
}

ModelConfig read_model(Section s) {
  ModelConfig c;
  std::string name;
  s.get("preset", name);
  if (!name.empty()) c = preset(name);
  std::string variant = variant_name(c.variant);
  s.get("variant", variant);
  c.variant = parse_variant(variant);
  s.get("channels", c.channels);
  s.get("attention_dim", c.attention_dim);
  s.get("heads", c.heads);
  s.get("blocks", c.blocks);
  s.get("dilations", c.dilations);
  s.get("depth", c.depth);
  s.get("bins", c.bins);
  s.get("use_time", c.use_time);
  s.get("use_freq", c.use_freq);
  s.get("use_aggregate", c.use_aggregate);
  s.get("interaction", c.interaction);
  s.get("shared_transformer", c.shared_transformer);
  s.get("collect_before_interaction", c.collect_before_interaction);
  s.get("mu", c.mu);
  s.get("compression", c.compression);
  s.get("phase_eps", c.phase_eps);
  s.finish();
  c.validate();
  return c;
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  require(schema_version == kConfigSchemaVersion, ErrorCode::kConfig,
          "unsupported schema_version " + std::to_string(schema_version));
  model.validate();
  stft.validate();
  require(stft.bins() == model.bins, ErrorCode::kConfig,
          "stft.fft_size gives " + std::to_string(stft.bins()) +
              " bins but model.bins is " + std::to_string(model.bins));
  require(train.batch >= 1, ErrorCode::kConfig, "train.batch must be >= 1");
  require(train.chunk_seconds >= 1.0, ErrorCode::kConfig,
          "train.chunk_seconds must be >= 1");
  require(train.adam.lr >= 0.0 && train.adam.eps > 0.0 &&
              train.adam.beta1 >= 0.0 && train.adam.beta1 < 1.0 &&
              train.adam.beta2 >= 0.0 && train.adam.beta2 < 1.0,
          ErrorCode::kConfig, "train.adam: invalid hyperparameters");
  require(train.adam.grad_clip >= 0.0, ErrorCode::kConfig,
          "train.adam.grad_clip must be >= 0");
  require(workers >= 1, ErrorCode::kConfig, "workers must be >= 1");
  require(audit.params > 0.0 && audit.macs > 0.0 && audit.seconds > 0.0,
          ErrorCode::kConfig, "audit tolerances must be positive");
}

std::string to_json(const ModelConfig& cfg) { return model_json(cfg).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
  json j = parse(text);
  return read_model(Section(j, "model"));
}

std::string to_json(const RunConfig& c) {
  const TrainOptions& t = c.train;
  json j = {
      {"schema_version", c.schema_version},
      {"seed", c.seed},
      {"workers", c.workers},
      {"model", model_json(c.model)},
      {"stft",
       {{"fft_size", c.stft.fft_size},
        {"win_length", c.stft.win_length},
        {"hop", c.stft.hop},
        {"sample_rate", c.stft.sample_rate}}},
      {"train",
       {{"epochs", t.epochs},
        {"batch", t.batch},
        {"chunk_seconds", t.chunk_seconds},
        {"max_steps", t.max_steps},
        {"validate_every", t.validate_every},
        {"checkpoint_every", t.checkpoint_every},
        {"log_every", t.log_every},
        {"max_seconds", t.max_seconds},
        {"adam",
         {{"lr", t.adam.lr},
          {"beta1", t.adam.beta1},
          {"beta2", t.adam.beta2},
          {"eps", t.adam.eps},
          {"grad_clip", t.adam.grad_clip}}}}},
      {"data",
       {{"train_manifest", c.data.train_manifest.string()},
        {"valid_manifest", c.data.valid_manifest.string()},
        {"test_manifest", c.data.test_manifest.string()},
        {"audio_root", c.data.audio_root.string()}}},
      {"output_dir", c.output_dir.string()},
      {"audit",
       {{"params", c.audit.params},
        {"macs", c.audit.macs},
        {"seconds", c.audit.seconds}}},
  };
  return j.dump(2) + "\n";
}

RunConfig run_config_from_json(const std::string& text) {
  json j = parse(text);
  Section root(j, "config");
  RunConfig c;
  const json* version = root.find("schema_version");
  require(version != nullptr, ErrorCode::kConfig,
          "config: missing schema_version");
  require(version->is_number_integer(), ErrorCode::kConfig,
          "config.schema_version: expected an integer");
  c.schema_version = version->get<int>();
  require(c.schema_version == kConfigSchemaVersion, ErrorCode::kConfig,
          "unsupported schema_version " + std::to_string(c.schema_version));
  root.get("seed", c.seed);
  root.get("workers", c.workers);
  c.model = read_model(root.sub("model"));

  Section stft = root.sub("stft");
  stft.get("fft_size", c.stft.fft_size);
  stft.get("win_length", c.stft.win_length);
  stft.get("hop", c.stft.hop);
  stft.get("sample_rate", c.stft.sample_rate);
  stft.finish();

  Section train = root.sub("train");
  TrainOptions& t = c.train;
  train.get("epochs", t.epochs);
  train.get("batch", t.batch);
  train.get("chunk_seconds", t.chunk_seconds);
  train.get("max_steps", t.max_steps);
  train.get("validate_every", t.validate_every);
  train.get("checkpoint_every", t.checkpoint_every);
  train.get("log_every", t.log_every);
  train.get("max_seconds", t.max_seconds);
  Section adam = train.sub("adam");
  adam.get("lr", t.adam.lr);
  adam.get("beta1", t.adam.beta1);
  adam.get("beta2", t.adam.beta2);
  adam.get("eps", t.adam.eps);
  adam.get("grad_clip", t.adam.grad_clip);
  adam.finish();
  train.finish();

  Section data = root.sub("data");
  data.get("train_manifest", c.data.train_manifest);
  data.get("valid_manifest", c.data.valid_manifest);
  data.get("test_manifest", c.data.test_manifest);
  data.get("audio_root", c.data.audio_root);
  data.finish();

  root.get("output_dir", c.output_dir);

  Section audit = root.sub("audit");
  audit.get("params", c.audit.params);
  audit.get("macs", c.audit.macs);
  audit.get("seconds", c.audit.seconds);
  audit.finish();

  root.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo,
          "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return run_config_from_json(ss.str());
}

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIo,
          "cannot write config " + path.string());
  out << to_json(cfg);
  require(static_cast<bool>(out), ErrorCode::kIo,
          "write failed for " + path.string());
}

}  // namespace dbt
