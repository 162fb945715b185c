// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dbt/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "dbt/config.hpp"
#include "dbt/error.hpp"

namespace dbt {

namespace {

constexpr std::array<char, 8> kMagic = {'D', 'B', 'T', 'C', 'K', 'P', 'T', '\0'};
// Guards against absurd sizes in corrupt files.
constexpr std::uint64_t kMaxMeta = 1 << 24;
constexpr std::uint32_t kMaxRank = 8;

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void bytes(const std::string& s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }
  void tensor(const std::string& name, const Tensor& t) {
    pod(static_cast<std::uint32_t>(name.size()));
    bytes(name);
    pod(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) pod(static_cast<std::uint64_t>(d));
    out_.write(reinterpret_cast<const char*>(t.data()),
               static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}
  template <typename T>
  T pod() {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  Tensor tensor(std::string& name) {
    const auto name_len = pod<std::uint32_t>();
    require(name_len < 4096, ErrorCode::kFormat, path_ + ": corrupt tensor name");
    name = bytes(name_len);
    const auto rank = pod<std::uint32_t>();
    require(rank >= 1 && rank <= kMaxRank, ErrorCode::kFormat,
            path_ + ": corrupt rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = pod<std::uint64_t>();
    Tensor t(shape);
    read(reinterpret_cast<char*>(t.data()), t.numel() * sizeof(double));
    return t;
  }

 private:
  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    require(static_cast<std::size_t>(in_.gcount()) == n, ErrorCode::kFormat,
            path_ + ": truncated checkpoint");
  }
  std::ifstream& in_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DbtModel& model,
                     std::uint64_t seed, const TrainState* state) {
  nlohmann::json meta = {
      {"model", nlohmann::json::parse(to_json(model.config()))},
      {"seed", seed},
  };
  if (state) {
    const AdamConfig& a = state->adam.config();
    meta["train"] = {
        {"seed", state->seed},
        {"step", state->step},
        {"epoch", state->epoch},
        {"batch_in_epoch", state->batch_in_epoch},
        {"has_best", state->has_best},
        {"best_valid", state->best_valid},
        {"adam",
         {{"lr", a.lr},
          {"beta1", a.beta1},
          {"beta2", a.beta2},
          {"eps", a.eps},
          {"grad_clip", a.grad_clip},
          {"t", state->adam.steps()}}},
    };
  }
  const std::string meta_text = meta.dump();
  const auto& entries = model.params().entries();
  const bool moments = state && state->adam.first_moment().size() == entries.size();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + tmp.string());
    Writer w(out);
    out.write(kMagic.data(), kMagic.size());
    w.pod(kCheckpointVersion);
    w.pod(static_cast<std::uint64_t>(meta_text.size()));
    w.bytes(meta_text);
    w.pod(static_cast<std::uint64_t>(entries.size() * (moments ? 3 : 1)));
    for (const auto& [name, v] : entries) w.tensor("param/" + name, v.value());
    if (moments) {
      for (std::size_t i = 0; i < entries.size(); ++i)
        w.tensor("adam.m/" + entries[i].first, state->adam.first_moment()[i]);
      for (std::size_t i = 0; i < entries.size(); ++i)
        w.tensor("adam.v/" + entries[i].first, state->adam.second_moment()[i]);
    }
    out.flush();
    require(static_cast<bool>(out), ErrorCode::kIo, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  const std::string magic = r.bytes(kMagic.size());
  require(std::memcmp(magic.data(), kMagic.data(), kMagic.size()) == 0,
          ErrorCode::kFormat, path.string() + ": not a checkpoint file");
  const auto version = r.pod<std::uint32_t>();
  require(version == kCheckpointVersion, ErrorCode::kFormat,
          path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const auto meta_len = r.pod<std::uint64_t>();
  require(meta_len <= kMaxMeta, ErrorCode::kFormat, path.string() + ": corrupt header");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.bytes(meta_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, path.string() + ": bad metadata: " + e.what());
  }

  LoadedCheckpoint ck;
  try {
    ck.config = model_config_from_json(meta.at("model").dump());
    ck.seed = meta.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, path.string() + ": bad metadata: " + e.what());
  }
  ck.model = std::make_unique<DbtModel>(ck.config, ck.seed);

  std::map<std::string, Tensor> tensors;
  const auto count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name;
    Tensor t = r.tensor(name);
    require(tensors.emplace(name, std::move(t)).second, ErrorCode::kFormat,
            path.string() + ": duplicate tensor " + name);
  }
  require(in.peek() == std::char_traits<char>::eof(), ErrorCode::kFormat,
          path.string() + ": trailing bytes after the last tensor");

  auto take = [&](const std::string& key, const Shape& shape) {
    auto it = tensors.find(key);
    require(it != tensors.end(), ErrorCode::kFormat,
            path.string() + ": missing tensor " + key);
    require(it->second.shape() == shape, ErrorCode::kFormat,
            path.string() + ": tensor " + key + " has shape " +
                shape_str(it->second.shape()) + ", expected " + shape_str(shape));
    Tensor t = std::move(it->second);
    tensors.erase(it);
    return t;
  };

  auto& entries = ck.model->params().entries();
  for (const auto& [name, v] : entries) {
    Var var = v;
    var.mutable_value() = take("param/" + name, v.shape());
  }

  if (meta.contains("train")) {
    const auto& t = meta["train"];
    TrainState st;
    try {
      st.seed = t.at("seed").get<std::uint64_t>();
      st.step = t.at("step").get<std::uint64_t>();
      st.epoch = t.at("epoch").get<std::uint64_t>();
      st.batch_in_epoch = t.at("batch_in_epoch").get<std::uint64_t>();
      st.has_best = t.at("has_best").get<bool>();
      st.best_valid = t.at("best_valid").get<double>();
      const auto& a = t.at("adam");
      AdamConfig cfg{a.at("lr").get<double>(), a.at("beta1").get<double>(),
                     a.at("beta2").get<double>(), a.at("eps").get<double>(),
                     a.at("grad_clip").get<double>()};
      st.adam = Adam(cfg, ck.model->params().vars());
      st.adam.set_steps(a.at("t").get<std::uint64_t>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kFormat, path.string() + ": bad training state: " + e.what());
    }
    if (tensors.count("adam.m/" + entries.front().first)) {
      for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& [name, v] = entries[i];
        st.adam.first_moment()[i] = take("adam.m/" + name, v.shape());
        st.adam.second_moment()[i] = take("adam.v/" + name, v.shape());
      }
    }
    ck.state = std::move(st);
  }
  require(tensors.empty(), ErrorCode::kFormat,
          path.string() + ": unexpected tensor " +
              (tensors.empty() ? std::string() : tensors.begin()->first));
  return ck;
}

}  // namespace dbt
