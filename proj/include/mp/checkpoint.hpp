#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <unordered_map>
#include <variant>

#include "json.hpp"
#include "mp/losses.hpp"
#include "mp/model.hpp"

namespace mp {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

/// Per-parameter first/second Adam moments plus the shared step counter.
template <class S>
struct AdamState {
  std::unordered_map<std::string, Tensor<S>> m;
  std::unordered_map<std::string, Tensor<S>> v;
  std::int64_t step = 0;
};

/// Serializable training state. The on-disk layout is:
///   bytes 0..7   magic "MPCKPT" + 2-byte version "01"
///   u64          metadata length, then that many bytes of UTF-8 JSON
///   u32          tensor record count
///   per tensor   u32 name length | name bytes | u8 dtype (0=f32, 1=f64)
///                | u8 rank (2) | u64 dims[rank] | little-endian payload
/// Optimizer moments are stored as tensors named opt.m.<param> / opt.v.<param>.
template <class S>
struct Checkpoint {
  ModelConfig config;
  ParamStore<S> params;
  AdamState<S> opt;
  int epoch = 0;
  double best_metric = 0;
  std::string rng_state;
  LossConvention convention = LossConvention::prose_consistent;
  bool priors_set = true;
};

namespace ckpt_detail {

inline constexpr char kMagic[6] = {'M', 'P', 'C', 'K', 'P', 'T'};
inline constexpr char kVersion[2] = {'0', '1'};

template <class S>
constexpr std::uint8_t dtype_tag() {
  if constexpr (std::is_same_v<S, float>) {
    return 0;
  } else {
    return 1;
  }
}

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"input_width", c.input_width}, {"latent_width", c.latent_width},
          {"query_width", c.query_width}, {"output_width", c.output_width},
          {"depth", c.depth},             {"heads", c.heads},
          {"mel_bands", c.mel_bands},     {"seed", c.seed}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.input_width = j.at("input_width").get<std::int64_t>();
  c.latent_width = j.at("latent_width").get<std::int64_t>();
  c.query_width = j.at("query_width").get<std::int64_t>();
  c.output_width = j.at("output_width").get<std::int64_t>();
  c.depth = j.at("depth").get<std::int64_t>();
  c.heads = j.at("heads").get<std::int64_t>();
  c.mel_bands = j.at("mel_bands").get<std::int64_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

template <class S>
void append_tensor(std::string& buf, const std::string& name, const Tensor<S>& t) {
  const std::uint32_t name_len = static_cast<std::uint32_t>(name.size());
  buf.append(reinterpret_cast<const char*>(&name_len), 4);
  buf.append(name);
  const std::uint8_t dtype = dtype_tag<S>();
  buf.push_back(static_cast<char>(dtype));
  buf.push_back(static_cast<char>(2));  // rank
  const std::uint64_t dims[2] = {static_cast<std::uint64_t>(t.rows()),
                                 static_cast<std::uint64_t>(t.cols())};
  buf.append(reinterpret_cast<const char*>(dims), 16);
  buf.append(reinterpret_cast<const char*>(t.raw().data()), t.size() * sizeof(S));
}

struct Reader {
  const std::string& data;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) {
    if (pos + n > data.size()) throw DataError(std::string("truncated checkpoint: ") + what);
  }
  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, data.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string get_bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = data.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace ckpt_detail

template <class S>
void save_checkpoint(const Checkpoint<S>& ckpt, const std::filesystem::path& path) {
  using nlohmann::json;
  json meta;
  meta["format_version"] = 1;
  meta["precision"] = std::is_same_v<S, float> ? "f32" : "f64";
  meta["model"] = ckpt_detail::config_to_json(ckpt.config);
  meta["epoch"] = ckpt.epoch;
  meta["best_metric"] = ckpt.best_metric;
  meta["adam_step"] = ckpt.opt.step;
  meta["rng_state"] = ckpt.rng_state;
  meta["loss_convention"] = to_string(ckpt.convention);
  meta["priors_set"] = ckpt.priors_set;
  json frozen = json::array();
  for (const auto& name : ckpt.params.names()) {
    if (!ckpt.params.param(name).trainable) frozen.push_back(name);
  }
  meta["frozen"] = frozen;
  const std::string meta_str = meta.dump();

  std::string buf;
  buf.append(ckpt_detail::kMagic, 6);
  buf.append(ckpt_detail::kVersion, 2);
  const std::uint64_t meta_len = meta_str.size();
  buf.append(reinterpret_cast<const char*>(&meta_len), 8);
  buf.append(meta_str);

  std::uint32_t count = static_cast<std::uint32_t>(ckpt.params.count());
  count += static_cast<std::uint32_t>(ckpt.opt.m.size() + ckpt.opt.v.size());
  buf.append(reinterpret_cast<const char*>(&count), 4);
  for (const auto& name : ckpt.params.names()) {
    ckpt_detail::append_tensor(buf, name, ckpt.params.value(name));
  }
  for (const auto& name : ckpt.params.names()) {
    auto mi = ckpt.opt.m.find(name);
    if (mi != ckpt.opt.m.end()) ckpt_detail::append_tensor(buf, "opt.m." + name, mi->second);
    auto vi = ckpt.opt.v.find(name);
    if (vi != ckpt.opt.v.end()) ckpt_detail::append_tensor(buf, "opt.v." + name, vi->second);
  }
  atomic_write_file(path, buf);
}

template <class S>
Checkpoint<S> parse_checkpoint(const std::string& data, const nlohmann::json& meta,
                               std::size_t body_pos) {
  using ckpt_detail::Reader;
  Checkpoint<S> ckpt;
  ckpt.config = ckpt_detail::config_from_json(meta.at("model"));
  ckpt.epoch = meta.at("epoch").get<int>();
  ckpt.best_metric = meta.at("best_metric").get<double>();
  ckpt.opt.step = meta.at("adam_step").get<std::int64_t>();
  ckpt.rng_state = meta.at("rng_state").get<std::string>();
  ckpt.convention = parse_loss_convention(meta.at("loss_convention").get<std::string>());
  ckpt.priors_set = meta.at("priors_set").get<bool>();
  std::unordered_map<std::string, bool> frozen;
  for (const auto& f : meta.at("frozen")) frozen[f.get<std::string>()] = true;

  ckpt.params = ParamStore<S>(ckpt.config.seed);
  Reader r{data, body_pos};
  const std::uint32_t count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.get<std::uint32_t>("tensor name length");
    if (name_len > 4096) throw DataError("corrupt checkpoint: unreasonable tensor name length");
    const std::string name = r.get_bytes(name_len, "tensor name");
    const std::uint8_t dtype = r.get<std::uint8_t>("dtype tag");
    if (dtype != ckpt_detail::dtype_tag<S>()) {
      throw DataError("checkpoint tensor '" + name + "' dtype does not match file precision");
    }
    const std::uint8_t rank = r.get<std::uint8_t>("rank");
    if (rank != 2) throw DataError("checkpoint tensor '" + name + "' has unsupported rank");
    const std::uint64_t rows = r.get<std::uint64_t>("rows");
    const std::uint64_t cols = r.get<std::uint64_t>("cols");
    if (rows > (1ull << 32) || cols > (1ull << 32)) {
      throw DataError("corrupt checkpoint: unreasonable tensor shape");
    }
    Tensor<S> t(static_cast<std::int64_t>(rows), static_cast<std::int64_t>(cols));
    r.need(t.size() * sizeof(S), "tensor payload");
    std::memcpy(t.raw().data(), data.data() + r.pos, t.size() * sizeof(S));
    r.pos += t.size() * sizeof(S);
    if (name.rfind("opt.m.", 0) == 0) {
      ckpt.opt.m.emplace(name.substr(6), std::move(t));
    } else if (name.rfind("opt.v.", 0) == 0) {
      ckpt.opt.v.emplace(name.substr(6), std::move(t));
    } else {
      ckpt.params.add(name, std::move(t), !frozen.count(name));
    }
  }
  if (r.pos != data.size()) throw DataError("corrupt checkpoint: trailing bytes");
  return ckpt;
}

using AnyCheckpoint = std::variant<Checkpoint<float>, Checkpoint<double>>;

inline AnyCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 8 || std::memcmp(data.data(), ckpt_detail::kMagic, 6) != 0) {
    throw DataError("invalid checkpoint magic: " + path.string());
  }
  if (std::memcmp(data.data() + 6, ckpt_detail::kVersion, 2) != 0) {
    throw DataError("unsupported checkpoint version '" + data.substr(6, 2) + "': " + path.string());
  }
  ckpt_detail::Reader r{data, 8};
  const std::uint64_t meta_len = r.get<std::uint64_t>("metadata length");
  if (meta_len > data.size()) throw DataError("corrupt checkpoint: metadata length out of range");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.get_bytes(meta_len, "metadata"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint metadata: ") + e.what());
  }
  try {
    const std::string precision = meta.at("precision").get<std::string>();
    if (precision == "f32") return parse_checkpoint<float>(data, meta, r.pos);
    if (precision == "f64") return parse_checkpoint<double>(data, meta, r.pos);
    throw DataError("unsupported checkpoint precision: " + precision);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint metadata: ") + e.what());
  }
}

template <class S>
Model<S> model_from_checkpoint(const Checkpoint<S>& ckpt) {
  return Model<S>(ckpt.config, ckpt.params, ckpt.priors_set);
}

}  // namespace mp
