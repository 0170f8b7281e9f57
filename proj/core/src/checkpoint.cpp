// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include "revft/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace revft {

using nlohmann::json;

namespace {

void require_little_endian() {
  if constexpr (std::endian::native != std::endian::little) {
    fail(ErrorKind::kFormat, "checkpoints are only supported on little-endian hosts");
  }
}

}  // namespace

const Tensor* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.value;
  return nullptr;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  require_little_endian();
  json header;
  header["format"] = "revft-checkpoint";
  header["version"] = kCheckpointVersion;
  try {
    header["metadata"] = json::parse(ckpt.metadata_json);
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  json entries = json::array();
  std::size_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    entries.push_back({{"name", t.name},
                       {"shape", t.value.shape()},
                       {"precision", std::string(to_string(t.value.precision()))},
                       {"offset", offset},
                       {"nbytes", t.value.nbytes()}});
    offset += t.value.nbytes();
  }
  header["tensors"] = std::move(entries);
  const std::string text = header.dump();

  std::string out;
  out.reserve(16 + text.size() + offset);
  out.append(kCheckpointMagic);
  std::uint64_t len = text.size();
  char len_bytes[8];
  std::memcpy(len_bytes, &len, 8);
  out.append(len_bytes, 8);
  out.append(text);
  for (const auto& t : ckpt.tensors) {
    dispatch(t.value.precision(), [&]<class T>(T) {
      const auto data = t.value.data<T>();
      out.append(reinterpret_cast<const char*>(data.data()), data.size_bytes());
    });
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  require_little_endian();
  if (bytes.size() < 16 || bytes.substr(0, 8) != kCheckpointMagic) {
    fail(ErrorKind::kFormat, "not a revft checkpoint (bad magic)");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 8);
  if (len > bytes.size() - 16) fail(ErrorKind::kFormat, "checkpoint header length out of range");
  json header;
  try {
    header = json::parse(bytes.substr(16, len));
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const std::string_view data = bytes.substr(16 + len);

  Checkpoint ckpt;
  try {
    if (header.at("format") != "revft-checkpoint") fail(ErrorKind::kFormat, "unknown checkpoint format");
    if (header.at("version").get<int>() != kCheckpointVersion) {
      fail(ErrorKind::kFormat, "unsupported checkpoint version");
    }
    ckpt.metadata_json = header.at("metadata").dump();
    for (const auto& e : header.at("tensors")) {
      const auto shape = e.at("shape").get<Shape>();
      const Precision precision = parse_precision(e.at("precision").get<std::string>());
      const auto offset = e.at("offset").get<std::size_t>();
      const auto nbytes = e.at("nbytes").get<std::size_t>();
      Tensor t(shape, precision);
      if (nbytes != t.nbytes() || offset > data.size() || nbytes > data.size() - offset) {
        fail(ErrorKind::kFormat, "tensor '" + e.at("name").get<std::string>() +
                                     "' has an inconsistent byte range");
      }
      dispatch(precision, [&]<class T>(T) {
        std::memcpy(t.data<T>().data(), data.data() + offset, nbytes);
      });
      ckpt.tensors.push_back({e.at("name").get<std::string>(), std::move(t)});
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed checkpoint header: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "failed writing '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

// --- config JSON -----------------------------------------------------------------

namespace {

/// Reads keys from a JSON object and rejects any it did not consume.
class StrictObject {
 public:
  StrictObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail(ErrorKind::kConfig, where_ + " must be a JSON object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <class T>
  void get(const std::string& key, T& dst) {
    if (!has(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(ErrorKind::kConfig, where_ + "." + key + " has the wrong type");
    }
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) fail(ErrorKind::kConfig, "unknown key '" + where_ + "." + key + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <class Parse>
auto parse_enum(const std::string& name, Parse parse) {
  try {
    return parse(name);
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, e.what());
  }
}

json config_to_json_object(const ModelConfig& c) {
  return {
      {"d", c.dims.d},
      {"heads", c.dims.heads},
      {"vocab", c.dims.vocab},
      {"max_len", c.dims.max_len},
      {"ffn", c.dims.ffn_dim()},
      {"causal", c.dims.causal},
      {"kind", to_string(c.kind)},
      {"plan",
       {{"frozen", c.plan.n_frozen}, {"reversible", c.plan.n_reversible}, {"vanilla", c.plan.n_vanilla}}},
      {"r", c.r},
      {"sigma", c.sigma},
      {"adapter_mean", c.adapter_mean},
      {"base_init", {{"mean", c.base_init.mean}, {"std", c.base_init.std}}},
      {"lambda", c.scaling.lambda},
      {"beta", c.scaling.beta},
      {"gamma", c.scaling.gamma},
      {"merge", c.merge.kind == MergeMode::Kind::kMean ? "mean" : "gamma_lm"},
      {"head", c.head.kind == HeadKind::kClassify ? "classify" : "lm_tied"},
      {"classes", c.head.classes},
      {"precision", std::string(to_string(c.precision))},
  };
}

SegmentPlan plan_from_json(const json& j) {
  if (j.is_string()) {
    try {
      return SegmentPlan::parse(j.get<std::string>());
    } catch (const Error& e) {
      fail(ErrorKind::kConfig, e.what());
    }
  }
  SegmentPlan plan;
  StrictObject o(j, "model.plan");
  o.get("frozen", plan.n_frozen);
  o.get("reversible", plan.n_reversible);
  o.get("vanilla", plan.n_vanilla);
  o.finish();
  return plan;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) {
  return config_to_json_object(config).dump();
}

ModelConfig model_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, std::string("model config is not valid JSON: ") + e.what());
  }
  ModelConfig c;
  StrictObject o(j, "model");
  o.get("d", c.dims.d);
  o.get("heads", c.dims.heads);
  o.get("vocab", c.dims.vocab);
  o.get("max_len", c.dims.max_len);
  o.get("ffn", c.dims.ffn);
  o.get("causal", c.dims.causal);
  std::string s;
  if (o.has("kind")) {
    o.get("kind", s);
    c.kind = parse_enum(s, parse_meft_kind);
  }
  c.scaling = ScalingConfig::defaults_for(c.kind);
  if (o.has("plan")) c.plan = plan_from_json(o.raw("plan"));
  o.get("r", c.r);
  o.get("sigma", c.sigma);
  o.get("adapter_mean", c.adapter_mean);
  if (o.has("base_init")) {
    StrictObject b(o.raw("base_init"), "model.base_init");
    b.get("mean", c.base_init.mean);
    b.get("std", c.base_init.std);
    b.finish();
  }
  o.get("lambda", c.scaling.lambda);
  o.get("beta", c.scaling.beta);
  o.get("gamma", c.scaling.gamma);
  if (o.has("merge")) {
    o.get("merge", s);
    if (s == "mean") {
      c.merge = MergeMode::mean();
    } else if (s == "gamma_lm") {
      c.merge = MergeMode::gamma_lm(c.scaling.gamma);
    } else {
      fail(ErrorKind::kConfig, "model.merge must be 'mean' or 'gamma_lm'");
    }
  }
  c.merge.gamma = c.scaling.gamma;
  if (o.has("head")) {
    o.get("head", s);
    if (s == "classify") {
      c.head.kind = HeadKind::kClassify;
    } else if (s == "lm_tied") {
      c.head.kind = HeadKind::kLmTied;
    } else {
      fail(ErrorKind::kConfig, "model.head must be 'classify' or 'lm_tied'");
    }
  }
  o.get("classes", c.head.classes);
  if (o.has("precision")) {
    o.get("precision", s);
    c.precision = parse_enum(s, [](const std::string& n) { return parse_precision(n); });
  }
  o.finish();
  c.validate();
  return c;
}

// --- models ----------------------------------------------------------------------------

void restore_params(const ParamList& params, const Checkpoint& ckpt) {
  for (const auto& ref : params) {
    const Tensor* t = ckpt.find(ref.path);
    if (t == nullptr) fail(ErrorKind::kFormat, "checkpoint lacks tensor '" + ref.path + "'");
    if (t->shape() != ref.param->value.shape() || t->precision() != ref.param->value.precision()) {
      fail(ErrorKind::kFormat, "checkpoint tensor '" + ref.path + "' has shape " +
                                   shape_string(t->shape()) + " / " +
                                   std::string(to_string(t->precision())) + ", expected " +
                                   shape_string(ref.param->value.shape()));
    }
    ref.param->value = *t;
  }
}

Checkpoint model_checkpoint(MeftModel& model) {
  Checkpoint ckpt;
  for (const auto& ref : model.params()) ckpt.tensors.push_back({ref.path, ref.param->value});
  ckpt.metadata_json = json{{"kind", "meft_model"}, {"model", config_to_json_object(model.config)}}.dump();
  return ckpt;
}

MeftModel model_from_checkpoint(const Checkpoint& ckpt) {
  const json meta = json::parse(ckpt.metadata_json);
  if (meta.value("kind", "") != "meft_model" || !meta.contains("model")) {
    fail(ErrorKind::kFormat, "checkpoint does not hold a MEFT model");
  }
  const ModelConfig config = model_config_from_json(meta.at("model").dump());
  Rng rng(0);
  MeftModel model = assemble_model(config, rng);
  restore_params(model.params(), ckpt);
  return model;
}

void save_model(const std::string& path, MeftModel& model) {
  save_checkpoint(path, model_checkpoint(model));
}

MeftModel load_model(const std::string& path) { return model_from_checkpoint(load_checkpoint(path)); }

Checkpoint base_checkpoint(BaseModel& base) {
  Checkpoint ckpt;
  for (const auto& ref : collect_params(base)) ckpt.tensors.push_back({ref.path, ref.param->value});
  const ModelDims& d = base.dims;
  ckpt.metadata_json = json{{"kind", "base_model"},
                            {"base",
                             {{"d", d.d},
                              {"heads", d.heads},
                              {"vocab", d.vocab},
                              {"max_len", d.max_len},
                              {"ffn", d.ffn_dim()},
                              {"causal", d.causal},
                              {"layers", base.layers.size()},
                              {"precision", std::string(to_string(
                                                base.embedding.tok.value.precision()))}}}}
                           .dump();
  return ckpt;
}

BaseModel base_from_checkpoint(const Checkpoint& ckpt) {
  const json meta = json::parse(ckpt.metadata_json);
  if (meta.value("kind", "") != "base_model" || !meta.contains("base")) {
    fail(ErrorKind::kFormat, "checkpoint does not hold a base model");
  }
  const json& b = meta.at("base");
  ModelDims dims;
  std::size_t layers = 0;
  Precision precision = Precision::kDouble;
  try {
    dims.d = b.at("d").get<std::size_t>();
    dims.heads = b.at("heads").get<std::size_t>();
    dims.vocab = b.at("vocab").get<std::size_t>();
    dims.max_len = b.at("max_len").get<std::size_t>();
    dims.ffn = b.at("ffn").get<std::size_t>();
    dims.causal = b.at("causal").get<bool>();
    layers = b.at("layers").get<std::size_t>();
    precision = parse_precision(b.at("precision").get<std::string>());
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed base metadata: ") + e.what());
  }
  Rng rng(0);
  BaseModel base = make_base_model(dims, layers, {}, precision, rng);
  restore_params(collect_params(base), ckpt);
  return base;
}

}  // namespace revft
