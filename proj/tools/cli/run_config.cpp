// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include "run_config.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>
#include <thread>

#include "revft/checkpoint.hpp"

namespace revft::cli {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& msg) { fail(ErrorKind::kConfig, msg); }

/// Consumes keys of one JSON object; leftovers are errors.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) config_error(label() + " must be a JSON object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <class T>
  void get(const std::string& key, T& dst) {
    if (!has(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception&) {
      config_error(path(key) + " has the wrong type");
    }
  }

  /// Unsigned integers must not arrive as negative or fractional numbers.
  void get_count(const std::string& key, std::size_t& dst) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned()) config_error(path(key) + " must be a non-negative integer");
    dst = v.get<std::size_t>();
  }

  void get_seed(const std::string& key, std::uint64_t& dst) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned()) config_error(path(key) + " must be a non-negative integer");
    dst = v.get<std::uint64_t>();
  }

  template <class T, class Fn>
  void get_list(const std::string& key, std::vector<T>& dst, Fn convert) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) config_error(path(key) + " must be an array");
    dst.clear();
    for (const auto& item : v) dst.push_back(convert(item, path(key)));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) config_error("unknown key '" + path(key) + "'");
    }
  }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

 private:
  std::string label() const { return where_.empty() ? "config" : where_; }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) config_error(where + " entries must be numbers");
  return v.get<double>();
}

std::uint64_t as_seed(const json& v, const std::string& where) {
  if (!v.is_number_unsigned()) config_error(where + " entries must be non-negative integers");
  return v.get<std::uint64_t>();
}

std::size_t as_count(const json& v, const std::string& where) {
  if (!v.is_number_unsigned()) config_error(where + " entries must be non-negative integers");
  return v.get<std::size_t>();
}

template <class Parse>
auto parse_name(const std::string& value, const std::string& where, Parse parse) {
  try {
    return parse(value);
  } catch (const Error&) {
    config_error(where + ": unrecognized value '" + value + "'");
  }
}

Precision as_precision(const json& v, const std::string& where) {
  if (!v.is_string()) config_error(where + " entries must be strings");
  return parse_name(v.get<std::string>(), where, [](const std::string& s) { return parse_precision(s); });
}

void read_task(Reader r, TaskSpec& t) {
  std::string kind;
  if (r.has("kind")) {
    r.get("kind", kind);
    t.kind = parse_task_kind(kind);
  }
  r.get_count("vocab", t.vocab);
  r.get_count("seq", t.seq);
  r.get_count("n_train", t.n_train);
  r.get_count("n_dev", t.n_dev);
  r.get("path", t.path);
  r.get("lm", t.lm);
  r.get_seed("seed", t.seed);
  r.finish();
  t.validate();
}

void read_train(Reader r, TrainConfig& t, CacheMode* mode) {
  r.get("lr", t.lr);
  r.get_count("batch", t.batch);
  r.get_count("epochs", t.epochs);
  r.get_count("max_steps", t.max_steps);
  r.get("warmup_ratio", t.warmup_ratio);
  r.get_count("patience", t.patience);
  r.get("weight_decay", t.adam.weight_decay);
  r.get("max_grad_norm", t.adam.max_grad_norm);
  r.get("beta1", t.adam.beta1);
  r.get("beta2", t.adam.beta2);
  r.get("eps", t.adam.eps);
  if (mode != nullptr && r.has("mode")) {
    std::string m;
    r.get("mode", m);
    *mode = parse_name(m, r.path("mode"), parse_cache_mode);
  }
  r.finish();
  t.validate();
}

void read_gradcheck(Reader r, GradcheckOptions& g) {
  r.get("blocks", g.blocks);
  r.get_count("batch", g.batch);
  r.get_count("seq", g.seq);
  r.get_count("equiv_depth", g.equiv_depth);
  r.get_count("equiv_d", g.equiv_d);
  r.finish();
  if (g.batch == 0 || g.seq == 0) config_error("gradcheck.batch and gradcheck.seq must be >= 1");
  if (g.equiv_depth > 0 && (g.equiv_d == 0 || g.equiv_d % 4 != 0)) {
    config_error("gradcheck.equiv_d must be a positive multiple of 4");
  }
}

void read_sweep(Reader r, SweepSpec& s) {
  ReconConfig& b = s.base;
  if (r.has("kind")) {
    std::string k;
    r.get("kind", k);
    b.kind = parse_name(k, r.path("kind"), parse_meft_kind);
  }
  r.get_count("d", b.d);
  r.get_count("heads", b.heads);
  r.get_count("seq", b.seq);
  r.get_count("batch", b.batch);
  r.get_count("r", b.r);
  r.get("all_layers", b.all_layers);
  r.get_list("depths", s.depths, as_count);
  r.get_list("lambdas", s.lambdas, as_number);
  r.get_list("betas", s.betas, as_number);
  r.get_list("mus", s.mus, as_number);
  r.get_list("sigmas", s.sigmas, as_number);
  r.get_list("precisions", s.precisions, as_precision);
  r.get_list("seeds", s.seeds, as_seed);
  r.finish();
  if (b.d == 0 || b.heads == 0 || b.d % b.heads != 0) config_error("sweep.heads must divide sweep.d");
  if (b.seq == 0 || b.batch == 0 || b.r == 0) config_error("sweep.seq, batch and r must be >= 1");
  s.validate();
}

void read_init_sweep(Reader r, InitSweepOptions& o) {
  ProbeExperiment& e = o.experiment;
  r.get_list("schemes", o.schemes, [](const json& v, const std::string& where) {
    if (!v.is_string()) config_error(where + " entries must be strings");
    const std::string name = v.get<std::string>();
    parse_name(name, where, parse_init_kind);
    return name;
  });
  r.get_list("cs", o.cs, as_number);
  r.get_list("alphas", o.alphas, [](const json& v, const std::string& where) {
    if (v.is_string() && v.get<std::string>() == "1/c") return AlphaSpec{true, 0.0};
    return AlphaSpec{false, as_number(v, where)};
  });
  r.get_list("seeds", o.seeds, as_seed);
  r.get_count("d", e.dims.d);
  r.get_count("heads", e.dims.heads);
  r.get_count("layers", e.layers);
  r.get_count("r", e.r);
  if (r.has("precision")) e.precision = as_precision(r.at("precision"), r.path("precision"));
  r.get("pretrained", e.pretrained);
  r.get_seed("pretext_seed_offset", e.pretext_seed_offset);
  if (r.has("task")) read_task(Reader(r.at("task"), r.path("task")), e.task);
  if (r.has("pretrain")) read_train(Reader(r.at("pretrain"), r.path("pretrain")), e.pretrain, nullptr);
  if (r.has("finetune")) read_train(Reader(r.at("finetune"), r.path("finetune")), e.finetune, nullptr);
  r.finish();
  if (o.schemes.empty() || o.cs.empty() || o.alphas.empty() || o.seeds.empty()) {
    config_error("init_sweep axes must be non-empty");
  }
  if (e.task.is_lm()) config_error("init_sweep needs a classification task");
  e.dims.vocab = e.task.vocab;
  e.dims.max_len = std::max(e.dims.max_len, e.task.seq);
  if (e.dims.d == 0 || e.dims.heads == 0 || e.dims.d % e.dims.heads != 0) {
    config_error("init_sweep.heads must divide init_sweep.d");
  }
  if (e.layers == 0 || e.r == 0) config_error("init_sweep.layers and r must be >= 1");
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  Reader r(j, "");
  r.get_seed("seed", c.seed);
  r.get("out", c.out);
  r.get_count("threads", c.threads);
  if (r.has("model")) c.model = model_config_from_json(r.at("model").dump());
  r.get("base_checkpoint", c.base_checkpoint);
  if (r.has("task")) read_task(Reader(r.at("task"), "task"), c.task);
  if (r.has("train")) read_train(Reader(r.at("train"), "train"), c.train, &c.mode);
  if (r.has("gradcheck")) read_gradcheck(Reader(r.at("gradcheck"), "gradcheck"), c.gradcheck);
  if (r.has("sweep")) read_sweep(Reader(r.at("sweep"), "sweep"), c.sweep);
  if (r.has("init_sweep")) read_init_sweep(Reader(r.at("init_sweep"), "init_sweep"), c.init_sweep);
  if (r.has("memory")) {
    Reader m(r.at("memory"), "memory");
    m.get_count("batch", c.memory.batch);
    m.get_count("seq", c.memory.seq);
    m.finish();
    if (c.memory.batch == 0 || c.memory.seq == 0) config_error("memory.batch and memory.seq must be >= 1");
  }
  r.finish();

  c.model.validate();
  c.task.validate();
  if (c.task.vocab != c.model.dims.vocab) {
    config_error("task.vocab (" + std::to_string(c.task.vocab) + ") must equal model.vocab (" +
                 std::to_string(c.model.dims.vocab) + ")");
  }
  if (c.task.seq > c.model.dims.max_len) config_error("task.seq exceeds model.max_len");
  if (c.task.is_lm() != (c.model.head.kind == HeadKind::kLmTied)) {
    config_error("LM tasks need the lm_tied head and classification tasks the classify head");
  }
  if (c.memory.seq > c.model.dims.max_len) config_error("memory.seq exceeds model.max_len");
  if (c.gradcheck.seq > c.model.dims.max_len) config_error("gradcheck.seq exceeds model.max_len");
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) config_error("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) config_error("override key '" + key + "' has an empty component");
    if (!node->is_object()) config_error("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

void require_reversible_ready(const RunConfig& config, CacheMode mode) {
  if (mode == CacheMode::kReversible && config.model.plan.n_reversible > 0) {
    config.model.scaling.require_invertible();
  }
}

std::size_t effective_threads(const RunConfig& config) {
  std::size_t n = config.threads;
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("REVFT_THREADS")) {
    char* end = nullptr;
    const unsigned long cap = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && cap > 0) n = std::min<std::size_t>(n, cap);
  }
  return n;
}

}  // namespace revft::cli
