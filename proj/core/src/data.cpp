// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "revft/train.hpp"

namespace revft {

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kSynthClassify: return "synth_classify";
    case TaskKind::kSynthLm: return "synth_lm";
    case TaskKind::kJsonl: return "jsonl";
  }
  return "?";
}

TaskKind parse_task_kind(const std::string& name) {
  if (name == "synth_classify") return TaskKind::kSynthClassify;
  if (name == "synth_lm") return TaskKind::kSynthLm;
  if (name == "jsonl" || name == "jsonl_dataset") return TaskKind::kJsonl;
  fail(ErrorKind::kConfig, "unknown task kind '" + name + "'");
}

void TaskSpec::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::kConfig, m); };
  if (vocab < 2) bad("task.vocab must be >= 2");
  if (seq == 0) bad("task.seq must be >= 1");
  if (n_train == 0 || n_dev == 0) bad("task sample counts must be > 0");
  if (kind == TaskKind::kJsonl && path.empty()) bad("jsonl task needs a path");
}

namespace {

std::vector<std::int32_t> uniform_tokens(std::size_t n, std::size_t vocab, Rng& rng) {
  std::vector<std::int32_t> out(n);
  for (auto& t : out) t = static_cast<std::int32_t>(rng.uniform_int(vocab));
  return out;
}

Example parity_example(const TaskSpec& spec, Rng& rng) {
  Example e;
  e.tokens = uniform_tokens(spec.seq, spec.vocab, rng);
  std::int64_t sum = 0;
  for (auto t : e.tokens) sum += t;
  e.label = static_cast<std::int32_t>(sum % 2);
  return e;
}

/// Row-stochastic transition matrix with log-normal weights, so each row
/// favours a few successors.
std::vector<double> markov_transitions(std::size_t vocab, Rng& rng) {
  std::vector<double> p(vocab * vocab);
  for (std::size_t a = 0; a < vocab; ++a) {
    double total = 0.0;
    for (std::size_t b = 0; b < vocab; ++b) {
      p[a * vocab + b] = std::exp(2.0 * rng.normal());
      total += p[a * vocab + b];
    }
    for (std::size_t b = 0; b < vocab; ++b) p[a * vocab + b] /= total;
  }
  return p;
}

Example markov_example(const TaskSpec& spec, const std::vector<double>& p, Rng& rng) {
  Example e;
  e.tokens.resize(spec.seq + 1);
  std::size_t cur = rng.uniform_int(spec.vocab);
  e.tokens[0] = static_cast<std::int32_t>(cur);
  for (std::size_t t = 1; t <= spec.seq; ++t) {
    double u = rng.uniform();
    std::size_t next = spec.vocab - 1;
    for (std::size_t b = 0; b < spec.vocab; ++b) {
      u -= p[cur * spec.vocab + b];
      if (u < 0.0) {
        next = b;
        break;
      }
    }
    e.tokens[t] = static_cast<std::int32_t>(next);
    cur = next;
  }
  return e;
}

}  // namespace

Dataset generate_synthetic_task(const TaskSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  Rng rng(spec.seed);
  Rng train_rng = rng.derive(1);
  Rng dev_rng = rng.derive(2);
  switch (spec.kind) {
    case TaskKind::kSynthClassify:
      for (std::size_t i = 0; i < spec.n_train; ++i) ds.train.push_back(parity_example(spec, train_rng));
      for (std::size_t i = 0; i < spec.n_dev; ++i) ds.dev.push_back(parity_example(spec, dev_rng));
      break;
    case TaskKind::kSynthLm: {
      Rng chain_rng = rng.derive(3);
      const auto p = markov_transitions(spec.vocab, chain_rng);
      for (std::size_t i = 0; i < spec.n_train; ++i) ds.train.push_back(markov_example(spec, p, train_rng));
      for (std::size_t i = 0; i < spec.n_dev; ++i) ds.dev.push_back(markov_example(spec, p, dev_rng));
      break;
    }
    case TaskKind::kJsonl: {
      std::vector<Example> all = read_jsonl(spec.path, spec);
      if (all.size() < spec.n_train + spec.n_dev) {
        fail(ErrorKind::kFormat, "'" + spec.path + "' has " + std::to_string(all.size()) +
                                     " examples; need " + std::to_string(spec.n_train + spec.n_dev));
      }
      ds.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(spec.n_train));
      ds.dev.assign(all.begin() + static_cast<std::ptrdiff_t>(spec.n_train),
                    all.begin() + static_cast<std::ptrdiff_t>(spec.n_train + spec.n_dev));
      std::int32_t max_label = 1;
      for (const auto& e : all) max_label = std::max(max_label, e.label);
      ds.classes = static_cast<std::size_t>(max_label) + 1;
      break;
    }
  }
  return ds;
}

std::vector<Example> read_jsonl(const std::string& path, const TaskSpec& spec) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path + "'");
  const bool lm = spec.is_lm();
  const std::size_t want_len = lm ? spec.seq + 1 : spec.seq;
  std::vector<Example> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno) + ": ";
    Example e;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object()) fail(ErrorKind::kFormat, where + "expected a JSON object");
      for (const auto& [key, value] : j.items()) {
        if (key != "tokens" && key != "label") fail(ErrorKind::kFormat, where + "unknown key '" + key + "'");
      }
      e.tokens = j.at("tokens").get<std::vector<std::int32_t>>();
      if (!lm) {
        if (!j.contains("label")) fail(ErrorKind::kFormat, where + "missing label");
        e.label = j.at("label").get<std::int32_t>();
        if (e.label < 0) fail(ErrorKind::kFormat, where + "negative label");
      }
    } catch (const nlohmann::json::exception& ex) {
      fail(ErrorKind::kFormat, where + ex.what());
    }
    if (e.tokens.size() != want_len) {
      fail(ErrorKind::kFormat, where + "expected " + std::to_string(want_len) + " tokens, got " +
                                   std::to_string(e.tokens.size()));
    }
    for (auto t : e.tokens) {
      if (t < 0 || static_cast<std::size_t>(t) >= spec.vocab) {
        fail(ErrorKind::kFormat, where + "token id " + std::to_string(t) + " outside vocabulary");
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_jsonl(const std::string& path, std::span<const Example> examples, bool with_labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open '" + path + "' for writing");
  for (const auto& e : examples) {
    nlohmann::json j;
    j["tokens"] = e.tokens;
    if (with_labels) j["label"] = e.label;
    out << j.dump() << '\n';
  }
}

Batch make_batch(std::span<const Example> examples, std::span<const std::size_t> indices, bool lm) {
  if (indices.empty()) fail(ErrorKind::kInvalidArgument, "make_batch: empty batch");
  Batch b;
  const std::size_t len = examples[indices[0]].tokens.size();
  const std::size_t seq = lm ? len - 1 : len;
  b.tokens.batch = indices.size();
  b.tokens.seq = seq;
  b.tokens.ids.reserve(indices.size() * seq);
  for (std::size_t i : indices) {
    if (i >= examples.size()) fail(ErrorKind::kOutOfRange, "make_batch: index out of range");
    const auto& toks = examples[i].tokens;
    if (toks.size() != len) fail(ErrorKind::kShapeMismatch, "make_batch: ragged examples");
    b.tokens.ids.insert(b.tokens.ids.end(), toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(seq));
    if (lm) {
      b.targets.insert(b.targets.end(), toks.begin() + 1, toks.end());
    } else {
      b.targets.push_back(examples[i].label);
    }
  }
  return b;
}

}  // namespace revft
