// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <mutex>
#include <optional>

#include "CLI11.hpp"
#include "reports.hpp"
#include "revft/checkpoint.hpp"
#include "run_config.hpp"

namespace revft::cli {

using nlohmann::json;

namespace {

/// Raised for anything wrong with the invocation itself.
struct ConfigFailure {
  std::string message;
};

bool is_config_kind(ErrorKind k) {
  return k == ErrorKind::kConfig || k == ErrorKind::kInvalidPlan || k == ErrorKind::kScalingDegenerate;
}

struct Flags {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
  std::optional<std::string> kind, plan, precision, mode;
  std::optional<double> lambda, beta;
};

json load_config_document(const Flags& f, const std::string& command) {
  json doc = json::object();
  if (!f.config_path.empty()) {
    std::string text;
    try {
      text = read_text_file(f.config_path);
    } catch (const Error& e) {
      throw ConfigFailure{e.what()};
    }
    try {
      doc = json::parse(text);
    } catch (const json::exception& e) {
      throw ConfigFailure{"'" + f.config_path + "' is not valid JSON: " + e.what()};
    }
    if (!doc.is_object()) throw ConfigFailure{"'" + f.config_path + "' must hold a JSON object"};
  }
  if (f.kind) apply_override(doc, "model.kind=\"" + *f.kind + "\"");
  if (f.plan) apply_override(doc, "model.plan=\"" + *f.plan + "\"");
  if (f.precision) apply_override(doc, "model.precision=\"" + *f.precision + "\"");
  if (f.lambda) doc["model"]["lambda"] = *f.lambda;
  if (f.beta) doc["model"]["beta"] = *f.beta;
  if (f.mode) apply_override(doc, "train.mode=\"" + *f.mode + "\"");
  for (const auto& s : f.sets) apply_override(doc, s);
  if (f.seed) {
    doc["seed"] = *f.seed;
    // A seed on the command line pins the sweeps' seed axis as well.
    if (command == "recon-sweep") doc["sweep"]["seeds"] = json::array({*f.seed});
    if (command == "init-sweep") doc["init_sweep"]["seeds"] = json::array({*f.seed});
  }
  if (f.out) doc["out"] = *f.out;
  if (f.threads) doc["threads"] = *f.threads;
  return doc;
}

std::filesystem::path prepare_out(const RunConfig& c) {
  std::filesystem::path dir(c.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create output directory '" + c.out + "': " + ec.message());
  return dir;
}

MeftModel build_model(const RunConfig& c) {
  Rng rng(c.seed);
  if (c.base_checkpoint.empty()) return assemble_model(c.model, rng);
  const BaseModel base = base_from_checkpoint(load_checkpoint(c.base_checkpoint));
  return assemble_model(c.model, base, rng);
}

// --- subcommands ----------------------------------------------------------------

int cmd_gradcheck(const RunConfig& c, std::ostream& out) {
  require_reversible_ready(c, CacheMode::kReversible);
  std::vector<CheckResult> rows;
  if (c.gradcheck.blocks) rows = gradcheck_blocks(c.seed);
  for (auto& r : gradcheck_model(c.model, c.seed, c.gradcheck.batch, c.gradcheck.seq)) {
    r.name = "model/" + r.name;
    rows.push_back(std::move(r));
  }
  if (c.gradcheck.equiv_depth > 0) {
    for (auto& r : gradcheck_equivalence(c.gradcheck.equiv_depth, c.gradcheck.equiv_d,
                                         c.model.precision, c.seed)) {
      rows.push_back(std::move(r));
    }
  }
  const auto dir = prepare_out(c);
  write_text_file((dir / "gradcheck.csv").string(), gradcheck_csv(rows));
  std::size_t failed = 0;
  for (const auto& r : rows) {
    out << (r.passed ? "ok   " : "FAIL ") << r.name << "  " << format_double(r.value)
        << " (tol " << format_double(r.tolerance) << ")\n";
    if (!r.passed) ++failed;
  }
  out << rows.size() - failed << "/" << rows.size() << " checks passed\n";
  return failed == 0 ? kExitOk : kExitFailure;
}

int cmd_recon_sweep(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const std::vector<SweepRow> rows = sweep_run(c.sweep, effective_threads(c));
  std::vector<ReconRecord> records;
  for (const auto& r : rows) {
    if (!r.ok) err << "warning: cell depth=" << r.config.depth << " seed=" << r.seed << ": " << r.error << "\n";
    records.push_back(to_record(r));
  }
  const auto dir = prepare_out(c);
  write_text_file((dir / "recon_sweep.csv").string(), recon_csv(records));
  const ReconConfig& b = c.sweep.base;
  const json meta{{"kind", to_string(b.kind)},
                  {"input_distribution", kReconInputDistribution},
                  {"d", b.d},
                  {"heads", b.heads},
                  {"seq", b.seq},
                  {"batch", b.batch},
                  {"r", b.r},
                  {"all_layers", b.all_layers},
                  {"cells", rows.size()}};
  write_text_file((dir / "recon_sweep.meta.json").string(), json_document(meta));
  out << "wrote " << rows.size() << " rows to " << (dir / "recon_sweep.csv").string() << "\n";
  return kExitOk;
}

struct InitCell {
  std::size_t seed_index = 0;
  InitScheme scheme;
};

int cmd_init_sweep(const RunConfig& c, std::ostream& out) {
  const InitSweepOptions& o = c.init_sweep;
  std::vector<InitCell> cells;
  for (std::size_t si = 0; si < o.seeds.size(); ++si) {
    for (const auto& name : o.schemes) {
      const InitKind kind = parse_init_kind(name);
      const bool takes_c = kind == InitKind::kLoraProbeConstant || kind == InitKind::kLoraProbeGaussian ||
                           kind == InitKind::kIa3Probe;
      if (!takes_c) {
        cells.push_back({si, InitScheme{kind, 0.0, 1.0}});
        continue;
      }
      for (double cv : o.cs) {
        for (const AlphaSpec& a : o.alphas) {
          if (a.inverse_c && cv == 0.0) continue;
          InitScheme s{kind, cv, a.inverse_c ? 1.0 / cv : a.value};
          s.alpha_trainable = s.alpha == 0.0;
          cells.push_back({si, s});
        }
      }
    }
  }
  const std::size_t threads = effective_threads(c);
  std::vector<PlainModel> bases(o.seeds.size());
  parallel_for(o.seeds.size(), threads,
               [&](std::size_t i) { bases[i] = prepare_probe_base(o.experiment, o.seeds[i]); });
  std::vector<InitRecord> records(cells.size());
  parallel_for(cells.size(), threads, [&](std::size_t i) {
    const InitCell& cell = cells[i];
    const std::uint64_t seed = o.seeds[cell.seed_index];
    const ProbeResult r = run_probe(o.experiment, bases[cell.seed_index], cell.scheme, seed);
    records[i] = {to_string(cell.scheme.kind), cell.scheme.c, cell.scheme.alpha, seed, r.final_loss,
                  r.best_dev_metric};
  });
  const auto dir = prepare_out(c);
  write_text_file((dir / "init_sweep.csv").string(), init_csv(records));
  out << "wrote " << records.size() << " rows to " << (dir / "init_sweep.csv").string() << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& c, std::ostream& out) {
  require_reversible_ready(c, c.mode);
  const Dataset data = generate_synthetic_task(c.task);
  if (!c.task.is_lm() && data.classes > c.model.head.classes) {
    fail(ErrorKind::kConfig, "task has " + std::to_string(data.classes) + " classes but model.classes is " +
                                 std::to_string(c.model.head.classes));
  }
  MeftModel model = build_model(c);
  MeftTarget target(model, c.mode);
  TrainConfig tc = c.train;
  tc.seed = c.seed;
  const TrainHistory h = train_loop(target, data, tc);

  const auto dir = prepare_out(c);
  json metrics = history_json(h);
  metrics["mode"] = to_string(c.mode);
  metrics["seed"] = c.seed;
  metrics["task"] = to_string(c.task.kind);
  metrics["model"] = json::parse(model_config_to_json(c.model));
  write_text_file((dir / "metrics.json").string(), json_document(metrics));
  save_model((dir / "model.ckpt").string(), model);
  out << "steps " << h.steps << "  initial_loss " << format_double(h.initial_loss) << "  final_loss "
      << format_double(h.final_loss) << "  best_dev_metric " << format_double(h.best_dev_metric) << "\n";
  if (!std::isfinite(h.final_loss)) return kExitFailure;
  return kExitOk;
}

int cmd_memory_report(const RunConfig& c, std::ostream& out) {
  require_reversible_ready(c, CacheMode::kReversible);
  MeftModel model = build_model(c);
  TokenBatch tokens{c.memory.batch, c.memory.seq, {}};
  Rng rng = Rng(c.seed).derive(5);
  for (std::size_t i = 0; i < tokens.batch * tokens.seq; ++i) {
    tokens.ids.push_back(static_cast<std::int32_t>(rng.uniform_int(c.model.dims.vocab)));
  }
  json report{{"batch", c.memory.batch},
              {"seq", c.memory.seq},
              {"plan", c.model.plan.letters()},
              {"precision", to_string(c.model.precision)},
              {"model", json::parse(model_config_to_json(c.model))}};
  for (CacheMode mode : {CacheMode::kVanilla, CacheMode::kReversible}) {
    report["modes"][to_string(mode)] = ledger_json(memory_ledger_capture(model, tokens, mode));
  }
  const auto dir = prepare_out(c);
  write_text_file((dir / "memory_report.json").string(), json_document(report));
  out << json_document(report["modes"]);
  return kExitOk;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"revft: reversible memory-efficient fine-tuning laboratory", "revft"};
  app.require_subcommand(1, 1);
  Flags f;
  auto add_common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config_path, "JSON run configuration");
    sub->add_option("--set", f.sets, "override a config value, e.g. --set train.lr=0.002");
    sub->add_option("--seed", f.seed, "top-level seed (also pins a sweep's seed axis)");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--threads", f.threads, "worker threads (REVFT_THREADS caps this)");
    sub->add_option("--kind", f.kind, "meft1 | meft2 | meft3");
    sub->add_option("--plan", f.plan, "segment plan letters, e.g. FFRRVV");
    sub->add_option("--lambda", f.lambda, "coupling lambda");
    sub->add_option("--beta", f.beta, "coupling beta");
    sub->add_option("--precision", f.precision, "single | double");
    sub->add_option("--mode", f.mode, "reversible | vanilla (train)");
  };
  const std::vector<std::pair<std::string, std::string>> commands{
      {"gradcheck", "finite-difference and vanilla-vs-reversible gradient suites"},
      {"recon-sweep", "gradient reconstruction error over a parameter grid (CSV)"},
      {"init-sweep", "LoRA / (IA)^3 starting-point grid (CSV)"},
      {"train", "train a model; writes metrics.json and model.ckpt"},
      {"memory-report", "activation-memory ledger in both cache modes (JSON)"}};
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  RunConfig config;
  try {
    config = parse_run_config(load_config_document(f, command));
  } catch (const ConfigFailure& e) {
    err << "config error: " << e.message << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (command == "gradcheck") return cmd_gradcheck(config, out);
    if (command == "recon-sweep") return cmd_recon_sweep(config, out, err);
    if (command == "init-sweep") return cmd_init_sweep(config, out);
    if (command == "train") return cmd_train(config, out);
    return cmd_memory_report(config, out);
  } catch (const Error& e) {
    err << (is_config_kind(e.kind()) ? "config error: " : "error: ") << e.what() << "\n";
    return is_config_kind(e.kind()) ? kExitConfig : kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace revft::cli
