// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include "reports.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace revft::cli {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    fail(ErrorKind::kFormat, "not a number: '" + std::string(text) + "'");
  }
  return v;
}

namespace {

std::uint64_t parse_u64(std::string_view text) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    fail(ErrorKind::kFormat, "not an unsigned integer: '" + std::string(text) + "'");
  }
  return v;
}

std::vector<CsvRow> body(std::string_view text, const CsvRow& header) {
  std::vector<CsvRow> rows = parse_csv(text);
  if (rows.empty() || rows.front() != header) fail(ErrorKind::kFormat, "unexpected CSV header");
  rows.erase(rows.begin());
  for (const auto& r : rows) {
    if (r.size() != header.size()) fail(ErrorKind::kFormat, "CSV row has the wrong number of cells");
  }
  return rows;
}

}  // namespace

std::string csv_document(const CsvRow& header, const std::vector<CsvRow>& rows) {
  std::string out;
  auto line = [&](const CsvRow& r) {
    if (r.size() != header.size()) {
      fail(ErrorKind::kFormat, "CSV row has " + std::to_string(r.size()) + " cells; header has " +
                                   std::to_string(header.size()));
    }
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (r[i].find_first_of(",\"\n\r") != std::string::npos) {
        fail(ErrorKind::kFormat, "CSV cell needs quoting: '" + r[i] + "'");
      }
      if (i) out += ',';
      out += r[i];
    }
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

std::vector<CsvRow> parse_csv(std::string_view text) {
  std::vector<CsvRow> rows;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    CsvRow row;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      row.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open '" + path + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorKind::kIo, "failed writing '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// --- recon-sweep ----------------------------------------------------------------

ReconRecord to_record(const SweepRow& row) {
  return {row.config.depth, row.config.lambda, row.config.beta, row.config.mu, row.config.sigma,
          row.config.precision, row.seed, row.report.max_abs, row.report.mean_abs};
}

std::string recon_csv(const std::vector<ReconRecord>& rows) {
  std::vector<CsvRow> cells;
  for (const auto& r : rows) {
    cells.push_back({std::to_string(r.depth), format_double(r.lambda), format_double(r.beta),
                     format_double(r.mu), format_double(r.sigma), std::string(to_string(r.precision)),
                     std::to_string(r.seed), format_double(r.max_abs), format_double(r.mean_abs)});
  }
  return csv_document(kReconHeader, cells);
}

std::vector<ReconRecord> read_recon_csv(std::string_view text) {
  std::vector<ReconRecord> out;
  for (const auto& r : body(text, kReconHeader)) {
    out.push_back({static_cast<std::size_t>(parse_u64(r[0])), parse_double(r[1]), parse_double(r[2]),
                   parse_double(r[3]), parse_double(r[4]), parse_precision(r[5]), parse_u64(r[6]),
                   parse_double(r[7]), parse_double(r[8])});
  }
  return out;
}

// --- init-sweep -------------------------------------------------------------------

std::string init_csv(const std::vector<InitRecord>& rows) {
  std::vector<CsvRow> cells;
  for (const auto& r : rows) {
    cells.push_back({r.scheme, format_double(r.c), format_double(r.alpha), std::to_string(r.seed),
                     format_double(r.final_loss), format_double(r.best_dev_metric)});
  }
  return csv_document(kInitHeader, cells);
}

std::vector<InitRecord> read_init_csv(std::string_view text) {
  std::vector<InitRecord> out;
  for (const auto& r : body(text, kInitHeader)) {
    out.push_back({r[0], parse_double(r[1]), parse_double(r[2]), parse_u64(r[3]), parse_double(r[4]),
                   parse_double(r[5])});
  }
  return out;
}

// --- gradcheck --------------------------------------------------------------------

std::string gradcheck_csv(const std::vector<CheckResult>& rows) {
  std::vector<CsvRow> cells;
  for (const auto& r : rows) {
    cells.push_back({r.name, format_double(r.value), format_double(r.tolerance), r.passed ? "1" : "0"});
  }
  return csv_document(kGradcheckHeader, cells);
}

std::vector<CheckResult> read_gradcheck_csv(std::string_view text) {
  std::vector<CheckResult> out;
  for (const auto& r : body(text, kGradcheckHeader)) {
    out.push_back({r[0], parse_double(r[1]), parse_double(r[2]), r[3] == "1"});
  }
  return out;
}

// --- JSON -------------------------------------------------------------------------------

json ledger_json(const MemoryLedger& ledger) {
  json persistent = json::object();
  for (MemoryCategory c : kMemoryCategories) persistent[std::string(to_string(c))] = ledger[c];
  return {{"persistent_bytes", persistent},
          {"persistent_total", ledger.persistent_total()},
          {"peak_transient_bytes", ledger.peak_transient_bytes}};
}

MemoryLedger ledger_from_json(const json& j) {
  MemoryLedger ledger;
  try {
    for (MemoryCategory c : kMemoryCategories) {
      ledger[c] = j.at("persistent_bytes").at(std::string(to_string(c))).get<std::size_t>();
    }
    ledger.peak_transient_bytes = j.at("peak_transient_bytes").get<std::size_t>();
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed memory ledger: ") + e.what());
  }
  return ledger;
}

json history_json(const TrainHistory& h) {
  json epochs = json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"steps", e.steps},
                      {"train_loss", e.train_loss},
                      {"dev_loss", e.dev_loss},
                      {"dev_metric", e.dev_metric}});
  }
  return {{"initial_loss", h.initial_loss},
          {"final_loss", h.final_loss},
          {"steps", h.steps},
          {"best_dev_metric", h.best_dev_metric},
          {"best_epoch", h.best_epoch},
          {"stopped_early", h.stopped_early},
          {"step_losses", h.step_losses},
          {"epochs", epochs},
          {"memory", ledger_json(h.ledger)}};
}

TrainHistory history_from_json(const json& j) {
  TrainHistory h;
  try {
    h.initial_loss = j.at("initial_loss").get<double>();
    h.final_loss = j.at("final_loss").get<double>();
    h.steps = j.at("steps").get<std::size_t>();
    h.best_dev_metric = j.at("best_dev_metric").get<double>();
    h.best_epoch = j.at("best_epoch").get<std::size_t>();
    h.stopped_early = j.at("stopped_early").get<bool>();
    h.step_losses = j.at("step_losses").get<std::vector<double>>();
    for (const auto& e : j.at("epochs")) {
      h.epochs.push_back({e.at("epoch").get<std::size_t>(), e.at("steps").get<std::size_t>(),
                          e.at("train_loss").get<double>(), e.at("dev_loss").get<double>(),
                          e.at("dev_metric").get<double>()});
    }
    h.ledger = ledger_from_json(j.at("memory"));
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed training history: ") + e.what());
  }
  return h;
}

std::string json_document(const json& j) { return j.dump(2) + "\n"; }

}  // namespace revft::cli
