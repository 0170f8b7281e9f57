// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0
//
// CSV / JSON report writers and their readers. Numbers are written in the
// shortest form that parses back to the same double, so reports round-trip.
#ifndef REVFT_TOOLS_REPORTS_HPP_
#define REVFT_TOOLS_REPORTS_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "revft/analysis.hpp"
#include "revft/train.hpp"

namespace revft::cli {

std::string format_double(double v);
double parse_double(std::string_view text);

using CsvRow = std::vector<std::string>;

/// Comma-separated, header first, LF endings. Cells must not contain commas,
/// quotes or newlines.
std::string csv_document(const CsvRow& header, const std::vector<CsvRow>& rows);
std::vector<CsvRow> parse_csv(std::string_view text);

void write_text_file(const std::string& path, std::string_view text);
std::string read_text_file(const std::string& path);

// --- recon-sweep ----------------------------------------------------------------

inline const CsvRow kReconHeader{"depth", "lambda", "beta",     "mu",      "sigma",
                                 "precision", "seed", "max_abs", "mean_abs"};

struct ReconRecord {
  std::size_t depth = 0;
  double lambda = 0, beta = 0, mu = 0, sigma = 0;
  Precision precision = Precision::kSingle;
  std::uint64_t seed = 0;
  double max_abs = 0, mean_abs = 0;
};

ReconRecord to_record(const SweepRow& row);
std::string recon_csv(const std::vector<ReconRecord>& rows);
std::vector<ReconRecord> read_recon_csv(std::string_view text);

// --- init-sweep -------------------------------------------------------------------

inline const CsvRow kInitHeader{"scheme", "c", "alpha", "seed", "final_loss", "best_dev_metric"};

struct InitRecord {
  std::string scheme;
  double c = 0, alpha = 1;
  std::uint64_t seed = 0;
  double final_loss = 0, best_dev_metric = 0;
};

std::string init_csv(const std::vector<InitRecord>& rows);
std::vector<InitRecord> read_init_csv(std::string_view text);

// --- gradcheck ------------------------------------------------------------------------

inline const CsvRow kGradcheckHeader{"check", "value", "tolerance", "passed"};

std::string gradcheck_csv(const std::vector<CheckResult>& rows);
std::vector<CheckResult> read_gradcheck_csv(std::string_view text);

// --- JSON -------------------------------------------------------------------------------

nlohmann::json ledger_json(const MemoryLedger& ledger);
MemoryLedger ledger_from_json(const nlohmann::json& j);

nlohmann::json history_json(const TrainHistory& h);
TrainHistory history_from_json(const nlohmann::json& j);

/// Pretty-printed with a trailing newline.
std::string json_document(const nlohmann::json& j);

}  // namespace revft::cli

#endif  // REVFT_TOOLS_REPORTS_HPP_
