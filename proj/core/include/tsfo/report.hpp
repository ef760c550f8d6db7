// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsfo/experiment.hpp"

namespace tsfo {

enum class ReportFormat { kJson, kCsv, kMarkdown };

/// "json", "csv" or "markdown" (also "md").
ReportFormat parse_report_format(std::string_view name);

/// Per-configuration table plus the energy/accuracy trade-off table.
std::string report_markdown(const ExperimentReport& report);

/// One row per configuration, every derived metric as a column.
std::string report_csv(const ExperimentReport& report);

/// Writes report.json / report.csv / report.md into `dir` (created when
/// missing) plus one history_run<r>.csv per run. Returns the written paths.
std::vector<std::filesystem::path> emit_report(const ExperimentReport& report, const std::filesystem::path& dir,
                                               std::span<const ReportFormat> formats);

/// The report JSON with every "measured" member removed, for bit-stability
/// comparisons across executions.
std::string deterministic_view(const std::string& report_json);

/// Arithmetic mean of the modeled energy efficiency of configuration `name`
/// across several per-dataset reports.
double mean_energy_efficiency(std::span<const ExperimentReport> reports, const std::string& name);

}  // namespace tsfo
