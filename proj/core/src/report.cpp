// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tsfo/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tsfo/error.hpp"

namespace tsfo {

using nlohmann::json;

ReportFormat parse_report_format(std::string_view name) {
  if (name == "json") return ReportFormat::kJson;
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "markdown" || name == "md") return ReportFormat::kMarkdown;
  throw ConfigError("unknown report format '" + std::string(name) + "' (expected json, csv or markdown)");
}

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string with_ci(const char* spec, const RunStats& s) {
  return fmt(spec, s.mean) + " ± " + fmt(spec, s.half_width);
}

// Shortest round-trip representation for machine-readable output.
std::string exact(double v) { return json(v).dump(); }

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.close();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void strip_measured(json& j) {
  if (j.is_object()) {
    j.erase("measured");
    for (auto& [key, value] : j.items()) strip_measured(value);
  } else if (j.is_array()) {
    for (json& v : j) strip_measured(v);
  }
}

}  // namespace

std::string report_markdown(const ExperimentReport& report) {
  const std::vector<MetricsRow> rows = report.metrics();
  std::ostringstream md;
  md << "# Results: " << report.dataset.name << "\n\n";
  md << "Model preset `" << report.config.preset << "`, " << report.config.runs << " run(s), seed "
     << report.config.seed << ". Train " << report.dataset.train_size << ", test " << report.dataset.test_size
     << ", length " << report.dataset.length << ", " << report.dataset.num_classes << " classes.\n\n";
  md << "Values are mean ± 95% CI over runs. *modeled* values come from the energy and FLOP models; "
        "*measured* values come from wall-clock latency on this machine.\n\n";

  md << "| Configuration | Accuracy (%) | Inference Time ms (measured) | Energy J (modeled) | Energy J (measured) "
        "| Memory MB | FLOPs G |\n";
  md << "|---|---|---|---|---|---|---|\n";
  for (const MetricsRow& r : rows) {
    md << "| " << r.name << " | " << with_ci("%.2f", r.accuracy_pct) << " | " << with_ci("%.4f", r.inference_ms)
       << " | " << fmt("%.4g", r.modeled_energy_j) << " | " << fmt("%.4g", r.measured_energy_j) << " | "
       << fmt("%.4f", r.memory_mb) << " | " << fmt("%.6f", r.flops_g) << " |\n";
  }

  md << "\n## Trade-off\n\n";
  md << "| Configuration | Accuracy drop (pts) | Speed-up x (measured) | Energy saving % (modeled) "
        "| Energy saving % (measured) | EE GFLOPS/J (modeled) | AR % | Overall score (modeled) "
        "| EE GFLOPS/J (measured) | Overall score (measured) |\n";
  md << "|---|---|---|---|---|---|---|---|---|---|\n";
  for (const MetricsRow& r : rows) {
    md << "| " << r.name << " | " << fmt("%.2f", r.accuracy_drop_pts) << " | " << fmt("%.3f", r.speedup) << " | "
       << fmt("%.2f", r.modeled_energy_saving_pct) << " | " << fmt("%.2f", r.measured_energy_saving_pct) << " | "
       << fmt("%.4g", r.modeled_efficiency.energy_efficiency) << " | "
       << fmt("%.2f", r.modeled_efficiency.accuracy_retention) << " | " << fmt("%.4g", r.modeled_efficiency.overall)
       << " | " << fmt("%.4g", r.measured_efficiency.energy_efficiency) << " | "
       << fmt("%.4g", r.measured_efficiency.overall) << " |\n";
  }

  md << "\n## Footprint\n\n";
  md << "| Configuration | Stored params | Nonzero params | Nonzero memory MB | Scale tables (bytes) "
        "| Estimated energy J (modeled) |\n";
  md << "|---|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const ConfigurationResult& c = report.configurations[i];
    md << "| " << c.name << " | " << c.params << " | " << c.nonzero_params << " | "
       << fmt("%.4f", rows[i].nonzero_memory_mb) << " | " << c.scale_table_bytes << " | "
       << fmt("%.4g", rows[i].estimated_energy_j) << " |\n";
  }
  return md.str();
}

std::string report_csv(const ExperimentReport& report) {
  const std::vector<MetricsRow> rows = report.metrics();
  std::ostringstream csv;
  csv << "configuration,runs,accuracy_pct_mean,accuracy_pct_ci95,accuracy_drop_pts,"
         "measured_inference_ms_mean,measured_inference_ms_ci95,modeled_energy_j,estimated_energy_j,"
         "measured_energy_j,memory_mb,nonzero_memory_mb,scale_table_bytes,flops_g,params,nonzero_params,"
         "measured_speedup,modeled_energy_saving_pct,measured_energy_saving_pct,modeled_ee_gflops_per_j,"
         "accuracy_retention_pct,modeled_overall_score,measured_ee_gflops_per_j,measured_overall_score\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const MetricsRow& r = rows[i];
    const ConfigurationResult& c = report.configurations[i];
    csv << c.name << ',' << r.accuracy_pct.n << ',' << exact(r.accuracy_pct.mean) << ','
        << exact(r.accuracy_pct.half_width) << ',' << exact(r.accuracy_drop_pts) << ',' << exact(r.inference_ms.mean)
        << ',' << exact(r.inference_ms.half_width) << ',' << exact(r.modeled_energy_j) << ','
        << exact(r.estimated_energy_j) << ',' << exact(r.measured_energy_j) << ',' << exact(r.memory_mb) << ','
        << exact(r.nonzero_memory_mb) << ',' << c.scale_table_bytes << ',' << exact(r.flops_g) << ',' << c.params
        << ',' << c.nonzero_params << ',' << exact(r.speedup) << ',' << exact(r.modeled_energy_saving_pct) << ','
        << exact(r.measured_energy_saving_pct) << ',' << exact(r.modeled_efficiency.energy_efficiency) << ','
        << exact(r.modeled_efficiency.accuracy_retention) << ',' << exact(r.modeled_efficiency.overall) << ','
        << exact(r.measured_efficiency.energy_efficiency) << ',' << exact(r.measured_efficiency.overall) << '\n';
  }
  return csv.str();
}

std::vector<std::filesystem::path> emit_report(const ExperimentReport& report, const std::filesystem::path& dir,
                                               std::span<const ReportFormat> formats) {
  if (report.configurations.empty()) throw InputError("nothing to report");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& text) {
    const std::filesystem::path p = dir / name;
    write_file(p, text);
    written.push_back(p);
  };
  for (ReportFormat f : formats) {
    switch (f) {
      case ReportFormat::kJson:
        put("report.json", report.to_json() + "\n");
        break;
      case ReportFormat::kCsv:
        put("report.csv", report_csv(report));
        for (std::size_t r = 0; r < report.histories.size(); ++r) {
          put("history_run" + std::to_string(r) + ".csv", report.histories[r].to_csv());
        }
        break;
      case ReportFormat::kMarkdown:
        put("report.md", report_markdown(report));
        break;
    }
  }
  return written;
}

std::string deterministic_view(const std::string& report_json) {
  json j = json::parse(report_json, nullptr, false);
  if (j.is_discarded()) throw ParseError("report is not valid JSON");
  strip_measured(j);
  return j.dump(2);
}

double mean_energy_efficiency(std::span<const ExperimentReport> reports, const std::string& name) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const ExperimentReport& r : reports) {
    const std::vector<MetricsRow> rows = r.metrics();
    for (const MetricsRow& m : rows) {
      if (m.name == name) {
        sum += m.modeled_efficiency.energy_efficiency;
        ++n;
      }
    }
  }
  if (n == 0) throw InputError("no report contains configuration '" + name + "'");
  return sum / static_cast<double>(n);
}

}  // namespace tsfo
