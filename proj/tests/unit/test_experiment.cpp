// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tsfo/error.hpp"
#include "tsfo/experiment.hpp"
#include "tsfo/quantization.hpp"
#include "tsfo/report.hpp"

namespace tsfo {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_of(const std::string& s, char c) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), c)); }

ExperimentConfig small_experiment() {
  ExperimentConfig c;
  c.data.synth.num_classes = 3;
  c.data.synth.per_class = 20;
  c.data.synth.length = 48;
  c.data.synth.noise = 0.3;
  c.epochs = 2;
  c.batch_size = 16;
  c.finetune_epochs = 1;
  c.qat_epochs = 1;
  c.runs = 2;
  c.seed = 5;
  c.calibration_size = 8;
  c.timing_warmup = 1;
  c.timing_iterations = 5;
  c.optimizations = {parse_pipeline("static-quant"), parse_pipeline("l2-prune"),
                     parse_pipeline("l1-prune+dynamic-quant")};
  return c;
}

// A report assembled by hand with round numbers.
ExperimentReport handmade_report() {
  ExperimentReport r;
  r.config.optimizations = {parse_pipeline("static-quant")};
  r.dataset = {"toy", 10, 5, 96, 1, 3};
  r.model = preset_config("tiny");
  ConfigurationResult base;
  base.name = "baseline";
  base.accuracy = {0.9, 0.8, 1.0};
  base.inference_ms = {2.0, 2.0, 2.0};
  base.params = 1000;
  base.nonzero_params = 1000;
  base.memory_bytes = 4000;
  base.flops = 2'000'000'000;
  ConfigurationResult q = base;
  q.name = "static-quant";
  q.steps = {Optimization::kStaticQuant};
  q.quantized = true;
  q.accuracy = {0.9, 0.7, 0.8};
  q.inference_ms = {1.0, 1.0, 1.0};
  q.memory_bytes = 1000;
  q.scale_table_bytes = 40;
  r.configurations = {base, q};
  TrainHistory h;
  h.epochs.push_back({1, 1e-3f, 1.0, 0.5, std::nullopt});
  r.histories = {h, h, h};
  return r;
}

TEST(Pipeline, NamesAndParsing) {
  EXPECT_EQ(pipeline_name({}), "baseline");
  const Pipeline p = parse_pipeline("l1-prune+static-quant");
  EXPECT_EQ(p, (Pipeline{Optimization::kL1Prune, Optimization::kStaticQuant}));
  EXPECT_EQ(pipeline_name(p), "l1-prune+static-quant");
  EXPECT_NE(parse_pipeline("static-quant+l1-prune"), p);
  for (const char* n : {"static-quant", "dynamic-quant", "l1-prune", "l2-prune", "qat"})
    EXPECT_EQ(optimization_name(parse_optimization(n)), n);
  EXPECT_THROW(parse_pipeline("fp16"), ConfigError);
  EXPECT_THROW(parse_pipeline(""), ConfigError);
}

TEST(ExperimentConfig, JsonRoundTrip) {
  const ExperimentConfig c = small_experiment();
  const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.optimizations, c.optimizations);
  EXPECT_EQ(back.seed, c.seed);
}

TEST(ExperimentConfig, UnknownKeysAndBadValuesAreConfigErrors) {
  EXPECT_THROW(ExperimentConfig::from_json(R"({"sed": 1})"), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(R"({"training": {"epoch": 1}})"), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(R"({"runs": "five"})"), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(R"({"runs": 0})"), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(R"({"sparsity": 1.0})"), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(R"({"optimizations": ["int4"]})"), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json("{not json"), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(R"({"energy": {"activity": 2}})"), ConfigError);
  EXPECT_NO_THROW(ExperimentConfig::from_json("{}"));
}

TEST(ExperimentConfig, ShippedGoldenConfigParses) {
  const ExperimentConfig c = ExperimentConfig::from_json(slurp(fs::path(TSFO_SOURCE_DIR) / "configs/golden.json"));
  EXPECT_EQ(c.data.synth.num_classes, 3u);
  EXPECT_GE(c.runs, 2u);
  EXPECT_EQ(c.sparsity, 0.4);
}

TEST(Timing, MedianAndTimeInference) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_THROW(median({}), InputError);
  std::size_t calls = 0;
  const std::vector<Tensor> xs(3, Tensor({1, 4}));
  const auto ms = time_inference([&](const Tensor&) { ++calls; }, xs, 4, 10);
  EXPECT_EQ(ms.size(), 10u);
  EXPECT_EQ(calls, 14u);
  for (double v : ms) EXPECT_GE(v, 0.0);
  EXPECT_THROW(time_inference([](const Tensor&) {}, std::vector<Tensor>{}, 0, 1), InputError);
}

TEST(Timing, WorkerThreadsHonoursEnvironment) {
  ::setenv("TSFO_NUM_THREADS", "3", 1);
  EXPECT_EQ(worker_threads(), 3u);
  ::setenv("TSFO_NUM_THREADS", "zero", 1);
  EXPECT_THROW(worker_threads(), ConfigError);
  ::unsetenv("TSFO_NUM_THREADS");
  EXPECT_GE(worker_threads(), 1u);
}

TEST(DeriveMetrics, HandComputedRow) {
  const ExperimentReport r = handmade_report();
  const auto rows = r.metrics();
  ASSERT_EQ(rows.size(), 2u);
  const MetricsRow& b = rows[0];
  const MetricsRow& q = rows[1];
  EXPECT_NEAR(b.accuracy_pct.mean, 90.0, 1e-9);
  EXPECT_NEAR(q.accuracy_pct.mean, 80.0, 1e-9);
  EXPECT_NEAR(q.accuracy_drop_pts, 10.0, 1e-9);
  EXPECT_DOUBLE_EQ(q.speedup, 2.0);
  EXPECT_DOUBLE_EQ(b.speedup, 1.0);
  EXPECT_DOUBLE_EQ(q.memory_mb, 0.001);
  EXPECT_DOUBLE_EQ(q.flops_g, 2.0);
  const EnergyParams e;
  const double base_modeled = e.activity * e.capacitance * e.voltage * e.voltage * 2e9;
  EXPECT_NEAR(b.modeled_energy_j, base_modeled, 1e-12);
  EXPECT_NEAR(q.modeled_energy_j, base_modeled / 4, 1e-12);
  EXPECT_NEAR(q.estimated_energy_j, base_modeled / 4, 1e-12);
  EXPECT_NEAR(q.modeled_energy_saving_pct, 75.0, 1e-9);
  EXPECT_NEAR(q.measured_energy_j, energy_model(e, 1e-3), 1e-15);
  EXPECT_NEAR(q.measured_energy_saving_pct, 50.0, 1e-9);
  EXPECT_NEAR(q.modeled_efficiency.accuracy_retention, 100.0 * 80 / 90, 1e-9);
  EXPECT_NEAR(q.modeled_efficiency.overall,
              q.modeled_efficiency.energy_efficiency * q.modeled_efficiency.accuracy_retention, 1e-9);
  EXPECT_NEAR(b.modeled_efficiency.accuracy_retention, 100.0, 1e-12);
}

TEST(DeriveMetrics, SingleRunHasZeroInterval) {
  ExperimentReport r = handmade_report();
  for (auto& c : r.configurations) {
    c.accuracy.resize(1);
    c.inference_ms.resize(1);
  }
  const auto rows = r.metrics();
  EXPECT_EQ(rows[1].accuracy_pct.half_width, 0.0);
  EXPECT_TRUE(rows[1].accuracy_pct.single_sample);
}

TEST(Report, JsonRoundTripIsLossless) {
  const ExperimentReport r = handmade_report();
  const std::string j = r.to_json();
  const ExperimentReport back = ExperimentReport::from_json(j);
  EXPECT_EQ(back.configurations, r.configurations);
  EXPECT_EQ(back.dataset, r.dataset);
  EXPECT_EQ(back.model, r.model);
  EXPECT_EQ(back.to_json(), j);
  EXPECT_THROW(ExperimentReport::from_json(R"({"format":"other"})"), ParseError);
}

TEST(Report, MarkdownHasOneRowPerConfiguration) {
  const std::string md = report_markdown(handmade_report());
  for (const char* col : {"Accuracy (%)", "Inference Time ms", "Energy J", "Memory MB", "FLOPs G"})
    EXPECT_NE(md.find(col), std::string::npos) << col;
  EXPECT_NE(md.find("| baseline"), std::string::npos);
  EXPECT_NE(md.find("| static-quant"), std::string::npos);
  // Every line of the main table has the same column count.
  std::istringstream lines(md);
  std::string line;
  std::size_t pipes = 0, rows = 0;
  while (std::getline(lines, line) && line.rfind("## ", 0) != 0) {
    if (line.empty() || line[0] != '|') continue;
    if (pipes == 0) pipes = count_of(line, '|');
    EXPECT_EQ(count_of(line, '|'), pipes) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 4u);  // header, rule, two configurations
}

TEST(Report, CsvHasHeaderAndRows) {
  const std::string csv = report_csv(handmade_report());
  std::istringstream lines(csv);
  std::string header, line;
  std::getline(lines, header);
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    EXPECT_EQ(count_of(line, ','), count_of(header, ','));
    ++n;
  }
  EXPECT_EQ(n, 2u);
}

TEST(Report, FormatNames) {
  EXPECT_EQ(parse_report_format("json"), ReportFormat::kJson);
  EXPECT_EQ(parse_report_format("md"), ReportFormat::kMarkdown);
  EXPECT_EQ(parse_report_format("markdown"), ReportFormat::kMarkdown);
  EXPECT_EQ(parse_report_format("csv"), ReportFormat::kCsv);
  EXPECT_THROW(parse_report_format("xml"), ConfigError);
}

TEST(Report, DeterministicViewDropsMeasuredFields) {
  ExperimentReport a = handmade_report();
  ExperimentReport b = a;
  b.configurations[1].inference_ms = {7, 8, 9};
  EXPECT_NE(a.to_json(), b.to_json());
  EXPECT_EQ(deterministic_view(a.to_json()), deterministic_view(b.to_json()));
  b.configurations[1].accuracy[0] = 0.5;
  EXPECT_NE(deterministic_view(a.to_json()), deterministic_view(b.to_json()));
  EXPECT_EQ(deterministic_view(a.to_json()).find("\"measured\""), std::string::npos);
}

TEST(Report, EmitWritesFilesAndRejectsUnwritableDirectory) {
  const fs::path dir = fs::temp_directory_path() / "tsfo_emit";
  fs::remove_all(dir);
  const std::vector<ReportFormat> all{ReportFormat::kJson, ReportFormat::kCsv, ReportFormat::kMarkdown};
  const auto written = emit_report(handmade_report(), dir, all);
  for (const char* f : {"report.json", "report.csv", "report.md", "history_run0.csv", "history_run2.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_FALSE(written.empty());
  EXPECT_EQ(ExperimentReport::from_json(slurp(dir / "report.json")).configurations,
            handmade_report().configurations);
  std::ofstream(dir / "blocker") << "x";
  EXPECT_THROW(emit_report(handmade_report(), dir / "blocker" / "sub", all), IoError);
  fs::remove_all(dir);
}

TEST(Report, MeanEnergyEfficiencyAcrossDatasets) {
  ExperimentReport a = handmade_report();
  ExperimentReport b = handmade_report();
  b.configurations[1].flops = 1'000'000'000;
  const std::vector<ExperimentReport> reports{a, b};
  const double ea = a.metrics()[1].modeled_efficiency.energy_efficiency;
  const double eb = b.metrics()[1].modeled_efficiency.energy_efficiency;
  EXPECT_NEAR(mean_energy_efficiency(reports, "static-quant"), (ea + eb) / 2, 1e-9);
  EXPECT_THROW(mean_energy_efficiency(reports, "nope"), InputError);
}

TEST(LoadExperimentData, SyntheticSplitIsSubjectWise) {
  const ExperimentConfig c = small_experiment();
  const DatasetSplit s = load_experiment_data(c);
  EXPECT_EQ(s.train.size() + s.test.size(), 60u);
  for (const auto& subject : s.train.subjects)
    EXPECT_EQ(std::find(s.test.subjects.begin(), s.test.subjects.end(), subject), s.test.subjects.end());
  const ModelConfig m = experiment_model_config(c, s.train);
  EXPECT_EQ(m.seq_len, 48u);
  EXPECT_EQ(m.num_classes, 3u);
}

TEST(RunExperiment, SmallRunIsCompleteAndDeterministic) {
  const ExperimentConfig c = small_experiment();
  const ExperimentReport a = run_experiment(c);
  ASSERT_EQ(a.configurations.size(), 4u);
  EXPECT_EQ(a.configurations[0].name, "baseline");
  EXPECT_EQ(a.configurations[3].name, "l1-prune+dynamic-quant");
  EXPECT_EQ(a.histories.size(), c.runs);
  for (const auto& r : a.configurations) {
    EXPECT_EQ(r.accuracy.size(), c.runs);
    EXPECT_EQ(r.inference_ms.size(), c.runs);
  }
  // Static quantization stores a quarter of the float payload.
  EXPECT_EQ(a.configurations[1].memory_bytes * 4, a.configurations[0].memory_bytes);
  EXPECT_LT(a.configurations[2].flops, a.configurations[0].flops);
  // Removed fraction counts every parameter, so unprunable biases and norms
  // keep it just under the requested sparsity.
  const ConfigurationResult& pq = a.configurations[3];
  EXPECT_GT(pq.removed_fraction, 0.3);
  EXPECT_LE(pq.removed_fraction, 0.4);
  EXPECT_NEAR(pq.removed_fraction, 1.0 - double(pq.nonzero_params) / double(a.configurations[0].params), 1e-3);
  ExperimentConfig p = c;
  p.parallel_training = true;
  const ExperimentReport b = run_experiment(p);
  // Parallel training must not change any deterministic field.
  auto view = [](ExperimentReport r) {
    r.config.parallel_training = false;
    return deterministic_view(r.to_json());
  };
  EXPECT_EQ(view(a), view(b));
}

}  // namespace
}  // namespace tsfo
