// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

// tsfo: train, compress, evaluate and benchmark time-series transformers.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tsfo/container.hpp"
#include "tsfo/error.hpp"
#include "tsfo/experiment.hpp"
#include "tsfo/model_io.hpp"
#include "tsfo/pruning.hpp"
#include "tsfo/quantization.hpp"
#include "tsfo/report.hpp"

namespace {

using nlohmann::json;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw tsfo::IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Options shared by every subcommand that builds an ExperimentConfig.
struct ExperimentOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> runs;
  std::optional<std::string> preset;
  std::optional<double> sparsity;
  std::vector<std::string> opts;
  std::optional<std::string> out;
  std::optional<std::string> train_path;
  std::optional<std::string> test_path;
  std::optional<std::size_t> resample;
  std::optional<std::size_t> epochs;
  bool parallel = false;

  void add_to(CLI::App* app, bool with_optimizations) {
    app->add_option("--config", config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "Base random seed");
    app->add_option("--preset", preset, "Model preset: T1, T2 or tiny");
    app->add_option("--train", train_path, "UCR train file or dataset cache (default: synthetic data)");
    app->add_option("--test", test_path, "UCR test file (predefined split)");
    app->add_option("--resample", resample, "Resample every series to this length");
    app->add_option("--epochs", epochs, "Training epochs");
    if (with_optimizations) {
      app->add_option("--runs", runs, "Independent runs");
      app->add_option("--sparsity", sparsity, "Pruning sparsity in [0, 1)");
      app->add_option("--opt", opts,
                      "Optimization pipeline, e.g. static-quant or l1-prune+static-quant (repeatable)");
      app->add_flag("--parallel", parallel, "Train runs in parallel (TSFO_NUM_THREADS caps workers)");
    }
  }

  tsfo::ExperimentConfig resolve() const {
    tsfo::ExperimentConfig c;
    if (!config_path.empty()) c = tsfo::ExperimentConfig::from_json(read_text(config_path));
    if (seed) c.seed = *seed;
    if (runs) c.runs = *runs;
    if (preset) c.preset = *preset;
    if (sparsity) c.sparsity = *sparsity;
    if (!opts.empty()) {
      c.optimizations.clear();
      for (const std::string& o : opts) c.optimizations.push_back(tsfo::parse_pipeline(o));
    }
    if (out) c.out_dir = *out;
    if (train_path) c.data.train_path = *train_path;
    if (test_path) c.data.test_path = *test_path;
    if (resample) c.data.resample_length = *resample;
    if (epochs) c.epochs = *epochs;
    if (parallel) c.parallel_training = true;
    c.validate();
    return c;
  }
};

std::string model_kind(const std::string& path) {
  const tsfo::Container c = tsfo::read_container(path);
  const json meta = json::parse(c.metadata_json, nullptr, false);
  return meta.is_object() ? meta.value("kind", "") : "";
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

int run_synth(int classes, int per_class, int length, double noise, std::uint64_t seed, const std::string& out) {
  tsfo::SynthSpec spec;
  spec.num_classes = static_cast<std::size_t>(classes);
  spec.per_class = static_cast<std::size_t>(per_class);
  spec.length = static_cast<std::size_t>(length);
  spec.noise = noise;
  spec.seed = seed;
  const tsfo::TimeSeriesDataset ds = tsfo::synth_generate(spec);
  if (out.ends_with(".tsfo")) {
    tsfo::save_dataset_cache(ds, out);
  } else {
    tsfo::write_ucr_delimited(ds, out);
  }
  print_json({{"path", out}, {"instances", ds.size()}, {"length", ds.length()}, {"classes", ds.num_classes()}});
  return 0;
}

int run_train(const ExperimentOptions& eo, const std::string& out, const std::string& history) {
  const tsfo::ExperimentConfig cfg = eo.resolve();
  const tsfo::DatasetSplit data = tsfo::load_experiment_data(cfg);
  const tsfo::ModelConfig mcfg = tsfo::experiment_model_config(cfg, data.train);
  tsfo::SeededRng rng(cfg.seed);
  tsfo::TransformerModel model = tsfo::build_model(mcfg, rng);
  tsfo::TrainConfig tc = tsfo::experiment_train_config(cfg, cfg.seed);
  tc.validation = &data.test;
  const tsfo::TrainHistory h = tsfo::train(model, data.train, tc);
  tsfo::save_model(model, out);
  if (!history.empty()) {
    std::ofstream f(history);
    if (!f) throw tsfo::IoError("cannot write '" + history + "'");
    f << h.to_csv();
  }
  print_json({{"model", out},
              {"params", tsfo::param_count(model)},
              {"train_accuracy", h.epochs.back().train_acc},
              {"test_accuracy", tsfo::evaluate_accuracy(model, data.test)}});
  return 0;
}

struct PruneOptions {
  std::string model;
  std::string method = "l1";
  std::string granularity = "weight";
  std::string scope = "global";
  std::optional<std::size_t> layer;
  std::size_t finetune_epochs = 0;
  std::string out;
};

int run_prune(const ExperimentOptions& eo, const PruneOptions& po) {
  const tsfo::ExperimentConfig cfg = eo.resolve();
  tsfo::PruneSpec spec;
  spec.method = po.method == "l2" ? tsfo::PruneMethod::kL2 : tsfo::PruneMethod::kL1;
  spec.granularity = po.granularity == "neuron" ? tsfo::Granularity::kNeuron
                     : po.granularity == "head" ? tsfo::Granularity::kHead
                                                : tsfo::Granularity::kWeight;
  spec.scope = po.scope == "layerwise" ? tsfo::PruneScope::kLayerwise : tsfo::PruneScope::kGlobal;
  spec.sparsity = cfg.sparsity;
  spec.layer = po.layer;
  const tsfo::StoredModel stored = tsfo::load_model(po.model);
  tsfo::PruneResult r = spec.granularity == tsfo::Granularity::kWeight
                            ? tsfo::prune_unstructured(stored.model, spec, cfg.energy)
                            : tsfo::prune_structured(stored.model, spec, cfg.energy);
  if (po.finetune_epochs > 0) {
    const tsfo::DatasetSplit data = tsfo::load_experiment_data(cfg);
    const tsfo::PruneMask mask = tsfo::mask_from_zeros(r.model);
    tsfo::fine_tune(r.model, mask, data.train, po.finetune_epochs, tsfo::experiment_train_config(cfg, cfg.seed));
  }
  const tsfo::PruneMask mask = tsfo::mask_from_zeros(r.model);
  tsfo::save_model(r.model, po.out, r.mask.params.empty() ? nullptr : &mask);
  std::cout << r.report.to_json() << "\n";
  return 0;
}

int run_quantize(const ExperimentOptions& eo, const std::string& model_path, const std::string& mode,
                 const std::string& out) {
  const tsfo::ExperimentConfig cfg = eo.resolve();
  const tsfo::StoredModel stored = tsfo::load_model(model_path);
  tsfo::QuantizedModel q;
  if (mode == "static") {
    const tsfo::DatasetSplit data = tsfo::load_experiment_data(cfg);
    const std::size_t n = std::min(cfg.calibration_size, data.train.size());
    const std::span<const tsfo::Tensor> calib(data.train.instances.data(), n);
    q = tsfo::quantize_static(stored.model, tsfo::calibrate(stored.model, calib));
  } else {
    q = tsfo::quantize_weights(stored.model);
  }
  tsfo::save_quantized(q, out);
  const tsfo::QuantMemory mem = tsfo::quantized_memory(q);
  print_json({{"model", out},
              {"activations", mode},
              {"float_bytes", tsfo::float_memory(stored.model)},
              {"int8_payload_bytes", mem.payload_bytes},
              {"scale_table_bytes", mem.scale_bytes}});
  return 0;
}

int run_eval(const ExperimentOptions& eo, const std::string& model_path) {
  const tsfo::ExperimentConfig cfg = eo.resolve();
  const tsfo::DatasetSplit data = tsfo::load_experiment_data(cfg);
  const std::string kind = model_kind(model_path);
  double acc = 0.0;
  if (kind == "quantized_model") {
    acc = tsfo::evaluate_quantized_accuracy(tsfo::load_quantized(model_path), data.test);
  } else if (kind == "float_model") {
    acc = tsfo::evaluate_accuracy(tsfo::load_model(model_path).model, data.test);
  } else {
    throw tsfo::InputError("'" + model_path + "' is not a tsfo model file");
  }
  print_json({{"model", model_path}, {"kind", kind}, {"test_size", data.test.size()}, {"accuracy", acc}});
  return 0;
}

std::vector<tsfo::ReportFormat> parse_formats(const std::vector<std::string>& names) {
  std::vector<tsfo::ReportFormat> out;
  for (const std::string& n : names) out.push_back(tsfo::parse_report_format(n));
  if (out.empty()) out = {tsfo::ReportFormat::kJson, tsfo::ReportFormat::kCsv, tsfo::ReportFormat::kMarkdown};
  return out;
}

int run_bench(const ExperimentOptions& eo, const std::vector<std::string>& formats, bool quiet) {
  const tsfo::ExperimentConfig cfg = eo.resolve();
  const tsfo::ExperimentReport report =
      tsfo::run_experiment(cfg, [&](const std::string& line) {
        if (!quiet) std::cerr << line << "\n";
      });
  const auto written = tsfo::emit_report(report, cfg.out_dir, parse_formats(formats));
  std::cout << tsfo::report_markdown(report);
  for (const auto& p : written) std::cerr << "wrote " << p.string() << "\n";
  return 0;
}

int run_report(const std::string& in, const std::vector<std::string>& formats, const std::string& out) {
  const tsfo::ExperimentReport report = tsfo::ExperimentReport::from_json(read_text(in));
  const std::vector<tsfo::ReportFormat> fs =
      parse_formats(formats.empty() ? std::vector<std::string>{"markdown"} : formats);
  if (!out.empty()) {
    for (const auto& p : tsfo::emit_report(report, out, fs)) std::cerr << "wrote " << p.string() << "\n";
    return 0;
  }
  for (tsfo::ReportFormat f : fs) {
    switch (f) {
      case tsfo::ReportFormat::kJson:
        std::cout << report.to_json() << "\n";
        break;
      case tsfo::ReportFormat::kCsv:
        std::cout << tsfo::report_csv(report);
        break;
      case tsfo::ReportFormat::kMarkdown:
        std::cout << tsfo::report_markdown(report);
        break;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tsfo: efficiency optimization toolkit for time-series transformers"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labelled dataset");
  int classes = 3, per_class = 100, length = 96;
  double noise = 0.05;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth->add_option("--classes", classes, "Number of classes")->check(CLI::PositiveNumber);
  synth->add_option("--per-class", per_class, "Instances per class")->check(CLI::PositiveNumber);
  synth->add_option("--length", length, "Series length")->check(CLI::PositiveNumber);
  synth->add_option("--noise", noise, "Gaussian noise standard deviation")->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", synth_seed, "Random seed");
  synth->add_option("--out", synth_out, "Output path (.tsfo cache, otherwise UCR text)")->required();

  ExperimentOptions train_eo, prune_eo, quant_eo, eval_eo, bench_eo;
  auto* train = app.add_subcommand("train", "Train a baseline model");
  train_eo.add_to(train, false);
  std::string train_out, history;
  train->add_option("--out", train_out, "Output model file")->required();
  train->add_option("--history", history, "Write the training history CSV here");

  auto* prune = app.add_subcommand("prune", "Magnitude-prune a trained model");
  prune_eo.add_to(prune, false);
  PruneOptions po;
  prune->add_option("--model", po.model, "Input model file")->required()->check(CLI::ExistingFile);
  prune->add_option("--sparsity", prune_eo.sparsity, "Fraction of the pool to prune");
  prune->add_option("--method", po.method, "l1 or l2")->check(CLI::IsMember({"l1", "l2"}));
  prune->add_option("--granularity", po.granularity, "weight, neuron or head")
      ->check(CLI::IsMember({"weight", "neuron", "head"}));
  prune->add_option("--scope", po.scope, "global or layerwise")->check(CLI::IsMember({"global", "layerwise"}));
  prune->add_option("--layer", po.layer, "Restrict pruning to one encoder layer");
  prune->add_option("--finetune-epochs", po.finetune_epochs, "Masked fine-tuning epochs after pruning");
  prune->add_option("--out", po.out, "Output model file")->required();

  auto* quantize = app.add_subcommand("quantize", "Quantize a trained model to INT8");
  quant_eo.add_to(quantize, false);
  std::string quant_model, quant_mode = "static", quant_out;
  quantize->add_option("--model", quant_model, "Input model file")->required()->check(CLI::ExistingFile);
  quantize->add_option("--mode", quant_mode, "static or dynamic")->check(CLI::IsMember({"static", "dynamic"}));
  quantize->add_option("--out", quant_out, "Output quantized model file")->required();

  auto* eval = app.add_subcommand("eval", "Test accuracy of a float or quantized model");
  eval_eo.add_to(eval, false);
  std::string eval_model;
  eval->add_option("--model", eval_model, "Model file")->required()->check(CLI::ExistingFile);

  auto* bench = app.add_subcommand("bench", "Run a full experiment and emit reports");
  bench_eo.add_to(bench, true);
  std::vector<std::string> bench_formats;
  bool quiet = false;
  bench->add_option("--out", bench_eo.out, "Output directory");
  bench->add_option("--format", bench_formats, "json, csv or markdown (repeatable; default all)");
  bench->add_flag("--quiet", quiet, "Suppress progress output");

  auto* report = app.add_subcommand("report", "Render a saved JSON report");
  std::string report_in, report_out;
  std::vector<std::string> report_formats;
  report->add_option("--in", report_in, "report.json")->required()->check(CLI::ExistingFile);
  report->add_option("--format", report_formats, "json, csv or markdown (repeatable; default markdown)");
  report->add_option("--out", report_out, "Write files to this directory instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(tsfo::ErrorCategory::kConfig);
  }

  try {
    if (*synth) return run_synth(classes, per_class, length, noise, synth_seed, synth_out);
    if (*train) return run_train(train_eo, train_out, history);
    if (*prune) return run_prune(prune_eo, po);
    if (*quantize) return run_quantize(quant_eo, quant_model, quant_mode, quant_out);
    if (*eval) return run_eval(eval_eo, eval_model);
    if (*bench) return run_bench(bench_eo, bench_formats, quiet);
    if (*report) return run_report(report_in, report_formats, report_out);
  } catch (const tsfo::Error& e) {
    std::cerr << "tsfo: " << e.what() << "\n";
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::cerr << "tsfo: unexpected failure: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
