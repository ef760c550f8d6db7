// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tsfo/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tsfo/container.hpp"
#include "tsfo/error.hpp"
#include "tsfo/rng.hpp"

namespace tsfo {

using nlohmann::json;

void TimeSeriesDataset::validate() const {
  if (instances.empty()) throw InputError("dataset '" + name + "' is empty");
  if (labels.size() != instances.size()) throw InputError("label count does not match instance count");
  if (!subjects.empty() && subjects.size() != instances.size()) {
    throw InputError("subject id count does not match instance count");
  }
  if (!split.empty() && split.size() != instances.size()) {
    throw InputError("split tag count does not match instance count");
  }
  const Shape& shape = instances.front().shape();
  if (shape.size() != 2) throw InputError("instances must be [C x T]");
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].shape() != shape) {
      throw InputError("instance " + std::to_string(i) + " has shape " +
                       shape_to_string(instances[i].shape()) + ", expected " + shape_to_string(shape));
    }
    if (labels[i] >= label_names.size()) {
      throw InputError("instance " + std::to_string(i) + " has label outside the label map");
    }
  }
}

TimeSeriesDataset TimeSeriesDataset::subset(std::span<const std::size_t> indices) const {
  TimeSeriesDataset out;
  out.name = name;
  out.label_names = label_names;
  for (std::size_t i : indices) {
    if (i >= instances.size()) throw InputError("subset index out of range");
    out.instances.push_back(instances[i]);
    out.labels.push_back(labels[i]);
    if (!subjects.empty()) out.subjects.push_back(subjects[i]);
    if (!split.empty()) out.split.push_back(split[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Delimited text
// ---------------------------------------------------------------------------

namespace {

struct RawRows {
  std::vector<std::string> labels;
  std::vector<std::vector<float>> values;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\n')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

RawRows parse_rows(std::string_view text, const std::string& source) {
  RawRows rows;
  std::size_t line_no = 0;
  std::size_t expected = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view() : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;

    char delim;
    if (line.find('\t') != std::string_view::npos) {
      delim = '\t';
    } else if (line.find(',') != std::string_view::npos) {
      delim = ',';
    } else {
      throw ParseError(source + ":" + std::to_string(line_no) +
                       ": unknown delimiter (expected tab- or comma-separated fields)");
    }
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t pos = line.find(delim, start);
      fields.push_back(trim(line.substr(start, pos - start)));
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
    if (fields.size() < 2) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": a label and at least one value are required");
    }
    if (expected == 0) {
      expected = fields.size();
    } else if (fields.size() != expected) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": ragged row with " +
                       std::to_string(fields.size() - 1) + " values, expected " +
                       std::to_string(expected - 1));
    }
    if (fields[0].empty()) throw ParseError(source + ":" + std::to_string(line_no) + ": empty label");
    std::vector<float> values(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      double v;
      if (!parse_double(fields[i], v) || !std::isfinite(v)) {
        throw ParseError(source + ":" + std::to_string(line_no) + ": field " + std::to_string(i + 1) +
                         " ('" + std::string(fields[i]) + "') is not a finite number");
      }
      values[i - 1] = static_cast<float>(v);
    }
    rows.labels.emplace_back(fields[0]);
    rows.values.push_back(std::move(values));
  }
  if (rows.values.empty()) throw ParseError(source + ": no data rows");
  return rows;
}

// Dense 0..K-1 map in sorted label order: numeric order when every label is
// numeric ("1" and "1.0" are the same class), otherwise lexicographic.
struct LabelMap {
  std::vector<std::string> names;
  std::map<std::string, std::size_t> index;
};

LabelMap build_label_map(const std::vector<std::string>& labels) {
  std::set<std::string> unique(labels.begin(), labels.end());
  bool numeric = true;
  std::map<std::string, double> values;
  for (const std::string& s : unique) {
    double v;
    if (!parse_double(s, v)) {
      numeric = false;
      break;
    }
    values[s] = v;
  }
  LabelMap map;
  if (numeric) {
    std::map<double, std::vector<std::string>> by_value;
    for (const auto& [s, v] : values) by_value[v].push_back(s);
    for (const auto& [v, names] : by_value) {
      const std::size_t idx = map.names.size();
      map.names.push_back(names.front());
      for (const std::string& s : names) map.index[s] = idx;
    }
  } else {
    for (const std::string& s : unique) {
      map.index[s] = map.names.size();
      map.names.push_back(s);
    }
  }
  return map;
}

void append_rows(TimeSeriesDataset& ds, const RawRows& rows, const LabelMap& map,
                 std::optional<SplitTag> tag) {
  for (std::size_t i = 0; i < rows.values.size(); ++i) {
    ds.instances.emplace_back(Shape{1, rows.values[i].size()}, rows.values[i]);
    ds.labels.push_back(map.index.at(rows.labels[i]));
    if (tag) ds.split.push_back(*tag);
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_same_length(const RawRows& a, const RawRows& b, const std::string& what) {
  if (a.values.front().size() != b.values.front().size()) {
    throw ParseError(what + ": train and test series lengths differ");
  }
}

std::string format_float(float v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

TimeSeriesDataset parse_ucr_delimited(std::string_view text, std::string name) {
  RawRows rows = parse_rows(text, name);
  LabelMap map = build_label_map(rows.labels);
  TimeSeriesDataset ds;
  ds.name = std::move(name);
  ds.label_names = map.names;
  append_rows(ds, rows, map, std::nullopt);
  ds.validate();
  return ds;
}

TimeSeriesDataset load_ucr_delimited(const std::filesystem::path& path) {
  return parse_ucr_delimited(read_file(path), path.stem().string());
}

TimeSeriesDataset load_ucr_split(const std::filesystem::path& train_path,
                                 const std::filesystem::path& test_path) {
  RawRows train = parse_rows(read_file(train_path), train_path.string());
  RawRows test = parse_rows(read_file(test_path), test_path.string());
  check_same_length(train, test, train_path.stem().string());
  std::vector<std::string> all = train.labels;
  all.insert(all.end(), test.labels.begin(), test.labels.end());
  LabelMap map = build_label_map(all);

  TimeSeriesDataset ds;
  std::string stem = train_path.stem().string();
  if (stem.size() > 6 && stem.ends_with("_TRAIN")) stem.resize(stem.size() - 6);
  ds.name = stem;
  ds.label_names = map.names;
  append_rows(ds, train, map, SplitTag::kTrain);
  append_rows(ds, test, map, SplitTag::kTest);
  ds.validate();
  return ds;
}

std::string format_ucr_delimited(const TimeSeriesDataset& ds, char delimiter) {
  ds.validate();
  if (ds.channels() != 1) throw InputError("delimited text holds univariate series only");
  std::string out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out += ds.label_names[ds.labels[i]];
    for (float v : ds.instances[i].values()) {
      out.push_back(delimiter);
      out += format_float(v);
    }
    out.push_back('\n');
  }
  return out;
}

void write_ucr_delimited(const TimeSeriesDataset& ds, const std::filesystem::path& path, char delimiter) {
  const std::string text = format_ucr_delimited(ds, delimiter);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void validate_against_manifest(const TimeSeriesDataset& ds, const DatasetManifest& m) {
  std::vector<std::string> problems;
  std::size_t n_train = ds.size(), n_test = 0;
  if (!ds.split.empty()) {
    n_test = static_cast<std::size_t>(std::count(ds.split.begin(), ds.split.end(), SplitTag::kTest));
    n_train = ds.size() - n_test;
  } else if (m.test_size) {
    problems.push_back("dataset carries no predefined split to check test_size against");
  }
  auto check = [&](const char* what, std::optional<std::size_t> want, std::size_t got) {
    if (want && *want != got) {
      problems.push_back(std::string(what) + " is " + std::to_string(got) + ", expected " +
                         std::to_string(*want));
    }
  };
  check("train size", m.train_size, n_train);
  if (!ds.split.empty()) check("test size", m.test_size, n_test);
  check("series length", m.length, ds.length());
  check("class count", m.num_classes, ds.num_classes());
  if (!problems.empty()) {
    std::string msg = "dataset '" + ds.name + "' does not match its manifest:";
    for (const std::string& p : problems) msg += " " + p + ";";
    throw InputError(msg);
  }
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

std::vector<float> min_max_normalize(std::span<const float> series) {
  if (series.empty()) throw InputError("cannot normalize an empty series");
  const auto [lo_it, hi_it] = std::minmax_element(series.begin(), series.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<float> out(series.size());
  if (hi == lo) {
    std::fill(out.begin(), out.end(), 0.5f);
    return out;
  }
  const double range = hi - lo;
  for (std::size_t i = 0; i < series.size(); ++i) {
    out[i] = static_cast<float>(std::clamp((series[i] - lo) / range, 0.0, 1.0));
  }
  return out;
}

Tensor min_max_normalize(const Tensor& series) {
  if (series.rank() != 2) throw InputError("series must be [C x T]");
  Tensor out(series.shape());
  const std::size_t t = series.dim(1);
  for (std::size_t c = 0; c < series.dim(0); ++c) {
    std::vector<float> row = min_max_normalize(std::span<const float>(series.row(c), t));
    std::copy(row.begin(), row.end(), out.row(c));
  }
  return out;
}

std::vector<float> resample_linear(std::span<const float> series, std::size_t target_len) {
  const std::size_t n = series.size();
  if (n < 2 || target_len < 2) throw InputError("resampling needs source and target lengths >= 2");
  std::vector<float> out(target_len);
  const double step = static_cast<double>(n - 1) / static_cast<double>(target_len - 1);
  for (std::size_t i = 0; i < target_len; ++i) {
    if (i == target_len - 1) {
      out[i] = series[n - 1];
      continue;
    }
    const double pos = static_cast<double>(i) * step;
    const std::size_t i0 = std::min(static_cast<std::size_t>(pos), n - 2);
    const double frac = pos - static_cast<double>(i0);
    out[i] = static_cast<float>(series[i0] + frac * (static_cast<double>(series[i0 + 1]) - series[i0]));
  }
  return out;
}

Tensor resample_linear(const Tensor& series, std::size_t target_len) {
  if (series.rank() != 2) throw InputError("series must be [C x T]");
  Tensor out({series.dim(0), target_len});
  for (std::size_t c = 0; c < series.dim(0); ++c) {
    std::vector<float> row = resample_linear(std::span<const float>(series.row(c), series.dim(1)), target_len);
    std::copy(row.begin(), row.end(), out.row(c));
  }
  return out;
}

std::size_t window_count(std::size_t series_length, const WindowSpec& spec) {
  if (spec.stride < 1 || spec.length < 1) throw InputError("window length and stride must be >= 1");
  if (spec.length > series_length) {
    throw InputError("window length " + std::to_string(spec.length) + " exceeds series length " +
                     std::to_string(series_length));
  }
  return (series_length - spec.length) / spec.stride + 1;
}

std::vector<Tensor> segment_windows(const Tensor& series, const WindowSpec& spec) {
  if (series.rank() != 2) throw InputError("series must be [C x T]");
  const std::size_t c = series.dim(0);
  const std::size_t count = window_count(series.dim(1), spec);
  std::vector<Tensor> windows;
  windows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Tensor w({c, spec.length});
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float* src = series.row(ch) + i * spec.stride;
      std::copy(src, src + spec.length, w.row(ch));
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

TimeSeriesDataset segment_dataset(const TimeSeriesDataset& ds, const WindowSpec& spec) {
  ds.validate();
  TimeSeriesDataset out;
  out.name = ds.name;
  out.label_names = ds.label_names;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (Tensor& w : segment_windows(ds.instances[i], spec)) {
      out.instances.push_back(std::move(w));
      out.labels.push_back(ds.labels[i]);
      if (ds.has_subjects()) out.subjects.push_back(ds.subjects[i]);
      if (!ds.split.empty()) out.split.push_back(ds.split[i]);
    }
  }
  return out;
}

TimeSeriesDataset preprocess(const TimeSeriesDataset& ds, std::optional<std::size_t> target_len) {
  ds.validate();
  TimeSeriesDataset out = ds;
  for (Tensor& x : out.instances) {
    x = min_max_normalize(x);
    if (target_len && *target_len != x.dim(1)) x = resample_linear(x, *target_len);
  }
  return out;
}

DatasetSplit predefined_split(const TimeSeriesDataset& ds) {
  if (ds.split.empty()) throw InputError("dataset '" + ds.name + "' has no predefined split");
  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < ds.size(); ++i) (ds.split[i] == SplitTag::kTrain ? train : test).push_back(i);
  if (train.empty() || test.empty()) throw InputError("predefined split leaves one side empty");
  return {ds.subset(train), ds.subset(test)};
}

DatasetSplit subject_wise_split(const TimeSeriesDataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InputError("train fraction must be in (0, 1)");
  if (!ds.has_subjects()) {
    if (!ds.split.empty()) {
      std::cerr << "warning: dataset '" << ds.name
                << "' has no subject ids; using its predefined train/test split\n";
      return predefined_split(ds);
    }
    throw InputError("dataset '" + ds.name + "' has neither subject ids nor a predefined split");
  }
  std::vector<std::string> subjects(ds.subjects.begin(), ds.subjects.end());
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  if (subjects.size() < 2) throw InputError("subject-wise split needs at least two subjects");

  SeededRng rng(seed);
  rng.shuffle(subjects);
  const double want = std::round(train_fraction * static_cast<double>(subjects.size()));
  const std::size_t n_train =
      std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, subjects.size() - 1);
  std::set<std::string> train_subjects(subjects.begin(), subjects.begin() + static_cast<long>(n_train));

  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    (train_subjects.count(ds.subjects[i]) ? train : test).push_back(i);
  }
  return {ds.subset(train), ds.subset(test)};
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

TimeSeriesDataset synth_generate(const SynthSpec& spec) {
  if (spec.num_classes < 2) throw InputError("synthetic data needs at least 2 classes");
  if (spec.per_class < 1) throw InputError("synthetic data needs at least 1 instance per class");
  if (spec.length < 16) throw InputError("synthetic series length must be >= 16");
  if (!(spec.noise >= 0.0) || !std::isfinite(spec.noise)) throw InputError("noise must be >= 0");

  SeededRng rng(spec.seed);
  const std::size_t households = (spec.per_class + 4) / 5;
  TimeSeriesDataset ds;
  ds.name = "synthetic";
  for (std::size_t c = 0; c < spec.num_classes; ++c) ds.label_names.push_back(std::to_string(c));
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const std::size_t period = 6 + 4 * c;
    const std::size_t on_steps = period / 2;
    const double amplitude = 1.0 + 0.5 * static_cast<double>(c);
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      Tensor x({1, spec.length});
      for (std::size_t t = 0; t < spec.length; ++t) {
        const double clean = (t % period) < on_steps ? amplitude : 0.0;
        const double noise = spec.noise > 0.0 ? spec.noise * rng.normal() : 0.0;
        x[t] = static_cast<float>(clean + noise);
      }
      ds.instances.push_back(std::move(x));
      ds.labels.push_back(c);
      ds.subjects.push_back("h" + std::to_string(i % households));
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset cache
// ---------------------------------------------------------------------------

void save_dataset_cache(const TimeSeriesDataset& ds, const std::filesystem::path& path) {
  ds.validate();
  const std::size_t n = ds.size(), c = ds.channels(), t = ds.length();
  std::vector<float> data;
  data.reserve(n * c * t);
  for (const Tensor& x : ds.instances) data.insert(data.end(), x.values().begin(), x.values().end());
  json meta;
  meta["kind"] = "dataset";
  meta["name"] = ds.name;
  meta["labels"] = ds.labels;
  meta["label_names"] = ds.label_names;
  meta["subjects"] = ds.subjects;
  std::vector<int> split;
  for (SplitTag s : ds.split) split.push_back(static_cast<int>(s));
  meta["split"] = split;
  Container container;
  container.metadata_json = meta.dump();
  container.entries.push_back(ContainerEntry::from_tensor("instances", Tensor({n, c, t}, std::move(data))));
  write_container(container, path);
}

TimeSeriesDataset load_dataset_cache(const std::filesystem::path& path) {
  Container container = read_container(path);
  json meta = json::parse(container.metadata_json);
  if (meta.value("kind", "") != "dataset") throw ParseError("'" + path.string() + "' is not a dataset cache");
  const Tensor all = container.at("instances").to_tensor();
  if (all.rank() != 3) throw ParseError("dataset cache tensor must be [N x C x T]");
  TimeSeriesDataset ds;
  try {
    ds.name = meta.at("name").get<std::string>();
    ds.labels = meta.at("labels").get<std::vector<std::size_t>>();
    ds.label_names = meta.at("label_names").get<std::vector<std::string>>();
    ds.subjects = meta.at("subjects").get<std::vector<std::string>>();
    for (int s : meta.at("split").get<std::vector<int>>()) ds.split.push_back(static_cast<SplitTag>(s));
  } catch (const json::exception& ex) {
    throw ParseError(std::string("malformed dataset manifest: ") + ex.what());
  }
  const std::size_t c = all.dim(1), t = all.dim(2);
  for (std::size_t i = 0; i < all.dim(0); ++i) {
    const float* src = all.data().data() + i * c * t;
    ds.instances.emplace_back(Shape{c, t}, std::vector<float>(src, src + c * t));
  }
  ds.validate();
  return ds;
}

}  // namespace tsfo
