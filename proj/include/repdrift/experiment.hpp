#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "repdrift/config.hpp"
#include "repdrift/continual.hpp"
#include "repdrift/datasets.hpp"
#include "repdrift/geometry.hpp"
#include "repdrift/metrics.hpp"
#include "repdrift/model.hpp"
#include "repdrift/parallel.hpp"
#include "repdrift/probe.hpp"
#include "repdrift/snapshot_io.hpp"

namespace repdrift {

/// One class-mean point of the shared MDS embedding of a task across phases.
struct MdsRow {
  std::uint64_t seed = 0;
  std::size_t width = 0;
  std::uint32_t task = 0;
  int phase = 0;
  std::uint32_t label = 0;
  double x = 0.0;
  double y = 0.0;
};

struct CellResult {
  std::uint64_t seed = 0;
  std::size_t width = 0;
  std::vector<EvaluationRecord> records;
  std::vector<MdsRow> mds;
  SequenceResult sequence;
};

/// Synthetic or CIFAR task suite for one seed. Identical across widths.
inline TaskSuite build_suite(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto& d = cfg.dataset;
  if (d.kind == DatasetKind::synthetic)
    return gen_synthetic_suite(SyntheticSpec{d.n_tasks, d.classes_per_task, d.input_dim, d.per_class,
                                             d.cluster_spread, seed});
  const LabelledSet train_file = load_cifar_binary(d.train_path, d.variant, Split::train);
  LabelledSet test_file = load_cifar_binary(d.test_path, d.variant, Split::test);
  LabelledSet probe = take_per_class(train_file, d.per_class.probe_fit);
  probe.split = Split::probe_fit;
  const LabelledSet train = take_per_class(train_file, d.per_class.train, d.per_class.probe_fit);
  test_file = take_per_class(test_file, d.per_class.test);
  const std::vector<LabelledSet> splits{train, probe, test_file};
  TaskSuite suite = split_into_tasks(splits, d.n_tasks, seed);
  if (suite.classes_per_task != d.classes_per_task)
    throw ConfigError("classes_per_task does not match the dataset's class count / n_tasks");
  return suite;
}

inline LabelledSet build_pretrain_set(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (!cfg.pretrain.path.empty()) return load_cifar_binary(cfg.pretrain.path, CifarVariant::cifar10);
  SyntheticSpec spec{1, cfg.pretrain.classes, cfg.dataset.input_dim,
                     SplitCounts{cfg.pretrain.samples_per_class, 1, 1}, cfg.dataset.cluster_spread,
                     Rng(seed).substream(0x9e7).next_u64()};
  return gen_synthetic_suite(spec).tasks.front().data.train;
}

inline std::vector<std::size_t> backbone_widths(const ExperimentConfig& cfg, std::size_t input_dim,
                                                std::size_t final_width) {
  std::vector<std::size_t> w{input_dim};
  w.insert(w.end(), cfg.hidden.begin(), cfg.hidden.end());
  w.push_back(final_width);
  return w;
}

/// Class means of one task's test snapshots at every phase from onset on, embedded jointly.
inline std::vector<MdsRow> task_mds(const SnapshotStore& store, std::uint32_t task, RunTag tag) {
  std::vector<Matrix> blocks;
  std::vector<MdsRow> rows;
  for (int p = SnapshotStore::onset(task); p <= store.last_phase(); ++p) {
    const Matrix means = class_means(store.get(task, p, Split::test));
    for (std::uint32_t c = 0; c < means.rows(); ++c) rows.push_back({tag.seed, tag.width, task, p, c, 0.0, 0.0});
    blocks.push_back(means);
  }
  const Matrix points = vstack(blocks);
  if (points.rows() < 3) return {};
  const Embedding emb = classical_mds(points, 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].x = emb.coords(i, 0);
    rows[i].y = emb.coords(i, 1);
  }
  return rows;
}

/// Full protocol for one (seed, width): data, init, optional pretraining, sequence, three
/// evaluation pathways and the MDS export.
inline CellResult run_cell(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t width) {
  const TaskSuite suite = build_suite(cfg, seed);
  const Rng root(seed);
  Backbone backbone = init_backbone(backbone_widths(cfg, suite.input_dim(), width), root.substream(11).next_u64());
  if (cfg.pretrain.sgd.epochs > 0) {
    SgdConfig sgd = cfg.pretrain.sgd;
    sgd.seed = root.substream(12).substream(sgd.seed).next_u64();
    backbone = pretrain(std::move(backbone), build_pretrain_set(cfg, seed), sgd);
  }
  ContinualConfig ccfg;
  ccfg.task = cfg.task;
  ccfg.task.seed = root.substream(13).substream(cfg.task.seed).next_u64();
  ccfg.lr_after_first = cfg.lr_after_first;

  CellResult out;
  out.seed = seed;
  out.width = width;
  try {
    out.sequence = run_sequence(suite, std::move(backbone), ccfg);
  } catch (const DivergenceError& e) {
    throw DivergenceError(std::string(e.what()) + " [seed " + std::to_string(seed) + ", width " +
                          std::to_string(width) + "]");
  }
  out.sequence.store.metadata.seed = seed;
  out.sequence.store.metadata.config_hash = config_hash(cfg.source_text);

  const RunTag tag{seed, width};
  const SnapshotStore& store = out.sequence.store;
  store.check_complete();
  ProbeConfig probe = cfg.probe;
  probe.sgd.seed = root.substream(14).substream(cfg.probe.sgd.seed).next_u64();
  out.records = evaluate_continual(store, out.sequence.heads, tag);
  auto diag = evaluate_diagnostic(store, probe, tag);
  out.records.insert(out.records.end(), diag.records.begin(), diag.records.end());
  const auto proc = evaluate_procrustes(store, out.sequence.heads, cfg.procrustes, tag);
  out.records.insert(out.records.end(), proc.begin(), proc.end());
  sort_records(out.records);

  const std::uint32_t mds_task = std::min<std::uint32_t>(cfg.output.mds_task, static_cast<std::uint32_t>(store.num_tasks() - 1));
  out.mds = task_mds(store, mds_task, tag);
  return out;
}

// ---------------------------------------------------------------------------------------------
// CSV

inline constexpr std::string_view kRecordsHeader = "metric,task,phase,t,seed,width,accuracy";
inline constexpr std::string_view kSummaryHeader = "width,quantity,metric,t,mean,stderr,n";
inline constexpr std::string_view kMdsHeader = "seed,width,task,phase,t,class,x,y";

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string records_csv(std::span<const EvaluationRecord> records) {
  std::ostringstream out;
  out << kRecordsHeader << "\n";
  for (const auto& r : records)
    out << to_string(r.metric) << "," << r.task << "," << r.phase << "," << r.relative_time() << "," << r.seed
        << "," << r.width << "," << format_double(r.accuracy) << "\n";
  return out.str();
}

inline std::string summary_csv(std::span<const SummaryRow> rows) {
  std::ostringstream out;
  out << kSummaryHeader << "\n";
  for (const auto& r : rows)
    out << r.width << "," << r.quantity << "," << r.metric << "," << (r.t ? std::to_string(*r.t) : "") << ","
        << format_double(r.stats.mean) << "," << format_double(r.stats.stderr_) << "," << r.stats.n << "\n";
  return out.str();
}

inline std::string mds_csv(std::span<const MdsRow> rows) {
  std::ostringstream out;
  out << kMdsHeader << "\n";
  for (const auto& r : rows)
    out << r.seed << "," << r.width << "," << r.task << "," << r.phase << "," << r.phase - static_cast<int>(r.task)
        << "," << r.label << "," << format_double(r.x) << "," << format_double(r.y) << "\n";
  return out.str();
}

namespace detail {

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, std::string_view header) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  std::string line;
  std::uint64_t offset = 0;
  if (!std::getline(in, line) || line != header)
    throw FormatError(path.filename().string() + ": header must be '" + std::string(header) + "'", 0);
  offset += line.size() + 1;
  const std::size_t fields = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) {
      offset += 1;
      continue;
    }
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    if (!line.empty() && line.back() == ',') row.emplace_back();
    if (row.size() != fields)
      throw FormatError(path.filename().string() + ": expected " + std::to_string(fields) + " fields", offset);
    rows.push_back(std::move(row));
    offset += line.size() + 1;
  }
  return rows;
}

template <class T>
T parse_field(const std::string& s, const std::filesystem::path& path, std::size_t row) {
  try {
    std::size_t used = 0;
    T v{};
    if constexpr (std::is_floating_point_v<T>) v = std::stod(s, &used);
    else if constexpr (std::is_signed_v<T>) v = static_cast<T>(std::stoll(s, &used));
    else v = static_cast<T>(std::stoull(s, &used));
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw FormatError(path.filename().string() + ": bad field '" + s + "' in data row " + std::to_string(row), 0);
  }
}

}  // namespace detail

inline std::vector<EvaluationRecord> read_records_csv(const std::filesystem::path& path) {
  std::vector<EvaluationRecord> out;
  const auto rows = detail::read_csv(path, kRecordsHeader);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    EvaluationRecord rec;
    try {
      rec.metric = metric_from_string(r[0]);
    } catch (const ContractError&) {
      throw FormatError(path.filename().string() + ": unknown metric in data row " + std::to_string(i), 0);
    }
    rec.task = detail::parse_field<std::uint32_t>(r[1], path, i);
    rec.phase = detail::parse_field<int>(r[2], path, i);
    rec.seed = detail::parse_field<std::uint64_t>(r[4], path, i);
    rec.width = detail::parse_field<std::size_t>(r[5], path, i);
    rec.accuracy = detail::parse_field<double>(r[6], path, i);
    if (!(rec.accuracy >= 0.0 && rec.accuracy <= 1.0))
      throw FormatError(path.filename().string() + ": accuracy outside [0,1] in data row " + std::to_string(i), 0);
    out.push_back(rec);
  }
  return out;
}

inline std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path) {
  std::vector<SummaryRow> out;
  const auto rows = detail::read_csv(path, kSummaryHeader);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    SummaryRow row;
    row.width = detail::parse_field<std::size_t>(r[0], path, i);
    row.quantity = r[1];
    row.metric = r[2];
    if (!r[3].empty()) row.t = detail::parse_field<int>(r[3], path, i);
    row.stats.mean = detail::parse_field<double>(r[4], path, i);
    row.stats.stderr_ = detail::parse_field<double>(r[5], path, i);
    row.stats.n = detail::parse_field<std::size_t>(r[6], path, i);
    out.push_back(row);
  }
  return out;
}

inline std::vector<MdsRow> read_mds_csv(const std::filesystem::path& path) {
  std::vector<MdsRow> out;
  const auto rows = detail::read_csv(path, kMdsHeader);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out.push_back({detail::parse_field<std::uint64_t>(r[0], path, i), detail::parse_field<std::size_t>(r[1], path, i),
                   detail::parse_field<std::uint32_t>(r[2], path, i), detail::parse_field<int>(r[3], path, i),
                   detail::parse_field<std::uint32_t>(r[5], path, i), detail::parse_field<double>(r[6], path, i),
                   detail::parse_field<double>(r[7], path, i)});
  }
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------------------------

struct ExperimentResult {
  std::vector<EvaluationRecord> records;
  std::vector<SummaryRow> summary;
  std::vector<MdsRow> mds;
};

struct RunOptions {
  std::size_t threads = 1;
  std::uint64_t seed_offset = 0;
  std::filesystem::path output_dir;  // overrides the config's [output] dir when non-empty
};

/// Runs the whole (seed × width) grid and writes records.csv, summary.csv, mds.csv, the config used
/// and, optionally, every snapshot store.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  check_paths(cfg);
  auto cells = cfg.cells();
  for (auto& c : cells) c.first += opt.seed_offset;
  const std::filesystem::path dir = opt.output_dir.empty() ? cfg.output.dir : opt.output_dir;
  std::filesystem::create_directories(dir);

  std::vector<CellResult> results(cells.size());
  parallel_for(cells.size(), opt.threads, [&](std::size_t i) {
    results[i] = run_cell(cfg, cells[i].first, cells[i].second);
    if (cfg.output.save_snapshots)
      save_store(dir / "snapshots" / ("seed" + std::to_string(cells[i].first) + "_w" + std::to_string(cells[i].second)),
                 results[i].sequence.store);
    results[i].sequence.store = SnapshotStore{};  // release memory once exported
  });

  ExperimentResult out;
  for (const auto& r : results) {
    out.records.insert(out.records.end(), r.records.begin(), r.records.end());
    out.mds.insert(out.mds.end(), r.mds.begin(), r.mds.end());
  }
  sort_records(out.records);
  out.summary = summarize(out.records);

  write_text(dir / "records.csv", records_csv(out.records));
  write_text(dir / "summary.csv", summary_csv(out.summary));
  write_text(dir / "mds.csv", mds_csv(out.mds));
  write_text(dir / "config.ini", cfg.source_text);
  return out;
}

}  // namespace repdrift
