#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "repdrift/continual.hpp"
#include "repdrift/errors.hpp"
#include "repdrift/geometry.hpp"
#include "repdrift/model.hpp"
#include "repdrift/parallel.hpp"

namespace repdrift {

enum class MetricKind { continual, diagnostic, procrustes, feature_transfer };

inline constexpr std::array<MetricKind, 4> kAllMetrics{MetricKind::continual, MetricKind::diagnostic,
                                                      MetricKind::procrustes, MetricKind::feature_transfer};

inline std::string_view to_string(MetricKind m) {
  switch (m) {
    case MetricKind::continual: return "continual";
    case MetricKind::diagnostic: return "diagnostic";
    case MetricKind::procrustes: return "procrustes";
    case MetricKind::feature_transfer: return "feature_transfer";
  }
  return "?";
}

inline MetricKind metric_from_string(std::string_view s) {
  for (MetricKind m : kAllMetrics)
    if (to_string(m) == s) return m;
  throw ContractError("unknown metric kind '" + std::string(s) + "'");
}

struct EvaluationRecord {
  std::uint32_t task = 0;
  int phase = 0;
  MetricKind metric = MetricKind::continual;
  double accuracy = 0.0;
  std::uint64_t seed = 0;
  std::size_t width = 0;

  int relative_time() const { return phase == kPreOnsetPhase ? -1 : phase - static_cast<int>(task); }
};

/// Deterministic merge order: (seed, width, metric, task, phase).
inline void sort_records(std::vector<EvaluationRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.seed, a.width, a.metric, a.task, a.phase) <
           std::tie(b.seed, b.width, b.metric, b.task, b.phase);
  });
}

enum class AlignOn { samples, means };

struct ProcrustesOptions {
  bool allow_reflection = true;
  AlignOn fit_on = AlignOn::samples;
};

struct RunTag {
  std::uint64_t seed = 0;
  std::size_t width = 0;
};

/// Original head of each task on that task's test snapshot at every phase from onset on.
inline std::vector<EvaluationRecord> evaluate_continual(const SnapshotStore& store,
                                                        const std::vector<HeadParams>& heads, RunTag tag = {}) {
  require(heads.size() == store.num_tasks(), "evaluate_continual: need one head per task");
  std::vector<EvaluationRecord> out;
  for (std::uint32_t t = 0; t < store.num_tasks(); ++t)
    for (int p = SnapshotStore::onset(t); p <= store.last_phase(); ++p) {
      const auto& snap = store.get(t, p, Split::test);
      out.push_back({t, p, MetricKind::continual, eval_head(heads[t], snap.h, snap.labels), tag.seed, tag.width});
    }
  return out;
}

struct DiagnosticResult {
  std::vector<EvaluationRecord> records;
  std::map<std::pair<std::uint32_t, int>, HeadParams> heads;  // (task, phase) -> probe
};

/// Fresh probe per (task, phase), fit on probe-fit and scored on test. The pre-onset cell is
/// reported as feature_transfer.
inline DiagnosticResult evaluate_diagnostic(const SnapshotStore& store, const ProbeConfig& cfg, RunTag tag = {},
                                            std::size_t threads = 1) {
  std::vector<std::pair<std::uint32_t, int>> cells;
  for (std::uint32_t t = 0; t < store.num_tasks(); ++t) {
    cells.emplace_back(t, kPreOnsetPhase);
    for (int p = SnapshotStore::onset(t); p <= store.last_phase(); ++p) cells.emplace_back(t, p);
  }
  std::vector<HeadParams> probes(cells.size());
  std::vector<double> acc(cells.size());
  parallel_for(cells.size(), threads, [&](std::size_t i) {
    const auto [t, p] = cells[i];
    const auto& fit = store.get(t, p, Split::probe_fit);
    const auto& test = store.get(t, p, Split::test);
    try {
      probes[i] = fit_linear_probe(fit.h, fit.labels, std::max(fit.num_classes, test.num_classes), cfg, t);
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " (probe task " + std::to_string(t) + ", phase " +
                            std::to_string(p) + ")");
    }
    acc[i] = eval_head(probes[i], test.h, test.labels);
  });
  DiagnosticResult out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto [t, p] = cells[i];
    const MetricKind kind = p == kPreOnsetPhase ? MetricKind::feature_transfer : MetricKind::diagnostic;
    out.records.push_back({t, p, kind, acc[i], tag.seed, tag.width});
    out.heads.emplace(cells[i], std::move(probes[i]));
  }
  return out;
}

/// Fits the similarity transform from phase-p to onset representations (probe-fit split) and
/// scores the original head on the aligned test representations.
inline SimilarityTransform fit_alignment(const SnapshotStore& store, std::uint32_t t, int p,
                                         const ProcrustesOptions& opt) {
  const auto& src = store.get(t, p, Split::probe_fit);
  const auto& dst = store.get(t, SnapshotStore::onset(t), Split::probe_fit);
  try {
    if (opt.fit_on == AlignOn::means)
      return fit_similarity_transform(class_means(src), class_means(dst), opt.allow_reflection).transform;
    return fit_similarity_transform(src.h, dst.h, opt.allow_reflection).transform;
  } catch (const DegenerateError& e) {
    throw DegenerateError(std::string(e.what()) + " (task " + std::to_string(t) + ", phase " + std::to_string(p) +
                          ")");
  }
}

inline std::vector<EvaluationRecord> evaluate_procrustes(const SnapshotStore& store,
                                                         const std::vector<HeadParams>& heads,
                                                         const ProcrustesOptions& opt = {}, RunTag tag = {},
                                                         std::size_t threads = 1) {
  require(heads.size() == store.num_tasks(), "evaluate_procrustes: need one head per task");
  std::vector<std::pair<std::uint32_t, int>> cells;
  for (std::uint32_t t = 0; t < store.num_tasks(); ++t)
    for (int p = SnapshotStore::onset(t) + 1; p <= store.last_phase(); ++p) cells.emplace_back(t, p);
  std::vector<double> acc(cells.size());
  parallel_for(cells.size(), threads, [&](std::size_t i) {
    const auto [t, p] = cells[i];
    const SimilarityTransform tr = fit_alignment(store, t, p, opt);
    const auto& test = store.get(t, p, Split::test);
    acc[i] = eval_head(heads[t], apply_transform(tr, test.h), test.labels);
  });
  std::vector<EvaluationRecord> out;
  for (std::size_t i = 0; i < cells.size(); ++i)
    out.push_back({cells[i].first, cells[i].second, MetricKind::procrustes, acc[i], tag.seed, tag.width});
  return out;
}

}  // namespace repdrift
