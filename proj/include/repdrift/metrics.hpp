#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "repdrift/errors.hpp"
#include "repdrift/probe.hpp"

namespace repdrift {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// Accuracy indexed by (metric, task, absolute phase, seed) for one final-hidden width. Phase -1 is
/// the pre-onset cell. The procrustes value at a task's onset is the continual value there, since
/// aligning a snapshot to itself is the identity.
class TrajectoryTable {
 public:
  TrajectoryTable(std::size_t num_tasks, std::vector<std::uint64_t> seeds, std::size_t width)
      : num_tasks_(num_tasks), seeds_(std::move(seeds)), width_(width),
        cells_(kAllMetrics.size() * num_tasks_ * (num_tasks_ + 1) * seeds_.size(), kMissing) {}

  /// Builds the table for `width` from a record set; seeds and task count are inferred.
  static TrajectoryTable from_records(std::span<const EvaluationRecord> records, std::size_t width) {
    std::set<std::uint64_t> seeds;
    std::size_t tasks = 0;
    for (const auto& r : records) {
      if (r.width != width) continue;
      seeds.insert(r.seed);
      tasks = std::max<std::size_t>(tasks, r.task + 1);
    }
    TrajectoryTable table(tasks, {seeds.begin(), seeds.end()}, width);
    for (const auto& r : records) {
      if (r.width != width) continue;
      require(r.phase >= -1 && r.phase < static_cast<int>(tasks), "trajectory table: phase out of range");
      table.set(r.metric, r.task, r.phase, table.seed_index(r.seed), r.accuracy);
    }
    for (std::uint32_t t = 0; t < tasks; ++t)
      for (std::size_t s = 0; s < table.seeds_.size(); ++s) {
        const int onset = static_cast<int>(t);
        if (std::isnan(table.at(MetricKind::procrustes, t, onset, s)))
          table.set(MetricKind::procrustes, t, onset, s, table.at(MetricKind::continual, t, onset, s));
      }
    return table;
  }

  std::size_t num_tasks() const { return num_tasks_; }
  std::size_t num_seeds() const { return seeds_.size(); }
  const std::vector<std::uint64_t>& seeds() const { return seeds_; }
  std::size_t width() const { return width_; }
  static int onset(std::uint32_t task) { return static_cast<int>(task); }

  std::size_t seed_index(std::uint64_t seed) const {
    const auto it = std::find(seeds_.begin(), seeds_.end(), seed);
    require(it != seeds_.end(), "trajectory table: unknown seed");
    return static_cast<std::size_t>(it - seeds_.begin());
  }

  double at(MetricKind m, std::uint32_t task, int phase, std::size_t seed_idx) const {
    return cells_[index(m, task, phase, seed_idx)];
  }
  void set(MetricKind m, std::uint32_t task, int phase, std::size_t seed_idx, double v) {
    cells_[index(m, task, phase, seed_idx)] = v;
  }

  /// Whether (metric, task, phase) lies in the region the protocol defines.
  bool valid(MetricKind m, std::uint32_t task, int phase) const {
    if (m == MetricKind::feature_transfer) return phase == -1;
    return phase >= onset(task) && phase < static_cast<int>(num_tasks_);
  }

  void check_complete() const {
    require(num_tasks_ > 0 && !seeds_.empty(), "trajectory table is empty");
    for (MetricKind m : kAllMetrics)
      for (std::uint32_t t = 0; t < num_tasks_; ++t)
        for (int p = -1; p < static_cast<int>(num_tasks_); ++p)
          for (std::size_t s = 0; s < seeds_.size(); ++s)
            if (valid(m, t, p) && std::isnan(at(m, t, p, s)))
              throw StoreIntegrityError("trajectory table missing " + std::string(to_string(m)) + " task " +
                                        std::to_string(t) + " phase " + std::to_string(p) + " seed " +
                                        std::to_string(seeds_[s]));
  }

 private:
  std::size_t index(MetricKind m, std::uint32_t task, int phase, std::size_t seed_idx) const {
    require(task < num_tasks_ && phase >= -1 && phase < static_cast<int>(num_tasks_) && seed_idx < seeds_.size(),
            "trajectory table: index out of range");
    const std::size_t phases = num_tasks_ + 1;
    return ((static_cast<std::size_t>(m) * num_tasks_ + task) * phases + static_cast<std::size_t>(phase + 1)) *
               seeds_.size() +
           seed_idx;
  }

  std::size_t num_tasks_;
  std::vector<std::uint64_t> seeds_;
  std::size_t width_;
  std::vector<double> cells_;
};

/// Table re-indexed by relative time t = phase − onset, t ∈ [−1, T−1]. Later tasks have shorter tails.
class AlignedTable {
 public:
  explicit AlignedTable(const TrajectoryTable& src)
      : num_tasks_(src.num_tasks()), num_seeds_(src.num_seeds()),
        cells_(kAllMetrics.size() * num_tasks_ * (num_tasks_ + 1) * num_seeds_, kMissing) {}

  std::size_t num_tasks() const { return num_tasks_; }
  std::size_t num_seeds() const { return num_seeds_; }
  int max_t() const { return static_cast<int>(num_tasks_) - 1; }

  double at(MetricKind m, std::uint32_t task, int t, std::size_t seed_idx) const {
    return cells_[index(m, task, t, seed_idx)];
  }
  void set(MetricKind m, std::uint32_t task, int t, std::size_t seed_idx, double v) {
    cells_[index(m, task, t, seed_idx)] = v;
  }

  /// Values of every task that has data at relative time t, for one seed.
  std::vector<double> across_tasks(MetricKind m, int t, std::size_t seed_idx) const {
    std::vector<double> out;
    for (std::uint32_t task = 0; task < num_tasks_; ++task) {
      const double v = at(m, task, t, seed_idx);
      if (!std::isnan(v)) out.push_back(v);
    }
    return out;
  }

 private:
  std::size_t index(MetricKind m, std::uint32_t task, int t, std::size_t seed_idx) const {
    require(task < num_tasks_ && t >= -1 && t < static_cast<int>(num_tasks_) && seed_idx < num_seeds_,
            "aligned table: index out of range");
    return ((static_cast<std::size_t>(m) * num_tasks_ + task) * (num_tasks_ + 1) + static_cast<std::size_t>(t + 1)) *
               num_seeds_ +
           seed_idx;
  }

  std::size_t num_tasks_;
  std::size_t num_seeds_;
  std::vector<double> cells_;
};

inline AlignedTable align_to_onset(const TrajectoryTable& table) {
  AlignedTable out(table);
  for (MetricKind m : kAllMetrics)
    for (std::uint32_t task = 0; task < table.num_tasks(); ++task)
      for (int p = -1; p < static_cast<int>(table.num_tasks()); ++p) {
        if (!table.valid(m, task, p)) continue;
        const int t = p == -1 ? -1 : p - TrajectoryTable::onset(task);
        for (std::size_t s = 0; s < table.num_seeds(); ++s) out.set(m, task, t, s, table.at(m, task, p, s));
      }
  return out;
}

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
};

/// Mean and standard error (sample std with n−1, divided by √n; zero for n = 1).
inline MeanStderr mean_and_stderr(std::span<const double> values) {
  if (values.empty()) throw ContractError("mean_and_stderr: empty input");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  if (values.size() == 1) return {mean, 0.0, 1};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n), values.size()};
}

inline double mean_of(std::span<const double> values) {
  require(!values.empty(), "mean of empty range");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

/// Per-seed mean over tasks of continual accuracy at t = 0.
inline std::vector<double> onset_accuracy(const TrajectoryTable& table) {
  table.check_complete();
  const AlignedTable aligned = align_to_onset(table);
  std::vector<double> out;
  for (std::size_t s = 0; s < table.num_seeds(); ++s)
    out.push_back(mean_of(aligned.across_tasks(MetricKind::continual, 0, s)));
  return out;
}

/// Per-seed mean over tasks of acc(t=0) − mean_{t>0} acc(t). Tasks without t > 0 data are skipped.
/// feature_transfer only exists at t = −1 and is rejected.
inline std::vector<double> performance_loss(const TrajectoryTable& table, MetricKind metric) {
  require(metric != MetricKind::feature_transfer, "performance_loss: feature_transfer has no t >= 0 trajectory");
  const AlignedTable aligned = align_to_onset(table);
  std::vector<double> out;
  for (std::size_t s = 0; s < table.num_seeds(); ++s) {
    std::vector<double> per_task;
    for (std::uint32_t task = 0; task < table.num_tasks(); ++task) {
      const double a0 = aligned.at(metric, task, 0, s);
      std::vector<double> later;
      for (int t = 1; t <= aligned.max_t(); ++t) {
        const double v = aligned.at(metric, task, t, s);
        if (!std::isnan(v)) later.push_back(v);
      }
      if (later.empty() || std::isnan(a0)) continue;
      per_task.push_back(a0 - mean_of(later));
    }
    if (per_task.empty()) throw ContractError("performance_loss: no task has data after its onset");
    out.push_back(mean_of(per_task));
  }
  return out;
}

/// Components of the continual drop for one (task, t > 0, seed) cell.
struct DecompositionCell {
  std::uint32_t task = 0;
  int t = 0;
  std::size_t seed_idx = 0;
  double continual_onset = 0.0;
  double continual = 0.0;
  double diagnostic_onset = 0.0;
  double misalignment = 0.0;        // diag − cont
  double forgetting = 0.0;          // diag(0) − diag(t)
  double geometry_recovered = 0.0;  // proc − cont
  double geometry_deforming = 0.0;  // diag − proc

  /// cont(0) − cont(t) − [forgetting + misalignment + (cont(0) − diag(0))]
  double drop_residual() const {
    return (continual_onset - continual) - (forgetting + misalignment + (continual_onset - diagnostic_onset));
  }
  /// geometry_recovered + geometry_deforming − misalignment
  double misalignment_residual() const { return geometry_recovered + geometry_deforming - misalignment; }
};

inline std::vector<DecompositionCell> decompose(const TrajectoryTable& table) {
  table.check_complete();
  const AlignedTable aligned = align_to_onset(table);
  std::vector<DecompositionCell> out;
  for (std::size_t s = 0; s < table.num_seeds(); ++s)
    for (std::uint32_t task = 0; task < table.num_tasks(); ++task)
      for (int t = 1; t <= aligned.max_t(); ++t) {
        const double cont = aligned.at(MetricKind::continual, task, t, s);
        if (std::isnan(cont)) continue;
        const double diag = aligned.at(MetricKind::diagnostic, task, t, s);
        const double proc = aligned.at(MetricKind::procrustes, task, t, s);
        DecompositionCell c;
        c.task = task;
        c.t = t;
        c.seed_idx = s;
        c.continual_onset = aligned.at(MetricKind::continual, task, 0, s);
        c.continual = cont;
        c.diagnostic_onset = aligned.at(MetricKind::diagnostic, task, 0, s);
        c.misalignment = diag - cont;
        c.forgetting = c.diagnostic_onset - diag;
        c.geometry_recovered = proc - cont;
        c.geometry_deforming = diag - proc;
        out.push_back(c);
      }
  return out;
}

/// Per-seed mean over tasks at relative time t (NaN for a seed with no task at t).
inline std::vector<double> trajectory_point(const AlignedTable& aligned, MetricKind m, int t) {
  std::vector<double> out;
  for (std::size_t s = 0; s < aligned.num_seeds(); ++s) {
    const auto v = aligned.across_tasks(m, t, s);
    if (!v.empty()) out.push_back(mean_of(v));
  }
  return out;
}

/// One row of summary.csv. `t` is set only for trajectory rows; `metric` is empty for scalars that
/// do not depend on a metric kind.
struct SummaryRow {
  std::size_t width = 0;
  std::string quantity;
  std::string metric;
  std::optional<int> t;
  MeanStderr stats;
};

/// Trajectories (mean ± stderr over seeds of the task-mean at each t), onset accuracy, performance
/// loss per metric, decomposition component means and the recovered fraction, for every width.
inline std::vector<SummaryRow> summarize(std::span<const EvaluationRecord> records) {
  std::set<std::size_t> widths;
  for (const auto& r : records) widths.insert(r.width);
  std::vector<SummaryRow> out;
  for (std::size_t w : widths) {
    const TrajectoryTable table = TrajectoryTable::from_records(records, w);
    table.check_complete();
    const AlignedTable aligned = align_to_onset(table);
    for (MetricKind m : kAllMetrics)
      for (int t = -1; t <= aligned.max_t(); ++t) {
        const auto v = trajectory_point(aligned, m, t);
        if (!v.empty()) out.push_back({w, "trajectory", std::string(to_string(m)), t, mean_and_stderr(v)});
      }
    out.push_back({w, "onset_accuracy", "continual", std::nullopt, mean_and_stderr(onset_accuracy(table))});
    if (table.num_tasks() < 2) continue;
    for (MetricKind m : {MetricKind::continual, MetricKind::diagnostic, MetricKind::procrustes})
      out.push_back({w, "performance_loss", std::string(to_string(m)), std::nullopt,
                     mean_and_stderr(performance_loss(table, m))});

    const auto cells = decompose(table);
    struct Acc {
      double mis = 0, forg = 0, rec = 0, def = 0;
      std::size_t n = 0;
    };
    std::vector<Acc> per_seed(table.num_seeds());
    for (const auto& c : cells) {
      auto& a = per_seed[c.seed_idx];
      a.mis += c.misalignment;
      a.forg += c.forgetting;
      a.rec += c.geometry_recovered;
      a.def += c.geometry_deforming;
      ++a.n;
    }
    std::vector<double> mis, forg, rec, def, frac;
    for (const auto& a : per_seed) {
      const double n = static_cast<double>(a.n);
      mis.push_back(a.mis / n);
      forg.push_back(a.forg / n);
      rec.push_back(a.rec / n);
      def.push_back(a.def / n);
      if (a.mis != 0.0) frac.push_back(a.rec / a.mis);
    }
    out.push_back({w, "misalignment", "", std::nullopt, mean_and_stderr(mis)});
    out.push_back({w, "forgetting", "", std::nullopt, mean_and_stderr(forg)});
    out.push_back({w, "geometry_recovered", "", std::nullopt, mean_and_stderr(rec)});
    out.push_back({w, "geometry_deforming", "", std::nullopt, mean_and_stderr(def)});
    if (!frac.empty()) out.push_back({w, "recovered_fraction", "", std::nullopt, mean_and_stderr(frac)});
  }
  return out;
}

}  // namespace repdrift
