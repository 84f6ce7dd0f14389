#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "repdrift/datasets.hpp"
#include "repdrift/errors.hpp"
#include "repdrift/model.hpp"

namespace repdrift {

/// Phase index used for the snapshot taken just before a task is first trained.
inline constexpr int kPreOnsetPhase = -1;

/// Final-hidden activations of one task's split after a given training phase.
struct RepresentationSnapshot {
  Matrix h;
  std::vector<std::uint32_t> labels;
  std::uint32_t task = 0;
  int phase = 0;
  Split split = Split::test;
  std::uint32_t num_classes = 0;
};

struct SnapshotKey {
  std::uint32_t task = 0;
  int phase = 0;
  Split split = Split::test;

  friend auto operator<=>(const SnapshotKey& a, const SnapshotKey& b) {
    return std::tie(a.task, a.phase, a.split) <=> std::tie(b.task, b.phase, b.split);
  }
  friend bool operator==(const SnapshotKey&, const SnapshotKey&) = default;
};

struct StoreMetadata {
  std::uint64_t seed = 0;
  std::vector<std::size_t> widths;
  std::string config_hash;
  std::size_t num_tasks = 0;
};

/// Snapshots keyed by (task, phase, split). The onset phase of task t is t.
class SnapshotStore {
 public:
  StoreMetadata metadata;

  void put(RepresentationSnapshot snap) {
    require(snap.h.rows() == snap.labels.size(), "snapshot: row count does not match label count");
    SnapshotKey key{snap.task, snap.phase, snap.split};
    cells_.insert_or_assign(key, std::move(snap));
  }

  bool contains(std::uint32_t task, int phase, Split split) const {
    return cells_.contains(SnapshotKey{task, phase, split});
  }

  const RepresentationSnapshot& get(std::uint32_t task, int phase, Split split) const {
    const auto it = cells_.find(SnapshotKey{task, phase, split});
    if (it == cells_.end())
      throw StoreIntegrityError("snapshot store has no cell (task " + std::to_string(task) + ", phase " +
                                std::to_string(phase) + ", " + std::string(to_string(split)) + ")");
    return it->second;
  }

  std::size_t num_tasks() const { return metadata.num_tasks; }
  static int onset(std::uint32_t task) { return static_cast<int>(task); }
  int last_phase() const { return static_cast<int>(metadata.num_tasks) - 1; }
  std::size_t size() const { return cells_.size(); }
  const std::map<SnapshotKey, RepresentationSnapshot>& cells() const { return cells_; }

  /// Throws StoreIntegrityError unless every (task, {-1, onset..last}, {probe-fit, test}) cell exists.
  void check_complete() const {
    for (std::uint32_t t = 0; t < num_tasks(); ++t) {
      for (Split s : {Split::probe_fit, Split::test}) {
        (void)get(t, kPreOnsetPhase, s);
        for (int p = onset(t); p <= last_phase(); ++p) (void)get(t, p, s);
      }
    }
  }

 private:
  std::map<SnapshotKey, RepresentationSnapshot> cells_;
};

struct ContinualConfig {
  SgdConfig task;
  /// Learning rate for every task after the first; used for frozen-backbone controls.
  std::optional<double> lr_after_first;
};

struct ContinualEval {
  std::uint32_t task = 0;
  int phase = 0;
  double accuracy = 0.0;
};

struct SequenceResult {
  SnapshotStore store;
  std::vector<HeadParams> heads;              // continual heads, one per task
  std::vector<ContinualEval> continual;       // every existing head after every phase
  std::vector<std::vector<double>> loss_curves;  // per phase
  Backbone backbone;                          // state after the last phase
};

inline RepresentationSnapshot take_snapshot(const Backbone& b, const LabelledSet& set, std::uint32_t task,
                                            int phase) {
  return RepresentationSnapshot{representations(b, set.inputs), set.labels, task, phase, set.split,
                                set.num_classes};
}

/// Trains the backbone with a throwaway head on `pretrain_set`; the head is discarded.
inline Backbone pretrain(Backbone b, const LabelledSet& pretrain_set, const SgdConfig& cfg) {
  require(pretrain_set.inputs.cols() == b.input_dim(), "pretrain: input dimension mismatch");
  if (cfg.epochs == 0 || pretrain_set.size() == 0) return b;
  HeadParams head = make_head(0, b.output_dim(), pretrain_set.num_classes);
  train_joint(b, head, pretrain_set, cfg, "pretrain");
  return b;
}

/// Task-incremental protocol: before phase p the backbone yields task p's pre-onset snapshot; then
/// the backbone and a fresh head are trained on task p, and every task seen so far is snapshotted
/// and scored with its own frozen head.
inline SequenceResult run_sequence(const TaskSuite& suite, Backbone backbone, const ContinualConfig& cfg) {
  require(!suite.tasks.empty(), "run_sequence: suite has no tasks");
  require(suite.input_dim() == backbone.input_dim(), "run_sequence: backbone input dimension mismatch");
  const std::size_t n_tasks = suite.tasks.size();
  const std::size_t width = backbone.output_dim();

  SequenceResult out;
  out.store.metadata.num_tasks = n_tasks;
  out.store.metadata.widths = backbone.widths();
  out.store.metadata.seed = cfg.task.seed;

  for (std::uint32_t p = 0; p < n_tasks; ++p) {
    const Task& task = suite.tasks[p];
    for (Split s : {Split::probe_fit, Split::test})
      out.store.put(take_snapshot(backbone, task.data.get(s), p, kPreOnsetPhase));

    HeadParams head = make_head(p, width, suite.classes_per_task, HeadKind::continual);
    SgdConfig sgd = cfg.task;
    sgd.seed = Rng(cfg.task.seed).substream(p).next_u64();
    if (p > 0 && cfg.lr_after_first) sgd.learning_rate = *cfg.lr_after_first;
    try {
      out.loss_curves.push_back(
          train_joint(backbone, head, task.data.train, sgd, "task " + std::to_string(p)).loss_curve);
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " (phase " + std::to_string(p) + ")");
    }
    out.heads.push_back(std::move(head));

    for (std::uint32_t t = 0; t <= p; ++t) {
      for (Split s : {Split::probe_fit, Split::test})
        out.store.put(take_snapshot(backbone, suite.tasks[t].data.get(s), t, static_cast<int>(p)));
      const auto& snap = out.store.get(t, static_cast<int>(p), Split::test);
      out.continual.push_back({t, static_cast<int>(p), eval_head(out.heads[t], snap.h, snap.labels)});
    }
  }
  out.backbone = std::move(backbone);
  return out;
}

}  // namespace repdrift
