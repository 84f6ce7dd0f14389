#include <gtest/gtest.h>

#include "repdrift/continual.hpp"
#include "repdrift/datasets.hpp"

namespace repdrift {
namespace {

TaskSuite small_suite(std::size_t n_tasks, std::uint64_t seed = 3) {
  SyntheticSpec spec;
  spec.n_tasks = n_tasks;
  spec.classes_per_task = 3;
  spec.input_dim = 8;
  spec.per_class = {30, 10, 20};
  spec.cluster_spread = 0.5;
  spec.seed = seed;
  return gen_synthetic_suite(spec);
}

ContinualConfig small_config() {
  ContinualConfig cfg;
  cfg.task = SgdConfig{0.05, 16, 5, 0.0, 7};
  return cfg;
}

Backbone small_backbone(std::uint64_t seed = 1) { return init_backbone(std::vector<std::size_t>{8, 12, 6}, seed); }

TEST(RunSequence, SingleTaskHasOnsetAndPreOnsetOnly) {
  const auto res = run_sequence(small_suite(1), small_backbone(), small_config());
  EXPECT_EQ(res.heads.size(), 1u);
  EXPECT_EQ(res.store.size(), 4u);
  EXPECT_TRUE(res.store.contains(0, kPreOnsetPhase, Split::test));
  EXPECT_TRUE(res.store.contains(0, 0, Split::probe_fit));
  EXPECT_EQ(res.continual.size(), 1u);
}

TEST(RunSequence, SnapshotGridIsComplete) {
  const std::size_t T = 5;
  const auto res = run_sequence(small_suite(T), small_backbone(), small_config());
  EXPECT_NO_THROW(res.store.check_complete());
  // T pre-onset groups plus T(T+1)/2 post-training groups, two splits each.
  EXPECT_EQ(res.store.size(), 2 * (T + T * (T + 1) / 2));
  EXPECT_EQ(res.continual.size(), T * (T + 1) / 2);
  for (const auto& [key, snap] : res.store.cells()) {
    EXPECT_EQ(snap.h.cols(), 6u);
    EXPECT_EQ(snap.h.rows(), snap.labels.size());
    EXPECT_TRUE(key.phase == kPreOnsetPhase || key.phase >= static_cast<int>(key.task));
  }
}

TEST(RunSequence, IncompleteStoreIsReported) {
  const auto res = run_sequence(small_suite(2), small_backbone(), small_config());
  SnapshotStore partial;
  partial.metadata = res.store.metadata;
  for (const auto& [key, snap] : res.store.cells())
    if (!(key.task == 1 && key.phase == 1 && key.split == Split::test)) partial.put(snap);
  EXPECT_THROW(partial.check_complete(), StoreIntegrityError);
  EXPECT_THROW(partial.get(1, 1, Split::test), StoreIntegrityError);
}

TEST(RunSequence, HeadsAreNotTouchedByLaterPhases) {
  const TaskSuite suite = small_suite(4);
  const auto full = run_sequence(suite, small_backbone(), small_config());
  for (std::size_t k = 1; k <= 4; ++k) {
    TaskSuite prefix = suite;
    prefix.tasks.resize(k);
    const auto part = run_sequence(prefix, small_backbone(), small_config());
    for (std::size_t t = 0; t < k; ++t) EXPECT_EQ(part.heads[t], full.heads[t]) << "head " << t << " after " << k;
  }
}

TEST(RunSequence, ContinualAccuracyMatchesStoredSnapshots) {
  const auto res = run_sequence(small_suite(3), small_backbone(), small_config());
  for (const auto& e : res.continual) {
    const auto& snap = res.store.get(e.task, e.phase, Split::test);
    EXPECT_EQ(e.accuracy, eval_head(res.heads[e.task], snap.h, snap.labels));
  }
}

TEST(RunSequence, RepresentationsDriftAfterOnset) {
  const auto res = run_sequence(small_suite(3), small_backbone(), small_config());
  EXPECT_NE(res.store.get(0, 0, Split::test).h, res.store.get(0, 2, Split::test).h);
}

TEST(RunSequence, FrozenBackboneAfterFirstTask) {
  ContinualConfig cfg = small_config();
  cfg.lr_after_first = 0.0;
  const auto res = run_sequence(small_suite(3), small_backbone(), cfg);
  for (int p = 1; p <= 2; ++p) EXPECT_EQ(res.store.get(0, 0, Split::test).h, res.store.get(0, p, Split::test).h);
  // The pre-onset snapshot of task 1 is taken after phase 0, from the same frozen backbone.
  EXPECT_EQ(res.store.get(1, kPreOnsetPhase, Split::test).h, res.store.get(1, 1, Split::test).h);
}

TEST(RunSequence, DuplicateTaskKeepsContinualHigh) {
  TaskSuite suite = small_suite(1);
  suite.tasks.push_back(suite.tasks[0]);
  suite.tasks[1].id = 1;
  const auto res = run_sequence(suite, small_backbone(), small_config());
  const double onset = res.continual.front().accuracy;
  double after = -1;
  for (const auto& e : res.continual)
    if (e.task == 0 && e.phase == 1) after = e.accuracy;
  EXPECT_GE(after, onset - 0.05);
}

TEST(RunSequence, Deterministic) {
  const auto a = run_sequence(small_suite(3), small_backbone(), small_config());
  const auto b = run_sequence(small_suite(3), small_backbone(), small_config());
  EXPECT_EQ(a.heads, b.heads);
  ASSERT_EQ(a.store.size(), b.store.size());
  for (const auto& [key, snap] : a.store.cells()) EXPECT_EQ(snap.h, b.store.get(key.task, key.phase, key.split).h);
}

TEST(RunSequence, RejectsInputDimensionMismatch) {
  EXPECT_THROW(run_sequence(small_suite(2), init_backbone(std::vector<std::size_t>{5, 4}, 0), small_config()),
               ContractError);
}

TEST(Pretrain, ZeroEpochsIsIdentity) {
  const Backbone b = small_backbone();
  const TaskSuite suite = small_suite(1);
  EXPECT_EQ(pretrain(b, suite.tasks[0].data.train, SgdConfig{0.05, 16, 0, 0.0, 0}), b);
}

TEST(Pretrain, ImprovesFeatureTransfer) {
  // Pretraining on all classes of a suite should make unseen-head probing easier than random features.
  SyntheticSpec spec;
  spec.n_tasks = 1;
  spec.classes_per_task = 6;
  spec.input_dim = 8;
  spec.per_class = {60, 30, 60};
  spec.cluster_spread = 1.5;
  spec.seed = 11;
  const TaskSuite suite = gen_synthetic_suite(spec);
  const auto& data = suite.tasks[0].data;
  const Backbone raw = init_backbone(std::vector<std::size_t>{8, 4}, 2);
  const Backbone trained = pretrain(raw, data.train, SgdConfig{0.05, 16, 40, 0.0, 3});
  auto probe_acc = [&](const Backbone& b) {
    const HeadParams p = fit_linear_probe(representations(b, data.probe_fit.inputs), data.probe_fit.labels, 6);
    return eval_head(p, representations(b, data.test.inputs), data.test.labels);
  };
  EXPECT_GT(probe_acc(trained), probe_acc(raw));
}

}  // namespace
}  // namespace repdrift
