#include <gtest/gtest.h>

#include "repdrift/continual.hpp"
#include "repdrift/datasets.hpp"
#include "repdrift/probe.hpp"
#include "support/test_util.hpp"

namespace repdrift {
namespace {

SequenceResult small_run(std::size_t n_tasks, std::optional<double> lr_after_first = std::nullopt) {
  SyntheticSpec spec;
  spec.n_tasks = n_tasks;
  spec.classes_per_task = 3;
  spec.input_dim = 8;
  spec.per_class = {30, 15, 20};
  spec.cluster_spread = 0.8;
  spec.seed = 5;
  ContinualConfig cfg;
  cfg.task = SgdConfig{0.05, 16, 8, 0.0, 2};
  cfg.lr_after_first = lr_after_first;
  return run_sequence(gen_synthetic_suite(spec), init_backbone(std::vector<std::size_t>{8, 16, 10}, 4), cfg);
}

TEST(MetricKind, StringRoundTrip) {
  for (MetricKind m : kAllMetrics) EXPECT_EQ(metric_from_string(to_string(m)), m);
  EXPECT_THROW(metric_from_string("bogus"), ContractError);
}

TEST(EvaluationRecord, RelativeTime) {
  EXPECT_EQ((EvaluationRecord{3, 5}).relative_time(), 2);
  EXPECT_EQ((EvaluationRecord{3, kPreOnsetPhase}).relative_time(), -1);
}

TEST(SortRecords, OrderIsSeedWidthMetricTaskPhase) {
  std::vector<EvaluationRecord> r{{1, 2, MetricKind::diagnostic, 0, 0, 16},
                                  {0, 1, MetricKind::continual, 0, 1, 16},
                                  {0, 0, MetricKind::continual, 0, 0, 64},
                                  {0, 1, MetricKind::continual, 0, 0, 16},
                                  {0, 0, MetricKind::continual, 0, 0, 16}};
  sort_records(r);
  EXPECT_EQ(r[0].phase, 0);
  EXPECT_EQ(r[1].phase, 1);
  EXPECT_EQ(r[2].metric, MetricKind::diagnostic);
  EXPECT_EQ(r[3].width, 64u);
  EXPECT_EQ(r[4].seed, 1u);
}

TEST(EvaluateContinual, MatchesSequenceBookkeeping) {
  const auto run = small_run(3);
  const auto recs = evaluate_continual(run.store, run.heads, {9, 10});
  ASSERT_EQ(recs.size(), run.continual.size());
  for (const auto& r : recs) {
    EXPECT_EQ(r.seed, 9u);
    EXPECT_EQ(r.width, 10u);
    bool found = false;
    for (const auto& e : run.continual)
      if (e.task == r.task && e.phase == r.phase) {
        EXPECT_EQ(e.accuracy, r.accuracy);
        found = true;
      }
    EXPECT_TRUE(found);
  }
}

TEST(EvaluateDiagnostic, CoversEveryCellAndLabelsPreOnset) {
  const auto run = small_run(3);
  const auto diag = evaluate_diagnostic(run.store, ProbeConfig{});
  EXPECT_EQ(diag.records.size(), 3u + 6u);
  std::size_t transfer = 0;
  for (const auto& r : diag.records) {
    EXPECT_GE(r.accuracy, 0.0);
    EXPECT_LE(r.accuracy, 1.0);
    if (r.metric == MetricKind::feature_transfer) {
      EXPECT_EQ(r.phase, kPreOnsetPhase);
      ++transfer;
    }
    EXPECT_EQ(diag.heads.at({r.task, r.phase}).kind, HeadKind::diagnostic);
  }
  EXPECT_EQ(transfer, 3u);
}

TEST(EvaluateDiagnostic, ThreadCountDoesNotChangeResults) {
  const auto run = small_run(3);
  const auto a = evaluate_diagnostic(run.store, ProbeConfig{}, {}, 1);
  const auto b = evaluate_diagnostic(run.store, ProbeConfig{}, {}, 4);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) EXPECT_EQ(a.records[i].accuracy, b.records[i].accuracy);
}

TEST(EvaluateProcrustes, NoRecordAtOnset) {
  const auto run = small_run(3);
  const auto recs = evaluate_procrustes(run.store, run.heads);
  EXPECT_EQ(recs.size(), 3u);  // (0,1), (0,2), (1,2)
  for (const auto& r : recs) EXPECT_GT(r.phase, static_cast<int>(r.task));
}

TEST(EvaluateProcrustes, FrozenBackboneEqualsContinual) {
  const auto run = small_run(3, 0.0);
  const auto cont = evaluate_continual(run.store, run.heads);
  for (const auto& r : evaluate_procrustes(run.store, run.heads)) {
    if (r.task != 0) continue;
    for (const auto& c : cont)
      if (c.task == 0 && c.phase == r.phase) {
        EXPECT_NEAR(r.accuracy, c.accuracy, 1e-10);
      }
  }
}

TEST(EvaluateProcrustes, UndoesPlantedSimilarityDrift) {
  // Replace later snapshots of task 0 with a similarity image of the onset snapshot.
  auto run = small_run(2);
  Rng rng(1);
  SimilarityTransform drift;
  drift.rotation = testing::random_orthogonal(rng, 10);
  drift.scale = 1.7;
  drift.translation.assign(10, 0.3);
  for (Split s : {Split::probe_fit, Split::test}) {
    auto snap = run.store.get(0, 0, s);
    snap.phase = 1;
    snap.h = apply_transform(drift, snap.h);
    run.store.put(snap);
  }
  const auto recs = evaluate_procrustes(run.store, run.heads);
  const auto& onset = run.store.get(0, 0, Split::test);
  const double onset_acc = eval_head(run.heads[0], onset.h, onset.labels);
  for (const auto& r : recs)
    if (r.task == 0 && r.phase == 1) {
      EXPECT_NEAR(r.accuracy, onset_acc, 1e-12);
    }
}

TEST(EvaluateProcrustes, FitOnMeans) {
  const auto run = small_run(2);
  ProcrustesOptions opt;
  opt.fit_on = AlignOn::means;
  const auto recs = evaluate_procrustes(run.store, run.heads, opt);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_GE(recs[0].accuracy, 0.0);
}

TEST(EvaluateProcrustes, RequiresOneHeadPerTask) {
  const auto run = small_run(2);
  std::vector<HeadParams> heads{run.heads[0]};
  EXPECT_THROW(evaluate_procrustes(run.store, heads), ContractError);
  EXPECT_THROW(evaluate_continual(run.store, heads), ContractError);
}

}  // namespace
}  // namespace repdrift
