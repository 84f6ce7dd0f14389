#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "repdrift/datasets.hpp"
#include "repdrift/model.hpp"
#include "support/test_util.hpp"

namespace repdrift {
namespace {

using testing::random_matrix;

std::vector<std::uint32_t> random_labels(Rng& rng, std::size_t n, std::size_t classes) {
  std::vector<std::uint32_t> y(n);
  for (auto& v : y) v = static_cast<std::uint32_t>(rng.below(classes));
  return y;
}

HeadParams random_head(Rng& rng, std::size_t width, std::size_t classes) {
  HeadParams h = make_head(0, width, classes);
  for (double& v : h.weights.data()) v = 0.5 * rng.normal();
  for (double& v : h.bias) v = 0.1 * rng.normal();
  return h;
}

// Per-sample loop evaluation, written independently of the matrix kernels.
std::vector<double> naive_forward(const Backbone& b, std::span<const double> x) {
  std::vector<double> a(x.begin(), x.end());
  for (const auto& layer : b.layers) {
    std::vector<double> next(layer.weights.cols());
    for (std::size_t j = 0; j < next.size(); ++j) {
      double z = layer.bias[j];
      for (std::size_t i = 0; i < a.size(); ++i) z += a[i] * layer.weights(i, j);
      next[j] = std::max(0.0, z);
    }
    a = std::move(next);
  }
  return a;
}

TEST(InitBackbone, Deterministic) {
  const std::vector<std::size_t> w{4, 8};
  EXPECT_EQ(init_backbone(w, 5), init_backbone(w, 5));
  EXPECT_NE(init_backbone(w, 5), init_backbone(w, 6));
}

TEST(InitBackbone, ZeroBiases) {
  const Backbone b = init_backbone(std::vector<std::size_t>{3, 7, 5}, 1);
  for (const auto& l : b.layers)
    for (double v : l.bias) EXPECT_EQ(v, 0.0);
}

TEST(InitBackbone, HeStandardDeviation) {
  const Backbone b = init_backbone(std::vector<std::size_t>{64, 256}, 17);
  double s = 0, s2 = 0;
  const auto w = b.layers[0].weights.data();
  for (double v : w) {
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(w.size());
  const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
  EXPECT_NEAR(sd, std::sqrt(2.0 / 64.0), 0.2 * std::sqrt(2.0 / 64.0));
}

TEST(InitBackbone, RejectsBadWidths) {
  EXPECT_THROW(init_backbone(std::vector<std::size_t>{4}, 0), ContractError);
  EXPECT_THROW(init_backbone(std::vector<std::size_t>{4, 0}, 0), ContractError);
}

TEST(Forward, ZeroWeightsZeroInput) {
  Backbone b = init_backbone(std::vector<std::size_t>{3, 4, 2}, 0);
  for (auto& l : b.layers) std::fill(l.weights.data().begin(), l.weights.data().end(), 0.0);
  const Activations act = forward(b, Matrix(5, 3));
  for (double v : act.hidden().data()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, IdentityLayerPassesNonnegativeInput) {
  Backbone b = init_backbone(std::vector<std::size_t>{4, 4}, 0);
  b.layers[0].weights = Matrix::identity(4);
  Rng rng(2);
  Matrix x(6, 4);
  for (double& v : x.data()) v = rng.uniform();
  EXPECT_EQ(forward(b, x).hidden(), x);
}

TEST(Forward, MatchesPerSampleLoop) {
  Rng rng(4);
  Backbone b = init_backbone(std::vector<std::size_t>{5, 7, 6, 3}, 9);
  for (auto& l : b.layers)
    for (double& v : l.bias) v = 0.1 * rng.normal();
  const Matrix x = random_matrix(rng, 11, 5);
  const Matrix h = forward(b, x).hidden();
  EXPECT_EQ(representations(b, x), h);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto ref = naive_forward(b, x.row(i));
    for (std::size_t j = 0; j < ref.size(); ++j) EXPECT_NEAR(h(i, j), ref[j], 1e-12);
  }
}

TEST(Forward, DimensionMismatch) {
  const Backbone b = init_backbone(std::vector<std::size_t>{3, 2}, 0);
  EXPECT_THROW(forward(b, Matrix(2, 4)), ContractError);
}

TEST(Forward, PreActivationsScaleWithLayerWeights) {
  Rng rng(6);
  Backbone b = init_backbone(std::vector<std::size_t>{4, 5}, 3);
  Matrix x(7, 4);
  for (double& v : x.data()) v = rng.uniform();
  const Matrix base = forward(b, x).pre[0];
  for (double& w : b.layers[0].weights.data()) w *= 2.5;
  const Matrix scaled = forward(b, x).pre[0];
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(scaled.data()[i], 2.5 * base.data()[i], 1e-12);
}

TEST(LossAndGrads, ZeroHeadGivesLogC) {
  Rng rng(1);
  const Backbone b = init_backbone(std::vector<std::size_t>{3, 4}, 0);
  const HeadParams head = make_head(0, 4, 5);
  const Matrix x = random_matrix(rng, 9, 3);
  EXPECT_NEAR(loss_and_grads(b, head, x, random_labels(rng, 9, 5)).loss, std::log(5.0), 1e-15);
}

// Central differences over every parameter of a 3-layer net.
double max_relative_fd_error(std::uint64_t seed) {
  Rng rng(seed);
  Backbone b = init_backbone(std::vector<std::size_t>{4, 6, 5, 3}, seed);
  for (auto& l : b.layers)
    for (double& v : l.bias) v = 0.1 * rng.normal();
  HeadParams head = random_head(rng, 3, 3);
  const Matrix x = random_matrix(rng, 20, 4);
  const auto y = random_labels(rng, 20, 3);
  const LossGrad g = loss_and_grads(b, head, x, y);
  const double eps = 1e-5;
  double worst = 0.0;
  auto check = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + eps;
    const double up = loss_and_grads(b, head, x, y).loss;
    param = keep - eps;
    const double down = loss_and_grads(b, head, x, y).loss;
    param = keep;
    const double fd = (up - down) / (2 * eps);
    const double rel = std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-6});
    worst = std::max(worst, rel);
  };
  for (std::size_t l = 0; l < b.layers.size(); ++l) {
    auto w = b.layers[l].weights.data();
    for (std::size_t i = 0; i < w.size(); ++i) check(w[i], g.backbone[l].weights.data()[i]);
    for (std::size_t i = 0; i < b.layers[l].bias.size(); ++i) check(b.layers[l].bias[i], g.backbone[l].bias[i]);
  }
  auto hw = head.weights.data();
  for (std::size_t i = 0; i < hw.size(); ++i) check(hw[i], g.head.weights.data()[i]);
  for (std::size_t i = 0; i < head.bias.size(); ++i) check(head.bias[i], g.head.bias[i]);
  return worst;
}

TEST(LossAndGrads, FiniteDifferenceCheck) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) EXPECT_LT(max_relative_fd_error(seed), 1e-4) << "seed " << seed;
}

TEST(LossAndGrads, DuplicatingSamplesChangesNothing) {
  Rng rng(12);
  const Backbone b = init_backbone(std::vector<std::size_t>{3, 5, 4}, 2);
  const HeadParams head = random_head(rng, 4, 3);
  const Matrix x = random_matrix(rng, 8, 3);
  const auto y = random_labels(rng, 8, 3);
  const std::vector<Matrix> parts{x, x};
  auto y2 = y;
  y2.insert(y2.end(), y.begin(), y.end());
  const LossGrad a = loss_and_grads(b, head, x, y);
  const LossGrad d = loss_and_grads(b, head, vstack(parts), y2);
  EXPECT_NEAR(a.loss, d.loss, 1e-14);
  EXPECT_LT(testing::max_abs_diff(a.head.weights, d.head.weights), 1e-14);
  for (std::size_t l = 0; l < a.backbone.size(); ++l)
    EXPECT_LT(testing::max_abs_diff(a.backbone[l].weights, d.backbone[l].weights), 1e-14);
}

LabelledSet two_blobs(std::uint64_t seed, std::size_t per_class, double separation, std::size_t dim = 2) {
  Rng rng(seed);
  LabelledSet s;
  s.num_classes = 2;
  s.inputs = Matrix(2 * per_class, dim);
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const std::uint32_t c = i < per_class ? 0 : 1;
    s.labels.push_back(c);
    for (std::size_t j = 0; j < dim; ++j) s.inputs(i, j) = rng.normal() + (j == 0 ? (c ? separation : 0.0) : 0.0);
  }
  return s;
}

TEST(TrainJoint, ZeroLearningRateLeavesParameters) {
  const LabelledSet data = two_blobs(1, 30, 3.0);
  Backbone b = init_backbone(std::vector<std::size_t>{2, 8, 4}, 1);
  HeadParams head = make_head(0, 4, 2);
  for (double& v : head.weights.data()) v = 0.3;
  const Backbone b0 = b;
  const HeadParams h0 = head;
  const auto res = train_joint(b, head, data, SgdConfig{0.0, 8, 3, 0.1, 4});
  EXPECT_EQ(b, b0);
  EXPECT_EQ(head, h0);
  EXPECT_EQ(res.loss_curve.size(), 3u);
}

TEST(TrainJoint, SeparableTaskIsLearned) {
  const LabelledSet data = two_blobs(2, 100, 12.0);
  Backbone b = init_backbone(std::vector<std::size_t>{2, 16, 8}, 3);
  HeadParams head = make_head(0, 8, 2);
  const auto res = train_joint(b, head, data, SgdConfig{0.05, 16, 50, 0.0, 1});
  EXPECT_GE(eval_head(head, representations(b, data.inputs), data.labels), 0.99);
  EXPECT_LT(res.loss_curve.back(), res.loss_curve.front());
}

TEST(TrainJoint, Deterministic) {
  const LabelledSet data = two_blobs(3, 40, 2.0);
  auto run = [&] {
    Backbone b = init_backbone(std::vector<std::size_t>{2, 6, 3}, 8);
    HeadParams head = make_head(0, 3, 2);
    train_joint(b, head, data, SgdConfig{0.05, 7, 4, 0.01, 9});
    return std::pair{b, head};
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainJoint, DivergenceNamesEpoch) {
  const LabelledSet data = two_blobs(4, 20, 50.0);
  Backbone b = init_backbone(std::vector<std::size_t>{2, 6, 3}, 8);
  HeadParams head = make_head(0, 3, 2);
  try {
    train_joint(b, head, data, SgdConfig{1e6, 4, 20, 0.0, 0});
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(TrainJoint, RejectsMismatchedHead) {
  const LabelledSet data = two_blobs(1, 5, 1.0);
  Backbone b = init_backbone(std::vector<std::size_t>{2, 3}, 0);
  HeadParams head = make_head(0, 3, 5);
  EXPECT_THROW(train_joint(b, head, data, SgdConfig{}), ContractError);
}

TEST(Probe, SingleClass) {
  Rng rng(1);
  const Matrix h = random_matrix(rng, 10, 3);
  const std::vector<std::uint32_t> y(10, 0);
  const HeadParams p = fit_linear_probe(h, y, 1);
  EXPECT_EQ(p.kind, HeadKind::diagnostic);
  EXPECT_EQ(eval_head(p, h, y), 1.0);
}

TEST(Probe, WellSeparatedGaussians) {
  const LabelledSet fit = two_blobs(5, 100, 10.0, 4);
  const LabelledSet test = two_blobs(6, 500, 10.0, 4);
  // Oracle: nearest class mean.
  std::vector<double> m0(4, 0.0), m1(4, 0.0);
  for (std::size_t i = 0; i < fit.size(); ++i)
    for (std::size_t j = 0; j < 4; ++j) (fit.labels[i] ? m1 : m0)[j] += fit.inputs(i, j) / 100.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    double d0 = 0, d1 = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      d0 += std::pow(test.inputs(i, j) - m0[j], 2);
      d1 += std::pow(test.inputs(i, j) - m1[j], 2);
    }
    ok += (d1 < d0 ? 1u : 0u) == test.labels[i];
  }
  ASSERT_GE(static_cast<double>(ok) / test.size(), 0.99);
  const HeadParams p = fit_linear_probe(fit.inputs, fit.labels, 2);
  EXPECT_GE(eval_head(p, test.inputs, test.labels), 0.99);
}

TEST(Probe, ShuffledLabelsAreAtChance) {
  Rng rng(7);
  const Matrix fit = random_matrix(rng, 2000, 3);
  const Matrix test = random_matrix(rng, 2000, 3);
  const auto yf = random_labels(rng, 2000, 4);
  const auto yt = random_labels(rng, 2000, 4);
  const HeadParams p = fit_linear_probe(fit, yf, 4);
  EXPECT_NEAR(eval_head(p, test, yt), 0.25, 0.1);
}

TEST(Probe, DoesNotTouchInputAndHandlesConstantFeatures) {
  Rng rng(8);
  Matrix h = random_matrix(rng, 30, 4);
  for (std::size_t i = 0; i < h.rows(); ++i) h(i, 2) = 0.0;  // dead unit
  const Matrix copy = h;
  const auto y = random_labels(rng, 30, 3);
  const HeadParams p = fit_linear_probe(h, y, 3);
  EXPECT_EQ(h, copy);
  EXPECT_TRUE(p.weights.all_finite());
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(p.weights(2, c), 0.0);
}

TEST(EvalHead, ConstantPrediction) {
  HeadParams head = make_head(0, 2, 3);
  head.bias = {0.0, 1.0, 0.0};
  const Matrix h(5, 2, 0.3);
  EXPECT_EQ(eval_head(head, h, std::vector<std::uint32_t>(5, 1)), 1.0);
  EXPECT_EQ(eval_head(head, h, std::vector<std::uint32_t>{0, 2, 0, 2, 0}), 0.0);
}

TEST(EvalHead, TiesGoToLowestClass) {
  const HeadParams head = make_head(0, 2, 3);
  const Matrix h(4, 2, 1.0);
  EXPECT_EQ(predict(head, h), std::vector<std::uint32_t>(4, 0));
}

TEST(EvalHead, MatchesLoopOracleAndMonotoneInvariance) {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const HeadParams head = random_head(rng, 5, 4);
    const Matrix h = random_matrix(rng, 50, 5);
    const auto y = random_labels(rng, 50, 4);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < 50; ++i) {
      std::size_t best = 0;
      double best_z = -1e300;
      for (std::size_t c = 0; c < 4; ++c) {
        double z = head.bias[c];
        for (std::size_t j = 0; j < 5; ++j) z += h(i, j) * head.weights(j, c);
        if (z > best_z) {
          best_z = z;
          best = c;
        }
      }
      correct += best == y[i];
    }
    const double acc = eval_head(head, h, y);
    EXPECT_EQ(acc, static_cast<double>(correct) / 50.0);
    // z -> 3z + 2 is strictly increasing and applied to every logit.
    HeadParams scaled = head;
    for (double& v : scaled.weights.data()) v *= 3.0;
    for (double& v : scaled.bias) v = 3.0 * v + 2.0;
    EXPECT_EQ(eval_head(scaled, h, y), acc);
  }
}

}  // namespace
}  // namespace repdrift
