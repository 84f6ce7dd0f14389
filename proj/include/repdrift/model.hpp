#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "repdrift/datasets.hpp"
#include "repdrift/errors.hpp"
#include "repdrift/numerics/matrix.hpp"
#include "repdrift/numerics/rng.hpp"

namespace repdrift {

struct Layer {
  Matrix weights;            // fan_in × fan_out
  std::vector<double> bias;  // fan_out

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// ReLU multilayer perceptron. The output of the last layer is the representation H that all
/// probing and alignment operates on.
struct Backbone {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.front().weights.rows(); }
  std::size_t output_dim() const { return layers.back().weights.cols(); }
  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{input_dim()};
    for (const auto& l : layers) w.push_back(l.weights.cols());
    return w;
  }

  friend bool operator==(const Backbone&, const Backbone&) = default;
};

enum class HeadKind { continual, diagnostic };

/// Linear softmax readout for one task.
struct HeadParams {
  std::uint32_t task = 0;
  Matrix weights;            // h_L × C
  std::vector<double> bias;  // C
  HeadKind kind = HeadKind::continual;

  std::size_t num_classes() const { return bias.size(); }

  friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

struct SgdConfig {
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double l2 = 0.0;
  std::uint64_t seed = 0;
};

/// He-initialised backbone (std = sqrt(2 / fan_in)), zero biases.
inline Backbone init_backbone(std::span<const std::size_t> widths, std::uint64_t seed) {
  require(widths.size() >= 2, "init_backbone: need at least input and one hidden width");
  for (auto w : widths) require(w >= 1, "init_backbone: widths must be >= 1");
  Backbone b;
  const Rng root(seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Rng rng = root.substream(l);
    Layer layer{Matrix(widths[l], widths[l + 1]), std::vector<double>(widths[l + 1], 0.0)};
    const double std_dev = std::sqrt(2.0 / static_cast<double>(widths[l]));
    for (double& w : layer.weights.data()) w = std_dev * rng.normal();
    b.layers.push_back(std::move(layer));
  }
  return b;
}

inline HeadParams make_head(std::uint32_t task, std::size_t width, std::size_t num_classes,
                            HeadKind kind = HeadKind::continual) {
  return HeadParams{task, Matrix(width, num_classes), std::vector<double>(num_classes, 0.0), kind};
}

struct Activations {
  std::vector<Matrix> pre;   // per layer, before ReLU
  std::vector<Matrix> post;  // per layer, after ReLU

  const Matrix& hidden() const { return post.back(); }
};

namespace detail {

inline Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> b) {
  Matrix z = matmul(x, w);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto r = z.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
  }
  return z;
}

inline Matrix relu(Matrix z) {
  for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
  return z;
}

inline std::vector<double> column_sums(const Matrix& a) {
  std::vector<double> s(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) s[j] += r[j];
  }
  return s;
}

// Mean softmax cross-entropy; writes d(loss)/d(logits) into `logits` in place.
inline double softmax_xent_inplace(Matrix& logits, std::span<const std::uint32_t> labels) {
  const double inv_n = 1.0 / static_cast<double>(logits.rows());
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto r = logits.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double& v : r) {
      v = std::exp(v - mx);
      z += v;
    }
    loss -= std::log(r[labels[i]] / z);
    for (double& v : r) v = v / z * inv_n;
    r[labels[i]] -= inv_n;
  }
  return loss * inv_n;
}

}  // namespace detail

inline Activations forward(const Backbone& b, const Matrix& x) {
  if (x.cols() != b.input_dim())
    throw ContractError("forward: input has " + std::to_string(x.cols()) + " columns, backbone expects " +
                        std::to_string(b.input_dim()));
  Activations act;
  const Matrix* in = &x;
  for (const auto& layer : b.layers) {
    act.pre.push_back(detail::affine(*in, layer.weights, layer.bias));
    act.post.push_back(detail::relu(act.pre.back()));
    in = &act.post.back();
  }
  return act;
}

/// Final-hidden representation only.
inline Matrix representations(const Backbone& b, const Matrix& x) {
  if (x.cols() != b.input_dim()) throw ContractError("representations: input dimension mismatch");
  Matrix h = x;
  for (const auto& layer : b.layers) h = detail::relu(detail::affine(h, layer.weights, layer.bias));
  return h;
}

inline Matrix logits(const HeadParams& head, const Matrix& h) {
  require(h.cols() == head.weights.rows(), "logits: representation width does not match head");
  return detail::affine(h, head.weights, head.bias);
}

struct LayerGrad {
  Matrix weights;
  std::vector<double> bias;
};

struct HeadLossGrad {
  double loss = 0.0;
  LayerGrad head;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<LayerGrad> backbone;
  LayerGrad head;
};

namespace detail {

inline void check_labels(std::span<const std::uint32_t> labels, std::size_t rows, std::size_t classes) {
  require(labels.size() == rows, "label count does not match row count");
  require(rows >= 1, "need at least one sample");
  for (auto l : labels) require(l < classes, "label out of range for head");
}

}  // namespace detail

/// Loss and gradient of a head on fixed representations.
inline HeadLossGrad head_loss_and_grads(const HeadParams& head, const Matrix& h,
                                        std::span<const std::uint32_t> labels) {
  detail::check_labels(labels, h.rows(), head.num_classes());
  Matrix dlogits = logits(head, h);
  HeadLossGrad out;
  out.loss = detail::softmax_xent_inplace(dlogits, labels);
  out.head.weights = matmul_tn(h, dlogits);
  out.head.bias = detail::column_sums(dlogits);
  return out;
}

/// Mean cross-entropy of head(backbone(X)) and its exact gradient with respect to every parameter.
inline LossGrad loss_and_grads(const Backbone& b, const HeadParams& head, const Matrix& x,
                               std::span<const std::uint32_t> labels) {
  detail::check_labels(labels, x.rows(), head.num_classes());
  const Activations act = forward(b, x);
  Matrix delta = logits(head, act.hidden());
  LossGrad out;
  out.loss = detail::softmax_xent_inplace(delta, labels);
  out.head.weights = matmul_tn(act.hidden(), delta);
  out.head.bias = detail::column_sums(delta);

  Matrix upstream = matmul_nt(delta, head.weights);  // dL/dH
  out.backbone.resize(b.layers.size());
  for (std::size_t l = b.layers.size(); l-- > 0;) {
    const auto pre = act.pre[l].data();
    auto up = upstream.data();
    for (std::size_t i = 0; i < up.size(); ++i)
      if (!(pre[i] > 0.0)) up[i] = 0.0;
    const Matrix& input = l == 0 ? x : act.post[l - 1];
    out.backbone[l].weights = matmul_tn(input, upstream);
    out.backbone[l].bias = detail::column_sums(upstream);
    if (l > 0) upstream = matmul_nt(upstream, b.layers[l].weights);
  }
  return out;
}

namespace detail {

inline void sgd_update(Matrix& w, std::vector<double>& b, const LayerGrad& g, double lr, double l2) {
  auto wd = w.data();
  auto gd = g.weights.data();
  for (std::size_t i = 0; i < wd.size(); ++i) wd[i] -= lr * (gd[i] + l2 * wd[i]);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * g.bias[i];
}

/// Minibatch loop shared by joint training and probe fitting. `step` receives the row indices of
/// one minibatch, applies its update and returns the minibatch loss. `after_epoch` returns true to
/// stop early.
template <class Step, class AfterEpoch>
std::vector<double> sgd_loop(std::size_t n, const SgdConfig& cfg, const std::string& context, Step&& step,
                             AfterEpoch&& after_epoch) {
  require(cfg.learning_rate >= 0.0, "sgd: learning rate must be >= 0");
  require(cfg.batch_size >= 1, "sgd: batch size must be >= 1");
  require(cfg.l2 >= 0.0, "sgd: l2 must be >= 0");
  std::vector<double> curve;
  const Rng root(cfg.seed);
  const std::size_t bs = std::min(cfg.batch_size, n);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order;
    if (bs < n) {
      order = root.substream(epoch).permutation(n);
    } else {
      order.resize(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
    }
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t len = std::min(bs, n - start);
      const double loss = step(std::span<const std::size_t>(order.data() + start, len));
      total += loss * static_cast<double>(len);
    }
    const double epoch_loss = total / static_cast<double>(n);
    if (!std::isfinite(epoch_loss))
      throw DivergenceError(context + ": loss became non-finite in epoch " + std::to_string(epoch));
    curve.push_back(epoch_loss);
    if (after_epoch(epoch)) break;
  }
  return curve;
}

inline std::vector<std::uint32_t> gather_labels(std::span<const std::uint32_t> labels,
                                                std::span<const std::size_t> idx) {
  std::vector<std::uint32_t> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
  return out;
}

}  // namespace detail

struct TrainResult {
  std::vector<double> loss_curve;  // mean minibatch loss per epoch
};

/// Minibatch SGD on backbone + head. Only `b` and `head` are modified.
inline TrainResult train_joint(Backbone& b, HeadParams& head, const LabelledSet& train, const SgdConfig& cfg,
                               const std::string& context = "train_joint") {
  require(train.num_classes == head.num_classes() || train.num_classes == 0,
          "train_joint: head class count does not match task");
  require(train.inputs.cols() == b.input_dim(), "train_joint: input dimension mismatch");
  require(head.weights.rows() == b.output_dim(), "train_joint: head width does not match backbone");
  if (train.size() == 0) return {};
  auto step = [&](std::span<const std::size_t> idx) {
    const Matrix xb = gather_rows(train.inputs, idx);
    const auto yb = detail::gather_labels(train.labels, idx);
    const LossGrad g = loss_and_grads(b, head, xb, yb);
    if (cfg.learning_rate != 0.0 && std::isfinite(g.loss)) {
      for (std::size_t l = 0; l < b.layers.size(); ++l)
        detail::sgd_update(b.layers[l].weights, b.layers[l].bias, g.backbone[l], cfg.learning_rate, cfg.l2);
      detail::sgd_update(head.weights, head.bias, g.head, cfg.learning_rate, cfg.l2);
    }
    return g.loss;
  };
  return TrainResult{detail::sgd_loop(train.size(), cfg, context, step, [](std::size_t) { return false; })};
}

/// Settings for diagnostic readouts. Features are standardised internally and the step size is
/// `sgd.learning_rate / L`, where L bounds the curvature of the standardised problem.
struct ProbeConfig {
  SgdConfig sgd{1.0, 1u << 30, 300, 1e-3, 0};
  double grad_tol = 1e-5;
};

/// Softmax regression on frozen representations. The returned head acts on raw `h`.
inline HeadParams fit_linear_probe(const Matrix& h, std::span<const std::uint32_t> labels,
                                   std::size_t num_classes, const ProbeConfig& cfg = {},
                                   std::uint32_t task = 0) {
  require(h.all_finite(), "fit_linear_probe: representations must be finite");
  require(num_classes >= 1, "fit_linear_probe: need at least one class");
  detail::check_labels(labels, h.rows(), num_classes);
  const std::size_t n = h.rows();
  const std::size_t d = h.cols();

  const std::vector<double> mu = column_means(h);
  std::vector<double> sigma(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) sigma[j] += (h(i, j) - mu[j]) * (h(i, j) - mu[j]);
  for (double& s : sigma) {
    s = std::sqrt(s / static_cast<double>(n));
    if (!(s > 1e-12)) s = 0.0;
  }
  Matrix z(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) z(i, j) = sigma[j] > 0.0 ? (h(i, j) - mu[j]) / sigma[j] : 0.0;

  // Power iteration for the top eigenvalue of zᵀz / n.
  double lambda = 0.0;
  {
    std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
    for (int it = 0; it < 30; ++it) {
      std::vector<double> zv(n, 0.0), w(d, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        auto r = z.row(i);
        for (std::size_t j = 0; j < d; ++j) zv[i] += r[j] * v[j];
      }
      for (std::size_t i = 0; i < n; ++i) {
        auto r = z.row(i);
        for (std::size_t j = 0; j < d; ++j) w[j] += r[j] * zv[i];
      }
      double nrm = 0.0;
      for (double& x : w) {
        x /= static_cast<double>(n);
        nrm += x * x;
      }
      nrm = std::sqrt(nrm);
      lambda = nrm;
      if (nrm == 0.0) break;
      for (std::size_t j = 0; j < d; ++j) v[j] = w[j] / nrm;
    }
  }
  // Power iteration underestimates; 1.1 covers the gap after 30 steps on these spectra.
  const double curvature = 0.5 * (1.1 * lambda + 1.0) + cfg.sgd.l2;
  const double lr = cfg.sgd.learning_rate / curvature;

  HeadParams std_head = make_head(task, d, num_classes, HeadKind::diagnostic);
  double last_grad_norm = std::numeric_limits<double>::infinity();
  const bool full_batch = cfg.sgd.batch_size >= n;
  auto grad_norm = [&](const HeadLossGrad& g) {
    double s = 0.0;
    auto w = std_head.weights.data();
    auto gw = g.head.weights.data();
    for (std::size_t i = 0; i < w.size(); ++i) s += std::pow(gw[i] + cfg.sgd.l2 * w[i], 2);
    for (double gb : g.head.bias) s += gb * gb;
    return std::sqrt(s);
  };
  auto step = [&](std::span<const std::size_t> idx) {
    const auto yb = detail::gather_labels(labels, idx);
    const HeadLossGrad g = full_batch ? head_loss_and_grads(std_head, z, labels)
                                      : head_loss_and_grads(std_head, gather_rows(z, idx), yb);
    if (full_batch) last_grad_norm = grad_norm(g);
    detail::sgd_update(std_head.weights, std_head.bias, g.head, lr, cfg.sgd.l2);
    return g.loss;
  };
  auto converged = [&](std::size_t) {
    if (!full_batch) last_grad_norm = grad_norm(head_loss_and_grads(std_head, z, labels));
    return last_grad_norm < cfg.grad_tol;
  };
  detail::sgd_loop(n, cfg.sgd, "fit_linear_probe", step, converged);

  HeadParams out = make_head(task, d, num_classes, HeadKind::diagnostic);
  for (std::size_t c = 0; c < num_classes; ++c) {
    double b = std_head.bias[c];
    for (std::size_t j = 0; j < d; ++j) {
      if (sigma[j] == 0.0) continue;
      out.weights(j, c) = std_head.weights(j, c) / sigma[j];
      b -= mu[j] * out.weights(j, c);
    }
    out.bias[c] = b;
  }
  return out;
}

/// Argmax predictions; ties resolve to the lowest class id.
inline std::vector<std::uint32_t> predict(const HeadParams& head, const Matrix& h) {
  const Matrix z = logits(head, h);
  std::vector<std::uint32_t> out(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto r = z.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < r.size(); ++c)
      if (r[c] > r[best]) best = c;
    out[i] = static_cast<std::uint32_t>(best);
  }
  return out;
}

/// Fraction of samples whose argmax prediction equals the label.
inline double eval_head(const HeadParams& head, const Matrix& h, std::span<const std::uint32_t> labels) {
  require(labels.size() == h.rows(), "eval_head: label count does not match row count");
  if (labels.empty()) return 0.0;
  const auto pred = predict(head, h);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace repdrift
