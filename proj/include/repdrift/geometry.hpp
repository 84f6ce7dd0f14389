#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "repdrift/continual.hpp"
#include "repdrift/errors.hpp"
#include "repdrift/numerics/linalg.hpp"
#include "repdrift/numerics/matrix.hpp"

namespace repdrift {

/// Row-vector similarity map x ↦ scale · x · rotation + translation.
struct SimilarityTransform {
  Matrix rotation;                  // d × d, orthogonal
  double scale = 1.0;
  std::vector<double> translation;  // d

  static SimilarityTransform identity(std::size_t d) {
    return {Matrix::identity(d), 1.0, std::vector<double>(d, 0.0)};
  }
  std::size_t dim() const { return rotation.rows(); }
};

struct ProcrustesFit {
  SimilarityTransform transform;
  double disparity = 0.0;  // ‖aligned − Y‖² / ‖Y − mean(Y)‖²
};

inline Matrix apply_transform(const SimilarityTransform& t, const Matrix& x) {
  if (x.cols() != t.dim())
    throw ContractError("apply_transform: points have " + std::to_string(x.cols()) +
                        " columns, transform expects " + std::to_string(t.dim()));
  Matrix out = matmul(x, t.rotation);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = t.scale * r[j] + t.translation[j];
  }
  return out;
}

/// Least-squares similarity transform mapping source rows onto corresponding target rows.
inline ProcrustesFit fit_similarity_transform(const Matrix& source, const Matrix& target,
                                              bool allow_reflection = true) {
  require(source.rows() == target.rows() && source.cols() == target.cols(),
          "fit_similarity_transform: source and target shapes differ");
  require(source.rows() >= 2, "fit_similarity_transform: need at least two corresponding points");
  const std::size_t d = source.cols();
  const auto mu_x = column_means(source);
  const auto mu_y = column_means(target);
  const Matrix xc = subtract_row(source, mu_x);
  const Matrix yc = subtract_row(target, mu_y);
  const double xx = frobenius_norm_sq(xc);
  const double yy = frobenius_norm_sq(yc);
  if (!(xx > 0.0)) throw DegenerateError("fit_similarity_transform: all source points coincide");
  if (!(yy > 0.0)) throw DegenerateError("fit_similarity_transform: all target points coincide");

  Svd dec = svd(matmul_tn(xc, yc));
  std::vector<double> sigma = dec.s;
  Matrix q = matmul_nt(dec.u, dec.v);
  if (!allow_reflection && determinant(q) < 0.0) {
    const std::size_t last = d - 1;
    for (std::size_t i = 0; i < d; ++i) dec.u(i, last) = -dec.u(i, last);
    sigma[last] = -sigma[last];
    q = matmul_nt(dec.u, dec.v);
  }
  double trace = 0.0;
  for (double s : sigma) trace += s;

  SimilarityTransform t;
  t.rotation = std::move(q);
  t.scale = trace / xx;
  t.translation = mu_y;
  for (std::size_t j = 0; j < d; ++j) {
    double proj = 0.0;
    for (std::size_t k = 0; k < d; ++k) proj += mu_x[k] * t.rotation(k, j);
    t.translation[j] -= t.scale * proj;
  }
  const Matrix aligned = apply_transform(t, source);
  const double residual = frobenius_norm_sq(aligned - target);
  return ProcrustesFit{std::move(t), residual / yy};
}

/// Row c = mean of the rows labelled c.
inline Matrix class_means(const Matrix& h, std::span<const std::uint32_t> labels, std::size_t num_classes) {
  require(labels.size() == h.rows(), "class_means: label count does not match rows");
  Matrix means(num_classes, h.cols());
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t i = 0; i < h.rows(); ++i) {
    require(labels[i] < num_classes, "class_means: label out of range");
    ++counts[labels[i]];
    auto m = means.row(labels[i]);
    auto r = h.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) m[j] += r[j];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) throw ContractError("class_means: class " + std::to_string(c) + " has no samples");
    for (double& v : means.row(c)) v /= static_cast<double>(counts[c]);
  }
  return means;
}

inline Matrix class_means(const RepresentationSnapshot& snap) {
  std::size_t classes = snap.num_classes;
  for (auto l : snap.labels) classes = std::max<std::size_t>(classes, l + 1);
  return class_means(snap.h, snap.labels, classes);
}

struct EmbeddingTag {
  std::uint32_t task = 0;
  int phase = 0;
  std::uint32_t label = 0;
};

/// Low-dimensional classical MDS coordinates with optional per-point annotations.
struct Embedding {
  Matrix coords;                    // m × k
  std::vector<double> eigenvalues;  // top k eigenvalues of the double-centred Gram matrix
  std::vector<EmbeddingTag> tags;
  std::size_t negative_clamped = 0;  // negative eigenvalues (numerical noise or non-Euclidean input)
  std::size_t missing_dims = 0;      // requested dimensions without a positive eigenvalue
};

inline Matrix squared_distances(const Matrix& points) {
  const std::size_t m = points.rows();
  Matrix d2(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      double s = 0.0;
      auto a = points.row(i);
      auto b = points.row(j);
      for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
      d2(i, j) = d2(j, i) = s;
    }
  return d2;
}

/// B = −½ · J · D² · J with J the centring matrix.
inline Matrix double_center(const Matrix& d2) {
  const std::size_t m = d2.rows();
  std::vector<double> row_mean(m, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) row_mean[i] += d2(i, j);
    grand += row_mean[i];
    row_mean[i] /= static_cast<double>(m);
  }
  grand /= static_cast<double>(m * m);
  Matrix b(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) b(i, j) = -0.5 * (d2(i, j) - row_mean[i] - row_mean[j] + grand);
  return b;
}

/// Torgerson classical MDS of the rows of `points` into k dimensions.
inline Embedding classical_mds(const Matrix& points, std::size_t k = 2) {
  require(k >= 1, "classical_mds: k must be >= 1");
  require(points.rows() >= k + 1, "classical_mds: need at least k + 1 points");
  const Matrix b = double_center(squared_distances(points));
  const SymEig eig = sym_eig(b);
  const std::size_t m = points.rows();
  const double tol = 1e-12 * std::max(1.0, std::abs(eig.values.front()));

  Embedding out;
  out.coords = Matrix(m, k);
  for (double v : eig.values)
    if (v < -tol) ++out.negative_clamped;
  for (std::size_t c = 0; c < k; ++c) {
    const double lambda = eig.values[c];
    out.eigenvalues.push_back(std::max(lambda, 0.0));
    if (!(lambda > tol)) {
      ++out.missing_dims;
      continue;
    }
    // Sign convention: the largest-magnitude component of each axis is positive.
    std::size_t arg = 0;
    for (std::size_t i = 1; i < m; ++i)
      if (std::abs(eig.vectors(i, c)) > std::abs(eig.vectors(arg, c)) + 1e-12) arg = i;
    const double sign = eig.vectors(arg, c) < 0.0 ? -1.0 : 1.0;
    const double root = std::sqrt(lambda);
    for (std::size_t i = 0; i < m; ++i) out.coords(i, c) = sign * root * eig.vectors(i, c);
  }
  return out;
}

}  // namespace repdrift
