#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "repdrift/errors.hpp"
#include "repdrift/numerics/matrix.hpp"

namespace repdrift {

/// Iteration cap and relative tolerance shared by the Jacobi solvers.
struct JacobiOptions {
  double tolerance = 1e-12;
  int max_sweeps = 80;
};

/// Thin SVD: A (m×n) = U·diag(S)·Vᵀ with k = min(m, n) singular triplets.
struct Svd {
  Matrix u;               // m × k, orthonormal columns
  std::vector<double> s;  // k, descending, nonnegative
  Matrix v;               // n × k, orthonormal columns
};

/// Symmetric eigendecomposition: A·vᵢ = λᵢ·vᵢ with eigenvectors in the columns of `vectors`.
struct SymEig {
  std::vector<double> values;  // descending
  Matrix vectors;              // n × n, orthonormal columns
};

namespace detail {

inline double dot(std::span<const double> x, std::span<const double> y) {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  const std::size_t n = x.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    a0 += x[i] * y[i];
    a1 += x[i + 1] * y[i + 1];
    a2 += x[i + 2] * y[i + 2];
    a3 += x[i + 3] * y[i + 3];
  }
  for (; i < n; ++i) a0 += x[i] * y[i];
  return (a0 + a1) + (a2 + a3);
}

inline void rotate(std::span<double> x, std::span<double> y, double c, double s) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = x[i], b = y[i];
    x[i] = c * a - s * b;
    y[i] = s * a + c * b;
  }
}

// Orthonormal completion: fills row `j` of `rows` with a unit vector orthogonal to all rows in
// `filled`. Starts from the coordinate axis with the least mass in the filled span.
inline void complete_basis(Matrix& rows, std::size_t j, const std::vector<std::size_t>& filled) {
  const std::size_t dim = rows.cols();
  std::vector<double> mass(dim, 0.0);
  for (std::size_t f : filled)
    for (std::size_t i = 0; i < dim; ++i) mass[i] += rows(f, i) * rows(f, i);
  const std::size_t e = static_cast<std::size_t>(std::min_element(mass.begin(), mass.end()) - mass.begin());
  std::vector<double> cand(dim, 0.0);
  cand[e] = 1.0;
  for (int pass = 0; pass < 2; ++pass)
    for (std::size_t f : filled) {
      const double d = dot(rows.row(f), cand);
      auto r = rows.row(f);
      for (std::size_t i = 0; i < dim; ++i) cand[i] -= d * r[i];
    }
  const double nrm = std::sqrt(dot(cand, cand));
  if (!(nrm > 1e-6)) throw NumericError("svd: orthonormal completion failed");
  auto r = rows.row(j);
  for (std::size_t i = 0; i < dim; ++i) r[i] = cand[i] / nrm;
}

// One-sided Jacobi on a tall matrix (m >= n).
inline Svd svd_tall(const Matrix& a, const JacobiOptions& opt) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  Matrix w = transpose(a);          // row j = column j of the working matrix
  Matrix vt = Matrix::identity(n);  // row j = column j of V
  // Columns below this squared norm are rounding noise and are left alone.
  const double noise = std::numeric_limits<double>::epsilon() * static_cast<double>(std::max(m, n));
  const double negligible = noise * noise * frobenius_norm_sq(a);

  std::vector<double> sq(n);
  bool converged = false;
  for (int sweep = 0; sweep < opt.max_sweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t j = 0; j < n; ++j) sq[j] = dot(w.row(j), w.row(j));
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = sq[p], beta = sq[q];
        if (alpha <= negligible || beta <= negligible) continue;
        auto wp = w.row(p);
        auto wq = w.row(q);
        const double gamma = dot(wp, wq);
        if (std::abs(gamma) <= opt.tolerance * std::sqrt(alpha * beta)) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate(wp, wq, c, s);
        rotate(vt.row(p), vt.row(q), c, s);
        sq[p] = alpha - t * gamma;
        sq[q] = beta + t * gamma;
      }
    }
  }
  if (!converged) throw NumericError("svd: one-sided Jacobi did not converge within the sweep cap");

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (double x : w.row(j)) s += x * x;
    norms[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  const double smax = n ? norms[order[0]] : 0.0;
  const double cutoff = smax * 1e-13 * static_cast<double>(std::max(m, n));
  Matrix ut(n, m);  // rows = columns of U
  Svd out;
  out.s.resize(n);
  out.v = Matrix(n, n);
  std::vector<std::size_t> filled;
  std::vector<std::size_t> missing;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    out.s[j] = norms[src];
    for (std::size_t i = 0; i < n; ++i) out.v(i, j) = vt(src, i);
    if (norms[src] > cutoff && norms[src] > 0.0) {
      auto dst = ut.row(j);
      auto wr = w.row(src);
      for (std::size_t i = 0; i < m; ++i) dst[i] = wr[i] / norms[src];
      filled.push_back(j);
    } else {
      missing.push_back(j);
    }
  }
  for (std::size_t j : missing) {
    complete_basis(ut, j, filled);
    filled.push_back(j);
  }
  out.u = transpose(ut);
  return out;
}

}  // namespace detail

/// Singular value decomposition by one-sided (Hestenes) Jacobi rotations.
inline Svd svd(const Matrix& a, const JacobiOptions& opt = {}) {
  require(a.rows() >= 1 && a.cols() >= 1, "svd: matrix must be non-empty");
  require(a.all_finite(), "svd: matrix has non-finite entries");
  if (a.rows() >= a.cols()) return detail::svd_tall(a, opt);
  Svd t = detail::svd_tall(transpose(a), opt);
  return Svd{std::move(t.v), std::move(t.s), std::move(t.u)};
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
inline SymEig sym_eig(const Matrix& input, const JacobiOptions& opt = {}) {
  require(input.rows() == input.cols(), "sym_eig: matrix must be square");
  require(input.all_finite(), "sym_eig: matrix has non-finite entries");
  const std::size_t n = input.rows();
  const double sym_tol = 1e-9 * std::max(1.0, max_abs(input));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(input(i, j) - input(j, i)) > sym_tol)
        throw ContractError("sym_eig: matrix is not symmetric");

  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (input(i, j) + input(j, i));
  Matrix v = Matrix::identity(n);

  const double total = frobenius_norm(a);
  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  int sweep = 0;
  for (; sweep < opt.max_sweeps; ++sweep) {
    if (off_norm() <= 1e-15 * total || total == 0.0) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (sweep == opt.max_sweeps && off_norm() > 1e-15 * total)
    throw NumericError("sym_eig: Jacobi iteration did not converge within the sweep cap");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  SymEig out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
  }
  return out;
}

/// Determinant by LU factorisation with partial pivoting.
inline double determinant(const Matrix& input) {
  require(input.rows() == input.cols(), "determinant: matrix must be square");
  Matrix a = input;
  const std::size_t n = a.rows();
  double det = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    if (a(piv, k) == 0.0) return 0.0;
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      det = -det;
    }
    det *= a(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
    }
  }
  return det;
}

}  // namespace repdrift
