#pragma once

// Top-r eigendecomposition of the normalized adjacency and factored low-rank
// filters built from it. Nothing here forms an n x n dense product.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "sat/graph.hpp"
#include "sat/rng.hpp"

namespace sat {

/// Eigenpairs (λ_i, u_i), i < r, with λ descending and u_i the i-th column.
/// Also used for perturbed pairs (U + δ_U, λ + δ_λ), which need not be
/// orthonormal.
struct EigenBasis {
  Vector values;
  Matrix vectors;

  Index rank() const noexcept { return values.size(); }
  Index size() const noexcept { return vectors.rows(); }
};

enum class EigenMethod { Auto, Dense, Lanczos };

struct EigenOptions {
  double tol = 1e-10;               // relative residual ‖Au - λu‖ / max(1, |λ|)
  EigenMethod method = EigenMethod::Auto;
  Index dense_threshold = 512;      // Auto uses the dense solver at or below this size
  Index max_iterations = 0;         // Krylov dimension cap per pass; 0 = n
  std::uint64_t seed = 0x5eed;      // start vector seed
};

namespace detail {

/// Flips each column so that its entry of largest magnitude is positive.
inline void canonicalize_signs(Matrix& u) {
  for (Index j = 0; j < u.cols(); ++j) {
    Index arg = 0;
    u.col(j).cwiseAbs().maxCoeff(&arg);
    if (u(arg, j) < 0) u.col(j) *= -1.0;
  }
}

/// Sorts pairs by descending eigenvalue and keeps the first r.
inline EigenBasis take_top(const Vector& values, const Matrix& vectors, Index r) {
  std::vector<Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values[a] > values[b]; });
  r = std::min<Index>(r, values.size());
  EigenBasis out{Vector(r), Matrix(vectors.rows(), r)};
  for (Index i = 0; i < r; ++i) {
    out.values[i] = values[order[i]];
    out.vectors.col(i) = vectors.col(order[i]);
  }
  return out;
}

struct KrylovResult {
  Vector values;   // converged Ritz values, descending
  Matrix vectors;  // matching Ritz vectors
  std::vector<double> residuals;
  bool converged = false;
};

/// Last entry of the unit eigenvector of the symmetric tridiagonal (diag, sub)
/// for eigenvalue theta, by two steps of inverse iteration with a pivoted
/// tridiagonal solve. O(dim).
inline double tridiagonal_last_component(const Vector& diag, const Vector& sub, double theta) {
  const Index m = diag.size();
  if (m == 1) return 1.0;
  const double shift = theta + 1e-13 * std::max(1.0, std::abs(theta));
  Vector x = Vector::Ones(m);
  for (int it = 0; it < 2; ++it) {
    // Gaussian elimination with partial pivoting on T - shift I; rows carry
    // up to three nonzeros (d, e, f) after a swap.
    Vector d = diag.array() - shift, e(m), f = Vector::Zero(m), b = x;
    for (Index i = 0; i + 1 < m; ++i) e[i] = sub[i];
    Vector lo = sub;
    for (Index i = 0; i + 1 < m; ++i) {
      if (std::abs(lo[i]) > std::abs(d[i])) {
        const double nd = lo[i], ne = d[i + 1], nf = i + 2 < m ? e[i + 1] : 0.0;
        d[i + 1] = e[i];
        if (i + 2 < m) e[i + 1] = 0.0;
        std::swap(b[i], b[i + 1]);
        const double l = d[i] / nd;
        d[i] = nd;
        const double old_e = e[i];
        e[i] = ne;
        f[i] = nf;
        d[i + 1] = old_e - l * ne;
        if (i + 2 < m) e[i + 1] = -l * nf;
        b[i + 1] -= l * b[i];
      } else {
        if (d[i] == 0.0) d[i] = 1e-300;
        const double l = lo[i] / d[i];
        d[i + 1] -= l * e[i];
        b[i + 1] -= l * b[i];
      }
    }
    if (d[m - 1] == 0.0) d[m - 1] = 1e-300;
    x[m - 1] = b[m - 1] / d[m - 1];
    x[m - 2] = (b[m - 2] - e[m - 2] * x[m - 1]) / d[m - 2];
    for (Index i = m - 3; i >= 0; --i) x[i] = (b[i] - e[i] * x[i + 1] - f[i] * x[i + 2]) / d[i];
    const double nrm = x.norm();
    if (!std::isfinite(nrm) || nrm == 0.0) return 1.0;
    x /= nrm;
  }
  return x[m - 1];
}

/// One Lanczos run with full reorthogonalization on the operator restricted to
/// the orthogonal complement of `locked`. Returns the `want` largest Ritz pairs.
template <typename MatVec>
KrylovResult lanczos_pass(const MatVec& apply, Index n, const Matrix& locked, Index want, double tol,
                          Index max_dim, std::uint64_t seed) {
  const Index k = locked.cols();
  max_dim = std::min(max_dim, n - k);
  want = std::min(want, max_dim);
  KrylovResult res;
  if (want <= 0) {
    res.converged = true;
    return res;
  }

  auto deflate = [&](Vector& w) {
    if (k > 0) w.noalias() -= locked * (locked.transpose() * w);
  };

  Matrix basis(n, std::min<Index>(max_dim, 2 * want + 64));
  std::vector<double> alpha, beta;
  alpha.reserve(static_cast<std::size_t>(max_dim));
  beta.reserve(static_cast<std::size_t>(max_dim));

  Rng rng(seed);
  Vector q(n);
  for (Index i = 0; i < n; ++i) q[i] = standard_normal(rng);
  deflate(q);
  deflate(q);
  q.normalize();

  Vector w(n), coef;
  Index dim = 0;
  Index next_check = std::min<Index>(max_dim, std::max<Index>(want + 8, 2 * want));
  double scale = 0.0;  // running estimate of ‖A‖ for breakdown detection

  for (;;) {
    if (dim == basis.cols()) basis.conservativeResize(Eigen::NoChange, std::min<Index>(max_dim, 2 * dim));
    basis.col(dim) = q;
    apply(q, w);
    deflate(w);
    const double a = q.dot(w);
    alpha.push_back(a);
    w.noalias() -= a * q;
    if (dim > 0) w.noalias() -= beta.back() * basis.col(dim - 1);
    // Classical Gram-Schmidt against the whole Krylov basis, repeated when
    // the first round cancels most of the vector.
    for (int round = 0; round < 3; ++round) {
      const double before = w.norm();
      auto v = basis.leftCols(dim + 1);
      coef.noalias() = v.transpose() * w;
      w.noalias() -= v * coef;
      deflate(w);
      if (w.norm() > 0.7071 * before) break;
    }
    const double b = w.norm();
    ++dim;
    scale = std::max({scale, std::abs(a), b});
    const bool breakdown = b <= 1e-13 * std::max(1.0, scale);
    const bool full = dim >= max_dim;

    if (dim >= next_check || breakdown || full) {
      Vector diag = Eigen::Map<const Vector>(alpha.data(), dim);
      Vector sub = dim > 1 ? Vector(Eigen::Map<const Vector>(beta.data(), dim - 1)) : Vector();
      const Index take = std::min(want, dim);

      // Cheap screen: Ritz values plus last eigenvector entries by inverse
      // iteration; the full tridiagonal eigensystem only once it passes.
      bool ok = true;
      if (!breakdown && !full && dim > 1) {
        Eigen::SelfAdjointEigenSolver<Matrix> vals;
        vals.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
        for (Index i = 0; i < take && ok; ++i) {
          const double theta = vals.eigenvalues()[dim - 1 - i];
          const double rn = std::abs(b * tridiagonal_last_component(diag, sub, theta));
          if (rn > tol * std::max(1.0, std::abs(theta))) ok = false;
        }
      }

      if (ok || breakdown || full) {
        Eigen::SelfAdjointEigenSolver<Matrix> tri;
        tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
        const Vector& theta = tri.eigenvalues();  // ascending
        const Matrix& s = tri.eigenvectors();
        std::vector<double> resid;
        ok = true;
        for (Index i = 0; i < take; ++i) {
          const Index col = dim - 1 - i;
          const double rn = breakdown ? 0.0 : std::abs(b * s(dim - 1, col));
          resid.push_back(rn);
          if (rn > tol * std::max(1.0, std::abs(theta[col]))) ok = false;
        }
        if (ok || breakdown || full) {
          res.values.resize(take);
          res.vectors.resize(n, take);
          for (Index i = 0; i < take; ++i) {
            const Index col = dim - 1 - i;
            res.values[i] = theta[col];
            res.vectors.col(i).noalias() = basis.leftCols(dim) * s.col(col);
            res.vectors.col(i).normalize();
          }
          res.residuals = std::move(resid);
          res.converged = ok || breakdown;
          return res;
        }
      }
      next_check = std::min<Index>(max_dim, dim + std::max<Index>(5, dim / 8));
    }
    q = w / b;
    beta.push_back(b);
  }
}

}  // namespace detail

/// Largest-algebraic r eigenpairs of a symmetric operator given as y = A x.
/// Lanczos with full reorthogonalization and a seeded start vector. Missed
/// copies of repeated eigenvalues are recovered by re-running on the
/// orthogonal complement of the pairs found so far until a fresh start finds
/// nothing above the current r-th value.
template <typename MatVec>
EigenBasis lanczos_top_eigenpairs(const MatVec& apply, Index n, Index r, const EigenOptions& opts = {}) {
  if (r < 1 || r >= n) throw InvalidArgument("lanczos: need 1 <= r < n");
  const Index max_dim = opts.max_iterations > 0 ? std::min(opts.max_iterations, n) : n;

  Matrix locked(n, 0);
  Vector locked_values(0);
  const int max_passes = static_cast<int>(r) + 8;
  for (int pass = 0; pass < max_passes; ++pass) {
    const Index have = locked.cols();
    const bool verifying = have >= r;
    const Index want = verifying ? Index{1} : r - have;
    auto found = detail::lanczos_pass(apply, n, locked, want, opts.tol, max_dim,
                                      derive_seed(opts.seed, "lanczos") + static_cast<std::uint64_t>(pass));
    if (!found.converged) {
      std::ostringstream msg;
      msg << "Lanczos did not converge within " << max_dim << " steps (pass " << pass << ")";
      throw ConvergenceError(msg.str(), found.residuals);
    }
    if (found.values.size() == 0) break;

    if (verifying) {
      const double floor = locked_values.minCoeff();
      Index accepted = 0;
      for (Index i = 0; i < found.values.size(); ++i)
        if (found.values[i] > floor + opts.tol * std::max(1.0, std::abs(floor))) ++accepted;
      if (accepted == 0) break;
      found.values.conservativeResize(accepted);
      found.vectors.conservativeResize(n, accepted);
    }

    Matrix merged(n, have + found.vectors.cols());
    merged << locked, found.vectors;
    Vector merged_values(have + found.values.size());
    merged_values << locked_values, found.values;
    auto top = detail::take_top(merged_values, merged, r);
    locked = std::move(top.vectors);
    locked_values = std::move(top.values);
  }
  if (locked.cols() < r) throw ConvergenceError("Lanczos found fewer than r eigenpairs", {});

  // Restore exact orthonormality lost across passes.
  Eigen::HouseholderQR<Matrix> qr(locked);
  Matrix q = qr.householderQ() * Matrix::Identity(n, r);
  // Rayleigh-Ritz on the final subspace.
  Matrix aq(n, r);
  Vector tmp(n), out(n);
  for (Index j = 0; j < r; ++j) {
    tmp = q.col(j);
    apply(tmp, out);
    aq.col(j) = out;
  }
  Matrix h = q.transpose() * aq;
  h = 0.5 * (h + h.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> small(h);
  Matrix vecs = q * small.eigenvectors();
  auto basis = detail::take_top(small.eigenvalues(), vecs, r);

  std::vector<double> residuals;
  bool ok = true;
  for (Index j = 0; j < r; ++j) {
    tmp = basis.vectors.col(j);
    apply(tmp, out);
    const double rn = (out - basis.values[j] * tmp).norm();
    residuals.push_back(rn);
    if (rn > std::max(1e-6, 100 * opts.tol) * std::max(1.0, std::abs(basis.values[j]))) ok = false;
  }
  if (!ok) throw ConvergenceError("Lanczos residual check failed", residuals);
  detail::canonicalize_signs(basis.vectors);
  return basis;
}

/// Top-r eigenpairs of a dense symmetric matrix via a full decomposition.
inline EigenBasis dense_top_eigenpairs(const Matrix& m, Index r) {
  if (r < 1 || r > m.rows()) throw InvalidArgument("dense eigensolver: need 1 <= r <= n");
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) throw ConvergenceError("dense eigensolver failed", {});
  auto basis = detail::take_top(es.eigenvalues(), es.eigenvectors(), r);
  detail::canonicalize_signs(basis.vectors);
  return basis;
}

/// Top-r (largest algebraic) eigenpairs of a sparse symmetric matrix. Dense
/// decomposition when n <= dense_threshold, Lanczos otherwise.
inline EigenBasis top_r_eigenpairs(const SparseMatrix& m, Index r, const EigenOptions& opts = {}) {
  const Index n = m.rows();
  if (m.cols() != n) throw InvalidArgument("top_r_eigenpairs: matrix must be square");
  if (r < 1 || r >= n) throw InvalidArgument("top_r_eigenpairs: need 1 <= r < n (r=" + std::to_string(r) +
                                             ", n=" + std::to_string(n) + ")");
  if (!(opts.tol > 0)) throw InvalidArgument("top_r_eigenpairs: tol must be positive");
  const bool dense = opts.method == EigenMethod::Dense ||
                     (opts.method == EigenMethod::Auto && n <= opts.dense_threshold);
  if (dense) return dense_top_eigenpairs(Matrix(m), r);
  auto apply = [&m](const Vector& x, Vector& y) { y.noalias() = m * x; };
  return lanczos_top_eigenpairs(apply, n, r, opts);
}

inline EigenBasis top_r_eigenpairs(const NormalizedAdjacency& a, Index r, const EigenOptions& opts = {}) {
  return top_r_eigenpairs(a.matrix, r, opts);
}

/// U diag(coeffs) Uᵀ X, evaluated right to left (Uᵀ X is r x d).
template <typename Rhs>
Matrix apply_spectral_filter(const Matrix& u, const Vector& coeffs, const Rhs& x) {
  Matrix ux = u.transpose() * x;
  return u * (coeffs.asDiagonal() * ux);
}

/// U diag(λ)^K Uᵀ X.
template <typename Rhs>
Matrix propagate(const Matrix& u, const Vector& lambda, int k, const Rhs& x) {
  if (u.cols() != lambda.size() || u.rows() != x.rows()) throw InvalidArgument("propagate: shape mismatch");
  return apply_spectral_filter(u, lambda.array().pow(k).matrix(), x);
}

template <typename Rhs>
Matrix propagate(const EigenBasis& b, int k, const Rhs& x) {
  return propagate(b.vectors, b.values, k, x);
}

/// (1/K) Σ_{k=1..K} λ^k, accumulated with running powers.
inline Vector mean_powers(const Vector& lambda, int k) {
  Vector acc = Vector::Zero(lambda.size());
  Vector pw = Vector::Ones(lambda.size());
  for (int i = 1; i <= k; ++i) {
    pw.array() *= lambda.array();
    acc += pw;
  }
  return acc / static_cast<double>(k);
}

/// (1/K) Σ_{k=1..K} [(1-a) U diag(λ)^k Uᵀ X + a X].
template <typename Rhs>
Matrix s2gc_filter(const Matrix& u, const Vector& lambda, int k, double a, const Rhs& x) {
  if (u.cols() != lambda.size() || u.rows() != x.rows()) throw InvalidArgument("s2gc_filter: shape mismatch");
  if (k < 1) throw InvalidArgument("s2gc_filter: K must be positive");
  Matrix out = (1.0 - a) * apply_spectral_filter(u, mean_powers(lambda, k), x);
  out += a * Matrix(x);
  return out;
}

template <typename Rhs>
Matrix s2gc_filter(const EigenBasis& b, int k, double a, const Rhs& x) {
  return s2gc_filter(b.vectors, b.values, k, a, x);
}

/// First-order eigenpair shifts under A -> A + Δ_A.
struct EigenShiftEstimate {
  Vector delta_values;
  Matrix delta_vectors;
  double lambda_eps = 1e-5;
};

/// Δλ_i = u_iᵀ Δ_A u_i and
/// Δu_i = Σ_{j≠i, j<r} (u_jᵀ Δ_A u_j) / (λ_i - λ_j + λ_eps) u_j,
/// with the sum restricted to the r available pairs.
inline EigenShiftEstimate estimate_eigen_shift(const EigenBasis& basis, const SparseMatrix& delta_a,
                                               double lambda_eps = 1e-5) {
  const Index n = basis.size(), r = basis.rank();
  if (delta_a.rows() != n || delta_a.cols() != n) throw InvalidArgument("estimate_eigen_shift: size mismatch");
  const Matrix& u = basis.vectors;
  Matrix du_a = delta_a * u;  // n x r
  Vector quad(r);
  for (Index j = 0; j < r; ++j) quad[j] = u.col(j).dot(du_a.col(j));

  Matrix coeff = Matrix::Zero(r, r);  // column i holds the weights on u_j
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < r; ++j)
      if (j != i) coeff(j, i) = quad[j] / (basis.values[i] - basis.values[j] + lambda_eps);
  return {quad, u * coeff, lambda_eps};
}

}  // namespace sat
