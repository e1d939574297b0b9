#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "sat/eigen_cache.hpp"
#include "sat/spectral.hpp"
#include "test_util.hpp"

namespace {

using sat::Index;
using sat::Matrix;
using sat::Vector;

Matrix dense_features(Index n, Index d, std::uint64_t seed) {
  sat::Rng rng(seed);
  Matrix x(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < d; ++k) x(i, k) = sat::standard_normal(rng);
  return x;
}

void expect_invariants(const sat::EigenBasis& b, const Matrix& m) {
  const Index r = b.rank();
  EXPECT_LT((b.vectors.transpose() * b.vectors - Matrix::Identity(r, r)).cwiseAbs().maxCoeff(), 1e-8);
  for (Index i = 0; i < r; ++i) {
    EXPECT_LE((m * b.vectors.col(i) - b.values[i] * b.vectors.col(i)).norm(),
              1e-6 * std::max(1.0, std::abs(b.values[i])));
    if (i > 0) EXPECT_GE(b.values[i - 1], b.values[i]);
    Index arg = 0;
    b.vectors.col(i).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(b.vectors(arg, i), 0.0);
  }
}

sat::EigenOptions lanczos_only() {
  sat::EigenOptions o;
  o.method = sat::EigenMethod::Lanczos;
  return o;
}

TEST(TopEigenpairs, TwoNodeExample) {
  sat::Graph g(2, std::vector<sat::NodePair>{{0, 1}}, sat::SparseMatrix(2, 1), {0, 0});
  auto b = sat::top_r_eigenpairs(sat::normalize(g), 1);
  ASSERT_EQ(b.rank(), 1);
  EXPECT_NEAR(b.values[0], 1.0, 1e-14);
  EXPECT_NEAR(b.vectors(0, 0), 1.0 / std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(b.vectors(1, 0), 1.0 / std::sqrt(2.0), 1e-14);
}

TEST(TopEigenpairs, NearlyFullRankMatchesDense) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto g = sat::test::random_graph(10, 0.3, 2, 2, seed);
    const Matrix m = sat::test::dense_normalized(g);
    const auto oracle = sat::test::dense_basis(m, 9);
    for (auto opts : {sat::EigenOptions{}, lanczos_only()}) {
      auto b = sat::top_r_eigenpairs(sat::normalize(g), 9, opts);
      EXPECT_LT((b.values - oracle.values).cwiseAbs().maxCoeff(), 1e-8);
      expect_invariants(b, m);
    }
  }
}

TEST(TopEigenpairs, PerronPair) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto g = sat::test::random_graph(60, 0.05, 2, 2, seed);
    auto na = sat::normalize(g);
    for (auto opts : {sat::EigenOptions{}, lanczos_only()}) {
      auto b = sat::top_r_eigenpairs(na, 4, opts);
      EXPECT_NEAR(b.values[0], 1.0, 1e-10);
      const Vector expect = na.degrees.cwiseSqrt().normalized();
      EXPECT_LT((b.vectors.col(0) - expect).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(TopEigenpairs, RejectsBadRank) {
  auto g = sat::test::random_graph(12, 0.2, 2, 2, 0);
  auto na = sat::normalize(g);
  EXPECT_THROW(sat::top_r_eigenpairs(na, 0), sat::InvalidArgument);
  EXPECT_THROW(sat::top_r_eigenpairs(na, 12), sat::InvalidArgument);
  sat::EigenOptions bad;
  bad.tol = 0.0;
  EXPECT_THROW(sat::top_r_eigenpairs(na, 3, bad), sat::InvalidArgument);
}

TEST(Lanczos, RandomSymmetricMatchesDense) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix m = sat::test::random_symmetric(200, 100 + seed);
    auto apply = [&m](const Vector& x, Vector& y) { y.noalias() = m * x; };
    sat::EigenOptions opts;
    opts.seed = seed;
    auto b = sat::lanczos_top_eigenpairs(apply, 200, 20, opts);
    const auto oracle = sat::test::dense_basis(m, 20);
    EXPECT_LT((b.values - oracle.values).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(sat::test::max_principal_angle(b.vectors, oracle.vectors), 1e-6);
    expect_invariants(b, m);
  }
}

TEST(Lanczos, RecoversRepeatedEigenvalues) {
  // Block-diagonal copies of one matrix: every eigenvalue has multiplicity 3,
  // which a single Krylov sequence cannot see.
  const Matrix block = sat::test::random_symmetric(30, 7);
  Matrix m = Matrix::Zero(90, 90);
  for (int k = 0; k < 3; ++k) m.block(30 * k, 30 * k, 30, 30) = block;
  auto apply = [&m](const Vector& x, Vector& y) { y.noalias() = m * x; };
  auto b = sat::lanczos_top_eigenpairs(apply, 90, 6, {});
  const auto oracle = sat::test::dense_basis(m, 6);
  EXPECT_LT((b.values - oracle.values).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(sat::test::max_principal_angle(b.vectors, oracle.vectors), 1e-6);
  expect_invariants(b, m);
}

TEST(Lanczos, SeededAndDeterministic) {
  auto g = sat::test::random_graph(300, 0.01, 2, 2, 3);
  auto na = sat::normalize(g);
  auto a = sat::top_r_eigenpairs(na, 15, lanczos_only());
  auto b = sat::top_r_eigenpairs(na, 15, lanczos_only());
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.vectors, b.vectors);
  expect_invariants(a, Matrix(na.matrix));
}

TEST(Lanczos, IterationCapRaisesWithResiduals) {
  const Matrix m = sat::test::random_symmetric(120, 1);
  auto apply = [&m](const Vector& x, Vector& y) { y.noalias() = m * x; };
  sat::EigenOptions opts;
  opts.max_iterations = 12;
  try {
    sat::lanczos_top_eigenpairs(apply, 120, 10, opts);
    FAIL() << "expected ConvergenceError";
  } catch (const sat::ConvergenceError& e) {
    EXPECT_FALSE(e.residuals().empty());
  }
}

TEST(Propagate, FullBasisReproducesSparseProducts) {
  auto g = sat::test::random_graph(50, 0.08, 3, 2, 4);
  auto na = sat::normalize(g);
  const auto full = sat::test::dense_basis(sat::test::dense_normalized(g), 50);
  const Matrix x = dense_features(50, 6, 1);
  const Matrix ax = na.matrix * x;
  EXPECT_LT((sat::propagate(full, 1, x) - ax).cwiseAbs().maxCoeff(), 1e-8);
  const Matrix aax = na.matrix * ax;
  EXPECT_LT((sat::propagate(full, 2, x) - aax).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Propagate, LinearInFeatures) {
  auto g = sat::test::random_graph(40, 0.1, 2, 2, 5);
  auto b = sat::top_r_eigenpairs(sat::normalize(g), 10);
  const Matrix x1 = dense_features(40, 5, 2), x2 = dense_features(40, 5, 3);
  for (int k : {1, 2, 5}) {
    const Matrix lhs = sat::propagate(b, k, Matrix(x1 + x2));
    const Matrix rhs = sat::propagate(b, k, x1) + sat::propagate(b, k, x2);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Propagate, UnitSpectrumIsIdempotentProjection) {
  auto g = sat::test::random_graph(30, 0.1, 2, 2, 6);
  auto b = sat::top_r_eigenpairs(sat::normalize(g), 8);
  const Vector ones = Vector::Ones(8);
  const Matrix x = dense_features(30, 4, 4);
  const Matrix once = sat::propagate(b.vectors, ones, 3, x);
  EXPECT_LT((once - b.vectors * (b.vectors.transpose() * x)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((sat::propagate(b.vectors, ones, 1, once) - once).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Propagate, ZeroPerturbationIsIdentical) {
  auto g = sat::test::random_graph(30, 0.1, 2, 2, 7);
  auto b = sat::top_r_eigenpairs(sat::normalize(g), 8);
  const Matrix x = dense_features(30, 4, 5);
  const sat::EigenBasis perturbed{b.values + Vector::Zero(8), b.vectors + Matrix::Zero(30, 8)};
  EXPECT_EQ(sat::propagate(perturbed, 2, x), sat::propagate(b, 2, x));
  EXPECT_THROW(sat::propagate(b.vectors, Vector::Ones(7), 1, x), sat::InvalidArgument);
}

TEST(S2gcFilter, SpecialCasesAndDenseOracle) {
  auto g = sat::test::random_graph(40, 0.1, 3, 2, 8);
  auto b = sat::top_r_eigenpairs(sat::normalize(g), 12);
  const Matrix x = dense_features(40, 5, 6);
  EXPECT_LT((sat::s2gc_filter(b, 1, 0.0, x) - sat::propagate(b, 1, x)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(sat::s2gc_filter(b, 3, 1.0, x), x);

  // Term-by-term with the dense low-rank operator.
  const Matrix p = b.vectors * b.values.asDiagonal() * b.vectors.transpose();
  Matrix expect = Matrix::Zero(40, 5);
  Matrix pk = Matrix::Identity(40, 40);
  for (int k = 1; k <= 5; ++k) {
    pk = pk * p;
    expect += 0.8 * pk * x + 0.2 * x;
  }
  expect /= 5.0;
  EXPECT_LT((sat::s2gc_filter(b, 5, 0.2, x) - expect).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_THROW(sat::s2gc_filter(b, 0, 0.2, x), sat::InvalidArgument);
}

TEST(EigenShift, ZeroAndRankOne) {
  auto g = sat::test::random_graph(40, 0.1, 2, 2, 9);
  auto b = sat::top_r_eigenpairs(sat::normalize(g), 6);
  auto zero = sat::estimate_eigen_shift(b, sat::SparseMatrix(40, 40));
  EXPECT_EQ(zero.delta_values.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(zero.delta_vectors.cwiseAbs().maxCoeff(), 0.0);

  const double eps = 1e-3;
  const sat::SparseMatrix rank_one = (eps * b.vectors.col(0) * b.vectors.col(0).transpose()).sparseView();
  auto est = sat::estimate_eigen_shift(b, rank_one);
  EXPECT_NEAR(est.delta_values[0], eps, 1e-12);
  for (Index j = 1; j < 6; ++j) EXPECT_NEAR(est.delta_values[j], 0.0, 1e-12);
  EXPECT_TRUE(est.delta_vectors.allFinite());
  EXPECT_THROW(sat::estimate_eigen_shift(b, sat::SparseMatrix(39, 39)), sat::InvalidArgument);
}

sat::SparseMatrix edge_perturbation(Index n, Index i, Index j, double eps) {
  sat::SparseMatrix d(n, n);
  d.insert(i, j) = eps;
  d.insert(j, i) = eps;
  return d;
}

TEST(EigenShift, WeightedEdgeMatchesRecomputation) {
  auto g = sat::test::random_graph(50, 0.08, 2, 2, 10);
  const Matrix m = sat::test::dense_normalized(g);
  const Index r = 8;
  const auto b = sat::test::dense_basis(m, r);
  const auto delta = edge_perturbation(50, 3, 17, 1e-3);
  auto est = sat::estimate_eigen_shift(b, delta);
  const auto exact = sat::test::dense_basis(m + Matrix(delta), r);
  const Vector shift = exact.values - b.values;
  EXPECT_LE((est.delta_values - shift).norm(), 0.1 * shift.norm());
}

TEST(EigenShift, ErrorIsSecondOrder) {
  auto g = sat::test::random_graph(50, 0.08, 2, 2, 11);
  const Matrix m = sat::test::dense_normalized(g);
  const auto b = sat::test::dense_basis(m, 6);
  std::vector<double> errors;
  for (double eps : {1e-2, 5e-3, 2.5e-3}) {
    const auto delta = edge_perturbation(50, 0, 31, eps);
    auto est = sat::estimate_eigen_shift(b, delta);
    const auto exact = sat::test::dense_basis(m + Matrix(delta), 6);
    errors.push_back((est.delta_values - (exact.values - b.values)).norm());
  }
  for (std::size_t i = 1; i < errors.size(); ++i) {
    const double ratio = errors[i - 1] / errors[i];
    EXPECT_GE(ratio, 2.0);
    EXPECT_LE(ratio, 6.0);
  }
}

TEST(EigenCache, RoundTripAndEnvOverride) {
  const auto dir = std::filesystem::temp_directory_path() / "sat_eig_cache_test";
  std::filesystem::remove_all(dir);
  auto g = sat::test::random_graph(30, 0.1, 2, 2, 12);
  auto first = sat::graph_eigenbasis(g, 5, {}, dir);
  const auto path = sat::eigenbasis_cache_path(dir, sat::content_hash(g), 5);
  ASSERT_TRUE(std::filesystem::exists(path));
  auto second = sat::graph_eigenbasis(g, 5, {}, dir);
  EXPECT_EQ(first.values, second.values);
  EXPECT_EQ(first.vectors, second.vectors);
  std::ofstream(dir / "junk.eig") << "nope";
  EXPECT_THROW(sat::read_eigenbasis(dir / "junk.eig"), sat::Error);
  ::setenv("SAT_CACHE_DIR", "/tmp/elsewhere", 1);
  EXPECT_EQ(sat::resolve_cache_dir(dir), std::filesystem::path("/tmp/elsewhere"));
  ::unsetenv("SAT_CACHE_DIR");
  EXPECT_EQ(sat::resolve_cache_dir(dir), dir);
  std::filesystem::remove_all(dir);
}

}  // namespace
