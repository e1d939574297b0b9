#pragma once

// Undirected attributed graphs, symmetric normalization and dataset splits.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "sat/error.hpp"
#include "sat/rng.hpp"

namespace sat {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

struct NodePair {
  Index u = 0;
  Index v = 0;

  friend bool operator==(const NodePair&, const NodePair&) = default;
  friend auto operator<=>(const NodePair&, const NodePair&) = default;
};

/// Immutable undirected graph with binary symmetric adjacency (no stored
/// diagonal), node features and class labels.
class Graph {
public:
  Graph() = default;

  /// Builds a graph from an undirected edge list. Every edge is inserted in
  /// both directions and duplicates collapse. Self-loops are dropped.
  /// `num_classes < 0` infers max(label) + 1.
  Graph(Index n, std::span<const NodePair> edges, SparseMatrix features, std::vector<int> labels,
        int num_classes = -1)
      : features_(std::move(features)), labels_(std::move(labels)) {
    if (n <= 0) throw InvalidArgument("graph must have at least one node");
    if (features_.rows() != n)
      throw InvalidArgument("feature rows (" + std::to_string(features_.rows()) +
                            ") != node count (" + std::to_string(n) + ")");
    if (static_cast<Index>(labels_.size()) != n)
      throw InvalidArgument("label count (" + std::to_string(labels_.size()) +
                            ") != node count (" + std::to_string(n) + ")");
    int max_label = -1;
    for (int y : labels_) {
      if (y < 0) throw BoundsError("negative class label " + std::to_string(y));
      max_label = std::max(max_label, y);
    }
    num_classes_ = num_classes < 0 ? max_label + 1 : num_classes;
    if (max_label >= num_classes_)
      throw BoundsError("label " + std::to_string(max_label) + " outside [0, " +
                        std::to_string(num_classes_) + ")");

    std::vector<Triplet> trips;
    trips.reserve(edges.size() * 2);
    for (const auto& e : edges) {
      if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n)
        throw BoundsError("edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                          ") outside [0, " + std::to_string(n) + ")");
      if (e.u == e.v) continue;
      trips.emplace_back(e.u, e.v, 1.0);
      trips.emplace_back(e.v, e.u, 1.0);
    }
    adjacency_.resize(n, n);
    // Duplicates collapse to a single unit entry.
    adjacency_.setFromTriplets(trips.begin(), trips.end(), [](double, double) { return 1.0; });
    adjacency_.makeCompressed();
  }

  Index num_nodes() const noexcept { return adjacency_.rows(); }
  Index num_edges() const noexcept { return adjacency_.nonZeros() / 2; }
  Index feature_dim() const noexcept { return features_.cols(); }
  int num_classes() const noexcept { return num_classes_; }

  const SparseMatrix& adjacency() const noexcept { return adjacency_; }
  const SparseMatrix& features() const noexcept { return features_; }
  const std::vector<int>& labels() const noexcept { return labels_; }

  Index degree(Index i) const {
    return adjacency_.outerIndexPtr()[i + 1] - adjacency_.outerIndexPtr()[i];
  }

  /// Sorted neighbor list of node i.
  std::span<const int> neighbors(Index i) const {
    const auto* begin = adjacency_.innerIndexPtr() + adjacency_.outerIndexPtr()[i];
    return {begin, static_cast<std::size_t>(degree(i))};
  }

  bool has_edge(Index i, Index j) const {
    auto nb = neighbors(i);
    return std::binary_search(nb.begin(), nb.end(), static_cast<int>(j));
  }

  /// Undirected edges with u < v, in row-major order.
  std::vector<NodePair> edge_list() const {
    std::vector<NodePair> out;
    out.reserve(static_cast<std::size_t>(num_edges()));
    for (Index i = 0; i < num_nodes(); ++i)
      for (int j : neighbors(i))
        if (i < j) out.push_back({i, j});
    return out;
  }

  /// Same topology and labels, new feature matrix.
  Graph with_features(SparseMatrix features) const {
    Graph g = *this;
    if (features.rows() != num_nodes()) throw InvalidArgument("feature rows != node count");
    g.features_ = std::move(features);
    return g;
  }

private:
  SparseMatrix adjacency_;
  SparseMatrix features_;
  std::vector<int> labels_;
  int num_classes_ = 0;
};

/// Â = D̃^{-1/2} (A + I) D̃^{-1/2}, with d̃ the row sums of A + I.
struct NormalizedAdjacency {
  SparseMatrix matrix;
  Vector degrees;  // d̃

  Index size() const noexcept { return matrix.rows(); }
};

inline NormalizedAdjacency normalize(const Graph& g) {
  const Index n = g.num_nodes();
  Vector deg(n);
  for (Index i = 0; i < n; ++i) deg[i] = static_cast<double>(g.degree(i)) + 1.0;
  Vector inv_sqrt = deg.cwiseSqrt().cwiseInverse();

  SparseMatrix m(n, n);
  m.reserve(Eigen::VectorXi::Constant(n, 1) +
            Eigen::Map<const Eigen::VectorXi>(g.adjacency().outerIndexPtr() + 1, n) -
            Eigen::Map<const Eigen::VectorXi>(g.adjacency().outerIndexPtr(), n));
  for (Index i = 0; i < n; ++i) {
    bool diag_done = false;
    for (int j : g.neighbors(i)) {
      if (!diag_done && j > i) {
        m.insert(i, i) = 1.0 / deg[i];
        diag_done = true;
      }
      m.insert(i, j) = inv_sqrt[i] * inv_sqrt[j];
    }
    if (!diag_done) m.insert(i, i) = 1.0 / deg[i];
  }
  m.makeCompressed();
  return {std::move(m), std::move(deg)};
}

/// Connected component id per node; components are numbered in order of their
/// smallest member.
inline std::vector<Index> connected_components(const Graph& g, Index* count = nullptr) {
  const Index n = g.num_nodes();
  std::vector<Index> comp(static_cast<std::size_t>(n), -1);
  Index next = 0;
  std::vector<Index> stack;
  for (Index s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    comp[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      Index v = stack.back();
      stack.pop_back();
      for (int w : g.neighbors(v)) {
        if (comp[w] < 0) {
          comp[w] = next;
          stack.push_back(w);
        }
      }
    }
    ++next;
  }
  if (count) *count = next;
  return comp;
}

/// Subgraph induced by `nodes` (ascending original indices), relabeled 0..k-1
/// in the given order.
inline Graph induced_subgraph(const Graph& g, std::span<const Index> nodes) {
  std::vector<Index> remap(static_cast<std::size_t>(g.num_nodes()), -1);
  for (std::size_t k = 0; k < nodes.size(); ++k) remap[nodes[k]] = static_cast<Index>(k);

  std::vector<NodePair> edges;
  for (Index old : nodes)
    for (int w : g.neighbors(old))
      if (remap[w] >= 0 && old < w) edges.push_back({remap[old], remap[w]});

  std::vector<Triplet> trips;
  const SparseMatrix& x = g.features();
  for (std::size_t k = 0; k < nodes.size(); ++k)
    for (SparseMatrix::InnerIterator it(x, nodes[k]); it; ++it)
      trips.emplace_back(static_cast<Index>(k), it.col(), it.value());
  SparseMatrix feats(static_cast<Index>(nodes.size()), x.cols());
  feats.setFromTriplets(trips.begin(), trips.end());

  std::vector<int> labels;
  labels.reserve(nodes.size());
  for (Index old : nodes) labels.push_back(g.labels()[old]);
  return Graph(static_cast<Index>(nodes.size()), edges, std::move(feats), std::move(labels),
               g.num_classes());
}

/// Original indices (ascending) of the largest connected component. Ties go to
/// the component holding the smallest node index.
inline std::vector<Index> largest_component_nodes(const Graph& g) {
  if (g.num_nodes() == 0) throw InvalidArgument("largest_connected_component: empty graph");
  Index count = 0;
  auto comp = connected_components(g, &count);
  std::vector<Index> sizes(static_cast<std::size_t>(count), 0);
  for (Index c : comp) ++sizes[c];
  const auto best = static_cast<Index>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  std::vector<Index> nodes;
  nodes.reserve(static_cast<std::size_t>(sizes[best]));
  for (Index i = 0; i < g.num_nodes(); ++i)
    if (comp[i] == best) nodes.push_back(i);
  return nodes;
}

inline Graph largest_connected_component(const Graph& g) {
  auto nodes = largest_component_nodes(g);
  return induced_subgraph(g, nodes);
}

/// Toggles each pair symmetrically; pairs are applied in order, so a pair listed
/// twice cancels.
inline Graph flip_edges(const Graph& g, std::span<const NodePair> flips) {
  const Index n = g.num_nodes();
  std::vector<NodePair> edges = g.edge_list();
  std::vector<NodePair> toggles;
  toggles.reserve(flips.size());
  for (const auto& f : flips) {
    if (f.u == f.v) throw InvalidArgument("flip_edges: self-loop pair (" + std::to_string(f.u) + ")");
    if (f.u < 0 || f.v < 0 || f.u >= n || f.v >= n) throw BoundsError("flip_edges: pair out of range");
    toggles.push_back({std::min(f.u, f.v), std::max(f.u, f.v)});
  }
  // Net effect per pair is parity of its occurrences.
  std::sort(toggles.begin(), toggles.end());
  std::vector<NodePair> odd;
  for (std::size_t i = 0; i < toggles.size();) {
    std::size_t j = i;
    while (j < toggles.size() && toggles[j] == toggles[i]) ++j;
    if ((j - i) % 2 == 1) odd.push_back(toggles[i]);
    i = j;
  }
  std::vector<NodePair> result;
  result.reserve(edges.size() + odd.size());
  std::set_symmetric_difference(edges.begin(), edges.end(), odd.begin(), odd.end(),
                                std::back_inserter(result));
  return Graph(n, result, g.features(), g.labels(), g.num_classes());
}

/// Copy with every feature row scaled to unit L1 norm (zero rows untouched).
inline Graph row_normalize_features(const Graph& g) {
  SparseMatrix x = g.features();
  for (Index i = 0; i < x.outerSize(); ++i) {
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(x, i); it; ++it) s += std::abs(it.value());
    if (s > 0.0)
      for (SparseMatrix::InnerIterator it(x, i); it; ++it) it.valueRef() /= s;
  }
  return g.with_features(std::move(x));
}

struct Split {
  std::vector<Index> train;
  std::vector<Index> val;
  std::vector<Index> test;
  std::uint64_t seed = 0;
};

/// 10% / 10% / 80% split. Train and val each get floor(n / 10) nodes; test takes
/// the remainder. Fisher-Yates over mt19937_64 seeded with `seed`.
inline Split random_split(const Graph& g, std::uint64_t seed) {
  const Index n = g.num_nodes();
  if (n < 10) throw InvalidArgument("random_split: need at least 10 nodes, got " + std::to_string(n));
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(seed);
  shuffle(std::span<Index>(perm), rng);

  const auto part = static_cast<std::size_t>(n / 10);
  Split s;
  s.seed = seed;
  s.train.assign(perm.begin(), perm.begin() + part);
  s.val.assign(perm.begin() + part, perm.begin() + 2 * part);
  s.test.assign(perm.begin() + 2 * part, perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

/// 64-bit FNV-1a over topology, features and labels.
inline std::uint64_t content_hash(const Graph& g) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::int64_t dims[3] = {g.num_nodes(), g.feature_dim(), g.num_classes()};
  feed(dims, sizeof dims);
  const auto& a = g.adjacency();
  feed(a.outerIndexPtr(), sizeof(int) * static_cast<std::size_t>(a.outerSize() + 1));
  feed(a.innerIndexPtr(), sizeof(int) * static_cast<std::size_t>(a.nonZeros()));
  const auto& x = g.features();
  feed(x.outerIndexPtr(), sizeof(int) * static_cast<std::size_t>(x.outerSize() + 1));
  feed(x.innerIndexPtr(), sizeof(int) * static_cast<std::size_t>(x.nonZeros()));
  feed(x.valuePtr(), sizeof(double) * static_cast<std::size_t>(x.nonZeros()));
  feed(g.labels().data(), sizeof(int) * g.labels().size());
  return h;
}

}  // namespace sat
