#pragma once

// Targeted direct evasion attacks with a per-node degree budget, and the
// robustness evaluation of fixed victims against them.

#include <algorithm>
#include <atomic>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "json.hpp"
#include "sat/checkpoint.hpp"
#include "sat/graph.hpp"
#include "sat/nn.hpp"
#include "sat/rng.hpp"
#include "sat/spectral.hpp"

namespace sat {

struct AttackBudget {
  Index target = 0;
  Index budget = 1;
};

struct AttackResult {
  Index target = 0;
  std::vector<NodePair> flips;
  int clean_pred = -1;
  int attacked_pred = -1;
  int true_label = -1;
  bool success = false;  // attacked prediction differs from the true label
};

inline void to_json(nlohmann::json& j, const AttackResult& r) {
  nlohmann::json flips = nlohmann::json::array();
  for (const auto& f : r.flips) flips.push_back({f.u, f.v});
  j = nlohmann::json{{"target", r.target},         {"flips", flips},
                     {"clean_pred", r.clean_pred}, {"attacked_pred", r.attacked_pred},
                     {"true_label", r.true_label}, {"success", r.success}};
}

/// Budget = degree of the target in the clean graph.
inline AttackBudget degree_budget(const Graph& g, Index target) { return {target, g.degree(target)}; }

/// `count` distinct test nodes sampled without replacement; all of them when
/// the test set is smaller.
inline std::vector<Index> select_targets(const Split& split, std::size_t count, std::uint64_t seed) {
  std::vector<Index> pool = split.test;
  if (count >= pool.size()) return pool;
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_below(rng, pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

/// `budget` distinct partners j != target drawn uniformly; each pair is
/// toggled, so additions dominate in proportion to the number of non-neighbors.
inline std::vector<NodePair> random_flip_attack(const Graph& g, Index target, Index budget, std::uint64_t seed) {
  const Index n = g.num_nodes();
  budget = std::min<Index>(budget, n - 1);
  std::vector<Index> others;
  others.reserve(static_cast<std::size_t>(n - 1));
  for (Index j = 0; j < n; ++j)
    if (j != target) others.push_back(j);
  Rng rng(seed);
  std::vector<NodePair> flips;
  for (Index i = 0; i < budget; ++i) {
    const auto k = static_cast<std::size_t>(i) + static_cast<std::size_t>(uniform_below(rng, others.size() - i));
    std::swap(others[i], others[k]);
    flips.push_back({target, others[i]});
  }
  return flips;
}

/// Gradient of the target's cross-entropy (w.r.t. `label`) with respect to a
/// symmetric weight on every pair (target, j), through Â = D̃^{-1/2}(A+I)D̃^{-1/2}
/// and a two-layer GCN. Entry `target` is unused. O(nnz(A) h + n h).
inline Vector surrogate_pair_gradient(const ModelParams& gcn, const Graph& g, Index target, int label) {
  if (gcn.kind != ModelKind::GCN || gcn.weights.size() != 2)
    throw InvalidArgument("surrogate attack needs a two-layer GCN");
  const Index n = g.num_nodes();
  const auto norm = normalize(g);
  const SparseMatrix& a = norm.matrix;
  const Vector& deg = norm.degrees;
  const Matrix& w0 = gcn.weights[0];
  const Matrix& w1 = gcn.weights[1];

  const Matrix m0 = g.features() * w0;  // n x h
  const Matrix pre = a * m0;
  const Matrix hidden = pre.cwiseMax(0.0);
  const Matrix hw = hidden * w1;  // n x c

  Eigen::RowVectorXd logits = Eigen::RowVectorXd::Zero(w1.cols());
  for (SparseMatrix::InnerIterator it(a, target); it; ++it) logits += it.value() * hw.row(it.col());
  Eigen::RowVectorXd z = (logits.array() - logits.maxCoeff()).exp();
  z /= z.sum();
  Eigen::RowVectorXd gz = z;
  gz[label] -= 1.0;  // dℓ/dlogits

  // dℓ/dÂ = E2 + E1 with E2 = e_t qᵀ (outer layer) and E1 = dpre M0ᵀ (inner).
  const Vector q = hw * gz.transpose();
  const Eigen::RowVectorXd w1g = (w1 * gz.transpose()).transpose();
  Matrix dpre = Matrix::Zero(n, w0.cols());
  for (SparseMatrix::InnerIterator it(a, target); it; ++it) {
    const Index k = it.col();
    dpre.row(k) = (it.value() * w1g).cwiseProduct((pre.row(k).array() > 0.0).cast<double>().matrix());
  }
  const Matrix a_dpre = a * dpre;

  // S_v = Σ_m E_vm Â_vm + Σ_k E_kv Â_kv.
  Vector s(n);
  for (Index v = 0; v < n; ++v) s[v] = dpre.row(v).dot(pre.row(v)) + m0.row(v).dot(a_dpre.row(v));
  double q_at = 0.0;
  for (SparseMatrix::InnerIterator it(a, target); it; ++it) {
    q_at += q[it.col()] * it.value();
    s[it.col()] += q[it.col()] * it.value();
  }
  s[target] += q_at;

  Vector grad(n);
  const double dt = deg[target];
  const Eigen::RowVectorXd dpre_t = dpre.row(target);
  const Eigen::RowVectorXd m0_t = m0.row(target);
  for (Index j = 0; j < n; ++j) {
    if (j == target) {
      grad[j] = 0.0;
      continue;
    }
    const double e_tj = q[j] + dpre_t.dot(m0.row(j));
    const double e_jt = dpre.row(j).dot(m0_t);
    grad[j] = (e_tj + e_jt) / std::sqrt(dt * deg[j]) - s[target] / (2.0 * dt) - s[j] / (2.0 * deg[j]);
  }
  return grad;
}

/// Greedy gradient attack on a GCN surrogate: `budget` times, flip the pair
/// (target, j) whose signed gradient most increases the target's loss (add
/// when the gradient is positive and the edge is absent, remove when negative
/// and present), re-normalizing after each flip. Stops early when no flip
/// increases the loss to first order. Ties go to the smallest j.
inline std::vector<NodePair> surrogate_gradient_attack(const ModelParams& surrogate, const Graph& g, Index target,
                                                       Index budget) {
  std::vector<NodePair> flips;
  if (budget <= 0) return flips;
  const int label = g.labels()[target];
  Graph cur = g;
  std::vector<char> used(static_cast<std::size_t>(g.num_nodes()), 0);
  used[target] = 1;
  for (Index step = 0; step < budget; ++step) {
    const Vector grad = surrogate_pair_gradient(surrogate, cur, target, label);
    Index best = -1;
    double best_score = 0.0;
    for (Index j = 0; j < g.num_nodes(); ++j) {
      if (used[j]) continue;
      const double score = cur.has_edge(target, j) ? -grad[j] : grad[j];
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    if (best < 0) break;
    used[best] = 1;
    const NodePair f{target, best};
    flips.push_back(f);
    cur = flip_edges(cur, std::span<const NodePair>(&f, 1));
  }
  return flips;
}

/// How a spectral victim obtains its basis on an attacked graph.
enum class BasisMode {
  Recompute,             // fresh top-r decomposition of the attacked Â
  PerturbationEstimate,  // clean basis shifted by the first-order estimate
};

/// A trained model frozen for evaluation. rank == 0 means exact sparse Â.
class Victim {
public:
  Victim(ModelParams params, Index rank, EigenOptions eig = {}, BasisMode mode = BasisMode::Recompute,
         double lambda_eps = 1e-5)
      : params_(std::move(params)), rank_(rank), eig_(eig), mode_(mode), lambda_eps_(lambda_eps) {}
  explicit Victim(const Checkpoint& c) : Victim(c.params, c.rank) {}

  const ModelParams& params() const { return params_; }
  Index rank() const { return rank_; }

  /// Prepares state tied to the clean graph (its basis for spectral victims).
  void bind(const Graph& clean) {
    clean_ = &clean;
    if (rank_ > 0) {
      clean_norm_ = normalize(clean);
      if (clean_basis_.rank() != rank_ || clean_basis_.size() != clean.num_nodes())
        clean_basis_ = top_r_eigenpairs(clean_norm_, rank_, eig_);
    }
  }

  /// Supplies a precomputed clean basis so bind() can skip the decomposition.
  void set_clean_basis(EigenBasis b) { clean_basis_ = std::move(b); }

  /// Class probabilities for every node of `graph`.
  Matrix probabilities(const Graph& graph) const {
    if (rank_ == 0) return forward(params_, normalize(graph), graph.features()).probs;
    if (clean_ && &graph == clean_) return forward(params_, clean_basis_, graph.features()).probs;
    if (mode_ == BasisMode::Recompute)
      return forward(params_, top_r_eigenpairs(normalize(graph), rank_, eig_), graph.features()).probs;
    SparseMatrix delta = normalize(graph).matrix - clean_norm_.matrix;
    auto shift = estimate_eigen_shift(clean_basis_, delta, lambda_eps_);
    EigenBasis est{clean_basis_.values + shift.delta_values, clean_basis_.vectors + shift.delta_vectors};
    return forward(params_, est, graph.features()).probs;
  }

  /// Probabilities on `graph` using `basis`, a decomposition of that graph
  /// computed by the caller (spectral victims in recompute mode only).
  Matrix probabilities(const Graph& graph, const EigenBasis& basis) const {
    return forward(params_, basis, graph.features()).probs;
  }

  /// True when predictions on an attacked graph need a fresh decomposition.
  bool needs_basis() const { return rank_ > 0 && mode_ == BasisMode::Recompute; }
  const EigenOptions& eigen_options() const { return eig_; }

  int predict_node(const Graph& graph, Index node) const {
    Index arg = 0;
    probabilities(graph).row(node).maxCoeff(&arg);
    return static_cast<int>(arg);
  }

private:
  ModelParams params_;
  Index rank_ = 0;
  EigenOptions eig_;
  BasisMode mode_;
  double lambda_eps_;
  const Graph* clean_ = nullptr;
  EigenBasis clean_basis_;
  NormalizedAdjacency clean_norm_;
};

struct RobustnessReport {
  double accuracy = 0.0;  // fraction of targets still classified correctly
  std::vector<AttackResult> results;
};

/// Applies each target's flips to the clean graph, re-normalizes, lets every
/// victim classify the target and restores. Victims never change. Spectral
/// victims of equal rank share one decomposition of each attacked graph.
inline std::vector<RobustnessReport> evaluate_robustness(std::span<Victim* const> victims, const Graph& clean,
                                                         std::span<const Index> targets,
                                                         std::span<const std::vector<NodePair>> attacks,
                                                         unsigned threads = 1) {
  if (targets.size() != attacks.size()) throw InvalidArgument("evaluate_robustness: one flip set per target");
  std::vector<RobustnessReport> reps(victims.size());
  std::vector<std::vector<int>> clean_pred;
  for (std::size_t v = 0; v < victims.size(); ++v) {
    victims[v]->bind(clean);
    clean_pred.push_back(predict(victims[v]->probabilities(clean)));
    reps[v].results.resize(targets.size());
  }

  auto work = [&](std::size_t i) {
    const Index t = targets[i];
    const auto& flips = attacks[i];
    for (const auto& f : flips)
      if (f.u != t && f.v != t) throw InvalidArgument("evaluate_robustness: flip not incident to target");
    std::optional<Graph> attacked;
    if (!flips.empty()) attacked = flip_edges(clean, flips);
    std::vector<std::pair<Index, EigenBasis>> bases;  // by rank
    for (std::size_t v = 0; v < victims.size(); ++v) {
      AttackResult& r = reps[v].results[i];
      r.target = t;
      r.flips = flips;
      r.true_label = clean.labels()[t];
      r.clean_pred = clean_pred[v][static_cast<std::size_t>(t)];
      const Victim& vic = *victims[v];
      if (!attacked) {
        r.attacked_pred = r.clean_pred;
      } else if (vic.needs_basis()) {
        auto it = std::find_if(bases.begin(), bases.end(), [&](const auto& b) { return b.first == vic.rank(); });
        if (it == bases.end()) {
          bases.emplace_back(vic.rank(), top_r_eigenpairs(normalize(*attacked), vic.rank(), vic.eigen_options()));
          it = std::prev(bases.end());
        }
        Index arg = 0;
        vic.probabilities(*attacked, it->second).row(t).maxCoeff(&arg);
        r.attacked_pred = static_cast<int>(arg);
      } else {
        r.attacked_pred = vic.predict_node(*attacked, t);
      }
      r.success = r.attacked_pred != r.true_label;
    }
  };

  threads = std::max(1u, threads);
  if (threads == 1 || targets.size() < 2) {
    for (std::size_t i = 0; i < targets.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
      pool.emplace_back([&] {
        try {
          for (std::size_t i = next++; i < targets.size(); i = next++) work(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = targets.size();
        }
      });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  for (auto& rep : reps) {
    std::size_t correct = 0;
    for (const auto& r : rep.results) correct += r.success ? 0 : 1;
    rep.accuracy = targets.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(targets.size());
  }
  return reps;
}

inline RobustnessReport evaluate_robustness(Victim& victim, const Graph& clean, std::span<const Index> targets,
                                            std::span<const std::vector<NodePair>> attacks, unsigned threads = 1) {
  Victim* one[] = {&victim};
  return std::move(evaluate_robustness(std::span<Victim* const>(one), clean, targets, attacks, threads).front());
}

}  // namespace sat
