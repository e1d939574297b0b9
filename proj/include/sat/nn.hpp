#pragma once

// GCN, SGC and S2GC on either the exact sparse Â or a factored spectrum
// U diag(g(λ)) Uᵀ, with hand-derived gradients for weights and, on the
// factored path, for U and λ.

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sat/graph.hpp"
#include "sat/rng.hpp"
#include "sat/spectral.hpp"

namespace sat {

enum class ModelKind { GCN, SGC, S2GC };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::GCN: return "gcn";
    case ModelKind::SGC: return "sgc";
    case ModelKind::S2GC: return "s2gc";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "gcn") return ModelKind::GCN;
  if (s == "sgc") return ModelKind::SGC;
  if (s == "s2gc") return ModelKind::S2GC;
  throw InvalidArgument("unknown model kind '" + std::string(s) + "'");
}

struct ModelParams {
  ModelKind kind = ModelKind::GCN;
  std::vector<Matrix> weights;  // GCN: {W0 d x h, W1 h x c}; SGC / S2GC: {W d x c}
  int K = 2;                    // propagation depth (SGC, S2GC)
  double a = 0.2;               // S2GC self-term weight

  Index input_dim() const { return weights.front().rows(); }
  Index num_classes() const { return weights.back().cols(); }
};

/// Glorot-uniform weights; h is the GCN hidden width.
inline ModelParams init_params(ModelKind kind, Index d, Index c, std::uint64_t seed, Index h = 16, int K = 2,
                               double a = 0.2) {
  Rng rng(seed);
  auto glorot = [&rng](Index rows, Index cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix w(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) w(i, j) = uniform(rng, -limit, limit);
    return w;
  };
  ModelParams p{kind, {}, K, a};
  if (kind == ModelKind::GCN) {
    p.weights.push_back(glorot(d, h));
    p.weights.push_back(glorot(h, c));
  } else {
    p.weights.push_back(glorot(d, c));
  }
  return p;
}

/// Which polynomial of the propagation operator a layer applies.
struct Filter {
  enum Kind { Step, Power, MeanPower } kind = Step;
  int k = 1;
};

/// Spectral coefficient g(λ) for a filter.
inline Vector filter_coefficients(const Filter& f, const Vector& lambda) {
  switch (f.kind) {
    case Filter::Step: return lambda;
    case Filter::Power: return lambda.array().pow(f.k).matrix();
    case Filter::MeanPower: return mean_powers(lambda, f.k);
  }
  return lambda;
}

/// dg/dλ, elementwise.
inline Vector filter_derivative(const Filter& f, const Vector& lambda) {
  switch (f.kind) {
    case Filter::Step: return Vector::Ones(lambda.size());
    case Filter::Power:
      return f.k == 1 ? Vector::Ones(lambda.size())
                      : Vector(static_cast<double>(f.k) * lambda.array().pow(f.k - 1).matrix());
    case Filter::MeanPower: {
      Vector acc = Vector::Zero(lambda.size());
      Vector pw = Vector::Ones(lambda.size());  // λ^{j-1}
      for (int j = 1; j <= f.k; ++j) {
        acc += static_cast<double>(j) * pw;
        pw.array() *= lambda.array();
      }
      return acc / static_cast<double>(f.k);
    }
  }
  return Vector::Ones(lambda.size());
}

/// Propagation through U diag(g(λ)) Uᵀ. Holds references; the basis must
/// outlive the propagator.
class SpectralPropagator {
public:
  static constexpr bool kSpectral = true;

  SpectralPropagator(const Matrix& u, const Vector& lambda) : u_(&u), lambda_(&lambda) {
    if (u.cols() != lambda.size()) throw InvalidArgument("spectral propagator: U and λ disagree on rank");
  }
  explicit SpectralPropagator(const EigenBasis& b) : SpectralPropagator(b.vectors, b.values) {}

  Index size() const { return u_->rows(); }
  Index rank() const { return u_->cols(); }

  Matrix apply(const Filter& f, const Matrix& m) const {
    return apply_spectral_filter(*u_, filter_coefficients(f, *lambda_), m);
  }

  /// Adds the contribution of out = P_f(in) with upstream gradient `grad_out`
  /// to dU and dλ. U enters twice (left factor, transposed right factor).
  void accumulate(const Filter& f, const Matrix& grad_out, const Matrix& in, Matrix& d_u, Vector& d_lambda) const {
    const Matrix& u = *u_;
    const Vector g = filter_coefficients(f, *lambda_);
    const Matrix ut_in = u.transpose() * in;         // r x m
    const Matrix ut_grad = u.transpose() * grad_out;  // r x m
    d_u.noalias() += grad_out * (g.asDiagonal() * ut_in).transpose();
    d_u.noalias() += in * (g.asDiagonal() * ut_grad).transpose();
    d_lambda += filter_derivative(f, *lambda_).cwiseProduct(ut_grad.cwiseProduct(ut_in).rowwise().sum());
  }

private:
  const Matrix* u_;
  const Vector* lambda_;
};

/// Propagation through powers of the exact sparse Â.
class SparsePropagator {
public:
  static constexpr bool kSpectral = false;

  explicit SparsePropagator(const SparseMatrix& a) : a_(&a) {}
  explicit SparsePropagator(const NormalizedAdjacency& a) : a_(&a.matrix) {}

  Index size() const { return a_->rows(); }
  Index rank() const { return 0; }

  Matrix apply(const Filter& f, const Matrix& m) const {
    switch (f.kind) {
      case Filter::Step: return *a_ * m;
      case Filter::Power: {
        Matrix out = m;
        for (int i = 0; i < f.k; ++i) out = *a_ * out;
        return out;
      }
      case Filter::MeanPower: {
        Matrix cur = m;
        Matrix acc = Matrix::Zero(m.rows(), m.cols());
        for (int i = 0; i < f.k; ++i) {
          cur = *a_ * cur;
          acc += cur;
        }
        return acc / static_cast<double>(f.k);
      }
    }
    return m;
  }

private:
  const SparseMatrix* a_;
};

/// Intermediates of one forward pass.
struct ForwardTrace {
  Matrix input_proj;  // X W (SGC / S2GC) or X W0 (GCN)
  Matrix hidden_pre;  // GCN: P (X W0)
  Matrix hidden;      // GCN: ReLU(hidden_pre)
  Matrix hidden_proj; // GCN: hidden W1
  Matrix logits;
  Matrix probs;       // row-wise softmax of logits
};

struct Gradients {
  std::vector<Matrix> d_weights;
  Matrix d_u;       // n x r; empty for sparse propagation
  Vector d_lambda;  // r;     empty for sparse propagation
};

/// Row-wise softmax with max subtraction.
inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - mx).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

namespace detail {

inline Filter model_filter(const ModelParams& p) {
  switch (p.kind) {
    case ModelKind::GCN: return {Filter::Step, 1};
    case ModelKind::SGC: return {Filter::Power, p.K};
    case ModelKind::S2GC: return {Filter::MeanPower, p.K};
  }
  return {};
}

inline void check_shapes(const ModelParams& p, Index n, const SparseMatrix& x) {
  const std::size_t expected = p.kind == ModelKind::GCN ? 2 : 1;
  if (p.weights.size() != expected)
    throw InvalidArgument("model " + std::string(to_string(p.kind)) + " expects " + std::to_string(expected) +
                          " weight matrices, got " + std::to_string(p.weights.size()));
  if (x.rows() != n) throw InvalidArgument("feature rows != propagation size");
  if (p.weights[0].rows() != x.cols()) throw InvalidArgument("W0 rows != feature dimension");
  if (expected == 2 && p.weights[0].cols() != p.weights[1].rows())
    throw InvalidArgument("W0 cols != W1 rows");
  if (p.kind != ModelKind::GCN && p.K < 1) throw InvalidArgument("K must be positive");
}

}  // namespace detail

/// GCN:  softmax(P ReLU(P X W0) W1)
/// SGC:  softmax(P^K X W)
/// S2GC: softmax((1-a) (1/K) Σ_k P^k X W + a X W)
/// P is Â (sparse) or U diag(λ) Uᵀ (spectral); filters act on n x (h|c)
/// products so no n x d or n x n dense intermediate is formed.
/// `input_proj`, when given, is a precomputed X W0 for these weights.
template <typename Prop>
ForwardTrace forward(const ModelParams& p, const Prop& prop, const SparseMatrix& x,
                     const Matrix* input_proj = nullptr) {
  detail::check_shapes(p, prop.size(), x);
  ForwardTrace t;
  const Filter f = detail::model_filter(p);
  t.input_proj = input_proj ? *input_proj : Matrix(x * p.weights[0]);
  switch (p.kind) {
    case ModelKind::GCN:
      t.hidden_pre = prop.apply(f, t.input_proj);
      t.hidden = t.hidden_pre.cwiseMax(0.0);
      t.hidden_proj = t.hidden * p.weights[1];
      t.logits = prop.apply(f, t.hidden_proj);
      break;
    case ModelKind::SGC:
      t.logits = prop.apply(f, t.input_proj);
      break;
    case ModelKind::S2GC:
      t.logits = (1.0 - p.a) * prop.apply(f, t.input_proj) + p.a * t.input_proj;
      break;
  }
  t.probs = softmax_rows(t.logits);
  return t;
}

inline ForwardTrace forward(const ModelParams& p, const EigenBasis& b, const SparseMatrix& x) {
  return forward(p, SpectralPropagator(b), x);
}

inline ForwardTrace forward(const ModelParams& p, const NormalizedAdjacency& a, const SparseMatrix& x) {
  return forward(p, SparsePropagator(a), x);
}

inline constexpr double kLogFloor = 1e-12;

/// Mean over `mask` of -log Z[i, y_i]. Repeated indices count repeatedly.
inline double masked_cross_entropy(const Matrix& probs, std::span<const int> labels, std::span<const Index> mask) {
  if (mask.empty()) throw InvalidArgument("masked_cross_entropy: empty mask");
  double sum = 0.0;
  for (Index i : mask) {
    if (i < 0 || i >= probs.rows()) throw BoundsError("masked_cross_entropy: mask index out of range");
    sum -= std::log(std::max(probs(i, labels[i]), kLogFloor));
  }
  return sum / static_cast<double>(mask.size());
}

inline double masked_cross_entropy(const ForwardTrace& t, std::span<const int> labels, std::span<const Index> mask) {
  return masked_cross_entropy(t.probs, labels, mask);
}

struct BackwardOptions {
  bool spectral = true;            // also dU and dλ (spectral propagators only)
  Matrix* d_input_proj = nullptr;  // receives ∂/∂(X W0); d_weights[0] is then left empty
};

/// Exact gradients of masked_cross_entropy w.r.t. the weights and, for a
/// spectral propagator, U and λ.
template <typename Prop>
Gradients backward(const ModelParams& p, const Prop& prop, const SparseMatrix& x, std::span<const int> labels,
                   std::span<const Index> mask, const ForwardTrace& t, const BackwardOptions& opts = {}) {
  detail::check_shapes(p, prop.size(), x);
  if (t.probs.rows() != prop.size() || t.probs.cols() != p.num_classes())
    throw InvalidArgument("backward: trace does not match params");
  if (mask.empty()) throw InvalidArgument("backward: empty mask");

  const Index n = prop.size();
  Matrix g_logits = Matrix::Zero(n, p.num_classes());
  const double scale = 1.0 / static_cast<double>(mask.size());
  for (Index i : mask) {
    g_logits.row(i) += scale * t.probs.row(i);
    g_logits(i, labels[i]) -= scale;
  }

  Gradients g;
  const bool spectral = Prop::kSpectral && opts.spectral;
  if (spectral) {
    g.d_u = Matrix::Zero(n, prop.rank());
    g.d_lambda = Vector::Zero(prop.rank());
  }
  const Filter f = detail::model_filter(p);
  auto first_layer = [&](Matrix d_input_proj) {
    if (opts.d_input_proj) {
      *opts.d_input_proj = std::move(d_input_proj);
      return Matrix();
    }
    return Matrix(x.transpose() * d_input_proj);
  };

  switch (p.kind) {
    case ModelKind::GCN: {
      // P is symmetric, so the adjoint of P is P.
      Matrix d_hidden_proj = prop.apply(f, g_logits);
      Matrix d_w1 = t.hidden.transpose() * d_hidden_proj;
      Matrix d_pre = (d_hidden_proj * p.weights[1].transpose()).cwiseProduct(
          (t.hidden_pre.array() > 0.0).cast<double>().matrix());
      g.d_weights = {first_layer(prop.apply(f, d_pre)), std::move(d_w1)};
      if constexpr (Prop::kSpectral) {
        if (spectral) {
          prop.accumulate(f, g_logits, t.hidden_proj, g.d_u, g.d_lambda);
          prop.accumulate(f, d_pre, t.input_proj, g.d_u, g.d_lambda);
        }
      }
      break;
    }
    case ModelKind::SGC: {
      g.d_weights = {first_layer(prop.apply(f, g_logits))};
      if constexpr (Prop::kSpectral) {
        if (spectral) prop.accumulate(f, g_logits, t.input_proj, g.d_u, g.d_lambda);
      }
      break;
    }
    case ModelKind::S2GC: {
      Matrix scaled = (1.0 - p.a) * g_logits;
      g.d_weights = {first_layer(prop.apply(f, scaled) + p.a * g_logits)};
      if constexpr (Prop::kSpectral) {
        if (spectral) prop.accumulate(f, scaled, t.input_proj, g.d_u, g.d_lambda);
      }
      break;
    }
  }
  return g;
}

inline Gradients backward(const ModelParams& p, const EigenBasis& b, const SparseMatrix& x,
                          std::span<const int> labels, std::span<const Index> mask, const ForwardTrace& t,
                          const BackwardOptions& opts = {}) {
  return backward(p, SpectralPropagator(b), x, labels, mask, t, opts);
}

inline Gradients backward(const ModelParams& p, const NormalizedAdjacency& a, const SparseMatrix& x,
                          std::span<const int> labels, std::span<const Index> mask, const ForwardTrace& t) {
  return backward(p, SparsePropagator(a), x, labels, mask, t);
}

/// Indices of the weight matrices that carry the l2 penalty: GCN's first layer,
/// or the single weight of SGC / S2GC; every layer when `all_layers`.
inline std::vector<std::size_t> penalized_layers(const ModelParams& p, bool all_layers = false) {
  if (all_layers) {
    std::vector<std::size_t> out(p.weights.size());
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  return {0};
}

/// γ Σ ‖W‖²_F over the penalized layers; adds 2γW into `d_weights` if given.
inline double l2_penalty(const ModelParams& p, double gamma, std::vector<Matrix>* d_weights = nullptr,
                         bool all_layers = false) {
  double total = 0.0;
  if (gamma == 0.0) return 0.0;
  for (std::size_t i : penalized_layers(p, all_layers)) {
    total += gamma * p.weights[i].squaredNorm();
    if (d_weights) (*d_weights)[i] += 2.0 * gamma * p.weights[i];
  }
  return total;
}

/// Adam with bias correction.
struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(const ModelParams& p, double learning_rate) : lr(learning_rate) {
    for (const auto& w : p.weights) {
      m.push_back(Matrix::Zero(w.rows(), w.cols()));
      v.push_back(Matrix::Zero(w.rows(), w.cols()));
    }
  }
};

inline void adam_step(AdamState& s, ModelParams& p, const std::vector<Matrix>& grads) {
  if (grads.size() != p.weights.size() || s.m.size() != p.weights.size())
    throw InvalidArgument("adam_step: gradient / state count mismatch");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    if (grads[i].rows() != p.weights[i].rows() || grads[i].cols() != p.weights[i].cols())
      throw InvalidArgument("adam_step: gradient shape mismatch");
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i].cwiseAbs2();
    p.weights[i].array() -= s.lr * (s.m[i].array() / c1) / ((s.v[i].array() / c2).sqrt() + s.eps);
  }
}

/// Row-wise argmax.
inline std::vector<int> predict(const Matrix& probs) {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Index i = 0; i < probs.rows(); ++i) {
    Index arg = 0;
    probs.row(i).maxCoeff(&arg);
    out[i] = static_cast<int>(arg);
  }
  return out;
}

inline double accuracy(const Matrix& probs, std::span<const int> labels, std::span<const Index> idx) {
  if (idx.empty()) return 0.0;
  std::size_t hit = 0;
  for (Index i : idx) {
    Index arg = 0;
    probs.row(i).maxCoeff(&arg);
    if (arg == labels[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(idx.size());
}

}  // namespace sat
