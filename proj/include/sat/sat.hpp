#pragma once

// Spectral adversarial training: perturbations on eigenvectors and eigenvalues,
// the regularized objective and the training loops.

#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sat/eigen_cache.hpp"
#include "sat/graph.hpp"
#include "sat/nn.hpp"
#include "sat/spectral.hpp"

namespace sat {

inline constexpr Index kHiddenWidth = 16;

struct SatConfig {
  double eps1 = 0.1;   // ‖δ_U‖_F
  double eps2 = 0.1;   // ‖δ_λ‖_2
  double alpha = 0.5;  // eigenvector regularizer weight
  double beta = 0.5;   // eigenvalue regularizer weight
  Index r = 30;
  int epochs = 100;
  double lr = 0.01;
  std::uint64_t seed = 0;
  ModelKind model = ModelKind::GCN;
  int K = 2;
  double a = 0.2;
  double gamma = 5e-4;
  std::optional<int> early_stop;  // patience in epochs on validation accuracy

  void validate() const {
    if (!(eps1 >= 0) || !(eps2 >= 0)) throw InvalidArgument("eps1 and eps2 must be >= 0");
    if (!(alpha >= 0) || !(beta >= 0)) throw InvalidArgument("alpha and beta must be >= 0");
    if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
    if (r < 1) throw InvalidArgument("rank must be >= 1");
    if (!(lr > 0)) throw InvalidArgument("lr must be positive");
    if (K < 1) throw InvalidArgument("K must be >= 1");
    if (!(a >= 0 && a <= 1)) throw InvalidArgument("a must lie in [0, 1]");
    if (!(gamma >= 0)) throw InvalidArgument("gamma must be >= 0");
    if (early_stop && *early_stop < 1) throw InvalidArgument("early_stop patience must be >= 1");
  }

  bool adversarial() const { return (alpha > 0 && eps1 > 0) || (beta > 0 && eps2 > 0); }
};

/// Defaults for SAT runs: ε1 = ε2 = 0.1, α = β = 0.5, r = 30, 100 epochs;
/// learning rate 0.01 / 0.2 / 0.01 and K 1 / 2 / 5 for GCN / SGC / S2GC.
inline SatConfig sat_defaults(ModelKind kind) {
  SatConfig c;
  c.model = kind;
  switch (kind) {
    case ModelKind::GCN: c.lr = 0.01; c.K = 1; break;
    case ModelKind::SGC: c.lr = 0.2; c.K = 2; break;
    case ModelKind::S2GC: c.lr = 0.01; c.K = 5; break;
  }
  return c;
}

/// Defaults for standard (exact Â) training: 200 epochs, patience 50.
inline SatConfig standard_defaults(ModelKind kind) {
  SatConfig c = sat_defaults(kind);
  c.epochs = 200;
  c.early_stop = 50;
  c.eps1 = c.eps2 = c.alpha = c.beta = 0.0;
  return c;
}

inline void to_json(nlohmann::json& j, const SatConfig& c) {
  j = nlohmann::json{{"eps1", c.eps1},   {"eps2", c.eps2}, {"alpha", c.alpha},
                     {"beta", c.beta},   {"r", c.r},       {"epochs", c.epochs},
                     {"lr", c.lr},       {"seed", c.seed}, {"model", std::string(to_string(c.model))},
                     {"K", c.K},         {"a", c.a},       {"gamma", c.gamma},
                     {"early_stop", c.early_stop ? nlohmann::json(*c.early_stop) : nlohmann::json(nullptr)}};
}

inline void from_json(const nlohmann::json& j, SatConfig& c) {
  static const char* const kFields[] = {"eps1", "eps2", "alpha", "beta", "r",     "epochs",    "lr",
                                        "seed", "model", "K",    "a",    "gamma", "early_stop"};
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* f : kFields) known = known || key == f;
    if (!known) throw InvalidArgument("SatConfig: unknown field '" + key + "'");
  }
  SatConfig d;
  c.eps1 = j.value("eps1", d.eps1);
  c.eps2 = j.value("eps2", d.eps2);
  c.alpha = j.value("alpha", d.alpha);
  c.beta = j.value("beta", d.beta);
  c.r = j.value("r", d.r);
  c.epochs = j.value("epochs", d.epochs);
  c.lr = j.value("lr", d.lr);
  c.seed = j.value("seed", d.seed);
  c.model = parse_model_kind(j.value("model", std::string("gcn")));
  c.K = j.value("K", d.K);
  c.a = j.value("a", d.a);
  c.gamma = j.value("gamma", d.gamma);
  if (j.contains("early_stop") && !j.at("early_stop").is_null()) c.early_stop = j.at("early_stop").get<int>();
  else c.early_stop.reset();
}

struct SpectralPerturbation {
  Matrix delta_u;       // n x r
  Vector delta_lambda;  // r (diagonal of δ_Λ)
};

inline constexpr double kMinGradNorm = 1e-12;

/// δ_U = ε1 g_U / ‖g_U‖_F and δ_λ = ε2 g_λ / ‖g_λ‖_2; zero when the gradient
/// norm is below 1e-12.
inline SpectralPerturbation perturbation_from_gradients(const Gradients& g, double eps1, double eps2) {
  SpectralPerturbation p{Matrix::Zero(g.d_u.rows(), g.d_u.cols()), Vector::Zero(g.d_lambda.size())};
  const double nu = g.d_u.norm();
  const double nl = g.d_lambda.norm();
  if (nu >= kMinGradNorm) p.delta_u = (eps1 / nu) * g.d_u;
  if (nl >= kMinGradNorm) p.delta_lambda = (eps2 / nl) * g.d_lambda;
  return p;
}

/// One clean forward and backward on the training loss, then a single
/// normalized gradient-ascent step on each spectral factor.
inline SpectralPerturbation gen_perturbations(const ModelParams& params, const EigenBasis& basis, const SparseMatrix& x,
                                              std::span<const int> labels, std::span<const Index> train, double eps1,
                                              double eps2) {
  if (!(eps1 >= 0) || !(eps2 >= 0)) throw InvalidArgument("gen_perturbations: eps must be >= 0");
  const SpectralPropagator prop(basis);
  const auto trace = forward(params, prop, x);
  return perturbation_from_gradients(backward(params, prop, x, labels, train, trace), eps1, eps2);
}

struct SatLoss {
  double total = 0.0;
  double clean = 0.0;    // CE on the clean spectrum
  double penalty = 0.0;  // γ ‖Θ‖²
  double vec = 0.0;      // CE with (U + δ_U, λ), unweighted
  double val = 0.0;      // CE with (U, λ + δ_λ), unweighted
  std::vector<Matrix> d_weights;
};

/// total = CE(U, λ) + γ‖Θ‖² + α CE(U + δ_U, λ) + β CE(U, λ + δ_λ).
/// The perturbation is a constant; gradients flow only into the weights.
/// `clean_trace` / `clean_grads` may be supplied to reuse an earlier pass.
inline SatLoss sat_loss(const ModelParams& params, const EigenBasis& basis, const SparseMatrix& x,
                        std::span<const int> labels, std::span<const Index> train, const SpectralPerturbation& pert,
                        const SatConfig& cfg, const ForwardTrace* clean_trace = nullptr,
                        const Gradients* clean_grads = nullptr) {
  SatLoss out;
  const SpectralPropagator prop(basis);
  ForwardTrace own_trace;
  if (!clean_trace) {
    own_trace = forward(params, prop, x);
    clean_trace = &own_trace;
  }
  Gradients own_grads;
  if (!clean_grads) {
    own_grads = backward(params, prop, x, labels, train, *clean_trace);
    clean_grads = &own_grads;
  }
  out.clean = masked_cross_entropy(*clean_trace, labels, train);
  out.d_weights = clean_grads->d_weights;

  // Perturbed terms reuse X W0 and share one Xᵀ product for the first layer;
  // they need no spectral gradients.
  Matrix d_input_proj;
  auto add_term = [&](const EigenBasis& b, double weight, double& loss) {
    const SpectralPropagator p(b);
    const auto t = forward(params, p, x, &clean_trace->input_proj);
    loss = masked_cross_entropy(t, labels, train);
    Matrix d_in;
    const auto g = backward(params, p, x, labels, train, t, {false, &d_in});
    if (d_input_proj.size() == 0) d_input_proj = weight * d_in;
    else d_input_proj += weight * d_in;
    for (std::size_t i = 1; i < out.d_weights.size(); ++i) out.d_weights[i] += weight * g.d_weights[i];
  };

  if (cfg.alpha > 0) {
    if (pert.delta_u.rows() != basis.size() || pert.delta_u.cols() != basis.rank())
      throw InvalidArgument("sat_loss: δ_U shape mismatch");
    add_term(EigenBasis{basis.values, basis.vectors + pert.delta_u}, cfg.alpha, out.vec);
  }
  if (cfg.beta > 0) {
    if (pert.delta_lambda.size() != basis.rank()) throw InvalidArgument("sat_loss: δ_λ size mismatch");
    add_term(EigenBasis{basis.values + pert.delta_lambda, basis.vectors}, cfg.beta, out.val);
  }
  if (d_input_proj.size() > 0) out.d_weights[0] += x.transpose() * d_input_proj;
  out.penalty = l2_penalty(params, cfg.gamma, &out.d_weights);
  out.total = out.clean + out.penalty + cfg.alpha * out.vec + cfg.beta * out.val;
  return out;
}

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;        // full objective
  double clean_loss = 0.0;  // CE on clean input
  double vec_loss = 0.0;    // L_vec
  double val_loss = 0.0;    // L_val
  double val_acc = 0.0;     // validation accuracy of the weights entering this epoch
  double ms = 0.0;
};

inline void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = nlohmann::json{{"epoch", r.epoch},       {"loss", r.loss},       {"clean_loss", r.clean_loss},
                     {"vec_loss", r.vec_loss}, {"val_loss", r.val_loss}, {"val_acc", r.val_acc},
                     {"ms", r.ms}};
}

using TrainHistory = std::vector<EpochRecord>;

inline void write_history_jsonl(const TrainHistory& h, std::ostream& out) {
  for (const auto& r : h) out << nlohmann::json(r).dump() << '\n';
}

struct TrainResult {
  ModelParams params;
  TrainHistory history;
};

namespace detail {

/// Shared epoch loop. `step` computes (objective, clean CE, vec, val, weight
/// gradients, clean probabilities) for the current params.
template <typename StepFn>
TrainResult run_epochs(ModelParams params, const SatConfig& cfg, const Graph& g, const Split& split, StepFn&& step) {
  using clock = std::chrono::steady_clock;
  AdamState adam(params, cfg.lr);
  TrainResult res;
  std::optional<ModelParams> best;
  double best_acc = -1.0;
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = clock::now();
    auto s = step(params);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = s.total;
    rec.clean_loss = s.clean;
    rec.vec_loss = s.vec;
    rec.val_loss = s.val;
    rec.val_acc = accuracy(s.probs, g.labels(), split.val);
    if (cfg.early_stop && rec.val_acc > best_acc) {
      best_acc = rec.val_acc;
      best = params;
      since_best = 0;
    } else if (cfg.early_stop) {
      ++since_best;
    }
    adam_step(adam, params, s.d_weights);
    rec.ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    res.history.push_back(rec);
    if (cfg.early_stop && since_best >= *cfg.early_stop) break;
  }
  res.params = best ? std::move(*best) : std::move(params);
  return res;
}

struct StepOutput {
  double total = 0, clean = 0, vec = 0, val = 0;
  std::vector<Matrix> d_weights;
  Matrix probs;
};

}  // namespace detail

inline ModelParams initial_params(const Graph& g, const SatConfig& cfg) {
  return init_params(cfg.model, g.feature_dim(), g.num_classes(), derive_seed(cfg.seed, "init"), kHiddenWidth,
                     cfg.K, cfg.a);
}

/// SAT on a precomputed basis: every epoch regenerates δ from the current
/// weights, evaluates both adversarial regularizers and takes one Adam step on
/// the combined objective.
inline TrainResult train_sat(const Graph& g, const Split& split, const SatConfig& cfg, const EigenBasis& basis) {
  cfg.validate();
  if (basis.size() != g.num_nodes()) throw InvalidArgument("train_sat: basis size != node count");
  const SparseMatrix& x = g.features();
  const auto& labels = g.labels();
  const SpectralPropagator prop(basis);
  const bool adversarial = cfg.adversarial();
  return detail::run_epochs(initial_params(g, cfg), cfg, g, split, [&](const ModelParams& params) {
    detail::StepOutput s;
    auto trace = forward(params, prop, x);
    // The clean pass doubles as the perturbation-generating pass; without an
    // active regularizer the spectral gradients are not needed.
    auto grads = backward(params, prop, x, labels, split.train, trace, {adversarial});
    auto pert = adversarial ? perturbation_from_gradients(grads, cfg.eps1, cfg.eps2)
                            : SpectralPerturbation{Matrix::Zero(basis.size(), basis.rank()), Vector::Zero(basis.rank())};
    auto loss = sat_loss(params, basis, x, labels, split.train, pert, cfg, &trace, &grads);
    s.total = loss.total;
    s.clean = loss.clean;
    s.vec = loss.vec;
    s.val = loss.val;
    s.d_weights = std::move(loss.d_weights);
    s.probs = std::move(trace.probs);
    return s;
  });
}

/// SAT with the basis computed once from normalize(g) (cached when `cache_dir`).
inline TrainResult train_sat(const Graph& g, const Split& split, const SatConfig& cfg,
                             const std::optional<std::filesystem::path>& cache_dir = std::nullopt,
                             const EigenOptions& eig = {}) {
  cfg.validate();
  if (cfg.r >= g.num_nodes()) throw InvalidArgument("train_sat: rank must be below node count");
  return train_sat(g, split, cfg, graph_eigenbasis(g, cfg.r, eig, cache_dir));
}

/// Standard training on the exact sparse Â with loss CE + γ‖Θ‖².
inline TrainResult train_standard(const Graph& g, const Split& split, const SatConfig& cfg) {
  cfg.validate();
  const SparseMatrix& x = g.features();
  const auto& labels = g.labels();
  const auto a_hat = normalize(g);
  const SparsePropagator prop(a_hat);
  return detail::run_epochs(initial_params(g, cfg), cfg, g, split, [&](const ModelParams& params) {
    detail::StepOutput s;
    auto trace = forward(params, prop, x);
    auto grads = backward(params, prop, x, labels, split.train, trace);
    s.clean = masked_cross_entropy(trace, labels, split.train);
    s.total = s.clean + l2_penalty(params, cfg.gamma, &grads.d_weights);
    s.d_weights = std::move(grads.d_weights);
    s.probs = std::move(trace.probs);
    return s;
  });
}

}  // namespace sat
