#pragma once

// Experiment orchestration shared by the command-line tool and the acceptance
// suite: dataset resolution, seeded train / attack runs and run reports.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sat/attack.hpp"
#include "sat/checkpoint.hpp"
#include "sat/eigen_cache.hpp"
#include "sat/graph_io.hpp"
#include "sat/sat.hpp"
#include "sat/synthetic.hpp"

#ifndef SAT_BUILD_ID
#define SAT_BUILD_ID "unknown"
#endif

namespace sat {

inline constexpr const char* kBuildId = SAT_BUILD_ID;

enum class AttackKind { None, Random, Gradient };

inline std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::None: return "none";
    case AttackKind::Random: return "random";
    case AttackKind::Gradient: return "gradient";
  }
  return "?";
}

inline AttackKind parse_attack_kind(std::string_view s) {
  if (s == "none") return AttackKind::None;
  if (s == "random") return AttackKind::Random;
  if (s == "gradient") return AttackKind::Gradient;
  throw InvalidArgument("unknown attack kind '" + std::string(s) + "'");
}

struct ExperimentConfig {
  std::string dataset;  // directory with edges/features/labels, or "synth:<preset>[:seed]"
  FeatureFormat feature_format = FeatureFormat::Sparse;
  bool row_normalize = false;
  bool sat = true;
  SatConfig train = sat_defaults(ModelKind::GCN);
  AttackKind attack = AttackKind::None;
  std::size_t targets = 1000;
  bool control = false;  // also evaluate the random-flip control attack
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::string out = "runs";
  BasisMode basis_mode = BasisMode::Recompute;
  unsigned threads = 1;  // per-target evaluation workers; not part of the result identity

  /// "gcn", "gcn-sat", or "gcn-lowrank" for a rank-r run without regularizers.
  std::string method_name() const {
    std::string m(to_string(train.model));
    if (!sat) return m;
    return train.adversarial() ? m + "-sat" : m + "-lowrank";
  }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"dataset", c.dataset},
                     {"feature_format", c.feature_format == FeatureFormat::Dense ? "dense" : "sparse"},
                     {"row_normalize", c.row_normalize},
                     {"sat", c.sat},
                     {"train", c.train},
                     {"attack", std::string(to_string(c.attack))},
                     {"targets", c.targets},
                     {"control", c.control},
                     {"seeds", c.seeds},
                     {"basis_mode", c.basis_mode == BasisMode::Recompute ? "recompute" : "estimate"}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c.dataset = j.at("dataset").get<std::string>();
  c.feature_format = j.value("feature_format", std::string("sparse")) == "dense" ? FeatureFormat::Dense
                                                                                : FeatureFormat::Sparse;
  c.row_normalize = j.value("row_normalize", false);
  c.sat = j.value("sat", true);
  c.train = j.at("train").get<SatConfig>();
  c.attack = parse_attack_kind(j.value("attack", std::string("none")));
  c.targets = j.value("targets", std::size_t{1000});
  c.control = j.value("control", false);
  c.seeds = j.value("seeds", std::vector<std::uint64_t>{});
  c.basis_mode = j.value("basis_mode", std::string("recompute")) == "estimate" ? BasisMode::PerturbationEstimate
                                                                               : BasisMode::Recompute;
}

/// Loads a dataset and keeps its largest connected component.
inline Graph load_dataset(const std::string& source, FeatureFormat format = FeatureFormat::Sparse,
                          bool row_normalize = false) {
  Graph raw;
  if (source.rfind("synth:", 0) == 0) {
    std::string rest = source.substr(6);
    std::uint64_t seed = 0;
    if (auto colon = rest.find(':'); colon != std::string::npos) {
      seed = std::stoull(rest.substr(colon + 1));
      rest = rest.substr(0, colon);
    }
    raw = make_synthetic(synthetic_preset(rest), seed);
  } else {
    const std::filesystem::path dir(source);
    if (!std::filesystem::is_directory(dir)) throw Error("dataset directory not found: " + source);
    auto feats = dir / (format == FeatureFormat::Dense ? "features.csv" : "features.txt");
    if (!std::filesystem::exists(feats)) feats = dir / "features.txt";
    raw = load_graph(dir / "edges.txt", feats, dir / "labels.txt", format);
  }
  Graph g = largest_connected_component(raw);
  return row_normalize ? row_normalize_features(g) : g;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
  std::size_t n = 0;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd m;
  m.n = xs.size();
  if (xs.empty()) return m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return m;
}

/// Everything one seed of an experiment produces.
struct SeedRun {
  std::uint64_t seed = 0;
  Split split;
  TrainResult trained;
  Index rank = 0;  // 0 for exact-Â victims
  double clean_acc = 0.0;
  double epoch_ms = 0.0;
  std::optional<double> attacked_acc;
  std::optional<double> control_acc;
  std::vector<AttackResult> attack_results;
};

/// Per-run settings derived from the master seed.
inline SatConfig seeded_train_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  SatConfig t = cfg.train;
  t.seed = seed;
  return t;
}

inline Split seeded_split(const Graph& g, std::uint64_t seed) { return random_split(g, derive_seed(seed, "split")); }

/// Trains the configured model for one seed and scores it on the test nodes.
inline SeedRun train_seed(const Graph& g, const ExperimentConfig& cfg, std::uint64_t seed,
                          const EigenBasis* basis = nullptr) {
  SeedRun run;
  run.seed = seed;
  run.split = seeded_split(g, seed);
  const SatConfig t = seeded_train_config(cfg, seed);
  if (cfg.sat) {
    EigenBasis own;
    if (!basis) {
      own = graph_eigenbasis(g, t.r);
      basis = &own;
    }
    run.trained = train_sat(g, run.split, t, *basis);
    run.rank = t.r;
    run.clean_acc = accuracy(forward(run.trained.params, *basis, g.features()).probs, g.labels(), run.split.test);
  } else {
    run.trained = train_standard(g, run.split, t);
    run.clean_acc =
        accuracy(forward(run.trained.params, normalize(g), g.features()).probs, g.labels(), run.split.test);
  }
  double ms = 0.0;
  for (const auto& r : run.trained.history) ms += r.ms;
  run.epoch_ms = run.trained.history.empty() ? 0.0 : ms / static_cast<double>(run.trained.history.size());
  return run;
}

/// Surrogate used by the gradient attack: standard two-layer GCN trained on
/// the clean graph with its own sub-seed.
inline ModelParams train_surrogate(const Graph& g, const Split& split, std::uint64_t seed) {
  SatConfig s = standard_defaults(ModelKind::GCN);
  s.seed = derive_seed(seed, "surrogate");
  return train_standard(g, split, s).params;
}

struct AttackPlan {
  std::vector<Index> targets;
  std::vector<std::vector<NodePair>> flips;
};

inline AttackPlan plan_attacks(const Graph& g, const Split& split, AttackKind kind, std::size_t count,
                               std::uint64_t seed, const ModelParams* surrogate) {
  AttackPlan plan;
  plan.targets = select_targets(split, count, derive_seed(seed, "targets"));
  for (Index t : plan.targets) {
    const auto budget = degree_budget(g, t);
    switch (kind) {
      case AttackKind::None: plan.flips.emplace_back(); break;
      case AttackKind::Random:
        plan.flips.push_back(random_flip_attack(g, t, budget.budget, derive_seed(seed, "random") ^ static_cast<std::uint64_t>(t)));
        break;
      case AttackKind::Gradient:
        if (!surrogate) throw InvalidArgument("gradient attack needs a surrogate");
        plan.flips.push_back(surrogate_gradient_attack(*surrogate, g, t, budget.budget));
        break;
    }
  }
  return plan;
}

/// Evaluates `run`'s model under the configured attack (and the random-flip
/// control when requested), filling the attacked accuracies.
inline void attack_seed(const Graph& g, const ExperimentConfig& cfg, SeedRun& run, const ModelParams* surrogate = nullptr,
                        const EigenBasis* clean_basis = nullptr) {
  if ((cfg.attack == AttackKind::None && !cfg.control) || cfg.targets == 0) return;
  std::optional<ModelParams> own_surrogate;
  if (cfg.attack == AttackKind::Gradient && !surrogate) {
    own_surrogate = train_surrogate(g, run.split, run.seed);
    surrogate = &*own_surrogate;
  }
  Victim victim(run.trained.params, run.rank, {}, cfg.basis_mode);
  if (clean_basis && run.rank > 0) victim.set_clean_basis(*clean_basis);
  if (cfg.attack != AttackKind::None) {
    auto plan = plan_attacks(g, run.split, cfg.attack, cfg.targets, run.seed, surrogate);
    auto rep = evaluate_robustness(victim, g, plan.targets, plan.flips, cfg.threads);
    run.attacked_acc = rep.accuracy;
    run.attack_results = std::move(rep.results);
  }
  if (cfg.control) {
    auto plan = plan_attacks(g, run.split, AttackKind::Random, cfg.targets, run.seed, nullptr);
    run.control_acc = evaluate_robustness(victim, g, plan.targets, plan.flips, cfg.threads).accuracy;
  }
}

struct RunReport {
  nlohmann::json config;
  std::string build_id = kBuildId;
  std::vector<std::uint64_t> seeds;
  std::vector<double> clean_acc;
  std::vector<double> attacked_acc;
  std::vector<double> control_acc;
  std::vector<double> epoch_ms;

  nlohmann::json to_json() const {
    auto summary = [](const std::vector<double>& xs) {
      if (xs.empty()) return nlohmann::json(nullptr);
      const auto m = mean_std(xs);
      return nlohmann::json{{"mean", m.mean}, {"std", m.std}, {"n", m.n}};
    };
    return nlohmann::json{{"config", config},
                          {"build_id", build_id},
                          {"seeds", seeds},
                          {"clean_acc", clean_acc},
                          {"attacked_acc", attacked_acc},
                          {"control_acc", control_acc},
                          {"epoch_ms", epoch_ms},
                          {"clean", summary(clean_acc)},
                          {"attacked", summary(attacked_acc)},
                          {"control", summary(control_acc)},
                          {"timing_ms_per_epoch", summary(epoch_ms)}};
  }

  static RunReport from_json(const nlohmann::json& j) {
    RunReport r;
    r.config = j.at("config");
    r.build_id = j.value("build_id", std::string("unknown"));
    r.seeds = j.value("seeds", std::vector<std::uint64_t>{});
    r.clean_acc = j.value("clean_acc", std::vector<double>{});
    r.attacked_acc = j.value("attacked_acc", std::vector<double>{});
    r.control_acc = j.value("control_acc", std::vector<double>{});
    r.epoch_ms = j.value("epoch_ms", std::vector<double>{});
    return r;
  }
};

inline void add_to_report(RunReport& rep, const SeedRun& run) {
  rep.seeds.push_back(run.seed);
  rep.clean_acc.push_back(run.clean_acc);
  rep.epoch_ms.push_back(run.epoch_ms);
  if (run.attacked_acc) rep.attacked_acc.push_back(*run.attacked_acc);
  if (run.control_acc) rep.control_acc.push_back(*run.control_acc);
}

/// Seed lists: "3", "0..9" (inclusive), "1,4,7" or mixtures such as "0..2,8".
inline std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> seeds;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = std::min(text.find(',', pos), text.size());
    const std::string_view item = detail::trim(text.substr(pos, comma - pos));
    if (item.empty()) throw InvalidArgument("empty entry in seed list '" + std::string(text) + "'");
    if (const auto dots = item.find(".."); dots != std::string_view::npos) {
      const auto lo = detail::parse_number<std::uint64_t>(item.substr(0, dots), "--seeds", 0);
      const auto hi = detail::parse_number<std::uint64_t>(item.substr(dots + 2), "--seeds", 0);
      if (hi < lo) throw InvalidArgument("descending seed range '" + std::string(item) + "'");
      for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    } else {
      seeds.push_back(detail::parse_number<std::uint64_t>(item, "--seeds", 0));
    }
    pos = comma + 1;
  }
  if (seeds.empty()) throw InvalidArgument("seed list is empty");
  return seeds;
}

// ---------------------------------------------------------------------------
// Sweeps.

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

/// Parses "rank=10,30,50;alpha=0,0.5" into axes.
inline std::vector<GridAxis> parse_grid(std::string_view text) {
  std::vector<GridAxis> axes;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto semi = std::min(text.find(';', pos), text.size());
    const std::string_view item = detail::trim(text.substr(pos, semi - pos));
    pos = semi + 1;
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw InvalidArgument("grid axis needs key=v1,v2: '" + std::string(item) + "'");
    GridAxis axis{std::string(detail::trim(item.substr(0, eq))), {}};
    std::string_view vals = item.substr(eq + 1);
    std::size_t vp = 0;
    while (vp <= vals.size()) {
      const auto comma = std::min(vals.find(',', vp), vals.size());
      const auto v = detail::trim(vals.substr(vp, comma - vp));
      if (v.empty()) throw InvalidArgument("empty value on grid axis '" + axis.key + "'");
      axis.values.emplace_back(v);
      vp = comma + 1;
    }
    axes.push_back(std::move(axis));
  }
  return axes;
}

using GridPoint = std::vector<std::pair<std::string, std::string>>;

/// Cartesian product of all axes, or one axis at a time around the base
/// configuration (each axis value becomes its own point).
inline std::vector<GridPoint> expand_grid(const std::vector<GridAxis>& axes, bool cartesian) {
  std::vector<GridPoint> points;
  if (axes.empty()) return {GridPoint{}};
  if (!cartesian) {
    for (const auto& a : axes)
      for (const auto& v : a.values) points.push_back({{a.key, v}});
    return points;
  }
  points.push_back({});
  for (const auto& a : axes) {
    std::vector<GridPoint> next;
    for (const auto& p : points)
      for (const auto& v : a.values) {
        auto q = p;
        q.emplace_back(a.key, v);
        next.push_back(std::move(q));
      }
    points = std::move(next);
  }
  return points;
}

inline std::string point_id(const GridPoint& p) {
  if (p.empty()) return "base";
  std::string id;
  for (const auto& [k, v] : p) id += (id.empty() ? "" : "_") + k + "=" + v;
  return id;
}

/// Applies one grid coordinate to a configuration.
inline void apply_grid_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  auto num = [&] { return detail::parse_number<double>(value, "--grid " + key, 0); };
  auto integer = [&] { return detail::parse_number<int>(value, "--grid " + key, 0); };
  if (key == "rank" || key == "r") cfg.train.r = integer();
  else if (key == "eps1") cfg.train.eps1 = num();
  else if (key == "eps2") cfg.train.eps2 = num();
  else if (key == "eps") cfg.train.eps1 = cfg.train.eps2 = num();
  else if (key == "alpha") cfg.train.alpha = num();
  else if (key == "beta") cfg.train.beta = num();
  else if (key == "epochs") cfg.train.epochs = integer();
  else if (key == "lr") cfg.train.lr = num();
  else if (key == "K") cfg.train.K = integer();
  else if (key == "a") cfg.train.a = num();
  else if (key == "gamma") cfg.train.gamma = num();
  else if (key == "model") {
    const auto kind = parse_model_kind(value);
    cfg.train = cfg.sat ? sat_defaults(kind) : standard_defaults(kind);
  } else throw InvalidArgument("unknown grid key '" + key + "'");
}

/// Runs `tasks` on up to `jobs` threads; the first exception is rethrown
/// after all workers stop.
inline void run_pool(std::size_t jobs, std::vector<std::function<void()>> tasks) {
  jobs = std::max<std::size_t>(1, std::min(jobs, tasks.size()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        tasks[i]();
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next = tasks.size();
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Consolidated tables.

/// One aggregated cell of a dataset x method table.
struct TableCell {
  std::string dataset;
  std::string method;
  std::string metric;  // "clean", "attacked" or "control"
  MeanStd value;
};

struct ReportTable {
  std::vector<TableCell> cells;
};

/// Dataset label used in tables: the directory name or the synthetic preset.
inline std::string dataset_label(const std::string& source) {
  if (source.rfind("synth:", 0) == 0) return source;
  auto p = std::filesystem::path(source);
  if (!p.has_filename()) p = p.parent_path();
  return p.filename().string();
}

/// Groups reports by (dataset, method). Reports landing in the same cell must
/// share their resolved configuration apart from the seed list; otherwise the
/// conflicting fields are listed in the thrown error.
inline ReportTable aggregate_reports(const std::vector<RunReport>& reports) {
  struct Group {
    nlohmann::json config;
    std::vector<double> clean, attacked, control;
  };
  std::map<std::pair<std::string, std::string>, Group> groups;
  std::vector<std::string> conflicts;
  for (const auto& r : reports) {
    const auto cfg = r.config.get<ExperimentConfig>();
    const auto key = std::make_pair(dataset_label(cfg.dataset), cfg.method_name());
    nlohmann::json norm = r.config;
    norm.erase("seeds");
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) {
      it->second.config = norm;
    } else if (it->second.config != norm) {
      const auto patch = nlohmann::json::diff(it->second.config, norm);
      std::string fields;
      for (const auto& op : patch) fields += (fields.empty() ? "" : ", ") + op.at("path").get<std::string>();
      conflicts.push_back(key.first + "/" + key.second + ": " + fields);
    }
    auto& g = it->second;
    g.clean.insert(g.clean.end(), r.clean_acc.begin(), r.clean_acc.end());
    g.attacked.insert(g.attacked.end(), r.attacked_acc.begin(), r.attacked_acc.end());
    g.control.insert(g.control.end(), r.control_acc.begin(), r.control_acc.end());
  }
  if (!conflicts.empty()) {
    std::string msg = "conflicting configurations in one table cell:";
    for (const auto& c : conflicts) msg += "\n  " + c;
    throw InvalidArgument(msg);
  }
  ReportTable t;
  for (const auto& [key, g] : groups) {
    if (!g.clean.empty()) t.cells.push_back({key.first, key.second, "clean", mean_std(g.clean)});
    if (!g.attacked.empty()) t.cells.push_back({key.first, key.second, "attacked", mean_std(g.attacked)});
    if (!g.control.empty()) t.cells.push_back({key.first, key.second, "control", mean_std(g.control)});
  }
  return t;
}

inline constexpr const char* kTableCsvHeader = "dataset,method,metric,mean,std,n";

inline std::string table_to_csv(const ReportTable& t) {
  std::ostringstream out;
  out << kTableCsvHeader << '\n';
  out << std::setprecision(17);
  for (const auto& c : t.cells)
    out << c.dataset << ',' << c.method << ',' << c.metric << ',' << c.value.mean << ',' << c.value.std << ','
        << c.value.n << '\n';
  return out.str();
}

inline ReportTable table_from_csv(const std::string& text) {
  ReportTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (detail::trim(line) != kTableCsvHeader) throw ParseError("<csv>", 1, "unexpected header");
      continue;
    }
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 6) throw ParseError("<csv>", lineno, "expected 6 fields");
    TableCell c{f[0], f[1], f[2], {}};
    c.value.mean = detail::parse_number<double>(f[3], "<csv>", lineno);
    c.value.std = detail::parse_number<double>(f[4], "<csv>", lineno);
    c.value.n = detail::parse_number<std::size_t>(f[5], "<csv>", lineno);
    t.cells.push_back(std::move(c));
  }
  return t;
}

namespace detail {
/// Left-aligns `s` in `width` display columns (UTF-8 aware).
inline std::string pad(const std::string& s, std::size_t width) {
  std::size_t cols = 0;
  for (unsigned char ch : s) cols += (ch & 0xC0) != 0x80;
  return cols >= width ? s + ' ' : s + std::string(width - cols, ' ');
}
}  // namespace detail

/// Aligned text, one block per metric: rows are methods, columns datasets,
/// cells "mean±std" in percent; the best mean per column is marked with '*'.
inline std::string table_to_text(const ReportTable& t) {
  std::ostringstream out;
  for (const std::string metric : {"clean", "attacked", "control"}) {
    std::vector<std::string> datasets, methods;
    std::map<std::pair<std::string, std::string>, MeanStd> cell;
    for (const auto& c : t.cells) {
      if (c.metric != metric) continue;
      if (std::find(datasets.begin(), datasets.end(), c.dataset) == datasets.end()) datasets.push_back(c.dataset);
      if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
      cell[{c.method, c.dataset}] = c.value;
    }
    if (methods.empty()) continue;
    std::map<std::string, double> best;
    for (const auto& [k, v] : cell) best[k.second] = std::max(best.count(k.second) ? best[k.second] : -1.0, v.mean);
    out << "[" << metric << " accuracy %]\n" << detail::pad("method", 12);
    for (const auto& d : datasets) out << detail::pad(d, 18);
    out << '\n';
    for (const auto& m : methods) {
      out << detail::pad(m, 12);
      for (const auto& d : datasets) {
        auto it = cell.find({m, d});
        std::ostringstream v;
        if (it != cell.end()) {
          v << std::fixed << std::setprecision(1) << 100 * it->second.mean << "±" << 100 * it->second.std;
          if (it->second.mean == best[d]) v << '*';
        } else {
          v << '-';
        }
        out << detail::pad(v.str(), 18);
      }
      out << '\n';
    }
    out << '\n';
  }
  return out.str();
}

/// One row per report for ablation curves: the swept hyperparameters next to
/// the clean and attacked summaries. No conflict check, rows are independent.
inline std::string curves_to_csv(const std::vector<RunReport>& reports) {
  std::ostringstream out;
  out << "dataset,method,rank,eps1,eps2,alpha,beta,clean_mean,clean_std,attacked_mean,attacked_std,n\n";
  out << std::setprecision(17);
  for (const auto& r : reports) {
    const auto cfg = r.config.get<ExperimentConfig>();
    const auto clean = mean_std(r.clean_acc);
    const auto atk = mean_std(r.attacked_acc);
    out << dataset_label(cfg.dataset) << ',' << cfg.method_name() << ',' << (cfg.sat ? cfg.train.r : 0) << ','
        << cfg.train.eps1 << ',' << cfg.train.eps2 << ',' << cfg.train.alpha << ',' << cfg.train.beta << ','
        << clean.mean << ',' << clean.std << ',';
    if (atk.n > 0) out << atk.mean << ',' << atk.std;
    else out << ',';
    out << ',' << clean.n << '\n';
  }
  return out.str();
}

}  // namespace sat
