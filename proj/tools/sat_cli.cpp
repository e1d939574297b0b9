// sat: prepare datasets, train (SAT or standard) models, attack them, run
// hyperparameter sweeps and consolidate reports.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "sat/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

class UsageError : public sat::Error {
public:
  using sat::Error::Error;
};

class NumericFailure : public sat::Error {
public:
  using sat::Error::Error;
};

struct Flags {
  std::string dataset;
  std::string feature_format = "sparse";
  bool row_normalize = false;
  std::string model = "gcn";
  bool sat = false;
  std::optional<int> rank, epochs, K, early_stop;
  std::optional<double> eps1, eps2, alpha, beta, lr, a, gamma;
  std::optional<std::uint64_t> seed;
  std::string seeds = "0..9";
  std::size_t targets = 1000;
  std::string attack = "gradient";
  bool control = false;
  std::string out = "runs";
  std::string basis = "recompute";
  unsigned threads = 1;
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  std::string grid;
  bool cartesian = false;
  std::vector<std::string> inputs;
  bool curves = false;
};

void add_data_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--dataset", f.dataset, "Dataset directory (edges.txt, features.txt, labels.txt) or synth:<preset>[:seed]")
      ->required();
  cmd->add_option("--features", f.feature_format, "Feature file format")->check(CLI::IsMember({"sparse", "dense"}));
  cmd->add_flag("--row-normalize", f.row_normalize, "Row-normalize features before training");
}

void add_model_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--model", f.model, "Backbone")->check(CLI::IsMember({"gcn", "sgc", "s2gc"}));
  cmd->add_flag("--sat", f.sat, "Spectral adversarial training on the rank-r basis (default: standard training on exact A)");
  cmd->add_option("--rank", f.rank, "Eigenbasis rank r")->check(CLI::PositiveNumber);
  cmd->add_option("--eps1", f.eps1, "Eigenvector perturbation norm")->check(CLI::NonNegativeNumber);
  cmd->add_option("--eps2", f.eps2, "Eigenvalue perturbation norm")->check(CLI::NonNegativeNumber);
  cmd->add_option("--alpha", f.alpha, "Eigenvector regularizer weight")->check(CLI::NonNegativeNumber);
  cmd->add_option("--beta", f.beta, "Eigenvalue regularizer weight")->check(CLI::NonNegativeNumber);
  cmd->add_option("--epochs", f.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
  cmd->add_option("--lr", f.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  cmd->add_option("--K", f.K, "Propagation steps for sgc / s2gc")->check(CLI::PositiveNumber);
  cmd->add_option("--a", f.a, "S2GC self weight")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--gamma", f.gamma, "L2 weight on the first layer")->check(CLI::NonNegativeNumber);
  cmd->add_option("--early-stop", f.early_stop, "Validation-accuracy patience")->check(CLI::PositiveNumber);
}

void add_seed_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--seed", f.seed, "Single master seed (overrides --seeds)");
  cmd->add_option("--seeds", f.seeds, "Seed list, e.g. 0..9 or 1,3,5");
}

void add_attack_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--targets", f.targets, "Target nodes per seed");
  cmd->add_option("--attack", f.attack, "Attack")->check(CLI::IsMember({"random", "gradient"}));
  cmd->add_flag("--control", f.control, "Also evaluate the random-flip control");
  cmd->add_option("--basis", f.basis, "Basis of spectral victims on attacked graphs")
      ->check(CLI::IsMember({"recompute", "estimate"}));
  cmd->add_option("--threads", f.threads, "Worker threads for per-target evaluation")->check(CLI::PositiveNumber);
}

sat::ExperimentConfig build_config(const Flags& f) {
  sat::ExperimentConfig c;
  c.dataset = f.dataset;
  c.feature_format = f.feature_format == "dense" ? sat::FeatureFormat::Dense : sat::FeatureFormat::Sparse;
  c.row_normalize = f.row_normalize;
  c.sat = f.sat;
  const auto kind = sat::parse_model_kind(f.model);
  c.train = f.sat ? sat::sat_defaults(kind) : sat::standard_defaults(kind);
  if (f.rank) c.train.r = *f.rank;
  if (f.eps1) c.train.eps1 = *f.eps1;
  if (f.eps2) c.train.eps2 = *f.eps2;
  if (f.alpha) c.train.alpha = *f.alpha;
  if (f.beta) c.train.beta = *f.beta;
  if (f.epochs) c.train.epochs = *f.epochs;
  if (f.lr) c.train.lr = *f.lr;
  if (f.K) c.train.K = *f.K;
  if (f.a) c.train.a = *f.a;
  if (f.gamma) c.train.gamma = *f.gamma;
  if (f.early_stop) c.train.early_stop = *f.early_stop;
  c.seeds = f.seed ? std::vector<std::uint64_t>{*f.seed} : sat::parse_seed_list(f.seeds);
  c.attack = sat::parse_attack_kind(f.attack);
  c.targets = f.targets;
  c.control = f.control;
  c.out = f.out;
  c.threads = f.threads;
  c.basis_mode = f.basis == "estimate" ? sat::BasisMode::PerturbationEstimate : sat::BasisMode::Recompute;
  if (!c.sat && (f.rank || f.eps1 || f.eps2 || f.alpha || f.beta))
    throw UsageError("--rank/--eps1/--eps2/--alpha/--beta only apply with --sat");
  c.train.validate();
  return c;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw sat::Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

std::uint64_t file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  const auto s = buf.str();
  return sat::fnv1a(s);
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t index_hash(const std::vector<sat::Index>& idx) {
  std::string bytes(reinterpret_cast<const char*>(idx.data()), idx.size() * sizeof(sat::Index));
  return sat::fnv1a(bytes);
}

sat::Graph load(const sat::ExperimentConfig& c) {
  if (c.dataset.rfind("synth:", 0) != 0 && !fs::is_directory(c.dataset))
    throw UsageError("dataset directory not found: " + c.dataset);
  return sat::load_dataset(c.dataset, c.feature_format, c.row_normalize);
}

fs::path cache_dir(const sat::ExperimentConfig& c) { return sat::resolve_cache_dir(fs::path(c.out) / ".eigcache"); }

void check_finite(const sat::TrainResult& r, std::uint64_t seed) {
  for (const auto& e : r.history)
    if (!std::isfinite(e.loss)) throw NumericFailure("non-finite training loss at epoch " + std::to_string(e.epoch) +
                                                     " (seed " + std::to_string(seed) + ")");
}

// ---------------------------------------------------------------------------

int cmd_prepare(const Flags& f) {
  sat::ExperimentConfig c = build_config(f);
  const sat::Graph g = load(c);
  const fs::path out(f.out);
  sat::save_graph(g, out / "graph");

  json inputs = json::object();
  if (c.dataset.rfind("synth:", 0) != 0)
    for (const auto& entry : fs::directory_iterator(c.dataset))
      if (entry.is_regular_file()) inputs[entry.path().filename().string()] = hex(file_hash(entry.path()));

  json splits = json::array();
  for (auto seed : c.seeds) {
    const auto s = sat::seeded_split(g, seed);
    splits.push_back({{"seed", seed},
                      {"train", s.train.size()},
                      {"val", s.val.size()},
                      {"test", s.test.size()},
                      {"hash", hex(index_hash(s.train) ^ sat::mix64(index_hash(s.val)) ^
                                   sat::mix64(sat::mix64(index_hash(s.test))))}});
  }
  json manifest = {{"dataset", c.dataset},
                   {"build_id", sat::kBuildId},
                   {"row_normalize", c.row_normalize},
                   {"nodes", g.num_nodes()},
                   {"edges", g.num_edges()},
                   {"features", g.feature_dim()},
                   {"classes", g.num_classes()},
                   {"graph_hash", hex(sat::content_hash(g))},
                   {"input_hashes", inputs},
                   {"splits", splits}};
  write_json(out / "manifest.json", manifest);
  std::cout << "prepared " << c.dataset << ": n=" << g.num_nodes() << " m=" << g.num_edges()
            << " d=" << g.feature_dim() << " c=" << g.num_classes() << " hash=" << hex(sat::content_hash(g)) << '\n';
  return kExitOk;
}

/// Trains every seed of `c`, writing checkpoints, histories and a report into
/// `dir`. Returns the report.
sat::RunReport train_all(const sat::ExperimentConfig& c, const sat::Graph& g, const fs::path& dir) {
  std::optional<sat::EigenBasis> basis;
  if (c.sat) basis = sat::graph_eigenbasis(g, c.train.r, {}, cache_dir(c));
  sat::RunReport rep;
  json cfg = c;
  rep.config = cfg;
  write_json(dir / "config.json", cfg);
  for (auto seed : c.seeds) {
    auto run = sat::train_seed(g, c, seed, basis ? &*basis : nullptr);
    check_finite(run.trained, seed);
    sat::save_checkpoint({run.trained.params, run.rank}, dir / ("model_seed" + std::to_string(seed) + ".bin"));
    std::ofstream hist(dir / ("history_seed" + std::to_string(seed) + ".jsonl"));
    sat::write_history_jsonl(run.trained.history, hist);
    sat::add_to_report(rep, run);
    std::cout << c.method_name() << " seed " << seed << ": clean accuracy " << run.clean_acc << '\n';
  }
  write_json(dir / "train_report.json", rep.to_json());
  return rep;
}

int cmd_train(const Flags& f) {
  const auto c = build_config(f);
  const auto g = load(c);
  const auto rep = train_all(c, g, f.out);
  const auto m = sat::mean_std(rep.clean_acc);
  std::cout << "clean accuracy " << 100 * m.mean << " ± " << 100 * m.std << " over " << m.n << " seeds\n";
  return kExitOk;
}

/// Attacks the checkpoints in `dir`, writing per-seed result streams and
/// report.json. The model identity comes from the training config.
sat::RunReport attack_all(sat::ExperimentConfig c, const sat::Graph& g, const fs::path& dir) {
  if (fs::exists(dir / "config.json")) {
    const auto trained = read_json(dir / "config.json").get<sat::ExperimentConfig>();
    c.sat = trained.sat;
    c.train = trained.train;
    c.row_normalize = trained.row_normalize;
  }
  for (auto seed : c.seeds) {
    const auto ckpt = dir / ("model_seed" + std::to_string(seed) + ".bin");
    if (!fs::exists(ckpt)) throw UsageError("missing checkpoint " + ckpt.string() + " (run `sat train` first)");
  }
  std::optional<sat::EigenBasis> clean_basis;
  sat::RunReport rep;
  rep.config = c;
  for (auto seed : c.seeds) {
    const auto ckpt = sat::load_checkpoint(dir / ("model_seed" + std::to_string(seed) + ".bin"));
    sat::SeedRun run;
    run.seed = seed;
    run.split = sat::seeded_split(g, seed);
    run.trained.params = ckpt.params;
    run.rank = ckpt.rank;
    if (run.rank > 0 && !clean_basis) clean_basis = sat::graph_eigenbasis(g, run.rank, {}, cache_dir(c));
    const auto probs = run.rank > 0 ? sat::forward(ckpt.params, *clean_basis, g.features()).probs
                                    : sat::forward(ckpt.params, sat::normalize(g), g.features()).probs;
    run.clean_acc = sat::accuracy(probs, g.labels(), run.split.test);
    if (std::ifstream hist(dir / ("history_seed" + std::to_string(seed) + ".jsonl")); hist) {
      double ms = 0.0;
      std::size_t count = 0;
      for (std::string line; std::getline(hist, line);)
        if (!line.empty()) {
          ms += json::parse(line).value("ms", 0.0);
          ++count;
        }
      run.epoch_ms = count ? ms / static_cast<double>(count) : 0.0;
    }
    sat::attack_seed(g, c, run, nullptr, run.rank > 0 ? &*clean_basis : nullptr);
    std::ofstream stream(dir / ("attacks_seed" + std::to_string(seed) + ".jsonl"));
    for (const auto& r : run.attack_results) stream << json(r).dump() << '\n';
    sat::add_to_report(rep, run);
    std::cout << c.method_name() << " seed " << seed << ": clean " << run.clean_acc;
    if (run.attacked_acc) std::cout << " attacked " << *run.attacked_acc;
    if (run.control_acc) std::cout << " control " << *run.control_acc;
    std::cout << '\n';
  }
  write_json(dir / "report.json", rep.to_json());
  return rep;
}

int cmd_attack(const Flags& f) {
  auto c = build_config(f);
  const auto g = load(c);
  const auto rep = attack_all(c, g, f.out);
  if (!rep.attacked_acc.empty()) {
    const auto m = sat::mean_std(rep.attacked_acc);
    std::cout << "attacked accuracy " << 100 * m.mean << " ± " << 100 * m.std << " over " << m.n << " seeds\n";
  }
  return kExitOk;
}

int cmd_sweep(const Flags& f, bool attack_requested) {
  const auto base = build_config(f);
  const auto axes = sat::parse_grid(f.grid);
  const auto points = sat::expand_grid(axes, f.cartesian);
  const auto g = load(base);
  const fs::path root(f.out);
  const fs::path manifest_path = root / "sweep_manifest.json";

  json manifest = fs::exists(manifest_path) ? read_json(manifest_path) : json{{"points", json::object()}};
  std::vector<std::pair<std::string, sat::ExperimentConfig>> todo;
  for (const auto& p : points) {
    auto c = base;
    for (const auto& [k, v] : p) sat::apply_grid_value(c, k, v);
    c.train.validate();
    const auto id = sat::point_id(p);
    c.out = (root / id).string();
    const json resolved = c;
    const auto& done = manifest["points"];
    if (done.contains(id) && done[id].value("status", "") == "done" && done[id]["config"] == resolved &&
        fs::exists(root / id / "report.json")) {
      std::cout << "skip " << id << " (done)\n";
      continue;
    }
    manifest["points"][id] = {{"status", "pending"}, {"config", resolved}};
    todo.emplace_back(id, c);
  }
  write_json(manifest_path, manifest);

  std::mutex mu;
  std::vector<std::function<void()>> tasks;
  for (const auto& [id, c] : todo)
    tasks.push_back([&, id = id, c = c] {
      const fs::path dir = root / id;
      auto rep = train_all(c, g, dir);
      if (attack_requested || c.control) rep = attack_all(c, g, dir);
      else write_json(dir / "report.json", rep.to_json());
      std::lock_guard lock(mu);
      manifest["points"][id]["status"] = "done";
      write_json(manifest_path, manifest);
    });
  sat::run_pool(f.jobs, std::move(tasks));
  std::cout << points.size() << " points, " << todo.size() << " run\n";
  return kExitOk;
}

std::vector<sat::RunReport> collect_reports(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_regular_file(p)) {
      files.push_back(p);
    } else if (fs::is_directory(p)) {
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file() && e.path().filename() == "report.json") files.push_back(e.path());
    } else {
      throw UsageError("no such report or directory: " + in);
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<sat::RunReport> reports;
  for (const auto& file : files) reports.push_back(sat::RunReport::from_json(read_json(file)));
  return reports;
}

int cmd_report(const Flags& f, bool out_given) {
  const auto reports = collect_reports(f.inputs);
  if (f.curves) {
    // Sweep points differ in their configs by design, so no table here.
    const auto curves = sat::curves_to_csv(reports);
    if (out_given) {
      fs::create_directories(f.out);
      std::ofstream(fs::path(f.out) / "curves.csv") << curves;
    }
    std::cout << curves;
    return kExitOk;
  }
  const auto table = sat::aggregate_reports(reports);
  const auto csv = sat::table_to_csv(table);
  const auto text = sat::table_to_text(table);
  if (out_given) {
    fs::create_directories(f.out);
    std::ofstream(fs::path(f.out) / "table.csv") << csv;
    std::ofstream(fs::path(f.out) / "table.txt") << text;
  }
  std::cout << csv;
  if (!text.empty()) std::cout << '\n' << text;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral adversarial training for graph neural networks"};
  app.require_subcommand(1);
  Flags f;

  auto* prepare = app.add_subcommand("prepare", "Load a dataset, keep its largest component, write a manifest");
  add_data_flags(prepare, f);
  add_seed_flags(prepare, f);
  prepare->add_option("--out", f.out, "Output directory");

  auto* train = app.add_subcommand("train", "Train one model per seed and write checkpoints");
  add_data_flags(train, f);
  add_model_flags(train, f);
  add_seed_flags(train, f);
  train->add_option("--out", f.out, "Run directory");

  auto* attack = app.add_subcommand("attack", "Attack trained checkpoints and write a report");
  add_data_flags(attack, f);
  add_model_flags(attack, f);
  add_seed_flags(attack, f);
  add_attack_flags(attack, f);
  attack->add_option("--out", f.out, "Run directory holding the checkpoints");

  auto* sweep = app.add_subcommand("sweep", "Train (and optionally attack) every point of a grid");
  add_data_flags(sweep, f);
  add_model_flags(sweep, f);
  add_seed_flags(sweep, f);
  add_attack_flags(sweep, f);
  sweep->add_option("--grid", f.grid, "Axes, e.g. \"rank=10,30,50;alpha=0,0.5\"")->required();
  sweep->add_flag("--cartesian", f.cartesian, "Cartesian product instead of one axis at a time");
  sweep->add_option("--jobs", f.jobs, "Grid points run in parallel")->check(CLI::PositiveNumber);
  sweep->add_option("--out", f.out, "Sweep root directory");

  auto* report = app.add_subcommand("report", "Aggregate report.json files into tables");
  report->add_option("inputs", f.inputs, "Run directories or report files");
  report->add_flag("--curves", f.curves, "One CSV row per report (ablation curves) instead of the table");
  auto* report_out = report->add_option("--out", f.out, "Also write table.csv / table.txt (or curves.csv) here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*prepare) return cmd_prepare(f);
    if (*train) return cmd_train(f);
    if (*attack) return cmd_attack(f);
    if (*sweep) return cmd_sweep(f, sweep->count("--attack") > 0);
    if (*report) return cmd_report(f, report_out->count() > 0);
  } catch (const sat::ConvergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (!e.residuals().empty()) {
      std::cerr << "residuals:";
      for (double r : e.residuals()) std::cerr << ' ' << r;
      std::cerr << '\n';
    }
    return kExitNumeric;
  } catch (const NumericFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
