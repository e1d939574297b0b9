#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <filesystem>

#include "sat/experiment.hpp"
#include "test_util.hpp"

namespace {

using sat::ExperimentConfig;
using sat::ModelKind;

sat::RunReport fake_report(const std::string& dataset, bool sat_on, std::vector<double> clean,
                           std::vector<double> attacked = {}) {
  ExperimentConfig c;
  c.dataset = dataset;
  c.sat = sat_on;
  c.train = sat_on ? sat::sat_defaults(ModelKind::GCN) : sat::standard_defaults(ModelKind::GCN);
  sat::RunReport r;
  c.seeds.clear();
  for (std::size_t i = 0; i < clean.size(); ++i) c.seeds.push_back(i);
  r.config = c;
  r.seeds = c.seeds;
  r.clean_acc = std::move(clean);
  r.attacked_acc = std::move(attacked);
  return r;
}

TEST(MeanStd, SampleDeviation) {
  auto m = sat::mean_std({1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.std, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(m.n, 4u);
  auto one = sat::mean_std({0.7});
  EXPECT_DOUBLE_EQ(one.mean, 0.7);
  EXPECT_EQ(one.std, 0.0);
  EXPECT_EQ(sat::mean_std({}).n, 0u);
}

TEST(SeedList, RangesAndLists) {
  EXPECT_EQ(sat::parse_seed_list("0..9").size(), 10u);
  EXPECT_EQ(sat::parse_seed_list("1,3"), (std::vector<std::uint64_t>{1, 3}));
  EXPECT_EQ(sat::parse_seed_list("0..2, 8"), (std::vector<std::uint64_t>{0, 1, 2, 8}));
  EXPECT_EQ(sat::parse_seed_list("4"), (std::vector<std::uint64_t>{4}));
  EXPECT_THROW(sat::parse_seed_list(""), sat::Error);
  EXPECT_THROW(sat::parse_seed_list("3..1"), sat::Error);
  EXPECT_THROW(sat::parse_seed_list("1,,2"), sat::Error);
  EXPECT_THROW(sat::parse_seed_list("x"), sat::Error);
}

TEST(Grid, ParseExpandApply) {
  auto axes = sat::parse_grid("rank=10,30,50;alpha=0, 0.5");
  ASSERT_EQ(axes.size(), 2u);
  EXPECT_EQ(axes[0].key, "rank");
  EXPECT_EQ(axes[1].values, (std::vector<std::string>{"0", "0.5"}));
  EXPECT_EQ(sat::expand_grid(axes, false).size(), 5u);
  auto cart = sat::expand_grid(axes, true);
  ASSERT_EQ(cart.size(), 6u);
  EXPECT_EQ(sat::point_id(cart[1]), "rank=10_alpha=0.5");
  EXPECT_EQ(sat::expand_grid({}, true).size(), 1u);
  EXPECT_EQ(sat::point_id({}), "base");
  EXPECT_THROW(sat::parse_grid("rank"), sat::InvalidArgument);
  EXPECT_THROW(sat::parse_grid("rank=1,"), sat::InvalidArgument);

  ExperimentConfig c;
  sat::apply_grid_value(c, "rank", "90");
  sat::apply_grid_value(c, "eps", "0.2");
  sat::apply_grid_value(c, "beta", "0.1");
  EXPECT_EQ(c.train.r, 90);
  EXPECT_EQ(c.train.eps1, 0.2);
  EXPECT_EQ(c.train.eps2, 0.2);
  EXPECT_EQ(c.train.beta, 0.1);
  sat::apply_grid_value(c, "model", "sgc");
  EXPECT_EQ(c.train.model, ModelKind::SGC);
  EXPECT_EQ(c.train.lr, 0.2);
  EXPECT_THROW(sat::apply_grid_value(c, "depth", "3"), sat::InvalidArgument);
  EXPECT_THROW(sat::apply_grid_value(c, "rank", "ten"), sat::Error);
}

TEST(Config, JsonRoundTripAndMethodNames) {
  ExperimentConfig c;
  c.dataset = "synth:tiny:3";
  c.train = sat::sat_defaults(ModelKind::S2GC);
  c.attack = sat::AttackKind::Gradient;
  c.targets = 200;
  c.seeds = {0, 4};
  c.basis_mode = sat::BasisMode::PerturbationEstimate;
  const nlohmann::json j = c;
  auto back = j.get<ExperimentConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(c.method_name(), "s2gc-sat");
  c.train.alpha = c.train.beta = 0;
  EXPECT_EQ(c.method_name(), "s2gc-lowrank");
  c.sat = false;
  EXPECT_EQ(c.method_name(), "s2gc");
  EXPECT_THROW(sat::parse_attack_kind("pgd"), sat::InvalidArgument);
}

TEST(Report, HandAggregatesOverThreeReports) {
  std::vector<sat::RunReport> reports = {fake_report("data/cora", false, {0.80, 0.84}, {0.1, 0.2}),
                                         fake_report("data/cora", false, {0.82}, {0.3}),
                                         fake_report("data/cora", true, {0.9, 0.7, 0.8})};
  auto t = sat::aggregate_reports(reports);
  ASSERT_EQ(t.cells.size(), 3u);
  // Cells are ordered by (dataset, method), then metric.
  EXPECT_EQ(t.cells[0].method, "gcn");
  EXPECT_EQ(t.cells[0].metric, "clean");
  EXPECT_NEAR(t.cells[0].value.mean, 0.82, 1e-15);
  EXPECT_NEAR(t.cells[0].value.std, 0.02, 1e-15);
  EXPECT_EQ(t.cells[1].metric, "attacked");
  EXPECT_NEAR(t.cells[1].value.mean, 0.2, 1e-15);
  EXPECT_NEAR(t.cells[1].value.std, 0.1, 1e-15);
  EXPECT_EQ(t.cells[2].method, "gcn-sat");
  EXPECT_NEAR(t.cells[2].value.mean, 0.8, 1e-15);
  EXPECT_NEAR(t.cells[2].value.std, 0.1, 1e-15);
  EXPECT_EQ(t.cells[2].dataset, "cora");

  const auto text = sat::table_to_text(t);
  EXPECT_NE(text.find("82.0±2.0"), std::string::npos);
  EXPECT_NE(text.find("80.0±10.0"), std::string::npos);
  EXPECT_NE(text.find("82.0±2.0*"), std::string::npos);
}

TEST(Report, ConflictsAreListed) {
  auto a = fake_report("cora", true, {0.8});
  auto b = fake_report("cora", true, {0.9});
  b.config["train"]["eps1"] = 0.3;
  try {
    sat::aggregate_reports({a, b});
    FAIL() << "expected a conflict";
  } catch (const sat::InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("/train/eps1"), std::string::npos);
  }
}

TEST(Report, CsvRoundTripAndEmptyInput) {
  EXPECT_EQ(sat::table_to_csv(sat::aggregate_reports({})), std::string(sat::kTableCsvHeader) + "\n");
  auto t = sat::aggregate_reports({fake_report("citeseer", false, {0.7, 0.71, 0.69}, {0.1, 0.05, 0.0}),
                                   fake_report("cora", true, {0.123456789012345678, 0.9})});
  const auto csv = sat::table_to_csv(t);
  auto back = sat::table_from_csv(csv);
  ASSERT_EQ(back.cells.size(), t.cells.size());
  for (std::size_t i = 0; i < t.cells.size(); ++i) {
    EXPECT_EQ(back.cells[i].dataset, t.cells[i].dataset);
    EXPECT_EQ(back.cells[i].method, t.cells[i].method);
    EXPECT_EQ(back.cells[i].metric, t.cells[i].metric);
    EXPECT_EQ(back.cells[i].value.mean, t.cells[i].value.mean);
    EXPECT_EQ(back.cells[i].value.std, t.cells[i].value.std);
    EXPECT_EQ(back.cells[i].value.n, t.cells[i].value.n);
  }
  EXPECT_EQ(sat::table_to_csv(back), csv);
  EXPECT_THROW(sat::table_from_csv("a,b\n"), sat::ParseError);
}

TEST(Report, JsonRoundTripAndCurves) {
  auto r = fake_report("synth:cora", true, {0.8, 0.9}, {0.5, 0.6});
  r.epoch_ms = {1.5, 2.5};
  const auto j = r.to_json();
  EXPECT_NEAR(j.at("clean").at("mean").get<double>(), 0.85, 1e-15);
  EXPECT_EQ(j.at("control"), nullptr);
  EXPECT_EQ(j.at("build_id"), sat::kBuildId);
  auto back = sat::RunReport::from_json(j);
  EXPECT_EQ(back.to_json(), j);
  const auto curves = sat::curves_to_csv({r, fake_report("synth:cora", false, {0.7})});
  EXPECT_EQ(std::count(curves.begin(), curves.end(), '\n'), 3);
  EXPECT_NE(curves.find("synth:cora,gcn-sat,30,"), std::string::npos);
  EXPECT_NE(curves.find("synth:cora,gcn,0,"), std::string::npos);
}

TEST(Dataset, SyntheticAndDirectorySources) {
  auto g = sat::load_dataset("synth:tiny:2");
  EXPECT_EQ(sat::content_hash(g), sat::content_hash(sat::synthetic_dataset("tiny", 2)));
  const auto dir = std::filesystem::temp_directory_path() / "sat_dataset_test";
  std::filesystem::remove_all(dir);
  sat::save_graph(g, dir);
  EXPECT_EQ(sat::content_hash(sat::load_dataset(dir.string())), sat::content_hash(g));
  auto normed = sat::load_dataset(dir.string(), sat::FeatureFormat::Sparse, true);
  for (sat::Index i = 0; i < normed.num_nodes(); ++i) {
    const double s = normed.features().row(i).sum();
    if (s != 0.0) EXPECT_NEAR(s, 1.0, 1e-12);
  }
  std::filesystem::remove_all(dir);
  EXPECT_THROW(sat::load_dataset(dir.string()), sat::Error);
  EXPECT_THROW(sat::load_dataset("synth:nope"), sat::InvalidArgument);
  EXPECT_EQ(sat::dataset_label("/data/cora/"), "cora");
  EXPECT_EQ(sat::dataset_label("synth:cora"), "synth:cora");
}

TEST(SeedRuns, DeterministicTrainAndAttack) {
  auto g = sat::load_dataset("synth:tiny:1");
  ExperimentConfig c;
  c.dataset = "synth:tiny:1";
  c.train.r = 10;
  c.train.epochs = 20;
  c.attack = sat::AttackKind::Gradient;
  c.targets = 8;
  c.control = true;
  auto a = sat::train_seed(g, c, 3);
  auto b = sat::train_seed(g, c, 3);
  EXPECT_EQ(a.clean_acc, b.clean_acc);
  EXPECT_EQ(a.trained.params.weights[0], b.trained.params.weights[0]);
  EXPECT_EQ(a.rank, 10);
  EXPECT_EQ(a.trained.history.size(), 20u);
  sat::attack_seed(g, c, a);
  sat::attack_seed(g, c, b);
  ASSERT_TRUE(a.attacked_acc && a.control_acc);
  EXPECT_EQ(*a.attacked_acc, *b.attacked_acc);
  EXPECT_EQ(*a.control_acc, *b.control_acc);
  EXPECT_EQ(a.attack_results.size(), 8u);

  sat::RunReport rep;
  sat::add_to_report(rep, a);
  EXPECT_EQ(rep.attacked_acc.size(), 1u);
  EXPECT_EQ(rep.control_acc.size(), 1u);

  c.targets = 0;
  auto z = sat::train_seed(g, c, 3);
  sat::attack_seed(g, c, z);
  EXPECT_FALSE(z.attacked_acc);
  EXPECT_TRUE(z.attack_results.empty());

  c.sat = false;
  c.train = sat::standard_defaults(ModelKind::GCN);
  c.train.epochs = 10;
  auto s = sat::train_seed(g, c, 3);
  EXPECT_EQ(s.rank, 0);
  EXPECT_NE(sat::seeded_split(g, 3).train, sat::seeded_split(g, 4).train);
}

TEST(RunPool, RunsAllTasksAndRethrows) {
  std::atomic<int> count{0};
  std::vector<std::function<void()>> tasks(20, [&] { ++count; });
  sat::run_pool(4, tasks);
  EXPECT_EQ(count.load(), 20);
  tasks.push_back([] { throw sat::InvalidArgument("boom"); });
  EXPECT_THROW(sat::run_pool(3, tasks), sat::InvalidArgument);
  sat::run_pool(2, {});
}

}  // namespace
