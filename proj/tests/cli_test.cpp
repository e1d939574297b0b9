#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sat/experiment.hpp"

namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = -1;
  std::string out;
};

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("sat_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  Outcome run(const std::string& args) const {
    const auto log = root_ / "stdout.txt";
    const std::string cmd = std::string(SAT_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    Outcome o;
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.out = slurp(log);
    return o;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  std::string dir(const std::string& name) const { return (root_ / name).string(); }

  fs::path root_;
};

constexpr const char* kData = "--dataset synth:tiny:1";
constexpr const char* kQuickSat = "--model sgc --sat --rank 8 --epochs 15";

TEST_F(Cli, PrepareIsReproducible) {
  ASSERT_EQ(run(std::string("prepare ") + kData + " --seeds 0..2 --out " + dir("a")).code, 0);
  ASSERT_EQ(run(std::string("prepare ") + kData + " --seeds 0..2 --out " + dir("b")).code, 0);
  const auto a = nlohmann::json::parse(slurp(root_ / "a" / "manifest.json"));
  const auto b = nlohmann::json::parse(slurp(root_ / "b" / "manifest.json"));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.at("splits").size(), 3u);
  EXPECT_EQ(slurp(root_ / "a" / "graph" / "edges.txt"), slurp(root_ / "b" / "graph" / "edges.txt"));

  // A prepared directory is itself a dataset with the same content hash.
  ASSERT_EQ(run("prepare --dataset " + dir("a/graph") + " --seeds 0 --out " + dir("c")).code, 0);
  const auto c = nlohmann::json::parse(slurp(root_ / "c" / "manifest.json"));
  EXPECT_EQ(c.at("graph_hash"), a.at("graph_hash"));
  EXPECT_EQ(c.at("input_hashes").size(), 3u);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("prepare --dataset " + dir("missing") + " --out " + dir("x")).code, 2);
  EXPECT_EQ(run(std::string("train ") + kData + " --rank 5 --out " + dir("x")).code, 2);
  EXPECT_EQ(run(std::string("train ") + kData + " --model gat --out " + dir("x")).code, 2);
  EXPECT_EQ(run(std::string("train ") + kData + " --seeds 3..1 --out " + dir("x")).code, 2);
  EXPECT_EQ(run("train --out " + dir("x")).code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("train --help").code, 0);
}

TEST_F(Cli, AttackWithoutCheckpointExitsTwo) {
  auto o = run(std::string("attack ") + kData + " --seeds 0 --out " + dir("empty"));
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.out.find("missing checkpoint"), std::string::npos);
}

TEST_F(Cli, NonFiniteTrainingExitsThree) {
  EXPECT_EQ(run(std::string("train ") + kData + " --model sgc --lr 1e250 --epochs 5 --seeds 0 --out " + dir("nan")).code, 3);
}

TEST_F(Cli, RepeatedSeedGivesIdenticalCheckpoint) {
  const std::string args = std::string("train ") + kData + " " + kQuickSat + " --seeds 2 --out ";
  ASSERT_EQ(run(args + dir("a")).code, 0);
  ASSERT_EQ(run(args + dir("b")).code, 0);
  const auto a = slurp(root_ / "a" / "model_seed2.bin");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(root_ / "b" / "model_seed2.bin"));
  const auto hist = slurp(root_ / "a" / "history_seed2.jsonl");
  EXPECT_EQ(std::count(hist.begin(), hist.end(), '\n'), 15);
}

TEST_F(Cli, TrainThenAttack) {
  ASSERT_EQ(run(std::string("train ") + kData + " " + kQuickSat + " --seeds 0,1 --out " + dir("run")).code, 0);
  auto o = run(std::string("attack ") + kData + " --seeds 0,1 --targets 6 --control --out " + dir("run"));
  ASSERT_EQ(o.code, 0) << o.out;
  const auto rep = nlohmann::json::parse(slurp(root_ / "run" / "report.json"));
  EXPECT_EQ(rep.at("attacked_acc").size(), 2u);
  EXPECT_EQ(rep.at("control_acc").size(), 2u);
  EXPECT_EQ(rep.at("config").at("train").at("r"), 8);
  EXPECT_EQ(rep.at("build_id"), sat::kBuildId);
  const auto stream = slurp(root_ / "run" / "attacks_seed1.jsonl");
  EXPECT_EQ(std::count(stream.begin(), stream.end(), '\n'), 6);
  const auto first = nlohmann::json::parse(stream.substr(0, stream.find('\n')));
  for (const char* key : {"target", "flips", "clean_pred", "attacked_pred", "true_label", "success"})
    EXPECT_TRUE(first.contains(key)) << key;
}

TEST_F(Cli, ZeroTargetsGivesEmptyResult) {
  ASSERT_EQ(run(std::string("train ") + kData + " --epochs 5 --seeds 0 --out " + dir("run")).code, 0);
  ASSERT_EQ(run(std::string("attack ") + kData + " --seeds 0 --targets 0 --out " + dir("run")).code, 0);
  EXPECT_EQ(slurp(root_ / "run" / "attacks_seed0.jsonl"), "");
  const auto rep = nlohmann::json::parse(slurp(root_ / "run" / "report.json"));
  EXPECT_TRUE(rep.at("attacked_acc").empty());
  EXPECT_EQ(rep.at("attacked"), nullptr);
}

TEST_F(Cli, SweepResumesOnlyMissingPoints) {
  const std::string args =
      std::string("sweep ") + kData + " " + kQuickSat + " --seeds 0 --jobs 2 --grid \"rank=5,8;beta=0\" --out " + dir("sw");
  auto first = run(args);
  ASSERT_EQ(first.code, 0) << first.out;
  EXPECT_NE(first.out.find("3 points, 3 run"), std::string::npos) << first.out;
  for (const char* id : {"rank=5", "rank=8", "beta=0"}) EXPECT_TRUE(fs::exists(root_ / "sw" / id / "report.json"));
  fs::remove(root_ / "sw" / "rank=8" / "report.json");
  auto second = run(args);
  ASSERT_EQ(second.code, 0);
  EXPECT_NE(second.out.find("3 points, 1 run"), std::string::npos) << second.out;
  EXPECT_TRUE(fs::exists(root_ / "sw" / "rank=8" / "report.json"));

  auto curves = run("report --curves " + dir("sw"));
  ASSERT_EQ(curves.code, 0);
  EXPECT_EQ(std::count(curves.out.begin(), curves.out.end(), '\n'), 4);
  // beta=0 alone keeps the eigenvector term, so every point is still a SAT run.
  EXPECT_NE(curves.out.find("sgc-sat"), std::string::npos);
  EXPECT_EQ(curves.out.find("sgc-lowrank"), std::string::npos);
}

TEST_F(Cli, ReportOnEmptyInputIsHeaderOnly) {
  fs::create_directories(root_ / "nothing");
  auto o = run("report " + dir("nothing") + " --out " + dir("tbl"));
  ASSERT_EQ(o.code, 0);
  EXPECT_EQ(o.out, std::string(sat::kTableCsvHeader) + "\n");
  EXPECT_EQ(slurp(root_ / "tbl" / "table.csv"), std::string(sat::kTableCsvHeader) + "\n");
  EXPECT_EQ(run("report " + dir("nope")).code, 2);
}

TEST_F(Cli, ReportTableRoundTrips) {
  ASSERT_EQ(run(std::string("train ") + kData + " --model sgc --epochs 10 --seeds 0..2 --out " + dir("std")).code, 0);
  ASSERT_EQ(run(std::string("attack ") + kData + " --seeds 0..2 --targets 5 --attack random --out " + dir("std")).code, 0);
  ASSERT_EQ(run(std::string("train ") + kData + " " + kQuickSat + " --seeds 0..2 --out " + dir("sat")).code, 0);
  ASSERT_EQ(run(std::string("attack ") + kData + " --seeds 0..2 --targets 5 --attack random --out " + dir("sat")).code, 0);
  auto o = run("report " + dir("std") + " " + dir("sat") + " --out " + dir("tbl"));
  ASSERT_EQ(o.code, 0) << o.out;
  const auto csv = slurp(root_ / "tbl" / "table.csv");
  const auto table = sat::table_from_csv(csv);
  ASSERT_EQ(table.cells.size(), 4u);
  EXPECT_EQ(sat::table_to_csv(table), csv);
  // The aggregates match the per-seed values in the report files.
  const auto rep = sat::RunReport::from_json(nlohmann::json::parse(slurp(root_ / "std" / "report.json")));
  const auto m = sat::mean_std(rep.clean_acc);
  EXPECT_EQ(table.cells[0].method, "sgc");
  EXPECT_EQ(table.cells[0].value.mean, m.mean);
  EXPECT_EQ(table.cells[0].value.n, 3u);
  EXPECT_NE(slurp(root_ / "tbl" / "table.txt").find("sgc-sat"), std::string::npos);

  // Same cell, different configuration: refused with the differing field.
  ASSERT_EQ(run(std::string("train ") + kData + " --model sgc --sat --rank 6 --epochs 15 --seeds 0 --out " + dir("sat6")).code, 0);
  ASSERT_EQ(run(std::string("attack ") + kData + " --seeds 0 --targets 5 --attack random --out " + dir("sat6")).code, 0);
  auto bad = run("report " + dir("sat") + " " + dir("sat6"));
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.out.find("/train/r"), std::string::npos) << bad.out;
}

TEST_F(Cli, CacheDirFromEnvironment) {
  const auto cache = root_ / "cache";
  const std::string cmd = "SAT_CACHE_DIR=" + cache.string() + " " + SAT_CLI_PATH + " train " + kData + " " +
                          kQuickSat + " --seeds 0 --out " + dir("run") + " > /dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_FALSE(fs::is_empty(cache));
  EXPECT_FALSE(fs::exists(root_ / "run" / ".eigcache"));
}

}  // namespace
