#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "segcurate/cli.hpp"
#include "segcurate/review.hpp"
#include "test_support.hpp"

namespace segcurate {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("segcurate_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& content) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << content;
    return p.string();
  }
  static std::string fixture() { return std::string(SEGCURATE_TEST_DATA) + "/fixture.jsonl"; }

  fs::path dir_;
};

TEST_F(Cli, GridLocalIsCompactAndOrdered) {
  EXPECT_EQ(cli({"grid", "local", "--h", "100", "--w", "300"}).out, "{\"R\":4,\"C\":1}\n");
  EXPECT_EQ(cli({"grid", "local", "--h", "100", "--w", "200"}).out, "{\"R\":4,\"C\":4}\n");
  const CliRun pts = cli({"grid", "local", "--h", "100", "--w", "300", "--x0", "0", "--y0", "0"});
  EXPECT_EQ(pts.code, 0);
  EXPECT_EQ(json::parse(pts.out)["points"].size(), 4u);
  const CliRun global = cli({"grid", "global", "--width", "800", "--height", "400"});
  EXPECT_EQ(json::parse(global.out)["points"].size(), 16u);
}

TEST_F(Cli, UsageErrorsExitTwoWithHelp) {
  const CliRun r = cli({"frobnicate"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  const CliRun missing = cli({"grid", "local", "--h", "5"});
  EXPECT_EQ(missing.code, kExitUsage);
  EXPECT_NE(missing.err.find("--w"), std::string::npos);
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST_F(Cli, DataErrorsExitOne) {
  EXPECT_EQ(cli({"grid", "local", "--h", "0", "--w", "5"}).code, kExitFindings);
  const std::string bad = write("bad.json", "{\"h\":2,\"w\":2,\"runs\":[1,2]}");
  const CliRun r = cli({"mask2bbox", "--mask", bad});
  EXPECT_EQ(r.code, kExitFindings);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST_F(Cli, ConfigFileSuppliesDefaults) {
  const std::string cfg = write("c.toml", "[grid.local]\nh = 100\nw = 300\n");
  EXPECT_EQ(cli({"--config", cfg, "grid", "local"}).out, "{\"R\":4,\"C\":1}\n");
  EXPECT_EQ(cli({"--config", cfg, "grid", "local", "--w", "200"}).out, "{\"R\":4,\"C\":4}\n");
  const std::string extra = write("x.toml", "[grid.local]\nh = 1\nw = 1\ndepth = 3\n");
  EXPECT_EQ(cli({"--config", extra, "grid", "local"}).code, kExitUsage);
}

TEST_F(Cli, StatsAndValidateOnFixture) {
  const CliRun s = cli({"stats", "--data", fixture()});
  ASSERT_EQ(s.code, 0) << s.err;
  const json j = json::parse(s.out);
  EXPECT_EQ(j["qa_count"], 3);
  EXPECT_EQ(j["mask_count"], 5);
  EXPECT_EQ(j["test_mask_count"], 2);
  EXPECT_EQ(j["rejected_records"], 0);
  EXPECT_EQ(cli({"stats", "--data", fixture()}).out, s.out);

  const CliRun v = cli({"validate", "--data", fixture(), "--split-check"});
  EXPECT_EQ(v.code, 0);
  EXPECT_EQ(json::parse(v.out)["ok"], true);

  std::ifstream in(fixture());
  std::string line;
  std::getline(in, line);
  const std::string dup = write("dup.jsonl", line + "\n" + line + "\n");
  const CliRun d = cli({"validate", "--data", dup});
  EXPECT_EQ(d.code, kExitFindings);
  EXPECT_EQ(json::parse(d.out)["issues"][0]["code"], "DuplicateId");
  EXPECT_EQ(cli({"stats", "--data", dup}).code, kExitFindings);
}

TEST_F(Cli, Mask2BboxAndComponents) {
  const std::string m = write("m.json", json(rle_encode(testing::ascii_mask({"#..#", "#..."}))).dump());
  EXPECT_EQ(cli({"mask2bbox", "--mask", m}).out, "{\"x_max\":3,\"x_min\":0,\"y_max\":1,\"y_min\":0}\n");
  const json comps = json::parse(cli({"mask2bbox", "--mask", m, "--components"}).out);
  EXPECT_EQ(comps["count"], 2);
  EXPECT_EQ(comps["components"][1]["bbox"], json::parse(R"({"x_max":3,"x_min":3,"y_max":0,"y_min":0})"));
}

TEST_F(Cli, FilterDeriveAndRun) {
  json gold = json::array();
  for (int i = 0; i < 4; ++i) gold.push_back({{"mask", rle_encode(testing::rect_mask(16, 16, i, i, 6, 6 + i % 2))}});
  const std::string gold_path = write("gold.json", gold.dump());
  const CliRun derived = cli({"filter", "derive-stats", "--gold", gold_path, "--category", "tank"});
  ASSERT_EQ(derived.code, 0) << derived.err;
  const std::string stats_path = write("stats.json", derived.out);

  std::string items;
  items += json{{"id", "ok"}, {"mask", rle_encode(testing::rect_mask(16, 16, 2, 2, 6, 6))}, {"category", "tank"}, {"bbox_count", 1}}.dump() + "\n";
  items += json{{"id", "bar"}, {"mask", rle_encode(testing::rect_mask(16, 16, 2, 0, 1, 16))}, {"category", "tank"}, {"bboxes", {{0, 2, 15, 2}}}}.dump() + "\n";
  const CliRun run = cli({"filter", "run", "--items", write("items.jsonl", items), "--stats", stats_path});
  ASSERT_EQ(run.code, 0) << run.err;
  std::istringstream lines(run.out);
  std::string first;
  std::string second;
  std::getline(lines, first);
  std::getline(lines, second);
  EXPECT_EQ(json::parse(first)["outcome"], "kept");
  EXPECT_EQ(json::parse(second)["outcome"], "dropped_by_range");
  EXPECT_EQ(json::parse(run.err)["kept"], 1);
}

TEST_F(Cli, LossEvalSingleAndBatch) {
  const json sample{{"attention", {{"shape", {1, 1, 2, 2}}, {"data", {0.7, 0.1, 0.1, 0.1}}}},
                    {"gt_grid", {{"shape", {2, 2}}, {"data", {1, 0, 0, 0}}}},
                    {"text_logits", {{"shape", {2, 4}}, {"data", std::vector<double>(8, 0.0)}}},
                    {"text_targets", {1, 3}},
                    {"mask_logits", {{"shape", {2, 2}}, {"data", {0.0, 0.0, 0.0, 0.0}}}},
                    {"mask_target", {{"h", 2}, {"w", 2}, {"runs", {0, 1, 3}}}}};
  const CliRun one = cli({"loss", "eval", "--input", write("s.json", sample.dump())});
  ASSERT_EQ(one.code, 0) << one.err;
  const json r = json::parse(one.out);
  EXPECT_NEAR(r["l_spatial"].get<double>(), -std::log(0.36), 1e-12);
  EXPECT_NEAR(r["l_text"].get<double>(), std::log(4.0), 1e-12);
  EXPECT_NEAR(r["l_bce"].get<double>(), std::log(2.0), 1e-12);
  EXPECT_EQ(r["spatial"]["skip"], "none");

  json degenerate = sample;
  degenerate["gt_grid"]["data"] = {1, 1, 1, 1};
  const CliRun batch = cli({"loss", "eval", "--input", write("b.json", json::array({sample, degenerate}).dump()),
                         "--lambda-s", "0.5"});
  ASSERT_EQ(batch.code, 0) << batch.err;
  const json b = json::parse(batch.out);
  EXPECT_EQ(b["samples"][1]["skipped_spatial"], true);
  EXPECT_NEAR(b["mean"]["l_spatial"].get<double>(), -std::log(0.36) / 2.0, 1e-12);
}

TEST_F(Cli, MatchAndSweep) {
  const json targets = json::array({rle_encode(testing::rect_mask(6, 6, 0, 0, 3, 3)),
                                    rle_encode(testing::rect_mask(6, 6, 3, 3, 3, 3))});
  const std::string t = write("t.json", targets.dump());
  const json cands = json::array({targets[1], targets[0], rle_encode(testing::rect_mask(6, 6, 0, 0, 6, 6))});
  const CliRun m = cli({"match", "--candidates", write("c.json", cands.dump()), "--targets", t});
  ASSERT_EQ(m.code, 0) << m.err;
  const json mj = json::parse(m.out);
  EXPECT_EQ(mj["cost_evaluations"], 6);
  EXPECT_EQ(mj["pairs"][0]["candidate"], 1);
  EXPECT_EQ(mj["pairs"][1]["candidate"], 0);

  const std::string single = write("single.json", json::array({targets[0]}).dump());
  const std::string csv = (dir_ / "s.csv").string();
  const CliRun s = cli({"sweep", "--targets", single, "--seed", "3", "--csv", csv});
  ASSERT_EQ(s.code, 0) << s.err;
  const json sj = json::parse(s.out);
  std::vector<int> counts;
  for (const auto& row : sj["rows"]) {
    counts.push_back(row["cost_evaluations"]);
    EXPECT_FALSE(row.contains("wall_ms"));
  }
  EXPECT_EQ(counts, (std::vector<int>{100, 75, 50, 25, 10, 3, 0}));
  EXPECT_EQ(cli({"sweep", "--targets", single, "--seed", "3"}).out, s.out);
  EXPECT_TRUE(fs::exists(csv));
}

TEST_F(Cli, EvalScoresUnionsAndFlagsMissingPredictions) {
  std::vector<std::string> lines;
  std::ifstream in(fixture());
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  std::string preds;
  for (std::size_t i = 0; i < 2; ++i) {
    const json rec = json::parse(lines[i]);
    preds += json{{"id", rec["id"]}, {"masks", rec["masks"]}}.dump() + "\n";
  }
  const std::string pred_path = write("p.jsonl", preds);
  const CliRun r = cli({"eval", "--data", fixture(), "--pred", pred_path});
  EXPECT_EQ(r.code, kExitFindings);
  EXPECT_NE(r.err.find("fx-003"), std::string::npos);
  const json j = json::parse(r.out);
  EXPECT_NEAR(j["overall"]["giou"].get<double>(), 2.0 / 3.0, 1e-12);
  const json rec = json::parse(lines[2]);
  const std::string all = write("all.jsonl", preds + json{{"id", rec["id"]}, {"masks", rec["masks"]}}.dump() + "\n");
  const CliRun full = cli({"eval", "--data", fixture(), "--pred", all, "--table"});
  EXPECT_EQ(full.code, 0);
  EXPECT_NE(full.out.find("100.00"), std::string::npos);
}

TEST_F(Cli, QaGenWithMockClient) {
  std::string reqs;
  reqs += R"({"id":"a","mode":"single_target","category":"ship","bboxes":[[1,1,4,4]],"image_path":"x.png"})" "\n";
  reqs += R"({"id":"b","mode":"single_target","bboxes":[[1,1,4,4]]})" "\n";
  const std::string review = (dir_ / "review.jsonl").string();
  const CliRun r = cli({"qa-gen", "--requests", write("r.jsonl", reqs), "--mock", "--review-out", review});
  EXPECT_EQ(r.code, kExitFindings);
  std::istringstream lines(r.out);
  std::string a;
  std::string b;
  std::getline(lines, a);
  std::getline(lines, b);
  EXPECT_EQ(json::parse(a)["status"], "ok");
  EXPECT_EQ(json::parse(b)["status"], "error");
  EXPECT_EQ(json::parse(r.err)["failed"], 1);
  EXPECT_EQ(cli({"qa-gen", "--requests", write("r2.jsonl", reqs)}).code, kExitFindings);
}

TEST_F(Cli, AuditAppendsToTheLog) {
  ReviewService s;
  const std::string log = (dir_ / "events.jsonl").string();
  s.attach_log(log);
  for (int i = 0; i < 4; ++i) {
    ReviewItem item;
    item.id = "i" + std::to_string(i);
    item.masks = {RleMask{1, 1, {0, 1}}};
    s.enqueue(item);
    s.next_item("r");
    ReviewDecision d;
    d.item_id = item.id;
    d.reviewer = "r";
    d.rubric = {true, true, true, true};
    d.verdict = Verdict::Accept;
    s.submit_decision(d);
  }
  const CliRun a = cli({"audit", "--log", log, "--fraction", "0.5", "--seed", "9"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(json::parse(a.out)["sampled"].size(), 2u);
  std::ifstream in(log);
  const auto replayed = ReviewService::replay(in);
  EXPECT_EQ(replayed->progress().pending, 2u);
  EXPECT_EQ(cli({"audit", "--log", log, "--fraction", "0"}).code, kExitFindings);
  EXPECT_EQ(cli({"audit", "--log", (dir_ / "none.jsonl").string(), "--fraction", "0.5"}).code,
            kExitFindings);
}

}  // namespace
}  // namespace segcurate
