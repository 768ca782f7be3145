// Standalone acceptance run: one PASS/FAIL line per criterion, nonzero exit
// when any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "loss_oracle.hpp"
#include "match_oracle.hpp"
#include "review_sim.hpp"
#include "segcurate/curation.hpp"
#include "segcurate/dataset.hpp"
#include "segcurate/geometry.hpp"
#include "segcurate/kernels.hpp"
#include "segcurate/losses.hpp"
#include "segcurate/metrics.hpp"
#include "segcurate/query_match.hpp"
#include "segcurate/review.hpp"
#include "test_support.hpp"

namespace {

using namespace segcurate;
using Clock = std::chrono::steady_clock;

// Pinned tolerances.
constexpr double kHandExampleTol = 1e-6;
constexpr double kGradientRelTol = 1e-4;
constexpr double kFdStep = 1e-5;
constexpr double kGradientBudgetSeconds = 10.0;
constexpr double kShiftScaleTol = 1e-9;
constexpr double kDescriptorTol = 1e-9;
constexpr double kCiouTol = 1e-12;
constexpr double kReviewBudgetSeconds = 30.0;
constexpr double kStage2KSigma = 2.0;

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const char* name, const std::function<Verdict()>& check) {
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  if (!v.pass) ++failures;
  std::printf("%s  %-28s %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Verdict spatial_hand_example() {
  const AttentionStack stack(1, 1, 2, {0.7, 0.1, 0.1, 0.1});
  const GroundTruthGrid g{2, {1, 0, 0, 0}};
  const SpatialLoss l = spatial_attention_loss(stack, g);
  const double oracle = testing::spatial_loss_oracle({0.7, 0.1, 0.1, 0.1}, g.cells);
  const double err = std::max({std::abs(l.value - oracle), std::abs(l.value + std::log(0.36)),
                               std::abs(l.background_mean - 0.1)});
  return {err <= kHandExampleTol,
          fmt("a=%.12f L_S=%.12f max_err=%.2e tol=1e-6", l.background_mean, l.value, err)};
}

Verdict gradient_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240611);
  double worst_ls = 0.0;
  double worst_bce = 0.0;
  double worst_dice = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto inst = testing::random_spatial_instance(rng, 2, 4, 24);
    const AttentionStack stack(inst.blocks, inst.heads, inst.d, inst.values);
    const SpatialLoss l = spatial_attention_loss(stack, GroundTruthGrid{inst.d, inst.grid});
    const auto fd = testing::spatial_loss_fd(inst.values, stack.map_count(), stack.cells(), inst.grid, kFdStep);
    worst_ls = std::max(worst_ls, testing::max_relative_error(l.gradient, fd));

    // BCE on logits and Dice on probabilities over the same d x d grid
    const std::size_t n = inst.grid.size();
    std::normal_distribution<double> logit(0.0, 2.0);
    std::uniform_real_distribution<double> prob(0.02, 0.98);
    std::vector<double> x(n);
    std::vector<double> p(n);
    for (std::size_t k = 0; k < n; ++k) {
      x[k] = logit(rng);
      p[k] = prob(rng);
    }
    std::vector<double> gb(n);
    std::vector<double> gd(n);
    bce_loss_grad(x, inst.grid, gb);
    dice_loss_grad(p, inst.grid, gd);
    std::vector<double> fb(n);
    std::vector<double> fdice(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double x0 = x[k];
      x[k] = x0 + kFdStep;
      const double bp = bce_loss(x, inst.grid);
      x[k] = x0 - kFdStep;
      const double bm = bce_loss(x, inst.grid);
      x[k] = x0;
      fb[k] = (bp - bm) / (2 * kFdStep);
      const double p0 = p[k];
      p[k] = p0 + kFdStep;
      const double dp = dice_loss(p, inst.grid);
      p[k] = p0 - kFdStep;
      const double dm = dice_loss(p, inst.grid);
      p[k] = p0;
      fdice[k] = (dp - dm) / (2 * kFdStep);
    }
    worst_bce = std::max(worst_bce, testing::max_relative_error(gb, fb));
    worst_dice = std::max(worst_dice, testing::max_relative_error(gd, fdice));
  }
  const double secs = seconds_since(t0);
  const bool ok = worst_ls < kGradientRelTol && worst_bce < kGradientRelTol &&
                  worst_dice < kGradientRelTol && secs < kGradientBudgetSeconds;
  return {ok, fmt("max_rel L_S=%.2e BCE=%.2e Dice=%.2e", worst_ls, worst_bce, worst_dice) +
                  fmt(" tol=1e-4 time=%.2fs budget=10s", secs)};
}

Verdict shift_scale() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> shift(0.0, 3.0);
  std::uniform_real_distribution<double> scale(0.2, 5.0);
  double worst_shift = 0.0;
  double worst_scale = 0.0;
  int cases = 0;
  while (cases < 100) {
    const auto inst = testing::random_spatial_instance(rng, 2, 4, 12);
    const GroundTruthGrid g{inst.d, inst.grid};
    const SpatialLoss base = spatial_attention_loss(AttentionStack(2, 4, 12, inst.values), g);
    if (base.clamped) continue;
    const double c = shift(rng);
    const double s = scale(rng);
    auto shifted = inst.values;
    for (auto& v : shifted) v += c;
    auto scaled = inst.values;
    for (auto& v : scaled) v *= s;
    const SpatialLoss ls = spatial_attention_loss(AttentionStack(2, 4, 12, shifted), g);
    const SpatialLoss lk = spatial_attention_loss(AttentionStack(2, 4, 12, scaled), g);
    worst_shift = std::max(worst_shift, std::abs(ls.value - base.value));
    worst_scale = std::max(worst_scale, std::abs(lk.value - (base.value - 2.0 * std::log(s))));
    ++cases;
  }
  return {worst_shift <= kShiftScaleTol && worst_scale <= kShiftScaleTol,
          fmt("cases=100 max|shift|=%.2e max|scale|=%.2e tol=1e-9", worst_shift, worst_scale)};
}

Verdict rle_roundtrip() {
  std::mt19937_64 rng(1000);
  std::uniform_int_distribution<int> dim(1, 256);
  std::uniform_real_distribution<double> density(0.0, 1.0);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const BinaryMask m = testing::random_mask(rng, dim(rng), dim(rng), density(rng));
    if (!(rle_decode(rle_encode(m)) == m)) ++mismatches;
  }
  return {mismatches == 0, fmt("masks=1000 max_side=256 mismatches=%.0f exact", mismatches)};
}

Verdict components() {
  std::mt19937_64 rng(500);
  std::uniform_real_distribution<double> density(0.05, 0.75);
  int mismatches = 0;
  for (int i = 0; i < 500; ++i) {
    const BinaryMask m = testing::random_mask(rng, 16, 16, density(rng));
    for (const bool eight : {true, false}) {
      int count = 0;
      const auto oracle = testing::flood_fill_labels(m, eight, count);
      const auto got = connected_components(m, eight ? Connectivity::Eight : Connectivity::Four);
      if (got.count != count || got.labels != oracle) ++mismatches;
    }
  }
  return {mismatches == 0, fmt("masks=500 connectivity=4,8 mismatches=%.0f exact", mismatches)};
}

Verdict descriptors() {
  const ShapeDescriptors sq = describe(testing::rect_mask(12, 12, 2, 2, 7, 7));
  const BinaryMask tromino = testing::ascii_mask({"#.", "##"});
  const double sol = solidity(tromino);
  const double ext = extent(tromino);
  const double err = std::max({std::abs(sq.eccentricity), std::abs(sq.circularity - std::numbers::pi / 4),
                               std::abs(sq.solidity - 1), std::abs(sq.symmetry - 1),
                               std::abs(sq.extent - 1), std::abs(sol - 6.0 / 7.0), std::abs(ext - 0.75)});
  return {err <= kDescriptorTol,
          fmt("square circ=%.12f tromino solidity=%.12f extent=%.4f", sq.circularity, sol, ext) +
              fmt(" max_err=%.2e tol=1e-9", err)};
}

Verdict grids() {
  const GridSpec a = local_grid(100, 300);
  const GridSpec b = local_grid(100, 200);
  const GridSpec c = local_grid(100, 250);
  const bool ok = a == GridSpec{4, 1} && b == GridSpec{4, 4} && c == GridSpec{4, 1};
  std::ostringstream d;
  d << "(100,300)->(" << a.rows << "," << a.cols << ") (100,200)->(" << b.rows << "," << b.cols
    << ") rho=2.5->(" << c.rows << "," << c.cols << ") exact";
  return {ok, d.str()};
}

Verdict hungarian_oracle() {
  std::mt19937_64 rng(200);
  std::uniform_int_distribution<std::size_t> dim(1, 6);
  int mismatches = 0;
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t t = dim(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(t, 6)(rng);
    const CostMatrix m = testing::random_cost_matrix(rng, t, k, i % 4 == 0);
    const auto oracle = testing::brute_force_assignment(m);
    const AssignmentResult r = hungarian(m);
    worst = std::max(worst, std::abs(r.total_cost - oracle.cost));
    if (r.total_cost != oracle.cost) ++mismatches;
  }
  return {mismatches == 0, fmt("matrices=200 T,k<=6 mismatches=%.0f max|diff|=%.1e exact", mismatches, worst)};
}

Verdict sweep_counters() {
  const TargetSet targets{{testing::rect_mask(32, 32, 4, 6, 12, 9)}};
  const auto rows = sweep_queries(synthetic_candidates(targets, 11), targets);
  const std::vector<std::uint64_t> expected{100, 75, 50, 25, 10, 3, 0};
  bool ok = rows.size() == expected.size();
  std::ostringstream d;
  d << "k->evals";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ok = ok && rows[i].cost_evaluations == expected[i];
    d << ' ' << rows[i].k << "->" << rows[i].cost_evaluations;
  }
  ok = ok && rows.back().bypassed;
  d << " bypass=" << (rows.back().bypassed ? "yes" : "no") << " exact";
  return {ok, d.str()};
}

Verdict metrics() {
  MetricsAccumulator g;
  g.add({0.5, 1, 2});
  g.add({1.0, 4, 4});
  const double ciou_err = std::abs(g.ciou() - 5.0 / 6.0);
  bool ok = g.giou() == 0.75 && ciou_err <= kCiouTol;

  std::mt19937_64 rng(50);
  std::uniform_real_distribution<double> density(0.0, 0.5);
  std::vector<OverlapStat> samples;
  for (int i = 0; i < 80; ++i) {
    samples.push_back(score_overlap(testing::random_mask(rng, 10, 10, density(rng)),
                                    testing::random_mask(rng, 10, 10, density(rng))));
  }
  MetricsAccumulator whole;
  for (const auto& s : samples) whole.add(s);
  int bad = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<MetricsAccumulator> shards(2 + trial % 6);
    for (const auto& s : samples) {
      shards[std::uniform_int_distribution<std::size_t>(0, shards.size() - 1)(rng)].add(s);
    }
    std::shuffle(shards.begin(), shards.end(), rng);
    MetricsAccumulator left;
    for (const auto& s : shards) left.merge(s);
    MetricsAccumulator right;
    for (auto it = shards.rbegin(); it != shards.rend(); ++it) {
      MetricsAccumulator next = *it;
      next.merge(right);
      right = next;
    }
    if (left.giou() != whole.giou() || right.giou() != whole.giou() ||
        left.ciou() != whole.ciou() || right.ciou() != whole.ciou()) {
      ++bad;
    }
  }
  ok = ok && bad == 0;
  return {ok, fmt("gIoU=%.17g cIoU_err=%.1e", g.giou(), ciou_err) +
                  fmt(" shardings=50 mismatches=%.0f tol(cIoU)=1e-12", bad)};
}

Verdict stage2_fixture() {
  std::vector<BinaryMask> gold;
  for (int i = 0; i < 5; ++i) gold.push_back(testing::rect_mask(32, 32, 2 + i, 3 + i, 8, 8));
  for (int i = 0; i < 5; ++i) gold.push_back(testing::rect_mask(32, 32, 4 + i, 1 + 2 * i, 8, 10));
  const std::map<std::string, ReferenceStats> stats{{"storage tank", derive_reference_stats(gold, "storage tank")}};

  std::vector<Stage2Item> batch;
  for (std::size_t i = 0; i < gold.size(); ++i) batch.push_back({"gold-" + std::to_string(i), gold[i], 1, "storage tank"});
  BinaryMask plus(32, 32);
  for (int r = 10; r < 22; ++r) {
    for (int c = 14; c < 18; ++c) {
      plus.set(r, c);
      plus.set(c, r);
    }
  }
  batch.push_back({"outlier-bar", testing::rect_mask(32, 32, 5, 5, 2, 20), 1, "storage tank"});
  batch.push_back({"outlier-l", testing::ascii_mask({"##......", "##......", "##......", "##......",
                                                     "##......", "########", "########"}),
                   1, "storage tank"});
  batch.push_back({"outlier-plus", plus, 1, "storage tank"});

  Stage2Config cfg;
  cfg.k_sigma = kStage2KSigma;
  const Stage2Report r = run_stage2(batch, stats, cfg);
  std::vector<std::string> rejected;
  bool bounds = true;
  for (const auto& item : r.items) {
    if (item.outcome == Stage2Outcome::Kept) continue;
    rejected.push_back(item.id);
    if (item.outcome != Stage2Outcome::DroppedByRange || item.verdict.failures.empty()) bounds = false;
    for (const auto& f : item.verdict.failures) {
      if (!(f.lower <= f.upper) || (f.value >= f.lower && f.value <= f.upper)) bounds = false;
    }
  }
  const std::vector<std::string> expected{"outlier-bar", "outlier-l", "outlier-plus"};
  std::ostringstream d;
  d << "k_sigma=2 rejected=[";
  for (std::size_t i = 0; i < rejected.size(); ++i) d << (i ? "," : "") << rejected[i];
  d << "] bounds_recorded=" << (bounds ? "yes" : "no") << " exact";
  return {rejected == expected && bounds, d.str()};
}

Verdict dataset_counts() {
  const char* corpus = std::getenv("SEGCURATE_CORPUS_JSONL");
  if (corpus != nullptr && std::filesystem::exists(corpus)) {
    std::ifstream in(corpus);
    const ValidationResult v = validate(in, 0);
    const DatasetStats s = stats(v.records);
    const bool ok = s.mask_count == 40396 && s.class_count == 122 && s.qa_count == 30830 &&
                    s.test_mask_count == 1900;
    std::ostringstream d;
    d << "corpus masks=" << s.mask_count << " classes=" << s.class_count << " qa=" << s.qa_count
      << " test_masks=" << s.test_mask_count << " rejected=" << v.issues.size() << " exact";
    return {ok, d.str()};
  }
  std::ifstream in(std::string(SEGCURATE_TEST_DATA) + "/fixture.jsonl");
  const ValidationResult v = validate(in);
  const DatasetStats s = stats(v.records);
  const bool ok = v.issues.empty() && s.mask_count == 5 && s.qa_count == 3 && s.class_count == 3 &&
                  s.test_mask_count == 2;
  std::ostringstream d;
  d << "fixture (corpus absent) masks=" << s.mask_count << " qa=" << s.qa_count
    << " classes=" << s.class_count << " test_masks=" << s.test_mask_count << " exact";
  return {ok, d.str()};
}

Verdict review_service() {
  const auto t0 = Clock::now();
  ReviewService service;
  const auto out = testing::simulate_review(service, 8, 100);
  const auto replayed = ReviewService::replay(service.events());
  const bool identical = replayed->snapshot().dump() == service.snapshot().dump();
  const double secs = seconds_since(t0);
  const bool ok = out.unexpected_errors == 0 && out.overlapping_leases == 0 &&
                  out.items_without_single_decision == 0 && out.decisions == 100 && identical &&
                  secs < kReviewBudgetSeconds;
  std::ostringstream d;
  d << "reviewers=8 items=100 decisions=" << out.decisions
    << " overlapping_leases=" << out.overlapping_leases
    << " replay_identical=" << (identical ? "yes" : "no") << fmt(" time=%.2fs budget=30s", secs);
  return {ok, d.str()};
}

}  // namespace

int main() {
  std::printf("kernel table: %s\n", std::string(segcurate::kernels::active().name).c_str());
  report("spatial-loss-hand-example", spatial_hand_example);
  report("gradient-check", gradient_check);
  report("spatial-shift-scale", shift_scale);
  report("rle-roundtrip", rle_roundtrip);
  report("connected-components", components);
  report("canonical-descriptors", descriptors);
  report("grid-formulas", grids);
  report("hungarian-vs-brute-force", hungarian_oracle);
  report("query-sweep-counters", sweep_counters);
  report("metrics", metrics);
  report("stage2-fixture", stage2_fixture);
  report("dataset-counts", dataset_counts);
  report("review-service", review_service);
  std::printf("%d of 13 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
