#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "segcurate/mask.hpp"

namespace segcurate {

// k probability maps over one H x W raster.
struct CandidateSet {
  int height = 0;
  int width = 0;
  std::vector<std::vector<double>> masks;

  std::size_t k() const noexcept { return masks.size(); }
  // Throws ShapeMismatch / OutOfRange when a map is malformed.
  void validate() const;
};

struct TargetSet {
  std::vector<BinaryMask> masks;

  std::size_t count() const noexcept { return masks.size(); }
};

struct MatchWeights {
  double w_bce = 5.0;
  double w_dice = 5.0;
};

// Counts pair_cost evaluations; shared across worker threads.
class CostCounter {
 public:
  void add(std::uint64_t n) noexcept { value_.fetch_add(n, std::memory_order_relaxed); }
  std::uint64_t value() const noexcept { return value_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> value_{0};
};

inline constexpr double kProbClamp = 1e-6;

// w_bce * BCE(logit(clamp(p)), g) + w_dice * Dice(p, g)
double pair_cost(std::span<const double> probs, const BinaryMask& target,
                 const MatchWeights& weights = {});

// T x k, entry (i, j) = pair_cost(candidate j, target i).
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  MatchWeights weights;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

CostMatrix cost_matrix(const CandidateSet& candidates, const TargetSet& targets,
                       CostCounter& counter, const MatchWeights& weights = {},
                       unsigned jobs = 1);

struct AssignmentResult {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (target, candidate), by target
  double total_cost = 0.0;
  std::uint64_t cost_evaluations = 0;
  bool bypassed = false;
};

// Minimum-cost injection of the T rows into the k columns. Among optimal
// assignments the lexicographically smallest pair list wins.
AssignmentResult hungarian(const CostMatrix& matrix);

// Single candidate for a single target is used directly with no cost
// evaluation; otherwise cost_matrix + hungarian.
AssignmentResult select_masks(const CandidateSet& candidates, const TargetSet& targets,
                              CostCounter& counter, const MatchWeights& weights = {},
                              unsigned jobs = 1);

struct SweepRow {
  std::size_t k = 0;
  std::uint64_t cost_evaluations = 0;
  double wall_ms = 0.0;
  bool bypassed = false;
  double total_cost = 0.0;
};

inline const std::vector<std::size_t> kDefaultSweepKs{100, 75, 50, 25, 10, 3, 1};

using CandidateGenerator = std::function<CandidateSet(std::size_t k)>;

std::vector<SweepRow> sweep_queries(const CandidateGenerator& generate, const TargetSet& targets,
                                    const std::vector<std::size_t>& ks = kDefaultSweepKs,
                                    const MatchWeights& weights = {}, unsigned jobs = 1);

// Seeded noisy copies of the targets plus random distractors, for sweeps
// without model output.
CandidateGenerator synthetic_candidates(const TargetSet& targets, std::uint64_t seed);

std::string sweep_csv(const std::vector<SweepRow>& rows);

void to_json(nlohmann::json& j, const AssignmentResult& r);
void to_json(nlohmann::json& j, const SweepRow& r);
void to_json(nlohmann::json& j, const CostMatrix& m);

}  // namespace segcurate
