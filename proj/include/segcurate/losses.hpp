#pragma once

#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "segcurate/grid.hpp"

namespace segcurate {

// M blocks x N heads of d x d non-negative attention grids, stored as one
// contiguous [M][N][d][d] buffer.
class AttentionStack {
 public:
  AttentionStack() = default;
  // Throws ShapeMismatch when values.size() != blocks*heads*d*d and
  // InvalidArgument for negative or non-finite scores.
  AttentionStack(int blocks, int heads, int d, std::vector<double> values);
  // Builds a stack from individually supplied maps (block-major order); every
  // map must hold d*d values for the same d.
  static AttentionStack from_maps(int blocks, int heads,
                                  const std::vector<std::vector<double>>& maps);

  int blocks() const noexcept { return blocks_; }
  int heads() const noexcept { return heads_; }
  int d() const noexcept { return d_; }
  std::size_t map_count() const noexcept {
    return static_cast<std::size_t>(blocks_) * static_cast<std::size_t>(heads_);
  }
  std::size_t cells() const noexcept {
    return static_cast<std::size_t>(d_) * static_cast<std::size_t>(d_);
  }
  std::span<const double> map(std::size_t index) const {
    return std::span<const double>(values_).subspan(index * cells(), cells());
  }
  std::span<const double> values() const noexcept { return values_; }

 private:
  int blocks_ = 0;
  int heads_ = 0;
  int d_ = 0;
  std::vector<double> values_;
};

struct AttentionSummary {
  int d = 0;
  std::vector<double> grid;  // row-major d x d
};

AttentionSummary aggregate_attention(const AttentionStack& stack);

// Mean attention over background cells of g.
double background_mean(const AttentionSummary& summary, const GroundTruthGrid& g);

inline constexpr double kDefaultLogEpsilon = 1e-8;

enum class SpatialSkip { None, NoForeground, NoBackground };

struct SpatialLoss {
  SpatialSkip skip = SpatialSkip::None;
  double value = 0.0;
  double background_mean = 0.0;
  double separation = 0.0;  // mean squared foreground deviation from the background mean
  bool clamped = false;     // separation fell below epsilon
  std::vector<double> gradient;  // same [M][N][d][d] layout as the stack; empty when skipped

  bool skipped() const noexcept { return skip != SpatialSkip::None; }
};

// -log(max(F, eps)) where F is the mean over foreground cells of
// (A_S - a)^2, A_S the mean map and a the background mean. Degenerate ground
// truth (no foreground or no background cell) yields a skipped result rather
// than an error.
SpatialLoss spatial_attention_loss(const AttentionStack& stack, const GroundTruthGrid& g,
                                   double eps = kDefaultLogEpsilon);

// Mean binary cross-entropy on logits, log-sum-exp form.
double bce_loss(std::span<const double> logits, std::span<const std::uint8_t> targets);
// Same value; writes d(loss)/d(logit) into grad.
double bce_loss_grad(std::span<const double> logits, std::span<const std::uint8_t> targets,
                     std::span<double> grad);

inline constexpr double kDefaultDiceSmooth = 1.0;

// 1 - (2*sum(p*g) + smooth) / (sum(p) + sum(g) + smooth)
double dice_loss(std::span<const double> probs, std::span<const std::uint8_t> targets,
                 double smooth = kDefaultDiceSmooth);
double dice_loss_grad(std::span<const double> probs, std::span<const std::uint8_t> targets,
                      std::span<double> grad, double smooth = kDefaultDiceSmooth);

inline constexpr long long kDefaultIgnoreId = -100;

// Mean -log softmax(row)[target] over positions whose target is not ignore_id.
// logits is row-major [targets.size()][vocab].
double token_ce(std::span<const double> logits, std::size_t vocab,
                std::span<const long long> targets, long long ignore_id = kDefaultIgnoreId);

struct LossWeights {
  double w_text = 1.0;
  double w_bce = 1.0;
  double w_dice = 1.0;
  double lambda_s = 0.01;
  double epsilon_log = kDefaultLogEpsilon;
};

struct LossParts {
  double text = 0.0;
  double bce = 0.0;
  double dice = 0.0;
  std::optional<double> spatial;  // nullopt when the sample skipped L_S
};

struct LossReport {
  double l_text = 0.0;
  double l_bce = 0.0;
  double l_dice = 0.0;
  double l_spatial = 0.0;
  double total = 0.0;
  bool skipped_spatial = false;
};

LossReport total_loss(const LossParts& parts, const LossWeights& weights = {});

double sigmoid(double x) noexcept;

void to_json(nlohmann::json& j, const LossReport& r);
void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

}  // namespace segcurate
