#include "segcurate/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "segcurate/error.hpp"
#include "segcurate/kernels.hpp"

namespace segcurate {
namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": " + std::to_string(a) + " vs " +
                                              std::to_string(b) + " elements");
  }
}

void require_grid_matches(const GroundTruthGrid& g, int d) {
  if (g.d != d || g.cells.size() != static_cast<std::size_t>(d) * static_cast<std::size_t>(d)) {
    throw Error(ErrorCode::ShapeMismatch, "ground-truth grid is " + std::to_string(g.d) +
                                              "x" + std::to_string(g.d) + ", attention is " +
                                              std::to_string(d) + "x" + std::to_string(d));
  }
}

// log(1 + exp(x)) without overflow
double softplus(double x) noexcept { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

AttentionStack::AttentionStack(int blocks, int heads, int d, std::vector<double> values)
    : blocks_(blocks), heads_(heads), d_(d), values_(std::move(values)) {
  if (blocks < 1 || heads < 1 || d < 1) {
    throw Error(ErrorCode::ShapeMismatch, "attention stack needs M, N, d >= 1");
  }
  require_same_size(values_.size(), map_count() * cells(), "attention stack");
  for (const double v : values_) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(ErrorCode::InvalidArgument, "attention scores must be finite and >= 0");
    }
  }
}

AttentionStack AttentionStack::from_maps(int blocks, int heads,
                                         const std::vector<std::vector<double>>& maps) {
  if (blocks < 1 || heads < 1) throw Error(ErrorCode::ShapeMismatch, "M and N must be >= 1");
  require_same_size(maps.size(),
                    static_cast<std::size_t>(blocks) * static_cast<std::size_t>(heads),
                    "attention map count");
  const std::size_t cells = maps.front().size();
  const auto d = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cells))));
  if (static_cast<std::size_t>(d) * static_cast<std::size_t>(d) != cells || d < 1) {
    throw Error(ErrorCode::ShapeMismatch, "attention map is not square");
  }
  std::vector<double> values;
  values.reserve(maps.size() * cells);
  for (const auto& m : maps) {
    require_same_size(m.size(), cells, "attention map size");
    values.insert(values.end(), m.begin(), m.end());
  }
  return AttentionStack(blocks, heads, d, std::move(values));
}

AttentionSummary aggregate_attention(const AttentionStack& stack) {
  AttentionSummary out{stack.d(), std::vector<double>(stack.cells(), 0.0)};
  for (std::size_t k = 0; k < stack.map_count(); ++k) kernels::accumulate(out.grid, stack.map(k));
  kernels::scale(out.grid, 1.0 / static_cast<double>(stack.map_count()));
  return out;
}

double background_mean(const AttentionSummary& summary, const GroundTruthGrid& g) {
  require_grid_matches(g, summary.d);
  const kernels::MaskedSums sums = kernels::masked_sums(summary.grid, g.cells);
  const std::size_t background = g.cells.size() - sums.on_count;
  if (background == 0) throw Error(ErrorCode::NoBackground, "ground-truth grid has no background");
  return sums.off / static_cast<double>(background);
}

SpatialLoss spatial_attention_loss(const AttentionStack& stack, const GroundTruthGrid& g,
                                   double eps) {
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be > 0");
  require_grid_matches(g, stack.d());
  SpatialLoss out;

  const AttentionSummary summary = aggregate_attention(stack);
  const kernels::MaskedSums sums = kernels::masked_sums(summary.grid, g.cells);
  const std::size_t fg = sums.on_count;
  const std::size_t bg = g.cells.size() - fg;
  if (fg == 0) {
    out.skip = SpatialSkip::NoForeground;
    return out;
  }
  if (bg == 0) {
    out.skip = SpatialSkip::NoBackground;
    return out;
  }

  const auto fg_n = static_cast<double>(fg);
  const auto bg_n = static_cast<double>(bg);
  const double a = sums.off / bg_n;
  const double separation = kernels::masked_sq_dev(summary.grid, g.cells, a) / fg_n;
  out.background_mean = a;
  out.separation = separation;
  out.gradient.assign(stack.values().size(), 0.0);
  if (separation < eps) {
    out.value = -std::log(eps);
    out.clamped = true;
    return out;
  }
  out.value = -std::log(separation);

  // F = (1/|fg|) sum_fg (A_S - a)^2 with a = (1/|bg|) sum_bg A_S, so
  //   dF/dA_S(q) = (2/|fg|) * (g_q (A_S(q) - a) - (1 - g_q) S / |bg|),
  //   S = sum_fg (A_S - a).
  // Every map contributes 1/(M*N) to A_S.
  const double deviation_sum = sums.on - fg_n * a;
  const double outer = -1.0 / separation * (2.0 / fg_n) / static_cast<double>(stack.map_count());
  const double background_term = -deviation_sum / bg_n;
  std::vector<double> cell_grad(stack.cells());
  for (std::size_t q = 0; q < cell_grad.size(); ++q) {
    cell_grad[q] = outer * (g.cells[q] ? (summary.grid[q] - a) : background_term);
  }
  for (std::size_t k = 0; k < stack.map_count(); ++k) {
    std::copy(cell_grad.begin(), cell_grad.end(),
              out.gradient.begin() + static_cast<std::ptrdiff_t>(k * stack.cells()));
  }
  return out;
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double bce_loss(std::span<const double> logits, std::span<const std::uint8_t> targets) {
  require_same_size(logits.size(), targets.size(), "bce");
  if (logits.empty()) throw Error(ErrorCode::ShapeMismatch, "bce on empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = logits[i];
    sum += softplus(x) - (targets[i] ? x : 0.0);
  }
  return sum / static_cast<double>(logits.size());
}

double bce_loss_grad(std::span<const double> logits, std::span<const std::uint8_t> targets,
                     std::span<double> grad) {
  const double value = bce_loss(logits, targets);
  require_same_size(grad.size(), logits.size(), "bce gradient");
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    grad[i] = (sigmoid(logits[i]) - (targets[i] ? 1.0 : 0.0)) * inv_n;
  }
  return value;
}

double dice_loss(std::span<const double> probs, std::span<const std::uint8_t> targets,
                 double smooth) {
  require_same_size(probs.size(), targets.size(), "dice");
  for (const double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::OutOfRange, "dice probabilities must lie in [0, 1]");
  }
  const kernels::DiceTerms t = kernels::dice_terms(probs, targets);
  return 1.0 - (2.0 * t.intersection + smooth) / (t.prob_sum + t.target_sum + smooth);
}

double dice_loss_grad(std::span<const double> probs, std::span<const std::uint8_t> targets,
                      std::span<double> grad, double smooth) {
  const double value = dice_loss(probs, targets, smooth);
  require_same_size(grad.size(), probs.size(), "dice gradient");
  const kernels::DiceTerms t = kernels::dice_terms(probs, targets);
  const double num = 2.0 * t.intersection + smooth;
  const double den = t.prob_sum + t.target_sum + smooth;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    grad[i] = -((targets[i] ? 2.0 : 0.0) * den - num) / (den * den);
  }
  return value;
}

double token_ce(std::span<const double> logits, std::size_t vocab,
                std::span<const long long> targets, long long ignore_id) {
  if (vocab == 0) throw Error(ErrorCode::ShapeMismatch, "vocabulary size must be >= 1");
  require_same_size(logits.size(), targets.size() * vocab, "token logits");
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t pos = 0; pos < targets.size(); ++pos) {
    const long long target = targets[pos];
    if (target == ignore_id) continue;
    if (target < 0 || static_cast<std::size_t>(target) >= vocab) {
      throw Error(ErrorCode::TargetOutOfVocab, "target " + std::to_string(target) +
                                                   " at position " + std::to_string(pos) +
                                                   " outside vocab of " + std::to_string(vocab));
    }
    const auto row = logits.subspan(pos * vocab, vocab);
    const double peak = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (const double x : row) z += std::exp(x - peak);
    sum += peak + std::log(z) - row[static_cast<std::size_t>(target)];
    ++counted;
  }
  if (counted == 0) throw Error(ErrorCode::EmptyAfterIgnore, "every position is ignored");
  return sum / static_cast<double>(counted);
}

LossReport total_loss(const LossParts& parts, const LossWeights& weights) {
  for (const double w : {weights.w_text, weights.w_bce, weights.w_dice, weights.lambda_s}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::InvalidArgument, "loss weights must be finite and >= 0");
    }
  }
  const auto check = [](double v, const char* name) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::NonFiniteComponent, std::string(name) + " is not finite");
    }
  };
  check(parts.text, "l_text");
  check(parts.bce, "l_bce");
  check(parts.dice, "l_dice");
  if (parts.spatial) check(*parts.spatial, "l_spatial");

  LossReport r;
  r.l_text = parts.text;
  r.l_bce = parts.bce;
  r.l_dice = parts.dice;
  r.skipped_spatial = !parts.spatial.has_value();
  r.l_spatial = parts.spatial.value_or(0.0);
  r.total = weights.w_text * r.l_text + weights.w_bce * r.l_bce + weights.w_dice * r.l_dice;
  if (!r.skipped_spatial) r.total += weights.lambda_s * r.l_spatial;
  return r;
}

void to_json(nlohmann::json& j, const LossReport& r) {
  j = nlohmann::json{{"l_text", r.l_text},   {"l_bce", r.l_bce}, {"l_dice", r.l_dice},
                     {"l_spatial", r.l_spatial}, {"total", r.total},
                     {"skipped_spatial", r.skipped_spatial}};
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = nlohmann::json{{"w_text", w.w_text},     {"w_bce", w.w_bce},
                     {"w_dice", w.w_dice},     {"lambda_s", w.lambda_s},
                     {"epsilon_log", w.epsilon_log}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  w.w_text = j.value("w_text", w.w_text);
  w.w_bce = j.value("w_bce", w.w_bce);
  w.w_dice = j.value("w_dice", w.w_dice);
  w.lambda_s = j.value("lambda_s", w.lambda_s);
  w.epsilon_log = j.value("epsilon_log", w.epsilon_log);
}

}  // namespace segcurate
