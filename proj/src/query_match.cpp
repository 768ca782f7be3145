#include "segcurate/query_match.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "segcurate/error.hpp"
#include "segcurate/losses.hpp"
#include "segcurate/parallel.hpp"

namespace segcurate {
namespace {

struct Solution {
  std::vector<std::size_t> column_of_row;
  std::vector<double> u;  // row potentials
  std::vector<double> v;  // column potentials, <= 0
};

// Shortest-augmenting-path Hungarian method for an n x m matrix with n <= m.
// O(n^2 m). Potentials satisfy u_i + v_j <= c_ij with equality on the matching.
Solution solve(std::size_t n, std::size_t m, const std::function<double(std::size_t, std::size_t)>& cost) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0);
  std::vector<double> v(m + 1, 0.0);
  std::vector<std::size_t> row_of_col(m + 1, 0);  // 1-based rows, 0 = free
  std::vector<std::size_t> way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    row_of_col[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = row_of_col[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[row_of_col[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of_col[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      row_of_col[j0] = row_of_col[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Solution s;
  s.column_of_row.assign(n, 0);
  for (std::size_t j = 1; j <= m; ++j) {
    if (row_of_col[j] != 0) s.column_of_row[row_of_col[j] - 1] = j - 1;
  }
  s.u.assign(u.begin() + 1, u.end());
  s.v.assign(v.begin() + 1, v.end());
  return s;
}

// Optimal cost over rows [first_row, rows) using only columns not in `taken`.
double residual_optimum(const CostMatrix& matrix, std::size_t first_row,
                        const std::vector<char>& taken) {
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < matrix.cols; ++j) {
    if (!taken[j]) cols.push_back(j);
  }
  const std::size_t n = matrix.rows - first_row;
  if (n == 0) return 0.0;
  const Solution s = solve(n, cols.size(), [&](std::size_t i, std::size_t j) {
    return matrix.at(first_row + i, cols[j]);
  });
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += matrix.at(first_row + i, cols[s.column_of_row[i]]);
  return total;
}

void check_shapes(const CandidateSet& candidates, const TargetSet& targets) {
  candidates.validate();
  if (candidates.k() == 0) throw Error(ErrorCode::TooFewCandidates, "no candidates");
  if (targets.count() == 0) throw Error(ErrorCode::InvalidArgument, "no targets");
  for (const auto& t : targets.masks) {
    if (t.height() != candidates.height || t.width() != candidates.width) {
      throw Error(ErrorCode::ShapeMismatch, "target raster differs from candidate raster");
    }
  }
  if (targets.count() > candidates.k()) {
    throw Error(ErrorCode::TooFewCandidates, std::to_string(targets.count()) + " targets but only " +
                                                 std::to_string(candidates.k()) + " candidates");
  }
}

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

void CandidateSet::validate() const {
  if (height < 1 || width < 1) throw Error(ErrorCode::ShapeMismatch, "candidate raster must be >= 1x1");
  const auto cells = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  for (const auto& m : masks) {
    if (m.size() != cells) throw Error(ErrorCode::ShapeMismatch, "candidate map size mismatch");
    for (const double p : m) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw Error(ErrorCode::OutOfRange, "candidate probabilities must lie in [0, 1]");
      }
    }
  }
}

double pair_cost(std::span<const double> probs, const BinaryMask& target, const MatchWeights& weights) {
  if (probs.size() != target.size()) {
    throw Error(ErrorCode::ShapeMismatch, "candidate and target differ in size");
  }
  std::vector<double> logits(probs.size());
  std::transform(probs.begin(), probs.end(), logits.begin(), [](double p) {
    const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    return std::log(q / (1.0 - q));
  });
  return weights.w_bce * bce_loss(logits, target.pixels()) +
         weights.w_dice * dice_loss(probs, target.pixels());
}

CostMatrix cost_matrix(const CandidateSet& candidates, const TargetSet& targets,
                       CostCounter& counter, const MatchWeights& weights, unsigned jobs) {
  check_shapes(candidates, targets);
  CostMatrix m{targets.count(), candidates.k(), {}, weights};
  m.values.assign(m.rows * m.cols, 0.0);
  parallel_for(m.rows * m.cols, jobs, [&](std::size_t idx) {
    const std::size_t i = idx / m.cols;
    const std::size_t j = idx % m.cols;
    m.values[idx] = pair_cost(candidates.masks[j], targets.masks[i], weights);
    counter.add(1);
  });
  return m;
}

AssignmentResult hungarian(const CostMatrix& matrix) {
  if (matrix.rows > matrix.cols) {
    throw Error(ErrorCode::TooFewCandidates, "more targets than candidates");
  }
  if (matrix.values.size() != matrix.rows * matrix.cols) {
    throw Error(ErrorCode::ShapeMismatch, "cost matrix storage does not match its shape");
  }
  double scale = 1.0;
  for (const double c : matrix.values) {
    if (!std::isfinite(c)) throw Error(ErrorCode::InvalidArgument, "cost matrix has non-finite entries");
    scale = std::max(scale, std::abs(c));
  }
  AssignmentResult result;
  if (matrix.rows == 0) return result;

  const Solution opt = solve(matrix.rows, matrix.cols,
                             [&](std::size_t i, std::size_t j) { return matrix.at(i, j); });
  double best = 0.0;
  for (std::size_t i = 0; i < matrix.rows; ++i) best += matrix.at(i, opt.column_of_row[i]);
  const double tol = 1e-9 * scale * static_cast<double>(matrix.rows);

  // Walk rows in order and fix each to the smallest column that still admits
  // an optimal completion. By complementary slackness, an optimal assignment
  // only uses edges with zero reduced cost under the optimal potentials, so
  // other edges need no re-solve.
  std::vector<char> taken(matrix.cols, 0);
  double prefix = 0.0;
  for (std::size_t i = 0; i < matrix.rows; ++i) {
    std::size_t chosen = matrix.cols;
    bool fixed_on_optimum = true;
    for (std::size_t r = 0; r < i; ++r) {
      if (result.pairs[r].second != opt.column_of_row[r]) fixed_on_optimum = false;
    }
    for (std::size_t j = 0; j < matrix.cols; ++j) {
      if (taken[j]) continue;
      if (fixed_on_optimum && j == opt.column_of_row[i]) {
        chosen = j;
        break;
      }
      const double reduced = matrix.at(i, j) - opt.u[i] - opt.v[j];
      if (reduced > tol) continue;
      taken[j] = 1;
      const double completion = prefix + matrix.at(i, j) + residual_optimum(matrix, i + 1, taken);
      taken[j] = 0;
      if (completion <= best + tol) {
        chosen = j;
        break;
      }
    }
    if (chosen == matrix.cols) {
      // Rounding defeated the tolerance test; take the cheapest completion.
      double cheapest = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < matrix.cols; ++j) {
        if (taken[j]) continue;
        taken[j] = 1;
        const double completion = matrix.at(i, j) + residual_optimum(matrix, i + 1, taken);
        taken[j] = 0;
        if (completion < cheapest) {
          cheapest = completion;
          chosen = j;
        }
      }
    }
    taken[chosen] = 1;
    prefix += matrix.at(i, chosen);
    result.pairs.emplace_back(i, chosen);
  }

  for (const auto& [row, col] : result.pairs) result.total_cost += matrix.at(row, col);
  return result;
}

AssignmentResult select_masks(const CandidateSet& candidates, const TargetSet& targets,
                              CostCounter& counter, const MatchWeights& weights, unsigned jobs) {
  check_shapes(candidates, targets);
  if (candidates.k() == 1 && targets.count() == 1) {
    AssignmentResult r;
    r.pairs.emplace_back(0, 0);
    r.bypassed = true;
    return r;
  }
  const CostMatrix m = cost_matrix(candidates, targets, counter, weights, jobs);
  AssignmentResult r = hungarian(m);
  r.cost_evaluations = static_cast<std::uint64_t>(m.rows * m.cols);
  return r;
}

std::vector<SweepRow> sweep_queries(const CandidateGenerator& generate, const TargetSet& targets,
                                    const std::vector<std::size_t>& ks, const MatchWeights& weights,
                                    unsigned jobs) {
  std::vector<SweepRow> rows;
  rows.reserve(ks.size());
  for (const std::size_t k : ks) {
    const CandidateSet candidates = generate(k);
    if (candidates.k() != k) {
      throw Error(ErrorCode::InvalidArgument, "generator returned " + std::to_string(candidates.k()) +
                                                  " candidates for k=" + std::to_string(k));
    }
    CostCounter counter;
    const auto start = std::chrono::steady_clock::now();
    const AssignmentResult r = select_masks(candidates, targets, counter, weights, jobs);
    const auto stop = std::chrono::steady_clock::now();
    rows.push_back({k, counter.value(),
                    std::chrono::duration<double, std::milli>(stop - start).count(), r.bypassed,
                    r.total_cost});
  }
  return rows;
}

CandidateGenerator synthetic_candidates(const TargetSet& targets, std::uint64_t seed) {
  if (targets.count() == 0) throw Error(ErrorCode::InvalidArgument, "no targets");
  return [targets, seed](std::size_t k) {
    const BinaryMask& first = targets.masks.front();
    CandidateSet set{first.height(), first.width(), {}};
    set.masks.reserve(k);
    for (std::size_t j = 0; j < k; ++j) {
      std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (k + 1)) ^ (j * 0xbf58476d1ce4e5b9ULL));
      const BinaryMask& t = targets.masks[j % targets.count()];
      // later candidates are noisier
      const double noise = 0.1 + 0.8 * static_cast<double>(j) / static_cast<double>(std::max<std::size_t>(k, 1));
      std::vector<double> probs(t.size());
      for (std::size_t i = 0; i < probs.size(); ++i) {
        const double base = t.pixels()[i] ? 0.85 : 0.15;
        const double jitter = (unit_uniform(rng) - 0.5) * noise;
        probs[i] = std::clamp(base + jitter, 0.0, 1.0);
      }
      set.masks.push_back(std::move(probs));
    }
    return set;
  };
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "k,cost_evaluations,wall_ms,bypassed\n";
  for (const auto& r : rows) {
    out << r.k << ',' << r.cost_evaluations << ',' << r.wall_ms << ',' << (r.bypassed ? 1 : 0)
        << '\n';
  }
  return out.str();
}

void to_json(nlohmann::json& j, const AssignmentResult& r) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [t, c] : r.pairs) pairs.push_back({{"target", t}, {"candidate", c}});
  j = nlohmann::json{{"pairs", pairs},
                     {"cost_evaluations", r.cost_evaluations},
                     {"bypassed", r.bypassed}};
  // a bypassed selection never evaluated a cost
  j["total_cost"] = r.bypassed ? nlohmann::json(nullptr) : nlohmann::json(r.total_cost);
}

void to_json(nlohmann::json& j, const SweepRow& r) {
  j = nlohmann::json{{"k", r.k},
                     {"cost_evaluations", r.cost_evaluations},
                     {"wall_ms", r.wall_ms},
                     {"bypassed", r.bypassed}};
}

void to_json(nlohmann::json& j, const CostMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows; ++r) {
    rows.push_back(std::vector<double>(m.values.begin() + static_cast<std::ptrdiff_t>(r * m.cols),
                                       m.values.begin() + static_cast<std::ptrdiff_t>((r + 1) * m.cols)));
  }
  j = nlohmann::json{{"costs", rows}, {"w_bce", m.weights.w_bce}, {"w_dice", m.weights.w_dice}};
}

}  // namespace segcurate
