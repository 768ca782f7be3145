#include "kernels_impl.hpp"

namespace segcurate::kernels::scalar {

void accumulate(double* dst, const double* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

void scale(double* dst, double s, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] *= s;
}

MaskedSums masked_sums(const double* values, const std::uint8_t* mask, std::size_t n) {
  MaskedSums out;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) {
      out.on += values[i];
      ++out.on_count;
    } else {
      out.off += values[i];
    }
  }
  return out;
}

double masked_sq_dev(const double* values, const std::uint8_t* mask, double center,
                     std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) {
      const double d = values[i] - center;
      acc += d * d;
    }
  }
  return acc;
}

DiceTerms dice_terms(const double* probs, const std::uint8_t* target, std::size_t n) {
  DiceTerms out;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = target[i] ? 1.0 : 0.0;
    out.intersection += probs[i] * g;
    out.prob_sum += probs[i];
    out.target_sum += g;
  }
  return out;
}

OverlapCounts overlap(const std::uint8_t* a, const std::uint8_t* b, std::size_t n) {
  OverlapCounts out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool x = a[i] != 0;
    const bool y = b[i] != 0;
    out.intersection += (x && y) ? 1 : 0;
    out.uni += (x || y) ? 1 : 0;
  }
  return out;
}

}  // namespace segcurate::kernels::scalar
