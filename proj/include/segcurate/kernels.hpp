#pragma once

// Data-parallel inner loops shared by the losses, matcher and metrics.
//
// Each kernel has a scalar reference implementation and, on x86-64, an AVX2
// variant. The active table is picked once at first use from the CPU feature
// flags; SEGCURATE_FORCE_SCALAR=1 in the environment pins the scalar table.
// Floating-point reductions may differ from the scalar reference in the last
// few ulps because the SIMD variants sum in lane order.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace segcurate::kernels {

struct MaskedSums {
  double on = 0.0;       // sum of values where mask != 0
  double off = 0.0;      // sum of values where mask == 0
  std::size_t on_count = 0;
};

struct DiceTerms {
  double intersection = 0.0;  // sum p*g
  double prob_sum = 0.0;      // sum p
  double target_sum = 0.0;    // sum g
};

struct OverlapCounts {
  std::uint64_t intersection = 0;
  std::uint64_t uni = 0;
};

struct KernelTable {
  std::string_view name;
  // dst[i] += src[i]
  void (*accumulate)(double* dst, const double* src, std::size_t n);
  // dst[i] *= s
  void (*scale)(double* dst, double s, std::size_t n);
  MaskedSums (*masked_sums)(const double* values, const std::uint8_t* mask, std::size_t n);
  // sum over mask != 0 of (values[i] - center)^2
  double (*masked_sq_dev)(const double* values, const std::uint8_t* mask, double center,
                          std::size_t n);
  DiceTerms (*dice_terms)(const double* probs, const std::uint8_t* target, std::size_t n);
  OverlapCounts (*overlap)(const std::uint8_t* a, const std::uint8_t* b, std::size_t n);
};

const KernelTable& scalar_table() noexcept;
// nullptr when the binary was built without AVX2 support or the CPU lacks it.
const KernelTable* avx2_table() noexcept;
const KernelTable& active() noexcept;

void accumulate(std::span<double> dst, std::span<const double> src);
void scale(std::span<double> dst, double s) noexcept;
MaskedSums masked_sums(std::span<const double> values, std::span<const std::uint8_t> mask);
double masked_sq_dev(std::span<const double> values, std::span<const std::uint8_t> mask,
                     double center);
DiceTerms dice_terms(std::span<const double> probs, std::span<const std::uint8_t> target);
OverlapCounts overlap(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

}  // namespace segcurate::kernels
