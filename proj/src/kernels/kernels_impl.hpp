#pragma once

#include "segcurate/kernels.hpp"

namespace segcurate::kernels {

namespace scalar {
void accumulate(double* dst, const double* src, std::size_t n);
void scale(double* dst, double s, std::size_t n);
MaskedSums masked_sums(const double* values, const std::uint8_t* mask, std::size_t n);
double masked_sq_dev(const double* values, const std::uint8_t* mask, double center,
                     std::size_t n);
DiceTerms dice_terms(const double* probs, const std::uint8_t* target, std::size_t n);
OverlapCounts overlap(const std::uint8_t* a, const std::uint8_t* b, std::size_t n);
}  // namespace scalar

#if defined(SEGCURATE_HAVE_AVX2)
namespace avx2 {
void accumulate(double* dst, const double* src, std::size_t n);
void scale(double* dst, double s, std::size_t n);
MaskedSums masked_sums(const double* values, const std::uint8_t* mask, std::size_t n);
double masked_sq_dev(const double* values, const std::uint8_t* mask, double center,
                     std::size_t n);
DiceTerms dice_terms(const double* probs, const std::uint8_t* target, std::size_t n);
OverlapCounts overlap(const std::uint8_t* a, const std::uint8_t* b, std::size_t n);
}  // namespace avx2
#endif

}  // namespace segcurate::kernels
