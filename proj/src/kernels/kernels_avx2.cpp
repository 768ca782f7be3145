#include "kernels_impl.hpp"

#if defined(SEGCURATE_HAVE_AVX2)

#include <immintrin.h>

#include <bit>
#include <cstring>

#define SEGCURATE_AVX2 __attribute__((target("avx2,fma")))

namespace segcurate::kernels::avx2 {
namespace {

// Four mask bytes -> four lanes of 0.0 / 1.0.
SEGCURATE_AVX2 inline __m256d load_mask4(const std::uint8_t* mask) {
  std::int32_t raw;
  std::memcpy(&raw, mask, sizeof(raw));
  const __m128i bytes = _mm_cvtsi32_si128(raw);
  const __m128i zero = _mm_setzero_si128();
  const __m128i nonzero = _mm_andnot_si128(_mm_cmpeq_epi8(bytes, zero), _mm_set1_epi8(1));
  return _mm256_cvtepi32_pd(_mm_cvtepu8_epi32(nonzero));
}

SEGCURATE_AVX2 inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

SEGCURATE_AVX2 void accumulate(double* dst, const double* src, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(dst + i), _mm256_loadu_pd(src + i)));
  }
  for (; i < n; ++i) dst[i] += src[i];
}

SEGCURATE_AVX2 void scale(double* dst, double s, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(dst + i), vs));
  }
  for (; i < n; ++i) dst[i] *= s;
}

SEGCURATE_AVX2 MaskedSums masked_sums(const double* values, const std::uint8_t* mask,
                                      std::size_t n) {
  __m256d on = _mm256_setzero_pd();
  __m256d total = _mm256_setzero_pd();
  __m256d count = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(values + i);
    const __m256d m = load_mask4(mask + i);
    on = _mm256_fmadd_pd(v, m, on);
    total = _mm256_add_pd(total, v);
    count = _mm256_add_pd(count, m);
  }
  MaskedSums out;
  out.on = hsum(on);
  out.off = hsum(total) - out.on;
  out.on_count = static_cast<std::size_t>(hsum(count));
  double tail_on = 0.0;
  double tail_off = 0.0;
  for (; i < n; ++i) {
    if (mask[i]) {
      tail_on += values[i];
      ++out.on_count;
    } else {
      tail_off += values[i];
    }
  }
  out.on += tail_on;
  out.off += tail_off;
  return out;
}

SEGCURATE_AVX2 double masked_sq_dev(const double* values, const std::uint8_t* mask,
                                    double center, std::size_t n) {
  const __m256d c = _mm256_set1_pd(center);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(values + i), c),
                                    load_mask4(mask + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double out = hsum(acc);
  for (; i < n; ++i) {
    if (mask[i]) {
      const double d = values[i] - center;
      out += d * d;
    }
  }
  return out;
}

SEGCURATE_AVX2 DiceTerms dice_terms(const double* probs, const std::uint8_t* target,
                                    std::size_t n) {
  __m256d inter = _mm256_setzero_pd();
  __m256d psum = _mm256_setzero_pd();
  __m256d gsum = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d p = _mm256_loadu_pd(probs + i);
    const __m256d g = load_mask4(target + i);
    inter = _mm256_fmadd_pd(p, g, inter);
    psum = _mm256_add_pd(psum, p);
    gsum = _mm256_add_pd(gsum, g);
  }
  DiceTerms out{hsum(inter), hsum(psum), hsum(gsum)};
  for (; i < n; ++i) {
    const double g = target[i] ? 1.0 : 0.0;
    out.intersection += probs[i] * g;
    out.prob_sum += probs[i];
    out.target_sum += g;
  }
  return out;
}

SEGCURATE_AVX2 OverlapCounts overlap(const std::uint8_t* a, const std::uint8_t* b,
                                     std::size_t n) {
  const __m256i zero = _mm256_setzero_si256();
  OverlapCounts out;
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    const __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + i));
    const __m256i vb = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b + i));
    // bits set where the byte is zero
    const auto za = static_cast<std::uint32_t>(_mm256_movemask_epi8(_mm256_cmpeq_epi8(va, zero)));
    const auto zb = static_cast<std::uint32_t>(_mm256_movemask_epi8(_mm256_cmpeq_epi8(vb, zero)));
    out.intersection += static_cast<std::uint64_t>(std::popcount(~za & ~zb));
    out.uni += static_cast<std::uint64_t>(std::popcount(~(za & zb)));
  }
  for (; i < n; ++i) {
    const bool x = a[i] != 0;
    const bool y = b[i] != 0;
    out.intersection += (x && y) ? 1 : 0;
    out.uni += (x || y) ? 1 : 0;
  }
  return out;
}

}  // namespace segcurate::kernels::avx2

#endif  // SEGCURATE_HAVE_AVX2
