#include <cstdlib>
#include <cstring>

#include "kernels_impl.hpp"
#include "segcurate/error.hpp"

namespace segcurate::kernels {
namespace {

const KernelTable kScalar{
    "scalar",           scalar::accumulate,    scalar::scale,   scalar::masked_sums,
    scalar::masked_sq_dev, scalar::dice_terms, scalar::overlap,
};

#if defined(SEGCURATE_HAVE_AVX2)
const KernelTable kAvx2{
    "avx2",           avx2::accumulate,    avx2::scale,   avx2::masked_sums,
    avx2::masked_sq_dev, avx2::dice_terms, avx2::overlap,
};
#endif

bool force_scalar() {
  const char* env = std::getenv("SEGCURATE_FORCE_SCALAR");
  return env != nullptr && std::strcmp(env, "0") != 0 && env[0] != '\0';
}

const KernelTable& select() {
  if (force_scalar()) return kScalar;
  if (const KernelTable* t = avx2_table()) return *t;
  return kScalar;
}

void check_same(std::size_t a, std::size_t b) {
  if (a != b) throw Error(ErrorCode::ShapeMismatch, "kernel operands differ in length");
}

}  // namespace

const KernelTable& scalar_table() noexcept { return kScalar; }

const KernelTable* avx2_table() noexcept {
#if defined(SEGCURATE_HAVE_AVX2)
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return supported ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() noexcept {
  static const KernelTable& table = select();
  return table;
}

void accumulate(std::span<double> dst, std::span<const double> src) {
  check_same(dst.size(), src.size());
  active().accumulate(dst.data(), src.data(), dst.size());
}

void scale(std::span<double> dst, double s) noexcept { active().scale(dst.data(), s, dst.size()); }

MaskedSums masked_sums(std::span<const double> values, std::span<const std::uint8_t> mask) {
  check_same(values.size(), mask.size());
  return active().masked_sums(values.data(), mask.data(), values.size());
}

double masked_sq_dev(std::span<const double> values, std::span<const std::uint8_t> mask,
                     double center) {
  check_same(values.size(), mask.size());
  return active().masked_sq_dev(values.data(), mask.data(), center, values.size());
}

DiceTerms dice_terms(std::span<const double> probs, std::span<const std::uint8_t> target) {
  check_same(probs.size(), target.size());
  return active().dice_terms(probs.data(), target.data(), probs.size());
}

OverlapCounts overlap(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  check_same(a.size(), b.size());
  return active().overlap(a.data(), b.data(), a.size());
}

}  // namespace segcurate::kernels
