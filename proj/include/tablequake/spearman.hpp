#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace tablequake {

struct SpearmanResult {
  std::optional<double> rho;  // absent when undefined
  std::optional<double> p;
  std::size_t n = 0;

  bool defined() const noexcept { return rho.has_value(); }
};

// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

// Largest sample size for which the p-value is computed by enumerating every
// permutation of y. Larger samples use the Student-t approximation, df = n - 2.
inline constexpr std::size_t kExactPermutationMaxN = 8;

// Spearman's rho as the Pearson correlation of average ranks, with a two-sided
// p-value. Undefined (never NaN) when n < 3 or either input is constant.
// Throws Errc::LengthMismatch on unequal lengths.
SpearmanResult spearman(std::span<const double> x, std::span<const double> y);

}  // namespace tablequake
