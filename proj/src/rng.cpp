#include "tablequake/rng.hpp"

#include <numeric>
#include <utility>

#include "tablequake/run_store.hpp"

namespace tablequake {

std::vector<std::size_t> fisher_yates(std::size_t n, SplitMix64& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i-- > 1;) {
    const std::size_t j = rng.next_below(i + 1);
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

std::vector<std::size_t> non_identity_permutation(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  auto perm = fisher_yates(n, rng);
  if (n < 2) return perm;
  const auto is_identity = [](const std::vector<std::size_t>& p) {
    for (std::size_t k = 0; k < p.size(); ++k)
      if (p[k] != k) return false;
    return true;
  };
  while (is_identity(perm)) perm = fisher_yates(n, rng);
  return perm;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) noexcept {
  return mix64(seed ^ fnv1a64(key));
}

}  // namespace tablequake
