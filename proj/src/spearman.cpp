#include "tablequake/spearman.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "tablequake/error.hpp"

namespace tablequake {

namespace {

bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// Doubled average ranks are integers, so the permutation statistic
// n * sum(a_i * b_pi(i)) - sum(a) * sum(b) can be compared exactly.
double exact_permutation_p(std::span<const double> rx, std::span<const double> ry) {
  const std::size_t n = rx.size();
  std::vector<std::int64_t> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = std::llround(2.0 * rx[i]);
    b[i] = std::llround(2.0 * ry[i]);
  }
  const std::int64_t sum_a = std::accumulate(a.begin(), a.end(), std::int64_t{0});
  const std::int64_t sum_b = std::accumulate(b.begin(), b.end(), std::int64_t{0});
  const auto n64 = static_cast<std::int64_t>(n);
  const auto statistic = [&](const std::vector<std::size_t>& perm) {
    std::int64_t dot = 0;
    for (std::size_t i = 0; i < n; ++i) dot += a[i] * b[perm[i]];
    const std::int64_t s = n64 * dot - sum_a * sum_b;
    return s < 0 ? -s : s;
  };

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  const std::int64_t observed = statistic(perm);
  std::uint64_t extreme = 0, total = 0;
  do {
    ++total;
    if (statistic(perm) >= observed) ++extreme;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(extreme) / static_cast<double>(total);
}

double t_approximation_p(double rho, std::size_t n) {
  if (std::abs(rho) >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = rho * std::sqrt(df / ((1.0 + rho) * (1.0 - rho)));
  const boost::math::students_t_distribution<double> dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // positions i..j-1 hold ties; their 1-based ranks are i+1..j
    const double mean_rank = static_cast<double>(i + 1 + j) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = mean_rank;
    i = j;
  }
  return ranks;
}

SpearmanResult spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw Error(Errc::LengthMismatch, "x has " + std::to_string(x.size()) + " values, y has " +
                                          std::to_string(y.size()));
  const auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(x.begin(), x.end(), finite) || !std::all_of(y.begin(), y.end(), finite))
    throw Error(Errc::InvalidArgument, "spearman inputs must be finite");
  SpearmanResult result;
  result.n = x.size();
  if (x.size() < 3 || is_constant(x) || is_constant(y)) return result;

  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double rho = pearson(rx, ry);
  result.rho = rho;
  result.p = x.size() <= kExactPermutationMaxN ? exact_permutation_p(rx, ry)
                                               : t_approximation_p(rho, x.size());
  return result;
}

}  // namespace tablequake
