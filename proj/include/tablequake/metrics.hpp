#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tablequake/perturbation.hpp"

namespace tablequake {

// Bumped whenever normalize_answer changes, so stored scores can be compared.
inline constexpr int kNormalizationVersion = 1;

/// Canonical answer form used by EM and F1: NFKC, lowercase, punctuation
/// and symbols turned into spaces, the articles "a", "an", "the" removed,
/// whitespace collapsed and trimmed. Invalid UTF-8 is replaced, not rejected.
std::string normalize_answer(std::string_view s);

int exact_match(std::string_view prediction, std::span<const std::string> targets);

// Token-SET F1 of the normalized strings, maximized over targets.
double f1(std::string_view prediction, std::span<const std::string> targets);

double emd(double em_perturbed, double em_original);

struct OutcomePair {
  int em_original = 0;
  int em_perturbed = 0;
};

double variation_percentage(std::span<const OutcomePair> pairs);

struct ScoredPair {
  std::string instance_id;
  Kind kind = Kind::Original;
  int em = 0;
  double f1 = 0.0;
  std::size_t cells = 0;  // cell count of the source table, for size binning

  friend bool operator==(const ScoredPair&, const ScoredPair&) = default;
};

ScoredPair score_prediction(const PerturbedInstance& target, std::string_view prediction);

struct AggregateReport {
  Kind kind = Kind::Original;
  std::size_t n = 0;
  double em_mean = 0.0;
  double f1_mean = 0.0;
  std::optional<double> emd;  // absent on the Original row
  std::optional<double> vp;
  std::size_t c2w = 0;
  std::size_t w2c = 0;
};

// Means of one scored run with no comparison (the Original row).
AggregateReport summarize(std::span<const ScoredPair> run);

// Compares a perturbed run against the original run over the same instance
// ids (Errc::IdMismatch otherwise). The perturbed run must hold one kind.
AggregateReport aggregate(std::span<const ScoredPair> original, std::span<const ScoredPair> perturbed);

nlohmann::json aggregate_to_json(const AggregateReport& report);

std::string scored_to_csv(std::span<const ScoredPair> scored);
std::vector<ScoredPair> scored_from_csv(std::string_view text);

}  // namespace tablequake
