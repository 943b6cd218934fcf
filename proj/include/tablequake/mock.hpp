#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "tablequake/attention.hpp"
#include "tablequake/perturbation.hpp"

namespace tablequake {

// What the mock model says when it gets an instance wrong.
inline constexpr std::string_view kMockWrongAnswer = "mock-miss";

/// Synthetic model settings. severity_penalty lowers the chance of a correct
/// answer per kind; dispersion flattens the synthetic attention per kind.
struct MockConfig {
  std::uint64_t seed = 0;
  double base_accuracy = 1.0;
  std::map<Kind, double> severity_penalty;
  std::map<Kind, double> dispersion;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t max_seq_len = 48;
  std::string model_id = "mock";

  void validate() const;
};

MockConfig mock_config_from_json(const nlohmann::json& j);
nlohmann::json mock_config_to_json(const MockConfig& config);

// Returns the first scoring target with probability
// base_accuracy * (1 - penalty[kind]), otherwise kMockWrongAnswer. The draw
// comes from a SplitMix64 stream keyed by (seed, instance_id, kind).
// Errc::UnknownKind when the config has no penalty for kind.
std::string mock_predict(std::string_view instance_id, Kind kind,
                         std::span<const std::string> scoring_target, const MockConfig& config);
std::string mock_predict(const PerturbedInstance& instance, const MockConfig& config);

// Every row is (1 - w) * one_hot + w * uniform with w = d / (1 + d); the hot
// key is drawn per row from the seeded stream. Infinite dispersion gives
// uniform rows. Errc::BadShape for zero sizes or negative dispersion.
AttentionTrace synth_trace(std::size_t seq_len, std::size_t layers, std::size_t heads,
                           double dispersion, std::uint64_t seed);

}  // namespace tablequake
