#include "tablequake/mock.hpp"

#include <cmath>

#include "tablequake/error.hpp"
#include "tablequake/rng.hpp"

namespace tablequake {

namespace {

std::map<Kind, double> kind_map_from_json(const nlohmann::json& j, std::string_view field) {
  std::map<Kind, double> out;
  if (!j.is_object())
    throw Error(Errc::ParseError, std::string(field) + " must be an object keyed by kind");
  for (const auto& [name, value] : j.items()) {
    if (!value.is_number())
      throw Error(Errc::ParseError, std::string(field) + "." + name + " must be a number");
    out[kind_from_name(name)] = value.get<double>();
  }
  return out;
}

nlohmann::json kind_map_to_json(const std::map<Kind, double>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [kind, v] : m) j[std::string(kind_name(kind))] = v;
  return j;
}

}  // namespace

void MockConfig::validate() const {
  if (!(base_accuracy >= 0.0 && base_accuracy <= 1.0))
    throw Error(Errc::InvalidArgument, "base_accuracy must lie in [0, 1]");
  for (const auto& [kind, p] : severity_penalty)
    if (!(p >= 0.0 && p <= 1.0))
      throw Error(Errc::InvalidArgument,
                  "severity_penalty." + std::string(kind_name(kind)) + " must lie in [0, 1]");
  for (const auto& [kind, d] : dispersion)
    if (!(d >= 0.0))
      throw Error(Errc::InvalidArgument,
                  "dispersion." + std::string(kind_name(kind)) + " must be >= 0");
  for (const auto& [kind, p] : severity_penalty)
    if (!dispersion.contains(kind))
      throw Error(Errc::UnknownKind,
                  "dispersion has no entry for kind " + std::string(kind_name(kind)));
  if (layers == 0 || heads == 0 || max_seq_len == 0)
    throw Error(Errc::InvalidArgument, "layers, heads and max_seq_len must be positive");
}

MockConfig mock_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::ParseError, "mock config must be a JSON object");
  MockConfig c;
  try {
    c.seed = j.value("seed", std::uint64_t{0});
    c.base_accuracy = j.value("base_accuracy", 1.0);
    if (j.contains("severity_penalty"))
      c.severity_penalty = kind_map_from_json(j.at("severity_penalty"), "severity_penalty");
    if (j.contains("dispersion"))
      c.dispersion = kind_map_from_json(j.at("dispersion"), "dispersion");
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
    c.model_id = j.value("model_id", c.model_id);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
  c.validate();
  return c;
}

nlohmann::json mock_config_to_json(const MockConfig& c) {
  return {{"seed", c.seed},
          {"base_accuracy", c.base_accuracy},
          {"severity_penalty", kind_map_to_json(c.severity_penalty)},
          {"dispersion", kind_map_to_json(c.dispersion)},
          {"layers", c.layers},
          {"heads", c.heads},
          {"max_seq_len", c.max_seq_len},
          {"model_id", c.model_id}};
}

std::string mock_predict(std::string_view instance_id, Kind kind,
                         std::span<const std::string> scoring_target, const MockConfig& config) {
  const auto it = config.severity_penalty.find(kind);
  if (it == config.severity_penalty.end())
    throw Error(Errc::UnknownKind,
                "mock config has no severity_penalty for " + std::string(kind_name(kind)));
  if (scoring_target.empty()) throw Error(Errc::InvalidArgument, "empty scoring target");

  std::string key(instance_id);
  key += '\x1f';
  key += kind_name(kind);
  SplitMix64 rng(derive_seed(config.seed, key));
  const double p_correct = config.base_accuracy * (1.0 - it->second);
  return rng.next_unit() < p_correct ? scoring_target.front() : std::string(kMockWrongAnswer);
}

std::string mock_predict(const PerturbedInstance& instance, const MockConfig& config) {
  return mock_predict(instance.base_id, instance.perturbation.kind, instance.scoring_target,
                      config);
}

AttentionTrace synth_trace(std::size_t seq_len, std::size_t layers, std::size_t heads,
                           double dispersion, std::uint64_t seed) {
  if (seq_len == 0 || layers == 0 || heads == 0)
    throw Error(Errc::BadShape, "synthetic trace dimensions must be positive");
  if (!(dispersion >= 0.0)) throw Error(Errc::BadShape, "dispersion must be >= 0");

  const double w = std::isinf(dispersion) ? 1.0 : dispersion / (1.0 + dispersion);
  const double n = static_cast<double>(seq_len);
  const auto background = static_cast<float>(w / n);
  const auto peak = static_cast<float>((1.0 - w) + w / n);

  SplitMix64 rng(seed);
  std::vector<float> data(layers * heads * seq_len * seq_len, background);
  for (std::size_t row = 0; row < layers * heads * seq_len; ++row)
    data[row * seq_len + rng.next_below(seq_len)] = peak;
  return AttentionTrace(layers, heads, seq_len, std::move(data));
}

}  // namespace tablequake
