#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tablequake/spearman.hpp"

namespace tablequake {

/// Attention weights for one forward pass: layers x heads matrices of
/// seq_len x seq_len float32 values, row = query position, column = key.
///
/// Ingest checks that every row is a probability vector. Rows whose sum is
/// within 1e-4 of one are rescaled to sum to one; anything further off, any
/// negative or non-finite entry, and (when causal) any non-zero entry above
/// the diagonal is rejected with Errc::NotAProbabilityVector.
class AttentionTrace {
 public:
  static constexpr double kRowSumTolerance = 1e-4;

  AttentionTrace(std::size_t layers, std::size_t heads, std::size_t seq_len,
                 std::vector<float> data, bool causal = false,
                 std::optional<std::size_t> prompt_len = std::nullopt);

  std::size_t layers() const noexcept { return layers_; }
  std::size_t heads() const noexcept { return heads_; }
  std::size_t seq_len() const noexcept { return seq_len_; }
  bool causal() const noexcept { return causal_; }
  // Number of leading query rows that belong to the prompt.
  std::size_t prompt_len() const noexcept { return prompt_len_; }

  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> matrix(std::size_t layer, std::size_t head) const;
  std::span<const float> row(std::size_t layer, std::size_t head, std::size_t query) const;

  friend bool operator==(const AttentionTrace&, const AttentionTrace&) = default;

 private:
  std::size_t layers_;
  std::size_t heads_;
  std::size_t seq_len_;
  bool causal_;
  std::size_t prompt_len_;
  std::vector<float> data_;
};

// layers x heads grid of reals, row-major by layer.
struct HeadGrid {
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::vector<double> values;

  HeadGrid() = default;
  HeadGrid(std::size_t l, std::size_t h, double fill = 0.0)
      : layers(l), heads(h), values(l * h, fill) {}

  double& at(std::size_t l, std::size_t h) { return values.at(l * heads + h); }
  double at(std::size_t l, std::size_t h) const { return values.at(l * heads + h); }
  double mean() const;

  friend bool operator==(const HeadGrid&, const HeadGrid&) = default;
};

struct EntropyProfile {
  HeadGrid grid;  // mean row entropy in nats, or in units of ln n when normalized
  std::size_t seq_len = 0;
  bool normalized = false;

  friend bool operator==(const EntropyProfile&, const EntropyProfile&) = default;
};

nlohmann::json profile_to_json(const EntropyProfile& profile);
EntropyProfile profile_from_json(const nlohmann::json& j);

// -sum p ln p with 0 ln 0 = 0. Throws NotAProbabilityVector unless entries
// are non-negative and sum to one within 1e-4.
double row_entropy(std::span<const double> p);
double row_entropy(std::span<const float> p);

enum class PositionPolicy {
  Prompt,  // average over the first prompt_len query rows
  All,     // average over every query row in the trace
};

struct EntropyOptions {
  bool normalize = false;  // divide by ln n when n >= 2
  PositionPolicy positions = PositionPolicy::Prompt;
};

EntropyProfile head_entropy_profile(const AttentionTrace& trace, EntropyOptions options = {});

// pert - orig. Sequence lengths may differ; layer and head counts may not.
HeadGrid entropy_delta(const EntropyProfile& orig, const EntropyProfile& pert);

struct CorrelationCell {
  std::optional<double> rho;
  std::optional<double> p;
  std::size_t n_points = 0;

  friend bool operator==(const CorrelationCell&, const CorrelationCell&) = default;
};

struct CorrelationGrid {
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::vector<CorrelationCell> cells;

  const CorrelationCell& at(std::size_t l, std::size_t h) const {
    return cells.at(l * heads + h);
  }
  std::size_t defined_count() const;

  friend bool operator==(const CorrelationGrid&, const CorrelationGrid&) = default;
};

// Spearman per (layer, head) over data points keyed by id. Both maps must
// hold the same non-empty key set (Errc::IdMismatch) and every delta grid
// must share one shape (Errc::ShapeMismatch). Fewer than three points, or a
// constant column, leave the cell undefined.
CorrelationGrid correlation_grid(const std::map<std::string, HeadGrid>& deltas,
                                 const std::map<std::string, double>& em_diffs);

struct ScatterPoint {
  std::string label;
  double mean_delta = 0.0;
  double em = 0.0;  // EM drop (original - perturbed) under the default convention
};

SpearmanResult aggregate_scatter(std::span<const ScatterPoint> points);

struct HeadScore {
  std::size_t layer = 0;
  std::size_t head = 0;
  double rho = 0.0;

  friend bool operator==(const HeadScore&, const HeadScore&) = default;
};

struct HeadRanking {
  std::vector<HeadScore> top;     // highest rho first
  std::vector<HeadScore> bottom;  // lowest rho first
};

// Ties break by (layer, head) ascending in both lists.
HeadRanking rank_heads(const CorrelationGrid& grid, std::size_t k);

}  // namespace tablequake
