#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tablequake/attention.hpp"
#include "tablequake/metrics.hpp"

namespace tablequake {

// Half-open cell-count interval [lo, hi).
struct SizeBin {
  std::size_t lo = 0;
  std::size_t hi = 0;

  friend bool operator==(const SizeBin&, const SizeBin&) = default;
};

// `count` equal-width bins covering [0, cap).
std::vector<SizeBin> default_bins(std::size_t cap = 150, std::size_t count = 6);
// "default" or "0-25,25-50,...". Validated like size_bin_report's input.
std::vector<SizeBin> parse_bins(std::string_view spec);
// Bins must be non-empty intervals, ordered, contiguous and start at 0.
void validate_bins(std::span<const SizeBin> bins);

struct BinRow {
  SizeBin bin;
  Kind kind = Kind::Original;
  std::size_t count = 0;
  double em_mean = 0.0;  // 0 when count == 0
  double f1_mean = 0.0;
};

// One row per (kind, bin) for every kind present, kinds in report order and
// bins ascending. Empty bins are kept with count 0. Errc::BadBins for
// malformed bins or a cell count outside them.
std::vector<BinRow> size_bin_report(std::span<const ScoredPair> scored,
                                    std::span<const SizeBin> bins);
std::string bins_to_csv(std::span<const BinRow> rows);

// rho per cell: layers as lines, heads as columns, empty field when
// undefined. Lines are joined by "\n" with no trailing newline.
std::string heatmap_csv(const CorrelationGrid& grid);
// Self-contained SVG with a blue-white-red scale over [-1, 1]; undefined
// cells are hatched.
std::string heatmap_svg(const CorrelationGrid& grid, std::string_view title);
std::string heatmap_color(double rho);
// Writes heatmap_{name}.csv and heatmap_{name}.svg into dir.
void heatmap_emit(const CorrelationGrid& grid, const std::filesystem::path& dir,
                  std::string_view name);

nlohmann::json correlation_grid_to_json(const CorrelationGrid& grid);

struct SummaryTable {
  std::string text;
  nlohmann::json json;
};

// Rows in report order; the Original row carries no VP or Emd. Errc::MissingOriginal
// when no Original aggregate is given.
SummaryTable summary_table(std::span<const AggregateReport> aggregates);

// Header "<label_column>,mean_entropy_delta,em_drop".
std::string scatter_csv(std::span<const ScatterPoint> points, std::string_view label_column = "kind");

}  // namespace tablequake
