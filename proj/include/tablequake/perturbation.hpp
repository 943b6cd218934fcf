#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tablequake/table.hpp"

namespace tablequake {

enum class Kind {
  Original,
  RowSwap,
  ColumnSwap,
  Transpose,
  TransposeRowSwap,
  TransposeColSwap,
  DVP,
  RVP,
  NVP,
  NT,
};

// Report order: Original, Column, Row, Transpose, Transpose Row,
// Transpose Col, NT, DVP, RVP, NVP.
inline constexpr std::array<Kind, 10> kReportOrder = {
    Kind::Original,         Kind::ColumnSwap,       Kind::RowSwap, Kind::Transpose,
    Kind::TransposeRowSwap, Kind::TransposeColSwap, Kind::NT,      Kind::DVP,
    Kind::RVP,              Kind::NVP,
};

inline constexpr std::array<Kind, 5> kStructuralKinds = {
    Kind::RowSwap, Kind::ColumnSwap, Kind::Transpose, Kind::TransposeRowSwap,
    Kind::TransposeColSwap,
};

inline constexpr std::string_view kRandomValue = "r@nD0m v@1u3";

// Short CLI name: original, row, col, transpose, trow, tcol, dvp, rvp, nvp, nt.
std::string_view kind_name(Kind kind);
// Row label used in summary tables ("Transpose Row", "NT", ...).
std::string_view kind_label(Kind kind);
// Throws Errc::UnknownKind naming the offending text.
Kind kind_from_name(std::string_view name);
std::vector<Kind> parse_kind_list(std::string_view comma_separated);

bool is_structural(Kind kind) noexcept;
bool takes_seed(Kind kind) noexcept;
// DVP, RVP and NVP need the answer to appear verbatim in the table.
bool needs_answer_in_table(Kind kind) noexcept;

struct Perturbation {
  Kind kind = Kind::Original;
  std::optional<std::uint64_t> seed;  // set for the *Swap kinds

  friend bool operator==(const Perturbation&, const Perturbation&) = default;
};

struct PerturbedInstance {
  std::string base_id;
  Perturbation perturbation;
  std::optional<Table> table;  // absent iff kind == NT
  std::string question;
  std::vector<std::string> scoring_target;
  std::vector<std::string> gold;  // original gold, kept for provenance
  std::size_t base_cells = 0;     // cell_count of the source table

  std::string output_id() const;

  friend bool operator==(const PerturbedInstance&, const PerturbedInstance&) = default;
};

Table transpose(const Table& table);
Table row_swap(const Table& table, std::uint64_t seed);
Table column_swap(const Table& table, std::uint64_t seed);
Table transpose_row_swap(const Table& table, std::uint64_t seed);
Table transpose_col_swap(const Table& table, std::uint64_t seed);

// Structural kinds and Original; other kinds are rejected.
Table apply_structural(const Table& table, Kind kind, std::uint64_t seed);

enum class TargetPolicy {
  Substituted,  // DVP/RVP scored against the value written into the table
  Original,     // DVP/RVP scored against the original gold answers
};

PerturbedInstance apply_value_perturbation(const QAInstance& instance, Kind kind,
                                           TargetPolicy policy = TargetPolicy::Substituted);

// Any kind. Structural kinds need a seed (std::nullopt is treated as 0).
PerturbedInstance perturb(const QAInstance& instance, const Perturbation& perturbation,
                          TargetPolicy policy = TargetPolicy::Substituted);

std::vector<QAInstance> filter_instances(std::span<const QAInstance> instances, std::size_t cap,
                                         bool require_answer_in_table);

nlohmann::json perturbed_to_json(const PerturbedInstance& p);
PerturbedInstance perturbed_from_json(const nlohmann::json& j);
std::vector<PerturbedInstance> parse_perturbed(std::string_view jsonl);

}  // namespace tablequake
