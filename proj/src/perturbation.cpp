#include "tablequake/perturbation.hpp"

#include <algorithm>

#include "tablequake/error.hpp"
#include "tablequake/rng.hpp"

namespace tablequake {

namespace {

struct KindInfo {
  Kind kind;
  std::string_view name;
  std::string_view label;
};

constexpr std::array<KindInfo, 10> kKinds = {{
    {Kind::Original, "original", "Original"},
    {Kind::RowSwap, "row", "Row"},
    {Kind::ColumnSwap, "col", "Column"},
    {Kind::Transpose, "transpose", "Transpose"},
    {Kind::TransposeRowSwap, "trow", "Transpose Row"},
    {Kind::TransposeColSwap, "tcol", "Transpose Col"},
    {Kind::DVP, "dvp", "DVP"},
    {Kind::RVP, "rvp", "RVP"},
    {Kind::NVP, "nvp", "NVP"},
    {Kind::NT, "nt", "NT"},
}};

const KindInfo& info(Kind kind) {
  return *std::find_if(kKinds.begin(), kKinds.end(),
                       [kind](const KindInfo& k) { return k.kind == kind; });
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

Table replace_answer_cells(const Table& table, const std::vector<std::string>& gold,
                           const std::string& replacement) {
  const auto is_answer = [&gold](const std::string& cell) {
    return std::find(gold.begin(), gold.end(), cell) != gold.end();
  };
  Row header = table.header();
  for (auto& cell : header)
    if (is_answer(cell)) cell = replacement;
  std::vector<Row> rows = table.rows();
  for (auto& row : rows)
    for (auto& cell : row)
      if (is_answer(cell)) cell = replacement;
  return Table(std::move(header), std::move(rows));
}

}  // namespace

std::string_view kind_name(Kind kind) { return info(kind).name; }
std::string_view kind_label(Kind kind) { return info(kind).label; }

Kind kind_from_name(std::string_view name) {
  for (const auto& k : kKinds)
    if (k.name == name) return k.kind;
  throw Error(Errc::UnknownKind, "unknown perturbation kind '" + std::string(name) + "'");
}

std::vector<Kind> parse_kind_list(std::string_view comma_separated) {
  std::vector<Kind> kinds;
  std::size_t pos = 0;
  while (pos <= comma_separated.size()) {
    auto comma = comma_separated.find(',', pos);
    if (comma == std::string_view::npos) comma = comma_separated.size();
    const auto token = trim(comma_separated.substr(pos, comma - pos));
    if (!token.empty()) {
      const Kind k = kind_from_name(token);
      if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
    }
    pos = comma + 1;
  }
  if (kinds.empty()) throw Error(Errc::UnknownKind, "empty kind list");
  return kinds;
}

bool is_structural(Kind kind) noexcept {
  return std::find(kStructuralKinds.begin(), kStructuralKinds.end(), kind) !=
         kStructuralKinds.end();
}

bool takes_seed(Kind kind) noexcept {
  return kind == Kind::RowSwap || kind == Kind::ColumnSwap || kind == Kind::TransposeRowSwap ||
         kind == Kind::TransposeColSwap;
}

bool needs_answer_in_table(Kind kind) noexcept {
  return kind == Kind::DVP || kind == Kind::RVP || kind == Kind::NVP;
}

std::string PerturbedInstance::output_id() const {
  return base_id + "#" + std::string(kind_name(perturbation.kind));
}

Table transpose(const Table& table) {
  const std::size_t grid_rows = table.num_rows() + 1;
  const std::size_t cols = table.num_columns();
  // Column c of the source grid becomes row c of the output grid.
  std::vector<Row> out(cols, Row(grid_rows));
  for (std::size_t r = 0; r < grid_rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c][r] = table.grid_cell(r, c);
  Row header = std::move(out.front());
  out.erase(out.begin());
  return Table(std::move(header), std::move(out));
}

Table row_swap(const Table& table, std::uint64_t seed) {
  const auto perm = non_identity_permutation(table.num_rows(), seed);
  std::vector<Row> rows;
  rows.reserve(perm.size());
  for (const auto src : perm) rows.push_back(table.rows()[src]);
  return Table(table.header(), std::move(rows));
}

Table column_swap(const Table& table, std::uint64_t seed) {
  const auto perm = non_identity_permutation(table.num_columns(), seed);
  const auto permute = [&perm](const Row& row) {
    Row out;
    out.reserve(perm.size());
    for (const auto src : perm) out.push_back(row[src]);
    return out;
  };
  std::vector<Row> rows;
  rows.reserve(table.num_rows());
  for (const auto& row : table.rows()) rows.push_back(permute(row));
  return Table(permute(table.header()), std::move(rows));
}

Table transpose_row_swap(const Table& table, std::uint64_t seed) {
  return row_swap(transpose(table), seed);
}

Table transpose_col_swap(const Table& table, std::uint64_t seed) {
  return column_swap(transpose(table), seed);
}

Table apply_structural(const Table& table, Kind kind, std::uint64_t seed) {
  switch (kind) {
    case Kind::Original: return table;
    case Kind::RowSwap: return row_swap(table, seed);
    case Kind::ColumnSwap: return column_swap(table, seed);
    case Kind::Transpose: return transpose(table);
    case Kind::TransposeRowSwap: return transpose_row_swap(table, seed);
    case Kind::TransposeColSwap: return transpose_col_swap(table, seed);
    default:
      throw Error(Errc::InvalidArgument,
                  std::string(kind_name(kind)) + " is not a structural perturbation");
  }
}

PerturbedInstance apply_value_perturbation(const QAInstance& instance, Kind kind,
                                           TargetPolicy policy) {
  PerturbedInstance out;
  out.base_id = instance.id;
  out.perturbation = {kind, std::nullopt};
  out.question = instance.question;
  out.gold = instance.gold;
  out.base_cells = instance.table ? cell_count(*instance.table) : 0;

  if (kind == Kind::NT) {
    out.scoring_target = instance.gold;
    return out;
  }
  if (!needs_answer_in_table(kind))
    throw Error(Errc::InvalidArgument,
                std::string(kind_name(kind)) + " is not a value perturbation");
  if (!answer_in_table(instance))
    throw Error(Errc::AnswerNotInTable,
                "instance " + instance.id + ": no cell equals a gold answer");

  switch (kind) {
    case Kind::DVP:
      if (!instance.counterfactual)
        throw Error(Errc::MissingCounterfactual, "instance " + instance.id);
      out.table = replace_answer_cells(*instance.table, instance.gold, *instance.counterfactual);
      out.scoring_target = {*instance.counterfactual};
      break;
    case Kind::RVP:
      out.table = replace_answer_cells(*instance.table, instance.gold, std::string(kRandomValue));
      out.scoring_target = {std::string(kRandomValue)};
      break;
    default:  // NVP
      out.table = replace_answer_cells(*instance.table, instance.gold, "");
      out.scoring_target = instance.gold;
  }
  if (policy == TargetPolicy::Original) out.scoring_target = instance.gold;
  return out;
}

PerturbedInstance perturb(const QAInstance& instance, const Perturbation& perturbation,
                          TargetPolicy policy) {
  const Kind kind = perturbation.kind;
  if (kind == Kind::NT || needs_answer_in_table(kind))
    return apply_value_perturbation(instance, kind, policy);
  if (!instance.table)
    throw Error(Errc::InvalidArgument, "instance " + instance.id + " has no table");

  PerturbedInstance out;
  out.base_id = instance.id;
  out.perturbation = perturbation;
  if (takes_seed(kind) && !out.perturbation.seed) out.perturbation.seed = 0;
  if (!takes_seed(kind)) out.perturbation.seed.reset();
  out.table = apply_structural(*instance.table, kind, out.perturbation.seed.value_or(0));
  out.question = instance.question;
  out.scoring_target = instance.gold;
  out.gold = instance.gold;
  out.base_cells = cell_count(*instance.table);
  return out;
}

std::vector<QAInstance> filter_instances(std::span<const QAInstance> instances, std::size_t cap,
                                         bool require_answer_in_table) {
  if (cap < 1) throw Error(Errc::InvalidArgument, "cap must be >= 1");
  std::vector<QAInstance> out;
  for (const auto& inst : instances) {
    if (!inst.table || cell_count(*inst.table) >= cap) continue;
    if (require_answer_in_table && !answer_in_table(inst)) continue;
    out.push_back(inst);
  }
  return out;
}

nlohmann::json perturbed_to_json(const PerturbedInstance& p) {
  nlohmann::json j;
  j["id"] = p.output_id();
  j["base_id"] = p.base_id;
  j["kind"] = kind_name(p.perturbation.kind);
  j["seed"] = p.perturbation.seed ? nlohmann::json(*p.perturbation.seed) : nlohmann::json();
  if (p.table) {
    j["header"] = p.table->header();
    j["rows"] = p.table->rows();
  }
  j["question"] = p.question;
  j["gold"] = p.gold;
  j["scoring_target"] = p.scoring_target;
  j["base_cells"] = p.base_cells;
  return j;
}

PerturbedInstance perturbed_from_json(const nlohmann::json& j) {
  PerturbedInstance p;
  try {
    p.base_id = j.at("base_id").get<std::string>();
    p.perturbation.kind = kind_from_name(j.at("kind").get<std::string>());
    if (auto it = j.find("seed"); it != j.end() && !it->is_null())
      p.perturbation.seed = it->get<std::uint64_t>();
    if (j.contains("header") && !j.at("header").is_null()) p.table = table_from_json(j);
    p.question = j.at("question").get<std::string>();
    p.gold = j.at("gold").get<std::vector<std::string>>();
    p.scoring_target = j.at("scoring_target").get<std::vector<std::string>>();
    p.base_cells = j.value("base_cells", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
  if ((p.perturbation.kind == Kind::NT) == p.table.has_value())
    throw Error(Errc::ParseError, "table must be absent exactly for kind nt");
  if (p.scoring_target.empty()) throw Error(Errc::ParseError, "empty scoring_target");
  return p;
}

std::vector<PerturbedInstance> parse_perturbed(std::string_view jsonl) {
  std::vector<PerturbedInstance> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < jsonl.size()) {
    auto eol = jsonl.find('\n', pos);
    if (eol == std::string_view::npos) eol = jsonl.size();
    const auto line = jsonl.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw Error(Errc::MalformedLine, "line " + std::to_string(line_no));
    try {
      out.push_back(perturbed_from_json(j));
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.detail());
    }
  }
  return out;
}

}  // namespace tablequake
