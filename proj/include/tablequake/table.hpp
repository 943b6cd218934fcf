#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace tablequake {

using Row = std::vector<std::string>;

/// Rectangular grid of text cells with a header row.
///
/// Construction validates rectangularity (every row as wide as the header,
/// header non-empty) and replaces embedded line breaks with single spaces so
/// one rendered line always corresponds to one row. A Table never changes
/// after construction; perturbations produce new tables.
class Table {
 public:
  Table(Row header, std::vector<Row> rows);

  const Row& header() const noexcept { return header_; }
  const std::vector<Row>& rows() const noexcept { return rows_; }
  std::size_t num_columns() const noexcept { return header_.size(); }
  std::size_t num_rows() const noexcept { return rows_.size(); }

  // Row 0 is the header; rows 1..num_rows() are the body.
  const std::string& grid_cell(std::size_t grid_row, std::size_t col) const;

  bool contains_cell(std::string_view text) const;

  friend bool operator==(const Table&, const Table&) = default;

 private:
  Row header_;
  std::vector<Row> rows_;
};

enum class TableFormat { Csv, Json };

Table parse_table(std::string_view text, TableFormat format);
Table table_from_json(const nlohmann::json& j);
nlohmann::json table_to_json(const Table& table);

// Pipe-table prompt rendering. The template is fixed: a header line, a
// "| --- |" separator line, one line per body row, no trailing newline.
std::string render_pipe(const Table& table);

// CSV rendering in the same dialect parse_table reads (always quotes fields
// that need it, "\n" record separator, no trailing newline).
std::string render_csv(const Table& table);

// (body rows + 1) * columns: header cells count toward the size cap.
std::size_t cell_count(const Table& table);

struct QAInstance {
  std::string id;
  std::optional<Table> table;
  std::string question;
  std::vector<std::string> gold;
  std::optional<std::string> counterfactual;
  std::string dataset_tag;

  // Throws on empty gold or a counterfactual equal to a gold answer.
  void validate() const;

  friend bool operator==(const QAInstance&, const QAInstance&) = default;
};

// True when some table cell equals some gold answer byte-for-byte.
bool answer_in_table(const QAInstance& instance);

QAInstance instance_from_json(const nlohmann::json& j);
nlohmann::json instance_to_json(const QAInstance& instance);

enum class InstanceFormat { Csv, JsonLines };

// Instances are returned in file order; ids must be unique. Parse failures
// are reported with the 0-based record index.
std::vector<QAInstance> load_instances(const std::filesystem::path& path, InstanceFormat format);
std::vector<QAInstance> parse_instances(std::string_view content, InstanceFormat format);

namespace csv {

std::vector<Row> parse(std::string_view text);
std::string quote(std::string_view field);

}  // namespace csv

bool valid_utf8(std::string_view text) noexcept;

}  // namespace tablequake
