#include "tablequake/table.hpp"

#include <algorithm>
#include <unordered_set>

#include "tablequake/error.hpp"
#include "tablequake/io.hpp"

namespace tablequake {

namespace {

std::string normalize_newlines(std::string cell) {
  std::string out;
  out.reserve(cell.size());
  for (std::size_t i = 0; i < cell.size(); ++i) {
    const char c = cell[i];
    if (c == '\r') {
      if (i + 1 < cell.size() && cell[i + 1] == '\n') ++i;
      out.push_back(' ');
    } else if (c == '\n') {
      out.push_back(' ');
    } else {
      out.push_back(c);
    }
  }
  return out;
}

void append_escaped_pipe(std::string& out, std::string_view cell) {
  for (const char c : cell) {
    if (c == '|') out.push_back('\\');
    out.push_back(c);
  }
}

void append_pipe_line(std::string& out, const Row& row) {
  out += "|";
  for (const auto& cell : row) {
    out += ' ';
    append_escaped_pipe(out, cell);
    out += " |";
  }
}

std::string cell_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number() || v.is_boolean()) return v.dump();
  if (v.is_null()) return {};
  throw Error(Errc::ParseError, "table cells must be scalars");
}

Row row_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(Errc::ParseError, "table row must be an array");
  Row row;
  row.reserve(j.size());
  for (const auto& v : j) row.push_back(cell_text(v));
  return row;
}

std::vector<std::string> gold_from_text(const std::string& text) {
  if (!text.empty() && text.front() == '[') {
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_array())
      throw Error(Errc::ParseError, "gold column is not a JSON array");
    std::vector<std::string> gold;
    for (const auto& v : j) gold.push_back(cell_text(v));
    return gold;
  }
  return {text};
}

QAInstance instance_from_csv_record(const Row& names, const Row& record) {
  if (record.size() != names.size())
    throw Error(Errc::RaggedInput, "record has " + std::to_string(record.size()) +
                                       " fields, header has " + std::to_string(names.size()));
  QAInstance inst;
  bool has_id = false, has_question = false, has_gold = false;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& name = names[i];
    const auto& value = record[i];
    if (name == "id") {
      inst.id = value;
      has_id = true;
    } else if (name == "question") {
      inst.question = value;
      has_question = true;
    } else if (name == "gold") {
      inst.gold = gold_from_text(value);
      has_gold = true;
    } else if (name == "counterfactual") {
      if (!value.empty()) inst.counterfactual = value;
    } else if (name == "dataset_tag") {
      inst.dataset_tag = value;
    } else if (name == "table") {
      if (!value.empty()) inst.table = parse_table(value, TableFormat::Csv);
    }
  }
  if (!has_id || !has_question || !has_gold)
    throw Error(Errc::ParseError, "CSV instance file needs id, question and gold columns");
  return inst;
}

}  // namespace

bool valid_utf8(std::string_view text) noexcept {
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlong forms, surrogates and out-of-range code points.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF)
      return false;
    i += len;
  }
  return true;
}

Table::Table(Row header, std::vector<Row> rows) : header_(std::move(header)), rows_(std::move(rows)) {
  if (header_.empty()) throw Error(Errc::EmptyInput, "table has no header cells");
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    if (rows_[r].size() != header_.size())
      throw Error(Errc::RaggedInput, "row " + std::to_string(r) + " has " +
                                         std::to_string(rows_[r].size()) + " cells, header has " +
                                         std::to_string(header_.size()));
  }
  for (auto& cell : header_) cell = normalize_newlines(std::move(cell));
  for (auto& row : rows_)
    for (auto& cell : row) cell = normalize_newlines(std::move(cell));
}

const std::string& Table::grid_cell(std::size_t grid_row, std::size_t col) const {
  return grid_row == 0 ? header_.at(col) : rows_.at(grid_row - 1).at(col);
}

bool Table::contains_cell(std::string_view text) const {
  const auto eq = [text](const std::string& c) { return c == text; };
  if (std::any_of(header_.begin(), header_.end(), eq)) return true;
  return std::any_of(rows_.begin(), rows_.end(),
                     [&](const Row& row) { return std::any_of(row.begin(), row.end(), eq); });
}

namespace csv {

std::vector<Row> parse(std::string_view text) {
  std::vector<Row> records;
  Row record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;  // distinguishes "" at end of input from no record

  const auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
  };
  const auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
    field_started = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        field_started = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw Error(Errc::ParseError, "unterminated quoted field");
  if (field_started || !record.empty()) end_record();
  return records;
}

std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (const char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace csv

Table parse_table(std::string_view text, TableFormat format) {
  if (!valid_utf8(text)) throw Error(Errc::Encoding, "table text is not valid UTF-8");
  if (format == TableFormat::Csv) {
    auto records = csv::parse(text);
    if (records.empty()) throw Error(Errc::EmptyInput, "no header row");
    Row header = std::move(records.front());
    records.erase(records.begin());
    return Table(std::move(header), std::move(records));
  }
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::ParseError, "invalid JSON table");
  return table_from_json(j);
}

Table table_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("header"))
    throw Error(Errc::EmptyInput, "JSON table needs a header array");
  Row header = row_from_json(j.at("header"));
  std::vector<Row> rows;
  if (j.contains("rows")) {
    const auto& jr = j.at("rows");
    if (!jr.is_array()) throw Error(Errc::ParseError, "rows must be an array");
    for (const auto& r : jr) rows.push_back(row_from_json(r));
  }
  return Table(std::move(header), std::move(rows));
}

nlohmann::json table_to_json(const Table& table) {
  return {{"header", table.header()}, {"rows", table.rows()}};
}

std::string render_pipe(const Table& table) {
  std::string out;
  append_pipe_line(out, table.header());
  out += "\n|";
  for (std::size_t c = 0; c < table.num_columns(); ++c) out += " --- |";
  for (const auto& row : table.rows()) {
    out += '\n';
    append_pipe_line(out, row);
  }
  return out;
}

std::string render_csv(const Table& table) {
  std::string out;
  const auto line = [&out](const Row& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += csv::quote(row[c]);
    }
  };
  line(table.header());
  for (const auto& row : table.rows()) {
    out += '\n';
    line(row);
  }
  return out;
}

std::size_t cell_count(const Table& table) { return (table.num_rows() + 1) * table.num_columns(); }

void QAInstance::validate() const {
  if (gold.empty()) throw Error(Errc::ParseError, "instance " + id + " has no gold answers");
  if (counterfactual &&
      std::find(gold.begin(), gold.end(), *counterfactual) != gold.end())
    throw Error(Errc::ParseError, "instance " + id + ": counterfactual equals a gold answer");
}

bool answer_in_table(const QAInstance& instance) {
  if (!instance.table) return false;
  return std::any_of(instance.gold.begin(), instance.gold.end(),
                     [&](const std::string& g) { return instance.table->contains_cell(g); });
}

QAInstance instance_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::ParseError, "instance must be a JSON object");
  QAInstance inst;
  try {
    inst.id = j.at("id").get<std::string>();
    inst.question = j.at("question").get<std::string>();
    const auto& gold = j.at("gold");
    if (gold.is_string()) {
      inst.gold = {gold.get<std::string>()};
    } else {
      for (const auto& g : gold) inst.gold.push_back(cell_text(g));
    }
    if (auto it = j.find("counterfactual"); it != j.end() && !it->is_null())
      inst.counterfactual = it->get<std::string>();
    if (auto it = j.find("dataset_tag"); it != j.end() && !it->is_null())
      inst.dataset_tag = it->get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
  if (j.contains("header") && !j.at("header").is_null()) inst.table = table_from_json(j);
  inst.validate();
  return inst;
}

nlohmann::json instance_to_json(const QAInstance& instance) {
  nlohmann::json j;
  j["id"] = instance.id;
  if (instance.table) {
    j["header"] = instance.table->header();
    j["rows"] = instance.table->rows();
  }
  j["question"] = instance.question;
  j["gold"] = instance.gold;
  if (instance.counterfactual) j["counterfactual"] = *instance.counterfactual;
  j["dataset_tag"] = instance.dataset_tag;
  return j;
}

std::vector<QAInstance> parse_instances(std::string_view content, InstanceFormat format) {
  if (!valid_utf8(content)) throw Error(Errc::Encoding, "instance file is not valid UTF-8");
  std::vector<QAInstance> out;
  std::unordered_set<std::string> seen;

  const auto add = [&](QAInstance inst, std::size_t index) {
    if (!seen.insert(inst.id).second)
      throw Error(Errc::DuplicateId, "record " + std::to_string(index) + ": duplicate id '" +
                                         inst.id + "'");
    out.push_back(std::move(inst));
  };
  const auto with_index = [](std::size_t index, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      throw Error(e.code(), "record " + std::to_string(index) + ": " + e.detail());
    }
  };

  if (format == InstanceFormat::JsonLines) {
    std::size_t index = 0;
    std::size_t pos = 0;
    while (pos < content.size()) {
      auto eol = content.find('\n', pos);
      if (eol == std::string_view::npos) eol = content.size();
      auto line = content.substr(pos, eol - pos);
      pos = eol + 1;
      if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
      auto inst = with_index(index, [&] {
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw Error(Errc::ParseError, "malformed JSON");
        return instance_from_json(j);
      });
      add(std::move(inst), index);
      ++index;
    }
    return out;
  }

  auto records = csv::parse(content);
  if (records.empty()) return out;
  const Row names = records.front();
  for (std::size_t r = 1; r < records.size(); ++r) {
    const std::size_t index = r - 1;
    auto inst = with_index(index, [&] {
      auto i = instance_from_csv_record(names, records[r]);
      i.validate();
      return i;
    });
    add(std::move(inst), index);
  }
  return out;
}

std::vector<QAInstance> load_instances(const std::filesystem::path& path, InstanceFormat format) {
  return parse_instances(io::read_file(path), format);
}

}  // namespace tablequake
