#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tablequake/perturbation.hpp"
#include "tablequake/table.hpp"

namespace tablequake {

inline constexpr std::string_view kAnswerCue = "Answer:";
inline constexpr std::string_view kDefaultInstructions =
    "Answer the question using the table. Reply with the answer only.";

// Template text uses the placeholders {instructions}, {exemplars}, {table}
// and {question}; {question} is required.
struct PromptTemplate {
  std::string id;
  std::string body;
  std::string instructions = std::string(kDefaultInstructions);
};

class TemplateRegistry {
 public:
  // Holds the built-in "default" template.
  TemplateRegistry();

  void add(PromptTemplate tmpl);
  // Registers the file under its stem ("qa.txt" -> "qa") and returns the id.
  std::string load_file(const std::filesystem::path& path);
  const PromptTemplate& get(std::string_view id) const;  // Errc::UnknownTemplate

 private:
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

struct Exemplar {
  QAInstance instance;
  std::string answer;
};

struct PromptSpec {
  int shots = 0;
  std::vector<Exemplar> exemplars;
  bool include_table = true;
  std::string template_id = "default";
  std::size_t cap = 150;  // exemplar tables must stay under the same cell cap
};

// instructions, then each exemplar (table, question, answer), then the target
// table unless excluded, the target question and the answer cue. Output ends
// with a newline. include_table=false drops every table block, exemplars
// included.
std::string build_prompt(const PerturbedInstance& target, const PromptSpec& spec,
                         const TemplateRegistry& templates);
std::string build_prompt(const QAInstance& target, const PromptSpec& spec,
                         const TemplateRegistry& templates);

// Exemplar file: JSON-lines instances with an optional "answer" field
// (defaults to the first gold answer).
std::vector<Exemplar> parse_exemplars(std::string_view jsonl);

struct PromptRecord {
  std::string id;  // perturbed output id
  std::string base_id;
  Kind kind = Kind::Original;
  int shots = 0;
  std::string template_id;
  std::string prompt;
  std::uint64_t prompt_hash = 0;
};

nlohmann::json prompt_record_to_json(const PromptRecord& r);
PromptRecord prompt_record_from_json(const nlohmann::json& j);

}  // namespace tablequake
