#include "tablequake/prompt.hpp"

#include <cctype>

#include "tablequake/error.hpp"
#include "tablequake/io.hpp"
#include "tablequake/run_store.hpp"

namespace tablequake {

namespace {

constexpr std::string_view kDefaultBody =
    "{instructions}\n\n{exemplars}{table}Question: {question}\nAnswer:\n";

bool is_placeholder_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// Expands {name} placeholders. Braces around anything that is not an
// identifier are copied through untouched.
std::string expand(const PromptTemplate& tmpl, const std::map<std::string, std::string>& values) {
  const std::string& body = tmpl.body;
  std::string out;
  std::size_t i = 0;
  while (i < body.size()) {
    if (body[i] == '{') {
      std::size_t j = i + 1;
      while (j < body.size() && is_placeholder_char(body[j])) ++j;
      if (j < body.size() && body[j] == '}' && j > i + 1) {
        const std::string name = body.substr(i + 1, j - i - 1);
        const auto it = values.find(name);
        if (it == values.end())
          throw Error(Errc::UnknownTemplate,
                      "template " + tmpl.id + " uses unknown placeholder {" + name + "}");
        out += it->second;
        i = j + 1;
        continue;
      }
    }
    out += body[i++];
  }
  return out;
}

std::string table_block(const Table& table) { return render_pipe(table) + "\n"; }

}  // namespace

TemplateRegistry::TemplateRegistry() { add({"default", std::string(kDefaultBody)}); }

void TemplateRegistry::add(PromptTemplate tmpl) {
  if (tmpl.body.find("{question}") == std::string::npos)
    throw Error(Errc::UnknownTemplate, "template " + tmpl.id + " lacks a {question} placeholder");
  auto id = tmpl.id;
  templates_.insert_or_assign(std::move(id), std::move(tmpl));
}

std::string TemplateRegistry::load_file(const std::filesystem::path& path) {
  auto body = io::read_file(path);
  if (!valid_utf8(body)) throw Error(Errc::Encoding, path.string() + " is not valid UTF-8");
  const auto id = path.stem().string();
  add({id, std::move(body)});
  return id;
}

const PromptTemplate& TemplateRegistry::get(std::string_view id) const {
  const auto it = templates_.find(id);
  if (it == templates_.end())
    throw Error(Errc::UnknownTemplate, "no template '" + std::string(id) + "'");
  return it->second;
}

std::string build_prompt(const PerturbedInstance& target, const PromptSpec& spec,
                         const TemplateRegistry& templates) {
  const PromptTemplate& tmpl = templates.get(spec.template_id);
  if (spec.shots < 0 || spec.shots > 3)
    throw Error(Errc::InvalidArgument, "shots must be in 0..3");
  if (static_cast<std::size_t>(spec.shots) != spec.exemplars.size())
    throw Error(Errc::InvalidArgument, "shots = " + std::to_string(spec.shots) + " but " +
                                           std::to_string(spec.exemplars.size()) +
                                           " exemplars supplied");

  std::string exemplars;
  for (const auto& ex : spec.exemplars) {
    if (ex.instance.table && cell_count(*ex.instance.table) >= spec.cap)
      throw Error(Errc::InvalidArgument, "exemplar " + ex.instance.id + " exceeds the cell cap");
    if (spec.include_table && ex.instance.table) exemplars += table_block(*ex.instance.table);
    exemplars += "Question: " + ex.instance.question + "\n";
    exemplars += std::string(kAnswerCue) + " " + ex.answer + "\n\n";
  }

  std::string table;
  if (spec.include_table && target.table) table = table_block(*target.table);

  auto out = expand(tmpl, {{"instructions", tmpl.instructions},
                           {"exemplars", exemplars},
                           {"table", table},
                           {"question", target.question}});
  if (out.empty() || out.back() != '\n') out += '\n';
  return out;
}

std::string build_prompt(const QAInstance& target, const PromptSpec& spec,
                         const TemplateRegistry& templates) {
  PerturbedInstance p;
  p.base_id = target.id;
  p.table = target.table;
  p.question = target.question;
  p.scoring_target = target.gold;
  p.gold = target.gold;
  return build_prompt(p, spec, templates);
}

std::vector<Exemplar> parse_exemplars(std::string_view jsonl) {
  std::vector<Exemplar> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < jsonl.size()) {
    auto eol = jsonl.find('\n', pos);
    if (eol == std::string_view::npos) eol = jsonl.size();
    const auto line = jsonl.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::MalformedLine, "exemplar line " + std::to_string(line_no));
    Exemplar ex{instance_from_json(j), {}};
    ex.answer = j.contains("answer") ? j.at("answer").get<std::string>() : ex.instance.gold.front();
    out.push_back(std::move(ex));
  }
  return out;
}

nlohmann::json prompt_record_to_json(const PromptRecord& r) {
  return {{"id", r.id},
          {"base_id", r.base_id},
          {"kind", kind_name(r.kind)},
          {"shots", r.shots},
          {"template_id", r.template_id},
          {"prompt", r.prompt},
          {"prompt_hash", hash_hex(r.prompt_hash)}};
}

PromptRecord prompt_record_from_json(const nlohmann::json& j) {
  try {
    PromptRecord r;
    r.id = j.at("id").get<std::string>();
    r.base_id = j.at("base_id").get<std::string>();
    r.kind = kind_from_name(j.at("kind").get<std::string>());
    r.shots = j.at("shots").get<int>();
    r.template_id = j.at("template_id").get<std::string>();
    r.prompt = j.at("prompt").get<std::string>();
    r.prompt_hash = parse_hash(j.at("prompt_hash"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
}

}  // namespace tablequake
