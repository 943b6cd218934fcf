#include "tablequake/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tablequake/error.hpp"
#include "tablequake/io.hpp"
#include "tablequake/pipeline.hpp"
#include "tablequake/reporting.hpp"

namespace tablequake::cli {

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

const std::set<std::string> kSubcommands = {"perturb", "prompt",   "score",   "attn",
                                            "correlate", "report", "simulate"};

std::string flag_value(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string joined;
    for (const auto& e : v) {
      if (!joined.empty()) joined += ',';
      joined += flag_value(e);
    }
    return joined;
  }
  return v.dump();
}

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || a.starts_with(flag + "=");
  });
}

// Appends flags from the --flagfile section of the chosen subcommand unless
// the command line already sets them.
std::vector<std::string> expand_flagfile(std::vector<std::string> args) {
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--flagfile" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                 args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].starts_with("--flagfile=")) {
      path = args[i].substr(11);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (!path) return args;

  const auto sub = std::find_if(args.begin(), args.end(),
                                [](const std::string& a) { return kSubcommands.contains(a); });
  if (sub == args.end()) return args;
  const auto j = nlohmann::json::parse(io::read_file(*path), nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(Errc::ParseError, *path + " is not a JSON object");
  const auto section = j.find(*sub);
  if (section == j.end()) return args;
  if (!section->is_object())
    throw Error(Errc::ParseError, *path + ": section '" + *sub + "' must be an object");
  for (const auto& [key, value] : section->items()) {
    const std::string flag = "--" + key;
    if (has_flag(args, flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
      continue;
    }
    if (value.is_null()) continue;
    args.push_back(flag);
    args.push_back(flag_value(value));
  }
  return args;
}

InstanceFormat instance_format(const fs::path& path) {
  return path.extension() == ".csv" ? InstanceFormat::Csv : InstanceFormat::JsonLines;
}

std::vector<RunRecord> records_of(const fs::path& path, bool original) {
  std::vector<RunRecord> out;
  for (auto& r : read_records(path))
    if ((r.kind == Kind::Original) == original) out.push_back(std::move(r));
  return out;
}

PositionPolicy parse_positions(const std::string& s) {
  if (s == "prompt") return PositionPolicy::Prompt;
  if (s == "all") return PositionPolicy::All;
  throw Error(Errc::InvalidArgument, "--positions must be 'prompt' or 'all', got '" + s + "'");
}

void check_cap(std::size_t cap) {
  if (cap < 1) throw Error(Errc::InvalidArgument, "cap must be >= 1");
}

fs::path scored_path(const fs::path& p) { return fs::is_directory(p) ? p / "scored.csv" : p; }

struct PerturbArgs {
  std::string in, kinds = "row,col,transpose,trow,tcol,dvp,rvp,nvp,nt", out;
  std::uint64_t seed = 0;
  std::size_t cap = 150;
  bool score_against_original = false;
};

int run_perturb(const PerturbArgs& a, std::ostream& out) {
  check_cap(a.cap);
  pipeline::PerturbOptions opts;
  opts.kinds = parse_kind_list(a.kinds);
  if (std::find(opts.kinds.begin(), opts.kinds.end(), Kind::Original) == opts.kinds.end())
    opts.kinds.insert(opts.kinds.begin(), Kind::Original);
  opts.seed = a.seed;
  opts.cap = a.cap;
  opts.policy = a.score_against_original ? TargetPolicy::Original : TargetPolicy::Substituted;
  const auto instances = load_instances(a.in, instance_format(a.in));
  const auto result = pipeline::perturb_dataset(instances, opts);

  const fs::path dir(a.out);
  io::ensure_directory(dir);
  io::write_file_atomic(dir / "perturbed.jsonl", pipeline::encode_perturbed(result.items));
  io::write_file_atomic(dir / "manifest.jsonl", pipeline::encode_manifest(result.manifest));
  std::string skipped;
  for (const auto& s : result.skipped) skipped += s + "\n";
  io::write_file_atomic(dir / "skipped.txt", skipped);
  out << "perturbed " << result.items.size() << " items; " << result.dropped_by_cap
      << " instances over the cell cap; " << result.skipped.size() << " skipped\n";
  return kExitOk;
}

struct PromptArgs {
  std::string in, out, template_name = "default", exemplars;
  int shots = 0;
  std::size_t cap = 150;
};

int run_prompt(const PromptArgs& a, std::ostream& out) {
  check_cap(a.cap);
  TemplateRegistry templates;
  pipeline::PromptOptions opts;
  opts.shots = a.shots;
  opts.cap = a.cap;
  opts.template_id = a.template_name;
  if (fs::path(a.template_name).has_extension() || fs::exists(a.template_name))
    opts.template_id = templates.load_file(a.template_name);
  if (!a.exemplars.empty()) opts.exemplars = parse_exemplars(io::read_file(a.exemplars));
  const auto items = parse_perturbed(io::read_file(a.in));
  const auto prompts = pipeline::build_prompts(items, opts, templates);
  const fs::path target(a.out);
  if (target.has_parent_path()) io::ensure_directory(target.parent_path());
  io::write_file_atomic(target, pipeline::encode_prompts(prompts));
  out << "wrote " << prompts.size() << " prompts\n";
  return kExitOk;
}

struct ScoreArgs {
  std::string orig, pert, targets, out;
};

int run_score(const ScoreArgs& a, std::ostream& out) {
  auto records = records_of(a.orig, true);
  const auto pert = records_of(a.pert, false);
  records.insert(records.end(), pert.begin(), pert.end());
  const auto targets = parse_perturbed(io::read_file(a.targets));
  const auto scored = pipeline::score_records(records, targets);
  std::vector<ScoredPair> original, rest;
  for (const auto& s : scored) (s.kind == Kind::Original ? original : rest).push_back(s);
  const auto table = summary_table(pipeline::aggregate_by_kind(original, rest));

  const fs::path dir(a.out);
  io::ensure_directory(dir);
  io::write_file_atomic(dir / "scored.csv", scored_to_csv(scored));
  io::write_file_atomic(dir / "summary.txt", table.text);
  io::write_file_atomic(
      dir / "summary.json",
      nlohmann::json{{"normalization_version", kNormalizationVersion}, {"rows", table.json}}.dump(2) +
          "\n");
  out << table.text;
  return kExitOk;
}

struct AttnArgs {
  std::string orig_traces, pert_traces, records, out, positions = "prompt";
  bool normalize = false;
};

int run_attn(const AttnArgs& a, std::ostream& out) {
  EntropyOptions opts{a.normalize, parse_positions(a.positions)};
  const auto records = read_records(a.records);
  const auto deltas = pipeline::compute_deltas(records, a.orig_traces, a.pert_traces, opts);
  const fs::path dir(a.out);
  io::ensure_directory(dir);
  io::write_file_atomic(dir / "deltas.jsonl", pipeline::encode_deltas(deltas));
  out << "wrote " << deltas.size() << " entropy delta grids\n";
  return kExitOk;
}

struct CorrelateArgs {
  std::string grids, out, scored;
};

int run_correlate(const CorrelateArgs& a, std::ostream& out) {
  const fs::path grids(a.grids);
  const auto deltas =
      pipeline::decode_deltas(io::read_file(fs::is_directory(grids) ? grids / "deltas.jsonl" : grids));
  const fs::path scored = scored_path(a.scored.empty() ? fs::path(a.out) : fs::path(a.scored));
  const auto pairs = scored_from_csv(io::read_file(scored));
  const auto outputs = pipeline::correlate(deltas, pairs);
  pipeline::emit_correlation(outputs, a.out);
  const auto& r = outputs.scatter_result;
  out << "aggregate scatter: n=" << r.n;
  if (r.rho) out << " rho=" << io::format_number(*r.rho);
  if (r.p) out << " p=" << io::format_number(*r.p);
  out << "\n";
  return kExitOk;
}

struct ReportArgs {
  std::string scored, bins = "default", out;
  std::size_t cap = 150;
};

int run_report(const ReportArgs& a, std::ostream& out) {
  check_cap(a.cap);
  const auto pairs = scored_from_csv(io::read_file(scored_path(a.scored)));
  const auto bins = a.bins == "default" ? default_bins(a.cap) : parse_bins(a.bins);
  const auto rows = size_bin_report(pairs, bins);
  const fs::path dir(a.out);
  io::ensure_directory(dir);
  io::write_file_atomic(dir / "bins.csv", bins_to_csv(rows));
  out << "wrote " << rows.size() << " size-bin rows\n";
  return kExitOk;
}

struct SimulateArgs {
  std::string config, in, out, kinds, exemplars, positions = "prompt";
  std::size_t cap = 150;
  int shots = 0;
  bool normalize = false;
};

int run_simulate(const SimulateArgs& a, std::ostream& out) {
  check_cap(a.cap);
  const auto cfg = nlohmann::json::parse(io::read_file(a.config), nullptr, false);
  if (cfg.is_discarded()) throw Error(Errc::ParseError, a.config + " is not valid JSON");
  pipeline::SimulateOptions opts;
  opts.config = mock_config_from_json(cfg);
  opts.instances = a.in;
  opts.out_dir = a.out;
  opts.cap = a.cap;
  opts.shots = a.shots;
  if (!a.kinds.empty()) opts.kinds = parse_kind_list(a.kinds);
  if (!a.exemplars.empty()) opts.exemplars = parse_exemplars(io::read_file(a.exemplars));
  opts.entropy = {a.normalize, parse_positions(a.positions)};
  const auto summary = pipeline::simulate(opts);
  out << "simulated " << summary.records << " records over " << summary.instances
      << " instances; aggregate scatter n=" << summary.scatter_result.n;
  if (summary.scatter_result.rho) out << " rho=" << io::format_number(*summary.scatter_result.rho);
  if (summary.scatter_result.p) out << " p=" << io::format_number(*summary.scatter_result.p);
  out << "\n";
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Table perturbation robustness and attention analysis", "tablequake"};
  app.require_subcommand(1);
  app.add_option("--flagfile", "JSON file supplying defaults for subcommand flags");

  PerturbArgs perturb;
  auto* p = app.add_subcommand("perturb", "Apply table perturbations to a dataset");
  p->add_option("--in", perturb.in, "Instances (.jsonl or .csv)")->required();
  p->add_option("--kinds", perturb.kinds, "Comma-separated perturbation kinds");
  p->add_option("--seed", perturb.seed, "Run seed");
  p->add_option("--cap", perturb.cap, "Keep tables with fewer cells than this");
  p->add_option("--out", perturb.out, "Output directory")->required();
  p->add_flag("--score-against-original", perturb.score_against_original,
              "Score DVP/RVP against the original gold answer");

  PromptArgs prompt;
  auto* pr = app.add_subcommand("prompt", "Render prompts for perturbed instances");
  pr->add_option("--in", prompt.in, "perturbed.jsonl")->required();
  pr->add_option("--shots", prompt.shots, "Number of exemplars (0-3)");
  pr->add_option("--template", prompt.template_name, "Template id or template file");
  pr->add_option("--exemplars", prompt.exemplars, "Exemplar JSON-lines file");
  pr->add_option("--cap", prompt.cap, "Cell cap for exemplar tables");
  pr->add_option("--out", prompt.out, "Output prompts.jsonl")->required();

  ScoreArgs score;
  auto* s = app.add_subcommand("score", "Score predictions and aggregate per kind");
  s->add_option("--orig", score.orig, "Run records of the original prompts")->required();
  s->add_option("--pert", score.pert, "Run records of the perturbed prompts")->required();
  s->add_option("--targets", score.targets, "perturbed.jsonl with scoring targets")->required();
  s->add_option("--out", score.out, "Report directory")->required();

  AttnArgs attn;
  auto* at = app.add_subcommand("attn", "Per-head entropy deltas from attention traces");
  at->add_option("--orig-traces", attn.orig_traces, "Directory of original traces")->required();
  at->add_option("--pert-traces", attn.pert_traces, "Directory of perturbed traces")->required();
  at->add_option("--records", attn.records, "run.jsonl")->required();
  at->add_option("--out", attn.out, "Grid directory")->required();
  at->add_flag("--normalize-entropy", attn.normalize, "Divide entropies by ln n");
  at->add_option("--positions", attn.positions, "Query rows to average: prompt or all");

  CorrelateArgs corr;
  auto* c = app.add_subcommand("correlate", "Correlate entropy deltas with EM drops");
  c->add_option("--grids", corr.grids, "deltas.jsonl or its directory")->required();
  c->add_option("--scored", corr.scored, "scored.csv (defaults to <out>/scored.csv)");
  c->add_option("--out", corr.out, "Report directory")->required();

  ReportArgs report;
  auto* r = app.add_subcommand("report", "Accuracy by table size");
  r->add_option("--scored", report.scored, "scored.csv or its directory")->required();
  r->add_option("--bins", report.bins, "'default' or lo-hi,lo-hi,...");
  r->add_option("--cap", report.cap, "Cell cap used by the default bins");
  r->add_option("--out", report.out, "Report directory")->required();

  SimulateArgs sim;
  auto* sm = app.add_subcommand("simulate", "Run the whole pipeline with the mock model");
  sm->add_option("--config", sim.config, "Mock model config (JSON)")->required();
  sm->add_option("--in", sim.in, "Instances (.jsonl or .csv)")->required();
  sm->add_option("--out", sim.out, "Run directory")->required();
  sm->add_option("--kinds", sim.kinds, "Kinds to run (defaults to the config's kinds)");
  sm->add_option("--cap", sim.cap, "Cell cap");
  sm->add_option("--shots", sim.shots, "Number of exemplars (0-3)");
  sm->add_option("--exemplars", sim.exemplars, "Exemplar JSON-lines file");
  sm->add_flag("--normalize-entropy", sim.normalize, "Divide entropies by ln n");
  sm->add_option("--positions", sim.positions, "Query rows to average: prompt or all");

  try {
    auto args = expand_flagfile(raw_args);
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      err << "error: " << e.what() << "\n" << app.help();
      return kExitValidation;
    }

    if (p->parsed()) return run_perturb(perturb, out);
    if (pr->parsed()) return run_prompt(prompt, out);
    if (s->parsed()) return run_score(score, out);
    if (at->parsed()) return run_attn(attn, out);
    if (c->parsed()) return run_correlate(corr, out);
    if (r->parsed()) return run_report(report, out);
    if (sm->parsed()) return run_simulate(sim, out);
    err << app.help();
    return kExitValidation;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.is_io() ? kExitIo : kExitValidation;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}

}  // namespace tablequake::cli
