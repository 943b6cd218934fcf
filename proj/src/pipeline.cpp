#include "tablequake/pipeline.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include "tablequake/error.hpp"
#include "tablequake/io.hpp"
#include "tablequake/parallel.hpp"
#include "tablequake/reporting.hpp"
#include "tablequake/rng.hpp"

namespace tablequake::pipeline {

namespace {

std::string kind_key(std::string_view id, Kind kind) {
  std::string key(id);
  key += '\x1f';
  key += kind_name(kind);
  return key;
}

std::filesystem::path resolve(const std::filesystem::path& dir, const std::string& ref) {
  const std::filesystem::path p(ref);
  return p.is_absolute() ? p : dir / p;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::MalformedLine, "line " + std::to_string(line_no));
    try {
      fn(j);
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.detail());
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::MalformedLine, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::string trace_file_name(const std::string& output_id) {
  std::string safe;
  for (const char c : output_id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    safe += ok ? c : '_';
  }
  if (safe.size() > 64) safe.resize(64);
  return safe + "-" + hash_hex(fnv1a64(output_id)).substr(0, 8) + ".attn";
}

std::size_t whitespace_tokens(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (const char c : text) {
    const bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r';
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

nlohmann::json spearman_to_json(const SpearmanResult& r) {
  return {{"rho", r.rho ? nlohmann::json(*r.rho) : nlohmann::json()},
          {"p", r.p ? nlohmann::json(*r.p) : nlohmann::json()},
          {"n", r.n}};
}

}  // namespace

std::uint64_t instance_seed(std::uint64_t run_seed, std::string_view base_id, Kind kind) {
  return derive_seed(run_seed, kind_key(base_id, kind));
}

PerturbOutput perturb_dataset(std::span<const QAInstance> instances, const PerturbOptions& options) {
  PerturbOutput out;
  const auto kept = filter_instances(instances, options.cap, false);
  out.dropped_by_cap = instances.size() - kept.size();
  for (const auto& inst : kept) {
    for (const Kind kind : options.kinds) {
      Perturbation p{kind, std::nullopt};
      if (takes_seed(kind)) p.seed = instance_seed(options.seed, inst.id, kind);
      const std::string output_id = inst.id + "#" + std::string(kind_name(kind));
      if (needs_answer_in_table(kind) && !answer_in_table(inst)) {
        out.skipped.push_back(output_id + ": answer not in table");
        continue;
      }
      if (kind == Kind::DVP && !inst.counterfactual) {
        out.skipped.push_back(output_id + ": no counterfactual");
        continue;
      }
      out.items.push_back(perturb(inst, p, options.policy));
      out.manifest.push_back({inst.id, kind, out.items.back().perturbation.seed, output_id});
    }
  }
  return out;
}

std::string encode_perturbed(std::span<const PerturbedInstance> items) {
  std::string out;
  for (const auto& item : items) out += perturbed_to_json(item).dump() + "\n";
  return out;
}

std::string encode_manifest(std::span<const ManifestEntry> manifest) {
  std::string out;
  for (const auto& m : manifest) {
    const nlohmann::json j = {{"base_id", m.base_id},
                              {"kind", kind_name(m.kind)},
                              {"seed", m.seed ? nlohmann::json(*m.seed) : nlohmann::json()},
                              {"output_id", m.output_id}};
    out += j.dump() + "\n";
  }
  return out;
}

PromptRecord make_prompt(const PerturbedInstance& item, const PromptOptions& options,
                         const TemplateRegistry& templates) {
  if (options.shots < 0 || static_cast<std::size_t>(options.shots) > options.exemplars.size())
    throw Error(Errc::InvalidArgument, std::to_string(options.shots) + "-shot prompts need " +
                                           std::to_string(options.shots) + " exemplars, have " +
                                           std::to_string(options.exemplars.size()));
  PromptSpec spec;
  spec.shots = options.shots;
  spec.exemplars.assign(options.exemplars.begin(), options.exemplars.begin() + options.shots);
  spec.include_table = item.perturbation.kind != Kind::NT;
  spec.template_id = options.template_id;
  spec.cap = options.cap;

  PromptRecord r;
  r.id = item.output_id();
  r.base_id = item.base_id;
  r.kind = item.perturbation.kind;
  r.shots = options.shots;
  r.template_id = options.template_id;
  r.prompt = build_prompt(item, spec, templates);
  r.prompt_hash = fnv1a64(r.prompt);
  return r;
}

std::vector<PromptRecord> build_prompts(std::span<const PerturbedInstance> items,
                                        const PromptOptions& options,
                                        const TemplateRegistry& templates) {
  std::vector<PromptRecord> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(make_prompt(item, options, templates));
  return out;
}

std::string encode_prompts(std::span<const PromptRecord> prompts) {
  std::string out;
  for (const auto& p : prompts) out += prompt_record_to_json(p).dump() + "\n";
  return out;
}

std::vector<PromptRecord> decode_prompts(std::string_view jsonl) {
  std::vector<PromptRecord> out;
  for_each_line(jsonl, [&](const nlohmann::json& j) { out.push_back(prompt_record_from_json(j)); });
  return out;
}

std::vector<ScoredPair> score_records(std::span<const RunRecord> records,
                                      std::span<const PerturbedInstance> targets) {
  std::map<std::string, const PerturbedInstance*> by_key;
  for (const auto& t : targets) by_key[kind_key(t.base_id, t.perturbation.kind)] = &t;
  std::vector<ScoredPair> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto it = by_key.find(kind_key(r.instance_id, r.kind));
    if (it == by_key.end())
      throw Error(Errc::IdMismatch, "no target for " + r.instance_id + "#" +
                                        std::string(kind_name(r.kind)));
    out.push_back(score_prediction(*it->second, r.prediction));
  }
  return out;
}

std::vector<AggregateReport> aggregate_by_kind(std::span<const ScoredPair> original,
                                               std::span<const ScoredPair> perturbed) {
  std::vector<AggregateReport> out;
  out.push_back(summarize(original));
  for (const Kind kind : kReportOrder) {
    if (kind == Kind::Original) continue;
    std::vector<ScoredPair> group;
    for (const auto& s : perturbed)
      if (s.kind == kind) group.push_back(s);
    if (group.empty()) continue;
    std::set<std::string> ids;
    for (const auto& s : group) ids.insert(s.instance_id);
    std::vector<ScoredPair> base;
    for (const auto& s : original)
      if (ids.contains(s.instance_id)) base.push_back(s);
    out.push_back(aggregate(base, group));
  }
  return out;
}

EntropyProfile load_profile(const std::filesystem::path& path, EntropyOptions options) {
  if (path.extension() == ".json") {
    const auto j = nlohmann::json::parse(io::read_file(path), nullptr, false);
    if (j.is_discarded()) throw Error(Errc::ParseError, path.string() + " is not valid JSON");
    return profile_from_json(j);
  }
  return head_entropy_profile(read_trace(path), options);
}

std::vector<DeltaEntry> compute_deltas(std::span<const RunRecord> records,
                                       const std::filesystem::path& orig_dir,
                                       const std::filesystem::path& pert_dir,
                                       EntropyOptions options) {
  using Key = std::tuple<std::string, int, std::string>;
  std::map<Key, const RunRecord*> originals;
  std::vector<const RunRecord*> perturbed;
  for (const auto& r : records) {
    if (!r.trace_ref) continue;
    if (r.kind == Kind::Original) originals[{r.instance_id, r.shots, r.model_id}] = &r;
    else perturbed.push_back(&r);
  }

  std::vector<const RunRecord*> orig_list;
  for (const auto& [key, r] : originals) orig_list.push_back(r);
  std::vector<EntropyProfile> orig_profiles(orig_list.size());
  parallel_for(orig_list.size(), [&](std::size_t i) {
    orig_profiles[i] = load_profile(resolve(orig_dir, *orig_list[i]->trace_ref), options);
  });
  std::map<Key, const EntropyProfile*> orig_by_key;
  for (std::size_t i = 0; i < orig_list.size(); ++i)
    orig_by_key[{orig_list[i]->instance_id, orig_list[i]->shots, orig_list[i]->model_id}] =
        &orig_profiles[i];

  std::vector<std::optional<DeltaEntry>> slots(perturbed.size());
  parallel_for(perturbed.size(), [&](std::size_t i) {
    const RunRecord& r = *perturbed[i];
    const auto it = orig_by_key.find({r.instance_id, r.shots, r.model_id});
    if (it == orig_by_key.end()) return;
    const auto profile = load_profile(resolve(pert_dir, *r.trace_ref), options);
    slots[i] = DeltaEntry{r.instance_id, r.kind, r.shots, r.model_id,
                          entropy_delta(*it->second, profile)};
  });
  std::vector<DeltaEntry> out;
  for (auto& s : slots)
    if (s) out.push_back(std::move(*s));
  return out;
}

std::string encode_deltas(std::span<const DeltaEntry> deltas) {
  std::string out;
  for (const auto& d : deltas) {
    const nlohmann::json j = {{"instance_id", d.instance_id}, {"kind", kind_name(d.kind)},
                              {"shots", d.shots},             {"model_id", d.model_id},
                              {"layers", d.delta.layers},     {"heads", d.delta.heads},
                              {"delta", d.delta.values}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<DeltaEntry> decode_deltas(std::string_view jsonl) {
  std::vector<DeltaEntry> out;
  for_each_line(jsonl, [&](const nlohmann::json& j) {
    DeltaEntry d;
    d.instance_id = j.at("instance_id").get<std::string>();
    d.kind = kind_from_name(j.at("kind").get<std::string>());
    d.shots = j.value("shots", 0);
    d.model_id = j.value("model_id", std::string());
    d.delta = HeadGrid(j.at("layers").get<std::size_t>(), j.at("heads").get<std::size_t>());
    d.delta.values = j.at("delta").get<std::vector<double>>();
    if (d.delta.values.size() != d.delta.layers * d.delta.heads)
      throw Error(Errc::ShapeMismatch, "delta length does not match layers x heads");
    out.push_back(std::move(d));
  });
  return out;
}

CorrelationOutputs correlate(std::span<const DeltaEntry> deltas, std::span<const ScoredPair> scored) {
  std::map<std::string, int> orig_em;
  std::map<std::string, int> pert_em;
  for (const auto& s : scored) {
    if (s.kind == Kind::Original) orig_em[s.instance_id] = s.em;
    else pert_em[kind_key(s.instance_id, s.kind)] = s.em;
  }
  const auto em_diff = [&](const DeltaEntry& d) {
    const auto o = orig_em.find(d.instance_id);
    const auto p = pert_em.find(kind_key(d.instance_id, d.kind));
    if (o == orig_em.end() || p == pert_em.end())
      throw Error(Errc::IdMismatch, "no scores for " + d.instance_id + "#" +
                                        std::string(kind_name(d.kind)));
    return static_cast<double>(o->second - p->second);
  };

  std::map<Kind, std::map<std::string, HeadGrid>> grids;
  std::map<Kind, std::map<std::string, double>> diffs;
  for (const auto& d : deltas) {
    if (!grids[d.kind].emplace(d.instance_id, d.delta).second)
      throw Error(Errc::DuplicateKey, "several deltas for " + d.instance_id + "#" +
                                          std::string(kind_name(d.kind)));
    diffs[d.kind][d.instance_id] = em_diff(d);
  }

  CorrelationOutputs out;
  std::map<std::string, HeadGrid> kind_means;
  std::map<std::string, double> kind_drops;
  for (const auto& [kind, by_id] : grids) {
    out.per_kind.emplace(kind, correlation_grid(by_id, diffs[kind]));
    auto& points = out.per_kind_points[kind];
    for (const auto& [id, g] : by_id) points.push_back({id, g.mean(), diffs[kind].at(id)});
    if (!is_structural(kind)) continue;
    HeadGrid mean = by_id.begin()->second;
    std::fill(mean.values.begin(), mean.values.end(), 0.0);
    for (const auto& [id, g] : by_id) {
      if (g.layers != mean.layers || g.heads != mean.heads)
        throw Error(Errc::ShapeMismatch, "delta grids differ in shape");
      for (std::size_t i = 0; i < g.values.size(); ++i) mean.values[i] += g.values[i];
    }
    const auto n = static_cast<double>(by_id.size());
    for (auto& v : mean.values) v /= n;
    double drop = 0.0;
    for (const auto& [id, v] : diffs[kind]) drop += v;
    drop /= n;
    kind_means.emplace(kind_name(kind), mean);
    kind_drops.emplace(kind_name(kind), drop);
  }
  for (const Kind kind : kStructuralKinds) {
    const auto it = kind_means.find(std::string(kind_name(kind)));
    if (it == kind_means.end()) continue;
    out.scatter.push_back({it->first, it->second.mean(), kind_drops.at(it->first)});
  }
  if (!kind_means.empty()) out.structural = correlation_grid(kind_means, kind_drops);
  out.scatter_result = aggregate_scatter(out.scatter);
  return out;
}

void emit_correlation(const CorrelationOutputs& outputs, const std::filesystem::path& out_dir) {
  io::ensure_directory(out_dir);
  nlohmann::json summary;
  summary["em_difference"] = "original_minus_perturbed";
  summary["aggregate_scatter"] = spearman_to_json(outputs.scatter_result);
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : outputs.scatter)
    points.push_back({{"kind", p.label}, {"mean_entropy_delta", p.mean_delta}, {"em_drop", p.em}});
  summary["aggregate_scatter"]["points"] = std::move(points);

  for (const auto& [kind, grid] : outputs.per_kind) {
    heatmap_emit(grid, out_dir, kind_name(kind));
    io::write_file_atomic(out_dir / ("scatter_" + std::string(kind_name(kind)) + ".csv"),
                          scatter_csv(outputs.per_kind_points.at(kind), "instance_id"));
    summary["per_kind"][std::string(kind_name(kind))] = correlation_grid_to_json(grid);
  }
  if (outputs.structural) {
    heatmap_emit(*outputs.structural, out_dir, "structural");
    summary["structural"] = correlation_grid_to_json(*outputs.structural);
    const std::size_t k = std::min<std::size_t>(5, outputs.structural->defined_count());
    const auto ranking = rank_heads(*outputs.structural, k);
    const auto heads_json = [](const std::vector<HeadScore>& v) {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& s : v) a.push_back({{"layer", s.layer}, {"head", s.head}, {"rho", s.rho}});
      return a;
    };
    summary["top_heads"] = heads_json(ranking.top);
    summary["bottom_heads"] = heads_json(ranking.bottom);
  }
  io::write_file_atomic(out_dir / "scatter_structural.csv", scatter_csv(outputs.scatter));
  io::write_file_atomic(out_dir / "correlation.json", summary.dump(2) + "\n");
}

SimulateSummary simulate(const SimulateOptions& options) {
  const MockConfig& config = options.config;
  config.validate();
  const auto format = options.instances.extension() == ".csv" ? InstanceFormat::Csv
                                                              : InstanceFormat::JsonLines;
  const auto instances = load_instances(options.instances, format);

  std::vector<Kind> kinds;
  if (options.kinds) {
    kinds = *options.kinds;
  } else {
    for (const Kind k : kReportOrder)
      if (config.severity_penalty.contains(k)) kinds.push_back(k);
  }
  if (std::find(kinds.begin(), kinds.end(), Kind::Original) == kinds.end())
    kinds.insert(kinds.begin(), Kind::Original);
  for (const Kind k : kinds)
    if (!config.severity_penalty.contains(k) || !config.dispersion.contains(k))
      throw Error(Errc::UnknownKind,
                  "mock config does not cover kind " + std::string(kind_name(k)));

  const auto& out = options.out_dir;
  const auto reports = out / "reports";
  const auto traces = out / "traces";
  io::ensure_directory(out);
  io::ensure_directory(reports);
  io::ensure_directory(traces);
  io::ensure_directory(out / "grids");

  PerturbOptions popts;
  popts.kinds = kinds;
  popts.seed = config.seed;
  popts.cap = options.cap;
  auto perturbed = perturb_dataset(instances, popts);
  io::write_file_atomic(out / "perturbed.jsonl", encode_perturbed(perturbed.items));
  io::write_file_atomic(out / "manifest.jsonl", encode_manifest(perturbed.manifest));

  const TemplateRegistry templates;
  PromptOptions prompt_opts;
  prompt_opts.shots = options.shots;
  prompt_opts.exemplars = options.exemplars;
  prompt_opts.cap = options.cap;
  const auto prompts = build_prompts(perturbed.items, prompt_opts, templates);
  io::write_file_atomic(out / "prompts.jsonl", encode_prompts(prompts));

  std::vector<RunRecord> records(perturbed.items.size());
  parallel_for(perturbed.items.size(), [&](std::size_t i) {
    const auto& item = perturbed.items[i];
    const auto& prompt = prompts[i];
    const std::size_t seq_len =
        std::clamp<std::size_t>(whitespace_tokens(prompt.prompt), 1, config.max_seq_len);
    const auto trace =
        synth_trace(seq_len, config.layers, config.heads, config.dispersion.at(item.perturbation.kind),
                    derive_seed(config.seed, prompt.id + "\x1ftrace"));
    const std::string ref = "traces/" + trace_file_name(prompt.id);
    write_trace(out / ref, trace);
    records[i] = RunRecord{item.base_id,        item.perturbation.kind, options.shots,
                           config.model_id,     prompt.prompt_hash,     mock_predict(item, config),
                           ref};
  });
  write_records(out / "run.jsonl", records);

  const auto scored = score_records(records, perturbed.items);
  io::write_file_atomic(reports / "scored.csv", scored_to_csv(scored));
  std::vector<ScoredPair> original, rest;
  for (const auto& s : scored) (s.kind == Kind::Original ? original : rest).push_back(s);
  const auto aggregates = aggregate_by_kind(original, rest);
  const auto table = summary_table(aggregates);
  io::write_file_atomic(reports / "summary.txt", table.text);
  io::write_file_atomic(reports / "summary.json",
                        nlohmann::json{{"normalization_version", kNormalizationVersion},
                                       {"rows", table.json}}
                                .dump(2) +
                            "\n");

  const auto deltas = compute_deltas(records, out, out, options.entropy);
  io::write_file_atomic(out / "grids" / "deltas.jsonl", encode_deltas(deltas));
  const auto correlation = correlate(deltas, scored);
  emit_correlation(correlation, reports);

  const auto bins = size_bin_report(scored, default_bins(options.cap));
  io::write_file_atomic(reports / "bins.csv", bins_to_csv(bins));

  return {perturbed.items.size() / std::max<std::size_t>(1, kinds.size()), records.size(),
          correlation.scatter_result};
}

}  // namespace tablequake::pipeline
