#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tablequake/attention.hpp"
#include "tablequake/metrics.hpp"
#include "tablequake/mock.hpp"
#include "tablequake/perturbation.hpp"
#include "tablequake/prompt.hpp"
#include "tablequake/run_store.hpp"

// Stage functions shared by the CLI subcommands and `simulate`.
namespace tablequake::pipeline {

struct PerturbOptions {
  std::vector<Kind> kinds;
  std::uint64_t seed = 0;
  std::size_t cap = 150;
  TargetPolicy policy = TargetPolicy::Substituted;
};

struct ManifestEntry {
  std::string base_id;
  Kind kind = Kind::Original;
  std::optional<std::uint64_t> seed;
  std::string output_id;
};

struct PerturbOutput {
  std::vector<PerturbedInstance> items;
  std::vector<ManifestEntry> manifest;
  std::vector<std::string> skipped;  // "<output id>: <reason>"
  std::size_t dropped_by_cap = 0;
};

// Swap seeds are derived per (instance id, kind) from the run seed, so
// adding or reordering instances leaves existing outputs unchanged.
std::uint64_t instance_seed(std::uint64_t run_seed, std::string_view base_id, Kind kind);

// Applies the cell cap to every instance. Value perturbations that need the
// answer in the table, or DVP without a counterfactual, are skipped per
// instance and listed in `skipped`.
PerturbOutput perturb_dataset(std::span<const QAInstance> instances, const PerturbOptions& options);

std::string encode_perturbed(std::span<const PerturbedInstance> items);
std::string encode_manifest(std::span<const ManifestEntry> manifest);

struct PromptOptions {
  int shots = 0;
  std::vector<Exemplar> exemplars;  // the first `shots` are used
  std::string template_id = "default";
  std::size_t cap = 150;
};

PromptRecord make_prompt(const PerturbedInstance& item, const PromptOptions& options,
                         const TemplateRegistry& templates);
std::vector<PromptRecord> build_prompts(std::span<const PerturbedInstance> items,
                                        const PromptOptions& options,
                                        const TemplateRegistry& templates);
std::string encode_prompts(std::span<const PromptRecord> prompts);
std::vector<PromptRecord> decode_prompts(std::string_view jsonl);

// Pairs each record with its target by (instance id, kind). Errc::IdMismatch
// for records without a target.
std::vector<ScoredPair> score_records(std::span<const RunRecord> records,
                                      std::span<const PerturbedInstance> targets);

// Original row plus one aggregate per perturbed kind, each compared against
// the original scores of the same instances.
std::vector<AggregateReport> aggregate_by_kind(std::span<const ScoredPair> original,
                                               std::span<const ScoredPair> perturbed);

struct DeltaEntry {
  std::string instance_id;
  Kind kind = Kind::Original;
  int shots = 0;
  std::string model_id;
  HeadGrid delta;
};

// Entropy profile of a trace file, or a precomputed profile when the path
// ends in ".json".
EntropyProfile load_profile(const std::filesystem::path& path, EntropyOptions options);

// Pairs every perturbed record that has a trace with the original record of
// the same (instance, shots, model) and returns pert - orig profiles.
std::vector<DeltaEntry> compute_deltas(std::span<const RunRecord> records,
                                       const std::filesystem::path& orig_dir,
                                       const std::filesystem::path& pert_dir,
                                       EntropyOptions options);

std::string encode_deltas(std::span<const DeltaEntry> deltas);
std::vector<DeltaEntry> decode_deltas(std::string_view jsonl);

struct CorrelationOutputs {
  std::map<Kind, CorrelationGrid> per_kind;  // points = instances of one kind
  std::map<Kind, std::vector<ScatterPoint>> per_kind_points;  // label = instance id
  std::optional<CorrelationGrid> structural;  // points = structural kinds
  std::vector<ScatterPoint> scatter;
  SpearmanResult scatter_result;
};

// EM difference convention: em_original - em_perturbed (an EM drop is positive).
CorrelationOutputs correlate(std::span<const DeltaEntry> deltas, std::span<const ScoredPair> scored);

// Writes heatmaps, scatter CSV and correlation.json into out_dir.
void emit_correlation(const CorrelationOutputs& outputs, const std::filesystem::path& out_dir);

struct SimulateOptions {
  std::filesystem::path instances;
  std::filesystem::path out_dir;
  MockConfig config;
  std::optional<std::vector<Kind>> kinds;  // defaults to the config's kinds
  std::size_t cap = 150;
  int shots = 0;
  std::vector<Exemplar> exemplars;
  EntropyOptions entropy;
};

struct SimulateSummary {
  std::size_t instances = 0;
  std::size_t records = 0;
  SpearmanResult scatter_result;
};

// Full offline pipeline with the mock model: perturb, prompt, predict,
// synthesize traces, score, analyse attention, report.
SimulateSummary simulate(const SimulateOptions& options);

}  // namespace tablequake::pipeline
