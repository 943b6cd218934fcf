#include "tablequake/metrics.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "tablequake/error.hpp"
#include "tablequake/io.hpp"

namespace tablequake {

namespace {

bool is_separator(UChar32 c) {
  if (u_isUWhiteSpace(c) || u_ispunct(c)) return true;
  switch (u_charType(c)) {
    case U_MATH_SYMBOL:
    case U_CURRENCY_SYMBOL:
    case U_MODIFIER_SYMBOL:
    case U_OTHER_SYMBOL:
    case U_CONTROL_CHAR:
      return true;
    default:
      return false;
  }
}

std::vector<std::string> tokens(std::string_view normalized) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < normalized.size()) {
    auto sp = normalized.find(' ', pos);
    if (sp == std::string_view::npos) sp = normalized.size();
    if (sp > pos) out.emplace_back(normalized.substr(pos, sp - pos));
    pos = sp + 1;
  }
  return out;
}

double set_f1(const std::set<std::string>& pred, const std::set<std::string>& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& t : pred) common += gold.count(t);
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(common) / static_cast<double>(gold.size());
  return 2.0 * precision * recall / (precision + recall);
}

void require_targets(std::span<const std::string> targets) {
  if (targets.empty()) throw Error(Errc::InvalidArgument, "no scoring targets");
}

}  // namespace

std::string normalize_answer(std::string_view s) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfkc = icu::Normalizer2::getNFKCInstance(status);
  if (U_FAILURE(status)) throw Error(Errc::InvalidArgument, "ICU NFKC normalizer unavailable");
  icu::UnicodeString text = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(),
                                                                          static_cast<int32_t>(s.size())));
  icu::UnicodeString folded = nfkc->normalize(text, status);
  if (U_FAILURE(status)) throw Error(Errc::InvalidArgument, "NFKC normalization failed");
  folded.toLower(icu::Locale::getRoot());

  icu::UnicodeString spaced;
  for (int32_t i = 0; i < folded.length();) {
    const UChar32 c = folded.char32At(i);
    spaced.append(is_separator(c) ? UChar32{' '} : c);
    i += U16_LENGTH(c);
  }
  std::string utf8;
  spaced.toUTF8String(utf8);

  std::string out;
  for (const auto& tok : tokens(utf8)) {
    if (tok == "a" || tok == "an" || tok == "the") continue;
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

int exact_match(std::string_view prediction, std::span<const std::string> targets) {
  require_targets(targets);
  const auto p = normalize_answer(prediction);
  return std::any_of(targets.begin(), targets.end(),
                     [&](const std::string& t) { return normalize_answer(t) == p; })
             ? 1
             : 0;
}

double f1(std::string_view prediction, std::span<const std::string> targets) {
  require_targets(targets);
  const auto pt = tokens(normalize_answer(prediction));
  const std::set<std::string> pred(pt.begin(), pt.end());
  double best = 0.0;
  for (const auto& t : targets) {
    const auto gt = tokens(normalize_answer(t));
    best = std::max(best, set_f1(pred, std::set<std::string>(gt.begin(), gt.end())));
  }
  return best;
}

double emd(double em_perturbed, double em_original) { return em_perturbed - em_original; }

double variation_percentage(std::span<const OutcomePair> pairs) {
  if (pairs.empty()) throw Error(Errc::EmptyInput, "variation percentage of no pairs");
  std::size_t flips = 0;
  for (const auto& p : pairs) flips += (p.em_original != 0) != (p.em_perturbed != 0) ? 1 : 0;
  return static_cast<double>(flips) / static_cast<double>(pairs.size());
}

ScoredPair score_prediction(const PerturbedInstance& target, std::string_view prediction) {
  return ScoredPair{target.base_id, target.perturbation.kind,
                    exact_match(prediction, target.scoring_target),
                    f1(prediction, target.scoring_target), target.base_cells};
}

AggregateReport summarize(std::span<const ScoredPair> run) {
  AggregateReport r;
  if (run.empty()) throw Error(Errc::EmptyInput, "no scored pairs");
  r.kind = run.front().kind;
  r.n = run.size();
  std::size_t correct = 0;
  double f1_sum = 0.0;
  for (const auto& s : run) {
    correct += static_cast<std::size_t>(s.em);
    f1_sum += s.f1;
  }
  r.em_mean = static_cast<double>(correct) / static_cast<double>(r.n);
  r.f1_mean = f1_sum / static_cast<double>(r.n);
  return r;
}

AggregateReport aggregate(std::span<const ScoredPair> original,
                          std::span<const ScoredPair> perturbed) {
  std::map<std::string, const ScoredPair*> orig_by_id;
  for (const auto& s : original)
    if (!orig_by_id.emplace(s.instance_id, &s).second)
      throw Error(Errc::DuplicateId, "original run repeats " + s.instance_id);
  if (perturbed.size() != original.size())
    throw Error(Errc::IdMismatch, "runs cover different numbers of instances");

  AggregateReport r = summarize(perturbed);
  std::size_t correct_orig = 0, correct_pert = 0;
  std::set<std::string> seen;
  for (const auto& s : perturbed) {
    if (s.kind != r.kind)
      throw Error(Errc::InvalidArgument, "perturbed run mixes kinds");
    const auto it = orig_by_id.find(s.instance_id);
    if (it == orig_by_id.end() || !seen.insert(s.instance_id).second)
      throw Error(Errc::IdMismatch, "instance " + s.instance_id + " not paired with the original run");
    const int before = it->second->em;
    correct_orig += static_cast<std::size_t>(before);
    correct_pert += static_cast<std::size_t>(s.em);
    if (before == 1 && s.em == 0) ++r.c2w;
    if (before == 0 && s.em == 1) ++r.w2c;
  }
  const double n = static_cast<double>(r.n);
  // One division of the count difference, so 5/100 vs 37/100 gives -0.32
  // exactly rather than the rounding residue of 0.05 - 0.37.
  r.emd = (static_cast<double>(correct_pert) - static_cast<double>(correct_orig)) / n;
  r.vp = static_cast<double>(r.c2w + r.w2c) / n;
  return r;
}

nlohmann::json aggregate_to_json(const AggregateReport& report) {
  nlohmann::json j;
  j["kind"] = kind_name(report.kind);
  j["label"] = kind_label(report.kind);
  j["n"] = report.n;
  j["em"] = report.em_mean;
  j["f1"] = report.f1_mean;
  j["vp"] = report.vp ? nlohmann::json(*report.vp) : nlohmann::json();
  j["emd"] = report.emd ? nlohmann::json(*report.emd) : nlohmann::json();
  j["c2w"] = report.c2w;
  j["w2c"] = report.w2c;
  return j;
}

std::string scored_to_csv(std::span<const ScoredPair> scored) {
  std::string out = "instance_id,kind,em,f1,cells\n";
  for (const auto& s : scored) {
    out += csv::quote(s.instance_id);
    out += ',';
    out += kind_name(s.kind);
    out += ',';
    out += std::to_string(s.em);
    out += ',';
    out += io::format_number(s.f1);
    out += ',';
    out += std::to_string(s.cells);
    out += '\n';
  }
  return out;
}

std::vector<ScoredPair> scored_from_csv(std::string_view text) {
  const auto records = csv::parse(text);
  if (records.empty()) throw Error(Errc::EmptyInput, "scored CSV has no header");
  const Row& names = records.front();
  const auto col = [&names](std::string_view name) -> std::optional<std::size_t> {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
  };
  const auto id_col = col("instance_id"), kind_col = col("kind"), em_col = col("em"),
             f1_col = col("f1"), cells_col = col("cells");
  if (!id_col || !kind_col || !em_col || !f1_col)
    throw Error(Errc::ParseError, "scored CSV needs instance_id, kind, em, f1 columns");

  std::vector<ScoredPair> out;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const Row& rec = records[r];
    if (rec.size() != names.size())
      throw Error(Errc::RaggedInput, "scored CSV line " + std::to_string(r + 1));
    try {
      ScoredPair s;
      s.instance_id = rec[*id_col];
      s.kind = kind_from_name(rec[*kind_col]);
      s.em = std::stoi(rec[*em_col]);
      s.f1 = std::stod(rec[*f1_col]);
      if (cells_col) s.cells = std::stoul(rec[*cells_col]);
      if ((s.em != 0 && s.em != 1) || s.f1 < 0.0 || s.f1 > 1.0)
        throw Error(Errc::ParseError, "em/f1 out of range");
      out.push_back(std::move(s));
    } catch (const std::logic_error&) {
      throw Error(Errc::ParseError, "scored CSV line " + std::to_string(r + 1) + " has bad numbers");
    }
  }
  return out;
}

}  // namespace tablequake
