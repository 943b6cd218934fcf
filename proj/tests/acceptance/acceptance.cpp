// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Usage: acceptance [work_dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oracles/oracles.hpp"
#include "tablequake/attention.hpp"
#include "tablequake/io.hpp"
#include "tablequake/metrics.hpp"
#include "tablequake/mock.hpp"
#include "tablequake/perturbation.hpp"
#include "tablequake/pipeline.hpp"
#include "tablequake/reporting.hpp"
#include "tablequake/run_store.hpp"
#include "tablequake/spearman.hpp"

using namespace tablequake;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kMetricTol = 1e-12;
constexpr double kEntropyTol = 1e-9;
constexpr double kSpearmanTol = 1e-9;
constexpr double kAlgebraBudgetS = 1.0;
constexpr double kEntropyBudgetS = 5.0;
constexpr double kSimulateBudgetS = 30.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

fs::path g_work;
const fs::path kData = TABLEQUAKE_TEST_DATA;

std::vector<std::string> cell_multiset(const Table& t) {
  std::vector<std::string> cells(t.header());
  for (const auto& r : t.rows()) cells.insert(cells.end(), r.begin(), r.end());
  std::sort(cells.begin(), cells.end());
  return cells;
}

Outcome perturbation_algebra() {
  Outcome o;
  oracle::Mix rng{0xA11CE};
  std::vector<Table> tables;
  for (int i = 0; i < 200; ++i) {
    const std::size_t cols = 1 + rng() % 12;
    const std::size_t max_rows = 150 / cols - 1;
    const std::size_t rows = rng() % (max_rows + 1);
    std::size_t serial = 0;
    const auto cell = [&] { return std::string(1, static_cast<char>('a' + rng() % 3)) + std::to_string(serial++); };
    Row header;
    for (std::size_t c = 0; c < cols; ++c) header.push_back(cell());
    std::vector<Row> body(rows);
    for (auto& r : body)
      for (std::size_t c = 0; c < cols; ++c) r.push_back(cell());
    tables.emplace_back(header, body);
    o.require(cell_count(tables.back()) <= 150, "table over 150 cells");
  }

  const auto t0 = Clock::now();
  std::size_t n = 0;
  for (const auto& t : tables) {
    const std::uint64_t seed = rng();
    const auto ms = cell_multiset(t);
    for (const Kind k : kStructuralKinds)
      o.require(cell_multiset(apply_structural(t, k, seed)) == ms,
                "multiset changed by " + std::string(kind_name(k)) + " on table " + std::to_string(n));
    o.require(transpose(transpose(t)) == t, "transpose not an involution on table " + std::to_string(n));
    const auto tt = transpose(t);
    if (t.num_rows() >= 2) o.require(row_swap(t, seed) != t, "row swap returned its input");
    if (t.num_columns() >= 2) o.require(column_swap(t, seed) != t, "column swap returned its input");
    if (tt.num_rows() >= 2)
      o.require(transpose_row_swap(t, seed) != tt, "transpose row swap did not swap");
    if (tt.num_columns() >= 2)
      o.require(transpose_col_swap(t, seed) != tt, "transpose col swap did not swap");
    ++n;
  }
  const double elapsed = seconds_since(t0);
  o.require(elapsed < kAlgebraBudgetS, "took " + std::to_string(elapsed) + " s");
  if (o.pass) o.detail = "200 tables in " + std::to_string(elapsed) + " s";
  return o;
}

Outcome seeded_determinism() {
  Outcome o;
  const auto doc = nlohmann::json::parse(io::read_file(kData / "swap_reference.json"));
  const auto base = table_from_json(doc.at("table"));
  o.require(base.num_rows() == 5, "fixture is not 5 rows");
  std::size_t cases = 0;
  for (const auto& c : doc.at("cases")) {
    const auto seed = c.at("seed").get<std::uint64_t>();
    o.require(row_swap(base, seed) == table_from_json(c.at("row_swap")),
              "row_swap differs for seed " + std::to_string(seed));
    o.require(column_swap(base, seed) == table_from_json(c.at("column_swap")),
              "column_swap differs for seed " + std::to_string(seed));
    ++cases;
  }
  o.require(cases == 3, "expected seeds 0, 1, 42");
  if (o.pass) o.detail = "seeds 0, 1, 42 match the reference table";
  return o;
}

Outcome metric_oracle() {
  Outcome o;
  const std::vector<std::pair<std::string, std::string>> pairs = {
      {"Bangkok", "Bangkok, Thailand"},
      {"Bangkok, Thailand", "bangkok thailand"},
      {"The 42", "42"},
      {"42", "forty two"},
      {"", ""},
      {"Lima", ""},
      {"New York City", "new york"},
      {"1,200", "1200"},
      {"1 200", "1,200"},
      {"an apple a day", "apple day"},
      {"Red, white and blue", "blue white red"},
      {"Mount Everest (Nepal)", "Everest"},
      {"yes", "Yes."},
      {"no", "yes"},
      {"3.14", "3 14"},
      {"St. Louis", "st louis"},
      {"paris paris paris", "Paris"},
      {"The The", ""},
      {"A-B-C", "a b c d"},
      {"Jan 5, 2001", "5 january 2001"},
  };
  o.require(pairs.size() == 20, "fixture must hold 20 pairs");
  o.require(f1("Bangkok", std::vector<std::string>{"Bangkok, Thailand"}) == 2.0 / 3.0,
            "Bangkok vs Bangkok, Thailand is not exactly 2/3");
  for (const auto& [pred, gold] : pairs) {
    const std::vector<std::string> targets{gold};
    o.require(std::fabs(f1(pred, targets) - oracle::f1(pred, {gold})) <= kMetricTol,
              "F1 differs for '" + pred + "' vs '" + gold + "'");
    o.require(exact_match(pred, targets) == oracle::em(pred, {gold}),
              "EM differs for '" + pred + "' vs '" + gold + "'");
  }

  oracle::Mix rng{99};
  for (int v = 0; v < 1000; ++v) {
    const std::size_t n = 1 + rng() % 50;
    std::vector<OutcomePair> outcome(n);
    std::vector<ScoredPair> orig, pert;
    for (std::size_t i = 0; i < n; ++i) {
      outcome[i] = {static_cast<int>(rng() % 2), static_cast<int>(rng() % 2)};
      const auto id = std::to_string(i);
      orig.push_back({id, Kind::Original, outcome[i].em_original, 0.0, 1});
      pert.push_back({id, Kind::RVP, outcome[i].em_perturbed, 0.0, 1});
    }
    const auto agg = aggregate(orig, pert);
    o.require(variation_percentage(outcome) >= std::fabs(*agg.emd), "VP < |Emd| on vector " + std::to_string(v));
    o.require(*agg.vp == variation_percentage(outcome), "aggregate VP disagrees");
  }
  if (o.pass) o.detail = "20 pairs within 1e-12; 1000 outcome vectors";
  return o;
}

Outcome table_arithmetic() {
  Outcome o;
  std::vector<ScoredPair> orig, pert;
  for (int i = 0; i < 100; ++i) {
    const auto id = "w" + std::to_string(i);
    orig.push_back({id, Kind::Original, i < 37 ? 1 : 0, i < 37 ? 1.0 : 0.0, 10});
    pert.push_back({id, Kind::NT, i < 5 ? 1 : 0, i < 5 ? 1.0 : 0.0, 10});
  }
  const auto base = summarize(orig);
  const auto agg = aggregate(orig, pert);
  o.require(base.em_mean == 0.37, "original EM is not 0.37");
  o.require(agg.em_mean == 0.05, "perturbed EM is not 0.05");
  o.require(agg.emd && *agg.emd == -0.32, "Emd is not exactly -0.32");
  if (o.pass) o.detail = "EM 0.37 -> 0.05 gives Emd " + io::format_number(*agg.emd);
  return o;
}

Outcome entropy() {
  Outcome o;
  for (const std::size_t n : {2, 4, 8, 512}) {
    const std::vector<double> p(n, 1.0 / static_cast<double>(n));
    o.require(std::fabs(row_entropy(p) - std::log(static_cast<double>(n))) <= kEntropyTol,
              "uniform row of " + std::to_string(n) + " is not ln n");
    const AttentionTrace t(1, 1, n, std::vector<float>(n * n, 1.0f / static_cast<float>(n)));
    o.require(std::fabs(head_entropy_profile(t).grid.at(0, 0) - std::log(static_cast<double>(n))) <= kEntropyTol,
              "uniform profile of " + std::to_string(n) + " is not ln n");
    std::vector<double> hot(n, 0.0);
    hot[n / 2] = 1.0;
    o.require(row_entropy(hot) == 0.0, "one-hot row is not 0");
  }
  // Rows: one-hot, uniform over 2 (of 4), uniform over 4.
  std::vector<float> mixed{1, 0, 0, 0, 0.5f, 0.5f, 0, 0, 0.25f, 0.25f, 0.25f, 0.25f, 0, 0, 0, 1};
  const double hand = (0.0 + std::log(2.0) + std::log(4.0) + 0.0) / 4.0;
  o.require(std::fabs(head_entropy_profile(AttentionTrace(1, 1, 4, mixed)).grid.at(0, 0) - hand) <= kEntropyTol,
            "mixed-row profile differs from the hand mean");

  const auto big = synth_trace(512, 32, 32, 0.5, 7);
  const auto t0 = Clock::now();
  const auto profile = head_entropy_profile(big);
  const double elapsed = seconds_since(t0);
  o.require(profile.grid.values.size() == 32 * 32, "profile shape");
  o.require(elapsed < kEntropyBudgetS, "32x32x512x512 profile took " + std::to_string(elapsed) + " s");
  if (o.pass) o.detail = "32x32x512x512 profile in " + std::to_string(elapsed) + " s";
  return o;
}

Outcome spearman_oracle() {
  Outcome o;
  oracle::Mix rng{20};
  std::size_t compared = 0;
  for (int v = 0; v < 500; ++v) {
    const std::size_t n = 3 + rng() % 18;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng() % 7);
      y[i] = static_cast<double>(rng() % 1000) / 10.0;
    }
    const auto r = spearman(x, y);
    const double expected = oracle::spearman_rho(x, y);
    if (std::isnan(expected)) {
      o.require(!r.defined(), "defined rho where the oracle is undefined");
      continue;
    }
    o.require(r.defined() && std::fabs(*r.rho - expected) <= kSpearmanTol,
              "rho differs on vector " + std::to_string(v));
    ++compared;
  }
  for (int v = 0; v < 50; ++v) {
    std::vector<double> x(5), y(5);
    for (std::size_t i = 0; i < 5; ++i) {
      x[i] = static_cast<double>(rng() % 4);
      y[i] = static_cast<double>(rng() % 5);
    }
    const auto r = spearman(x, y);
    if (!r.defined()) continue;
    o.require(*r.p == oracle::exhaustive_p(x, y), "n=5 p differs from enumeration on case " + std::to_string(v));
  }
  const std::vector<double> constant(6, 2.5), ramp{1, 2, 3, 4, 5, 6};
  o.require(!spearman(constant, ramp).defined() && !spearman(ramp, constant).p,
            "constant input produced a number");
  if (o.pass) o.detail = std::to_string(compared) + " vectors within 1e-9; n=5 p exact";
  return o;
}

Outcome end_to_end() {
  Outcome o;
  pipeline::SimulateOptions opts;
  opts.instances = kData / "instances_100.jsonl";
  opts.out_dir = g_work / "simulate";
  opts.config = mock_config_from_json(nlohmann::json::parse(io::read_file(kData / "mock.json")));
  fs::remove_all(opts.out_dir);

  const auto t0 = Clock::now();
  const auto summary = pipeline::simulate(opts);
  const double elapsed = seconds_since(t0);

  o.require(summary.instances == 100, "expected 100 instances");
  const auto& r = summary.scatter_result;
  o.require(r.n == 5, "scatter needs the five structural kinds");
  o.require(r.rho && *r.rho == 1.0, "aggregate rho is not 1");
  o.require(r.p && *r.p == 2.0 / 120.0, "aggregate p is not 2/120");
  const auto corr = nlohmann::json::parse(io::read_file(opts.out_dir / "reports" / "correlation.json"));
  std::size_t defined = 0;
  for (const auto& row : corr.at("structural").at("rho"))
    for (const auto& v : row) {
      if (v.is_null()) continue;
      ++defined;
      o.require(v.get<double>() > 0.0, "non-positive structural grid cell");
    }
  o.require(defined > 0, "structural grid has no defined cells");
  o.require(elapsed < kSimulateBudgetS, "simulate took " + std::to_string(elapsed) + " s");
  if (o.pass)
    o.detail = "rho=1 p=2/120, " + std::to_string(defined) + " positive cells, " +
               std::to_string(elapsed) + " s";
  fs::remove_all(opts.out_dir / "traces");
  return o;
}

Outcome degenerate() {
  Outcome o;
  std::map<std::string, HeadGrid> deltas;
  std::map<std::string, double> em;
  oracle::Mix rng{4};
  for (int i = 0; i < 12; ++i) {
    HeadGrid g(4, 4);
    for (auto& v : g.values) v = static_cast<double>(rng() % 100) / 50.0 - 1.0;
    deltas["m" + std::to_string(i)] = g;
    em["m" + std::to_string(i)] = 0.0;
  }
  const auto grid = correlation_grid(deltas, em);
  o.require(grid.defined_count() == 0, "grid has defined cells");
  const auto dir = g_work / "degenerate";
  heatmap_emit(grid, dir, "zero_em");
  o.require(io::read_file(dir / "heatmap_zero_em.csv") == ",,,\n,,,\n,,,\n,,,", "CSV not all blank");
  o.require(io::read_file(dir / "heatmap_zero_em.svg").find("url(#hatch)") != std::string::npos,
            "SVG lacks hatched cells");
  if (o.pass) o.detail = "16 undefined cells rendered";
  return o;
}

Outcome io_round_trips() {
  Outcome o;
  const std::vector<RunRecord> records{
      {"q1", Kind::Original, 0, "m", fnv1a64("p1"), "Lima", "traces/q1.attn"},
      {"q1", Kind::TransposeColSwap, 2, "m", fnv1a64("p2"), "r@nD0m v@1u3", std::nullopt},
      {"q\"2", Kind::NT, 3, "m2", 0xffffffffffffffffULL, "line\nbreak", std::nullopt}};
  const auto dir = g_work / "io";
  io::ensure_directory(dir);
  write_records(dir / "run.jsonl", records);
  o.require(read_records(dir / "run.jsonl") == records, "records changed in round trip");
  o.require(encode_records(read_records(dir / "run.jsonl")) == io::read_file(dir / "run.jsonl"),
            "record encoding not stable");

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto t = synth_trace(3 + seed * 7, 2, 3, 0.3 * static_cast<double>(seed), seed);
    write_trace(dir / "t.attn", t);
    const auto back = read_trace(dir / "t.attn");
    o.require(back == t, "trace values changed");
    o.require(encode_trace(back) == io::read_file(dir / "t.attn"), "trace bytes changed");
  }
  o.require(fnv1a64("") == 0xcbf29ce484222325ULL, "fnv1a64(\"\") wrong");
  o.require(fnv1a64("a") == oracle::fnv1a("a"), "fnv1a64(\"a\") differs from the oracle");
  if (o.pass) o.detail = "records and traces bit-exact";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  g_work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "tablequake-acceptance";
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"perturbation algebra", perturbation_algebra},
      {"seeded determinism", seeded_determinism},
      {"metric oracle equivalence", metric_oracle},
      {"emd arithmetic", table_arithmetic},
      {"entropy", entropy},
      {"spearman oracle", spearman_oracle},
      {"end-to-end synthetic correlation", end_to_end},
      {"degenerate handling", degenerate},
      {"i/o round trips", io_round_trips},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    if (!o.pass) ++failures;
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
