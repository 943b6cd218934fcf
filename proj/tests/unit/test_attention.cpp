#include <cmath>
#include <cstdlib>

#include <gtest/gtest.h>

#include "oracles/oracles.hpp"
#include "tablequake/attention.hpp"
#include "tablequake/error.hpp"
#include "tablequake/mock.hpp"
#include "tablequake/parallel.hpp"
#include "tablequake/rng.hpp"

using namespace tablequake;

namespace {

AttentionTrace uniform_trace(std::size_t layers, std::size_t heads, std::size_t n) {
  return AttentionTrace(layers, heads, n,
                        std::vector<float>(layers * heads * n * n, 1.0f / static_cast<float>(n)));
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::Io;
}

}  // namespace

TEST(RowEntropy, Examples) {
  const std::vector<double> u4(4, 0.25);
  EXPECT_NEAR(row_entropy(u4), std::log(4.0), 1e-12);
  const std::vector<double> hot{0, 1, 0};
  EXPECT_EQ(row_entropy(hot), 0.0);
  const std::vector<double> half{0.5, 0.5};
  EXPECT_NEAR(row_entropy(half), 0.693147, 1e-6);
}

TEST(RowEntropy, RejectsNonDistributions) {
  const std::vector<double> neg{1.5, -0.5};
  const std::vector<double> short_sum{0.5, 0.4};
  EXPECT_EQ(code_of([&] { row_entropy(neg); }), Errc::NotAProbabilityVector);
  EXPECT_EQ(code_of([&] { row_entropy(short_sum); }), Errc::NotAProbabilityVector);
}

TEST(RowEntropy, BoundsAndPermutationInvariance) {
  SplitMix64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.next_below(20);
    std::vector<double> p(n);
    double sum = 0;
    for (auto& v : p) sum += (v = rng.next_unit());
    for (auto& v : p) v /= sum;
    const double h = row_entropy(p);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(static_cast<double>(n)) + 1e-12);
    EXPECT_NEAR(h, oracle::entropy(p), 1e-12);
    std::reverse(p.begin(), p.end());
    EXPECT_NEAR(row_entropy(p), h, 1e-12);
  }
}

TEST(Trace, ValidationLocatesBadRows) {
  std::vector<float> data{0.5f, 0.5f, 0.9f, 0.3f};
  try {
    AttentionTrace(1, 1, 2, data);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotAProbabilityVector);
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
  EXPECT_EQ(code_of([] { AttentionTrace(1, 1, 2, {0.5f, 0.5f, 0.5f}); }), Errc::ManifestMismatch);
  EXPECT_EQ(code_of([] { AttentionTrace(0, 1, 1, {}); }), Errc::BadShape);
}

TEST(Trace, CausalRejectsFutureAttention) {
  EXPECT_NO_THROW(AttentionTrace(1, 1, 2, {1.0f, 0.0f, 0.5f, 0.5f}, true));
  EXPECT_EQ(code_of([] { AttentionTrace(1, 1, 2, {0.5f, 0.5f, 0.5f, 0.5f}, true); }),
            Errc::NotAProbabilityVector);
}

TEST(Trace, NearlyNormalizedRowsAreRescaled) {
  const AttentionTrace t(1, 1, 2, {0.50004f, 0.5f, 0.25f, 0.75f});
  const auto row = t.row(0, 0, 0);
  EXPECT_NEAR(static_cast<double>(row[0]) + row[1], 1.0, 1e-6);
}

TEST(Profile, UniformRows) {
  const auto p = head_entropy_profile(uniform_trace(2, 3, 8));
  for (double v : p.grid.values) EXPECT_NEAR(v, std::log(8.0), 1e-6);
}

TEST(Profile, SingleToken) {
  const auto p = head_entropy_profile(uniform_trace(2, 2, 1));
  for (double v : p.grid.values) EXPECT_EQ(v, 0.0);
}

TEST(Profile, MixedRowsAverage) {
  const AttentionTrace t(1, 1, 2, {1.0f, 0.0f, 0.5f, 0.5f});
  EXPECT_NEAR(head_entropy_profile(t).grid.at(0, 0), std::log(2.0) / 2.0, 1e-12);
}

TEST(Profile, PromptPositionsOnly) {
  // Row 0 is one-hot, row 1 uniform; only the first row belongs to the prompt.
  const AttentionTrace t(1, 1, 2, {1.0f, 0.0f, 0.5f, 0.5f}, false, 1);
  EXPECT_EQ(head_entropy_profile(t, {false, PositionPolicy::Prompt}).grid.at(0, 0), 0.0);
  EXPECT_NEAR(head_entropy_profile(t, {false, PositionPolicy::All}).grid.at(0, 0),
              std::log(2.0) / 2.0, 1e-12);
}

TEST(Profile, NormalizedByLogN) {
  const auto p = head_entropy_profile(uniform_trace(1, 1, 16), {true, PositionPolicy::All});
  EXPECT_NEAR(p.grid.at(0, 0), 1.0, 1e-6);
  EXPECT_TRUE(p.normalized);
}

TEST(Profile, JsonRoundTrip) {
  const auto p = head_entropy_profile(synth_trace(12, 2, 3, 0.5, 4));
  EXPECT_EQ(profile_from_json(profile_to_json(p)), p);
}

TEST(Delta, Examples) {
  const auto u = head_entropy_profile(uniform_trace(2, 2, 4));
  EXPECT_EQ(entropy_delta(u, u).values, std::vector<double>(4, 0.0));
  const auto hot = head_entropy_profile(synth_trace(4, 2, 2, 0.0, 1));
  for (double v : entropy_delta(hot, u).values) EXPECT_NEAR(v, std::log(4.0), 1e-6);
  const auto other = head_entropy_profile(uniform_trace(2, 3, 4));
  EXPECT_EQ(code_of([&] { entropy_delta(u, other); }), Errc::ShapeMismatch);
}

TEST(CorrelationGrid, ConstantEmDifferencesGiveUndefinedCells) {
  std::map<std::string, HeadGrid> deltas;
  std::map<std::string, double> em;
  for (int i = 0; i < 6; ++i) {
    HeadGrid g(2, 2);
    for (auto& v : g.values) v = i * 0.1;
    deltas["i" + std::to_string(i)] = g;
    em["i" + std::to_string(i)] = 0.0;
  }
  const auto grid = correlation_grid(deltas, em);
  EXPECT_EQ(grid.defined_count(), 0u);
  for (const auto& c : grid.cells) EXPECT_FALSE(c.rho);
}

TEST(CorrelationGrid, MonotoneCellsGiveOne) {
  std::map<std::string, HeadGrid> deltas;
  std::map<std::string, double> em;
  for (int i = 0; i < 7; ++i) {
    HeadGrid g(3, 2);
    for (std::size_t k = 0; k < g.values.size(); ++k) g.values[k] = std::pow(i, 1.0 + k) + k;
    deltas["i" + std::to_string(i)] = g;
    em["i" + std::to_string(i)] = i * 0.5;
  }
  const auto grid = correlation_grid(deltas, em);
  for (const auto& c : grid.cells) EXPECT_NEAR(*c.rho, 1.0, 1e-12);
}

TEST(CorrelationGrid, MatchesPerCellOracle) {
  SplitMix64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t layers = 1 + rng.next_below(4), heads = 1 + rng.next_below(4);
    std::map<std::string, HeadGrid> deltas;
    std::map<std::string, double> em;
    std::vector<std::string> ids;
    for (int i = 0; i < 10; ++i) {
      const auto id = "x" + std::to_string(i);
      ids.push_back(id);
      HeadGrid g(layers, heads);
      for (auto& v : g.values) v = static_cast<double>(rng.next_below(5));
      deltas[id] = g;
      em[id] = static_cast<double>(rng.next_below(3));
    }
    const auto grid = correlation_grid(deltas, em);
    for (std::size_t l = 0; l < layers; ++l)
      for (std::size_t h = 0; h < heads; ++h) {
        std::vector<double> x, y;
        for (const auto& [id, g] : deltas) {
          x.push_back(g.at(l, h));
          y.push_back(em.at(id));
        }
        const double expected = oracle::spearman_rho(x, y);
        const auto& cell = grid.at(l, h);
        if (std::isnan(expected)) {
          EXPECT_FALSE(cell.rho);
        } else {
          ASSERT_TRUE(cell.rho);
          EXPECT_NEAR(*cell.rho, expected, 1e-12);
        }
      }
  }
}

TEST(CorrelationGrid, KeyAndShapeChecks) {
  std::map<std::string, HeadGrid> deltas{{"a", HeadGrid(1, 1)}, {"b", HeadGrid(1, 1)}};
  EXPECT_EQ(code_of([&] { correlation_grid(deltas, {{"a", 1.0}, {"c", 0.0}}); }), Errc::IdMismatch);
  deltas["b"] = HeadGrid(1, 2);
  EXPECT_EQ(code_of([&] { correlation_grid(deltas, {{"a", 1.0}, {"b", 0.0}}); }),
            Errc::ShapeMismatch);
  EXPECT_EQ(code_of([] { correlation_grid({}, {}); }), Errc::InvalidArgument);
}

TEST(Scatter, FivePointsAndTooFew) {
  std::vector<ScatterPoint> pts;
  for (int i = 0; i < 5; ++i) pts.push_back({"k" + std::to_string(i), i * 0.3, i * 0.1 + 0.05});
  const auto r = aggregate_scatter(pts);
  EXPECT_EQ(*r.rho, 1.0);
  EXPECT_DOUBLE_EQ(*r.p, 2.0 / 120.0);
  pts.resize(2);
  EXPECT_FALSE(aggregate_scatter(pts).defined());
}

TEST(RankHeads, Examples) {
  CorrelationGrid g{1, 3, {{0.9, 0.01, 5}, {std::nullopt, std::nullopt, 5}, {0.1, 0.5, 5}}};
  auto r = rank_heads(g, 1);
  EXPECT_EQ(r.top, (std::vector<HeadScore>{{0, 0, 0.9}}));
  EXPECT_EQ(r.bottom, (std::vector<HeadScore>{{0, 2, 0.1}}));

  CorrelationGrid single{1, 2, {{std::nullopt, std::nullopt, 3}, {0.4, 0.2, 3}}};
  r = rank_heads(single, 1);
  EXPECT_EQ(r.top, r.bottom);
  EXPECT_EQ(r.top.at(0).head, 1u);
  EXPECT_EQ(code_of([&] { rank_heads(single, 2); }), Errc::InsufficientDefinedCells);

  CorrelationGrid ties{2, 1, {{0.5, 0.1, 4}, {0.5, 0.1, 4}}};
  r = rank_heads(ties, 1);
  EXPECT_EQ(r.top.at(0).layer, 0u);
  EXPECT_EQ(r.bottom.at(0).layer, 0u);
}

TEST(Parallel, EveryIndexOnceAndExceptionsPropagate) {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
  EXPECT_EQ(std::count(hits.begin(), hits.end(), 1), 1000);
  EXPECT_THROW(parallel_for(10, [](std::size_t i) {
                 if (i == 7) throw Error(Errc::InvalidArgument, "boom");
               }),
               Error);
  ::setenv("TABLEQUAKE_THREADS", "3", 1);
  EXPECT_EQ(thread_budget(), 3u);
  ::unsetenv("TABLEQUAKE_THREADS");
}

TEST(SynthTrace, ShapeAndDispersionOrdering) {
  const auto a = synth_trace(10, 2, 2, 0.2, 9);
  const auto b = synth_trace(10, 2, 2, 2.0, 9);
  EXPECT_EQ(a.layers(), 2u);
  EXPECT_EQ(a, synth_trace(10, 2, 2, 0.2, 9));
  const auto pa = head_entropy_profile(a), pb = head_entropy_profile(b);
  for (std::size_t i = 0; i < pa.grid.values.size(); ++i)
    EXPECT_LT(pa.grid.values[i], pb.grid.values[i]);
  EXPECT_EQ(code_of([] { synth_trace(0, 1, 1, 0.0, 0); }), Errc::BadShape);
  const auto u = head_entropy_profile(synth_trace(8, 1, 1, INFINITY, 0));
  EXPECT_NEAR(u.grid.at(0, 0), std::log(8.0), 1e-6);
}
