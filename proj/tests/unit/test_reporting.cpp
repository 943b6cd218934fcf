#include <gtest/gtest.h>

#include "tablequake/error.hpp"
#include "tablequake/io.hpp"
#include "tablequake/reporting.hpp"
#include "test_support.hpp"

using namespace tablequake;

namespace {

std::vector<ScoredPair> scored_with_cells(const std::vector<std::size_t>& cells, Kind kind) {
  std::vector<ScoredPair> out;
  for (std::size_t i = 0; i < cells.size(); ++i)
    out.push_back({"i" + std::to_string(i), kind, static_cast<int>(i % 2), 0.5, cells[i]});
  return out;
}

CorrelationGrid filled(std::size_t layers, std::size_t heads, std::optional<double> rho) {
  return {layers, heads, std::vector<CorrelationCell>(layers * heads, {rho, rho ? 0.01 : rho, 5})};
}

AggregateReport agg(Kind k) {
  AggregateReport a;
  a.kind = k;
  a.n = 4;
  a.em_mean = 0.5;
  a.f1_mean = 0.75;
  if (k != Kind::Original) {
    a.emd = -0.25;
    a.vp = 0.25;
  }
  return a;
}

}  // namespace

TEST(Bins, DefaultIsSixPerKind) {
  const auto bins = default_bins();
  ASSERT_EQ(bins.size(), 6u);
  EXPECT_EQ(bins.front(), (SizeBin{0, 25}));
  EXPECT_EQ(bins.back(), (SizeBin{125, 150}));
  auto scored = scored_with_cells({3, 30, 140}, Kind::Original);
  const auto more = scored_with_cells({60}, Kind::NT);
  scored.insert(scored.end(), more.begin(), more.end());
  const auto rows = size_bin_report(scored, bins);
  EXPECT_EQ(rows.size(), 12u);
  EXPECT_EQ(rows[0].kind, Kind::Original);
  EXPECT_EQ(rows[6].kind, Kind::NT);
}

TEST(Bins, CountsSumToTotalAndEmptyBinsStay) {
  const auto scored = scored_with_cells({1, 2, 3, 4, 5}, Kind::RowSwap);
  const auto rows = size_bin_report(scored, default_bins());
  std::size_t total = 0;
  for (const auto& r : rows) total += r.count;
  EXPECT_EQ(total, 5u);
  EXPECT_EQ(rows[0].count, 5u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i].count, 0u);
  EXPECT_EQ(rows[0].em_mean, 0.4);
}

TEST(Bins, MalformedBins) {
  const std::vector<SizeBin> overlap{{0, 50}, {40, 150}};
  EXPECT_THROW(size_bin_report({}, overlap), Error);
  EXPECT_THROW(parse_bins("0-50,60-150"), Error);
  EXPECT_THROW(parse_bins("5-10"), Error);
  EXPECT_THROW(parse_bins("nonsense"), Error);
  EXPECT_EQ(parse_bins("0-10,10-20").size(), 2u);
  const auto scored = scored_with_cells({25}, Kind::Original);
  const std::vector<SizeBin> small{{0, 25}};
  EXPECT_THROW(size_bin_report(scored, small), Error);
}

TEST(Bins, Csv) {
  const auto rows = size_bin_report(scored_with_cells({1, 2}, Kind::Original),
                                    std::vector<SizeBin>{{0, 10}, {10, 20}});
  EXPECT_EQ(bins_to_csv(rows), "bin_lo,bin_hi,kind,count,em,f1\n0,10,original,2,0.5,0.5\n"
                               "10,20,original,0,,\n");
}

TEST(Heatmap, AllOnes) {
  const auto g = filled(2, 2, 1.0);
  EXPECT_EQ(heatmap_csv(g), "1,1\n1,1");
  const auto svg = heatmap_svg(g, "t");
  EXPECT_EQ(heatmap_color(1.0), "#b2182b");
  std::size_t count = 0;
  for (auto pos = svg.find("fill=\"#b2182b\" stroke"); pos != std::string::npos;
       pos = svg.find("fill=\"#b2182b\" stroke", pos + 1))
    ++count;
  EXPECT_EQ(count, 4u);
}

TEST(Heatmap, UndefinedCellsAreBlankAndHatched) {
  auto g = filled(1, 3, 0.5);
  g.cells[1] = {};
  EXPECT_EQ(heatmap_csv(g), "0.5,,0.5");
  EXPECT_NE(heatmap_svg(g, "t").find("fill=\"url(#hatch)\""), std::string::npos);
}

TEST(Heatmap, ColorScale) {
  EXPECT_EQ(heatmap_color(-1.0), "#2166ac");
  EXPECT_EQ(heatmap_color(0.0), "#f7f7f7");
  EXPECT_EQ(heatmap_color(7.0), heatmap_color(1.0));
}

TEST(Heatmap, EmitIsByteDeterministic) {
  testing_support::TempDir a, b;
  auto g = filled(3, 4, -0.25);
  g.cells[5] = {};
  heatmap_emit(g, a.path(), "row");
  heatmap_emit(g, b.path(), "row");
  for (const char* f : {"heatmap_row.csv", "heatmap_row.svg"})
    EXPECT_EQ(io::read_file(a / f), io::read_file(b / f));
}

TEST(Heatmap, AllUndefinedRenders) {
  testing_support::TempDir dir;
  EXPECT_NO_THROW(heatmap_emit(filled(2, 3, std::nullopt), dir.path(), "none"));
  EXPECT_EQ(io::read_file(dir / "heatmap_none.csv"), ",,\n,,");
}

TEST(Summary, OriginalOnly) {
  const std::vector<AggregateReport> in{agg(Kind::Original)};
  const auto t = summary_table(in);
  ASSERT_EQ(t.json.size(), 1u);
  EXPECT_TRUE(t.json[0]["vp"].is_null());
  EXPECT_TRUE(t.json[0]["emd"].is_null());
  EXPECT_NE(t.text.find("Original        0.500  0.750      -       -"), std::string::npos) << t.text;
}

TEST(Summary, TenKindsInReportOrder) {
  std::vector<AggregateReport> in;
  for (auto it = kReportOrder.rbegin(); it != kReportOrder.rend(); ++it) in.push_back(agg(*it));
  const auto t = summary_table(in);
  ASSERT_EQ(t.json.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i)
    EXPECT_EQ(t.json[i]["kind"], std::string(kind_name(kReportOrder[i])));
}

TEST(Summary, MissingOriginal) {
  const std::vector<AggregateReport> in{agg(Kind::NT)};
  try {
    summary_table(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingOriginal);
  }
}

TEST(Scatter, Csv) {
  const std::vector<ScatterPoint> pts{{"row", 0.5, 0.25}};
  EXPECT_EQ(scatter_csv(pts), "kind,mean_entropy_delta,em_drop\nrow,0.5,0.25\n");
}
