#include "tablequake/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "tablequake/error.hpp"
#include "tablequake/io.hpp"

namespace tablequake {

namespace {

constexpr int kCell = 14;
constexpr int kLeft = 48;
constexpr int kTop = 36;

struct Rgb {
  double r, g, b;
};

constexpr Rgb kNegative{33, 102, 172};
constexpr Rgb kNeutral{247, 247, 247};
constexpr Rgb kPositive{178, 24, 43};

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<Kind> kinds_in_report_order(std::span<const ScoredPair> scored) {
  std::vector<Kind> out;
  for (const Kind k : kReportOrder)
    if (std::any_of(scored.begin(), scored.end(), [k](const ScoredPair& s) { return s.kind == k; }))
      out.push_back(k);
  return out;
}

}  // namespace

std::vector<SizeBin> default_bins(std::size_t cap, std::size_t count) {
  if (count == 0 || cap < count) throw Error(Errc::BadBins, "cannot split cap into bins");
  std::vector<SizeBin> bins;
  for (std::size_t i = 0; i < count; ++i) bins.push_back({cap * i / count, cap * (i + 1) / count});
  return bins;
}

void validate_bins(std::span<const SizeBin> bins) {
  if (bins.empty()) throw Error(Errc::BadBins, "no bins");
  if (bins.front().lo != 0) throw Error(Errc::BadBins, "first bin must start at 0");
  for (std::size_t i = 0; i < bins.size(); ++i) {
    if (bins[i].lo >= bins[i].hi)
      throw Error(Errc::BadBins, "bin " + std::to_string(i) + " is empty or reversed");
    if (i > 0 && bins[i].lo != bins[i - 1].hi)
      throw Error(Errc::BadBins, bins[i].lo < bins[i - 1].hi
                                     ? "bins " + std::to_string(i - 1) + " and " +
                                           std::to_string(i) + " overlap"
                                     : "gap before bin " + std::to_string(i));
  }
}

std::vector<SizeBin> parse_bins(std::string_view spec) {
  if (spec == "default") return default_bins();
  std::vector<SizeBin> bins;
  std::size_t pos = 0;
  while (pos < spec.size()) {
    auto comma = spec.find(',', pos);
    if (comma == std::string_view::npos) comma = spec.size();
    const std::string item(spec.substr(pos, comma - pos));
    pos = comma + 1;
    const auto dash = item.find('-');
    if (dash == std::string::npos) throw Error(Errc::BadBins, "bin '" + item + "' is not lo-hi");
    try {
      bins.push_back({std::stoul(item.substr(0, dash)), std::stoul(item.substr(dash + 1))});
    } catch (const std::logic_error&) {
      throw Error(Errc::BadBins, "bin '" + item + "' is not lo-hi");
    }
  }
  validate_bins(bins);
  return bins;
}

std::vector<BinRow> size_bin_report(std::span<const ScoredPair> scored,
                                    std::span<const SizeBin> bins) {
  validate_bins(bins);
  const auto bin_of = [&bins](std::size_t cells) {
    for (std::size_t i = 0; i < bins.size(); ++i)
      if (cells >= bins[i].lo && cells < bins[i].hi) return i;
    throw Error(Errc::BadBins, "cell count " + std::to_string(cells) + " lies outside every bin");
  };

  std::vector<BinRow> rows;
  for (const Kind kind : kinds_in_report_order(scored)) {
    const std::size_t first = rows.size();
    for (const auto& b : bins) rows.push_back({b, kind});
    for (const auto& s : scored) {
      if (s.kind != kind) continue;
      BinRow& row = rows[first + bin_of(s.cells)];
      ++row.count;
      row.em_mean += s.em;
      row.f1_mean += s.f1;
    }
    for (std::size_t i = first; i < rows.size(); ++i) {
      if (rows[i].count == 0) continue;
      rows[i].em_mean /= static_cast<double>(rows[i].count);
      rows[i].f1_mean /= static_cast<double>(rows[i].count);
    }
  }
  return rows;
}

std::string bins_to_csv(std::span<const BinRow> rows) {
  std::string out = "bin_lo,bin_hi,kind,count,em,f1\n";
  for (const auto& r : rows) {
    out += std::to_string(r.bin.lo) + "," + std::to_string(r.bin.hi) + "," +
           std::string(kind_name(r.kind)) + "," + std::to_string(r.count) + ",";
    if (r.count > 0) out += io::format_number(r.em_mean) + "," + io::format_number(r.f1_mean);
    else out += ",";
    out += "\n";
  }
  return out;
}

std::string heatmap_csv(const CorrelationGrid& grid) {
  std::string out;
  for (std::size_t l = 0; l < grid.layers; ++l) {
    if (l) out += '\n';
    for (std::size_t h = 0; h < grid.heads; ++h) {
      if (h) out += ',';
      if (const auto& rho = grid.at(l, h).rho) out += io::format_number(*rho);
    }
  }
  return out;
}

std::string heatmap_color(double rho) {
  const double t = std::clamp(rho, -1.0, 1.0);
  const Rgb& end = t < 0 ? kNegative : kPositive;
  const double a = std::abs(t);
  const auto channel = [a](double from, double to) {
    return static_cast<int>(std::lround(from + (to - from) * a));
  };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", channel(kNeutral.r, end.r),
                channel(kNeutral.g, end.g), channel(kNeutral.b, end.b));
  return buf;
}

std::string heatmap_svg(const CorrelationGrid& grid, std::string_view title) {
  const int width = kLeft + static_cast<int>(grid.heads) * kCell + 80;
  const int height = kTop + static_cast<int>(grid.layers) * kCell + 24;
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) +
         " " + std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"9\">\n";
  svg +=
      "<defs><pattern id=\"hatch\" width=\"4\" height=\"4\" patternUnits=\"userSpaceOnUse\">"
      "<rect width=\"4\" height=\"4\" fill=\"#ffffff\"/>"
      "<path d=\"M0,4 L4,0\" stroke=\"#999999\" stroke-width=\"1\"/></pattern>\n";
  svg += "<linearGradient id=\"scale\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">"
         "<stop offset=\"0\" stop-color=\"" + heatmap_color(-1) + "\"/>"
         "<stop offset=\"0.5\" stop-color=\"" + heatmap_color(0) + "\"/>"
         "<stop offset=\"1\" stop-color=\"" + heatmap_color(1) + "\"/></linearGradient></defs>\n";
  svg += "<text x=\"" + std::to_string(kLeft) + "\" y=\"14\" font-size=\"11\">" +
         xml_escape(title) + "</text>\n";
  svg += "<text x=\"" + std::to_string(kLeft) + "\" y=\"28\">head</text>\n";
  svg += "<text x=\"4\" y=\"" + std::to_string(kTop - 4) + "\">layer</text>\n";

  for (std::size_t l = 0; l < grid.layers; ++l) {
    const int y = kTop + static_cast<int>(l) * kCell;
    svg += "<text x=\"4\" y=\"" + std::to_string(y + kCell - 3) + "\">" + std::to_string(l) +
           "</text>\n";
    for (std::size_t h = 0; h < grid.heads; ++h) {
      const int x = kLeft + static_cast<int>(h) * kCell;
      const auto& cell = grid.at(l, h);
      const std::string fill = cell.rho ? heatmap_color(*cell.rho) : "url(#hatch)";
      svg += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) + "\" width=\"" +
             std::to_string(kCell) + "\" height=\"" + std::to_string(kCell) + "\" fill=\"" + fill +
             "\" stroke=\"#dddddd\" stroke-width=\"0.5\"><title>layer " + std::to_string(l) +
             " head " + std::to_string(h) + ": " +
             (cell.rho ? io::format_number(*cell.rho) : std::string("undefined")) +
             "</title></rect>\n";
    }
  }
  const int legend_x = kLeft + static_cast<int>(grid.heads) * kCell + 16;
  const int legend_h = std::max(kCell * 3, static_cast<int>(grid.layers) * kCell);
  svg += "<rect x=\"" + std::to_string(legend_x) + "\" y=\"" + std::to_string(kTop) +
         "\" width=\"12\" height=\"" + std::to_string(legend_h) + "\" fill=\"url(#scale)\"/>\n";
  svg += "<text x=\"" + std::to_string(legend_x + 16) + "\" y=\"" + std::to_string(kTop + 8) +
         "\">+1</text>\n";
  svg += "<text x=\"" + std::to_string(legend_x + 16) + "\" y=\"" +
         std::to_string(kTop + legend_h / 2 + 3) + "\">0</text>\n";
  svg += "<text x=\"" + std::to_string(legend_x + 16) + "\" y=\"" +
         std::to_string(kTop + legend_h) + "\">-1</text>\n";
  svg += "</svg>\n";
  return svg;
}

void heatmap_emit(const CorrelationGrid& grid, const std::filesystem::path& dir,
                  std::string_view name) {
  io::ensure_directory(dir);
  const std::string stem = "heatmap_" + std::string(name);
  io::write_file_atomic(dir / (stem + ".csv"), heatmap_csv(grid));
  io::write_file_atomic(dir / (stem + ".svg"),
                        heatmap_svg(grid, "Spearman rho, entropy delta vs EM drop: " +
                                              std::string(name)));
}

nlohmann::json correlation_grid_to_json(const CorrelationGrid& grid) {
  nlohmann::json rho = nlohmann::json::array(), p = nlohmann::json::array(),
                 n = nlohmann::json::array();
  for (std::size_t l = 0; l < grid.layers; ++l) {
    nlohmann::json rr = nlohmann::json::array(), pr = nlohmann::json::array(),
                   nr = nlohmann::json::array();
    for (std::size_t h = 0; h < grid.heads; ++h) {
      const auto& c = grid.at(l, h);
      rr.push_back(c.rho ? nlohmann::json(*c.rho) : nlohmann::json());
      pr.push_back(c.p ? nlohmann::json(*c.p) : nlohmann::json());
      nr.push_back(c.n_points);
    }
    rho.push_back(std::move(rr));
    p.push_back(std::move(pr));
    n.push_back(std::move(nr));
  }
  return {{"layers", grid.layers}, {"heads", grid.heads}, {"rho", rho}, {"p", p}, {"n_points", n}};
}

SummaryTable summary_table(std::span<const AggregateReport> aggregates) {
  std::map<Kind, const AggregateReport*> by_kind;
  for (const auto& a : aggregates) by_kind[a.kind] = &a;
  if (!by_kind.contains(Kind::Original))
    throw Error(Errc::MissingOriginal, "summary needs an Original aggregate");

  SummaryTable out;
  out.json = nlohmann::json::array();
  char line[128];
  std::snprintf(line, sizeof line, "%-14s %6s %6s %6s %7s %6s\n", "Operation", "EM", "F1", "VP",
                "Emd", "N");
  out.text += line;
  for (const Kind kind : kReportOrder) {
    const auto it = by_kind.find(kind);
    if (it == by_kind.end()) continue;
    const AggregateReport& a = *it->second;
    const bool baseline = kind == Kind::Original;
    const std::string vp = !baseline && a.vp ? fixed3(*a.vp) : "-";
    const std::string emd = !baseline && a.emd ? fixed3(*a.emd) : "-";
    std::snprintf(line, sizeof line, "%-14s %6s %6s %6s %7s %6zu\n",
                  std::string(kind_label(kind)).c_str(), fixed3(a.em_mean).c_str(),
                  fixed3(a.f1_mean).c_str(), vp.c_str(), emd.c_str(), a.n);
    out.text += line;
    auto j = aggregate_to_json(a);
    if (baseline) {
      j["vp"] = nullptr;
      j["emd"] = nullptr;
    }
    out.json.push_back(std::move(j));
  }
  return out;
}

std::string scatter_csv(std::span<const ScatterPoint> points, std::string_view label_column) {
  std::string out = std::string(label_column) + ",mean_entropy_delta,em_drop\n";
  for (const auto& p : points)
    out += csv::quote(p.label) + "," + io::format_number(p.mean_delta) + "," +
           io::format_number(p.em) + "\n";
  return out;
}

}  // namespace tablequake
