#include "tablequake/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tablequake/error.hpp"
#include "tablequake/parallel.hpp"

namespace tablequake {

namespace {

// Rows already within this distance of one are left untouched, so a trace
// that went through ingest once is stored bit-identically on the next pass.
constexpr double kRescaleThreshold = 1e-6;

template <typename T>
double checked_entropy(std::span<const T> p) {
  double sum = 0.0;
  for (const T v : p) {
    if (!(v >= T(0)) || !std::isfinite(static_cast<double>(v)))
      throw Error(Errc::NotAProbabilityVector, "negative or non-finite entry");
    sum += static_cast<double>(v);
  }
  if (std::abs(sum - 1.0) > AttentionTrace::kRowSumTolerance)
    throw Error(Errc::NotAProbabilityVector, "entries sum to " + std::to_string(sum));
  double h = 0.0;
  for (const T v : p) {
    const double x = static_cast<double>(v);
    if (x > 0.0) h -= x * std::log(x);
  }
  return std::max(0.0, h);
}

// Rows are validated at ingest; only the summation remains.
double trusted_entropy(std::span<const float> p) {
  double h = 0.0;
  for (const float v : p) {
    if (v > 0.0f) {
      const double x = v;
      h -= x * std::log(x);
    }
  }
  return std::max(0.0, h);
}

void check_shape(const HeadGrid& a, const HeadGrid& b) {
  if (a.layers != b.layers || a.heads != b.heads)
    throw Error(Errc::ShapeMismatch, std::to_string(a.layers) + "x" + std::to_string(a.heads) +
                                         " vs " + std::to_string(b.layers) + "x" +
                                         std::to_string(b.heads));
}

}  // namespace

AttentionTrace::AttentionTrace(std::size_t layers, std::size_t heads, std::size_t seq_len,
                               std::vector<float> data, bool causal,
                               std::optional<std::size_t> prompt_len)
    : layers_(layers),
      heads_(heads),
      seq_len_(seq_len),
      causal_(causal),
      prompt_len_(prompt_len.value_or(seq_len)),
      data_(std::move(data)) {
  if (layers_ == 0 || heads_ == 0 || seq_len_ == 0)
    throw Error(Errc::BadShape, "trace dimensions must be positive");
  if (data_.size() != layers_ * heads_ * seq_len_ * seq_len_)
    throw Error(Errc::ManifestMismatch, "trace holds " + std::to_string(data_.size()) +
                                            " values, shape needs " +
                                            std::to_string(layers_ * heads_ * seq_len_ * seq_len_));
  if (prompt_len_ == 0 || prompt_len_ > seq_len_)
    throw Error(Errc::BadShape, "prompt_len must lie in [1, seq_len]");

  const std::size_t n = seq_len_;
  const std::size_t rows = layers_ * heads_ * n;
  for (std::size_t r = 0; r < rows; ++r) {
    float* row = data_.data() + r * n;
    const std::size_t query = r % n;
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const float v = row[k];
      if (!(v >= 0.0f) || !std::isfinite(v) || (causal_ && k > query && v != 0.0f)) {
        const std::size_t mat = r / n;
        throw Error(Errc::NotAProbabilityVector,
                    "layer " + std::to_string(mat / heads_) + " head " +
                        std::to_string(mat % heads_) + " row " + std::to_string(query) +
                        ": invalid entry at key " + std::to_string(k));
      }
      sum += v;
    }
    const double off = std::abs(sum - 1.0);
    if (off > kRowSumTolerance) {
      const std::size_t mat = r / n;
      throw Error(Errc::NotAProbabilityVector,
                  "layer " + std::to_string(mat / heads_) + " head " +
                      std::to_string(mat % heads_) + " row " + std::to_string(query) +
                      ": sums to " + std::to_string(sum));
    }
    if (off > kRescaleThreshold)
      for (std::size_t k = 0; k < n; ++k) row[k] = static_cast<float>(row[k] / sum);
  }
}

std::span<const float> AttentionTrace::matrix(std::size_t layer, std::size_t head) const {
  if (layer >= layers_ || head >= heads_) throw Error(Errc::BadShape, "head index out of range");
  return std::span<const float>(data_).subspan((layer * heads_ + head) * seq_len_ * seq_len_,
                                               seq_len_ * seq_len_);
}

std::span<const float> AttentionTrace::row(std::size_t layer, std::size_t head,
                                           std::size_t query) const {
  return matrix(layer, head).subspan(query * seq_len_, seq_len_);
}

double HeadGrid::mean() const {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

std::size_t CorrelationGrid::defined_count() const {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [](const auto& c) { return c.rho.has_value(); }));
}

nlohmann::json profile_to_json(const EntropyProfile& profile) {
  nlohmann::json values = nlohmann::json::array();
  for (std::size_t l = 0; l < profile.grid.layers; ++l) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t h = 0; h < profile.grid.heads; ++h) row.push_back(profile.grid.at(l, h));
    values.push_back(std::move(row));
  }
  return {{"layers", profile.grid.layers},
          {"heads", profile.grid.heads},
          {"seq_len", profile.seq_len},
          {"normalized", profile.normalized},
          {"values", std::move(values)}};
}

EntropyProfile profile_from_json(const nlohmann::json& j) {
  try {
    EntropyProfile p;
    p.grid = HeadGrid(j.at("layers").get<std::size_t>(), j.at("heads").get<std::size_t>());
    p.seq_len = j.at("seq_len").get<std::size_t>();
    p.normalized = j.value("normalized", false);
    const auto& values = j.at("values");
    if (values.size() != p.grid.layers)
      throw Error(Errc::ShapeMismatch, "profile values do not match layers");
    for (std::size_t l = 0; l < p.grid.layers; ++l) {
      if (values[l].size() != p.grid.heads)
        throw Error(Errc::ShapeMismatch, "profile values do not match heads");
      for (std::size_t h = 0; h < p.grid.heads; ++h) p.grid.at(l, h) = values[l][h].get<double>();
    }
    double max_h = p.seq_len > 1 ? std::log(static_cast<double>(p.seq_len)) : 0.0;
    if (p.normalized) max_h = p.seq_len > 1 ? 1.0 : 0.0;
    for (const double v : p.grid.values)
      if (!(v >= -1e-12) || v > max_h + 1e-9)
        throw Error(Errc::ParseError, "profile entropy outside [0, ln seq_len]");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
}

double row_entropy(std::span<const double> p) { return checked_entropy(p); }
double row_entropy(std::span<const float> p) { return checked_entropy(p); }

EntropyProfile head_entropy_profile(const AttentionTrace& trace, EntropyOptions options) {
  const std::size_t n = trace.seq_len();
  const std::size_t queries =
      options.positions == PositionPolicy::Prompt ? trace.prompt_len() : trace.seq_len();
  const double scale =
      options.normalize && n >= 2 ? 1.0 / std::log(static_cast<double>(n)) : 1.0;

  EntropyProfile profile;
  profile.seq_len = n;
  profile.normalized = options.normalize;
  profile.grid = HeadGrid(trace.layers(), trace.heads());
  parallel_for(trace.layers() * trace.heads(), [&](std::size_t idx) {
    const std::size_t l = idx / trace.heads();
    const std::size_t h = idx % trace.heads();
    double total = 0.0;
    for (std::size_t q = 0; q < queries; ++q) total += trusted_entropy(trace.row(l, h, q));
    profile.grid.values[idx] = total / static_cast<double>(queries) * scale;
  });
  return profile;
}

HeadGrid entropy_delta(const EntropyProfile& orig, const EntropyProfile& pert) {
  check_shape(orig.grid, pert.grid);
  HeadGrid out(orig.grid.layers, orig.grid.heads);
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = pert.grid.values[i] - orig.grid.values[i];
  return out;
}

CorrelationGrid correlation_grid(const std::map<std::string, HeadGrid>& deltas,
                                 const std::map<std::string, double>& em_diffs) {
  if (deltas.size() != em_diffs.size() ||
      !std::equal(deltas.begin(), deltas.end(), em_diffs.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; }))
    throw Error(Errc::IdMismatch, "entropy deltas and EM differences cover different ids");
  if (deltas.empty()) throw Error(Errc::InvalidArgument, "correlation grid needs data points");

  const HeadGrid& first = deltas.begin()->second;
  for (const auto& [id, grid] : deltas) check_shape(first, grid);

  std::vector<double> y;
  y.reserve(em_diffs.size());
  for (const auto& [id, v] : em_diffs) y.push_back(v);

  CorrelationGrid out;
  out.layers = first.layers;
  out.heads = first.heads;
  out.cells.resize(first.values.size());
  parallel_for(out.cells.size(), [&](std::size_t idx) {
    std::vector<double> x;
    x.reserve(deltas.size());
    for (const auto& [id, grid] : deltas) x.push_back(grid.values[idx]);
    const auto r = spearman(x, y);
    out.cells[idx] = CorrelationCell{r.rho, r.p, r.n};
  });
  return out;
}

SpearmanResult aggregate_scatter(std::span<const ScatterPoint> points) {
  std::vector<double> x, y;
  for (const auto& pt : points) {
    x.push_back(pt.mean_delta);
    y.push_back(pt.em);
  }
  return spearman(x, y);
}

HeadRanking rank_heads(const CorrelationGrid& grid, std::size_t k) {
  std::vector<HeadScore> scores;
  for (std::size_t l = 0; l < grid.layers; ++l)
    for (std::size_t h = 0; h < grid.heads; ++h)
      if (const auto& c = grid.at(l, h); c.rho) scores.push_back({l, h, *c.rho});
  if (scores.size() < k)
    throw Error(Errc::InsufficientDefinedCells, std::to_string(scores.size()) +
                                                    " defined cells, need " + std::to_string(k));
  const auto by_position = [](const HeadScore& a, const HeadScore& b) {
    return std::pair(a.layer, a.head) < std::pair(b.layer, b.head);
  };
  HeadRanking out;
  auto desc = scores;
  std::stable_sort(desc.begin(), desc.end(), [&](const HeadScore& a, const HeadScore& b) {
    return a.rho != b.rho ? a.rho > b.rho : by_position(a, b);
  });
  out.top.assign(desc.begin(), desc.begin() + static_cast<std::ptrdiff_t>(k));
  auto asc = std::move(scores);
  std::stable_sort(asc.begin(), asc.end(), [&](const HeadScore& a, const HeadScore& b) {
    return a.rho != b.rho ? a.rho < b.rho : by_position(a, b);
  });
  out.bottom.assign(asc.begin(), asc.begin() + static_cast<std::ptrdiff_t>(k));
  return out;
}

}  // namespace tablequake
