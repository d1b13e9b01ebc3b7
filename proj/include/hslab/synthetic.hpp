#pragma once

// Labeled matrices with planted structure, used as ground truth for the
// metrics and interventions.
//
// Rows come in pairs: row 2i has label 1, row 2i+1 has label 0, both carry
// pair id i. Every activation is baseline + N(0, noise_sigma^2) plus a class
// shift of +-class_gap * noise_sigma / 2 on the planted columns.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hslab/dataset.hpp"
#include "hslab/error.hpp"
#include "hslab/random.hpp"

namespace hslab {

struct PlantSpec {
  std::size_t m_rows = 1000;
  std::size_t d_dims = 32;
  double class_gap = 4.0;    // distance between class means, in noise sigmas
  double noise_sigma = 1.0;
  IndexSet signal_idx;       // columns carrying class information
  std::size_t redundancy = 1;
  bool compositional = false;
  double baseline = 0.0;     // resting activation of every column
  std::uint64_t seed = 0;
};

inline void validate(const PlantSpec& s) {
  require(s.m_rows >= 2 && s.m_rows % 2 == 0, ErrorCode::InvalidArgument, "m_rows must be even and at least 2");
  require(s.d_dims >= 1, ErrorCode::InvalidArgument, "d_dims must be at least 1");
  require(s.class_gap >= 0, ErrorCode::InvalidArgument, "class_gap must be non-negative");
  require(s.noise_sigma > 0, ErrorCode::InvalidArgument, "noise_sigma must be positive");
  require(s.redundancy >= 1, ErrorCode::InvalidArgument, "redundancy must be at least 1");
  for (auto k : s.signal_idx)
    require(k < s.d_dims, ErrorCode::IndexOutOfRange, "signal index " + std::to_string(k) + " >= d_dims");
}

/// Planted columns: signal_idx, then (for redundancy r > 1) the lowest unused
/// columns until |signal_idx| * r columns carry the signal, capped at d.
inline IndexSet planted_columns(const PlantSpec& s) {
  IndexSet out = s.signal_idx;
  std::ranges::sort(out);
  out.erase(std::unique(out.begin(), out.end()), out.end());
  const std::size_t target = std::min(s.d_dims, out.size() * s.redundancy);
  std::vector<bool> used(s.d_dims, false);
  for (auto k : out) used[k] = true;
  for (std::size_t k = 0; k < s.d_dims && out.size() < target; ++k)
    if (!used[k]) {
      out.push_back(k);
      used[k] = true;
    }
  std::ranges::sort(out);
  return out;
}

namespace detail {

/// Background rows plus pair ids; shifts are added by the caller.
inline LabeledMatrix background(const PlantSpec& s, Rng& rng) {
  LabeledMatrix m;
  m.data = Matrix<float>(s.m_rows, s.d_dims);
  m.labels.resize(s.m_rows);
  auto& ids = m.pair_ids.emplace(s.m_rows);
  for (std::size_t i = 0; i < s.m_rows; ++i) {
    m.labels[i] = i % 2 == 0 ? 1 : 0;
    ids[i] = static_cast<std::uint32_t>(i / 2);
  }
  for (auto& v : m.data.values()) v = static_cast<float>(s.baseline + s.noise_sigma * rng.normal());
  return m;
}

/// Adds sign(label) * shift to the listed columns; sign is +1 for label 1.
inline void add_class_shift(LabeledMatrix& m, std::span<const std::size_t> cols, double shift) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double signed_shift = m.labels[i] == 1 ? shift : -shift;
    auto row = m.data.row(i);
    for (auto k : cols) row[k] = static_cast<float>(row[k] + signed_shift);
  }
}

}  // namespace detail

/// Two-group coding. Each group alone determines the label; columns of A move
/// by -gap/2 for label 1 and B by +gap/2, so with a negative baseline A grows
/// in magnitude on regret rows and B on non-regret rows. The group *union*
/// has a label-independent mean. Deactivating to the baseline erases a group.
inline LabeledMatrix gen_compositional(const PlantSpec& spec, const IndexSet& a, const IndexSet& b) {
  validate(spec);
  require(!a.empty() && !b.empty(), ErrorCode::EmptyGroup, "compositional groups must be nonempty");
  for (auto k : a) {
    require(k < spec.d_dims && std::ranges::find(b, k) == b.end(), ErrorCode::OverlappingGroups,
            "column " + std::to_string(k) + " is in both groups or out of range");
  }
  for (auto k : b) require(k < spec.d_dims, ErrorCode::IndexOutOfRange, "group column out of range");
  Rng rng(spec.seed);
  auto m = detail::background(spec, rng);
  const double half = spec.class_gap * spec.noise_sigma / 2.0;
  detail::add_class_shift(m, a, -half);
  detail::add_class_shift(m, b, half);
  m.meta = {{"source", "synthetic"}, {"generator", "compositional"}};
  return m;
}

/// Splits the planted columns into two halves (A = lower half) for
/// compositional specs.
inline std::pair<IndexSet, IndexSet> compositional_groups(const PlantSpec& spec) {
  const auto cols = planted_columns(spec);
  require(cols.size() >= 2, ErrorCode::EmptyGroup, "compositional planting needs at least two signal columns");
  const std::size_t half = cols.size() / 2;
  return {IndexSet(cols.begin(), cols.begin() + static_cast<std::ptrdiff_t>(half)),
          IndexSet(cols.begin() + static_cast<std::ptrdiff_t>(half), cols.end())};
}

inline LabeledMatrix gen_clusters(const PlantSpec& spec) {
  validate(spec);
  if (spec.compositional) {
    const auto [a, b] = compositional_groups(spec);
    return gen_compositional(spec, a, b);
  }
  Rng rng(spec.seed);
  auto m = detail::background(spec, rng);
  detail::add_class_shift(m, planted_columns(spec), spec.class_gap * spec.noise_sigma / 2.0);
  m.meta = {{"source", "synthetic"}, {"generator", "clusters"}};
  return m;
}

// ---------------------------------------------------------------------------
// Layer series with a planted S-CDI ordering
// ---------------------------------------------------------------------------

struct SeriesLayer {
  std::size_t layer = 0;
  std::size_t rank = 0;  // target position in ascending S-CDI order
  double class_gap = 0;
  LabeledMatrix data;
};

/// Class gap used for a target rank: rank 0 gets base.class_gap, the highest
/// rank gets base.class_gap / 16, linear in between. Wider gaps score lower
/// S-CDI when the baseline dominates the noise.
inline double gap_for_rank(std::size_t rank, std::size_t n_ranks, double base_gap) {
  if (n_ranks <= 1) return base_gap;
  const double t = static_cast<double>(rank) / static_cast<double>(n_ranks - 1);
  return base_gap * (1.0 - t * 15.0 / 16.0);
}

inline std::vector<SeriesLayer> gen_layer_series(std::size_t n_layers, std::span<const std::size_t> pattern,
                                                 const PlantSpec& base) {
  require(n_layers >= 1, ErrorCode::InvalidArgument, "need at least one layer");
  require(pattern.size() == n_layers, ErrorCode::InvalidArgument, "pattern length must equal n_layers");
  const std::size_t n_ranks = *std::ranges::max_element(pattern) + 1;
  std::vector<SeriesLayer> out;
  for (std::size_t l = 0; l < n_layers; ++l) {
    PlantSpec spec = base;
    spec.class_gap = gap_for_rank(pattern[l], n_ranks, base.class_gap);
    spec.seed = derive_seed(base.seed, static_cast<std::uint64_t>(l));
    auto data = gen_clusters(spec);
    data.meta["layer"] = std::to_string(l);
    data.meta["model"] = "synthetic";
    out.push_back(SeriesLayer{l, pattern[l], spec.class_gap, std::move(data)});
  }
  return out;
}

/// Ground-truth sidecar describing a plant.
inline nlohmann::json ground_truth(const PlantSpec& spec) {
  nlohmann::json j = {{"m_rows", spec.m_rows},       {"d_dims", spec.d_dims},
                      {"class_gap", spec.class_gap}, {"noise_sigma", spec.noise_sigma},
                      {"baseline", spec.baseline},   {"redundancy", spec.redundancy},
                      {"seed", spec.seed},           {"compositional", spec.compositional},
                      {"planted", planted_columns(spec)}};
  if (spec.compositional) {
    const auto [a, b] = compositional_groups(spec);
    j["groups"] = {{"A", a}, {"B", b}};
  }
  return j;
}

inline nlohmann::json ground_truth(const std::vector<SeriesLayer>& series, const PlantSpec& base) {
  nlohmann::json j = ground_truth(base);
  j["layers"] = nlohmann::json::array();
  std::vector<std::size_t> order(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    order[i] = i;
    j["layers"].push_back({{"layer", series[i].layer}, {"rank", series[i].rank}, {"class_gap", series[i].class_gap}});
  }
  std::ranges::stable_sort(order, {}, [&](std::size_t i) { return series[i].rank; });
  j["expected_scdi_ascending"] = order;
  j["expected_selected_layer"] = order.front();
  return j;
}

/// Writes layer_<i>.hsds files and truth.json into `dir`; returns the layer paths.
inline std::vector<std::filesystem::path> write_layer_series(const std::filesystem::path& dir,
                                                             const std::vector<SeriesLayer>& series,
                                                             const PlantSpec& base) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> paths;
  for (const auto& layer : series) {
    paths.push_back(dir / ("layer_" + std::to_string(layer.layer) + ".hsds"));
    write_hsds(layer.data, paths.back());
  }
  const std::string truth = ground_truth(series, base).dump(2) + "\n";
  detail::write_file(dir / "truth.json", std::span<const char>(truth.data(), truth.size()));
  return paths;
}

}  // namespace hslab
