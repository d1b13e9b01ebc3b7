#pragma once

// Histogram estimates of entropy and normalized mutual information between
// neuron-group mean activations:
//   I_norm(A;B) = I(A;B) / sqrt(H(A) H(B))
// Entropies are in nats. Each variable is cut into `bins` equal-width bins
// over its observed [min, max].

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "hslab/dataset.hpp"
#include "hslab/error.hpp"

namespace hslab {

struct MiConfig {
  std::size_t bins = 20;

  void validate() const { require(bins >= 2, ErrorCode::InvalidArgument, "bins must be at least 2"); }
};

/// Per-row mean over the columns in `s`.
inline std::vector<double> group_mean_activation(const LabeledMatrix& m, std::span<const std::size_t> s) {
  if (s.empty()) fail(ErrorCode::EmptyGroup, "neuron group is empty");
  for (auto k : s)
    require(k < m.dims(), ErrorCode::IndexOutOfRange,
            "neuron " + std::to_string(k) + " is outside dimension " + std::to_string(m.dims()));
  std::vector<double> out(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.data.row(i);
    double sum = 0;
    for (auto k : s) sum += row[k];
    out[i] = sum / static_cast<double>(s.size());
  }
  return out;
}

/// Bin index per value; a constant input maps everything to bin 0.
inline std::vector<std::size_t> discretize(std::span<const double> values, std::size_t bins) {
  const auto [lo_it, hi_it] = std::ranges::minmax_element(values);
  const double lo = *lo_it, hi = *hi_it;
  std::vector<std::size_t> out(values.size(), 0);
  if (!(hi > lo)) return out;
  const double width = hi - lo;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double pos = (values[i] - lo) * static_cast<double>(bins) / width;
    out[i] = std::min(bins - 1, static_cast<std::size_t>(pos));
  }
  return out;
}

namespace detail {

inline double entropy_of_counts(std::span<const std::size_t> counts, double total) {
  double h = 0;
  for (auto c : counts)
    if (c > 0) {
      const double p = static_cast<double>(c) / total;
      h -= p * std::log(p);
    }
  return h;
}

}  // namespace detail

inline double entropy(std::span<const double> values, const MiConfig& cfg = {}) {
  cfg.validate();
  require(values.size() >= 2, ErrorCode::TooFewRows, "entropy needs at least 2 values");
  std::vector<std::size_t> counts(cfg.bins, 0);
  for (auto b : discretize(values, cfg.bins)) ++counts[b];
  return detail::entropy_of_counts(counts, static_cast<double>(values.size()));
}

struct MiEstimate {
  double mutual_information = 0;  // nats, clamped at 0
  double entropy_a = 0;
  double entropy_b = 0;
  double normalized = 0;
};

/// Joint bins x bins histogram; marginals are the joint's row and column sums.
inline MiEstimate mutual_information(std::span<const double> a, std::span<const double> b, const MiConfig& cfg = {}) {
  cfg.validate();
  require(a.size() == b.size(), ErrorCode::ShapeMismatch, "inputs differ in length");
  require(a.size() >= 2, ErrorCode::TooFewRows, "mutual information needs at least 2 samples");
  const std::size_t n_bins = cfg.bins;
  const auto ba = discretize(a, n_bins);
  const auto bb = discretize(b, n_bins);
  std::vector<std::size_t> joint(n_bins * n_bins, 0), ca(n_bins, 0), cb(n_bins, 0);
  for (std::size_t i = 0; i < a.size(); ++i) ++joint[ba[i] * n_bins + bb[i]];
  for (std::size_t x = 0; x < n_bins; ++x)
    for (std::size_t y = 0; y < n_bins; ++y) {
      ca[x] += joint[x * n_bins + y];
      cb[y] += joint[x * n_bins + y];
    }

  const double n = static_cast<double>(a.size());
  MiEstimate out;
  out.entropy_a = detail::entropy_of_counts(ca, n);
  out.entropy_b = detail::entropy_of_counts(cb, n);
  // I = sum_xy p_xy log(p_xy / (p_x p_y)) = sum_xy (c_xy/n) log(n c_xy / (c_x c_y)).
  // Cells (x,y) and (y,x) are added together before accumulating, so
  // swapping the inputs (transposing the joint) gives a bit-identical sum.
  auto term = [&](std::size_t x, std::size_t y) {
    const auto c = joint[x * n_bins + y];
    if (c == 0) return 0.0;
    const double cxy = static_cast<double>(c);
    return (cxy / n) * std::log(n * cxy / (static_cast<double>(ca[x]) * static_cast<double>(cb[y])));
  };
  double mi = 0;
  for (std::size_t x = 0; x < n_bins; ++x) {
    mi += term(x, x);
    for (std::size_t y = x + 1; y < n_bins; ++y) mi += term(x, y) + term(y, x);
  }
  out.mutual_information = std::max(0.0, mi);
  if (out.entropy_a > 0 && out.entropy_b > 0)
    out.normalized = out.mutual_information / std::sqrt(out.entropy_a * out.entropy_b);
  return out;
}

inline double normalized_mi(std::span<const double> a, std::span<const double> b, const MiConfig& cfg = {}) {
  const auto est = mutual_information(a, b, cfg);
  if (est.entropy_a == 0.0 || est.entropy_b == 0.0)
    fail(ErrorCode::DegenerateEntropy, "an input has zero entropy; normalization is undefined");
  return est.normalized;
}

}  // namespace hslab
