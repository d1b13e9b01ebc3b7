#pragma once

// Supervised Compression-Decoupling Index (S-CDI) and its components.
//
//   S-CDI = CDI * I_c / (1 - I_e),   CDI = R * O
//
//   R    mean |Pearson correlation| over all ordered column pairs, diagonal included
//   O    mean |cosine| over unordered pairs of k sampled rows
//   I_c  unweighted mean over classes of the mean within-class pairwise cosine
//   I_e  mean cosine between rows of different classes
//
// Lower S-CDI marks a layer where the labeled signal is better decoupled.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hslab/dataset.hpp"
#include "hslab/error.hpp"
#include "hslab/matrix.hpp"
#include "hslab/parallel.hpp"
#include "hslab/random.hpp"

namespace hslab {

struct ScdiConfig {
  std::size_t k_samples = 512;  // capped at M
  std::uint64_t seed = 0;
  double entanglement_epsilon = 1e-9;
};

struct ScdiReport {
  double redundancy = 0;         // R
  double orthogonality = 0;      // O
  double intra_compactness = 0;  // I_c
  double inter_entanglement = 0; // I_e
  double cdi = 0;
  double scdi = 0;
  std::map<std::uint8_t, std::size_t> class_counts;
};

struct LayerScdi {
  long long layer = 0;
  std::filesystem::path source;
  ScdiReport report;
};

namespace detail {

template <typename T>
std::vector<double> row_norms(const Matrix<T>& z) {
  std::vector<double> norms(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double s = 0;
    for (T v : z.row(i)) s += static_cast<double>(v) * v;
    norms[i] = std::sqrt(s);
  }
  return norms;
}

inline void require_nonzero(std::span<const double> norms, std::span<const std::size_t> rows) {
  for (auto r : rows)
    if (!(norms[r] > 0.0)) fail(ErrorCode::ZeroNormRow, "row " + std::to_string(r) + " has zero norm");
}

template <typename T>
double cosine(const Matrix<T>& z, std::size_t a, std::size_t b, std::span<const double> norms) {
  const auto ra = z.row(a);
  const auto rb = z.row(b);
  double dot = 0;
  for (std::size_t j = 0; j < ra.size(); ++j) dot += static_cast<double>(ra[j]) * rb[j];
  return dot / (norms[a] * norms[b]);
}

/// Sum of unit-normalized rows.
template <typename T>
std::vector<double> unit_sum(const Matrix<T>& z, std::span<const std::size_t> rows,
                             std::span<const double> norms) {
  std::vector<double> sum(z.cols(), 0.0);
  for (auto r : rows) {
    const auto row = z.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) sum[j] += row[j] / norms[r];
  }
  return sum;
}

inline std::map<std::uint8_t, std::vector<std::size_t>> rows_by_class(std::span<const std::uint8_t> labels) {
  std::map<std::uint8_t, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < labels.size(); ++i) classes[labels[i]].push_back(i);
  return classes;
}

template <typename T>
void require_labels(const Matrix<T>& z, std::span<const std::uint8_t> labels) {
  require(labels.size() == z.rows(), ErrorCode::ShapeMismatch, "labels length differs from row count");
}

}  // namespace detail

/// R(Z): (1/d^2) sum_ij |rho_ij|. A constant column correlates 0 with every
/// other column; the diagonal is always 1, so R >= 1/d.
template <typename T>
double feature_redundancy(const Matrix<T>& z) {
  const std::size_t m = z.rows(), d = z.cols();
  require(m >= 2, ErrorCode::TooFewRows, "redundancy needs at least 2 rows");

  // Column-major centered copy for contiguous inner products.
  std::vector<double> centered(m * d);
  std::vector<double> norm(d, 0.0);
  std::vector<bool> constant(d, true);
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < m; ++i) {
      mean += z(i, j);
      if (z(i, j) != z(0, j)) constant[j] = false;
    }
    mean /= static_cast<double>(m);
    double ss = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const double c = z(i, j) - mean;
      centered[j * m + i] = c;
      ss += c * c;
    }
    norm[j] = std::sqrt(ss);
  }

  std::vector<double> row_sums(d, 0.0);
  parallel_for(d, [&](std::size_t a) {
    double acc = 1.0;  // diagonal
    if (constant[a]) {
      row_sums[a] = acc;
      return;
    }
    const double* ca = centered.data() + a * m;
    for (std::size_t b = 0; b < d; ++b) {
      if (b == a || constant[b]) continue;
      const double* cb = centered.data() + b * m;
      double dot = 0;
      for (std::size_t i = 0; i < m; ++i) dot += ca[i] * cb[i];
      acc += std::min(1.0, std::abs(dot) / (norm[a] * norm[b]));
    }
    row_sums[a] = acc;
  });
  double total = 0;
  for (double s : row_sums) total += s;
  return total / (static_cast<double>(d) * static_cast<double>(d));
}

/// Seeded sample of min(k_samples, M) distinct rows, in draw order.
inline std::vector<std::size_t> sample_rows(std::size_t m, const ScdiConfig& cfg) {
  require(cfg.k_samples >= 2, ErrorCode::InvalidArgument, "k_samples must be at least 2");
  Rng rng(cfg.seed);
  return rng.sample_without_replacement(m, std::min(cfg.k_samples, m));
}

/// O(Z): mean |cosine| over unordered pairs of the sampled rows.
template <typename T>
double instance_orthogonality(const Matrix<T>& z, const ScdiConfig& cfg) {
  require(z.rows() >= 2, ErrorCode::TooFewRows, "orthogonality needs at least 2 rows");
  const auto rows = sample_rows(z.rows(), cfg);
  const auto norms = detail::row_norms(z);
  detail::require_nonzero(norms, rows);

  const std::size_t k = rows.size();
  std::vector<double> partial(k, 0.0);
  parallel_for(k, [&](std::size_t a) {
    double s = 0;
    for (std::size_t b = a + 1; b < k; ++b) s += std::abs(detail::cosine(z, rows[a], rows[b], norms));
    partial[a] = s;
  });
  double total = 0;
  for (double s : partial) total += s;
  return total / (static_cast<double>(k) * static_cast<double>(k - 1) / 2.0);
}

/// I_c(Z). Uses sum_{i<j} cos(z_i, z_j) = (|sum_i u_i|^2 - n) / 2 with u_i
/// the unit rows, so each class costs O(n d).
template <typename T>
double intra_class_compactness(const Matrix<T>& z, std::span<const std::uint8_t> labels) {
  detail::require_labels(z, labels);
  const auto classes = detail::rows_by_class(labels);
  require(!classes.empty(), ErrorCode::TooFewRows, "no rows");
  const auto norms = detail::row_norms(z);
  double total = 0;
  for (const auto& [label, rows] : classes) {
    require(rows.size() >= 2, ErrorCode::ClassTooSmall,
            "class " + std::to_string(label) + " has " + std::to_string(rows.size()) + " row(s)");
    detail::require_nonzero(norms, rows);
    const auto sum = detail::unit_sum(z, rows, norms);
    double sq = 0;
    for (double v : sum) sq += v * v;
    double self = 0;
    for (auto r : rows) {
      // |u_r|^2 is 1 up to rounding; subtract the computed value.
      const auto row = z.row(r);
      double s = 0;
      for (T v : row) s += (v / norms[r]) * (v / norms[r]);
      self += s;
    }
    const double n = static_cast<double>(rows.size());
    total += (sq - self) / (n * (n - 1.0));
  }
  return total / static_cast<double>(classes.size());
}

/// I_e(Z): (1/(C(C-1))) sum over ordered class pairs of the mean cross-class
/// cosine. Each ordered term equals sum(u_c1) . sum(u_c2) / (n_c1 n_c2).
template <typename T>
double inter_class_entanglement(const Matrix<T>& z, std::span<const std::uint8_t> labels) {
  detail::require_labels(z, labels);
  const auto classes = detail::rows_by_class(labels);
  require(classes.size() >= 2, ErrorCode::SingleClass, "entanglement needs at least two classes");
  const auto norms = detail::row_norms(z);
  std::vector<std::vector<double>> sums;
  std::vector<double> sizes;
  for (const auto& [label, rows] : classes) {
    detail::require_nonzero(norms, rows);
    sums.push_back(detail::unit_sum(z, rows, norms));
    sizes.push_back(static_cast<double>(rows.size()));
  }
  const std::size_t c = sums.size();
  double total = 0;
  for (std::size_t a = 0; a < c; ++a)
    for (std::size_t b = 0; b < c; ++b) {
      if (a == b) continue;
      double dot = 0;
      for (std::size_t j = 0; j < z.cols(); ++j) dot += sums[a][j] * sums[b][j];
      total += dot / (sizes[a] * sizes[b]);
    }
  return total / (static_cast<double>(c) * static_cast<double>(c - 1));
}

/// Combines the components; throws EntanglementSaturated when I_e is within
/// entanglement_epsilon of 1.
inline ScdiReport assemble_scdi(double r, double o, double ic, double ie, const ScdiConfig& cfg) {
  require(cfg.entanglement_epsilon > 0, ErrorCode::InvalidArgument, "entanglement_epsilon must be positive");
  if (ie >= 1.0 - cfg.entanglement_epsilon)
    fail(ErrorCode::EntanglementSaturated,
         "inter-class entanglement " + std::to_string(ie) + " leaves the classes indistinguishable");
  ScdiReport out;
  out.redundancy = r;
  out.orthogonality = o;
  out.intra_compactness = ic;
  out.inter_entanglement = ie;
  out.cdi = r * o;
  out.scdi = out.cdi * ic / (1.0 - ie);
  return out;
}

template <typename T>
ScdiReport scdi(const Matrix<T>& z, std::span<const std::uint8_t> labels, const ScdiConfig& cfg) {
  detail::require_labels(z, labels);
  const double ie = inter_class_entanglement(z, labels);
  const double ic = intra_class_compactness(z, labels);
  const double r = feature_redundancy(z);
  const double o = instance_orthogonality(z, cfg);
  auto report = assemble_scdi(r, o, ic, ie, cfg);
  for (auto label : labels) ++report.class_counts[label];
  return report;
}

inline ScdiReport scdi(const LabeledMatrix& m, const ScdiConfig& cfg) { return scdi(m.data, m.labels, cfg); }

/// Loads each file, scores it with the same config, and orders the results by
/// the "layer" metadata entry. Errors carry the offending path.
inline std::vector<LayerScdi> scdi_sweep(std::span<const std::filesystem::path> paths, const ScdiConfig& cfg) {
  std::vector<LayerScdi> out(paths.size());
  parallel_for(paths.size(), [&](std::size_t i) {
    try {
      const auto m = read_hsds(paths[i]);
      const auto layer = layer_index(m);
      if (!layer) fail(ErrorCode::MissingLayerIndex, "metadata has no integer \"layer\" entry");
      out[i] = LayerScdi{*layer, paths[i], scdi(m, cfg)};
    } catch (const Error& e) {
      // read_hsds already prefixes the path
      if (e.message().starts_with(paths[i].string())) throw;
      throw e.annotated(paths[i].string());
    }
  });
  std::ranges::stable_sort(out, {}, &LayerScdi::layer);
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i].layer == out[i - 1].layer)
      fail(ErrorCode::DuplicateLayer, "layer " + std::to_string(out[i].layer) + " appears in both " +
                                          out[i - 1].source.string() + " and " + out[i].source.string());
  return out;
}

}  // namespace hslab
