#pragma once

// Neuron-level analysis of one layer:
//   - Regret Dominance Score per neuron over paired regret/non-regret rows
//   - three-way partition at mu +- tau * sigma
//   - deactivation interventions on a trained probe and the Group Impact
//     Coefficient (GIC)
//   - random-removal robustness and tau sensitivity sweeps

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hslab/dataset.hpp"
#include "hslab/error.hpp"
#include "hslab/parallel.hpp"
#include "hslab/probe.hpp"
#include "hslab/random.hpp"

namespace hslab {

enum class RdsMode {
  Absolute,  // |z_r| / (|z_r| + |z_n| + eps), always in [0, 1)
  Signed,    // z_r / (z_r + z_n + eps), the raw ratio; unbounded
};

struct RdsScores {
  std::vector<double> scores;
  double mean = 0;
  double stddev = 0;  // population
  double epsilon = 1e-8;
  RdsMode mode = RdsMode::Absolute;
};

struct NeuronPartition {
  IndexSet regret_d;
  IndexSet non_regret_d;
  IndexSet dual_d;
  double tau = 0;
  double lower = 0;  // mu - tau * sigma
  double upper = 0;  // mu + tau * sigma
};

inline constexpr const char* kRegretD = "RegretD";
inline constexpr const char* kNonRegretD = "Non-RegretD";
inline constexpr const char* kDualD = "DualD";

inline const IndexSet& group(const NeuronPartition& p, std::string_view name) {
  if (name == kRegretD) return p.regret_d;
  if (name == kNonRegretD) return p.non_regret_d;
  if (name == kDualD) return p.dual_d;
  fail(ErrorCode::InvalidArgument, "unknown neuron group \"" + std::string(name) + "\"");
}

struct InterventionResult {
  std::string group_name;
  std::size_t group_size = 0;
  EvalReport report;
  EvalReport baseline;
};

struct GicReport {
  std::vector<std::string> groups;
  double baseline_accuracy = 0;
  double union_accuracy = 0;
  std::vector<double> individual_accuracies;
  double gic = 0;
};

/// Population mean and standard deviation.
inline std::pair<double, double> mean_stddev(std::span<const double> v) {
  // summation rounding would otherwise put a constant vector off its own mean
  if (std::ranges::adjacent_find(v, std::not_equal_to<>{}) == v.end()) return {v.empty() ? 0.0 : v[0], 0.0};
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

inline RdsScores compute_rds(const PairedActivations& pa, double epsilon = 1e-8, RdsMode mode = RdsMode::Absolute) {
  const auto& zr = pa.z_regret;
  const auto& zn = pa.z_non_regret;
  require(zr.rows() == zn.rows() && zr.cols() == zn.cols(), ErrorCode::ShapeMismatch,
          "regret and non-regret matrices differ in shape");
  require(zr.rows() >= 1, ErrorCode::ShapeMismatch, "no paired rows");
  require(epsilon >= 0, ErrorCode::InvalidArgument, "epsilon must be non-negative");

  RdsScores out;
  out.epsilon = epsilon;
  out.mode = mode;
  out.scores.assign(zr.cols(), 0.0);
  for (std::size_t i = 0; i < zr.rows(); ++i) {
    const auto r = zr.row(i);
    const auto n = zn.row(i);
    for (std::size_t k = 0; k < r.size(); ++k) {
      if (mode == RdsMode::Absolute) {
        const double a = std::abs(static_cast<double>(r[k])), b = std::abs(static_cast<double>(n[k]));
        out.scores[k] += a / (a + b + epsilon);
      } else {
        out.scores[k] += r[k] / (static_cast<double>(r[k]) + n[k] + epsilon);
      }
    }
  }
  for (auto& s : out.scores) s /= static_cast<double>(zr.rows());
  std::tie(out.mean, out.stddev) = mean_stddev(out.scores);
  return out;
}

/// Strict thresholds on both sides; scores exactly on a threshold are DualD.
inline NeuronPartition partition_neurons(const RdsScores& rds, double tau) {
  require(tau > 0, ErrorCode::InvalidArgument, "tau must be positive");
  NeuronPartition p;
  p.tau = tau;
  p.upper = rds.mean + tau * rds.stddev;
  p.lower = rds.mean - tau * rds.stddev;
  for (std::size_t k = 0; k < rds.scores.size(); ++k) {
    const double s = rds.scores[k];
    if (s > p.upper) p.regret_d.push_back(k);
    else if (s < p.lower) p.non_regret_d.push_back(k);
    else p.dual_d.push_back(k);
  }
  return p;
}

/// Sorted, duplicate-free union of index sets.
inline IndexSet set_union(std::initializer_list<const IndexSet*> sets) {
  IndexSet out;
  for (const auto* s : sets) out.insert(out.end(), s->begin(), s->end());
  std::ranges::sort(out);
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Copy of `m` with every column in `s` overwritten by `value`.
inline LabeledMatrix deactivate(const LabeledMatrix& m, std::span<const std::size_t> s, float value = -1.0f) {
  for (auto k : s)
    require(k < m.dims(), ErrorCode::IndexOutOfRange,
            "neuron " + std::to_string(k) + " is outside dimension " + std::to_string(m.dims()));
  LabeledMatrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.data.row(i);
    for (auto k : s) row[k] = value;
  }
  return out;
}

/// Evaluates the (not retrained) probe on the deactivated test set.
inline InterventionResult intervene(const ProbeModel& model, const LabeledMatrix& test, std::span<const std::size_t> s,
                                    const EvalReport& baseline, std::string group_name = {},
                                    float value = -1.0f) {
  require(model.input_dim() == test.dims(), ErrorCode::DimensionMismatch, "probe and test data dimensions differ");
  IndexSet unique(s.begin(), s.end());
  std::ranges::sort(unique);
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  InterventionResult out;
  out.group_name = std::move(group_name);
  out.group_size = unique.size();
  out.baseline = baseline;
  out.report = unique.empty() ? baseline : evaluate(model, deactivate(test, unique, value));
  return out;
}

/// n = 1: Acc(Z - S1) / Acc(Z);  n >= 2: Acc(Z - union) / mean_i Acc(Z - S_i).
inline GicReport gic(double baseline_accuracy, std::span<const InterventionResult> individual,
                     const InterventionResult& union_result) {
  require(!individual.empty(), ErrorCode::InvalidArgument, "GIC needs at least one group");
  GicReport out;
  out.baseline_accuracy = baseline_accuracy;
  out.union_accuracy = union_result.report.accuracy;
  for (const auto& r : individual) {
    out.groups.push_back(r.group_name);
    out.individual_accuracies.push_back(r.report.accuracy);
  }
  if (individual.size() == 1) {
    if (!(baseline_accuracy > 0)) fail(ErrorCode::ZeroDenominator, "baseline accuracy is zero");
    out.gic = out.union_accuracy / baseline_accuracy;
  } else {
    double mean = 0;
    for (double a : out.individual_accuracies) mean += a;
    mean /= static_cast<double>(out.individual_accuracies.size());
    if (!(mean > 0)) fail(ErrorCode::ZeroDenominator, "mean individual accuracy is zero");
    out.gic = out.union_accuracy / mean;
  }
  return out;
}

/// `count` distinct neurons drawn uniformly from [0, d), returned sorted.
inline IndexSet random_group(std::size_t d, std::size_t count, std::uint64_t seed) {
  if (count > d)
    fail(ErrorCode::CountExceedsDimension,
         "cannot draw " + std::to_string(count) + " neurons from " + std::to_string(d));
  Rng rng(seed);
  auto out = rng.sample_without_replacement(d, count);
  std::ranges::sort(out);
  return out;
}

// ---------------------------------------------------------------------------
// Random-removal robustness
// ---------------------------------------------------------------------------

/// Mean of each metric over several evaluations.
struct MetricMeans {
  double accuracy = 0, sensitivity = 0, specificity = 0, precision = 0, f1 = 0;

  static MetricMeans of(const EvalReport& r) {
    return {r.accuracy, r.sensitivity, r.specificity, r.precision, r.f1};
  }
  bool operator==(const MetricMeans&) const = default;
};

struct RemovalSpec {
  std::optional<std::size_t> count;  // overrides fraction when set
  double fraction = 0.5;
  std::size_t trials = 20;
  std::uint64_t seed = 0;
  float value = -1.0f;

  std::size_t count_for(std::size_t d) const {
    if (count) return *count;
    require(fraction >= 0.0 && fraction <= 1.0, ErrorCode::InvalidArgument, "removal fraction must lie in [0, 1]");
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(d)));
  }
};

struct LayerProbe {
  long long layer = 0;
  const ProbeModel* model = nullptr;
  const LabeledMatrix* test = nullptr;
};

struct RemovalSummary {
  long long layer = 0;
  std::size_t count = 0;
  std::size_t trials = 0;
  EvalReport baseline;
  MetricMeans mean;
};

/// For each layer: `trials` independent random sets of the requested size are
/// deactivated and the metrics averaged in trial order.
inline std::vector<RemovalSummary> random_removal_sweep(std::span<const LayerProbe> layers, const RemovalSpec& spec) {
  require(spec.trials >= 1, ErrorCode::InvalidArgument, "trials must be at least 1");
  std::vector<RemovalSummary> out(layers.size());
  parallel_for(layers.size(), [&](std::size_t li) {
    const auto& lp = layers[li];
    require(lp.model && lp.test, ErrorCode::InvalidArgument, "layer entry without model or data");
    require(lp.model->input_dim() == lp.test->dims(), ErrorCode::DimensionMismatch,
            "layer " + std::to_string(lp.layer) + ": probe and data dimensions differ");
    RemovalSummary s;
    s.layer = lp.layer;
    s.count = spec.count_for(lp.test->dims());
    s.trials = spec.trials;
    s.baseline = evaluate(*lp.model, *lp.test);
    const std::uint64_t layer_seed = derive_seed(spec.seed, static_cast<std::uint64_t>(li));
    for (std::size_t t = 0; t < spec.trials; ++t) {
      const auto set = random_group(lp.test->dims(), s.count, derive_seed(layer_seed, t));
      const auto r = intervene(*lp.model, *lp.test, set, s.baseline, {}, spec.value).report;
      s.mean.accuracy += r.accuracy;
      s.mean.sensitivity += r.sensitivity;
      s.mean.specificity += r.specificity;
      s.mean.precision += r.precision;
      s.mean.f1 += r.f1;
    }
    const double n = static_cast<double>(spec.trials);
    s.mean.accuracy /= n;
    s.mean.sensitivity /= n;
    s.mean.specificity /= n;
    s.mean.precision /= n;
    s.mean.f1 /= n;
    out[li] = s;
  });
  return out;
}

// ---------------------------------------------------------------------------
// tau sensitivity
// ---------------------------------------------------------------------------

struct TauSweepConfig {
  std::vector<double> grid;
  float deactivation_value = -1.0f;
  double rds_epsilon = 1e-8;
  RdsMode rds_mode = RdsMode::Absolute;
  std::size_t random_controls = 1;  // size-matched random sets per combination
  std::uint64_t seed = 0;
};

struct TauSweepRow {
  double tau = 0;
  std::string group;   // e.g. "RegretD+DualD" or "Random(RegretD+DualD)#0"
  bool random_control = false;
  std::size_t count = 0;
  EvalReport report;
  double accuracy_drop = 0;  // baseline - post, in accuracy units
  std::optional<double> gic; // absent for random controls
};

struct TauSweep {
  EvalReport baseline;
  RdsScores rds;
  std::vector<NeuronPartition> partitions;  // one per grid point
  std::vector<TauSweepRow> rows;
};

/// The six combinations evaluated per tau: each group alone, then each pair.
inline std::vector<std::vector<std::string>> group_combinations() {
  return {{kRegretD}, {kNonRegretD}, {kDualD}, {kRegretD, kNonRegretD}, {kRegretD, kDualD}, {kNonRegretD, kDualD}};
}

inline std::string join_names(std::span<const std::string> names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : "+") + n;
  return out;
}

/// Partition at each tau, deactivate every single group and group pair, and
/// compare with size-matched random controls. Rows come out grouped by tau in
/// grid order, combinations in group_combinations() order.
inline TauSweep tau_sweep(const PairedActivations& pa, const ProbeModel& model, const LabeledMatrix& test,
                          const TauSweepConfig& cfg) {
  require(!cfg.grid.empty(), ErrorCode::InvalidArgument, "tau grid is empty");
  for (double t : cfg.grid) require(t > 0, ErrorCode::InvalidArgument, "tau values must be positive");
  require(model.input_dim() == test.dims() && pa.z_regret.cols() == test.dims(), ErrorCode::DimensionMismatch,
          "probe, paired activations and test data must share one dimension");

  TauSweep out;
  out.baseline = evaluate(model, test);
  out.rds = compute_rds(pa, cfg.rds_epsilon, cfg.rds_mode);
  const auto combos = group_combinations();
  const std::size_t per_tau = combos.size() * (1 + cfg.random_controls);
  out.partitions.resize(cfg.grid.size());
  out.rows.resize(cfg.grid.size() * per_tau);

  parallel_for(cfg.grid.size(), [&](std::size_t ti) {
    const double tau = cfg.grid[ti];
    const auto part = partition_neurons(out.rds, tau);
    out.partitions[ti] = part;
    std::map<std::string, InterventionResult> single;
    for (const auto* name : {kRegretD, kNonRegretD, kDualD})
      single[name] = intervene(model, test, group(part, name), out.baseline, name, cfg.deactivation_value);

    std::size_t slot = ti * per_tau;
    for (std::size_t ci = 0; ci < combos.size(); ++ci) {
      const auto& names = combos[ci];
      const std::string label = join_names(names);
      InterventionResult result;
      std::optional<double> g;
      if (names.size() == 1) {
        result = single.at(names[0]);
        if (out.baseline.accuracy > 0) g = result.report.accuracy / out.baseline.accuracy;
      } else {
        const auto set = set_union({&group(part, names[0]), &group(part, names[1])});
        result = intervene(model, test, set, out.baseline, label, cfg.deactivation_value);
        const InterventionResult parts[] = {single.at(names[0]), single.at(names[1])};
        const double mean = (parts[0].report.accuracy + parts[1].report.accuracy) / 2.0;
        if (mean > 0) g = result.report.accuracy / mean;
      }
      out.rows[slot++] = TauSweepRow{tau, label, false, result.group_size, result.report,
                                     out.baseline.accuracy - result.report.accuracy, g};

      for (std::size_t rc = 0; rc < cfg.random_controls; ++rc) {
        const std::uint64_t seed = derive_seed(derive_seed(derive_seed(cfg.seed, ti), ci), rc);
        const auto set = random_group(test.dims(), result.group_size, seed);
        const auto ctrl = intervene(model, test, set, out.baseline, {}, cfg.deactivation_value);
        out.rows[slot++] = TauSweepRow{tau, "Random(" + label + ")#" + std::to_string(rc), true, ctrl.group_size,
                                       ctrl.report, out.baseline.accuracy - ctrl.report.accuracy, std::nullopt};
      }
    }
  });
  return out;
}

}  // namespace hslab
