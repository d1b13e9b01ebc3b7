#pragma once

// End-to-end replication workflow over a set of layer files:
//   1. S-CDI for every layer; the lowest-scoring layer is selected
//   2. per layer: balanced split, probe training, random-removal robustness
//   3. on the selected layer: RDS partition at tau, every configured group
//      deactivation with GIC and size-matched random controls
//   4. normalized MI between the mean activations of the three groups
//
// Every stage draws from a seed derived from the single global seed and the
// stage name, so identical configs give identical reports.

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hslab/dataset.hpp"
#include "hslab/metrics.hpp"
#include "hslab/mutual_info.hpp"
#include "hslab/neuron_analysis.hpp"
#include "hslab/probe.hpp"
#include "hslab/report.hpp"

namespace hslab {

struct PipelineConfig {
  std::vector<std::filesystem::path> layers;
  ProbeConfig probe;
  double tau = 0.05;
  std::vector<std::vector<std::string>> groups;
  std::uint64_t seed = 0;
  double train_fraction = 0.7;
  std::size_t k_samples = 512;
  float deactivation_value = -1.0f;
  std::size_t random_controls = 1;
  double removal_fraction = 0.5;
  std::size_t removal_trials = 20;
  std::size_t bins = 20;
  double rds_epsilon = 1e-8;
};

/// Parses a pipeline config. Relative layer paths resolve against `base_dir`.
/// Missing required keys and unknown keys are InvalidConfig errors naming the key.
inline PipelineConfig pipeline_config_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  require(j.is_object(), ErrorCode::InvalidConfig, "config must be a JSON object");
  static const std::set<std::string> required = {"layers", "probe", "tau", "groups"};
  static const std::set<std::string> optional = {"seed",           "train_fraction",  "k_samples",
                                                 "deactivation_value", "random_controls", "removal_fraction",
                                                 "removal_trials", "bins",            "rds_epsilon"};
  for (const auto& key : required)
    if (!j.contains(key)) fail(ErrorCode::InvalidConfig, "missing config key \"" + key + "\"");
  for (const auto& [key, _] : j.items())
    if (!required.contains(key) && !optional.contains(key))
      fail(ErrorCode::InvalidConfig, "unknown config key \"" + key + "\"");

  PipelineConfig c;
  auto field = [&](const char* key, auto& target) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(target);
    } catch (const json::exception& e) {
      fail(ErrorCode::InvalidConfig, std::string("config key \"") + key + "\": " + e.what());
    }
  };
  std::vector<std::string> layer_names;
  field("layers", layer_names);
  for (const auto& name : layer_names) {
    std::filesystem::path p(name);
    c.layers.push_back(p.is_absolute() || base_dir.empty() ? p : base_dir / p);
  }
  c.probe = probe_config_from_json(j.at("probe"));
  field("tau", c.tau);
  field("groups", c.groups);
  field("seed", c.seed);
  field("train_fraction", c.train_fraction);
  field("k_samples", c.k_samples);
  field("deactivation_value", c.deactivation_value);
  field("random_controls", c.random_controls);
  field("removal_fraction", c.removal_fraction);
  field("removal_trials", c.removal_trials);
  field("bins", c.bins);
  field("rds_epsilon", c.rds_epsilon);

  require(!c.layers.empty(), ErrorCode::InvalidConfig, "config key \"layers\" is empty");
  require(c.tau > 0, ErrorCode::InvalidConfig, "config key \"tau\" must be positive");
  require(c.train_fraction > 0 && c.train_fraction < 1, ErrorCode::InvalidConfig,
          "config key \"train_fraction\" must lie in (0, 1)");
  require(c.k_samples >= 2, ErrorCode::InvalidConfig, "config key \"k_samples\" must be at least 2");
  require(c.bins >= 2, ErrorCode::InvalidConfig, "config key \"bins\" must be at least 2");
  require(c.removal_trials >= 1, ErrorCode::InvalidConfig, "config key \"removal_trials\" must be at least 1");
  for (const auto& g : c.groups) {
    require(!g.empty(), ErrorCode::InvalidConfig, "config key \"groups\" holds an empty combination");
    for (const auto& name : g)
      require(name == kRegretD || name == kNonRegretD || name == kDualD, ErrorCode::InvalidConfig,
              "config key \"groups\": unknown group \"" + name + "\"");
  }
  return c;
}

namespace detail {

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw e.annotated(std::string("stage ") + name);
  }
}

}  // namespace detail

struct PipelineResult {
  json report;
  std::string interventions_csv;
  long long selected_layer = 0;
};

inline PipelineResult replicate_pipeline(const PipelineConfig& cfg, bool timestamp = false) {
  PipelineResult result;
  json& report = result.report;
  report = make_envelope("replicate", timestamp);
  report["seed"] = cfg.seed;
  report["tau"] = cfg.tau;

  // 1. S-CDI sweep
  ScdiConfig scdi_cfg;
  scdi_cfg.k_samples = cfg.k_samples;
  scdi_cfg.seed = derive_seed(cfg.seed, "scdi");
  const auto sweep = detail::stage("scdi", [&] { return scdi_sweep(cfg.layers, scdi_cfg); });
  std::size_t selected = 0;
  for (std::size_t i = 1; i < sweep.size(); ++i)
    if (sweep[i].report.scdi < sweep[selected].report.scdi) selected = i;
  result.selected_layer = sweep[selected].layer;
  report["selected_layer"] = result.selected_layer;

  // 2. per-layer probes and random removal
  struct LayerData {
    LabeledMatrix full, train, test;
    ProbeModel model;
    EvalReport baseline;
  };
  std::vector<LayerData> layers(sweep.size());
  detail::stage("probe", [&] {
    parallel_for(sweep.size(), [&](std::size_t i) {
      auto& L = layers[i];
      L.full = read_hsds(sweep[i].source);
      const auto layer_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(sweep[i].layer));
      std::tie(L.train, L.test) =
          split(L.full, SplitSpec{cfg.train_fraction, derive_seed(layer_seed, "split"), true});
      ProbeConfig pc = cfg.probe;
      pc.seed = derive_seed(layer_seed, "probe");
      L.model = train_probe(L.train, pc);
      L.baseline = evaluate(L.model, L.test);
    });
    return 0;
  });
  std::vector<LayerProbe> probes;
  for (std::size_t i = 0; i < sweep.size(); ++i) probes.push_back({sweep[i].layer, &layers[i].model, &layers[i].test});
  RemovalSpec removal;
  removal.fraction = cfg.removal_fraction;
  removal.trials = cfg.removal_trials;
  removal.seed = derive_seed(cfg.seed, "random-removal");
  removal.value = cfg.deactivation_value;
  const auto removals = detail::stage("random-removal", [&] { return random_removal_sweep(probes, removal); });

  json layer_rows = json::array();
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    json row = to_json(sweep[i]);
    row["probe"] = to_json(layers[i].baseline);
    row["random_removal"] = to_json(removals[i]);
    layer_rows.push_back(row);
  }
  report["layers"] = layer_rows;

  // 3. neuron groups on the selected layer
  const auto& sel = layers[selected];
  const auto rds = detail::stage("rds", [&] { return compute_rds(pair_by_id(sel.full), cfg.rds_epsilon); });
  const auto part = partition_neurons(rds, cfg.tau);
  report["rds"] = {{"mean", rds.mean}, {"std", rds.stddev}, {"epsilon", rds.epsilon}};
  report["partition"] = to_json(part);
  report["baseline"] = to_json(sel.baseline);

  std::map<std::string, InterventionResult> single;
  for (const auto* name : {kRegretD, kNonRegretD, kDualD})
    single[name] = intervene(sel.model, sel.test, group(part, name), sel.baseline, name, cfg.deactivation_value);

  result.interventions_csv = kInterventionCsvHeader;
  json interventions = json::array();
  const std::uint64_t control_seed = derive_seed(cfg.seed, "random-controls");
  detail::stage("intervene", [&] {
    for (std::size_t gi = 0; gi < cfg.groups.size(); ++gi) {
      const auto& names = cfg.groups[gi];
      IndexSet set;
      std::vector<InterventionResult> parts;
      for (const auto& n : names) {
        set.insert(set.end(), group(part, n).begin(), group(part, n).end());
        parts.push_back(single.at(n));
      }
      std::ranges::sort(set);
      set.erase(std::unique(set.begin(), set.end()), set.end());
      const std::string label = join_names(names);
      const auto res = intervene(sel.model, sel.test, set, sel.baseline, label, cfg.deactivation_value);
      std::optional<double> g;
      try {
        g = gic(sel.baseline.accuracy, parts, res).gic;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ZeroDenominator) throw;
      }
      json entry = to_json(res);
      entry["gic"] = g ? json(*g) : json(nullptr);
      result.interventions_csv += intervention_csv_row(cfg.tau, label, res.group_size, res.report, g);

      json controls = json::array();
      for (std::size_t rc = 0; rc < cfg.random_controls; ++rc) {
        const auto rset = random_group(sel.test.dims(), res.group_size, derive_seed(derive_seed(control_seed, gi), rc));
        const std::string rlabel = "Random(" + label + ")#" + std::to_string(rc);
        const auto ctrl = intervene(sel.model, sel.test, rset, sel.baseline, rlabel, cfg.deactivation_value);
        controls.push_back(to_json(ctrl));
        result.interventions_csv += intervention_csv_row(cfg.tau, rlabel, ctrl.group_size, ctrl.report, std::nullopt);
      }
      entry["random_controls"] = controls;
      interventions.push_back(entry);
    }
    return 0;
  });
  report["interventions"] = interventions;

  // 4. group mutual information
  json mi = json::array();
  const std::pair<const char*, const char*> pairs[] = {
      {kRegretD, kNonRegretD}, {kRegretD, kDualD}, {kNonRegretD, kDualD}};
  for (const auto& [a, b] : pairs) {
    json row = {{"group_a", a}, {"group_b", b}};
    if (group(part, a).empty() || group(part, b).empty()) {
      row["normalized_mi"] = nullptr;
      row["note"] = "empty group";
    } else {
      const auto est = mutual_information(group_mean_activation(sel.full, group(part, a)),
                                          group_mean_activation(sel.full, group(part, b)), MiConfig{cfg.bins});
      row["normalized_mi"] = (est.entropy_a > 0 && est.entropy_b > 0) ? json(est.normalized) : json(nullptr);
      row["mutual_information"] = est.mutual_information;
    }
    mi.push_back(row);
  }
  report["mutual_information"] = {{"bins", cfg.bins}, {"pairs", mi}};
  return result;
}

}  // namespace hslab
