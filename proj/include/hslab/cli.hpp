#pragma once

// Command-line front end. run() is the whole program; main() only forwards
// argv. Exit codes: 0 success, 2 usage or configuration error, 3 data error.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI/CLI.hpp>
#include <nlohmann/json.hpp>

#include "hslab/dataset.hpp"
#include "hslab/metrics.hpp"
#include "hslab/mutual_info.hpp"
#include "hslab/neuron_analysis.hpp"
#include "hslab/pipeline.hpp"
#include "hslab/probe.hpp"
#include "hslab/report.hpp"
#include "hslab/synthetic.hpp"

namespace hslab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;

namespace detail {

inline json read_json(const std::filesystem::path& path) {
  const auto bytes = hslab::detail::read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  hslab::detail::write_file(path, std::span<const char>(text.data(), text.size()));
}

/// Report to --out, or to stdout when --out is absent.
inline void emit(const json& report, const std::string& out_path, std::ostream& out) {
  const std::string text = report.dump(2) + "\n";
  if (out_path.empty()) out << text;
  else write_text(out_path, text);
}

inline IndexSet parse_indices(const std::vector<std::string>& items) {
  IndexSet out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.empty()) continue;
      std::size_t pos = 0;
      unsigned long long v = 0;
      try {
        v = std::stoull(tok, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != tok.size() || tok.front() == '-')
        fail(ErrorCode::InvalidConfig, "not a neuron index: \"" + tok + "\"");
      out.push_back(static_cast<std::size_t>(v));
    }
  }
  return out;
}

inline std::vector<std::size_t> parse_sizes(const std::string& csv) { return parse_indices({csv}); }

}  // namespace detail

/// Everything a subcommand may set; each subcommand binds only its own flags.
struct Options {
  std::string out, csv, config, model, data, pairs_data, partition, baseline, union_path, truth, out_dir, test_out;
  std::string long_csv, kind = "clusters", pattern, signal;
  std::vector<std::string> layers, groups, individual, neurons, models, data_files, group_a, group_b;
  std::vector<double> taus;
  std::optional<double> tau;
  std::uint64_t seed = 0;
  std::size_t k_samples = 512, bins = 20, random_controls = 1, trials = 20, rows = 1000, dims = 32;
  std::size_t redundancy = 1, n_layers = 0;
  std::optional<std::size_t> count, k_override, bins_override;
  std::optional<float> value_override;
  double fraction = 0.5, train_fraction = 0.7, epsilon = 1e-8, gap = 4.0, sigma = 1.0, base_level = 0.0;
  float deactivation_value = -1.0f;
  bool no_timestamp = false, no_split = false, signed_rds = false, seed_given = false;
};

namespace detail {

inline ProbeConfig probe_config(const Options& o) {
  ProbeConfig c;
  if (!o.config.empty()) c = probe_config_from_json(read_json(o.config));
  c.seed = derive_seed(o.seed, "probe");
  return c;
}

inline json envelope(const Options& o, std::string_view kind) { return make_envelope(kind, !o.no_timestamp); }

inline std::vector<std::string> group_names(const std::vector<std::string>& raw) {
  std::vector<std::string> names;
  for (const auto& g : raw) {
    std::stringstream ss(g);
    std::string tok;
    while (std::getline(ss, tok, '+'))
      if (!tok.empty()) names.push_back(tok);
  }
  return names;
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

inline void cmd_scdi(const Options& o, std::ostream& out) {
  std::vector<std::filesystem::path> paths(o.layers.begin(), o.layers.end());
  ScdiConfig cfg;
  cfg.k_samples = o.k_samples;
  cfg.seed = derive_seed(o.seed, "scdi");
  const auto sweep = scdi_sweep(paths, cfg);
  json report = envelope(o, "scdi");
  report["k_samples"] = o.k_samples;
  report["layers"] = json::array();
  for (const auto& l : sweep) report["layers"].push_back(to_json(l));
  emit(report, o.out, out);
  if (!o.csv.empty()) write_text(o.csv, scdi_csv(sweep));
}

inline void cmd_probe_train(const Options& o, std::ostream& out) {
  const auto data = read_hsds(o.data);
  const auto cfg = probe_config(o);
  LabeledMatrix train = data, test;
  if (!o.no_split) std::tie(train, test) = split(data, SplitSpec{o.train_fraction, derive_seed(o.seed, "split"), true});
  TrainingTrace trace;
  const auto model = train_probe(train, cfg, &trace);
  save_probe(model, o.model);
  json report = envelope(o, "probe-train");
  report["config"] = to_json(cfg);
  report["train_rows"] = train.rows();
  report["final_loss"] = trace.epoch_loss.empty() ? 0.0 : trace.epoch_loss.back();
  report["train"] = to_json(evaluate(model, train));
  if (!o.no_split) {
    report["test_rows"] = test.rows();
    report["test"] = to_json(evaluate(model, test));
    if (!o.test_out.empty()) write_hsds(test, o.test_out);
  }
  emit(report, o.out, out);
}

inline void cmd_probe_eval(const Options& o, std::ostream& out) {
  const auto model = load_probe(o.model);
  const auto test = read_hsds(o.data);
  json report = envelope(o, "probe-eval");
  report["report"] = to_json(evaluate(model, test));
  emit(report, o.out, out);
}

inline void cmd_rds(const Options& o, std::ostream& out) {
  const auto m = read_hsds(o.data);
  const auto pa = pair_by_id(m);
  const auto rds = compute_rds(pa, o.epsilon, o.signed_rds ? RdsMode::Signed : RdsMode::Absolute);
  json report = envelope(o, "rds");
  report["pairs"] = pa.pair_ids.size();
  report["unmatched_pairs"] = pa.unmatched_pairs;
  report["rds"] = to_json(rds);
  const auto part = partition_neurons(rds, o.tau.value_or(0.05));
  report["partition"] = to_json(part);
  emit(report, o.out, out);
  if (!o.csv.empty()) {
    std::string text = "neuron,rds,group\n";
    for (std::size_t k = 0; k < rds.scores.size(); ++k) {
      const char* g = rds.scores[k] > part.upper ? kRegretD : rds.scores[k] < part.lower ? kNonRegretD : kDualD;
      text += std::to_string(k) + "," + csv_number(rds.scores[k]) + "," + g + "\n";
    }
    write_text(o.csv, text);
  }
}

inline void cmd_intervene(const Options& o, std::ostream& out) {
  const auto model = load_probe(o.model);
  const auto test = read_hsds(o.data);
  const auto baseline = evaluate(model, test);
  IndexSet set = parse_indices(o.neurons);
  std::string label = o.neurons.empty() ? "" : "custom";
  const auto names = group_names(o.groups);
  if (!names.empty()) {
    require(!o.partition.empty(), ErrorCode::InvalidConfig, "--group needs --partition");
    const json pj = read_json(o.partition);
    const auto part = partition_from_json(pj.contains("partition") ? pj["partition"] : pj);
    for (const auto& n : names) {
      if (n != kRegretD && n != kNonRegretD && n != kDualD) fail(ErrorCode::InvalidConfig, "unknown group \"" + n + "\"");
      const auto& g = group(part, n);
      set.insert(set.end(), g.begin(), g.end());
    }
    label = join_names(names) + (o.neurons.empty() ? "" : "+custom");
  }
  require(!set.empty() || !names.empty(), ErrorCode::InvalidConfig, "name neurons with --neurons or --group");
  const auto result = intervene(model, test, set, baseline, label, o.deactivation_value);
  json report = envelope(o, "intervene");
  report["deactivation_value"] = o.deactivation_value;
  report["result"] = to_json(result);
  std::string csv = kInterventionCsvHeader;
  csv += intervention_csv_row(o.tau, label, result.group_size, result.report, std::nullopt);
  json controls = json::array();
  for (std::size_t rc = 0; rc < o.random_controls; ++rc) {
    const auto rset = random_group(test.dims(), result.group_size, derive_seed(derive_seed(o.seed, "random-controls"), rc));
    const std::string rlabel = "Random(" + label + ")#" + std::to_string(rc);
    const auto ctrl = intervene(model, test, rset, baseline, rlabel, o.deactivation_value);
    controls.push_back(to_json(ctrl));
    csv += intervention_csv_row(o.tau, rlabel, ctrl.group_size, ctrl.report, std::nullopt);
  }
  report["random_controls"] = controls;
  emit(report, o.out, out);
  if (!o.csv.empty()) write_text(o.csv, csv);
}

inline InterventionResult result_from_file(const std::string& path) {
  const json j = read_json(path);
  InterventionResult r;
  r.report.accuracy = accuracy_from_json(j);
  const json* body = j.contains("result") ? &j["result"] : &j;
  r.group_name = body->value("group", std::filesystem::path(path).stem().string());
  return r;
}

inline void cmd_gic(const Options& o, std::ostream& out) {
  const double baseline = accuracy_from_json(read_json(o.baseline));
  std::vector<InterventionResult> parts;
  for (const auto& p : o.individual) parts.push_back(result_from_file(p));
  const auto uni = result_from_file(o.union_path);
  const auto g = gic(baseline, parts, uni);
  json report = envelope(o, "gic");
  report["gic"] = to_json(g);
  emit(report, o.out, out);
  if (!o.csv.empty()) write_text(o.csv, "groups,baseline_accuracy,union_accuracy,gic\n" + join_names(g.groups) + "," +
                                            csv_number(g.baseline_accuracy) + "," + csv_number(g.union_accuracy) +
                                            "," + csv_number(g.gic) + "\n");
}

inline void cmd_mi(const Options& o, std::ostream& out) {
  const auto m = read_hsds(o.data);
  const MiConfig cfg{o.bins};
  cfg.validate();
  std::vector<std::tuple<std::string, std::string, IndexSet, IndexSet>> pairs;
  if (!o.group_a.empty() || !o.group_b.empty()) {
    pairs.emplace_back("A", "B", parse_indices(o.group_a), parse_indices(o.group_b));
  } else {
    require(!o.partition.empty(), ErrorCode::InvalidConfig, "mi needs --partition or --group-a/--group-b");
    const json pj = read_json(o.partition);
    const auto part = partition_from_json(pj.contains("partition") ? pj["partition"] : pj);
    for (auto [a, b] : {std::pair{kRegretD, kNonRegretD}, std::pair{kRegretD, kDualD}, std::pair{kNonRegretD, kDualD}})
      pairs.emplace_back(a, b, group(part, a), group(part, b));
  }
  json rows = json::array();
  std::string csv = "group_a,group_b,normalized_mi,mutual_information,entropy_a,entropy_b\n";
  for (const auto& [na, nb, a, b] : pairs) {
    const auto est = mutual_information(group_mean_activation(m, a), group_mean_activation(m, b), cfg);
    if (est.entropy_a == 0.0 || est.entropy_b == 0.0)
      fail(ErrorCode::DegenerateEntropy, na + "/" + nb + ": a group mean has zero entropy");
    rows.push_back({{"group_a", na},
                    {"group_b", nb},
                    {"normalized_mi", est.normalized},
                    {"mutual_information", est.mutual_information},
                    {"entropy_a", est.entropy_a},
                    {"entropy_b", est.entropy_b}});
    csv += na + "," + nb + "," + csv_number(est.normalized) + "," + csv_number(est.mutual_information) + "," +
           csv_number(est.entropy_a) + "," + csv_number(est.entropy_b) + "\n";
  }
  json report = envelope(o, "mi");
  report["bins"] = o.bins;
  report["pairs"] = rows;
  emit(report, o.out, out);
  if (!o.csv.empty()) write_text(o.csv, csv);
}

inline void cmd_tau_sweep(const Options& o, std::ostream& out) {
  const auto model = load_probe(o.model);
  const auto test = read_hsds(o.data);
  const auto paired = read_hsds(o.pairs_data.empty() ? o.data : o.pairs_data);
  TauSweepConfig cfg;
  cfg.grid = o.taus;
  if (cfg.grid.empty()) cfg.grid = {0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0};
  cfg.deactivation_value = o.deactivation_value;
  cfg.rds_epsilon = o.epsilon;
  cfg.random_controls = o.random_controls;
  cfg.seed = derive_seed(o.seed, "tau-sweep");
  const auto sweep = tau_sweep(pair_by_id(paired), model, test, cfg);
  json report = envelope(o, "tau-sweep");
  report["sweep"] = to_json(sweep);
  emit(report, o.out, out);
  if (!o.csv.empty()) write_text(o.csv, tau_sweep_csv(sweep));
  if (!o.long_csv.empty()) write_text(o.long_csv, tau_sweep_long_csv(sweep));
}

inline void cmd_random_removal(const Options& o, std::ostream& out) {
  require(o.models.size() == o.data_files.size(), ErrorCode::InvalidConfig,
          "--models and --data need the same number of files");
  std::vector<ProbeModel> models;
  std::vector<LabeledMatrix> data;
  for (std::size_t i = 0; i < o.models.size(); ++i) {
    models.push_back(load_probe(o.models[i]));
    data.push_back(read_hsds(o.data_files[i]));
  }
  std::vector<LayerProbe> layers;
  for (std::size_t i = 0; i < models.size(); ++i)
    layers.push_back({layer_index(data[i]).value_or(static_cast<long long>(i)), &models[i], &data[i]});
  RemovalSpec spec;
  spec.count = o.count;
  spec.fraction = o.fraction;
  spec.trials = o.trials;
  spec.seed = derive_seed(o.seed, "random-removal");
  spec.value = o.deactivation_value;
  const auto rows = random_removal_sweep(layers, spec);
  json report = envelope(o, "random-removal");
  report["layers"] = json::array();
  for (const auto& r : rows) report["layers"].push_back(to_json(r));
  emit(report, o.out, out);
  if (!o.csv.empty()) write_text(o.csv, removal_csv(rows));
}

inline PlantSpec plant_spec(const Options& o) {
  PlantSpec s;
  s.m_rows = o.rows;
  s.d_dims = o.dims;
  s.class_gap = o.gap;
  s.noise_sigma = o.sigma;
  s.redundancy = o.redundancy;
  s.baseline = o.base_level;
  s.seed = o.seed;
  s.signal_idx = o.signal.empty() ? IndexSet{0} : parse_sizes(o.signal);
  s.compositional = o.kind == "compositional";
  return s;
}

inline void cmd_synth(const Options& o, std::ostream& out) {
  const auto spec = plant_spec(o);
  json report = envelope(o, "synth");
  if (o.kind == "series") {
    require(!o.out_dir.empty(), ErrorCode::InvalidConfig, "--kind series needs --out-dir");
    const auto pattern = parse_sizes(o.pattern);
    require(!pattern.empty(), ErrorCode::InvalidConfig, "--kind series needs --pattern");
    auto base = spec;
    base.compositional = false;
    const auto series = gen_layer_series(pattern.size(), pattern, base);
    const auto paths = write_layer_series(o.out_dir, series, base);
    report["files"] = json::array();
    for (const auto& p : paths) report["files"].push_back(p.filename().string());
    report["truth"] = ground_truth(series, base);
  } else {
    require(o.kind == "clusters" || o.kind == "compositional", ErrorCode::InvalidConfig,
            "--kind must be clusters, compositional or series");
    require(!o.data.empty(), ErrorCode::InvalidConfig, "--kind " + o.kind + " needs --data (output HSDS path)");
    write_hsds(gen_clusters(spec), o.data);
    report["truth"] = ground_truth(spec);
    if (!o.truth.empty()) write_text(o.truth, ground_truth(spec).dump(2) + "\n");
  }
  emit(report, o.out, out);
}

inline void cmd_replicate(const Options& o, std::ostream& out) {
  const std::filesystem::path cfg_path(o.config);
  auto cfg = pipeline_config_from_json(read_json(cfg_path), cfg_path.parent_path());
  if (o.seed_given) cfg.seed = o.seed;
  if (o.tau) cfg.tau = *o.tau;
  if (o.k_override) cfg.k_samples = *o.k_override;
  if (o.bins_override) cfg.bins = *o.bins_override;
  if (o.value_override) cfg.deactivation_value = *o.value_override;
  const auto result = replicate_pipeline(cfg, !o.no_timestamp);
  emit(result.report, o.out, out);
  if (!o.csv.empty()) write_text(o.csv, result.interventions_csv);
}

}  // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Options o;
  CLI::App app{"Hidden-state analysis: S-CDI layer selection, probes, neuron groups, interventions", "hslab"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::vector<CLI::Option*> seed_options;
  auto common = [&](CLI::App* sc, bool csv) {
    sc->add_option("--out", o.out, "JSON report path (stdout when omitted)");
    if (csv) sc->add_option("--csv", o.csv, "CSV projection path");
    seed_options.push_back(sc->add_option("--seed", o.seed, "Global seed"));
    sc->add_flag("--no-timestamp", o.no_timestamp, "Omit generated_at from the report");
  };

  auto* scdi = app.add_subcommand("scdi", "S-CDI for each layer file");
  scdi->add_option("--layers", o.layers, "HSDS layer files")->required()->expected(1, -1);
  scdi->add_option("--k-samples", o.k_samples, "Rows sampled for orthogonality")->check(CLI::Range(2, 1 << 30));
  common(scdi, true);

  auto* ptrain = app.add_subcommand("probe-train", "Train a probe on a balanced split");
  ptrain->add_option("--data", o.data, "HSDS training data")->required();
  ptrain->add_option("--model", o.model, "Output model file")->required();
  ptrain->add_option("--config", o.config, "Probe config JSON");
  ptrain->add_option("--train-fraction", o.train_fraction, "Train share of each class");
  ptrain->add_option("--test-out", o.test_out, "Write the held-out split here");
  ptrain->add_flag("--no-split", o.no_split, "Train on every row");
  common(ptrain, false);

  auto* peval = app.add_subcommand("probe-eval", "Evaluate a probe");
  peval->add_option("--model", o.model, "Model file")->required();
  peval->add_option("--data", o.data, "HSDS test data")->required();
  common(peval, false);

  auto* rds = app.add_subcommand("rds", "Regret Dominance Scores and neuron partition");
  rds->add_option("--data", o.data, "HSDS file with pair ids")->required();
  rds->add_option("--tau", o.tau, "Partition width in standard deviations (default 0.05)");
  rds->add_option("--epsilon", o.epsilon, "Denominator guard");
  rds->add_flag("--signed", o.signed_rds, "Signed ratio instead of magnitudes");
  common(rds, true);

  auto* intv = app.add_subcommand("intervene", "Deactivate neurons and re-evaluate a probe");
  intv->add_option("--model", o.model, "Model file")->required();
  intv->add_option("--data", o.data, "HSDS test data")->required();
  intv->add_option("--partition", o.partition, "rds report holding a partition");
  intv->add_option("--group", o.groups, "Group name(s), e.g. RegretD or RegretD+DualD");
  intv->add_option("--neurons", o.neurons, "Explicit neuron indices (comma separated)");
  intv->add_option("--deactivation-value", o.deactivation_value, "Value written into deactivated neurons");
  intv->add_option("--random-controls", o.random_controls, "Size-matched random sets");
  intv->add_option("--tau", o.tau, "Tau recorded in the CSV");
  common(intv, true);

  auto* gicc = app.add_subcommand("gic", "Group Impact Coefficient from accuracy reports");
  gicc->add_option("--baseline", o.baseline, "JSON with the baseline accuracy")->required();
  gicc->add_option("--individual", o.individual, "JSON per individual group")->required()->expected(1, -1);
  gicc->add_option("--union", o.union_path, "JSON for the union deactivation")->required();
  common(gicc, true);

  auto* mi = app.add_subcommand("mi", "Normalized MI between group mean activations");
  mi->add_option("--data", o.data, "HSDS file")->required();
  mi->add_option("--partition", o.partition, "rds report holding a partition");
  mi->add_option("--group-a", o.group_a, "Explicit neuron indices for A");
  mi->add_option("--group-b", o.group_b, "Explicit neuron indices for B");
  mi->add_option("--bins", o.bins, "Histogram bins per variable")->check(CLI::Range(2, 1 << 20));
  common(mi, true);

  auto* tau = app.add_subcommand("tau-sweep", "Partition and intervene over a tau grid");
  tau->add_option("--model", o.model, "Model file")->required();
  tau->add_option("--data", o.data, "HSDS test data")->required();
  tau->add_option("--pairs-data", o.pairs_data, "HSDS file for RDS pairing (default: --data)");
  tau->add_option("--tau", o.taus, "Tau values")->expected(1, -1);
  tau->add_option("--epsilon", o.epsilon, "RDS denominator guard");
  tau->add_option("--deactivation-value", o.deactivation_value, "Value written into deactivated neurons");
  tau->add_option("--random-controls", o.random_controls, "Size-matched random sets per combination");
  tau->add_option("--long-csv", o.long_csv, "Long-format CSV for heatmaps");
  common(tau, true);

  auto* rr = app.add_subcommand("random-removal", "Random-removal robustness per layer");
  rr->add_option("--models", o.models, "Model file per layer")->required()->expected(1, -1);
  rr->add_option("--data", o.data_files, "HSDS test data per layer")->required()->expected(1, -1);
  rr->add_option("--count", o.count, "Neurons removed per trial");
  rr->add_option("--fraction", o.fraction, "Share of neurons removed when --count is absent");
  rr->add_option("--trials", o.trials, "Random sets per layer")->check(CLI::Range(1, 1 << 20));
  rr->add_option("--deactivation-value", o.deactivation_value, "Value written into deactivated neurons");
  common(rr, true);

  auto* syn = app.add_subcommand("synth", "Generate planted synthetic data");
  syn->add_option("--kind", o.kind, "clusters | compositional | series");
  syn->add_option("--data", o.data, "Output HSDS path (clusters, compositional)");
  syn->add_option("--truth", o.truth, "Ground-truth JSON path (clusters, compositional)");
  syn->add_option("--out-dir", o.out_dir, "Output directory (series)");
  syn->add_option("--pattern", o.pattern, "Target S-CDI rank per layer, e.g. 0,3,1,4,2");
  syn->add_option("--rows", o.rows, "Rows (even)");
  syn->add_option("--dims", o.dims, "Columns");
  syn->add_option("--gap", o.gap, "Class gap in noise sigmas");
  syn->add_option("--sigma", o.sigma, "Noise standard deviation");
  syn->add_option("--baseline", o.base_level, "Resting activation");
  syn->add_option("--signal", o.signal, "Signal columns, comma separated");
  syn->add_option("--redundancy", o.redundancy, "Copies of the signal");
  common(syn, false);

  auto* rep = app.add_subcommand("replicate", "Full workflow from a config file");
  rep->add_option("--config", o.config, "Pipeline config JSON")->required();
  rep->add_option("--tau", o.tau, "Override the config tau");
  rep->add_option("--k-samples", o.k_override, "Override the config k_samples")->check(CLI::Range(2, 1 << 30));
  rep->add_option("--bins", o.bins_override, "Override the config bins")->check(CLI::Range(2, 1 << 20));
  rep->add_option("--deactivation-value", o.value_override, "Override the config deactivation_value");
  common(rep, true);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: Usage: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }
  for (const auto* opt : seed_options) o.seed_given = o.seed_given || opt->count() > 0;

  const std::vector<std::pair<CLI::App*, void (*)(const Options&, std::ostream&)>> table = {
      {scdi, detail::cmd_scdi},       {ptrain, detail::cmd_probe_train},      {peval, detail::cmd_probe_eval},
      {rds, detail::cmd_rds},         {intv, detail::cmd_intervene},          {gicc, detail::cmd_gic},
      {mi, detail::cmd_mi},           {tau, detail::cmd_tau_sweep},           {rr, detail::cmd_random_removal},
      {syn, detail::cmd_synth},       {rep, detail::cmd_replicate}};
  try {
    for (const auto& [sc, fn] : table)
      if (sc->parsed()) fn(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::InvalidConfig ? kExitUsage : kExitData;
  } catch (const std::exception& e) {
    err << "error: Internal: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace hslab::cli
