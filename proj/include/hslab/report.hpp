#pragma once

// JSON and CSV renderings of analysis results. JSON is canonical; CSV files
// are flat projections for plotting.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hslab/metrics.hpp"
#include "hslab/neuron_analysis.hpp"
#include "hslab/probe.hpp"

namespace hslab {

inline constexpr const char* kSchema = "hslab/1";

using nlohmann::json;

/// Top-level report object: {"schema", "kind", ["generated_at"], ...}.
inline json make_envelope(std::string_view kind, bool timestamp) {
  json j = {{"schema", kSchema}, {"kind", kind}};
  if (timestamp) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
    j["generated_at"] = buf;
  }
  return j;
}

inline json to_json(const EvalReport& r) {
  return {{"accuracy", r.accuracy},
          {"sensitivity", r.sensitivity},
          {"specificity", r.specificity},
          {"precision", r.precision},
          {"f1", r.f1},
          {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}}}};
}

inline json to_json(const MetricMeans& r) {
  return {{"accuracy", r.accuracy},
          {"sensitivity", r.sensitivity},
          {"specificity", r.specificity},
          {"precision", r.precision},
          {"f1", r.f1}};
}

inline json to_json(const ScdiReport& r) {
  json counts = json::object();
  for (const auto& [label, n] : r.class_counts) counts[std::to_string(label)] = n;
  return {{"R", r.redundancy}, {"O", r.orthogonality}, {"I_c", r.intra_compactness}, {"I_e", r.inter_entanglement},
          {"CDI", r.cdi},      {"SCDI", r.scdi},       {"class_counts", counts}};
}

inline json to_json(const LayerScdi& l) {
  json j = to_json(l.report);
  j["layer"] = l.layer;
  j["source"] = l.source.filename().string();
  return j;
}

inline json to_json(const RdsScores& r) {
  return {{"scores", r.scores},
          {"mean", r.mean},
          {"std", r.stddev},
          {"epsilon", r.epsilon},
          {"mode", r.mode == RdsMode::Absolute ? "absolute" : "signed"}};
}

inline json to_json(const NeuronPartition& p) {
  return {{"tau", p.tau},
          {"lower", p.lower},
          {"upper", p.upper},
          {kRegretD, p.regret_d},
          {kNonRegretD, p.non_regret_d},
          {kDualD, p.dual_d}};
}

inline NeuronPartition partition_from_json(const json& j) {
  NeuronPartition p;
  try {
    p.tau = j.value("tau", 0.0);
    p.lower = j.value("lower", 0.0);
    p.upper = j.value("upper", 0.0);
    p.regret_d = j.at(kRegretD).get<IndexSet>();
    p.non_regret_d = j.at(kNonRegretD).get<IndexSet>();
    p.dual_d = j.at(kDualD).get<IndexSet>();
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("partition: ") + e.what());
  }
  return p;
}

inline json to_json(const InterventionResult& r) {
  return {{"group", r.group_name}, {"count", r.group_size}, {"report", to_json(r.report)},
          {"baseline", to_json(r.baseline)}};
}

inline json to_json(const GicReport& g) {
  return {{"groups", g.groups},
          {"baseline_accuracy", g.baseline_accuracy},
          {"union_accuracy", g.union_accuracy},
          {"individual_accuracies", g.individual_accuracies},
          {"gic", g.gic}};
}

inline json to_json(const RemovalSummary& s) {
  return {{"layer", s.layer},
          {"count", s.count},
          {"trials", s.trials},
          {"baseline", to_json(s.baseline)},
          {"mean", to_json(s.mean)}};
}

inline json to_json(const TauSweepRow& r) {
  return {{"tau", r.tau},
          {"group", r.group},
          {"random_control", r.random_control},
          {"count", r.count},
          {"report", to_json(r.report)},
          {"accuracy_drop", r.accuracy_drop},
          {"gic", r.gic ? json(*r.gic) : json(nullptr)}};
}

inline json to_json(const TauSweep& s) {
  json parts = json::array();
  for (const auto& p : s.partitions) parts.push_back(to_json(p));
  json rows = json::array();
  for (const auto& r : s.rows) rows.push_back(to_json(r));
  return {{"baseline", to_json(s.baseline)}, {"rds", to_json(s.rds)}, {"partitions", parts}, {"rows", rows}};
}

/// Accuracy from any of: an EvalReport object, an InterventionResult object,
/// a report envelope wrapping either, or {"accuracy": x}.
inline double accuracy_from_json(const json& j) {
  if (j.contains("accuracy") && j["accuracy"].is_number()) return j["accuracy"].get<double>();
  if (j.contains("report") && j["report"].is_object()) return accuracy_from_json(j["report"]);
  if (j.contains("result") && j["result"].is_object()) return accuracy_from_json(j["result"]);
  fail(ErrorCode::InvalidConfig, "JSON document carries no accuracy field");
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Shortest round-trip rendering of a double ("%.17g"), empty for NaN.
inline std::string csv_number(double v) {
  if (v != v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_optional(const std::optional<double>& v) { return v ? csv_number(*v) : ""; }

inline std::string scdi_csv(const std::vector<LayerScdi>& layers) {
  std::ostringstream out;
  out << "layer,R,O,I_c,I_e,CDI,SCDI\n";
  for (const auto& l : layers) {
    const auto& r = l.report;
    out << l.layer << ',' << csv_number(r.redundancy) << ',' << csv_number(r.orthogonality) << ','
        << csv_number(r.intra_compactness) << ',' << csv_number(r.inter_entanglement) << ',' << csv_number(r.cdi)
        << ',' << csv_number(r.scdi) << '\n';
  }
  return out.str();
}

inline constexpr const char* kInterventionCsvHeader =
    "tau,group,count,accuracy,sensitivity,specificity,precision,f1,gic\n";

inline std::string intervention_csv_row(std::optional<double> tau, const std::string& group, std::size_t count,
                                        const EvalReport& r, std::optional<double> gic) {
  std::ostringstream out;
  out << csv_optional(tau) << ',' << group << ',' << count << ',' << csv_number(r.accuracy) << ','
      << csv_number(r.sensitivity) << ',' << csv_number(r.specificity) << ',' << csv_number(r.precision) << ','
      << csv_number(r.f1) << ',' << csv_optional(gic) << '\n';
  return out.str();
}

inline std::string tau_sweep_csv(const TauSweep& s) {
  std::string out = kInterventionCsvHeader;
  for (const auto& r : s.rows) out += intervention_csv_row(r.tau, r.group, r.count, r.report, r.gic);
  return out;
}

/// Long format (tau, group, metric, value) for heatmaps.
inline std::string tau_sweep_long_csv(const TauSweep& s) {
  std::ostringstream out;
  out << "tau,group,metric,value\n";
  for (const auto& r : s.rows) {
    const std::pair<const char*, double> metrics[] = {{"accuracy", r.report.accuracy},
                                                      {"accuracy_drop", r.accuracy_drop},
                                                      {"sensitivity", r.report.sensitivity},
                                                      {"specificity", r.report.specificity},
                                                      {"precision", r.report.precision},
                                                      {"f1", r.report.f1}};
    for (const auto& [name, value] : metrics)
      out << csv_number(r.tau) << ',' << r.group << ',' << name << ',' << csv_number(value) << '\n';
    if (r.gic) out << csv_number(r.tau) << ',' << r.group << ",gic," << csv_number(*r.gic) << '\n';
  }
  return out.str();
}

inline std::string removal_csv(const std::vector<RemovalSummary>& rows) {
  std::ostringstream out;
  out << "layer,count,trials,baseline_accuracy,accuracy,sensitivity,specificity,precision,f1\n";
  for (const auto& s : rows)
    out << s.layer << ',' << s.count << ',' << s.trials << ',' << csv_number(s.baseline.accuracy) << ','
        << csv_number(s.mean.accuracy) << ',' << csv_number(s.mean.sensitivity) << ','
        << csv_number(s.mean.specificity) << ',' << csv_number(s.mean.precision) << ',' << csv_number(s.mean.f1)
        << '\n';
  return out.str();
}

}  // namespace hslab
