#pragma once

#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rvp/compare.hpp"
#include "rvp/config.hpp"
#include "rvp/hash.hpp"
#include "rvp/version.hpp"

namespace rvp {

using OrderedJson = nlohmann::ordered_json;

/// Flat plotting table: one row per grid cell.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Json>> rows;
};

struct RunOutput {
  Json document;  // schema-versioned result document
  Table table;
};

namespace detail {

inline Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }
inline Json num(const std::optional<double>& v) { return v ? num(*v) : Json(nullptr); }

inline Json cost_json(const Lever& l, const std::optional<double>& cost) {
  Json j = {{"amount", num(cost)}, {"model", to_string(l.cost.kind)}};
  if (!l.cost.currency.empty()) j["currency"] = l.cost.currency;
  return j;
}

inline Json run_evaluate(const ScenarioConfig& cfg, Table& t) {
  const auto s = evaluate_summary(cfg.scenario);
  t.columns = {"welfare", "random_baseline", "perfect_baseline", "ratio_to_random"};
  t.rows.push_back({num(s.welfare), num(s.random_baseline), num(s.perfect_baseline), num(s.ratio_to_random)});
  return {{"welfare", num(s.welfare)},
          {"random_baseline", num(s.random_baseline)},
          {"perfect_baseline", num(s.perfect_baseline)},
          {"ratio_to_random", num(s.ratio_to_random)},
          {"slots", s.slots},
          {"slots_used", s.slots_used},
          {"random_fill", s.random_fill},
          {"label_share", num(s.label_share)},
          {"resolved_threshold", num(s.resolved_threshold)},
          {"warnings", s.warnings}};
}

inline Json run_curve(const ScenarioConfig& cfg, std::size_t workers, Table& t) {
  const auto c = welfare_curve(cfg.scenario, cfg.lever(cfg.analysis.lever), cfg.analysis.grid, workers);
  t.columns = {"theta", "welfare", "gain", "error"};
  Json points = Json::array();
  for (const auto& p : c.points) {
    t.rows.push_back({num(p.theta), num(p.welfare), num(p.gain), p.error.empty() ? Json(nullptr) : Json(p.error)});
    points.push_back({{"theta", num(p.theta)}, {"welfare", num(p.welfare)}, {"gain", num(p.gain)},
                      {"error", p.error.empty() ? Json(nullptr) : Json(p.error)}});
  }
  return {{"lever", c.lever}, {"baseline_welfare", num(c.baseline_welfare)}, {"points", points}};
}

inline Json run_break_even(const ScenarioConfig& cfg, std::size_t workers, Table& t) {
  const auto& a = cfg.analysis;
  const Lever& imp = cfg.lever(a.lever);
  Lever bench = cfg.lever(a.benchmark);
  if (a.benchmark_match)
    bench = benchmark_at_matched_cost(cfg.scenario, imp, bench);
  else if (a.benchmark_theta)
    bench = bench.at(*a.benchmark_theta);
  const auto r = break_even(cfg.scenario, imp, a.grid, bench, workers);
  t.columns = {"eta", "welfare", "gain", "benchmark_gain", "gain_minus_benchmark"};
  Json curve = Json::array();
  for (const auto& p : r.gain_curve) {
    t.rows.push_back({num(p.theta), num(p.welfare), num(p.gain), num(r.benchmark_gain), num(*p.gain - r.benchmark_gain)});
    curve.push_back({{"eta", num(p.theta)}, {"welfare", num(p.welfare)}, {"gain", num(p.gain)}});
  }
  std::optional<double> imp_cost;
  if (imp.cost.kind != CostModel::Kind::None) imp_cost = lever_cost(imp.at(1.0), cfg.scenario);
  return {{"lever", imp.name},
          {"theta_star", num(r.theta_star)},
          {"attained", r.attained},
          {"benchmark",
           {{"lever", bench.name},
            {"theta", num(r.benchmark_theta)},
            {"gain", num(r.benchmark_gain)},
            {"cost", cost_json(bench, r.benchmark_cost)}}},
          {"improvement_full_cost", cost_json(imp, imp_cost)},
          {"baseline_welfare", num(r.baseline_welfare)},
          {"rmse_parity_eta", num(r.rmse_parity_eta)},
          {"gain_curve", curve}};
}

inline Json run_equivalent_cost(const ScenarioConfig& cfg, std::size_t workers, Table& t) {
  const auto& a = cfg.analysis;
  const Lever& lever = cfg.lever(a.lever);
  const Lever& bench = cfg.lever(a.benchmark);
  const auto r = equivalent_cost(cfg.scenario, lever, bench, a.equivalent, workers);
  t.columns = {"lever_gain", "theta_star", "cost", "range_exceeded", "benchmark_max_gain"};
  t.rows.push_back({num(r.lever_gain), num(r.theta_star), num(r.cost), r.range_exceeded, num(r.benchmark_max_gain)});
  return {{"lever", lever.name},
          {"benchmark", bench.name},
          {"lever_gain", num(r.lever_gain)},
          {"theta_star", num(r.theta_star)},
          {"cost", cost_json(bench, r.cost)},
          {"range_exceeded", r.range_exceeded},
          {"benchmark_max_gain", num(r.benchmark_max_gain)},
          {"range", {num(r.range_lo), num(r.range_hi)}},
          {"relative_tolerance", num(a.equivalent.relative_tolerance)},
          {"iterations", r.iterations}};
}

inline Json run_ratio_grid(const ScenarioConfig& cfg, std::size_t workers, Table& t) {
  const auto& a = cfg.analysis;
  const auto g = ratio_grid(cfg.scenario, cfg.lever(a.lever), a.grid, cfg.lever(a.lever_b), a.grid_b, workers);
  t.columns = {"theta_a", "theta_b", "gain_a", "gain_b", "ratio", "ratio_truncated"};
  Json ratios = Json::array();
  for (std::size_t i = 0; i < g.axis_a.size(); ++i) {
    Json row = Json::array();
    for (std::size_t j = 0; j < g.axis_b.size(); ++j) {
      const auto& r = g.ratios[i][j];
      row.push_back(num(r));
      const Json trunc = r ? num(std::clamp(*r, g.truncate_lo, g.truncate_hi)) : Json(nullptr);
      t.rows.push_back({num(g.axis_a[i]), num(g.axis_b[j]), num(g.gains_a[i]), num(g.gains_b[j]), num(r), trunc});
    }
    ratios.push_back(row);
  }
  return {{"lever_a", g.lever_a},        {"lever_b", g.lever_b},         {"axis_a", g.axis_a},
          {"axis_b", g.axis_b},          {"gains_a", g.gains_a},         {"gains_b", g.gains_b},
          {"ratios", ratios},            {"truncate_lo", g.truncate_lo}, {"truncate_hi", g.truncate_hi}};
}

inline Json run_optimize(const ScenarioConfig& cfg, std::size_t workers, Table& t) {
  const auto& a = cfg.analysis;
  std::vector<Lever> levers;
  for (const auto& name : a.levers) levers.push_back(cfg.lever(name));
  const auto r = optimize_budget(cfg.scenario, levers, a.budget, a.resolution, workers);
  for (const auto& l : levers) t.columns.push_back("spend_" + l.name);
  for (const auto& l : levers) t.columns.push_back("theta_" + l.name);
  t.columns.push_back("welfare");
  t.columns.push_back("gain");
  for (const auto& c : r.cells) {
    std::vector<Json> row;
    for (double v : c.spends) row.push_back(num(v));
    for (double v : c.thetas) row.push_back(num(v));
    row.push_back(num(c.welfare));
    row.push_back(num(c.welfare - r.baseline_welfare));
    t.rows.push_back(std::move(row));
  }
  Json splits = Json::array();
  std::vector<Lever> chosen;
  for (std::size_t j = 0; j < r.splits.size(); ++j) {
    const auto& sp = r.splits[j];
    splits.push_back({{"lever", sp.lever}, {"spend", num(sp.spend)}, {"theta", num(sp.theta)}});
    chosen.push_back(levers[j].at(sp.theta));
  }
  const Scenario after = apply_levers(cfg.scenario, chosen);
  return {{"splits", splits},
          {"total_welfare", num(r.total_welfare)},
          {"welfare_gain", num(r.welfare_gain)},
          {"baseline_welfare", num(r.baseline_welfare)},
          {"budget", num(r.budget)},
          {"resolution", num(r.resolution)},
          {"cells_evaluated", r.cells.size()},
          {"resulting",
           {{"label_share", num(after.pop().label_share())},
            {"capacity", num(after.constraint.capacity)},
            {"slots", after.constraint.slots()}}}};
}

}  // namespace detail

/// Scenario facts shared by every result document.
inline Json scenario_summary(const ScenarioConfig& cfg) {
  const auto& s = cfg.scenario;
  Json data = {{"kind", cfg.source.kind}};
  if (!cfg.source.reference.empty()) data["reference"] = cfg.source.reference;
  if (cfg.source.content_hash) data["sha256"] = *cfg.source.content_hash;
  return {{"n", s.pop().size()},
          {"label_share", detail::num(s.pop().label_share())},
          {"direction", to_string(s.pop().direction())},
          {"capacity", detail::num(s.constraint.capacity)},
          {"slots", s.constraint.slots()},
          {"utility", s.utility.name()},
          {"seed", s.policy.seed},
          {"stop_at_nonpositive", s.policy.stop_at_nonpositive},
          {"masks", [&] {
             Json m = Json::object();
             for (const auto& [name, mask] : cfg.masks) m[name] = mask.count();
             return m;
           }()},
          {"data", data}};
}

/// Runs the configured analysis. The document holds no timing or host data,
/// so identical inputs give byte-identical documents.
inline RunOutput run_analysis(const ScenarioConfig& cfg, std::size_t workers = 1) {
  RunOutput out;
  Json result;
  using K = AnalysisSpec::Kind;
  switch (cfg.analysis.kind) {
    case K::Evaluate: result = detail::run_evaluate(cfg, out.table); break;
    case K::Curve: result = detail::run_curve(cfg, workers, out.table); break;
    case K::BreakEven: result = detail::run_break_even(cfg, workers, out.table); break;
    case K::EquivalentCost: result = detail::run_equivalent_cost(cfg, workers, out.table); break;
    case K::RatioGrid: result = detail::run_ratio_grid(cfg, workers, out.table); break;
    case K::Optimize: result = detail::run_optimize(cfg, workers, out.table); break;
  }
  out.document = {{"schema_version", kSchemaVersion},
                  {"engine_version", kEngineVersion},
                  {"config_hash", cfg.hash},
                  {"analysis", to_string(cfg.analysis.kind)},
                  {"scenario", scenario_summary(cfg)},
                  {"result", result}};
  return out;
}

inline std::string render_document(const Json& doc) { return doc.dump(2) + "\n"; }

namespace detail {

inline std::string csv_cell(const Json& v) {
  if (v.is_null()) return "";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_number()) return v.dump();
  const std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

}  // namespace detail

inline std::string render_table_csv(const Table& t) {
  std::string out;
  for (std::size_t c = 0; c < t.columns.size(); ++c) out += (c ? "," : "") + detail::csv_cell(t.columns[c]);
  out += "\n";
  for (const auto& row : t.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + detail::csv_cell(row[c]);
    out += "\n";
  }
  return out;
}

inline std::string render_table_json(const Table& t) {
  OrderedJson rows = OrderedJson::array();
  for (const auto& row : t.rows) {
    OrderedJson r = OrderedJson::object();
    for (std::size_t c = 0; c < row.size(); ++c) r[t.columns[c]] = OrderedJson::parse(row[c].dump());
    rows.push_back(std::move(r));
  }
  return rows.dump(2) + "\n";
}

inline Json make_manifest(const ScenarioConfig& cfg, const std::string& rendered_document, double wall_seconds,
                          std::size_t workers) {
  Json m = {{"config_hash", cfg.hash},
            {"seed", cfg.scenario.policy.seed},
            {"engine_version", kEngineVersion},
            {"schema_version", kSchemaVersion},
            {"analysis", to_string(cfg.analysis.kind)},
            {"result_sha256", sha256_hex(rendered_document)},
            {"wall_time_seconds", wall_seconds},
            {"workers", workers}};
  if (cfg.source.content_hash) m["data_sha256"] = *cfg.source.content_hash;
  return m;
}

}  // namespace rvp
