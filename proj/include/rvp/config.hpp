#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rvp/compare.hpp"
#include "rvp/error.hpp"
#include "rvp/hash.hpp"
#include "rvp/levers.hpp"
#include "rvp/population.hpp"
#include "rvp/predicate.hpp"
#include "rvp/synth.hpp"
#include "rvp/version.hpp"

namespace rvp {

using Json = nlohmann::json;

struct AnalysisSpec {
  enum class Kind { Evaluate, Curve, BreakEven, EquivalentCost, RatioGrid, Optimize };
  Kind kind = Kind::Evaluate;
  std::string lever;      // curve lever, improvement, equivalent-cost lever, ratio lever A
  std::string benchmark;  // break-even and equivalent-cost benchmark
  std::string lever_b;    // ratio lever B
  std::vector<double> grid, grid_b;
  bool benchmark_match = false;
  std::optional<double> benchmark_theta;
  EquivalentCostOptions equivalent;
  std::vector<std::string> levers;  // optimizer
  double budget = 0.0;
  std::optional<double> resolution;

  /// Rough number of scenario evaluations the analysis performs.
  double cell_count() const {
    switch (kind) {
      case Kind::Evaluate: return 1.0;
      case Kind::Curve: return static_cast<double>(grid.size());
      case Kind::BreakEven: return static_cast<double>(grid.size() + 1);
      case Kind::EquivalentCost: return static_cast<double>(equivalent.validation_samples) + 40.0;
      case Kind::RatioGrid: return static_cast<double>(grid.size() + grid_b.size());
      case Kind::Optimize: {
        const double step = resolution.value_or(budget > 0.0 ? budget / 100.0 : 1.0);
        const double m = std::floor(budget / step + kCountSlack);
        double cells = 1.0;
        for (std::size_t j = 1; j <= levers.size(); ++j) cells *= (m + static_cast<double>(j)) / static_cast<double>(j);
        return cells;
      }
    }
    return 1.0;
  }
};

inline const char* to_string(AnalysisSpec::Kind k) {
  switch (k) {
    case AnalysisSpec::Kind::Evaluate: return "evaluate";
    case AnalysisSpec::Kind::Curve: return "curve";
    case AnalysisSpec::Kind::BreakEven: return "break_even";
    case AnalysisSpec::Kind::EquivalentCost: return "equivalent_cost";
    case AnalysisSpec::Kind::RatioGrid: return "ratio_grid";
    case AnalysisSpec::Kind::Optimize: return "optimize";
  }
  return "evaluate";
}

struct DataSource {
  std::string kind;       // "file", "synth" or "dataset"
  std::string reference;  // path or dataset id
  std::optional<std::string> content_hash;
};

struct ScenarioConfig {
  Json document;
  std::string hash;
  Scenario scenario;
  std::map<std::string, Mask> masks;
  std::map<std::string, Lever> levers;
  AnalysisSpec analysis;
  DataSource source;

  const Lever& lever(const std::string& name) const { return levers.at(name); }
};

struct ConfigContext {
  std::filesystem::path base_dir = ".";
  // Resolves {"data": {"dataset": id}} references; unset outside the service.
  std::function<std::shared_ptr<const Population>(const std::string&)> dataset;
  std::optional<std::uint64_t> seed_override;
};

// ---------------------------------------------------------------------------
// Field access with paths

namespace detail {

inline std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

class Field {
 public:
  Field(const Json& j, std::string path) : j_(&j), path_(std::move(path)) {}

  const Json& json() const { return *j_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void error(const std::string& msg) const { throw ConfigError(path_, msg); }

  bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }

  Field at(const std::string& key) const {
    require_object();
    if (!j_->contains(key)) throw ConfigError(join_path(path_, key), "required field is missing");
    return {(*j_)[key], join_path(path_, key)};
  }
  std::optional<Field> opt(const std::string& key) const {
    require_object();
    if (!j_->contains(key) || (*j_)[key].is_null()) return std::nullopt;
    return Field((*j_)[key], join_path(path_, key));
  }
  Field index(std::size_t i) const { return {(*j_)[i], path_ + "[" + std::to_string(i) + "]"}; }

  void require_object() const {
    if (!j_->is_object()) error("expected an object");
  }
  void allow(std::initializer_list<const char*> keys) const {
    require_object();
    for (const auto& [k, v] : j_->items()) {
      bool ok = false;
      for (const char* a : keys) ok = ok || k == a;
      if (!ok) throw ConfigError(join_path(path_, k), "unknown field");
    }
  }

  double number() const {
    if (!j_->is_number()) error("expected a number");
    const double v = j_->get<double>();
    if (!std::isfinite(v)) error("expected a finite number");
    return v;
  }
  std::uint64_t u64() const {
    if (!j_->is_number_integer() || (j_->is_number_integer() && !j_->is_number_unsigned() && j_->get<long long>() < 0))
      error("expected a nonnegative integer");
    return j_->get<std::uint64_t>();
  }
  std::string str() const {
    if (!j_->is_string()) error("expected a string");
    return j_->get<std::string>();
  }
  bool boolean() const {
    if (!j_->is_boolean()) error("expected true or false");
    return j_->get<bool>();
  }
  std::size_t size() const {
    if (!j_->is_array()) error("expected an array");
    return j_->size();
  }
  std::vector<double> numbers() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back(index(i).number());
    return out;
  }
  std::vector<std::string> strings() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back(index(i).str());
    return out;
  }

  double number_or(const std::string& key, double fallback) const {
    auto f = opt(key);
    return f ? f->number() : fallback;
  }
  std::string str_or(const std::string& key, const std::string& fallback) const {
    auto f = opt(key);
    return f ? f->str() : fallback;
  }

 private:
  const Json* j_;
  std::string path_;
};

// Strips the "Kind: " prefix that Error puts in front of messages.
inline std::string bare_message(const Error& e) {
  std::string m = e.what();
  const std::string prefix = std::string(to_string(e.kind())) + ": ";
  return m.rfind(prefix, 0) == 0 ? m.substr(prefix.size()) : m;
}

// Runs fn, attaching `path` to domain errors raised inside it.
template <class F>
auto at_path(const std::string& path, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const RowError&) {
    throw;
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + bare_message(e));
  }
}

inline Direction parse_direction(const Field& f) {
  const auto s = f.str();
  if (s == "higher_is_risk") return Direction::HigherIsRisk;
  if (s == "lower_is_risk") return Direction::LowerIsRisk;
  f.error("expected higher_is_risk or lower_is_risk");
}

inline std::vector<double> parse_grid(const Field& f) {
  if (f.json().is_array()) return f.numbers();
  f.allow({"start", "stop", "points"});
  const auto points = f.at("points").u64();
  return at_path(f.path(), [&] {
    return linear_grid(f.at("start").number(), f.at("stop").number(), static_cast<std::size_t>(points));
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Documents

/// Parses a config document; `//` and `/* */` comments are allowed.
inline Json parse_config_text(const std::string& text) {
  try {
    return Json::parse(text, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw ConfigError("", std::string("config does not parse: ") + e.what());
  }
}

inline std::string read_text_file(const std::filesystem::path& p, ErrorKind kind_on_missing) {
  std::ifstream in(p, std::ios::binary);
  if (!in) {
    if (kind_on_missing == ErrorKind::ConfigError) throw ConfigError("", "cannot read " + p.string());
    fail(kind_on_missing, "cannot read " + p.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// SHA-256 over the engine version and the canonical (key-sorted, compact)
/// serialization of the document.
inline std::string config_hash(const Json& doc) {
  return sha256_hex(std::string(kEngineVersion) + "\n" + doc.dump());
}

inline SynthSpec synth_spec_from_json(const detail::Field& f) {
  f.allow({"n", "distribution", "noise", "direction", "seed", "covariates", "label_share", "label_seed"});
  SynthSpec s;
  if (auto n = f.opt("n")) s.n = static_cast<std::size_t>(n->u64());
  if (auto d = f.opt("distribution")) {
    const auto kind = d->at("kind").str();
    if (kind == "two_point") {
      d->allow({"kind", "share_at_risk", "low", "high"});
      TwoPointOutcome t;
      t.share_at_risk = d->number_or("share_at_risk", t.share_at_risk);
      t.low = d->number_or("low", t.low);
      t.high = d->number_or("high", t.high);
      s.outcome = t;
    } else if (kind == "lognormal") {
      d->allow({"kind", "mu", "sigma", "mean"});
      LognormalOutcome l;
      l.sigma = d->number_or("sigma", 0.8);
      if (d->has("mean") && d->has("mu")) d->error("give mu or mean, not both");
      // A mean on the natural scale fixes mu = ln(mean) - sigma^2 / 2.
      if (auto m = d->opt("mean")) {
        if (!(m->number() > 0.0)) m->error("mean must be positive");
        l.mu = std::log(m->number()) - 0.5 * l.sigma * l.sigma;
      } else {
        l.mu = d->number_or("mu", std::log(1250.0) - 0.5 * l.sigma * l.sigma);
      }
      s.outcome = l;
    } else if (kind == "pareto") {
      d->allow({"kind", "shape", "scale"});
      ParetoOutcome p;
      p.shape = d->number_or("shape", p.shape);
      p.scale = d->number_or("scale", p.scale);
      s.outcome = p;
    } else {
      d->at("kind").error("expected two_point, lognormal or pareto");
    }
  }
  if (auto nz = f.opt("noise")) {
    nz->allow({"sigma", "mode"});
    s.noise_sigma = nz->number_or("sigma", 0.0);
    const auto mode = nz->str_or("mode", "additive");
    if (mode == "additive") s.noise_mode = NoiseMode::Additive;
    else if (mode == "log") s.noise_mode = NoiseMode::Log;
    else nz->at("mode").error("expected additive or log");
  }
  if (auto d = f.opt("direction")) s.direction = detail::parse_direction(*d);
  if (auto sd = f.opt("seed")) s.seed = sd->u64();
  if (auto c = f.opt("covariates")) {
    c->allow({"missing_job_rate", "hard_noise_factor"});
    s.covariates.enabled = true;
    s.covariates.missing_job_rate = c->number_or("missing_job_rate", s.covariates.missing_job_rate);
    s.covariates.hard_noise_factor = c->number_or("hard_noise_factor", s.covariates.hard_noise_factor);
  }
  detail::at_path(f.path(), [&] { validate(s); });
  return s;
}

inline Schema schema_from_json(const detail::Field& f) {
  f.allow({"outcome", "prediction", "labeled", "groups", "id", "weight", "delimiter", "missing", "direction"});
  Schema s;
  s.outcome_col = f.str_or("outcome", s.outcome_col);
  s.prediction_col = f.str_or("prediction", s.prediction_col);
  if (auto v = f.opt("labeled")) s.labeled_col = v->str();
  if (auto v = f.opt("groups")) s.group_cols = v->strings();
  if (auto v = f.opt("id")) s.id_col = v->str();
  if (auto v = f.opt("weight")) s.weight_col = v->str();
  if (auto v = f.opt("delimiter")) {
    const auto d = v->str();
    if (d == "\\t" || d == "tab") s.delimiter = '\t';
    else if (d.size() == 1) s.delimiter = d[0];
    else v->error("delimiter must be a single character");
  }
  s.missing = f.str_or("missing", s.missing);
  if (auto v = f.opt("direction")) s.direction = detail::parse_direction(*v);
  return s;
}

namespace detail {

struct Builder {
  const ConfigContext& ctx;
  ScenarioConfig& cfg;
  Field root;
  std::shared_ptr<const Population> pop;
  std::set<std::string> resolving;

  void population() {
    const bool has_data = root.has("data"), has_synth = root.has("synth");
    if (has_data == has_synth) root.error("give exactly one of data or synth");
    std::optional<Field> label_share, label_seed;
    if (has_synth) {
      const Field f = root.at("synth");
      const SynthSpec spec = synth_spec_from_json(f);
      pop = std::make_shared<const Population>(generate(spec));
      cfg.source = {"synth", "", std::nullopt};
      label_share = f.opt("label_share");
      label_seed = f.opt("label_seed");
    } else {
      const Field f = root.at("data");
      f.allow({"path", "schema", "dataset", "label_share", "label_seed"});
      if (f.has("path") == f.has("dataset")) f.error("give exactly one of path or dataset");
      if (auto id = f.opt("dataset")) {
        if (!ctx.dataset) id->error("dataset references are only available in the service");
        pop = ctx.dataset(id->str());
        if (!pop) id->error("unknown dataset '" + id->str() + "'");
        cfg.source = {"dataset", id->str(), std::nullopt};
      } else {
        const Schema schema = f.opt("schema") ? schema_from_json(f.at("schema")) : Schema{};
        std::filesystem::path p = f.at("path").str();
        if (p.is_relative()) p = ctx.base_dir / p;
        const std::string text = read_text_file(p, ErrorKind::UnreadableData);
        std::istringstream in(text);
        pop = std::make_shared<const Population>(load_population(in, schema));
        cfg.source = {"file", f.at("path").str(), sha256_hex(text)};
      }
      label_share = f.opt("label_share");
      label_seed = f.opt("label_seed");
    }
    if (label_share) {
      LabelingOrder order;
      order.seed = label_seed ? label_seed->u64() : 0;
      const double share = label_share->number();
      pop = at_path(label_share->path(),
                    [&] { return std::make_shared<const Population>(apply_labeling(*pop, share, order)); });
    }
  }

  Mask mask_named(const std::string& name, const std::string& path) {
    if (auto it = cfg.masks.find(name); it != cfg.masks.end()) return it->second;
    auto masks = root.opt("masks");
    if (!masks || !masks->has(name)) throw ConfigError(path, "unknown mask '" + name + "'");
    if (!resolving.insert(name).second) throw ConfigError(path, "mask '" + name + "' refers to itself");
    Mask m = build_mask(masks->at(name));
    m.description = name;
    resolving.erase(name);
    cfg.masks.emplace(name, m);
    return m;
  }

  Mask build_mask(const Field& f) {
    if (f.json().is_string()) return at_path(f.path(), [&] { return covariate_mask(*pop, f.str()); });
    f.allow({"predicate", "band", "score_band", "all_of", "any_of"});
    if (f.json().size() != 1) f.error("a mask has exactly one of predicate, band, score_band, all_of, any_of");
    if (auto p = f.opt("predicate")) return at_path(p->path(), [&] { return covariate_mask(*pop, p->str()); });
    if (auto b = f.opt("band")) {
      b->allow({"cutoff", "bandwidth"});
      std::size_t cutoff = 0;
      const Field c = b->at("cutoff");
      if (c.json().is_string()) {
        if (c.str() != "capacity") c.error("expected \"capacity\" or a rank");
        cutoff = count_floor(root.at("constraint").at("capacity").number(), pop->size());
      } else {
        cutoff = static_cast<std::size_t>(c.u64());
      }
      const double width = b->at("bandwidth").number();
      return at_path(b->path(), [&] { return prediction_band_mask(*pop, RankBand{cutoff, width}); });
    }
    if (auto s = f.opt("score_band")) {
      s->allow({"tau", "epsilon"});
      const ScoreBand band{s->at("tau").number(), s->at("epsilon").number()};
      return at_path(s->path(), [&] { return prediction_band_mask(*pop, band); });
    }
    const bool all = f.has("all_of");
    const Field list = f.at(all ? "all_of" : "any_of");
    if (list.size() == 0) list.error("needs at least one mask name");
    Mask m = mask_named(list.index(0).str(), list.index(0).path());
    for (std::size_t i = 1; i < list.size(); ++i) {
      const Mask next = mask_named(list.index(i).str(), list.index(i).path());
      m = all ? (m & next) : (m | next);
    }
    return m;
  }

  void masks() {
    auto f = root.opt("masks");
    if (!f) return;
    f->require_object();
    for (const auto& [name, _] : f->json().items()) mask_named(name, join_path(f->path(), name));
  }

  UtilitySpec utility() {
    const Field f = root.at("utility");
    const auto kind = f.at("kind").str();
    UtilitySpec u;
    if (kind == "step" || kind == "harm_benefit") {
      const bool harm = kind == "harm_benefit";
      if (harm)
        f.allow({"kind", "beta", "threshold", "b", "h", "harm_ratio", "risk_side"});
      else
        f.allow({"kind", "beta", "threshold", "b", "risk_side"});
      PartitionedUtility p;
      if (f.has("beta") == f.has("threshold")) f.error("give exactly one of beta or threshold");
      if (auto b = f.opt("beta")) p.threshold = QuantileThreshold{b->number()};
      else p.threshold = AbsoluteThreshold{f.at("threshold").number()};
      p.at_risk_value = f.number_or("b", 1.0);
      if (harm) {
        if (f.has("h") == f.has("harm_ratio")) f.error("give exactly one of h or harm_ratio");
        const double h = f.has("h") ? f.at("h").number() : f.at("harm_ratio").number() * p.at_risk_value;
        if (h < 0.0) f.at(f.has("h") ? "h" : "harm_ratio").error("harm must be nonnegative");
        p.other_value = h == 0.0 ? 0.0 : -h;
      }
      if (auto r = f.opt("risk_side")) p.risk_side = parse_direction(*r);
      u.kind = p;
    } else if (kind == "crra") {
      f.allow({"kind", "rho", "benefit"});
      CrraUtility c;
      c.rho = f.number_or("rho", c.rho);
      c.benefit = f.number_or("benefit", c.benefit);
      u.kind = c;
    } else if (kind == "affine") {
      f.allow({"kind", "slope", "intercept"});
      AffineUtility a;
      a.slope = f.number_or("slope", a.slope);
      a.intercept = f.number_or("intercept", a.intercept);
      u.kind = a;
    } else {
      f.at("kind").error("expected step, harm_benefit, crra or affine");
    }
    at_path(f.path(), [&] { validate(u); });
    return u;
  }

  Constraint constraint() {
    const Field f = root.at("constraint");
    f.allow({"capacity", "subgroup_caps", "local_capacity"});
    Constraint c;
    c.capacity = f.at("capacity").number();
    c.population_size = pop->size();
    auto groups = [&](const char* key, auto&& add) {
      if (auto list = f.opt(key)) {
        for (std::size_t i = 0; i < list->size(); ++i) {
          const Field e = list->index(i);
          e.allow({"mask", "capacity"});
          add(mask_named(e.at("mask").str(), e.at("mask").path()), e.at("capacity").number());
        }
      }
    };
    groups("subgroup_caps", [&](Mask m, double a) { c.subgroup_caps.push_back({std::move(m), a}); });
    groups("local_capacity", [&](Mask m, double a) { c.reserved.push_back({std::move(m), a}); });
    at_path(f.path(), [&] { validate(c); });
    return c;
  }

  PolicyOptions policy() {
    PolicyOptions p;
    if (auto f = root.opt("policy")) {
      f->allow({"seed", "stop_at_nonpositive", "direction"});
      if (auto s = f->opt("seed")) p.seed = s->u64();
      if (auto s = f->opt("stop_at_nonpositive")) p.stop_at_nonpositive = s->boolean();
      if (auto d = f->opt("direction")) pop = std::make_shared<const Population>(pop->with_direction(parse_direction(*d)));
    }
    return p;
  }

  CostModel cost(const Field& f) {
    f.allow({"model", "unit_cost", "table", "currency"});
    const auto model = f.at("model").str();
    CostModel c;
    const std::string currency = f.str_or("currency", "");
    if (model == "linear" || model == "per_person") {
      const double unit = f.at("unit_cost").number();
      c = model == "linear" ? CostModel::linear(unit, currency) : CostModel::per_person(unit, currency);
    } else if (model == "table") {
      const Field t = f.at("table");
      std::vector<std::pair<double, double>> pts;
      for (std::size_t i = 0; i < t.size(); ++i) {
        const auto xy = t.index(i).numbers();
        if (xy.size() != 2) t.index(i).error("expected [magnitude, cost]");
        pts.emplace_back(xy[0], xy[1]);
      }
      c = CostModel::tabulated(std::move(pts), currency);
    } else {
      f.at("model").error("expected linear, per_person or table");
    }
    at_path(f.path(), [&] { validate(c); });
    return c;
  }

  Lever lever(const std::string& name, const Field& f) {
    const auto kind = f.at("kind").str();
    Lever l;
    l.name = name;
    const double theta = f.number_or("theta", 0.0);
    if (kind == "prediction_improvement") {
      f.allow({"kind", "theta", "mask", "cost"});
      PredictionImprovement a{theta, std::nullopt};
      if (auto m = f.opt("mask")) a.mask = mask_named(m->str(), m->path());
      l.action = a;
    } else if (kind == "expand_capacity") {
      f.allow({"kind", "theta", "target", "cost"});
      ExpandCapacity a{theta, std::nullopt};
      if (auto m = f.opt("target")) a.target = mask_named(m->str(), m->path());
      l.action = a;
    } else if (kind == "benefit") {
      f.allow({"kind", "theta", "cost"});
      l.action = Benefit{theta};
    } else if (kind == "harm_reduction") {
      f.allow({"kind", "theta", "cost"});
      l.action = HarmReduction{theta};
    } else if (kind == "data_labeling") {
      f.allow({"kind", "theta", "order", "cost"});
      DataLabeling a{theta, {}};
      if (auto o = f.opt("order")) {
        o->allow({"kind", "seed", "mask"});
        const auto ok = o->str_or("kind", "random");
        if (ok == "random") {
          a.order.kind = LabelingOrder::Kind::Random;
          if (o->has("mask")) o->at("mask").error("random order takes no mask");
        } else if (ok == "mask") {
          a.order.kind = LabelingOrder::Kind::ByMask;
          a.order.mask = mask_named(o->at("mask").str(), o->at("mask").path());
        } else {
          o->at("kind").error("expected random or mask");
        }
        if (auto s = o->opt("seed")) a.order.seed = s->u64();
      }
      l.action = a;
    } else {
      f.at("kind").error("expected prediction_improvement, expand_capacity, benefit, harm_reduction or data_labeling");
    }
    if (auto c = f.opt("cost")) l.cost = cost(*c);
    return l;
  }

  void levers() {
    auto f = root.opt("levers");
    if (!f) return;
    f->require_object();
    for (const auto& [name, _] : f->json().items()) cfg.levers.emplace(name, lever(name, f->at(name)));
  }

  std::string lever_ref(const Field& f) {
    const auto name = f.str();
    if (!cfg.levers.count(name)) f.error("unknown lever '" + name + "'");
    return name;
  }

  AnalysisSpec analysis() {
    AnalysisSpec a;
    auto f = root.opt("analysis");
    if (!f) return a;
    const auto kind = f->str_or("kind", "evaluate");
    using K = AnalysisSpec::Kind;
    if (kind == "evaluate") {
      f->allow({"kind"});
      a.kind = K::Evaluate;
    } else if (kind == "curve") {
      f->allow({"kind", "lever", "grid"});
      a.kind = K::Curve;
      a.lever = lever_ref(f->at("lever"));
      a.grid = parse_grid(f->at("grid"));
      at_path(f->at("grid").path(), [&] { require_sorted_grid(a.grid, "curve"); });
    } else if (kind == "break_even") {
      f->allow({"kind", "lever", "grid", "benchmark", "benchmark_theta"});
      a.kind = K::BreakEven;
      a.lever = lever_ref(f->at("lever"));
      if (!std::holds_alternative<PredictionImprovement>(cfg.lever(a.lever).action))
        f->at("lever").error("break-even sweeps a prediction_improvement lever");
      a.grid = parse_grid(f->at("grid"));
      at_path(f->at("grid").path(), [&] { require_sorted_grid(a.grid, "eta"); });
      a.benchmark = lever_ref(f->at("benchmark"));
      if (auto t = f->opt("benchmark_theta")) {
        if (t->json().is_string()) {
          if (t->str() != "match") t->error("expected a number or \"match\"");
          a.benchmark_match = true;
        } else {
          a.benchmark_theta = t->number();
        }
      }
    } else if (kind == "equivalent_cost") {
      f->allow({"kind", "lever", "benchmark", "range", "samples", "tolerance"});
      a.kind = K::EquivalentCost;
      a.lever = lever_ref(f->at("lever"));
      a.benchmark = lever_ref(f->at("benchmark"));
      if (auto r = f->opt("range")) {
        const auto lohi = r->numbers();
        if (lohi.size() != 2 || !(lohi[1] > lohi[0])) r->error("expected [lo, hi] with lo < hi");
        a.equivalent.range_lo = lohi[0];
        a.equivalent.range_hi = lohi[1];
      }
      if (auto s = f->opt("samples")) a.equivalent.validation_samples = static_cast<std::size_t>(s->u64());
      if (auto t = f->opt("tolerance")) {
        a.equivalent.relative_tolerance = t->number();
        if (!(a.equivalent.relative_tolerance > 0.0)) t->error("tolerance must be positive");
      }
    } else if (kind == "ratio_grid") {
      f->allow({"kind", "lever_a", "grid_a", "lever_b", "grid_b"});
      a.kind = K::RatioGrid;
      a.lever = lever_ref(f->at("lever_a"));
      a.lever_b = lever_ref(f->at("lever_b"));
      a.grid = parse_grid(f->at("grid_a"));
      a.grid_b = parse_grid(f->at("grid_b"));
      if (a.grid.empty()) f->at("grid_a").error("grid is empty");
      if (a.grid_b.empty()) f->at("grid_b").error("grid is empty");
    } else if (kind == "optimize") {
      f->allow({"kind", "levers", "budget", "resolution"});
      a.kind = K::Optimize;
      const Field list = f->at("levers");
      for (std::size_t i = 0; i < list.size(); ++i) a.levers.push_back(lever_ref(list.index(i)));
      if (a.levers.empty() || a.levers.size() > 3) list.error("optimizer takes one to three levers");
      for (std::size_t i = 0; i < a.levers.size(); ++i)
        if (cfg.lever(a.levers[i]).cost.kind == CostModel::Kind::None)
          list.index(i).error("lever '" + a.levers[i] + "' has no cost model");
      a.budget = f->at("budget").number();
      if (a.budget < 0.0) f->at("budget").error("budget must be nonnegative");
      if (auto r = f->opt("resolution")) {
        a.resolution = r->number();
        if (!(*a.resolution > 0.0)) r->error("resolution must be positive");
      }
    } else {
      f->at("kind").error("expected evaluate, curve, break_even, equivalent_cost, ratio_grid or optimize");
    }
    return a;
  }
};

}  // namespace detail

/// Builds a runnable scenario from a parsed document. A seed override
/// replaces policy.seed before hashing.
inline ScenarioConfig build_config(Json doc, const ConfigContext& ctx = {}) {
  if (!doc.is_object()) throw ConfigError("", "config must be an object");
  if (ctx.seed_override) doc["policy"]["seed"] = *ctx.seed_override;
  ScenarioConfig cfg;
  cfg.document = doc;
  cfg.hash = config_hash(cfg.document);
  detail::Builder b{ctx, cfg, detail::Field(cfg.document, ""), nullptr, {}};
  b.root.allow({"name", "description", "data", "synth", "utility", "constraint", "policy", "masks", "levers",
                "analysis"});
  b.population();
  const PolicyOptions policy = b.policy();
  b.masks();
  const UtilitySpec u = b.utility();
  Constraint c = b.constraint();
  b.levers();
  cfg.analysis = b.analysis();
  cfg.scenario.population = b.pop;
  cfg.scenario.utility = u;
  cfg.scenario.constraint = std::move(c);
  cfg.scenario.policy = policy;
  return cfg;
}

inline ScenarioConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = {}) {
  ConfigContext ctx;
  ctx.base_dir = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  ctx.seed_override = seed_override;
  return build_config(parse_config_text(read_text_file(path, ErrorKind::ConfigError)), ctx);
}

}  // namespace rvp
