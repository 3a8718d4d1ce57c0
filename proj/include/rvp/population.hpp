#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "rvp/error.hpp"
#include "rvp/numeric.hpp"

namespace rvp {

enum class Direction { HigherIsRisk, LowerIsRisk };

inline const char* to_string(Direction d) {
  return d == Direction::HigherIsRisk ? "higher_is_risk" : "lower_is_risk";
}

enum class ScoreField { Prediction, Outcome };

using Flags = std::vector<std::uint8_t>;

/// Boolean selection over the records of one population.
struct Mask {
  Flags member;
  std::string description;

  static Mask all(std::size_t n, std::string description = "all") {
    return {Flags(n, 1), std::move(description)};
  }
  static Mask none(std::size_t n, std::string description = "none") {
    return {Flags(n, 0), std::move(description)};
  }

  std::size_t size() const { return member.size(); }
  bool operator[](std::size_t i) const { return member[i] != 0; }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count(member.begin(), member.end(), std::uint8_t{1}));
  }

  friend bool operator==(const Mask&, const Mask&) = default;
};

/// Intersection; masks compose as a product of indicators.
inline Mask operator&(const Mask& a, const Mask& b) {
  require(a.size() == b.size(), ErrorKind::DomainError, "mask sizes differ");
  Mask out{Flags(a.size()), "(" + a.description + ") AND (" + b.description + ")"};
  for (std::size_t i = 0; i < a.size(); ++i) out.member[i] = (a.member[i] && b.member[i]) ? 1 : 0;
  return out;
}

inline Mask operator|(const Mask& a, const Mask& b) {
  require(a.size() == b.size(), ErrorKind::DomainError, "mask sizes differ");
  Mask out{Flags(a.size()), "(" + a.description + ") OR (" + b.description + ")"};
  for (std::size_t i = 0; i < a.size(); ++i) out.member[i] = (a.member[i] || b.member[i]) ? 1 : 0;
  return out;
}

/// Row view of one record. Population itself is stored column-wise.
struct PopulationRecord {
  std::string id;
  double outcome = 0.0;
  double prediction = 0.0;
  bool labeled = true;
  std::map<std::string, std::optional<std::string>> covariates;
  std::set<std::string> groups;
};

/// Attributes that no lever ever changes. Shared between a population and
/// everything derived from it.
struct PopulationAttributes {
  std::vector<std::string> ids;
  std::vector<std::string> covariate_names;
  // covariates[c][i]: value of covariate c for record i; nullopt when missing.
  std::vector<std::vector<std::optional<std::string>>> covariates;
  std::vector<std::string> group_names;
  std::vector<Flags> groups;
  std::optional<std::vector<double>> weights;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const PopulationAttributes&, const PopulationAttributes&) = default;
};

struct PopulationColumns {
  std::vector<double> outcome;
  std::vector<double> prediction;
  Flags labeled;  // empty means all labeled
  Direction direction = Direction::HigherIsRisk;
  PopulationAttributes attributes;  // ids may be left empty (defaults to "1".."N")
};

/// Immutable evaluation population: outcomes, predictions, labeled flags and
/// covariates. Levers derive new populations through the with_* members,
/// which share the attribute table.
class Population {
 public:
  explicit Population(PopulationColumns cols)
      : outcome_(std::move(cols.outcome)),
        prediction_(std::move(cols.prediction)),
        labeled_(std::move(cols.labeled)),
        direction_(cols.direction) {
    const std::size_t n = outcome_.size();
    require(n > 0, ErrorKind::EmptyPopulation, "population has no records");
    require(prediction_.size() == n, ErrorKind::DomainError, "prediction column length differs from outcome");
    if (labeled_.empty()) labeled_.assign(n, 1);
    require(labeled_.size() == n, ErrorKind::DomainError, "labeled column length differs from outcome");
    auto& attr = cols.attributes;
    if (attr.ids.empty()) {
      attr.ids.reserve(n);
      for (std::size_t i = 0; i < n; ++i) attr.ids.push_back(std::to_string(i + 1));
    }
    require(attr.ids.size() == n, ErrorKind::DomainError, "id column length differs from outcome");
    require(attr.covariates.size() == attr.covariate_names.size(), ErrorKind::DomainError,
            "covariate names and columns differ");
    for (const auto& c : attr.covariates)
      require(c.size() == n, ErrorKind::DomainError, "covariate column length differs from outcome");
    require(attr.groups.size() == attr.group_names.size(), ErrorKind::DomainError, "group names and columns differ");
    for (const auto& g : attr.groups)
      require(g.size() == n, ErrorKind::DomainError, "group column length differs from outcome");
    if (attr.weights) require(attr.weights->size() == n, ErrorKind::DomainError, "weight column length differs");
    std::unordered_set<std::string> seen;
    for (const auto& id : attr.ids)
      require(seen.insert(id).second, ErrorKind::MalformedValue, "duplicate record id '" + id + "'");
    for (std::size_t i = 0; i < n; ++i) {
      if (!labeled_[i]) continue;
      require(std::isfinite(outcome_[i]) && std::isfinite(prediction_[i]), ErrorKind::MalformedValue,
              "labeled record " + attr.ids[i] + " has a non-finite outcome or prediction");
    }
    attributes_ = std::make_shared<const PopulationAttributes>(std::move(attr));
  }

  std::size_t size() const { return outcome_.size(); }
  Direction direction() const { return direction_; }

  const std::vector<double>& outcomes() const { return outcome_; }
  const std::vector<double>& predictions() const { return prediction_; }
  const Flags& labeled() const { return labeled_; }
  double outcome(std::size_t i) const { return outcome_[i]; }
  double prediction(std::size_t i) const { return prediction_[i]; }
  bool is_labeled(std::size_t i) const { return labeled_[i] != 0; }

  std::size_t labeled_count() const {
    return static_cast<std::size_t>(std::count(labeled_.begin(), labeled_.end(), std::uint8_t{1}));
  }
  double label_share() const { return static_cast<double>(labeled_count()) / static_cast<double>(size()); }
  Mask labeled_mask() const { return {labeled_, "labeled"}; }

  const PopulationAttributes& attributes() const { return *attributes_; }
  const std::vector<std::string>& ids() const { return attributes_->ids; }
  const std::map<std::string, std::string>& metadata() const { return attributes_->metadata; }

  std::optional<std::size_t> covariate_index(std::string_view name) const {
    const auto& names = attributes_->covariate_names;
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
  }
  std::optional<std::size_t> group_index(std::string_view name) const {
    const auto& names = attributes_->group_names;
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
  }

  PopulationRecord record(std::size_t i) const {
    PopulationRecord r;
    const auto& a = *attributes_;
    r.id = a.ids[i];
    r.outcome = outcome_[i];
    r.prediction = prediction_[i];
    r.labeled = labeled_[i] != 0;
    for (std::size_t c = 0; c < a.covariate_names.size(); ++c) r.covariates[a.covariate_names[c]] = a.covariates[c][i];
    for (std::size_t g = 0; g < a.group_names.size(); ++g)
      if (a.groups[g][i]) r.groups.insert(a.group_names[g]);
    return r;
  }

  Population with_predictions(std::vector<double> predictions) const {
    require(predictions.size() == size(), ErrorKind::DomainError, "prediction column length differs");
    Population p = *this;
    p.prediction_ = std::move(predictions);
    return p;
  }

  Population with_labeled(Flags labeled) const {
    require(labeled.size() == size(), ErrorKind::DomainError, "labeled column length differs");
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      if (labeled[i] && !(std::isfinite(prediction_[i]) && std::isfinite(outcome_[i])))
        fail(ErrorKind::MissingPrediction, "record " + ids()[i] + " has no stored prediction to reveal");
    }
    Population p = *this;
    p.labeled_ = std::move(labeled);
    return p;
  }

  Population with_direction(Direction d) const {
    Population p = *this;
    p.direction_ = d;
    return p;
  }

  friend bool operator==(const Population& a, const Population& b) {
    auto same_double = [](const std::vector<double>& x, const std::vector<double>& y) {
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (std::isnan(x[i]) && std::isnan(y[i])) continue;
        if (x[i] != y[i]) return false;
      }
      return true;
    };
    return a.direction_ == b.direction_ && same_double(a.outcome_, b.outcome_) &&
           same_double(a.prediction_, b.prediction_) && a.labeled_ == b.labeled_ &&
           (a.attributes_ == b.attributes_ || *a.attributes_ == *b.attributes_);
  }

 private:
  std::vector<double> outcome_;
  std::vector<double> prediction_;
  Flags labeled_;
  Direction direction_;
  std::shared_ptr<const PopulationAttributes> attributes_;
};

// ---------------------------------------------------------------------------
// Ingestion

/// Column mapping for delimited-text ingestion. Every column that is not
/// mapped to a role is kept as a covariate.
struct Schema {
  std::string outcome_col = "outcome";
  std::string prediction_col = "prediction";
  std::optional<std::string> labeled_col;
  std::vector<std::string> group_cols;
  std::optional<std::string> id_col;
  std::optional<std::string> weight_col;
  char delimiter = 0;  // 0: autodetect comma/tab from the header row
  std::string missing = "";  // sentinel treated like an empty field
  Direction direction = Direction::HigherIsRisk;
  std::map<std::string, std::string> metadata;
};

namespace detail {

// One record per line; fields may be double-quoted with "" as the escape.
inline std::vector<std::string> split_delimited(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == delim) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::optional<bool> parse_flag(std::string_view raw) {
  const std::string v = lower(trim(raw));
  if (v == "1" || v == "true" || v == "yes" || v == "t" || v == "y") return true;
  if (v == "0" || v == "false" || v == "no" || v == "f" || v == "n" || v.empty()) return false;
  return std::nullopt;
}

inline std::string quote_field(const std::string& s, char delim) {
  if (s.find(delim) == std::string::npos && s.find('"') == std::string::npos && s.find('\n') == std::string::npos)
    return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

/// Parses delimited text with a header row into a Population, one record per
/// row in file order. Row numbers in errors are 1-based data rows.
inline Population load_population(std::istream& in, const Schema& schema) {
  std::string header_line;
  while (std::getline(in, header_line)) {
    if (!trim(header_line).empty()) break;
  }
  require(!trim(header_line).empty(), ErrorKind::EmptyPopulation, "input has no header row");
  if (header_line.size() >= 3 && header_line.compare(0, 3, "\xEF\xBB\xBF") == 0) header_line.erase(0, 3);

  char delim = schema.delimiter;
  if (delim == 0) {
    const bool has_tab = header_line.find('\t') != std::string::npos;
    const bool has_comma = header_line.find(',') != std::string::npos;
    delim = (has_tab && !has_comma) ? '\t' : ',';
  }
  std::vector<std::string> header = detail::split_delimited(header_line, delim);
  for (auto& h : header) h = std::string(trim(h));

  auto find_col = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorKind::MissingColumn, "column '" + name + "' not found in header");
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t outcome_col = find_col(schema.outcome_col);
  const std::size_t prediction_col = find_col(schema.prediction_col);
  const std::optional<std::size_t> labeled_col =
      schema.labeled_col ? std::optional(find_col(*schema.labeled_col)) : std::nullopt;
  const std::optional<std::size_t> id_col = schema.id_col ? std::optional(find_col(*schema.id_col)) : std::nullopt;
  const std::optional<std::size_t> weight_col =
      schema.weight_col ? std::optional(find_col(*schema.weight_col)) : std::nullopt;
  std::vector<std::size_t> group_cols;
  for (const auto& g : schema.group_cols) group_cols.push_back(find_col(g));

  std::vector<bool> role(header.size(), false);
  role[outcome_col] = role[prediction_col] = true;
  if (labeled_col) role[*labeled_col] = true;
  if (id_col) role[*id_col] = true;
  if (weight_col) role[*weight_col] = true;
  for (auto g : group_cols) role[g] = true;

  PopulationColumns cols;
  cols.direction = schema.direction;
  auto& attr = cols.attributes;
  attr.metadata = schema.metadata;
  std::vector<std::size_t> covariate_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (role[c]) continue;
    covariate_cols.push_back(c);
    attr.covariate_names.push_back(header[c]);
  }
  attr.covariates.resize(covariate_cols.size());
  attr.group_names = schema.group_cols;
  attr.groups.resize(group_cols.size());
  if (weight_col) attr.weights.emplace();

  auto is_missing = [&](std::string_view raw) {
    const auto v = trim(raw);
    return v.empty() || (!schema.missing.empty() && v == schema.missing);
  };

  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    std::vector<std::string> f = detail::split_delimited(line, delim);
    if (f.size() != header.size())
      throw RowError(ErrorKind::MalformedValue, row,
                     "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));

    bool labeled = true;
    if (labeled_col) {
      auto flag = detail::parse_flag(f[*labeled_col]);
      if (!flag) throw RowError(ErrorKind::MalformedValue, row, "labeled flag '" + f[*labeled_col] + "' is not boolean");
      labeled = *flag;
    }
    auto numeric = [&](std::size_t col, const std::string& what) {
      if (auto v = parse_double(f[col])) return *v;
      if (labeled) throw RowError(ErrorKind::MalformedValue, row, what + " '" + f[col] + "' is not a finite number");
      return std::nan("");
    };
    cols.outcome.push_back(numeric(outcome_col, "outcome"));
    cols.prediction.push_back(numeric(prediction_col, "prediction"));
    cols.labeled.push_back(labeled ? 1 : 0);

    if (id_col) attr.ids.push_back(std::string(trim(f[*id_col])));
    if (weight_col) {
      auto w = parse_double(f[*weight_col]);
      if (!w) throw RowError(ErrorKind::MalformedValue, row, "weight '" + f[*weight_col] + "' is not a finite number");
      attr.weights->push_back(*w);
    }
    for (std::size_t g = 0; g < group_cols.size(); ++g) {
      auto flag = detail::parse_flag(f[group_cols[g]]);
      if (!flag)
        throw RowError(ErrorKind::MalformedValue, row,
                       "group flag '" + f[group_cols[g]] + "' in column " + header[group_cols[g]] + " is not boolean");
      attr.groups[g].push_back(*flag ? 1 : 0);
    }
    for (std::size_t c = 0; c < covariate_cols.size(); ++c) {
      const std::string& raw = f[covariate_cols[c]];
      if (is_missing(raw))
        attr.covariates[c].push_back(std::nullopt);
      else
        attr.covariates[c].push_back(std::string(trim(raw)));
    }
  }
  require(row > 0, ErrorKind::EmptyPopulation, "input has a header but no data rows");
  return Population(std::move(cols));
}

/// Schema that reads back what write_population emits.
inline Schema round_trip_schema(const Population& pop) {
  Schema s;
  s.outcome_col = "outcome";
  s.prediction_col = "prediction";
  s.labeled_col = "labeled";
  s.id_col = "id";
  s.group_cols = pop.attributes().group_names;
  if (pop.attributes().weights) s.weight_col = "weight";
  s.delimiter = ',';
  s.direction = pop.direction();
  s.metadata = pop.metadata();
  return s;
}

/// Writes the ingestion format: id, outcome, prediction, labeled, covariates,
/// groups, then weight when present. Numbers use the shortest round-trip form.
inline void write_population(std::ostream& out, const Population& pop) {
  const auto& a = pop.attributes();
  const char d = ',';
  out << "id,outcome,prediction,labeled";
  for (const auto& c : a.covariate_names) out << d << detail::quote_field(c, d);
  for (const auto& g : a.group_names) out << d << detail::quote_field(g, d);
  if (a.weights) out << d << "weight";
  out << '\n';
  auto num = [](double v) { return std::isfinite(v) ? format_double(v) : std::string(); };
  for (std::size_t i = 0; i < pop.size(); ++i) {
    out << detail::quote_field(a.ids[i], d) << d << num(pop.outcome(i)) << d << num(pop.prediction(i)) << d
        << (pop.is_labeled(i) ? 1 : 0);
    for (const auto& col : a.covariates) out << d << (col[i] ? detail::quote_field(*col[i], d) : std::string());
    for (const auto& g : a.groups) out << d << (g[i] ? 1 : 0);
    if (a.weights) out << d << format_double((*a.weights)[i]);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Ranking and masks

/// Record indices in allocation priority order. Prediction ranks labeled
/// records only; Outcome ranks every record. higher_is_risk sorts descending,
/// lower_is_risk ascending, ties by record order.
inline std::vector<std::size_t> priority_order(const Population& pop, ScoreField field) {
  const auto& score = field == ScoreField::Prediction ? pop.predictions() : pop.outcomes();
  std::vector<std::size_t> idx;
  idx.reserve(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i)
    if (field == ScoreField::Outcome || pop.is_labeled(i)) idx.push_back(i);
  if (pop.direction() == Direction::HigherIsRisk)
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  else
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  return idx;
}

/// Band of `fraction * N` labeled records centred on a cutoff rank of the
/// prediction ordering (rank 0 is the highest priority). The window covers
/// ranks [cutoff - w/2, cutoff - w/2 + w) and is shifted inward when it would
/// leave the ranked range.
struct RankBand {
  std::size_t cutoff_rank = 0;
  double fraction = 0.1;
};

/// Records whose prediction lies strictly within epsilon of tau.
struct ScoreBand {
  double tau = 0.0;
  double epsilon = 0.0;
};

inline Mask prediction_band_mask(const Population& pop, const RankBand& band) {
  if (!(band.fraction > 0.0 && band.fraction <= 1.0))
    fail(ErrorKind::InvalidBandwidth, "band fraction must lie in (0, 1], got " + format_double(band.fraction));
  const auto order = priority_order(pop, ScoreField::Prediction);
  const std::size_t ranked = order.size();
  const std::size_t width = std::min(count_floor(band.fraction, pop.size()), ranked);
  const std::size_t half = width / 2;
  std::size_t lo = band.cutoff_rank > half ? band.cutoff_rank - half : 0;
  lo = std::min(lo, ranked - width);
  Mask m = Mask::none(pop.size(), "rank band " + format_double(band.fraction) + " around rank " +
                                      std::to_string(band.cutoff_rank));
  for (std::size_t r = lo; r < lo + width; ++r) m.member[order[r]] = 1;
  return m;
}

inline Mask prediction_band_mask(const Population& pop, const ScoreBand& band) {
  if (!(band.epsilon > 0.0) || !std::isfinite(band.epsilon))
    fail(ErrorKind::InvalidBandwidth, "score band epsilon must be positive, got " + format_double(band.epsilon));
  Mask m = Mask::none(pop.size(), "|p - " + format_double(band.tau) + "| < " + format_double(band.epsilon));
  for (std::size_t i = 0; i < pop.size(); ++i)
    if (pop.is_labeled(i) && std::fabs(pop.prediction(i) - band.tau) < band.epsilon) m.member[i] = 1;
  return m;
}

/// Root-mean-squared prediction error over the labeled records of a mask.
inline double rmse(const Population& pop, const Mask& mask) {
  require(mask.size() == pop.size(), ErrorKind::DomainError, "mask size differs from population size");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (!mask[i] || !pop.is_labeled(i)) continue;
    const double e = pop.prediction(i) - pop.outcome(i);
    sum += e * e;
    ++n;
  }
  require(n > 0, ErrorKind::EmptyMask, "mask '" + mask.description + "' selects no labeled record");
  return std::sqrt(sum / static_cast<double>(n));
}

inline double rmse(const Population& pop) { return rmse(pop, Mask::all(pop.size())); }

}  // namespace rvp
