#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "lmforest/csv.hpp"
#include "lmforest/errors.hpp"
#include "lmforest/lmm.hpp"
#include "lmforest/survival.hpp"

namespace lmforest {

// Long-format repeated measures: per subject and marker, a time-sorted
// series with marker-wise missing values already removed.
struct LongitudinalTable {
  std::vector<std::string> marker_names;
  std::vector<std::string> subject_ids;  // first-appearance order
  // series[subject][marker]
  std::vector<std::vector<MeasurementSeries>> series;

  std::size_t n_markers() const { return marker_names.size(); }
  std::size_t n_subjects() const { return subject_ids.size(); }
  bool empty() const { return subject_ids.empty(); }

  int subject_index(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? -1 : it->second;
  }

  void rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < subject_ids.size(); ++i) {
      index_[subject_ids[i]] = int(i);
    }
  }

 private:
  std::unordered_map<std::string, int> index_;
};

// Wide-format time-fixed predictors, one row per subject. Numeric values
// use NaN for missing; factor values use -1.
struct FixedTable {
  struct NumericColumn {
    std::string name;
    std::vector<double> values;
  };
  struct FactorColumn {
    std::string name;
    std::vector<std::string> levels;  // closed, declared set
    std::vector<int> values;
  };

  std::vector<std::string> subject_ids;
  std::vector<NumericColumn> numeric;
  std::vector<FactorColumn> factors;

  std::size_t n_predictors() const { return numeric.size() + factors.size(); }
  bool empty() const { return subject_ids.empty(); }

  int subject_index(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? -1 : it->second;
  }

  void rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < subject_ids.size(); ++i) {
      index_[subject_ids[i]] = int(i);
    }
  }

 private:
  std::unordered_map<std::string, int> index_;
};

// Declares how fixed-predictor columns are typed.
struct FixedSchema {
  std::vector<std::string> numeric_columns;
  struct Factor {
    std::string name;
    std::vector<std::string> levels;
  };
  std::vector<Factor> factor_columns;
};

enum class OutcomeMode { kNumeric, kFactor, kSurvival };

// Tagged union over the three outcome kinds, one entry per subject.
struct Outcome {
  OutcomeMode mode = OutcomeMode::kNumeric;
  std::vector<std::string> subject_ids;

  std::vector<double> numeric_value;  // numeric mode

  std::vector<int> category;        // factor mode, index into levels
  std::vector<std::string> levels;  // factor mode

  std::vector<double> time;   // survival mode
  std::vector<int> cause;     // survival mode, 0 = censored
  std::vector<int> causes;    // distinct positive causes, ascending
  int cause_of_interest = 1;  // survival mode

  std::size_t n_subjects() const { return subject_ids.size(); }
};

// Mixed-model specification for one marker.
struct LmmSpec {
  std::string marker;
  LmmDesign design;
};

enum class SplitSampling { kQuantile, kSample };

struct Hyperparams {
  int ntree = 200;
  int mtry = 0;  // 0 = use round(sqrt(P+Q)) once P and Q are known
  int nodesize = 1;
  int minsplit = 2;  // survival only
  SplitSampling nsplit_option = SplitSampling::kQuantile;
  std::uint64_t seed = 0;
  std::optional<double> ibs_min;
  std::optional<double> ibs_max;
};

// ---------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------

inline LongitudinalTable ingest_longitudinal(
    const DelimitedTable& rows, const std::string& id_column,
    const std::string& time_column,
    const std::vector<std::string>& marker_columns) {
  if (rows.rows.empty()) {
    throw DataError("EmptyTable", "longitudinal input has no rows");
  }
  const int id_idx = rows.require_column(id_column);
  const int time_idx = rows.require_column(time_column);
  std::vector<int> marker_idx;
  for (const auto& m : marker_columns) {
    marker_idx.push_back(rows.require_column(m));
  }

  LongitudinalTable table;
  table.marker_names = marker_columns;
  std::unordered_map<std::string, int> subject_of;

  struct Obs {
    double time;
    double value;
  };
  // per subject, per marker, raw observations
  std::vector<std::vector<std::vector<Obs>>> raw;

  for (const auto& row : rows.rows) {
    const std::string& id = row[std::size_t(id_idx)];
    if (cell_missing(id)) {
      throw DataError("MissingId", "row without a subject id");
    }
    bool time_missing = false;
    const double t = parse_real(row[std::size_t(time_idx)], &time_missing);
    if (time_missing) continue;  // rows without a time are rejected
    if (!std::isfinite(t) || t < 0) {
      throw DataError("BadTime", "times must be finite and non-negative");
    }
    auto [it, inserted] = subject_of.try_emplace(id, int(raw.size()));
    if (inserted) {
      table.subject_ids.push_back(id);
      raw.emplace_back(marker_columns.size());
    }
    auto& per_marker = raw[std::size_t(it->second)];
    for (std::size_t m = 0; m < marker_idx.size(); ++m) {
      bool missing = false;
      const double v = parse_real(row[std::size_t(marker_idx[m])], &missing);
      if (missing) continue;  // marker-wise missing values are allowed
      if (!std::isfinite(v)) {
        throw DataError("BadValue", "non-finite value for marker '" +
                                        marker_columns[m] + "'");
      }
      per_marker[m].push_back({t, v});
    }
  }

  table.series.resize(raw.size());
  for (std::size_t s = 0; s < raw.size(); ++s) {
    table.series[s].resize(marker_columns.size());
    for (std::size_t m = 0; m < marker_columns.size(); ++m) {
      auto& obs = raw[s][m];
      std::stable_sort(obs.begin(), obs.end(),
                       [](const Obs& a, const Obs& b) { return a.time < b.time; });
      for (std::size_t k = 1; k < obs.size(); ++k) {
        if (obs[k].time == obs[k - 1].time) {
          throw DataError("DuplicateMeasurement",
                          "duplicate (" + table.subject_ids[s] + ", " +
                              format_real(obs[k].time) + ", " +
                              marker_columns[m] + ")");
        }
      }
      auto& series = table.series[s][m];
      for (const auto& o : obs) {
        series.time.push_back(o.time);
        series.value.push_back(o.value);
      }
    }
  }
  table.rebuild_index();
  return table;
}

inline FixedTable ingest_fixed(const DelimitedTable& rows,
                               const std::string& id_column,
                               const FixedSchema& schema) {
  const int id_idx = rows.require_column(id_column);
  FixedTable table;
  for (const auto& name : schema.numeric_columns) {
    rows.require_column(name);
    table.numeric.push_back({name, {}});
  }
  for (const auto& f : schema.factor_columns) {
    rows.require_column(f.name);
    if (f.levels.empty()) {
      throw DataError("BadSchema",
                      "factor '" + f.name + "' has no declared levels");
    }
    table.factors.push_back({f.name, f.levels, {}});
  }

  std::unordered_map<std::string, int> seen;
  for (const auto& row : rows.rows) {
    const std::string& id = row[std::size_t(id_idx)];
    if (cell_missing(id)) {
      throw DataError("MissingId", "row without a subject id");
    }
    if (!seen.try_emplace(id, int(table.subject_ids.size())).second) {
      throw DataError("DuplicateSubject",
                      "subject '" + id + "' appears more than once");
    }
    table.subject_ids.push_back(id);
    for (std::size_t c = 0; c < schema.numeric_columns.size(); ++c) {
      const auto& cell =
          row[std::size_t(rows.column_index(schema.numeric_columns[c]))];
      bool missing = false;
      const double v = parse_real(cell, &missing);
      if (!missing && !std::isfinite(v)) {
        throw DataError("BadValue", "non-finite value in column '" +
                                        schema.numeric_columns[c] + "'");
      }
      table.numeric[c].values.push_back(v);
    }
    for (std::size_t c = 0; c < schema.factor_columns.size(); ++c) {
      const auto& spec = schema.factor_columns[c];
      const auto& cell = row[std::size_t(rows.column_index(spec.name))];
      if (cell_missing(cell)) {
        table.factors[c].values.push_back(-1);
        continue;
      }
      auto it = std::find(spec.levels.begin(), spec.levels.end(), cell);
      if (it == spec.levels.end()) {
        throw DataError("UnknownLevel", "value '" + cell + "' is not a level of '" +
                                            spec.name + "'");
      }
      table.factors[c].values.push_back(int(it - spec.levels.begin()));
    }
  }
  table.rebuild_index();
  return table;
}

// ---------------------------------------------------------------------
// Validated dataset
// ---------------------------------------------------------------------

// Immutable bundle of inputs after cross-validation of all invariants.
// Subject order follows the outcome table; lookups into the longitudinal
// and fixed tables are resolved up front.
struct ValidatedDataset {
  LongitudinalTable longitudinal;
  FixedTable fixed;
  Outcome outcome;
  std::vector<LmmSpec> specs;  // one per marker, marker order
  Hyperparams hp;

  std::vector<int> long_row;   // per outcome subject, -1 if absent
  std::vector<int> fixed_row;  // per outcome subject, -1 if absent

  int n_subjects() const { return int(outcome.subject_ids.size()); }
  int n_markers() const { return int(longitudinal.marker_names.size()); }
  int n_numeric() const { return int(fixed.numeric.size()); }
  int n_factors() const { return int(fixed.factors.size()); }
  int n_fixed_predictors() const { return n_numeric() + n_factors(); }
  int n_predictors() const { return n_markers() + n_fixed_predictors(); }

  // Empty series shared by subjects absent from the longitudinal table.
  const MeasurementSeries& series(int subject, int marker) const {
    static const MeasurementSeries kEmpty;
    const int row = long_row[std::size_t(subject)];
    if (row < 0) return kEmpty;
    return longitudinal.series[std::size_t(row)][std::size_t(marker)];
  }

  double numeric_value(int subject, int j) const {
    const int row = fixed_row[std::size_t(subject)];
    if (row < 0) return std::numeric_limits<double>::quiet_NaN();
    return fixed.numeric[std::size_t(j)].values[std::size_t(row)];
  }

  int factor_value(int subject, int j) const {
    const int row = fixed_row[std::size_t(subject)];
    if (row < 0) return -1;
    return fixed.factors[std::size_t(j)].values[std::size_t(row)];
  }

  SurvSample survival_sample(const std::vector<int>& subjects) const {
    SurvSample s;
    s.time.reserve(subjects.size());
    s.cause.reserve(subjects.size());
    for (int i : subjects) {
      s.time.push_back(outcome.time[std::size_t(i)]);
      s.cause.push_back(outcome.cause[std::size_t(i)]);
    }
    return s;
  }
};

// Stable FNV-1a content hash of a validated dataset; recorded in model
// archives so evaluation commands can detect mismatched data.
inline std::string dataset_hash(const ValidatedDataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_bytes = [&h](const void* data, std::size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  auto mix_str = [&](const std::string& s) {
    mix_bytes(s.data(), s.size());
    mix_bytes("\0", 1);
  };
  auto mix_real = [&](double x) { mix_bytes(&x, sizeof(x)); };
  auto mix_int = [&](std::int64_t x) { mix_bytes(&x, sizeof(x)); };

  mix_int(int(ds.outcome.mode));
  for (const auto& id : ds.outcome.subject_ids) mix_str(id);
  for (double v : ds.outcome.numeric_value) mix_real(v);
  for (int c : ds.outcome.category) mix_int(c);
  for (const auto& l : ds.outcome.levels) mix_str(l);
  for (double t : ds.outcome.time) mix_real(t);
  for (int c : ds.outcome.cause) mix_int(c);
  mix_int(ds.outcome.cause_of_interest);

  for (const auto& name : ds.longitudinal.marker_names) mix_str(name);
  for (std::size_t s = 0; s < ds.longitudinal.subject_ids.size(); ++s) {
    mix_str(ds.longitudinal.subject_ids[s]);
    for (const auto& series : ds.longitudinal.series[s]) {
      mix_int(std::int64_t(series.size()));
      for (std::size_t k = 0; k < series.size(); ++k) {
        mix_real(series.time[k]);
        mix_real(series.value[k]);
      }
    }
  }

  for (const auto& id : ds.fixed.subject_ids) mix_str(id);
  for (const auto& c : ds.fixed.numeric) {
    mix_str(c.name);
    for (double v : c.values) mix_real(v);
  }
  for (const auto& c : ds.fixed.factors) {
    mix_str(c.name);
    for (const auto& l : c.levels) mix_str(l);
    for (int v : c.values) mix_int(v);
  }

  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
  return buf;
}

inline ValidatedDataset validate_inputs(LongitudinalTable longitudinal,
                                        FixedTable fixed, Outcome outcome,
                                        std::vector<LmmSpec> specs,
                                        Hyperparams hp) {
  // Marker/spec coverage, both directions.
  for (const auto& spec : specs) {
    spec.design.validate();
    if (std::find(longitudinal.marker_names.begin(),
                  longitudinal.marker_names.end(),
                  spec.marker) == longitudinal.marker_names.end()) {
      throw DataError("UnknownMarker",
                      "model given for unknown marker '" + spec.marker + "'");
    }
  }
  std::vector<LmmSpec> ordered;
  for (const auto& name : longitudinal.marker_names) {
    auto it = std::find_if(specs.begin(), specs.end(), [&](const LmmSpec& s) {
      return s.marker == name;
    });
    if (it == specs.end()) {
      throw DataError("MissingModel",
                      "no mixed-model specification for marker '" + name + "'");
    }
    ordered.push_back(*it);
  }

  if (outcome.subject_ids.empty()) {
    throw DataError("EmptyTable", "outcome has no subjects");
  }
  {
    std::unordered_map<std::string, int> seen;
    for (const auto& id : outcome.subject_ids) {
      if (!seen.try_emplace(id, 1).second) {
        throw DataError("DuplicateSubject",
                        "outcome lists subject '" + id + "' twice");
      }
    }
  }

  switch (outcome.mode) {
    case OutcomeMode::kNumeric:
      if (outcome.numeric_value.size() != outcome.subject_ids.size()) {
        throw DataError("SizeMismatch", "outcome values and ids differ");
      }
      for (double v : outcome.numeric_value) {
        if (!std::isfinite(v)) {
          throw DataError("BadOutcome", "numeric outcome must be finite");
        }
      }
      break;
    case OutcomeMode::kFactor: {
      if (outcome.category.size() != outcome.subject_ids.size()) {
        throw DataError("SizeMismatch", "outcome values and ids differ");
      }
      if (outcome.levels.size() < 2) {
        throw DataError("BadOutcome",
                        "categorical outcome needs at least two levels");
      }
      for (int c : outcome.category) {
        if (c < 0 || c >= int(outcome.levels.size())) {
          throw DataError("BadOutcome", "category index out of range");
        }
      }
      break;
    }
    case OutcomeMode::kSurvival: {
      if (outcome.time.size() != outcome.subject_ids.size() ||
          outcome.cause.size() != outcome.subject_ids.size()) {
        throw DataError("SizeMismatch", "outcome values and ids differ");
      }
      std::vector<int> causes;
      for (std::size_t i = 0; i < outcome.time.size(); ++i) {
        if (!(outcome.time[i] > 0) || !std::isfinite(outcome.time[i])) {
          throw DataError("BadOutcome", "event times must be positive finite");
        }
        if (outcome.cause[i] < 0) {
          throw DataError("BadOutcome", "cause codes must be >= 0");
        }
        if (outcome.cause[i] > 0) causes.push_back(outcome.cause[i]);
      }
      std::sort(causes.begin(), causes.end());
      causes.erase(std::unique(causes.begin(), causes.end()), causes.end());
      outcome.causes = causes;
      if (causes.empty()) {
        throw DataError("BadOutcome", "survival outcome has no events");
      }
      if (std::find(causes.begin(), causes.end(), outcome.cause_of_interest) ==
          causes.end()) {
        throw DataError("UnknownCause",
                        "cause of interest never occurs in the data");
      }
      break;
    }
  }

  ValidatedDataset ds;
  ds.long_row.resize(outcome.subject_ids.size());
  ds.fixed_row.resize(outcome.subject_ids.size());
  longitudinal.rebuild_index();
  fixed.rebuild_index();
  for (std::size_t i = 0; i < outcome.subject_ids.size(); ++i) {
    const auto& id = outcome.subject_ids[i];
    ds.long_row[i] = longitudinal.subject_index(id);
    ds.fixed_row[i] = fixed.subject_index(id);
    if (ds.long_row[i] < 0 && ds.fixed_row[i] < 0) {
      throw DataError("UnknownSubject",
                      "outcome subject '" + id + "' has no predictor data");
    }
  }

  for (const auto& c : fixed.factors) {
    if (c.levels.size() > 64) {
      throw DataError("TooManyLevels", "factor '" + c.name +
                                           "' declares more than 64 levels");
    }
  }

  const int q = int(longitudinal.marker_names.size());
  const int p = int(fixed.n_predictors());
  if (p + q < 1) {
    throw DataError("NoPredictors", "at least one predictor is required");
  }
  if (hp.mtry == 0) {
    hp.mtry = std::max(1, int(std::llround(std::sqrt(double(p + q)))));
  }
  if (hp.mtry < 1 || hp.mtry > p + q) {
    throw DataError("MtryTooLarge", "mtry must lie in [1, P+Q] = [1, " +
                                        std::to_string(p + q) + "]");
  }
  if (hp.nodesize < 1) {
    throw DataError("BadHyperparam", "nodesize must be >= 1");
  }
  if (hp.minsplit < 2) {
    throw DataError("BadHyperparam", "minsplit must be >= 2");
  }
  if (hp.ntree < 1) {
    throw DataError("BadHyperparam", "ntree must be >= 1");
  }
  if (hp.ibs_min && hp.ibs_max && !(*hp.ibs_min < *hp.ibs_max)) {
    throw DataError("BadHyperparam", "IBS range requires tau1 < tau2");
  }

  ds.longitudinal = std::move(longitudinal);
  ds.fixed = std::move(fixed);
  ds.outcome = std::move(outcome);
  ds.specs = std::move(ordered);
  ds.hp = hp;
  ds.longitudinal.rebuild_index();
  ds.fixed.rebuild_index();
  return ds;
}

// ---------------------------------------------------------------------
// Emission (round-trip of the ingestion formats)
// ---------------------------------------------------------------------

inline DelimitedTable emit_longitudinal(const LongitudinalTable& table,
                                        const std::string& id_column = "id",
                                        const std::string& time_column =
                                            "time") {
  DelimitedTable out;
  out.columns.push_back(id_column);
  out.columns.push_back(time_column);
  for (const auto& m : table.marker_names) out.columns.push_back(m);
  for (std::size_t s = 0; s < table.subject_ids.size(); ++s) {
    // Union of this subject's measurement times across markers.
    std::vector<double> times;
    for (const auto& series : table.series[s]) {
      times.insert(times.end(), series.time.begin(), series.time.end());
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    for (double t : times) {
      std::vector<std::string> row;
      row.push_back(table.subject_ids[s]);
      row.push_back(format_real(t));
      for (const auto& series : table.series[s]) {
        auto it = std::lower_bound(series.time.begin(), series.time.end(), t);
        if (it != series.time.end() && *it == t) {
          row.push_back(format_real(
              series.value[std::size_t(it - series.time.begin())]));
        } else {
          row.push_back("NA");
        }
      }
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

inline DelimitedTable emit_fixed(const FixedTable& table,
                                 const std::string& id_column = "id") {
  DelimitedTable out;
  out.columns.push_back(id_column);
  for (const auto& c : table.numeric) out.columns.push_back(c.name);
  for (const auto& c : table.factors) out.columns.push_back(c.name);
  for (std::size_t s = 0; s < table.subject_ids.size(); ++s) {
    std::vector<std::string> row;
    row.push_back(table.subject_ids[s]);
    for (const auto& c : table.numeric) row.push_back(format_real(c.values[s]));
    for (const auto& c : table.factors) {
      row.push_back(c.values[s] < 0 ? "NA"
                                    : c.levels[std::size_t(c.values[s])]);
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline DelimitedTable emit_outcome(const Outcome& outcome,
                                   const std::string& id_column = "id") {
  DelimitedTable out;
  out.columns.push_back(id_column);
  switch (outcome.mode) {
    case OutcomeMode::kNumeric:
      out.columns.push_back("Y");
      break;
    case OutcomeMode::kFactor:
      out.columns.push_back("Y");
      break;
    case OutcomeMode::kSurvival:
      out.columns.push_back("time");
      out.columns.push_back("event");
      break;
  }
  for (std::size_t i = 0; i < outcome.subject_ids.size(); ++i) {
    std::vector<std::string> row;
    row.push_back(outcome.subject_ids[i]);
    switch (outcome.mode) {
      case OutcomeMode::kNumeric:
        row.push_back(format_real(outcome.numeric_value[i]));
        break;
      case OutcomeMode::kFactor:
        row.push_back(outcome.levels[std::size_t(outcome.category[i])]);
        break;
      case OutcomeMode::kSurvival:
        row.push_back(format_real(outcome.time[i]));
        row.push_back(std::to_string(outcome.cause[i]));
        break;
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace lmforest
