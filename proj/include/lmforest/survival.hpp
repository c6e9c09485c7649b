#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "lmforest/errors.hpp"

namespace lmforest {

// Right-continuous step function: value is 0 (or `init`) before the first
// jump time and values[j] on [times[j], times[j+1]).
struct StepFunction {
  std::vector<double> times;   // ascending, distinct
  std::vector<double> values;  // value from times[j] onward
  double init = 0.0;

  double at(double t) const {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return init;
    return values[std::size_t(it - times.begin()) - 1];
  }

  // Left limit: value just before t.
  double at_left(double t) const {
    auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return init;
    return values[std::size_t(it - times.begin()) - 1];
  }
};

// Cumulative incidence curve. Starts at 0, non-decreasing, bounded by 1.
struct CifCurve : StepFunction {
  CifCurve() { init = 0.0; }
};

// Right-censored survival data: time > 0 and cause code per subject
// (0 = censored, 1..K = event causes).
struct SurvSample {
  std::vector<double> time;
  std::vector<int> cause;

  std::size_t size() const { return time.size(); }
};

namespace detail {

// Per distinct observed time: risk-set size, any-cause event count,
// per-cause event counts and censoring count.
struct RiskRow {
  double time = 0;
  int at_risk = 0;
  int events = 0;  // any cause
  int censored = 0;
  std::map<int, int> by_cause;
};

inline std::vector<RiskRow> risk_table(const SurvSample& s) {
  std::map<double, RiskRow> rows;
  for (std::size_t i = 0; i < s.size(); ++i) {
    RiskRow& r = rows[s.time[i]];
    r.time = s.time[i];
    if (s.cause[i] == 0) {
      r.censored += 1;
    } else {
      r.events += 1;
      r.by_cause[s.cause[i]] += 1;
    }
  }
  std::vector<RiskRow> out;
  out.reserve(rows.size());
  int remaining = int(s.size());
  for (auto& [t, r] : rows) {
    r.at_risk = remaining;
    remaining -= r.events + r.censored;
    out.push_back(r);
  }
  return out;
}

}  // namespace detail

// All-cause Kaplan-Meier survival curve S(t).
inline StepFunction km_survival(const SurvSample& s) {
  StepFunction f;
  f.init = 1.0;
  double surv = 1.0;
  for (const auto& r : detail::risk_table(s)) {
    if (r.events == 0) continue;
    surv *= 1.0 - double(r.events) / double(r.at_risk);
    f.times.push_back(r.time);
    f.values.push_back(surv);
  }
  return f;
}

// Kaplan-Meier of the censoring distribution G(t) = P(C > t). Events are
// taken to precede censorings at tied timestamps, so the censoring risk
// set at t excludes subjects with an event at t.
inline StepFunction censoring_km(const SurvSample& s) {
  StepFunction f;
  f.init = 1.0;
  double surv = 1.0;
  for (const auto& r : detail::risk_table(s)) {
    if (r.censored == 0) continue;
    const int risk = r.at_risk - r.events;
    surv *= risk > 0 ? 1.0 - double(r.censored) / double(risk) : 0.0;
    f.times.push_back(r.time);
    f.values.push_back(surv);
  }
  return f;
}

// Nelson-Aalen cumulative hazard mapped to an incidence curve through
// CIF(t) = 1 - exp(-H(t)). Single-cause samples only.
inline CifCurve nelson_aalen_cif(const SurvSample& s) {
  for (int c : s.cause) {
    if (c != 0 && c != 1) {
      throw ModelError("MultipleCauses",
                       "nelson_aalen_cif requires a single-cause sample");
    }
  }
  CifCurve cif;
  double hazard = 0.0;
  for (const auto& r : detail::risk_table(s)) {
    if (r.events == 0) continue;
    hazard += double(r.events) / double(r.at_risk);
    cif.times.push_back(r.time);
    cif.values.push_back(1.0 - std::exp(-hazard));
  }
  return cif;
}

// Aalen-Johansen estimator of the cause-k cumulative incidence:
// CIF_k(t) = sum_{t_j <= t} S(t_j-) d_kj / n_j with S the all-cause KM.
inline CifCurve aalen_johansen_cif(const SurvSample& s, int cause_k) {
  CifCurve cif;
  double surv_before = 1.0;  // S(t-)
  double incidence = 0.0;
  for (const auto& r : detail::risk_table(s)) {
    auto it = r.by_cause.find(cause_k);
    if (it != r.by_cause.end()) {
      incidence += surv_before * double(it->second) / double(r.at_risk);
      cif.times.push_back(r.time);
      cif.values.push_back(incidence);
    }
    if (r.events > 0) {
      surv_before *= 1.0 - double(r.events) / double(r.at_risk);
    }
  }
  return cif;
}

namespace detail {

// (time, cause) pairs of one group sorted by time; the shared layout of
// the two-sample sweeps below.
struct SortedGroup {
  std::vector<double> time;
  std::vector<int> cause;

  explicit SortedGroup(const SurvSample& s) {
    std::vector<std::size_t> order(s.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return s.time[a] < s.time[b];
    });
    time.reserve(s.size());
    cause.reserve(s.size());
    for (std::size_t i : order) {
      time.push_back(s.time[i]);
      cause.push_back(s.cause[i]);
    }
  }
};

}  // namespace detail

// Two-group log-rank chi-square statistic (O-E)^2 / V. Zero when no
// events contribute variance.
inline double logrank_stat(const SurvSample& left, const SurvSample& right) {
  if (left.size() == 0 || right.size() == 0) {
    throw ModelError("EmptyGroup", "log-rank requires two nonempty groups");
  }
  detail::SortedGroup g[2] = {detail::SortedGroup(left),
                              detail::SortedGroup(right)};
  std::size_t pos[2] = {0, 0};

  double observed_minus_expected = 0.0;
  double variance = 0.0;
  while (pos[0] < g[0].time.size() || pos[1] < g[1].time.size()) {
    double t = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 2; ++k) {
      if (pos[k] < g[k].time.size()) t = std::min(t, g[k].time[pos[k]]);
    }
    double d[2] = {0, 0};
    double at_risk[2];
    for (int k = 0; k < 2; ++k) {
      at_risk[k] = double(g[k].time.size() - pos[k]);
      while (pos[k] < g[k].time.size() && g[k].time[pos[k]] == t) {
        if (g[k].cause[pos[k]] != 0) d[k] += 1;
        ++pos[k];
      }
    }
    const double n = at_risk[0] + at_risk[1];
    const double dtot = d[0] + d[1];
    if (dtot <= 0) continue;
    observed_minus_expected += d[0] - dtot * at_risk[0] / n;
    if (n > 1) {
      variance += dtot * (at_risk[0] / n) * (1.0 - at_risk[0] / n) *
                  (n - dtot) / (n - 1.0);
    }
  }
  if (variance <= 0.0) return 0.0;
  return observed_minus_expected * observed_minus_expected / variance;
}

// Two-sample test comparing the cause-k subdistribution hazards (rho = 0).
// The score follows Gray (1988): at each cause-k event time the classic
// at-risk count is replaced by the modified risk set
//   R_h(t) = Y_h(t) * (1 - F_hk(t-)) / S_h(t-),
// which keeps subjects failing from competing causes at risk. The score is
// normalized by the hypergeometric-form variance on the modified risk
// sets, so on single-cause data the statistic equals the log-rank one.
inline double gray_stat(const SurvSample& left, const SurvSample& right,
                        int cause_k) {
  if (left.size() == 0 || right.size() == 0) {
    throw ModelError("EmptyGroup", "Gray test requires two nonempty groups");
  }

  detail::SortedGroup g[2] = {detail::SortedGroup(left),
                              detail::SortedGroup(right)};
  std::size_t pos[2] = {0, 0};
  double km[2] = {1.0, 1.0};   // S_h(t-)
  double cif[2] = {0.0, 0.0};  // F_hk(t-)

  double score = 0.0;
  double variance = 0.0;
  while (pos[0] < g[0].time.size() || pos[1] < g[1].time.size()) {
    double t = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 2; ++k) {
      if (pos[k] < g[k].time.size()) t = std::min(t, g[k].time[pos[k]]);
    }
    double risk_mod[2];
    int at_risk[2];
    int d_k[2] = {0, 0};
    int d_all[2] = {0, 0};
    for (int k = 0; k < 2; ++k) {
      at_risk[k] = int(g[k].time.size() - pos[k]);
      while (pos[k] < g[k].time.size() && g[k].time[pos[k]] == t) {
        if (g[k].cause[pos[k]] != 0) {
          d_all[k] += 1;
          if (g[k].cause[pos[k]] == cause_k) d_k[k] += 1;
        }
        ++pos[k];
      }
      risk_mod[k] =
          km[k] > 0.0 ? double(at_risk[k]) * (1.0 - cif[k]) / km[k] : 0.0;
    }

    const int dk_tot = d_k[0] + d_k[1];
    const double r_tot = risk_mod[0] + risk_mod[1];
    if (dk_tot > 0 && r_tot > 0.0) {
      const double share = risk_mod[0] / r_tot;
      score += d_k[0] - dk_tot * share;
      if (r_tot > 1.0) {
        const double finite = std::max(0.0, (r_tot - dk_tot) / (r_tot - 1.0));
        variance += dk_tot * share * (1.0 - share) * finite;
      }
    }

    // Advance the group-wise estimators past time t.
    for (int k = 0; k < 2; ++k) {
      if (d_all[k] > 0 && at_risk[k] > 0) {
        cif[k] += km[k] * double(d_k[k]) / double(at_risk[k]);
        km[k] *= 1.0 - double(d_all[k]) / double(at_risk[k]);
      }
    }
  }
  if (variance <= 0.0) return 0.0;
  return score * score / variance;
}

// IPCW Brier score at time t for cause k:
//   BS(t) = (1/N) sum_i w_i(t) (1(T_i <= t, d_i = k) - pred_i)^2
//   w_i(t) = 1(T_i <= t, d_i > 0) / G(T_i-) + 1(T_i > t) / G(t).
// Subjects censored before t get weight 0. `degenerate_weights`, when
// given, counts subjects whose required G value was 0 (weight set to 0).
inline double brier_score(std::span<const double> predictions,
                          const SurvSample& sample, double t, int cause_k,
                          const StepFunction& censor_surv,
                          int* degenerate_weights = nullptr) {
  if (predictions.size() != sample.size()) {
    throw ModelError("SizeMismatch",
                     "one prediction per subject is required");
  }
  const double g_at_t = censor_surv.at(t);
  double total = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double ti = sample.time[i];
    const int di = sample.cause[i];
    double weight = 0.0;
    if (ti <= t && di > 0) {
      const double g = censor_surv.at_left(ti);
      if (g > 0.0) {
        weight = 1.0 / g;
      } else if (degenerate_weights) {
        ++*degenerate_weights;
      }
    } else if (ti > t) {
      if (g_at_t > 0.0) {
        weight = 1.0 / g_at_t;
      } else if (degenerate_weights) {
        ++*degenerate_weights;
      }
    }
    const double indicator = (ti <= t && di == cause_k) ? 1.0 : 0.0;
    const double resid = indicator - predictions[i];
    total += weight * resid * resid;
  }
  return total / double(sample.size());
}

// Raw time-integral of the IPCW Brier score over [tau1, tau2], trapezoid
// rule over the distinct any-cause event times in range plus both
// endpoints. Prediction curves are step-evaluated at each grid point.
inline double integrated_brier(const std::vector<CifCurve>& predictions,
                               const SurvSample& sample, int cause_k,
                               double tau1, double tau2,
                               const StepFunction& censor_surv,
                               int* degenerate_weights = nullptr) {
  if (!(tau1 < tau2)) {
    throw ModelError("BadRange", "integration requires tau1 < tau2");
  }
  std::vector<double> grid;
  grid.push_back(tau1);
  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (sample.cause[i] != 0 && sample.time[i] >= tau1 &&
        sample.time[i] <= tau2) {
      grid.push_back(sample.time[i]);
    }
  }
  grid.push_back(tau2);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.size() < 2) {
    throw ModelError("EmptyGrid", "no event times in the integration range");
  }
  bool any_event = false;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (sample.cause[i] != 0 && sample.time[i] >= tau1 &&
        sample.time[i] <= tau2) {
      any_event = true;
      break;
    }
  }
  if (!any_event) {
    throw ModelError("EmptyGrid", "no event times in the integration range");
  }

  std::vector<double> bs(grid.size());
  std::vector<double> preds(predictions.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      preds[i] = predictions[i].at(grid[j]);
    }
    bs[j] = brier_score(preds, sample, grid[j], cause_k, censor_surv,
                        degenerate_weights);
  }
  double integral = 0.0;
  for (std::size_t j = 1; j < grid.size(); ++j) {
    integral += 0.5 * (bs[j] + bs[j - 1]) * (grid[j] - grid[j - 1]);
  }
  return integral;
}

// Default upper integration bound: largest any-cause event time.
inline double max_event_time(const SurvSample& sample) {
  double tmax = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (sample.cause[i] != 0) tmax = std::max(tmax, sample.time[i]);
  }
  return tmax;
}

}  // namespace lmforest
