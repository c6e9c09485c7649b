#pragma once

// Independent straight-line oracles used by the tests. Each routine
// re-derives its quantity directly from the defining formula with its own
// code path (plain loops, full-pivot inverses, per-time recomputation) so
// that agreement with the library is evidence, not tautology.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "lmforest/data.hpp"
#include "lmforest/lmm.hpp"
#include "lmforest/survival.hpp"

namespace oracle {

// ---------------------------------------------------------------------
// Mixed model
// ---------------------------------------------------------------------

// Direct evaluation of the marginal Gaussian log-likelihood
//   -1/2 sum_i [ n_i log 2pi + log|V_i| + r_i' V_i^-1 r_i ],
// V_i = Z B Z' + s2 I, using full-pivot LU for both inverse and
// determinant.
inline double marginal_loglik(const lmforest::LmmDesign& design,
                              const std::vector<lmforest::MeasurementSeries>&
                                  series,
                              const Eigen::VectorXd& beta,
                              const Eigen::MatrixXd& re_cov, double sigma2) {
  double ll = 0.0;
  for (const auto& s : series) {
    if (s.empty()) continue;
    const Eigen::Index n = Eigen::Index(s.size());
    Eigen::MatrixXd x = design.fixed_matrix(s.time);
    Eigen::MatrixXd z = design.random_matrix(s.time);
    Eigen::VectorXd y(n);
    for (Eigen::Index k = 0; k < n; ++k) y[k] = s.value[std::size_t(k)];
    Eigen::MatrixXd v = z * re_cov * z.transpose() +
                        sigma2 * Eigen::MatrixXd::Identity(n, n);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(v);
    Eigen::VectorXd r = y - x * beta;
    ll += -0.5 * (double(n) * std::log(2.0 * M_PI) +
                  std::log(lu.determinant()) + r.dot(lu.inverse() * r));
  }
  return ll;
}

// Closed-form BLUP for the intercept-only model with n observations:
//   b = n B (ybar - beta0) / (n B + sigma2).
inline double intercept_blup(double re_var, double sigma2, double beta0,
                             const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double ybar = 0.0;
  for (double v : values) ybar += v;
  ybar /= double(values.size());
  const double n = double(values.size());
  return n * re_var * (ybar - beta0) / (n * re_var + sigma2);
}

// ---------------------------------------------------------------------
// Survival kernels
// ---------------------------------------------------------------------

inline std::vector<double> distinct_times(const lmforest::SurvSample& s) {
  std::set<double> t(s.time.begin(), s.time.end());
  return {t.begin(), t.end()};
}

// Kaplan-Meier survival evaluated at t (any-cause events).
inline double km_at(const lmforest::SurvSample& s, double t) {
  double surv = 1.0;
  for (double u : distinct_times(s)) {
    if (u > t) break;
    int at_risk = 0, deaths = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.time[i] >= u) ++at_risk;
      if (s.time[i] == u && s.cause[i] != 0) ++deaths;
    }
    if (deaths > 0) surv *= 1.0 - double(deaths) / double(at_risk);
  }
  return surv;
}

// Left limit of the KM curve at t.
inline double km_before(const lmforest::SurvSample& s, double t) {
  double surv = 1.0;
  for (double u : distinct_times(s)) {
    if (u >= t) break;
    int at_risk = 0, deaths = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.time[i] >= u) ++at_risk;
      if (s.time[i] == u && s.cause[i] != 0) ++deaths;
    }
    if (deaths > 0) surv *= 1.0 - double(deaths) / double(at_risk);
  }
  return surv;
}

// Nelson-Aalen cumulative hazard at t, single cause.
inline double nelson_aalen_hazard_at(const lmforest::SurvSample& s, double t) {
  double hazard = 0.0;
  for (double u : distinct_times(s)) {
    if (u > t) break;
    int at_risk = 0, deaths = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.time[i] >= u) ++at_risk;
      if (s.time[i] == u && s.cause[i] != 0) ++deaths;
    }
    if (deaths > 0) hazard += double(deaths) / double(at_risk);
  }
  return hazard;
}

inline double nelson_aalen_cif_at(const lmforest::SurvSample& s, double t) {
  return 1.0 - std::exp(-nelson_aalen_hazard_at(s, t));
}

// Aalen-Johansen cause-k incidence at t.
inline double aalen_johansen_at(const lmforest::SurvSample& s, int cause_k,
                                double t) {
  double cif = 0.0;
  for (double u : distinct_times(s)) {
    if (u > t) break;
    int at_risk = 0, dk = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.time[i] >= u) ++at_risk;
      if (s.time[i] == u && s.cause[i] == cause_k) ++dk;
    }
    if (dk > 0) cif += km_before(s, u) * double(dk) / double(at_risk);
  }
  return cif;
}

// Censoring survival G(t) via the flipped-indicator KM; exact for samples
// without event/censoring ties at a shared timestamp.
inline double censoring_km_at(const lmforest::SurvSample& s, double t) {
  lmforest::SurvSample flipped = s;
  for (int& c : flipped.cause) c = c == 0 ? 1 : 0;
  return km_at(flipped, t);
}

// Two-group log-rank chi-square from the textbook sums.
inline double logrank(const lmforest::SurvSample& left,
                      const lmforest::SurvSample& right) {
  lmforest::SurvSample pooled;
  pooled.time = left.time;
  pooled.cause = left.cause;
  pooled.time.insert(pooled.time.end(), right.time.begin(), right.time.end());
  pooled.cause.insert(pooled.cause.end(), right.cause.begin(),
                      right.cause.end());
  double score = 0.0, variance = 0.0;
  for (double u : distinct_times(pooled)) {
    double n1 = 0, n2 = 0, d1 = 0, d2 = 0;
    for (std::size_t i = 0; i < left.size(); ++i) {
      if (left.time[i] >= u) n1 += 1;
      if (left.time[i] == u && left.cause[i] != 0) d1 += 1;
    }
    for (std::size_t i = 0; i < right.size(); ++i) {
      if (right.time[i] >= u) n2 += 1;
      if (right.time[i] == u && right.cause[i] != 0) d2 += 1;
    }
    const double n = n1 + n2, d = d1 + d2;
    if (d <= 0) continue;
    score += d1 - d * n1 / n;
    if (n > 1) {
      variance += d * (n1 / n) * (n2 / n) * (n - d) / (n - 1);
    }
  }
  return variance > 0 ? score * score / variance : 0.0;
}

// Gray-type two-sample statistic recomputed from scratch at every
// cause-k event time: modified risk sets R_h = Y_h (1 - F_hk(t-)) / S_h(t-)
// with per-time O(n^2) evaluation of every ingredient.
inline double gray(const lmforest::SurvSample& left,
                   const lmforest::SurvSample& right, int cause_k) {
  const lmforest::SurvSample* groups[2] = {&left, &right};
  std::set<double> event_times;
  for (int g = 0; g < 2; ++g) {
    for (std::size_t i = 0; i < groups[g]->size(); ++i) {
      if (groups[g]->cause[i] == cause_k) {
        event_times.insert(groups[g]->time[i]);
      }
    }
  }
  double score = 0.0, variance = 0.0;
  for (double t : event_times) {
    double rmod[2], dk[2];
    for (int g = 0; g < 2; ++g) {
      const auto& s = *groups[g];
      double at_risk = 0;
      dk[g] = 0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.time[i] >= t) at_risk += 1;
        if (s.time[i] == t && s.cause[i] == cause_k) dk[g] += 1;
      }
      const double surv_before = km_before(s, t);
      const double cif_before = aalen_johansen_at(
          s, cause_k, std::nextafter(t, -1.0));  // F(t-)
      rmod[g] = surv_before > 0
                    ? at_risk * (1.0 - cif_before) / surv_before
                    : 0.0;
    }
    const double d = dk[0] + dk[1];
    const double r = rmod[0] + rmod[1];
    if (d <= 0 || r <= 0) continue;
    const double a = rmod[0] / r;
    score += dk[0] - d * a;
    if (r > 1.0) {
      variance += d * a * (1.0 - a) * std::max(0.0, (r - d) / (r - 1.0));
    }
  }
  return variance > 0 ? score * score / variance : 0.0;
}

// Per-subject IPCW Brier score, spreadsheet style.
inline double brier(const std::vector<double>& predictions,
                    const lmforest::SurvSample& s, double t, int cause_k) {
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double weight = 0.0;
    if (s.time[i] <= t && s.cause[i] > 0) {
      const double g = censoring_km_at(s, std::nextafter(s.time[i], -1.0));
      if (g > 0) weight = 1.0 / g;
    } else if (s.time[i] > t) {
      const double g = censoring_km_at(s, t);
      if (g > 0) weight = 1.0 / g;
    }
    const double ind = (s.time[i] <= t && s.cause[i] == cause_k) ? 1.0 : 0.0;
    total += weight * (ind - predictions[i]) * (ind - predictions[i]);
  }
  return total / double(s.size());
}

// ---------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------

// Inverse-CDF quantile with averaging at discontinuities (type 2),
// written against the definition rather than the library's index juggling.
inline double quantile_type2(std::vector<double> xs, double p) {
  std::sort(xs.begin(), xs.end());
  const double h = double(xs.size()) * p;
  const double eps = 1e-9;
  if (std::abs(h - std::round(h)) < eps) {
    const std::size_t j = std::size_t(std::llround(h));
    if (j >= xs.size()) return xs.back();
    if (j == 0) return xs.front();
    return 0.5 * (xs[j - 1] + xs[j]);
  }
  const std::size_t j = std::size_t(std::ceil(h)) - 1;
  return xs[std::min(j, xs.size() - 1)];
}

inline double weighted_variance(const std::vector<double>& yl,
                                const std::vector<double>& yr) {
  auto var = [](const std::vector<double>& y) {
    double m = 0;
    for (double v : y) m += v;
    m /= double(y.size());
    double ss = 0;
    for (double v : y) ss += (v - m) * (v - m);
    return ss / double(y.size());
  };
  const double n = double(yl.size() + yr.size());
  return double(yl.size()) / n * var(yl) + double(yr.size()) / n * var(yr);
}

inline double weighted_entropy(const std::vector<int>& yl,
                               const std::vector<int>& yr, int n_levels) {
  auto ent = [&](const std::vector<int>& y) {
    std::vector<int> counts(std::size_t(n_levels), 0);
    for (int v : y) counts[std::size_t(v)]++;
    double h = 0;
    for (int c : counts) {
      if (c == 0) continue;
      const double p = double(c) / double(y.size());
      h -= p * std::log(p);
    }
    return h;
  };
  const double n = double(yl.size() + yr.size());
  return double(yl.size()) / n * ent(yl) + double(yr.size()) / n * ent(yr);
}

// One candidate feature for the brute-force search: either a continuous
// column (possibly with NaNs) or a factor column (-1 = missing).
struct BruteCandidate {
  bool is_factor = false;
  std::vector<double> values;
  std::vector<int> levels;
};

struct BruteDecision {
  bool found = false;
  int candidate = -1;
  double threshold = 0.0;
  std::uint64_t mask = 0;
  double score = 0.0;
  std::vector<int> left, right;
};

// Exhaustive search over every (candidate, cut/mask) pair with the same
// ordering contract as the library: candidates in order, cuts ascending,
// masks in subset-counter order, first strict optimum kept. Scores come
// from the oracle formulas above.
inline BruteDecision brute_force_split(const lmforest::ValidatedDataset& ds,
                                       const std::vector<int>& subjects,
                                       const std::vector<BruteCandidate>& cands,
                                       int min_child) {
  const bool minimize = ds.outcome.mode != lmforest::OutcomeMode::kSurvival;
  BruteDecision best;

  auto evaluate = [&](const std::vector<int>& left,
                      const std::vector<int>& right) {
    double out = std::numeric_limits<double>::quiet_NaN();
    if (int(left.size()) < min_child || int(right.size()) < min_child) {
      return out;
    }
    switch (ds.outcome.mode) {
      case lmforest::OutcomeMode::kNumeric: {
        std::vector<double> yl, yr;
        for (int i : left) {
          yl.push_back(ds.outcome.numeric_value[std::size_t(i)]);
        }
        for (int i : right) {
          yr.push_back(ds.outcome.numeric_value[std::size_t(i)]);
        }
        out = weighted_variance(yl, yr);
        break;
      }
      case lmforest::OutcomeMode::kFactor: {
        std::vector<int> yl, yr;
        for (int i : left) yl.push_back(ds.outcome.category[std::size_t(i)]);
        for (int i : right) yr.push_back(ds.outcome.category[std::size_t(i)]);
        out = weighted_entropy(yl, yr, int(ds.outcome.levels.size()));
        break;
      }
      case lmforest::OutcomeMode::kSurvival: {
        int el = 0, er = 0;
        for (int i : left) el += ds.outcome.cause[std::size_t(i)] != 0;
        for (int i : right) er += ds.outcome.cause[std::size_t(i)] != 0;
        if (el == 0 || er == 0) return out;
        lmforest::SurvSample sl = ds.survival_sample(left);
        lmforest::SurvSample sr = ds.survival_sample(right);
        if (ds.outcome.causes.size() == 1) {
          for (int& c : sl.cause) c = c != 0;
          for (int& c : sr.cause) c = c != 0;
          out = logrank(sl, sr);
        } else {
          out = gray(sl, sr, ds.outcome.cause_of_interest);
        }
        break;
      }
    }
    return out;
  };

  auto consider = [&](int cand, double thr, std::uint64_t mask,
                      const std::vector<int>& left,
                      const std::vector<int>& right) {
    const double score = evaluate(left, right);
    if (std::isnan(score)) return;
    // Same near-tie rule as the library: improvements must clear a
    // relative epsilon, otherwise the first candidate stands.
    if (best.found) {
      const double gain = minimize ? best.score - score : score - best.score;
      if (!(gain > 1e-12 * (1.0 + std::abs(best.score)))) return;
    }
    best.found = true;
    best.candidate = cand;
    best.threshold = thr;
    best.mask = mask;
    best.score = score;
    best.left = left;
    best.right = right;
  };

  for (std::size_t c = 0; c < cands.size(); ++c) {
    const BruteCandidate& cand = cands[c];
    if (!cand.is_factor) {
      std::vector<double> observed;
      for (double v : cand.values) {
        if (!std::isnan(v)) observed.push_back(v);
      }
      std::sort(observed.begin(), observed.end());
      if (observed.size() < 2 || observed.front() == observed.back()) {
        continue;
      }
      // Interior deciles, one cut per partition (keep the largest decile
      // inducing it), skipping all-left cuts.
      std::vector<double> cuts;
      for (int k = 1; k <= 9; ++k) {
        cuts.push_back(quantile_type2(observed, double(k) / 10.0));
      }
      std::sort(cuts.begin(), cuts.end());
      std::map<std::size_t, double> by_partition;
      for (double cut : cuts) {
        std::size_t count = 0;
        for (double v : observed) count += v <= cut;
        if (count == 0 || count == observed.size()) continue;
        auto [it, inserted] = by_partition.try_emplace(count, cut);
        if (!inserted) it->second = std::max(it->second, cut);
      }
      for (const auto& [count, cut] : by_partition) {
        std::vector<int> left, right, missing;
        for (std::size_t i = 0; i < subjects.size(); ++i) {
          if (std::isnan(cand.values[i])) {
            missing.push_back(subjects[i]);
          } else if (cand.values[i] <= cut) {
            left.push_back(subjects[i]);
          } else {
            right.push_back(subjects[i]);
          }
        }
        auto& target = left.size() >= right.size() ? left : right;
        target.insert(target.end(), missing.begin(), missing.end());
        std::sort(target.begin(), target.end());
        consider(int(c), cut, 0, left, right);
      }
    } else {
      std::vector<int> present;
      for (int v : cand.levels) {
        if (v >= 0) present.push_back(v);
      }
      std::sort(present.begin(), present.end());
      present.erase(std::unique(present.begin(), present.end()),
                    present.end());
      if (present.size() < 2 || present.size() > 10) continue;
      const std::uint64_t combos = std::uint64_t(1) << (present.size() - 1);
      for (std::uint64_t s = 0; s + 1 < combos; ++s) {
        std::uint64_t mask = std::uint64_t(1) << present[0];
        for (std::size_t i = 1; i < present.size(); ++i) {
          if (s & (std::uint64_t(1) << (i - 1))) {
            mask |= std::uint64_t(1) << present[i];
          }
        }
        std::vector<int> left, right, missing;
        for (std::size_t i = 0; i < subjects.size(); ++i) {
          if (cand.levels[i] < 0) {
            missing.push_back(subjects[i]);
          } else if (mask & (std::uint64_t(1) << cand.levels[i])) {
            left.push_back(subjects[i]);
          } else {
            right.push_back(subjects[i]);
          }
        }
        auto& target = left.size() >= right.size() ? left : right;
        target.insert(target.end(), missing.begin(), missing.end());
        std::sort(target.begin(), target.end());
        consider(int(c), 0.0, mask, left, right);
      }
    }
  }
  return best;
}

// Ordinary least squares with standard errors, for recovery checks.
struct OlsFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd se;
};

inline OlsFit ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  OlsFit fit;
  Eigen::MatrixXd xtx = x.transpose() * x;
  Eigen::MatrixXd inv = xtx.fullPivLu().inverse();
  fit.coef = inv * (x.transpose() * y);
  const Eigen::VectorXd resid = y - x * fit.coef;
  const double s2 = resid.squaredNorm() /
                    double(x.rows() - x.cols());
  fit.se = (s2 * inv.diagonal()).cwiseSqrt();
  return fit;
}

}  // namespace oracle
