#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lmforest/data.hpp"
#include "lmforest/lmm.hpp"
#include "lmforest/rng.hpp"
#include "lmforest/survival.hpp"

namespace lmforest {

enum class SplitKind { kLongitudinal, kNumeric, kFactor, kLeaf };

inline const char* split_kind_name(SplitKind k) {
  switch (k) {
    case SplitKind::kLongitudinal:
      return "Longitudinal";
    case SplitKind::kNumeric:
      return "Numeric";
    case SplitKind::kFactor:
      return "Factor";
    case SplitKind::kLeaf:
      return "Leaf";
  }
  return "?";
}

// One node of a grown tree. Node ids follow the implicit binary heap:
// root is 1 and node d has children 2d and 2d+1.
struct SplitRecord {
  int node_id = 1;
  SplitKind kind = SplitKind::kLeaf;
  int var_index = -1;      // index within the kind's declared order
  int feature_index = -1;  // random-effect index, Longitudinal only
  double threshold = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t level_mask = 0;  // Factor: level bit set -> goes left
  bool majority_left = true;     // fallback direction for missing values
  int n_subjects = 0;
  int n_events = -1;      // events of the cause of interest (survival)
  int n_events_any = -1;  // events of any cause (survival)
  int depth = 1;          // root = 1
};

// Outcome summary stored in each terminal node.
struct LeafSummary {
  double mean = 0.0;                        // numeric outcome
  int category = -1;                        // factor outcome
  double vote_share = 0.0;                  // factor outcome
  std::vector<CifCurve> cif_by_cause;       // survival, outcome.causes order
};

struct Tree {
  std::map<int, SplitRecord> nodes;  // splits and leaves, by node id
  std::map<std::pair<int, int>, LmmFit> node_models;  // (node, marker)
  std::map<int, LeafSummary> leaves;
  std::vector<int> boot_ids;  // the N bootstrap draws, with repeats
  std::vector<int> oob_ids;   // subjects never drawn, ascending

  int max_depth() const {
    int d = 0;
    for (const auto& [id, rec] : nodes) d = std::max(d, rec.depth);
    return d;
  }
};

// A candidate predictor drawn at a node; markers come first in the
// global predictor order, then fixed predictors.
struct Candidate {
  bool longitudinal = false;
  int index = 0;  // marker index, or fixed-predictor index
};

// Uniform draw of mtry predictors out of P+Q without replacement. The
// returned order is the draw order; split ties are broken by it.
inline std::vector<Candidate> draw_candidates(Rng& rng, int p, int q,
                                              int mtry) {
  const int total = p + q;
  if (mtry < 1 || mtry > total) {
    throw DataError("MtryTooLarge", "mtry must lie in [1, P+Q]");
  }
  std::vector<Candidate> out;
  out.reserve(std::size_t(mtry));
  for (std::size_t g : rng.sample_without_replacement(std::size_t(total),
                                                      std::size_t(mtry))) {
    const int gi = int(g);
    if (gi < q) {
      out.push_back({true, gi});
    } else {
      out.push_back({false, gi - q});
    }
  }
  return out;
}

// Candidate thresholds for a continuous feature. Quantile mode takes the
// interior deciles (inverse-CDF quantiles, averaging at discontinuities),
// keeps one cut per induced partition (the largest), and drops cuts that
// would leave a side empty. Sample mode draws up to 9 distinct observed
// values below the maximum. Cuts are ascending; value <= cut goes left.
inline std::vector<double> enumerate_cutpoints(std::vector<double> values,
                                               SplitSampling option,
                                               Rng& rng) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n < 2 || values.front() == values.back()) {
    throw ModelError("NoValidCut", "feature has fewer than 2 distinct values");
  }

  std::vector<double> cuts;
  if (option == SplitSampling::kQuantile) {
    for (int k = 1; k <= 9; ++k) {
      const std::size_t nk = n * std::size_t(k);
      double q;
      if (nk % 10 == 0) {
        const std::size_t idx = nk / 10;
        q = idx < n ? 0.5 * (values[idx - 1] + values[idx]) : values[n - 1];
      } else {
        q = values[nk / 10];
      }
      cuts.push_back(q);
    }
    std::sort(cuts.begin(), cuts.end());
    // One representative cut per induced partition.
    std::vector<double> dedup;
    std::size_t last_count = 0;
    for (double c : cuts) {
      const std::size_t count = std::size_t(
          std::upper_bound(values.begin(), values.end(), c) - values.begin());
      if (count == n || count == 0) continue;
      if (!dedup.empty() && count == last_count) {
        dedup.back() = c;
      } else {
        dedup.push_back(c);
        last_count = count;
      }
    }
    cuts = std::move(dedup);
  } else {
    std::vector<double> distinct(values);
    distinct.erase(std::unique(distinct.begin(), distinct.end()),
                   distinct.end());
    distinct.pop_back();  // a cut at the maximum leaves the right side empty
    const std::size_t k = std::min<std::size_t>(9, distinct.size());
    std::vector<std::size_t> picked =
        rng.sample_without_replacement(distinct.size(), k);
    for (std::size_t i : picked) cuts.push_back(distinct[i]);
    std::sort(cuts.begin(), cuts.end());
  }
  if (cuts.empty()) {
    throw ModelError("NoValidCut", "no threshold produces two groups");
  }
  return cuts;
}

// All binary partitions of the levels present at a node, one mask per
// complement pair. Masks are over global level indices; a set bit sends
// the level left. Ordered by the subset counter, lowest level fixed left.
inline std::vector<std::uint64_t> enumerate_factor_splits(
    const std::vector<int>& present_levels) {
  const std::size_t l = present_levels.size();
  if (l < 2) {
    throw ModelError("NoValidCut", "fewer than 2 levels present");
  }
  if (l > 10) {
    throw ModelError("TooManyLevels",
                     "factor splits support at most 10 present levels");
  }
  std::vector<std::uint64_t> out;
  const std::uint64_t combos = std::uint64_t(1) << (l - 1);
  for (std::uint64_t s = 0; s + 1 < combos; ++s) {
    std::uint64_t mask = std::uint64_t(1) << present_levels[0];
    for (std::size_t i = 1; i < l; ++i) {
      if (s & (std::uint64_t(1) << (i - 1))) {
        mask |= std::uint64_t(1) << present_levels[i];
      }
    }
    out.push_back(mask);
  }
  return out;
}

inline bool score_is_minimized(OutcomeMode mode) {
  return mode != OutcomeMode::kSurvival;
}

namespace detail {

inline double population_variance(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= double(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / double(xs.size());
}

inline double shannon_entropy(const std::vector<int>& counts, int total) {
  double h = 0.0;
  for (int c : counts) {
    if (c == 0) continue;
    const double p = double(c) / double(total);
    h -= p * std::log(p);
  }
  return h;
}

inline int any_cause_events(const ValidatedDataset& ds,
                            const std::vector<int>& subjects) {
  int n = 0;
  for (int i : subjects) {
    if (ds.outcome.cause[std::size_t(i)] != 0) ++n;
  }
  return n;
}

inline int cause_events(const ValidatedDataset& ds,
                        const std::vector<int>& subjects, int cause_k) {
  int n = 0;
  for (int i : subjects) {
    if (ds.outcome.cause[std::size_t(i)] == cause_k) ++n;
  }
  return n;
}

// Numeric and categorical nodes that are already homogeneous in the
// outcome cannot be improved and become leaves.
inline bool outcome_pure(const ValidatedDataset& ds,
                         const std::vector<int>& subjects) {
  switch (ds.outcome.mode) {
    case OutcomeMode::kNumeric: {
      const double first = ds.outcome.numeric_value[std::size_t(subjects[0])];
      for (int i : subjects) {
        if (ds.outcome.numeric_value[std::size_t(i)] != first) return false;
      }
      return true;
    }
    case OutcomeMode::kFactor: {
      const int first = ds.outcome.category[std::size_t(subjects[0])];
      for (int i : subjects) {
        if (ds.outcome.category[std::size_t(i)] != first) return false;
      }
      return true;
    }
    case OutcomeMode::kSurvival:
      return false;
  }
  return false;
}

// Single-cause samples may use any positive cause label; fold it to 1 for
// the log-rank kernel.
inline SurvSample single_cause_sample(const ValidatedDataset& ds,
                                      const std::vector<int>& subjects) {
  SurvSample s = ds.survival_sample(subjects);
  for (int& c : s.cause) c = c != 0 ? 1 : 0;
  return s;
}

}  // namespace detail

// Distance between the two child groups; smaller is better for numeric
// and categorical outcomes, larger for survival.
inline double score_split(const ValidatedDataset& ds,
                          const std::vector<int>& left,
                          const std::vector<int>& right) {
  if (left.empty() || right.empty()) {
    throw ModelError("InvalidPartition", "both sides must be nonempty");
  }
  switch (ds.outcome.mode) {
    case OutcomeMode::kNumeric: {
      std::vector<double> yl, yr;
      yl.reserve(left.size());
      yr.reserve(right.size());
      for (int i : left) yl.push_back(ds.outcome.numeric_value[std::size_t(i)]);
      for (int i : right)
        yr.push_back(ds.outcome.numeric_value[std::size_t(i)]);
      const double n = double(left.size() + right.size());
      return double(left.size()) / n * detail::population_variance(yl) +
             double(right.size()) / n * detail::population_variance(yr);
    }
    case OutcomeMode::kFactor: {
      std::vector<int> cl(ds.outcome.levels.size(), 0);
      std::vector<int> cr(ds.outcome.levels.size(), 0);
      for (int i : left) cl[std::size_t(ds.outcome.category[std::size_t(i)])]++;
      for (int i : right)
        cr[std::size_t(ds.outcome.category[std::size_t(i)])]++;
      const double n = double(left.size() + right.size());
      return double(left.size()) / n *
                 detail::shannon_entropy(cl, int(left.size())) +
             double(right.size()) / n *
                 detail::shannon_entropy(cr, int(right.size()));
    }
    case OutcomeMode::kSurvival: {
      if (detail::any_cause_events(ds, left) == 0 ||
          detail::any_cause_events(ds, right) == 0) {
        throw ModelError("InvalidPartition",
                         "each side needs at least one event");
      }
      if (ds.outcome.causes.size() == 1) {
        return logrank_stat(detail::single_cause_sample(ds, left),
                            detail::single_cause_sample(ds, right));
      }
      return gray_stat(ds.survival_sample(left), ds.survival_sample(right),
                       ds.outcome.cause_of_interest);
    }
  }
  return 0.0;
}

// Winning split with its induced partition and, for longitudinal
// predictors, the node-fitted mixed model behind the feature.
struct BestSplit {
  SplitKind kind = SplitKind::kLeaf;
  int var_index = -1;
  int feature_index = -1;
  double threshold = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t level_mask = 0;
  double score = 0.0;
  std::vector<int> left;
  std::vector<int> right;
  LmmFit model;  // valid when kind == kLongitudinal
};

namespace detail {

// Partition node subjects on a continuous feature; subjects with a
// missing value follow the larger side (ties left).
inline void partition_continuous(const std::vector<int>& subjects,
                                 const std::vector<double>& values,
                                 double cut, std::vector<int>* left,
                                 std::vector<int>* right) {
  left->clear();
  right->clear();
  std::vector<int> missing;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (std::isnan(values[i])) {
      missing.push_back(subjects[i]);
    } else if (values[i] <= cut) {
      left->push_back(subjects[i]);
    } else {
      right->push_back(subjects[i]);
    }
  }
  if (!missing.empty()) {
    auto* target = left->size() >= right->size() ? left : right;
    target->insert(target->end(), missing.begin(), missing.end());
    std::sort(target->begin(), target->end());
  }
}

inline void partition_factor(const std::vector<int>& subjects,
                             const std::vector<int>& values,
                             std::uint64_t mask, std::vector<int>* left,
                             std::vector<int>* right) {
  left->clear();
  right->clear();
  std::vector<int> missing;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (values[i] < 0) {
      missing.push_back(subjects[i]);
    } else if (mask & (std::uint64_t(1) << values[i])) {
      left->push_back(subjects[i]);
    } else {
      right->push_back(subjects[i]);
    }
  }
  if (!missing.empty()) {
    auto* target = left->size() >= right->size() ? left : right;
    target->insert(target->end(), missing.begin(), missing.end());
    std::sort(target->begin(), target->end());
  }
}

inline bool partition_allowed(const ValidatedDataset& ds,
                              const std::vector<int>& left,
                              const std::vector<int>& right, int min_child) {
  if (int(left.size()) < min_child || int(right.size()) < min_child) {
    return false;
  }
  if (ds.outcome.mode == OutcomeMode::kSurvival) {
    if (any_cause_events(ds, left) == 0 || any_cause_events(ds, right) == 0) {
      return false;
    }
  }
  return true;
}

}  // namespace detail

// Exhaustive search over the drawn candidates. Iteration order is the
// tie-break contract: candidates in draw order, features by index, cuts
// ascending, factor masks in enumeration order; the first strict optimum
// wins. Children smaller than min_child are not considered. Returns
// nullopt when no candidate yields a valid split.
inline std::optional<BestSplit> find_best_split(
    const ValidatedDataset& ds, const std::vector<int>& subjects,
    const std::vector<Candidate>& candidates, Rng& rng, int min_child = 1) {
  const bool minimize = score_is_minimized(ds.outcome.mode);
  std::optional<BestSplit> best;

  std::vector<int> left, right;
  auto consider = [&](SplitKind kind, int var, int feat, double thr,
                      std::uint64_t mask, const LmmFit* model) {
    if (!detail::partition_allowed(ds, left, right, min_child)) return;
    double score;
    try {
      score = score_split(ds, left, right);
    } catch (const ModelError&) {
      return;
    }
    if (std::isnan(score)) return;
    // An improvement must clear a relative epsilon; scores equal up to
    // round-off count as ties and keep the first candidate encountered.
    if (best) {
      const double gain =
          minimize ? best->score - score : score - best->score;
      if (!(gain > 1e-12 * (1.0 + std::abs(best->score)))) return;
    }
    BestSplit b;
    b.kind = kind;
    b.var_index = var;
    b.feature_index = feat;
    b.threshold = thr;
    b.level_mask = mask;
    b.score = score;
    b.left = left;
    b.right = right;
    if (model) b.model = *model;
    best = std::move(b);
  };

  auto try_continuous = [&](SplitKind kind, int var, int feat,
                            const std::vector<double>& values,
                            const LmmFit* model) {
    std::vector<double> observed;
    for (double v : values) {
      if (!std::isnan(v)) observed.push_back(v);
    }
    std::sort(observed.begin(), observed.end());
    if (observed.size() < 2 || observed.front() == observed.back()) return;
    std::vector<double> cuts =
        enumerate_cutpoints(observed, ds.hp.nsplit_option, rng);
    for (double c : cuts) {
      detail::partition_continuous(subjects, values, c, &left, &right);
      consider(kind, var, feat, c, 0, model);
    }
  };

  for (const Candidate& cand : candidates) {
    if (cand.longitudinal) {
      const LmmDesign& design = ds.specs[std::size_t(cand.index)].design;
      std::vector<MeasurementSeries> node_series;
      node_series.reserve(subjects.size());
      int with_obs = 0;
      int total_obs = 0;
      for (int i : subjects) {
        node_series.push_back(ds.series(i, cand.index));
        if (!node_series.back().empty()) {
          ++with_obs;
          total_obs += int(node_series.back().size());
        }
      }
      const int q = design.n_random();
      if (with_obs < 2 ||
          total_obs < design.n_fixed() + q * (q + 1) / 2 + 1) {
        continue;  // not enough data to identify the model at this node
      }
      LmmFit fit;
      try {
        fit = fit_lmm(design, node_series);
      } catch (const ModelError&) {
        continue;
      }
      if (!fit.converged) continue;  // marker dropped at this node
      Eigen::MatrixXd features = extract_features(fit, design, node_series);
      std::vector<double> column(subjects.size());
      for (int j = 0; j < q; ++j) {
        for (std::size_t i = 0; i < subjects.size(); ++i) {
          column[i] = features(Eigen::Index(i), j);
        }
        try_continuous(SplitKind::kLongitudinal, cand.index, j, column, &fit);
      }
    } else if (cand.index < ds.n_numeric()) {
      const int var = cand.index;
      std::vector<double> values(subjects.size());
      for (std::size_t i = 0; i < subjects.size(); ++i) {
        values[i] = ds.numeric_value(subjects[i], var);
      }
      try_continuous(SplitKind::kNumeric, var, -1, values, nullptr);
    } else {
      const int var = cand.index - ds.n_numeric();
      std::vector<int> values(subjects.size());
      std::vector<int> present;
      for (std::size_t i = 0; i < subjects.size(); ++i) {
        values[i] = ds.factor_value(subjects[i], var);
        if (values[i] >= 0) present.push_back(values[i]);
      }
      std::sort(present.begin(), present.end());
      present.erase(std::unique(present.begin(), present.end()),
                    present.end());
      if (present.size() < 2 || present.size() > 10) continue;
      for (std::uint64_t mask : enumerate_factor_splits(present)) {
        detail::partition_factor(subjects, values, mask, &left, &right);
        consider(SplitKind::kFactor, var, -1,
                 std::numeric_limits<double>::quiet_NaN(), mask, nullptr);
      }
    }
  }
  return best;
}

namespace detail {

inline LeafSummary make_leaf_summary(const ValidatedDataset& ds,
                                     const std::vector<int>& subjects) {
  LeafSummary leaf;
  switch (ds.outcome.mode) {
    case OutcomeMode::kNumeric: {
      double sum = 0.0;
      for (int i : subjects) sum += ds.outcome.numeric_value[std::size_t(i)];
      leaf.mean = sum / double(subjects.size());
      break;
    }
    case OutcomeMode::kFactor: {
      std::vector<int> counts(ds.outcome.levels.size(), 0);
      for (int i : subjects) {
        counts[std::size_t(ds.outcome.category[std::size_t(i)])]++;
      }
      int best = 0;
      for (std::size_t g = 1; g < counts.size(); ++g) {
        if (counts[g] > counts[std::size_t(best)]) best = int(g);
      }
      leaf.category = best;  // ties keep the lowest level index
      leaf.vote_share = double(counts[std::size_t(best)]) /
                        double(subjects.size());
      break;
    }
    case OutcomeMode::kSurvival: {
      if (ds.outcome.causes.size() == 1) {
        leaf.cif_by_cause.push_back(
            nelson_aalen_cif(single_cause_sample(ds, subjects)));
      } else {
        SurvSample s = ds.survival_sample(subjects);
        for (int cause : ds.outcome.causes) {
          leaf.cif_by_cause.push_back(aalen_johansen_cif(s, cause));
        }
      }
      break;
    }
  }
  return leaf;
}

}  // namespace detail

// Grow one tree on a bootstrap sample. Splitting recurses from node 1
// until a stopping rule fires: fewer than 2*nodesize subjects, fewer
// any-cause events than minsplit (survival), or no valid split.
inline Tree grow_tree(const ValidatedDataset& ds, std::vector<int> boot_ids,
                      Rng rng) {
  if (boot_ids.empty()) {
    throw ModelError("EmptyBootstrap", "bootstrap sample is empty");
  }
  Tree tree;
  tree.boot_ids = boot_ids;
  {
    std::vector<char> drawn(std::size_t(ds.n_subjects()), 0);
    for (int i : boot_ids) drawn[std::size_t(i)] = 1;
    for (int i = 0; i < ds.n_subjects(); ++i) {
      if (!drawn[std::size_t(i)]) tree.oob_ids.push_back(i);
    }
  }

  // The tree is grown on the distinct bootstrap subjects.
  std::vector<int> root(boot_ids);
  std::sort(root.begin(), root.end());
  root.erase(std::unique(root.begin(), root.end()), root.end());

  const bool survival = ds.outcome.mode == OutcomeMode::kSurvival;

  struct Pending {
    int node_id;
    int depth;
    std::vector<int> subjects;
  };
  std::deque<Pending> queue;
  queue.push_back({1, 1, std::move(root)});

  while (!queue.empty()) {
    Pending node = std::move(queue.front());
    queue.pop_front();

    SplitRecord rec;
    rec.node_id = node.node_id;
    rec.depth = node.depth;
    rec.n_subjects = int(node.subjects.size());
    if (survival) {
      rec.n_events = detail::cause_events(ds, node.subjects,
                                          ds.outcome.cause_of_interest);
      rec.n_events_any = detail::any_cause_events(ds, node.subjects);
    }

    std::optional<BestSplit> best;
    const bool size_ok = int(node.subjects.size()) >= 2 * ds.hp.nodesize;
    const bool events_ok =
        !survival ||
        detail::any_cause_events(ds, node.subjects) >= ds.hp.minsplit;
    if (size_ok && events_ok && !detail::outcome_pure(ds, node.subjects)) {
      std::vector<Candidate> candidates = draw_candidates(
          rng, ds.n_fixed_predictors(), ds.n_markers(), ds.hp.mtry);
      best = find_best_split(ds, node.subjects, candidates, rng,
                             ds.hp.nodesize);
    }

    if (!best) {
      rec.kind = SplitKind::kLeaf;
      tree.nodes.emplace(rec.node_id, rec);
      tree.leaves.emplace(rec.node_id,
                          detail::make_leaf_summary(ds, node.subjects));
      continue;
    }

    rec.kind = best->kind;
    rec.var_index = best->var_index;
    rec.feature_index = best->feature_index;
    rec.threshold = best->threshold;
    rec.level_mask = best->level_mask;
    rec.majority_left = best->left.size() >= best->right.size();
    tree.nodes.emplace(rec.node_id, rec);
    if (best->kind == SplitKind::kLongitudinal) {
      tree.node_models.emplace(std::make_pair(node.node_id, best->var_index),
                               best->model);
    }
    queue.push_back({2 * node.node_id, node.depth + 1, std::move(best->left)});
    queue.push_back(
        {2 * node.node_id + 1, node.depth + 1, std::move(best->right)});
  }
  return tree;
}

// Everything needed to route one subject through trees.
struct RoutingData {
  std::vector<MeasurementSeries> series;  // one per marker
  std::vector<double> numeric_values;
  std::vector<int> factor_values;
};

inline RoutingData routing_data_for(const ValidatedDataset& ds, int subject) {
  RoutingData r;
  r.series.reserve(std::size_t(ds.n_markers()));
  for (int m = 0; m < ds.n_markers(); ++m) {
    r.series.push_back(ds.series(subject, m));
  }
  r.numeric_values.resize(std::size_t(ds.n_numeric()));
  for (int j = 0; j < ds.n_numeric(); ++j) {
    r.numeric_values[std::size_t(j)] = ds.numeric_value(subject, j);
  }
  r.factor_values.resize(std::size_t(ds.n_factors()));
  for (int j = 0; j < ds.n_factors(); ++j) {
    r.factor_values[std::size_t(j)] = ds.factor_value(subject, j);
  }
  return r;
}

// Drop a subject down the tree and return its leaf id. Longitudinal
// splits recompute the subject's BLUP feature from the node-stored model,
// using only measurements up to the landmark when one is given.
inline int drop_down(const Tree& tree, const std::vector<LmmSpec>& specs,
                     const RoutingData& subject,
                     std::optional<double> landmark = std::nullopt) {
  // Landmark filtering happens once, not per node.
  std::vector<MeasurementSeries> filtered;
  const std::vector<MeasurementSeries>* series = &subject.series;
  if (landmark) {
    filtered.resize(subject.series.size());
    for (std::size_t m = 0; m < subject.series.size(); ++m) {
      const auto& s = subject.series[m];
      for (std::size_t k = 0; k < s.size(); ++k) {
        if (s.time[k] <= *landmark) {
          filtered[m].time.push_back(s.time[k]);
          filtered[m].value.push_back(s.value[k]);
        }
      }
    }
    series = &filtered;
  }

  int node = 1;
  for (;;) {
    const SplitRecord& rec = tree.nodes.at(node);
    if (rec.kind == SplitKind::kLeaf) return node;
    bool go_left = rec.majority_left;
    switch (rec.kind) {
      case SplitKind::kLongitudinal: {
        const LmmFit& fit =
            tree.node_models.at(std::make_pair(node, rec.var_index));
        const LmmDesign& design = specs[std::size_t(rec.var_index)].design;
        Eigen::VectorXd blup = predict_random_effects(
            fit, design, (*series)[std::size_t(rec.var_index)]);
        go_left = blup[rec.feature_index] <= rec.threshold;
        break;
      }
      case SplitKind::kNumeric: {
        const double v = subject.numeric_values[std::size_t(rec.var_index)];
        if (!std::isnan(v)) go_left = v <= rec.threshold;
        break;
      }
      case SplitKind::kFactor: {
        const int v = subject.factor_values[std::size_t(rec.var_index)];
        if (v >= 0) go_left = (rec.level_mask >> v) & 1;
        break;
      }
      case SplitKind::kLeaf:
        break;
    }
    node = 2 * node + (go_left ? 0 : 1);
  }
}

}  // namespace lmforest
