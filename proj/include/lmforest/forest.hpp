#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lmforest/data.hpp"
#include "lmforest/survival.hpp"
#include "lmforest/tree.hpp"

namespace lmforest {

namespace detail {

// Run fn(0..n-1) on `threads` workers; work items are independent and
// results are written by index, so scheduling cannot change the output.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(std::size_t(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

// Schema echo kept with the model so that prediction data can be checked
// and ingested without the training configuration.
struct ForestSchema {
  std::vector<std::string> marker_names;
  std::vector<LmmSpec> specs;
  std::vector<std::string> numeric_names;
  std::vector<std::string> factor_names;
  std::vector<std::vector<std::string>> factor_levels;
};

struct Forest {
  std::vector<Tree> trees;
  OutcomeMode mode = OutcomeMode::kNumeric;
  std::vector<std::string> levels;  // factor outcome
  std::vector<int> causes;          // survival outcome
  int cause_of_interest = 1;
  std::vector<double> times;  // survival: distinct cause-of-interest
                              // event times, ascending
  Hyperparams hp;
  ForestSchema schema;
  int n_training_subjects = 0;
  std::string data_hash;

  int ntree() const { return int(trees.size()); }

  int cause_slot() const {
    for (std::size_t i = 0; i < causes.size(); ++i) {
      if (causes[i] == cause_of_interest) return int(i);
    }
    return 0;
  }
};

inline ForestSchema make_schema(const ValidatedDataset& ds) {
  ForestSchema s;
  s.marker_names = ds.longitudinal.marker_names;
  s.specs = ds.specs;
  for (const auto& c : ds.fixed.numeric) s.numeric_names.push_back(c.name);
  for (const auto& c : ds.fixed.factors) {
    s.factor_names.push_back(c.name);
    s.factor_levels.push_back(c.levels);
  }
  return s;
}

// Grow B independent trees, each on its own bootstrap sample (N draws
// among the N subjects, with replacement). Per-tree RNG streams are a
// pure function of (seed, tree index), so any thread count produces the
// same forest.
inline Forest grow_forest(const ValidatedDataset& ds, int threads = 1) {
  Forest forest;
  forest.mode = ds.outcome.mode;
  forest.levels = ds.outcome.levels;
  forest.causes = ds.outcome.causes;
  forest.cause_of_interest = ds.outcome.cause_of_interest;
  forest.hp = ds.hp;
  forest.schema = make_schema(ds);
  forest.n_training_subjects = ds.n_subjects();
  forest.data_hash = dataset_hash(ds);
  if (ds.outcome.mode == OutcomeMode::kSurvival) {
    std::vector<double> times;
    for (std::size_t i = 0; i < ds.outcome.time.size(); ++i) {
      if (ds.outcome.cause[i] == ds.outcome.cause_of_interest) {
        times.push_back(ds.outcome.time[i]);
      }
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    forest.times = std::move(times);
  }

  const int n = ds.n_subjects();
  forest.trees.resize(std::size_t(ds.hp.ntree));
  detail::parallel_for(ds.hp.ntree, threads, [&](int b) {
    Rng rng = Rng::stream(ds.hp.seed, std::uint64_t(b));
    std::vector<int> boot(std::size_t(n), 0);
    for (int i = 0; i < n; ++i) {
      boot[std::size_t(i)] = int(rng.uniform_int(std::uint64_t(n)));
    }
    forest.trees[std::size_t(b)] = grow_tree(ds, std::move(boot), rng);
  });
  return forest;
}

// One subject's aggregated prediction.
struct SubjectPrediction {
  double value = std::numeric_limits<double>::quiet_NaN();  // numeric
  int category = -1;                                        // factor
  double vote_share = 0.0;                                  // factor
  std::vector<double> cif;  // survival, on the requested grid
};

namespace detail {

// Evaluate a leaf's cause-of-interest CIF on a grid.
inline void add_leaf_cif(const Forest& forest, const Tree& tree, int leaf,
                         const std::vector<double>& grid,
                         std::vector<double>* acc) {
  const CifCurve& cif =
      tree.leaves.at(leaf).cif_by_cause[std::size_t(forest.cause_slot())];
  for (std::size_t j = 0; j < grid.size(); ++j) {
    (*acc)[j] += cif.at(grid[j]);
  }
}

// Aggregate per-tree leaf assignments into one prediction: mean for
// numeric and survival outcomes, majority vote (ties to the lowest level
// index) for categorical ones.
inline SubjectPrediction aggregate_leaves(
    const Forest& forest, const std::vector<std::pair<int, int>>& tree_leaf,
    const std::vector<double>& grid) {
  SubjectPrediction pred;
  if (tree_leaf.empty()) return pred;
  switch (forest.mode) {
    case OutcomeMode::kNumeric: {
      double sum = 0.0;
      for (const auto& [b, leaf] : tree_leaf) {
        sum += forest.trees[std::size_t(b)].leaves.at(leaf).mean;
      }
      pred.value = sum / double(tree_leaf.size());
      break;
    }
    case OutcomeMode::kFactor: {
      std::vector<int> votes(forest.levels.size(), 0);
      for (const auto& [b, leaf] : tree_leaf) {
        votes[std::size_t(
            forest.trees[std::size_t(b)].leaves.at(leaf).category)]++;
      }
      int best = 0;
      for (std::size_t g = 1; g < votes.size(); ++g) {
        if (votes[g] > votes[std::size_t(best)]) best = int(g);
      }
      pred.category = best;
      pred.vote_share =
          double(votes[std::size_t(best)]) / double(tree_leaf.size());
      break;
    }
    case OutcomeMode::kSurvival: {
      pred.cif.assign(grid.size(), 0.0);
      for (const auto& [b, leaf] : tree_leaf) {
        add_leaf_cif(forest, forest.trees[std::size_t(b)], leaf, grid,
                     &pred.cif);
      }
      for (double& v : pred.cif) v /= double(tree_leaf.size());
      break;
    }
  }
  return pred;
}

}  // namespace detail

// Leaf assignment of every out-of-bag (tree, subject) pair; -1 when the
// subject is in-bag for that tree. Shared by the OOB error and the
// permutation importance machinery.
inline std::vector<std::vector<int>> oob_leaf_table(
    const Forest& forest, const ValidatedDataset& ds, int threads = 1) {
  std::vector<std::vector<int>> leaf_of(forest.trees.size());
  detail::parallel_for(forest.ntree(), threads, [&](int b) {
    const Tree& tree = forest.trees[std::size_t(b)];
    auto& row = leaf_of[std::size_t(b)];
    row.assign(std::size_t(ds.n_subjects()), -1);
    for (int i : tree.oob_ids) {
      RoutingData data = routing_data_for(ds, i);
      row[std::size_t(i)] = drop_down(tree, ds.specs, data);
    }
  });
  return leaf_of;
}

// Out-of-bag prediction for one training subject (Eq. averaging over the
// trees that left the subject out). Throws when the subject is in-bag
// everywhere.
inline SubjectPrediction oob_predict(const Forest& forest,
                                     const ValidatedDataset& ds, int subject) {
  std::vector<std::pair<int, int>> tree_leaf;
  for (int b = 0; b < forest.ntree(); ++b) {
    const Tree& tree = forest.trees[std::size_t(b)];
    if (!std::binary_search(tree.oob_ids.begin(), tree.oob_ids.end(),
                            subject)) {
      continue;
    }
    RoutingData data = routing_data_for(ds, subject);
    tree_leaf.emplace_back(b, drop_down(tree, ds.specs, data));
  }
  if (tree_leaf.empty()) {
    throw ModelError("NeverOob", "subject is in-bag in every tree");
  }
  return detail::aggregate_leaves(forest, tree_leaf, forest.times);
}

struct OobResult {
  std::vector<double> per_subject;  // NaN for never-OOB subjects
  double mean = std::numeric_limits<double>::quiet_NaN();
  int never_oob = 0;
  double tau1 = 0.0, tau2 = 0.0;  // survival integration range
};

namespace detail {

// Per-subject squared error / misclassification / IBS contribution given
// aggregated predictions. `grid` must match the prediction columns.
inline OobResult error_from_predictions(
    const Forest& forest, const ValidatedDataset& ds,
    const std::vector<SubjectPrediction>& preds,
    const std::vector<char>& has_pred, const std::vector<double>& grid) {
  OobResult out;
  out.per_subject.assign(std::size_t(ds.n_subjects()),
                         std::numeric_limits<double>::quiet_NaN());

  StepFunction censor;
  std::vector<double> int_grid;
  if (forest.mode == OutcomeMode::kSurvival) {
    SurvSample all = ds.survival_sample([&] {
      std::vector<int> everyone(std::size_t(ds.n_subjects()));
      for (int i = 0; i < ds.n_subjects(); ++i) everyone[std::size_t(i)] = i;
      return everyone;
    }());
    censor = censoring_km(all);
    out.tau1 = ds.hp.ibs_min.value_or(0.0);
    out.tau2 = ds.hp.ibs_max.value_or(max_event_time(all));
    if (!(out.tau1 < out.tau2)) {
      throw ModelError("BadRange", "IBS range requires tau1 < tau2");
    }
    int_grid.push_back(out.tau1);
    for (std::size_t i = 0; i < all.time.size(); ++i) {
      if (all.cause[i] != 0 && all.time[i] >= out.tau1 &&
          all.time[i] <= out.tau2) {
        int_grid.push_back(all.time[i]);
      }
    }
    int_grid.push_back(out.tau2);
    std::sort(int_grid.begin(), int_grid.end());
    int_grid.erase(std::unique(int_grid.begin(), int_grid.end()),
                   int_grid.end());
  }

  double total = 0.0;
  int counted = 0;
  for (int i = 0; i < ds.n_subjects(); ++i) {
    if (!has_pred[std::size_t(i)]) {
      ++out.never_oob;
      continue;
    }
    const SubjectPrediction& p = preds[std::size_t(i)];
    double err = 0.0;
    switch (forest.mode) {
      case OutcomeMode::kNumeric: {
        const double r = p.value - ds.outcome.numeric_value[std::size_t(i)];
        err = r * r;
        break;
      }
      case OutcomeMode::kFactor:
        err = p.category == ds.outcome.category[std::size_t(i)] ? 0.0 : 1.0;
        break;
      case OutcomeMode::kSurvival: {
        // Trapezoid integral of this subject's weighted squared residual
        // over the event-time grid, time-averaged by (tau2 - tau1); the
        // mean over subjects is the reported OOB integrated Brier score.
        const double ti = ds.outcome.time[std::size_t(i)];
        const int di = ds.outcome.cause[std::size_t(i)];
        const int k = ds.outcome.cause_of_interest;
        auto value_at = [&](double t) {
          auto it = std::upper_bound(grid.begin(), grid.end(), t);
          if (it == grid.begin()) return 0.0;
          return p.cif[std::size_t(it - grid.begin()) - 1];
        };
        auto integrand = [&](double t) {
          double w = 0.0;
          if (ti <= t && di > 0) {
            const double g = censor.at_left(ti);
            if (g > 0) w = 1.0 / g;
          } else if (ti > t) {
            const double g = censor.at(t);
            if (g > 0) w = 1.0 / g;
          }
          const double ind = (ti <= t && di == k) ? 1.0 : 0.0;
          const double r = ind - value_at(t);
          return w * r * r;
        };
        double integral = 0.0;
        double prev_t = int_grid.front();
        double prev_v = integrand(prev_t);
        for (std::size_t j = 1; j < int_grid.size(); ++j) {
          const double v = integrand(int_grid[j]);
          integral += 0.5 * (v + prev_v) * (int_grid[j] - prev_t);
          prev_t = int_grid[j];
          prev_v = v;
        }
        err = integral / (out.tau2 - out.tau1);
        break;
      }
    }
    out.per_subject[std::size_t(i)] = err;
    total += err;
    ++counted;
  }
  if (counted > 0) out.mean = total / double(counted);
  return out;
}

inline std::vector<SubjectPrediction> aggregate_oob(
    const Forest& forest, const std::vector<std::vector<int>>& leaf_of,
    int n_subjects, std::vector<char>* has_pred) {
  std::vector<SubjectPrediction> preds{std::size_t(n_subjects)};
  has_pred->assign(std::size_t(n_subjects), 0);
  std::vector<std::pair<int, int>> tree_leaf;
  for (int i = 0; i < n_subjects; ++i) {
    tree_leaf.clear();
    for (int b = 0; b < forest.ntree(); ++b) {
      const int leaf = leaf_of[std::size_t(b)][std::size_t(i)];
      if (leaf >= 0) tree_leaf.emplace_back(b, leaf);
    }
    if (tree_leaf.empty()) continue;
    (*has_pred)[std::size_t(i)] = 1;
    preds[std::size_t(i)] =
        detail::aggregate_leaves(forest, tree_leaf, forest.times);
  }
  return preds;
}

}  // namespace detail

// Pooled out-of-bag error: MSE, misclassification rate, or integrated
// Brier score depending on the outcome. Never-OOB subjects are skipped
// and counted.
inline OobResult compute_oob_error(const Forest& forest,
                                   const ValidatedDataset& ds,
                                   int threads = 1) {
  if (forest.data_hash != dataset_hash(ds)) {
    throw ModelError("DataMismatch",
                     "dataset differs from the one the model was grown on");
  }
  const auto leaf_of = oob_leaf_table(forest, ds, threads);
  std::vector<char> has_pred;
  const auto preds =
      detail::aggregate_oob(forest, leaf_of, ds.n_subjects(), &has_pred);
  return detail::error_from_predictions(forest, ds, preds, has_pred,
                                        forest.times);
}

// Prediction output for new subjects.
struct PredictionResult {
  std::optional<double> t0;
  std::vector<std::string> subject_ids;
  std::vector<double> times;  // survival grid (> t0 when t0 given)
  std::vector<SubjectPrediction> predictions;
  std::vector<std::vector<int>> leaf_ids;  // [subject][tree]
};

// Drop new subjects down every tree (Eq. averaging over all B trees).
// With a landmark t0, only measurements at times <= t0 are used and the
// survival grid keeps only training event times beyond t0.
inline PredictionResult predict_new(const Forest& forest,
                                    const LongitudinalTable& longitudinal,
                                    const FixedTable& fixed,
                                    std::optional<double> t0 = std::nullopt,
                                    int threads = 1) {
  // Schema checks: the prediction tables must carry the training columns.
  if (!forest.schema.marker_names.empty() && !longitudinal.empty() &&
      longitudinal.marker_names != forest.schema.marker_names) {
    throw DataError("SchemaMismatch", "longitudinal markers differ");
  }
  if (!fixed.empty()) {
    if (fixed.numeric.size() != forest.schema.numeric_names.size() ||
        fixed.factors.size() != forest.schema.factor_names.size()) {
      throw DataError("SchemaMismatch", "fixed predictor sets differ");
    }
    for (std::size_t j = 0; j < fixed.numeric.size(); ++j) {
      if (fixed.numeric[j].name != forest.schema.numeric_names[j]) {
        throw DataError("SchemaMismatch", "numeric predictors differ");
      }
    }
    for (std::size_t j = 0; j < fixed.factors.size(); ++j) {
      if (fixed.factors[j].name != forest.schema.factor_names[j] ||
          fixed.factors[j].levels != forest.schema.factor_levels[j]) {
        throw DataError("SchemaMismatch", "factor predictors differ");
      }
    }
  }

  // Subject universe: union of both tables, longitudinal order first.
  PredictionResult result;
  result.t0 = t0;
  std::unordered_map<std::string, int> index;
  for (const auto& id : longitudinal.subject_ids) {
    if (index.try_emplace(id, int(result.subject_ids.size())).second) {
      result.subject_ids.push_back(id);
    }
  }
  for (const auto& id : fixed.subject_ids) {
    if (index.try_emplace(id, int(result.subject_ids.size())).second) {
      result.subject_ids.push_back(id);
    }
  }
  if (result.subject_ids.empty()) {
    throw DataError("EmptyTable", "no subjects to predict");
  }

  if (forest.mode == OutcomeMode::kSurvival) {
    for (double t : forest.times) {
      if (!t0 || t > *t0) result.times.push_back(t);
    }
  }

  const int n = int(result.subject_ids.size());
  const int q = int(forest.schema.marker_names.size());
  std::vector<RoutingData> data{std::size_t(n)};
  for (int i = 0; i < n; ++i) {
    RoutingData& r = data[std::size_t(i)];
    const std::string& id = result.subject_ids[std::size_t(i)];
    const int lrow = longitudinal.subject_index(id);
    r.series.resize(std::size_t(q));
    if (lrow >= 0) {
      for (int m = 0; m < q; ++m) {
        r.series[std::size_t(m)] =
            longitudinal.series[std::size_t(lrow)][std::size_t(m)];
      }
    }
    const int frow = fixed.empty() ? -1 : fixed.subject_index(id);
    r.numeric_values.assign(forest.schema.numeric_names.size(),
                            std::numeric_limits<double>::quiet_NaN());
    r.factor_values.assign(forest.schema.factor_names.size(), -1);
    if (frow >= 0) {
      for (std::size_t j = 0; j < fixed.numeric.size(); ++j) {
        r.numeric_values[j] = fixed.numeric[j].values[std::size_t(frow)];
      }
      for (std::size_t j = 0; j < fixed.factors.size(); ++j) {
        r.factor_values[j] = fixed.factors[j].values[std::size_t(frow)];
      }
    }
  }

  result.leaf_ids.assign(std::size_t(n),
                         std::vector<int>(std::size_t(forest.ntree()), 0));
  result.predictions.resize(std::size_t(n));
  detail::parallel_for(n, threads, [&](int i) {
    std::vector<std::pair<int, int>> tree_leaf;
    tree_leaf.reserve(std::size_t(forest.ntree()));
    for (int b = 0; b < forest.ntree(); ++b) {
      const int leaf = drop_down(forest.trees[std::size_t(b)],
                                 forest.schema.specs, data[std::size_t(i)], t0);
      result.leaf_ids[std::size_t(i)][std::size_t(b)] = leaf;
      tree_leaf.emplace_back(b, leaf);
    }
    result.predictions[std::size_t(i)] =
        detail::aggregate_leaves(forest, tree_leaf, result.times);
  });
  return result;
}

// ---------------------------------------------------------------------
// Summary report
// ---------------------------------------------------------------------

struct ForestLabels {
  std::string outcome;
  std::string split_rule;
  std::string error_type;
  std::string leaf_stat;
};

inline ForestLabels forest_labels(const Forest& forest) {
  switch (forest.mode) {
    case OutcomeMode::kNumeric:
      return {"continuous", "Minimize weighted within-group variance",
              "Mean square error", "Mean"};
    case OutcomeMode::kFactor:
      return {"categorical",
              "Minimize weighted within-group Shannon entropy",
              "Misclassification", "Majority vote"};
    case OutcomeMode::kSurvival:
      if (forest.causes.size() > 1) {
        return {"survival (competing risk)", "Fine & Gray statistic test",
                "Integrated Brier Score", "Cumulative incidence function"};
      }
      return {"survival", "Log-rank statistic test",
              "Integrated Brier Score", "Cumulative incidence function"};
  }
  return {};
}

// Human-readable overview mirroring the per-mode labels above.
inline std::string summarize(const Forest& forest,
                             const OobResult* oob = nullptr,
                             double wall_seconds = -1.0, int cores = 0) {
  const ForestLabels labels = forest_labels(forest);
  const bool survival = forest.mode == OutcomeMode::kSurvival;

  double depth_sum = 0.0;
  double leaves_sum = 0.0;
  double leaf_subjects = 0.0;
  double leaf_events = 0.0;
  double total_leaves = 0.0;
  for (const auto& tree : forest.trees) {
    depth_sum += tree.max_depth();
    leaves_sum += double(tree.leaves.size());
    for (const auto& [id, leaf] : tree.leaves) {
      const SplitRecord& rec = tree.nodes.at(id);
      leaf_subjects += rec.n_subjects;
      if (survival) leaf_events += rec.n_events;
      total_leaves += 1.0;
    }
  }
  const double b = double(forest.ntree());

  std::ostringstream out;
  out.precision(4);
  out << "Random forest executed for " << labels.outcome << " outcome\n"
      << " Splitting rule: " << labels.split_rule << "\n"
      << " Out-of-bag error type: " << labels.error_type << "\n"
      << " Leaf statistic: " << labels.leaf_stat << "\n"
      << "----------------\n"
      << "Input\n"
      << " Number of subjects: " << forest.n_training_subjects << "\n"
      << " Longitudinal: " << forest.schema.marker_names.size()
      << " predictor(s)\n"
      << " Numeric: " << forest.schema.numeric_names.size()
      << " predictor(s)\n"
      << " Factor: " << forest.schema.factor_names.size()
      << " predictor(s)\n"
      << "----------------\n"
      << "Tuning parameters\n"
      << " mtry: " << forest.hp.mtry << "\n"
      << " nodesize: " << forest.hp.nodesize << "\n";
  if (survival) out << " minsplit: " << forest.hp.minsplit << "\n";
  out << " ntree: " << forest.hp.ntree << "\n"
      << "----------------\n"
      << "Forest summary\n"
      << " Average depth per tree: " << depth_sum / b << "\n"
      << " Average number of leaves per tree: " << leaves_sum / b << "\n"
      << " Average number of subjects per leaf: "
      << (total_leaves > 0 ? leaf_subjects / total_leaves : 0.0) << "\n";
  if (survival) {
    out << " Average number of events of interest per leaf: "
        << (total_leaves > 0 ? leaf_events / total_leaves : 0.0) << "\n";
  }
  out << "----------------\n"
      << "Out-of-bag error based on " << labels.error_type << "\n";
  if (oob && !std::isnan(oob->mean)) {
    out << " Out-of-bag error: " << oob->mean << "\n";
    if (oob->never_oob > 0) {
      out << " Subjects never out-of-bag: " << oob->never_oob << "\n";
    }
  } else {
    out << " Out-of-bag error: Not computed!\n";
  }
  out << "----------------\n"
      << "Computation time\n"
      << " Number of cores used: " << (cores > 0 ? std::to_string(cores) : "")
      << "\n";
  if (wall_seconds >= 0) {
    out << " Time difference of " << wall_seconds << " secs\n";
  }
  out << "----------------\n";
  return out.str();
}

}  // namespace lmforest
