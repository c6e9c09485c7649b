#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "lmforest/csv.hpp"
#include "lmforest/forest.hpp"

namespace lmforest {

// Global predictor order used throughout: markers first, then numeric,
// then factor predictors.
inline std::vector<std::string> predictor_names(const Forest& forest) {
  std::vector<std::string> names = forest.schema.marker_names;
  names.insert(names.end(), forest.schema.numeric_names.begin(),
               forest.schema.numeric_names.end());
  names.insert(names.end(), forest.schema.factor_names.begin(),
               forest.schema.factor_names.end());
  return names;
}

struct VimpOptions {
  std::uint64_t seed = 0;
  int repeats = 1;  // permutations averaged per tree and predictor
  // Time-dependent predictors: permute single observations (the default)
  // or whole subject trajectories.
  bool trajectory_mode = false;
  int threads = 1;
};

struct VimpResult {
  std::vector<std::string> names;
  std::vector<double> importance;  // permuted error - baseline error
  double baseline = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

// Predictors appearing in a tree's splits, as global indices.
inline std::set<int> predictors_used(const Forest& forest, const Tree& tree) {
  const int q = int(forest.schema.marker_names.size());
  const int n_num = int(forest.schema.numeric_names.size());
  std::set<int> used;
  for (const auto& [id, rec] : tree.nodes) {
    switch (rec.kind) {
      case SplitKind::kLongitudinal:
        used.insert(rec.var_index);
        break;
      case SplitKind::kNumeric:
        used.insert(q + rec.var_index);
        break;
      case SplitKind::kFactor:
        used.insert(q + n_num + rec.var_index);
        break;
      case SplitKind::kLeaf:
        break;
    }
  }
  return used;
}

// Permute one predictor among a tree's OOB subjects in place.
// Time-fixed: subject-level shuffle. Time-dependent: the marker values are
// shuffled across all OOB observation rows (subjects and times pooled),
// or across whole trajectories in trajectory mode.
inline void permute_predictor(const Forest& forest,
                              std::vector<RoutingData>& rows, int global_index,
                              bool trajectory_mode, Rng& rng) {
  const int q = int(forest.schema.marker_names.size());
  const int n_num = int(forest.schema.numeric_names.size());
  const std::size_t n = rows.size();
  if (global_index >= q) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    const int j = global_index - q;
    if (j < n_num) {
      std::vector<double> vals(n);
      for (std::size_t i = 0; i < n; ++i) {
        vals[i] = rows[i].numeric_values[std::size_t(j)];
      }
      for (std::size_t i = 0; i < n; ++i) {
        rows[i].numeric_values[std::size_t(j)] = vals[perm[i]];
      }
    } else {
      const int f = j - n_num;
      std::vector<int> vals(n);
      for (std::size_t i = 0; i < n; ++i) {
        vals[i] = rows[i].factor_values[std::size_t(f)];
      }
      for (std::size_t i = 0; i < n; ++i) {
        rows[i].factor_values[std::size_t(f)] = vals[perm[i]];
      }
    }
    return;
  }

  const int m = global_index;
  if (trajectory_mode) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<MeasurementSeries> series(n);
    for (std::size_t i = 0; i < n; ++i) {
      series[i] = rows[i].series[std::size_t(m)];
    }
    for (std::size_t i = 0; i < n; ++i) {
      rows[i].series[std::size_t(m)] = series[perm[i]];
    }
    return;
  }
  std::vector<double> values;
  for (const auto& r : rows) {
    const auto& s = r.series[std::size_t(m)];
    values.insert(values.end(), s.value.begin(), s.value.end());
  }
  rng.shuffle(values);
  std::size_t pos = 0;
  for (auto& r : rows) {
    auto& s = r.series[std::size_t(m)];
    for (std::size_t k = 0; k < s.value.size(); ++k) s.value[k] = values[pos++];
  }
}

// Pooled OOB error after permuting `group` within each tree's OOB sample.
// Trees that never split on a group member keep their baseline leaves.
inline double permuted_error(const Forest& forest, const ValidatedDataset& ds,
                             const std::vector<std::vector<int>>& base_leaf,
                             const std::vector<int>& group,
                             const VimpOptions& opts, int repeat) {
  std::vector<std::vector<int>> leaf_of = base_leaf;
  parallel_for(forest.ntree(), opts.threads, [&](int b) {
    const Tree& tree = forest.trees[std::size_t(b)];
    const std::set<int> used = predictors_used(forest, tree);
    bool affected = false;
    for (int g : group) affected = affected || used.count(g) > 0;
    if (!affected || tree.oob_ids.empty()) return;

    std::vector<RoutingData> rows;
    rows.reserve(tree.oob_ids.size());
    for (int i : tree.oob_ids) rows.push_back(routing_data_for(ds, i));
    for (int g : group) {
      Rng rng = Rng::stream(opts.seed, std::uint64_t(g),
                            std::uint64_t(b) + 1, std::uint64_t(repeat) + 1);
      permute_predictor(forest, rows, g, opts.trajectory_mode, rng);
    }
    for (std::size_t j = 0; j < rows.size(); ++j) {
      leaf_of[std::size_t(b)][std::size_t(tree.oob_ids[j])] =
          drop_down(tree, forest.schema.specs, rows[j]);
    }
  });

  std::vector<char> has_pred;
  const auto preds =
      aggregate_oob(forest, leaf_of, ds.n_subjects(), &has_pred);
  return error_from_predictions(forest, ds, preds, has_pred, forest.times)
      .mean;
}

}  // namespace detail

// Permutation importance: the increase of the pooled OOB error after
// permuting each predictor within every tree's OOB sample.
inline VimpResult compute_vimp(const Forest& forest,
                               const ValidatedDataset& ds,
                               const VimpOptions& opts = {}) {
  if (forest.data_hash != dataset_hash(ds)) {
    throw ModelError("DataMismatch",
                     "dataset differs from the one the model was grown on");
  }
  const auto base_leaf = oob_leaf_table(forest, ds, opts.threads);
  std::vector<char> has_pred;
  const auto preds =
      detail::aggregate_oob(forest, base_leaf, ds.n_subjects(), &has_pred);
  const double baseline =
      detail::error_from_predictions(forest, ds, preds, has_pred,
                                     forest.times)
          .mean;

  VimpResult result;
  result.names = predictor_names(forest);
  result.baseline = baseline;
  result.seed = opts.seed;
  const int total = int(result.names.size());
  result.importance.assign(std::size_t(total), 0.0);
  for (int p = 0; p < total; ++p) {
    double err = 0.0;
    for (int r = 0; r < opts.repeats; ++r) {
      err += detail::permuted_error(forest, ds, base_leaf, {p}, opts, r);
    }
    result.importance[std::size_t(p)] =
        err / double(opts.repeats) - baseline;
  }
  return result;
}

struct GroupVimpResult {
  std::vector<std::string> group_names;
  std::vector<double> importance;
  double baseline = 0.0;
  std::uint64_t seed = 0;
};

struct PredictorGroup {
  std::string name;
  std::vector<std::string> members;
};

// Grouped importance: all members of a group are permuted simultaneously
// (each with its own shuffle) before the error is recomputed.
inline GroupVimpResult compute_gvimp(const Forest& forest,
                                     const ValidatedDataset& ds,
                                     const std::vector<PredictorGroup>& groups,
                                     const VimpOptions& opts = {}) {
  if (forest.data_hash != dataset_hash(ds)) {
    throw ModelError("DataMismatch",
                     "dataset differs from the one the model was grown on");
  }
  const std::vector<std::string> names = predictor_names(forest);
  auto index_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return int(i);
    }
    throw DataError("UnknownPredictor", "no predictor named '" + name + "'");
  };
  std::set<int> seen;
  std::vector<std::vector<int>> indexed;
  for (const auto& g : groups) {
    if (g.members.empty()) {
      throw DataError("EmptyGroup", "group '" + g.name + "' is empty");
    }
    std::vector<int> ids;
    for (const auto& m : g.members) {
      const int idx = index_of(m);
      if (!seen.insert(idx).second) {
        throw DataError("OverlappingGroups",
                        "predictor '" + m + "' appears in two groups");
      }
      ids.push_back(idx);
    }
    indexed.push_back(std::move(ids));
  }

  const auto base_leaf = oob_leaf_table(forest, ds, opts.threads);
  std::vector<char> has_pred;
  const auto preds =
      detail::aggregate_oob(forest, base_leaf, ds.n_subjects(), &has_pred);
  const double baseline =
      detail::error_from_predictions(forest, ds, preds, has_pred,
                                     forest.times)
          .mean;

  GroupVimpResult result;
  result.baseline = baseline;
  result.seed = opts.seed;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    result.group_names.push_back(groups[g].name);
    double err = 0.0;
    for (int r = 0; r < opts.repeats; ++r) {
      err += detail::permuted_error(forest, ds, base_leaf, indexed[g], opts, r);
    }
    result.importance.push_back(err / double(opts.repeats) - baseline);
  }
  return result;
}

// Minimal-depth analytics: first-use depth per predictor and per feature
// (marker random effects expanded as <marker>.bi<j>), averaged over the
// trees where the item appears.
struct DepthResult {
  std::vector<std::string> predictor_names;
  std::vector<double> predictor_mean_depth;  // NaN when never used
  std::vector<int> predictor_tree_count;

  std::vector<std::string> feature_names;
  std::vector<double> feature_mean_depth;
  std::vector<int> feature_tree_count;

  // Per-tree first-use depth (0 = unused) and split-use counts.
  std::vector<std::vector<int>> predictor_first_depth;
  std::vector<std::vector<int>> feature_first_depth;
  std::vector<std::vector<int>> predictor_use_count;
  std::vector<std::vector<int>> feature_use_count;

  bool mtry_below_max = false;
};

inline DepthResult compute_min_depth(const Forest& forest) {
  DepthResult result;
  result.predictor_names = predictor_names(forest);
  const int q = int(forest.schema.marker_names.size());
  const int n_num = int(forest.schema.numeric_names.size());

  // Feature universe: per-marker random effects, then fixed predictors.
  std::vector<std::pair<int, int>> feature_key;  // (marker, re) or (-1, fixed)
  for (int m = 0; m < q; ++m) {
    const int nre = forest.schema.specs[std::size_t(m)].design.n_random();
    for (int j = 0; j < nre; ++j) {
      result.feature_names.push_back(forest.schema.marker_names[std::size_t(m)] +
                                     ".bi" + std::to_string(j));
      feature_key.emplace_back(m, j);
    }
  }
  for (int j = 0; j < n_num; ++j) {
    result.feature_names.push_back(forest.schema.numeric_names[std::size_t(j)]);
    feature_key.emplace_back(-1, q + j);
  }
  for (std::size_t j = 0; j < forest.schema.factor_names.size(); ++j) {
    result.feature_names.push_back(forest.schema.factor_names[j]);
    feature_key.emplace_back(-1, q + n_num + int(j));
  }

  const int n_pred = int(result.predictor_names.size());
  const int n_feat = int(result.feature_names.size());
  auto feature_slot = [&](int marker, int re_or_global) {
    for (int f = 0; f < n_feat; ++f) {
      if (feature_key[std::size_t(f)] ==
          std::make_pair(marker, re_or_global)) {
        return f;
      }
    }
    return -1;
  };

  const int b_total = forest.ntree();
  result.predictor_first_depth.assign(std::size_t(b_total),
                                      std::vector<int>(std::size_t(n_pred), 0));
  result.feature_first_depth.assign(std::size_t(b_total),
                                    std::vector<int>(std::size_t(n_feat), 0));
  result.predictor_use_count.assign(std::size_t(b_total),
                                    std::vector<int>(std::size_t(n_pred), 0));
  result.feature_use_count.assign(std::size_t(b_total),
                                  std::vector<int>(std::size_t(n_feat), 0));

  for (int b = 0; b < b_total; ++b) {
    auto& pd = result.predictor_first_depth[std::size_t(b)];
    auto& fd = result.feature_first_depth[std::size_t(b)];
    auto& pc = result.predictor_use_count[std::size_t(b)];
    auto& fc = result.feature_use_count[std::size_t(b)];
    for (const auto& [id, rec] : forest.trees[std::size_t(b)].nodes) {
      if (rec.kind == SplitKind::kLeaf) continue;
      int pred = -1;
      int feat = -1;
      switch (rec.kind) {
        case SplitKind::kLongitudinal:
          pred = rec.var_index;
          feat = feature_slot(rec.var_index, rec.feature_index);
          break;
        case SplitKind::kNumeric:
          pred = q + rec.var_index;
          feat = feature_slot(-1, pred);
          break;
        case SplitKind::kFactor:
          pred = q + n_num + rec.var_index;
          feat = feature_slot(-1, pred);
          break;
        case SplitKind::kLeaf:
          break;
      }
      pc[std::size_t(pred)]++;
      fc[std::size_t(feat)]++;
      if (pd[std::size_t(pred)] == 0 || rec.depth < pd[std::size_t(pred)]) {
        pd[std::size_t(pred)] = rec.depth;
      }
      if (fd[std::size_t(feat)] == 0 || rec.depth < fd[std::size_t(feat)]) {
        fd[std::size_t(feat)] = rec.depth;
      }
    }
  }

  auto average = [&](const std::vector<std::vector<int>>& first, int count,
                     std::vector<double>* mean, std::vector<int>* trees) {
    mean->assign(std::size_t(count),
                 std::numeric_limits<double>::quiet_NaN());
    trees->assign(std::size_t(count), 0);
    for (int j = 0; j < count; ++j) {
      double sum = 0.0;
      int used = 0;
      for (int b = 0; b < b_total; ++b) {
        const int d = first[std::size_t(b)][std::size_t(j)];
        if (d > 0) {
          sum += d;
          ++used;
        }
      }
      (*trees)[std::size_t(j)] = used;
      if (used > 0) (*mean)[std::size_t(j)] = sum / double(used);
    }
  };
  average(result.predictor_first_depth, n_pred, &result.predictor_mean_depth,
          &result.predictor_tree_count);
  average(result.feature_first_depth, n_feat, &result.feature_mean_depth,
          &result.feature_tree_count);

  result.mtry_below_max =
      forest.hp.mtry < int(forest.schema.marker_names.size()) + n_num +
                           int(forest.schema.factor_names.size());
  return result;
}

// ---------------------------------------------------------------------
// Report tables
// ---------------------------------------------------------------------

// Importance table sorted by descending importance; percentage mode adds
// the loss relative to the baseline error.
inline DelimitedTable importance_report(const std::vector<std::string>& names,
                                        const std::vector<double>& importance,
                                        double baseline,
                                        bool as_percentage = false) {
  DelimitedTable out;
  out.columns = {"name", "importance"};
  if (as_percentage) out.columns.push_back("pct");
  std::vector<std::size_t> order(names.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return importance[a] > importance[b];
  });
  for (std::size_t i : order) {
    std::vector<std::string> row{names[i], format_real(importance[i])};
    if (as_percentage) {
      row.push_back(baseline != 0.0
                        ? format_real(importance[i] / baseline * 100.0)
                        : "NA");
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

// Depth table sorted by ascending mean depth; never-used items last.
inline DelimitedTable depth_report(const std::vector<std::string>& names,
                                   const std::vector<double>& mean_depth,
                                   const std::vector<int>& tree_count) {
  DelimitedTable out;
  out.columns = {"name", "mean_depth", "trees"};
  std::vector<std::size_t> order(names.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const bool na_a = std::isnan(mean_depth[a]);
    const bool na_b = std::isnan(mean_depth[b]);
    if (na_a != na_b) return na_b;
    if (na_a) return a < b;
    if (mean_depth[a] != mean_depth[b]) return mean_depth[a] < mean_depth[b];
    return a < b;
  });
  for (std::size_t i : order) {
    out.rows.push_back({names[i], format_real(mean_depth[i]),
                        std::to_string(tree_count[i])});
  }
  return out;
}

}  // namespace lmforest
