#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lmforest/importance.hpp"
#include "lmforest/simulate.hpp"

using namespace lmforest;

namespace {

ValidatedDataset simgen_dataset(int n, int ntree, int mtry, int nodesize,
                                std::uint64_t seed) {
  SimConfig cfg;
  cfg.n_subjects = n;
  cfg.seed = seed;
  auto sim = generate(cfg);
  std::vector<LmmSpec> specs;
  for (const auto& m : sim.longitudinal.marker_names) {
    LmmSpec s;
    s.marker = m;
    specs.push_back(s);
  }
  Hyperparams hp;
  hp.ntree = ntree;
  hp.mtry = mtry;
  hp.nodesize = nodesize;
  hp.seed = seed;
  return validate_inputs(sim.longitudinal, sim.fixed, sim.outcome, specs, hp);
}

ValidatedDataset informative_fixed_dataset(int n, int ntree,
                                           std::uint64_t seed) {
  Rng gen(seed);
  FixedTable fixed;
  Outcome outcome;
  outcome.mode = OutcomeMode::kNumeric;
  std::vector<double> x, noise;
  for (int i = 0; i < n; ++i) {
    const std::string id = "s" + std::to_string(i);
    fixed.subject_ids.push_back(id);
    outcome.subject_ids.push_back(id);
    x.push_back(gen.normal());
    noise.push_back(gen.normal());
    outcome.numeric_value.push_back(3.0 * x.back() + 0.5 * gen.normal());
  }
  fixed.numeric.push_back({"signal", x});
  fixed.numeric.push_back({"noise", noise});
  fixed.rebuild_index();
  Hyperparams hp;
  hp.ntree = ntree;
  hp.mtry = 1;
  hp.nodesize = 2;
  hp.seed = seed;
  return validate_inputs({}, fixed, outcome, {}, hp);
}

}  // namespace

TEST_CASE("permutation preserves the marginal distribution") {
  auto ds = simgen_dataset(20, 2, 10, 3, 8);
  Forest f = grow_forest(ds);
  const Tree& tree = f.trees[0];
  std::vector<RoutingData> rows;
  for (int i : tree.oob_ids) rows.push_back(routing_data_for(ds, i));
  auto before = rows;

  Rng rng(33);
  detail::permute_predictor(f, rows, 0, false, rng);  // marker1, obs level
  std::vector<double> a, b;
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const auto& sa = before[j].series[0];
    const auto& sb = rows[j].series[0];
    REQUIRE(sa.time == sb.time);  // times untouched
    a.insert(a.end(), sa.value.begin(), sa.value.end());
    b.insert(b.end(), sb.value.begin(), sb.value.end());
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);

  Rng rng2(33);
  detail::permute_predictor(f, rows, 6, false, rng2);  // cont_covar1
  std::vector<double> c, d;
  for (std::size_t j = 0; j < rows.size(); ++j) {
    c.push_back(before[j].numeric_values[0]);
    d.push_back(rows[j].numeric_values[0]);
  }
  std::sort(c.begin(), c.end());
  std::sort(d.begin(), d.end());
  CHECK(c == d);
}

TEST_CASE("VIMP separates signal from noise and is deterministic") {
  auto ds = informative_fixed_dataset(60, 40, 5);
  Forest f = grow_forest(ds, 2);
  VimpOptions opts;
  opts.seed = 99;
  opts.threads = 2;
  auto vimp = compute_vimp(f, ds, opts);
  REQUIRE(vimp.names.size() == 2);
  CHECK(vimp.names[0] == "signal");
  CHECK(vimp.importance[0] > 0.0);
  CHECK(vimp.importance[0] > vimp.importance[1]);
  CHECK(vimp.baseline > 0.0);

  auto again = compute_vimp(f, ds, opts);
  CHECK(vimp.importance == again.importance);

  VimpOptions other;
  other.seed = 100;
  other.threads = 2;
  auto shifted = compute_vimp(f, ds, other);
  CHECK(vimp.importance != shifted.importance);
}

TEST_CASE("a predictor used in no tree has exactly zero VIMP") {
  // mtry = 1 and an overwhelming signal: noise may appear in some trees,
  // so instead check the skip logic directly with a never-used predictor.
  auto ds = informative_fixed_dataset(40, 25, 6);
  Forest f = grow_forest(ds);
  // find a predictor absent from every tree, if any
  std::vector<bool> used(2, false);
  for (const auto& tree : f.trees) {
    for (int g : detail::predictors_used(f, tree)) used[std::size_t(g)] = true;
  }
  VimpOptions opts;
  opts.seed = 1;
  auto vimp = compute_vimp(f, ds, opts);
  for (int p = 0; p < 2; ++p) {
    if (!used[std::size_t(p)]) {
      CHECK(vimp.importance[std::size_t(p)] == 0.0);
    }
  }
}

TEST_CASE("gVIMP with a singleton group equals VIMP under the same seed") {
  auto ds = informative_fixed_dataset(50, 30, 12);
  Forest f = grow_forest(ds, 2);
  VimpOptions opts;
  opts.seed = 7;
  opts.threads = 2;
  auto vimp = compute_vimp(f, ds, opts);
  auto gvimp = compute_gvimp(f, ds, {{"solo", {"signal"}}}, opts);
  CHECK(gvimp.importance[0] == vimp.importance[0]);
}

TEST_CASE("gVIMP validates groups") {
  auto ds = informative_fixed_dataset(30, 10, 3);
  Forest f = grow_forest(ds);
  VimpOptions opts;
  CHECK_THROWS_WITH_AS(
      compute_gvimp(f, ds, {{"g", {"nope"}}}, opts),
      doctest::Contains("UnknownPredictor"), DataError);
  CHECK_THROWS_WITH_AS(compute_gvimp(f, ds,
                                     {{"g1", {"signal"}},
                                      {"g2", {"signal"}}},
                                     opts),
                       doctest::Contains("OverlappingGroups"), DataError);
  CHECK_THROWS_AS(compute_gvimp(f, ds, {{"g", {}}}, opts), DataError);
}

TEST_CASE("compute_min_depth bookkeeping") {
  auto ds = informative_fixed_dataset(60, 20, 9);
  Forest f = grow_forest(ds);
  auto depth = compute_min_depth(f);
  REQUIRE(depth.predictor_names.size() == 2);
  REQUIRE(depth.feature_names.size() == 2);

  // the signal predictor should be at the root of most trees
  CHECK(depth.predictor_tree_count[0] > 0);
  CHECK(depth.predictor_mean_depth[0] >= 1.0);
  CHECK(depth.predictor_mean_depth[0] < 2.5);

  // never-used predictors carry count 0 and no average
  for (std::size_t p = 0; p < 2; ++p) {
    if (depth.predictor_tree_count[p] == 0) {
      CHECK(std::isnan(depth.predictor_mean_depth[p]));
    }
  }

  // per-tree consistency: predictor depth equals the min over its
  // features (trivial here: one feature per fixed predictor)
  for (int b = 0; b < f.ntree(); ++b) {
    for (std::size_t p = 0; p < 2; ++p) {
      CHECK(depth.predictor_first_depth[std::size_t(b)][p] ==
            depth.feature_first_depth[std::size_t(b)][p]);
    }
  }
  // mtry = 1 < P so the advisory flag is on
  CHECK(depth.mtry_below_max);
}

TEST_CASE("min depth expands marker features and respects mtry flag") {
  auto ds = simgen_dataset(40, 6, 10, 4, 21);
  Forest f = grow_forest(ds, 2);
  auto depth = compute_min_depth(f);
  // 6 markers x 2 effects + 4 fixed = 16 features
  CHECK(depth.feature_names.size() == 16);
  CHECK(depth.feature_names[0] == "marker1.bi0");
  CHECK(depth.feature_names[1] == "marker1.bi1");
  CHECK(!depth.mtry_below_max);

  // predictor depth equals min over its two features per tree
  for (int b = 0; b < f.ntree(); ++b) {
    for (int m = 0; m < 6; ++m) {
      const int d0 =
          depth.feature_first_depth[std::size_t(b)][std::size_t(2 * m)];
      const int d1 =
          depth.feature_first_depth[std::size_t(b)][std::size_t(2 * m + 1)];
      int expect = 0;
      if (d0 > 0 && d1 > 0) {
        expect = std::min(d0, d1);
      } else {
        expect = std::max(d0, d1);
      }
      CHECK(depth.predictor_first_depth[std::size_t(b)][std::size_t(m)] ==
            expect);
    }
  }
}

TEST_CASE("a duplicated informative predictor dilutes both copies") {
  // correlation dilution: compare the solo VIMP of the signal against
  // its VIMP when an exact copy competes for the same splits
  Rng gen(77);
  const int n = 80;
  std::vector<double> x, noise;
  Outcome outcome;
  outcome.mode = OutcomeMode::kNumeric;
  for (int i = 0; i < n; ++i) {
    outcome.subject_ids.push_back("s" + std::to_string(i));
    x.push_back(gen.normal());
    noise.push_back(gen.normal());
    outcome.numeric_value.push_back(2.5 * x.back() + 0.8 * gen.normal());
  }
  FixedTable solo;
  solo.subject_ids = outcome.subject_ids;
  solo.numeric.push_back({"signal", x});
  solo.numeric.push_back({"noise", noise});
  solo.rebuild_index();
  Hyperparams hp;
  hp.ntree = 40;
  hp.mtry = 2;
  hp.nodesize = 4;
  hp.seed = 3;
  auto ds_solo = validate_inputs({}, solo, outcome, {}, hp);
  Forest f_solo = grow_forest(ds_solo, 2);
  VimpOptions opts;
  opts.seed = 5;
  opts.threads = 2;
  const auto v_solo = compute_vimp(f_solo, ds_solo, opts);

  FixedTable dup = solo;
  dup.numeric.push_back({"signal_copy", x});
  dup.rebuild_index();
  auto ds_dup = validate_inputs({}, dup, outcome, {}, hp);
  Forest f_dup = grow_forest(ds_dup, 2);
  const auto v_dup = compute_vimp(f_dup, ds_dup, opts);

  const double solo_vimp = v_solo.importance[0];
  const double dup_vimp = v_dup.importance[0];
  const double copy_vimp = v_dup.importance[2];
  CHECK(solo_vimp > 0.0);
  CHECK(dup_vimp < solo_vimp);
  CHECK(copy_vimp < solo_vimp);
}

TEST_CASE("a group of unused noise predictors has zero gVIMP") {
  Rng gen(31);
  const int n = 90;
  std::vector<double> x, n1, n2;
  Outcome outcome;
  outcome.mode = OutcomeMode::kNumeric;
  for (int i = 0; i < n; ++i) {
    outcome.subject_ids.push_back("s" + std::to_string(i));
    x.push_back(gen.normal());
    n1.push_back(gen.normal());
    n2.push_back(gen.normal());
    outcome.numeric_value.push_back(3.0 * x.back() + 0.2 * gen.normal());
  }
  FixedTable fixed;
  fixed.subject_ids = outcome.subject_ids;
  fixed.numeric.push_back({"signal", x});
  fixed.numeric.push_back({"noise1", n1});
  fixed.numeric.push_back({"noise2", n2});
  fixed.rebuild_index();
  Hyperparams hp;
  hp.ntree = 30;
  hp.mtry = 3;
  hp.nodesize = 12;
  hp.seed = 21;
  auto ds = validate_inputs({}, fixed, outcome, {}, hp);
  Forest f = grow_forest(ds, 2);
  int noise_splits = 0;
  for (const auto& tree : f.trees) {
    for (int g : detail::predictors_used(f, tree)) noise_splits += g != 0;
  }
  REQUIRE(noise_splits == 0);  // the strong signal wins every split
  VimpOptions opts;
  opts.seed = 9;
  auto gv = compute_gvimp(f, ds, {{"junk", {"noise1", "noise2"}}}, opts);
  CHECK(gv.importance[0] == 0.0);
}

TEST_CASE("a predictor splitting every root has mean depth 1, count B") {
  Rng gen(13);
  const int n = 50;
  std::vector<double> x;
  Outcome outcome;
  outcome.mode = OutcomeMode::kNumeric;
  for (int i = 0; i < n; ++i) {
    outcome.subject_ids.push_back("s" + std::to_string(i));
    x.push_back(gen.normal());
    outcome.numeric_value.push_back(x.back());
  }
  FixedTable fixed;
  fixed.subject_ids = outcome.subject_ids;
  fixed.numeric.push_back({"x", x});
  fixed.rebuild_index();
  Hyperparams hp;
  hp.ntree = 12;
  hp.mtry = 1;
  hp.nodesize = 10;
  auto ds = validate_inputs({}, fixed, outcome, {}, hp);
  Forest f = grow_forest(ds);
  auto depth = compute_min_depth(f);
  CHECK(depth.predictor_mean_depth[0] == 1.0);
  CHECK(depth.predictor_tree_count[0] == f.ntree());
}

TEST_CASE("importance_report sorts and converts to percentages") {
  auto table = importance_report({"a", "b"}, {0.02, 0.01}, 0.10, true);
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[0][0] == "a");
  CHECK(table.rows[0][2] == "20");
  CHECK(table.rows[1][2] == "10");

  auto empty = depth_report({}, {}, {});
  CHECK(empty.rows.empty());

  auto depth = depth_report({"x", "y", "z"},
                            {2.5, std::numeric_limits<double>::quiet_NaN(),
                             1.5},
                            {4, 0, 9});
  CHECK(depth.rows[0][0] == "z");
  CHECK(depth.rows[1][0] == "x");
  CHECK(depth.rows[2][0] == "y");  // never used sorts last
}
