// Command-line front end: train, predict, evaluate, vimp, gvimp, depth
// and simulate subcommands over delimited-text inputs and a JSON model
// archive. Exit codes: 0 success, 2 invalid input/config, 3 runtime
// failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lmforest/lmforest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct AppConfig {
  fs::path base_dir;
  char delimiter = ',';
  int threads = 1;

  // longitudinal block
  std::string long_path, long_id = "id", long_time = "time";
  std::vector<std::string> markers;
  std::vector<lmforest::LmmSpec> specs;

  // fixed block
  std::string fixed_path, fixed_id = "id";
  lmforest::FixedSchema fixed_schema;

  // outcome block
  std::string outcome_path, outcome_id = "id";
  std::string outcome_type;
  std::string value_column = "Y";
  std::vector<std::string> factor_levels;
  std::string time_column = "time", event_column = "event";
  int cause = 1;
  bool cause_given = false;

  lmforest::Hyperparams hp;
  std::vector<lmforest::PredictorGroup> groups;
};

std::string resolve(const AppConfig& cfg, const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return p.string();
  return (cfg.base_dir / p).string();
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw lmforest::DataError("FileNotFound", "cannot open '" + path + "'");
  }
  json root;
  try {
    root = json::parse(in);
  } catch (const json::exception& e) {
    throw lmforest::DataError("BadConfig", e.what());
  }

  AppConfig cfg;
  cfg.base_dir = fs::absolute(fs::path(path)).parent_path();
  if (root.contains("delimiter")) {
    const auto d = root["delimiter"].get<std::string>();
    if (d.size() != 1) {
      throw lmforest::DataError("BadConfig", "delimiter must be one char");
    }
    cfg.delimiter = d[0];
  }
  cfg.threads = root.value("threads", 1);

  if (root.contains("longitudinal")) {
    const json& lb = root["longitudinal"];
    cfg.long_path = lb.at("path").get<std::string>();
    cfg.long_id = lb.value("id", "id");
    cfg.long_time = lb.value("time", "time");
    cfg.markers = lb.at("markers").get<std::vector<std::string>>();
    const json& models = lb.at("models");
    for (const auto& m : cfg.markers) {
      if (!models.contains(m)) {
        throw lmforest::DataError("BadConfig",
                                  "no model block for marker '" + m + "'");
      }
      lmforest::LmmSpec spec;
      spec.marker = m;
      spec.design.fixed_degrees =
          models[m].at("fixed").get<std::vector<int>>();
      spec.design.random_degrees =
          models[m].at("random").get<std::vector<int>>();
      cfg.specs.push_back(std::move(spec));
    }
  }

  if (root.contains("fixed")) {
    const json& fb = root["fixed"];
    cfg.fixed_path = fb.at("path").get<std::string>();
    cfg.fixed_id = fb.value("id", "id");
    if (fb.contains("numeric")) {
      cfg.fixed_schema.numeric_columns =
          fb["numeric"].get<std::vector<std::string>>();
    }
    if (fb.contains("factor")) {
      for (const auto& f : fb["factor"]) {
        cfg.fixed_schema.factor_columns.push_back(
            {f.at("name").get<std::string>(),
             f.at("levels").get<std::vector<std::string>>()});
      }
    }
  }

  const json& ob = root.at("outcome");
  cfg.outcome_path = ob.at("path").get<std::string>();
  cfg.outcome_id = ob.value("id", "id");
  cfg.outcome_type = ob.at("type").get<std::string>();
  cfg.value_column = ob.value("value", "Y");
  if (ob.contains("levels")) {
    cfg.factor_levels = ob["levels"].get<std::vector<std::string>>();
  }
  cfg.time_column = ob.value("time", "time");
  cfg.event_column = ob.value("event", "event");
  if (ob.contains("cause")) {
    cfg.cause = ob["cause"].get<int>();
    cfg.cause_given = true;
  }

  if (root.contains("hyperparams")) {
    const json& hb = root["hyperparams"];
    cfg.hp.ntree = hb.value("ntree", 200);
    cfg.hp.mtry = hb.value("mtry", 0);
    cfg.hp.nodesize = hb.value("nodesize", 1);
    cfg.hp.minsplit = hb.value("minsplit", 2);
    const std::string opt = hb.value("nsplit_option", "quantile");
    if (opt == "quantile") {
      cfg.hp.nsplit_option = lmforest::SplitSampling::kQuantile;
    } else if (opt == "sample") {
      cfg.hp.nsplit_option = lmforest::SplitSampling::kSample;
    } else {
      throw lmforest::DataError("BadConfig",
                                "nsplit_option must be quantile or sample");
    }
    cfg.hp.seed = hb.value("seed", std::uint64_t(0));
    if (hb.contains("ibs_min") && !hb["ibs_min"].is_null()) {
      cfg.hp.ibs_min = hb["ibs_min"].get<double>();
    }
    if (hb.contains("ibs_max") && !hb["ibs_max"].is_null()) {
      cfg.hp.ibs_max = hb["ibs_max"].get<double>();
    }
  }

  if (root.contains("groups")) {
    for (const auto& [name, members] : root["groups"].items()) {
      cfg.groups.push_back(
          {name, members.get<std::vector<std::string>>()});
    }
  }
  return cfg;
}

lmforest::Outcome load_outcome(const AppConfig& cfg) {
  lmforest::Outcome outcome;
  const auto table = lmforest::read_delimited_file(
      resolve(cfg, cfg.outcome_path), cfg.delimiter);
  const int id_idx = table.require_column(cfg.outcome_id);

  if (cfg.outcome_type == "numeric") {
    outcome.mode = lmforest::OutcomeMode::kNumeric;
    const int v_idx = table.require_column(cfg.value_column);
    for (const auto& row : table.rows) {
      outcome.subject_ids.push_back(row[std::size_t(id_idx)]);
      outcome.numeric_value.push_back(
          lmforest::parse_real(row[std::size_t(v_idx)]));
    }
  } else if (cfg.outcome_type == "factor") {
    outcome.mode = lmforest::OutcomeMode::kFactor;
    const int v_idx = table.require_column(cfg.value_column);
    std::vector<std::string> levels = cfg.factor_levels;
    if (levels.empty()) {  // derive the level set from the data
      for (const auto& row : table.rows) {
        const auto& cell = row[std::size_t(v_idx)];
        if (std::find(levels.begin(), levels.end(), cell) == levels.end()) {
          levels.push_back(cell);
        }
      }
      std::sort(levels.begin(), levels.end());
    }
    outcome.levels = levels;
    for (const auto& row : table.rows) {
      outcome.subject_ids.push_back(row[std::size_t(id_idx)]);
      const auto& cell = row[std::size_t(v_idx)];
      auto it = std::find(levels.begin(), levels.end(), cell);
      if (it == levels.end()) {
        throw lmforest::DataError("UnknownLevel",
                                  "outcome value '" + cell + "' not a level");
      }
      outcome.category.push_back(int(it - levels.begin()));
    }
  } else if (cfg.outcome_type == "surv") {
    outcome.mode = lmforest::OutcomeMode::kSurvival;
    const int t_idx = table.require_column(cfg.time_column);
    const int e_idx = table.require_column(cfg.event_column);
    for (const auto& row : table.rows) {
      outcome.subject_ids.push_back(row[std::size_t(id_idx)]);
      outcome.time.push_back(lmforest::parse_real(row[std::size_t(t_idx)]));
      const double code = lmforest::parse_real(row[std::size_t(e_idx)]);
      if (code != std::floor(code)) {
        throw lmforest::DataError("BadOutcome",
                                  "event codes must be integers");
      }
      outcome.cause.push_back(int(code));
    }
    std::set<int> codes;
    for (int c : outcome.cause) {
      if (c > 0) codes.insert(c);
    }
    if (cfg.cause_given) {
      outcome.cause_of_interest = cfg.cause;
    } else if (codes.size() == 1) {
      outcome.cause_of_interest = *codes.begin();
    } else {
      throw lmforest::DataError(
          "MissingCause",
          "the data has competing causes; set outcome.cause");
    }
  } else {
    throw lmforest::DataError(
        "BadConfig", "outcome.type must be numeric, factor or surv");
  }
  return outcome;
}

lmforest::ValidatedDataset load_dataset(const AppConfig& cfg) {
  lmforest::LongitudinalTable longitudinal;
  if (!cfg.long_path.empty()) {
    longitudinal = lmforest::ingest_longitudinal(
        lmforest::read_delimited_file(resolve(cfg, cfg.long_path),
                                      cfg.delimiter),
        cfg.long_id, cfg.long_time, cfg.markers);
  }
  lmforest::FixedTable fixed;
  if (!cfg.fixed_path.empty()) {
    fixed = lmforest::ingest_fixed(
        lmforest::read_delimited_file(resolve(cfg, cfg.fixed_path),
                                      cfg.delimiter),
        cfg.fixed_id, cfg.fixed_schema);
  }
  return lmforest::validate_inputs(std::move(longitudinal), std::move(fixed),
                                   load_outcome(cfg), cfg.specs, cfg.hp);
}

void write_table(const fs::path& path, const lmforest::DelimitedTable& table,
                 char delim = ',') {
  std::ofstream out(path);
  if (!out) {
    throw lmforest::ModelError("WriteFailed",
                               "cannot write '" + path.string() + "'");
  }
  lmforest::write_delimited(out, table, delim);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) {
    throw lmforest::ModelError("WriteFailed",
                               "cannot write '" + path.string() + "'");
  }
  out << text;
}

struct HyperOverrides {
  std::optional<int> ntree, mtry, nodesize, minsplit, cause;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> nsplit_option;
  std::optional<double> ibs_min, ibs_max;
  std::optional<int> threads;

  void apply(AppConfig& cfg) const {
    if (ntree) cfg.hp.ntree = *ntree;
    if (mtry) cfg.hp.mtry = *mtry;
    if (nodesize) cfg.hp.nodesize = *nodesize;
    if (minsplit) cfg.hp.minsplit = *minsplit;
    if (seed) cfg.hp.seed = *seed;
    if (cause) {
      cfg.cause = *cause;
      cfg.cause_given = true;
    }
    if (nsplit_option) {
      if (*nsplit_option == "quantile") {
        cfg.hp.nsplit_option = lmforest::SplitSampling::kQuantile;
      } else if (*nsplit_option == "sample") {
        cfg.hp.nsplit_option = lmforest::SplitSampling::kSample;
      } else {
        throw lmforest::DataError("BadConfig",
                                  "--nsplit-option: quantile or sample");
      }
    }
    if (ibs_min) cfg.hp.ibs_min = *ibs_min;
    if (ibs_max) cfg.hp.ibs_max = *ibs_max;
    if (threads) cfg.threads = *threads;
  }
};

void add_override_flags(CLI::App* cmd, HyperOverrides& ov) {
  cmd->add_option("--ntree", ov.ntree, "number of trees");
  cmd->add_option("--mtry", ov.mtry, "candidates drawn per node");
  cmd->add_option("--nodesize", ov.nodesize, "minimal leaf size");
  cmd->add_option("--minsplit", ov.minsplit,
                  "minimal events to split (survival)");
  cmd->add_option("--cause", ov.cause, "cause of interest (survival)");
  cmd->add_option("--seed", ov.seed, "random seed");
  cmd->add_option("--nsplit-option", ov.nsplit_option,
                  "cutpoint rule: quantile or sample");
  cmd->add_option("--ibs-min", ov.ibs_min, "IBS lower bound");
  cmd->add_option("--ibs-max", ov.ibs_max, "IBS upper bound");
  cmd->add_option("--threads", ov.threads, "worker threads");
}

int run_train(const std::string& config_path, const std::string& out_dir,
              const HyperOverrides& ov, bool dump_splits) {
  AppConfig cfg = load_config(config_path);
  ov.apply(cfg);
  const auto dataset = load_dataset(cfg);
  fs::create_directories(out_dir);

  const auto start = std::chrono::steady_clock::now();
  const lmforest::Forest forest = lmforest::grow_forest(dataset, cfg.threads);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();

  lmforest::save_forest(forest, (fs::path(out_dir) / "model.json").string());
  write_text(fs::path(out_dir) / "summary.txt",
             lmforest::summarize(forest, nullptr, secs, cfg.threads));
  if (dump_splits) {
    const bool survival =
        forest.mode == lmforest::OutcomeMode::kSurvival;
    for (int b = 0; b < forest.ntree(); ++b) {
      write_table(fs::path(out_dir) /
                      ("v_split_tree" + std::to_string(b + 1) + ".csv"),
                  lmforest::v_split_table(forest.trees[std::size_t(b)],
                                          survival),
                  cfg.delimiter);
    }
  }
  std::cout << lmforest::summarize(forest, nullptr, secs, cfg.threads);
  std::cout << "model: " << (fs::path(out_dir) / "model.json").string()
            << "\n";
  return 0;
}

int run_evaluate(const std::string& config_path, const std::string& model_path,
                 const std::string& out_dir, const HyperOverrides& ov) {
  AppConfig cfg = load_config(config_path);
  ov.apply(cfg);
  lmforest::Forest forest = lmforest::load_forest(model_path);
  cfg.hp = forest.hp;  // evaluation must use the training hyperparameters
  const auto dataset = load_dataset(cfg);
  fs::create_directories(out_dir);

  const auto oob = lmforest::compute_oob_error(forest, dataset, cfg.threads);

  lmforest::DelimitedTable table;
  table.columns = {"id", "error"};
  for (int i = 0; i < dataset.n_subjects(); ++i) {
    table.rows.push_back(
        {dataset.outcome.subject_ids[std::size_t(i)],
         lmforest::format_real(oob.per_subject[std::size_t(i)])});
  }
  table.rows.push_back({"mean", lmforest::format_real(oob.mean)});
  write_table(fs::path(out_dir) / "oob.csv", table, cfg.delimiter);

  std::string summary = lmforest::summarize(forest, &oob);
  summary += "model_hash: " + forest.data_hash + "\n";
  write_text(fs::path(out_dir) / "summary.txt", summary);
  std::cout << summary;
  return 0;
}

int run_predict(const std::string& model_path, const std::string& out_dir,
                const std::string& time_data, const std::string& fixed_data,
                const std::string& id_col, const std::string& time_col,
                std::optional<double> t0, const std::string& outcome_data,
                const std::string& outcome_time, bool at_risk_only,
                int threads, char delim) {
  const lmforest::Forest forest = lmforest::load_forest(model_path);

  lmforest::LongitudinalTable longitudinal;
  if (!time_data.empty()) {
    longitudinal = lmforest::ingest_longitudinal(
        lmforest::read_delimited_file(time_data, delim), id_col, time_col,
        forest.schema.marker_names);
  }
  lmforest::FixedTable fixed;
  if (!fixed_data.empty()) {
    lmforest::FixedSchema schema;
    schema.numeric_columns = forest.schema.numeric_names;
    for (std::size_t j = 0; j < forest.schema.factor_names.size(); ++j) {
      schema.factor_columns.push_back({forest.schema.factor_names[j],
                                       forest.schema.factor_levels[j]});
    }
    fixed = lmforest::ingest_fixed(
        lmforest::read_delimited_file(fixed_data, delim), id_col, schema);
  }

  // Optional at-risk filter: keep subjects with outcome time beyond t0.
  if (at_risk_only) {
    if (!t0 || outcome_data.empty()) {
      throw lmforest::DataError(
          "BadConfig", "--at-risk-only needs --t0 and --outcome-data");
    }
    const auto table = lmforest::read_delimited_file(outcome_data, delim);
    const int id_idx = table.require_column(id_col);
    const int t_idx = table.require_column(outcome_time);
    std::unordered_map<std::string, double> horizon;
    for (const auto& row : table.rows) {
      horizon[row[std::size_t(id_idx)]] =
          lmforest::parse_real(row[std::size_t(t_idx)]);
    }
    auto at_risk = [&](const std::string& id) {
      auto it = horizon.find(id);
      return it != horizon.end() && it->second > *t0;
    };
    lmforest::LongitudinalTable lt;
    lt.marker_names = longitudinal.marker_names;
    for (std::size_t s = 0; s < longitudinal.subject_ids.size(); ++s) {
      if (!at_risk(longitudinal.subject_ids[s])) continue;
      lt.subject_ids.push_back(longitudinal.subject_ids[s]);
      lt.series.push_back(longitudinal.series[s]);
    }
    lt.rebuild_index();
    longitudinal = std::move(lt);
    lmforest::FixedTable ft;
    ft.numeric = fixed.numeric;
    ft.factors = fixed.factors;
    for (auto& c : ft.numeric) c.values.clear();
    for (auto& c : ft.factors) c.values.clear();
    for (std::size_t s = 0; s < fixed.subject_ids.size(); ++s) {
      if (!at_risk(fixed.subject_ids[s])) continue;
      ft.subject_ids.push_back(fixed.subject_ids[s]);
      for (std::size_t j = 0; j < fixed.numeric.size(); ++j) {
        ft.numeric[j].values.push_back(fixed.numeric[j].values[s]);
      }
      for (std::size_t j = 0; j < fixed.factors.size(); ++j) {
        ft.factors[j].values.push_back(fixed.factors[j].values[s]);
      }
    }
    ft.rebuild_index();
    fixed = std::move(ft);
  }

  const auto result =
      lmforest::predict_new(forest, longitudinal, fixed, t0, threads);
  fs::create_directories(out_dir);

  lmforest::DelimitedTable pred;
  switch (forest.mode) {
    case lmforest::OutcomeMode::kNumeric: {
      pred.columns = {"id", "pred"};
      for (std::size_t i = 0; i < result.subject_ids.size(); ++i) {
        pred.rows.push_back(
            {result.subject_ids[i],
             lmforest::format_real(result.predictions[i].value)});
      }
      break;
    }
    case lmforest::OutcomeMode::kFactor: {
      pred.columns = {"id", "pred", "proba"};
      for (std::size_t i = 0; i < result.subject_ids.size(); ++i) {
        pred.rows.push_back(
            {result.subject_ids[i],
             forest.levels[std::size_t(result.predictions[i].category)],
             lmforest::format_real(result.predictions[i].vote_share)});
      }
      break;
    }
    case lmforest::OutcomeMode::kSurvival: {
      pred.columns = {"id", "time", "cif"};
      for (std::size_t i = 0; i < result.subject_ids.size(); ++i) {
        for (std::size_t j = 0; j < result.times.size(); ++j) {
          pred.rows.push_back(
              {result.subject_ids[i], lmforest::format_real(result.times[j]),
               lmforest::format_real(result.predictions[i].cif[j])});
        }
      }
      break;
    }
  }
  write_table(fs::path(out_dir) / "pred_indiv.csv", pred, delim);

  lmforest::DelimitedTable leaves;
  leaves.columns = {"id"};
  for (int b = 1; b <= forest.ntree(); ++b) {
    leaves.columns.push_back("tree" + std::to_string(b));
  }
  for (std::size_t i = 0; i < result.subject_ids.size(); ++i) {
    std::vector<std::string> row{result.subject_ids[i]};
    for (int leaf : result.leaf_ids[i]) row.push_back(std::to_string(leaf));
    leaves.rows.push_back(std::move(row));
  }
  write_table(fs::path(out_dir) / "pred_leaf.csv", leaves, delim);

  std::string note = "model_hash: " + forest.data_hash + "\n";
  if (t0) note += "t0: " + lmforest::format_real(*t0) + "\n";
  note += "subjects: " + std::to_string(result.subject_ids.size()) + "\n";
  write_text(fs::path(out_dir) / "predict_summary.txt", note);
  std::cout << note;
  return 0;
}

int run_vimp(const std::string& config_path, const std::string& model_path,
             const std::string& out_dir, const HyperOverrides& ov,
             std::uint64_t seed, int repeats, const std::string& mode,
             bool pct) {
  AppConfig cfg = load_config(config_path);
  ov.apply(cfg);
  lmforest::Forest forest = lmforest::load_forest(model_path);
  cfg.hp = forest.hp;
  const auto dataset = load_dataset(cfg);
  fs::create_directories(out_dir);

  lmforest::VimpOptions opts;
  opts.seed = seed;
  opts.repeats = repeats;
  opts.threads = cfg.threads;
  if (mode == "trajectory") {
    opts.trajectory_mode = true;
  } else if (mode != "observation") {
    throw lmforest::DataError("BadConfig",
                              "--mode: observation or trajectory");
  }
  const auto vimp = lmforest::compute_vimp(forest, dataset, opts);
  write_table(fs::path(out_dir) / "vimp.csv",
              lmforest::importance_report(vimp.names, vimp.importance,
                                          vimp.baseline, pct),
              cfg.delimiter);
  std::string summary = "baseline_oob_error: " +
                        lmforest::format_real(vimp.baseline) + "\n" +
                        "permutation_seed: " + std::to_string(vimp.seed) +
                        "\n" + "model_hash: " + forest.data_hash + "\n";
  write_text(fs::path(out_dir) / "vimp_summary.txt", summary);
  std::cout << summary;
  return 0;
}

int run_gvimp(const std::string& config_path, const std::string& model_path,
              const std::string& out_dir, const HyperOverrides& ov,
              std::uint64_t seed, int repeats, bool pct) {
  AppConfig cfg = load_config(config_path);
  ov.apply(cfg);
  if (cfg.groups.empty()) {
    throw lmforest::DataError("BadConfig",
                              "gvimp needs a groups block in the config");
  }
  lmforest::Forest forest = lmforest::load_forest(model_path);
  cfg.hp = forest.hp;
  const auto dataset = load_dataset(cfg);
  fs::create_directories(out_dir);

  lmforest::VimpOptions opts;
  opts.seed = seed;
  opts.repeats = repeats;
  opts.threads = cfg.threads;
  const auto gvimp =
      lmforest::compute_gvimp(forest, dataset, cfg.groups, opts);
  write_table(fs::path(out_dir) / "gvimp.csv",
              lmforest::importance_report(gvimp.group_names, gvimp.importance,
                                          gvimp.baseline, pct),
              cfg.delimiter);
  std::string summary = "baseline_oob_error: " +
                        lmforest::format_real(gvimp.baseline) + "\n" +
                        "permutation_seed: " + std::to_string(gvimp.seed) +
                        "\n" + "model_hash: " + forest.data_hash + "\n";
  write_text(fs::path(out_dir) / "gvimp_summary.txt", summary);
  std::cout << summary;
  return 0;
}

int run_depth(const std::string& model_path, const std::string& out_dir) {
  const lmforest::Forest forest = lmforest::load_forest(model_path);
  const auto depth = lmforest::compute_min_depth(forest);
  fs::create_directories(out_dir);
  write_table(fs::path(out_dir) / "depth_predictor.csv",
              lmforest::depth_report(depth.predictor_names,
                                     depth.predictor_mean_depth,
                                     depth.predictor_tree_count));
  write_table(fs::path(out_dir) / "depth_feature.csv",
              lmforest::depth_report(depth.feature_names,
                                     depth.feature_mean_depth,
                                     depth.feature_tree_count));
  std::string summary = "model_hash: " + forest.data_hash + "\n";
  if (depth.mtry_below_max) {
    summary +=
        "warning: mtry is below P+Q; minimal depth is easier to read on a "
        "forest grown with mtry at its maximum\n";
  }
  write_text(fs::path(out_dir) / "depth_summary.txt", summary);
  std::cout << summary;
  return 0;
}

int run_simulate(const std::string& out_dir, int subjects, int markers,
                 int visits, double jitter, std::uint64_t seed) {
  lmforest::SimConfig cfg;
  cfg.n_subjects = subjects;
  cfg.n_markers = markers;
  cfg.n_visits = visits;
  cfg.jitter_sd = jitter;
  cfg.seed = seed;
  const auto sim = lmforest::generate(cfg);
  fs::create_directories(out_dir);

  write_table(fs::path(out_dir) / "longitudinal.csv",
              lmforest::emit_longitudinal(sim.longitudinal));
  write_table(fs::path(out_dir) / "fixed.csv",
              lmforest::emit_fixed(sim.fixed));
  {
    auto outcome = lmforest::emit_outcome(sim.outcome);
    outcome.columns[1] = "Y_res";
    write_table(fs::path(out_dir) / "outcome.csv", outcome);
  }
  {
    lmforest::DelimitedTable truth;
    truth.columns = {"id"};
    for (const auto& name : sim.longitudinal.marker_names) {
      truth.columns.push_back(name + ".b0");
      truth.columns.push_back(name + ".b1");
    }
    for (std::size_t i = 0; i < sim.outcome.subject_ids.size(); ++i) {
      std::vector<std::string> row{sim.outcome.subject_ids[i]};
      for (std::size_t m = 0; m < sim.longitudinal.marker_names.size(); ++m) {
        row.push_back(lmforest::format_real(sim.true_intercept[i][m]));
        row.push_back(lmforest::format_real(sim.true_slope[i][m]));
      }
      truth.rows.push_back(std::move(row));
    }
    write_table(fs::path(out_dir) / "truth.csv", truth);
  }

  // A ready-to-train configuration for the emitted files.
  json models;
  for (const auto& name : sim.longitudinal.marker_names) {
    models[name] = {{"fixed", {0, 1}}, {"random", {0, 1}}};
  }
  json cfg_json = {
      {"longitudinal",
       {{"path", "longitudinal.csv"},
        {"id", "id"},
        {"time", "time"},
        {"markers", sim.longitudinal.marker_names},
        {"models", models}}},
      {"fixed",
       {{"path", "fixed.csv"},
        {"id", "id"},
        {"numeric", {"cont_covar1", "cont_covar2"}},
        {"factor",
         json::array({{{"name", "bin_covar1"}, {"levels", {"0", "1"}}},
                      {{"name", "bin_covar2"}, {"levels", {"0", "1"}}}})}}},
      {"outcome",
       {{"path", "outcome.csv"},
        {"id", "id"},
        {"type", "numeric"},
        {"value", "Y_res"}}},
      {"hyperparams",
       {{"ntree", 200},
        {"mtry", 0},
        {"nodesize", 1},
        {"seed", 1234},
        {"nsplit_option", "quantile"}}},
      {"threads", 2}};
  write_text(fs::path(out_dir) / "config.json", cfg_json.dump(2) + "\n");
  std::cout << "simulated " << subjects << " subjects, " << markers
            << " markers -> " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Random forests with longitudinal predictors summarized by "
      "mixed-model random effects"};
  app.require_subcommand(1);

  std::string config_path, model_path, out_dir;
  HyperOverrides ov;
  bool dump_splits = false;

  auto* train = app.add_subcommand("train", "grow a forest");
  train->add_option("--config", config_path, "JSON configuration")
      ->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_flag("--dump-splits", dump_splits,
                  "write the per-tree split tables");
  add_override_flags(train, ov);

  auto* evaluate = app.add_subcommand("evaluate", "out-of-bag error");
  evaluate->add_option("--config", config_path, "JSON configuration")
      ->required();
  evaluate->add_option("--model", model_path, "model archive")->required();
  evaluate->add_option("--out", out_dir, "output directory")->required();
  add_override_flags(evaluate, ov);

  std::string time_data, fixed_data, outcome_data;
  std::string id_col = "id", time_col = "time", outcome_time = "time";
  std::optional<double> t0;
  bool at_risk_only = false;
  int predict_threads = 1;
  std::string predict_delim = ",";
  auto* predict = app.add_subcommand("predict", "predict new subjects");
  predict->add_option("--model", model_path, "model archive")->required();
  predict->add_option("--out", out_dir, "output directory")->required();
  predict->add_option("--time-data", time_data, "longitudinal measurements");
  predict->add_option("--fixed-data", fixed_data, "time-fixed predictors");
  predict->add_option("--id", id_col, "id column name");
  predict->add_option("--time", time_col, "time column name");
  predict->add_option("--t0", t0, "landmark time");
  predict->add_option("--outcome-data", outcome_data,
                      "outcome table (for --at-risk-only)");
  predict->add_option("--outcome-time", outcome_time,
                      "outcome time column (for --at-risk-only)");
  predict->add_flag("--at-risk-only", at_risk_only,
                    "keep only subjects still at risk at t0");
  predict->add_option("--threads", predict_threads, "worker threads");
  predict->add_option("--delimiter", predict_delim, "field delimiter");

  std::uint64_t perm_seed = 0;
  int repeats = 1;
  std::string perm_mode = "observation";
  bool pct = false;
  auto* vimp = app.add_subcommand("vimp", "permutation importance");
  vimp->add_option("--config", config_path, "JSON configuration")->required();
  vimp->add_option("--model", model_path, "model archive")->required();
  vimp->add_option("--out", out_dir, "output directory")->required();
  vimp->add_option("--perm-seed", perm_seed, "permutation seed");
  vimp->add_option("--repeats", repeats, "permutations per tree");
  vimp->add_option("--mode", perm_mode,
                   "longitudinal permutation: observation or trajectory");
  vimp->add_flag("--pct", pct, "also report percentage of baseline error");
  add_override_flags(vimp, ov);

  auto* gvimp = app.add_subcommand("gvimp", "grouped permutation importance");
  gvimp->add_option("--config", config_path, "JSON configuration")
      ->required();
  gvimp->add_option("--model", model_path, "model archive")->required();
  gvimp->add_option("--out", out_dir, "output directory")->required();
  gvimp->add_option("--perm-seed", perm_seed, "permutation seed");
  gvimp->add_option("--repeats", repeats, "permutations per tree");
  gvimp->add_flag("--pct", pct, "also report percentage of baseline error");
  add_override_flags(gvimp, ov);

  auto* depth = app.add_subcommand("depth", "minimal depth analytics");
  depth->add_option("--model", model_path, "model archive")->required();
  depth->add_option("--out", out_dir, "output directory")->required();

  int sim_subjects = 200, sim_markers = 6, sim_visits = 6;
  double sim_jitter = 0.1;
  std::uint64_t sim_seed = 0;
  auto* simulate = app.add_subcommand("simulate", "emit a synthetic dataset");
  simulate->add_option("--out", out_dir, "output directory")->required();
  simulate->add_option("--subjects", sim_subjects, "number of subjects");
  simulate->add_option("--markers", sim_markers, "number of markers");
  simulate->add_option("--visits", sim_visits, "visits per subject");
  simulate->add_option("--jitter", sim_jitter, "visit jitter sd");
  simulate->add_option("--seed", sim_seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      return run_train(config_path, out_dir, ov, dump_splits);
    }
    if (evaluate->parsed()) {
      return run_evaluate(config_path, model_path, out_dir, ov);
    }
    if (predict->parsed()) {
      if (predict_delim.size() != 1) {
        throw lmforest::DataError("BadConfig", "delimiter must be one char");
      }
      return run_predict(model_path, out_dir, time_data, fixed_data, id_col,
                         time_col, t0, outcome_data, outcome_time,
                         at_risk_only, predict_threads, predict_delim[0]);
    }
    if (vimp->parsed()) {
      return run_vimp(config_path, model_path, out_dir, ov, perm_seed,
                      repeats, perm_mode, pct);
    }
    if (gvimp->parsed()) {
      return run_gvimp(config_path, model_path, out_dir, ov, perm_seed,
                       repeats, pct);
    }
    if (depth->parsed()) {
      return run_depth(model_path, out_dir);
    }
    if (simulate->parsed()) {
      return run_simulate(out_dir, sim_subjects, sim_markers, sim_visits,
                          sim_jitter, sim_seed);
    }
  } catch (const lmforest::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const lmforest::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
