#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmforest/csv.hpp"
#include "lmforest/forest.hpp"

namespace lmforest {

namespace detail {

using nlohmann::json;

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
  const Eigen::Index rows = Eigen::Index(j.size());
  const Eigen::Index cols = rows > 0 ? Eigen::Index(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = j[std::size_t(r)][std::size_t(c)].get<double>();
    }
  }
  return m;
}

inline json cif_to_json(const CifCurve& cif) {
  return json{{"times", cif.times}, {"values", cif.values}};
}

inline CifCurve cif_from_json(const json& j) {
  CifCurve cif;
  cif.times = j.at("times").get<std::vector<double>>();
  cif.values = j.at("values").get<std::vector<double>>();
  return cif;
}

inline json fit_to_json(const LmmFit& fit) {
  std::vector<double> beta(fit.beta.data(), fit.beta.data() + fit.beta.size());
  return json{{"beta", beta},
              {"re_cov", matrix_to_json(fit.re_cov)},
              {"sigma2", fit.sigma2},
              {"loglik", fit.loglik},
              {"converged", fit.converged},
              {"n_subjects", fit.n_subjects},
              {"n_obs", fit.n_obs}};
}

inline LmmFit fit_from_json(const json& j) {
  LmmFit fit;
  const auto beta = j.at("beta").get<std::vector<double>>();
  fit.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(),
                                               Eigen::Index(beta.size()));
  fit.re_cov = matrix_from_json(j.at("re_cov"));
  fit.sigma2 = j.at("sigma2").get<double>();
  fit.loglik = j.at("loglik").get<double>();
  fit.converged = j.at("converged").get<bool>();
  fit.n_subjects = j.at("n_subjects").get<int>();
  fit.n_obs = j.at("n_obs").get<int>();
  return fit;
}

}  // namespace detail

constexpr int kArchiveVersion = 1;
constexpr const char* kArchiveFormat = "lmforest-model";

inline std::string forest_to_json(const Forest& forest) {
  using nlohmann::json;
  json root;
  root["format"] = kArchiveFormat;
  root["version"] = kArchiveVersion;
  root["data_hash"] = forest.data_hash;
  root["n_training_subjects"] = forest.n_training_subjects;

  switch (forest.mode) {
    case OutcomeMode::kNumeric:
      root["outcome"] = {{"mode", "numeric"}};
      break;
    case OutcomeMode::kFactor:
      root["outcome"] = {{"mode", "factor"}, {"levels", forest.levels}};
      break;
    case OutcomeMode::kSurvival:
      root["outcome"] = {{"mode", "surv"},
                         {"causes", forest.causes},
                         {"cause_of_interest", forest.cause_of_interest}};
      root["times"] = forest.times;
      break;
  }

  json hp;
  hp["ntree"] = forest.hp.ntree;
  hp["mtry"] = forest.hp.mtry;
  hp["nodesize"] = forest.hp.nodesize;
  hp["minsplit"] = forest.hp.minsplit;
  hp["nsplit_option"] =
      forest.hp.nsplit_option == SplitSampling::kQuantile ? "quantile"
                                                          : "sample";
  hp["seed"] = forest.hp.seed;
  if (forest.hp.ibs_min) hp["ibs_min"] = *forest.hp.ibs_min;
  if (forest.hp.ibs_max) hp["ibs_max"] = *forest.hp.ibs_max;
  root["hyperparams"] = std::move(hp);

  json schema;
  schema["markers"] = forest.schema.marker_names;
  json specs = json::array();
  for (const auto& spec : forest.schema.specs) {
    specs.push_back(json{{"marker", spec.marker},
                         {"fixed", spec.design.fixed_degrees},
                         {"random", spec.design.random_degrees}});
  }
  schema["models"] = std::move(specs);
  schema["numeric"] = forest.schema.numeric_names;
  json factors = json::array();
  for (std::size_t j = 0; j < forest.schema.factor_names.size(); ++j) {
    factors.push_back(json{{"name", forest.schema.factor_names[j]},
                           {"levels", forest.schema.factor_levels[j]}});
  }
  schema["factors"] = std::move(factors);
  root["schema"] = std::move(schema);

  json trees = json::array();
  for (const Tree& tree : forest.trees) {
    json jt;
    jt["boot"] = tree.boot_ids;
    jt["oob"] = tree.oob_ids;
    json nodes = json::array();
    for (const auto& [id, rec] : tree.nodes) {
      json jn;
      jn["id"] = rec.node_id;
      jn["kind"] = split_kind_name(rec.kind);
      jn["n"] = rec.n_subjects;
      jn["depth"] = rec.depth;
      if (rec.n_events >= 0) jn["n_events"] = rec.n_events;
      if (rec.n_events_any >= 0) jn["n_events_any"] = rec.n_events_any;
      if (rec.kind != SplitKind::kLeaf) {
        jn["var"] = rec.var_index;
        jn["majority_left"] = rec.majority_left;
        if (rec.kind == SplitKind::kLongitudinal) {
          jn["feature"] = rec.feature_index;
        }
        if (rec.kind == SplitKind::kFactor) {
          jn["mask"] = rec.level_mask;
        } else {
          jn["threshold"] = rec.threshold;
        }
      }
      nodes.push_back(std::move(jn));
    }
    jt["nodes"] = std::move(nodes);

    json models = json::array();
    for (const auto& [key, fit] : tree.node_models) {
      json jm = detail::fit_to_json(fit);
      jm["node"] = key.first;
      jm["marker"] = key.second;
      models.push_back(std::move(jm));
    }
    jt["models"] = std::move(models);

    json leaves = json::array();
    for (const auto& [id, leaf] : tree.leaves) {
      json jl;
      jl["id"] = id;
      switch (forest.mode) {
        case OutcomeMode::kNumeric:
          jl["mean"] = leaf.mean;
          break;
        case OutcomeMode::kFactor:
          jl["category"] = leaf.category;
          jl["vote_share"] = leaf.vote_share;
          break;
        case OutcomeMode::kSurvival: {
          json cifs = json::array();
          for (const auto& cif : leaf.cif_by_cause) {
            cifs.push_back(detail::cif_to_json(cif));
          }
          jl["cif"] = std::move(cifs);
          break;
        }
      }
      leaves.push_back(std::move(jl));
    }
    jt["leaves"] = std::move(leaves);
    trees.push_back(std::move(jt));
  }
  root["trees"] = std::move(trees);
  return root.dump();
}

inline Forest forest_from_json(const std::string& text) {
  using nlohmann::json;
  json root = json::parse(text);
  if (root.value("format", "") != kArchiveFormat) {
    throw DataError("BadArchive", "not a model archive");
  }
  if (root.value("version", -1) != kArchiveVersion) {
    throw DataError("BadArchive", "unsupported archive version");
  }

  Forest forest;
  forest.data_hash = root.at("data_hash").get<std::string>();
  forest.n_training_subjects = root.at("n_training_subjects").get<int>();

  const json& outcome = root.at("outcome");
  const std::string mode = outcome.at("mode").get<std::string>();
  if (mode == "numeric") {
    forest.mode = OutcomeMode::kNumeric;
  } else if (mode == "factor") {
    forest.mode = OutcomeMode::kFactor;
    forest.levels = outcome.at("levels").get<std::vector<std::string>>();
  } else if (mode == "surv") {
    forest.mode = OutcomeMode::kSurvival;
    forest.causes = outcome.at("causes").get<std::vector<int>>();
    forest.cause_of_interest = outcome.at("cause_of_interest").get<int>();
    forest.times = root.at("times").get<std::vector<double>>();
  } else {
    throw DataError("BadArchive", "unknown outcome mode '" + mode + "'");
  }

  const json& hp = root.at("hyperparams");
  forest.hp.ntree = hp.at("ntree").get<int>();
  forest.hp.mtry = hp.at("mtry").get<int>();
  forest.hp.nodesize = hp.at("nodesize").get<int>();
  forest.hp.minsplit = hp.at("minsplit").get<int>();
  forest.hp.nsplit_option = hp.at("nsplit_option").get<std::string>() ==
                                    "sample"
                                ? SplitSampling::kSample
                                : SplitSampling::kQuantile;
  forest.hp.seed = hp.at("seed").get<std::uint64_t>();
  if (hp.contains("ibs_min")) forest.hp.ibs_min = hp["ibs_min"].get<double>();
  if (hp.contains("ibs_max")) forest.hp.ibs_max = hp["ibs_max"].get<double>();

  const json& schema = root.at("schema");
  forest.schema.marker_names =
      schema.at("markers").get<std::vector<std::string>>();
  for (const auto& jm : schema.at("models")) {
    LmmSpec spec;
    spec.marker = jm.at("marker").get<std::string>();
    spec.design.fixed_degrees = jm.at("fixed").get<std::vector<int>>();
    spec.design.random_degrees = jm.at("random").get<std::vector<int>>();
    forest.schema.specs.push_back(std::move(spec));
  }
  forest.schema.numeric_names =
      schema.at("numeric").get<std::vector<std::string>>();
  for (const auto& jf : schema.at("factors")) {
    forest.schema.factor_names.push_back(jf.at("name").get<std::string>());
    forest.schema.factor_levels.push_back(
        jf.at("levels").get<std::vector<std::string>>());
  }

  for (const auto& jt : root.at("trees")) {
    Tree tree;
    tree.boot_ids = jt.at("boot").get<std::vector<int>>();
    tree.oob_ids = jt.at("oob").get<std::vector<int>>();
    for (const auto& jn : jt.at("nodes")) {
      SplitRecord rec;
      rec.node_id = jn.at("id").get<int>();
      const std::string kind = jn.at("kind").get<std::string>();
      rec.n_subjects = jn.at("n").get<int>();
      rec.depth = jn.at("depth").get<int>();
      rec.n_events = jn.value("n_events", -1);
      rec.n_events_any = jn.value("n_events_any", -1);
      if (kind == "Leaf") {
        rec.kind = SplitKind::kLeaf;
      } else {
        rec.kind = kind == "Longitudinal" ? SplitKind::kLongitudinal
                   : kind == "Numeric"    ? SplitKind::kNumeric
                                          : SplitKind::kFactor;
        rec.var_index = jn.at("var").get<int>();
        rec.majority_left = jn.at("majority_left").get<bool>();
        if (rec.kind == SplitKind::kLongitudinal) {
          rec.feature_index = jn.at("feature").get<int>();
        }
        if (rec.kind == SplitKind::kFactor) {
          rec.level_mask = jn.at("mask").get<std::uint64_t>();
        } else {
          rec.threshold = jn.at("threshold").get<double>();
        }
      }
      tree.nodes.emplace(rec.node_id, rec);
    }
    for (const auto& jm : jt.at("models")) {
      tree.node_models.emplace(
          std::make_pair(jm.at("node").get<int>(), jm.at("marker").get<int>()),
          detail::fit_from_json(jm));
    }
    for (const auto& jl : jt.at("leaves")) {
      LeafSummary leaf;
      switch (forest.mode) {
        case OutcomeMode::kNumeric:
          leaf.mean = jl.at("mean").get<double>();
          break;
        case OutcomeMode::kFactor:
          leaf.category = jl.at("category").get<int>();
          leaf.vote_share = jl.at("vote_share").get<double>();
          break;
        case OutcomeMode::kSurvival:
          for (const auto& jc : jl.at("cif")) {
            leaf.cif_by_cause.push_back(detail::cif_from_json(jc));
          }
          break;
      }
      tree.leaves.emplace(jl.at("id").get<int>(), std::move(leaf));
    }
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

inline void save_forest(const Forest& forest, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ModelError("WriteFailed", "cannot write '" + path + "'");
  }
  out << forest_to_json(forest) << '\n';
}

inline Forest load_forest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("FileNotFound", "cannot open '" + path + "'");
  }
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return forest_from_json(text);
}

// Split summary of one tree: a row per node ordered by node id, with NA
// for fields that do not apply. var_split and feature are 1-based, as in
// the printed split tables.
inline DelimitedTable v_split_table(const Tree& tree, bool survival) {
  DelimitedTable out;
  out.columns = {"type",      "id_node", "var_split", "feature",
                 "threshold", "N",       "Nevent",    "depth"};
  for (const auto& [id, rec] : tree.nodes) {
    std::vector<std::string> row;
    row.push_back(split_kind_name(rec.kind));
    row.push_back(std::to_string(rec.node_id));
    row.push_back(rec.kind == SplitKind::kLeaf
                      ? "NA"
                      : std::to_string(rec.var_index + 1));
    row.push_back(rec.kind == SplitKind::kLongitudinal
                      ? std::to_string(rec.feature_index + 1)
                      : "NA");
    row.push_back(rec.kind == SplitKind::kLongitudinal ||
                          rec.kind == SplitKind::kNumeric
                      ? format_real(rec.threshold)
                      : "NA");
    row.push_back(std::to_string(rec.n_subjects));
    row.push_back(survival ? std::to_string(rec.n_events) : "NA");
    row.push_back(std::to_string(rec.depth));
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace lmforest
