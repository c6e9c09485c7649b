#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lmforest/data.hpp"
#include "lmforest/rng.hpp"

namespace lmforest {

// Synthetic-data design for end-to-end validation: markers follow linear
// mixed trajectories over roughly annual visits, and the continuous
// outcome is a linear function of marker 1's random intercept and
// marker 2's random slope plus noise. The generator coefficients are
// synthetic defaults picked so those two features carry most of the
// outcome variance.
struct SimConfig {
  int n_subjects = 200;
  int n_markers = 6;
  int n_visits = 6;        // baseline plus annual visits
  double jitter_sd = 0.1;  // visit-time jitter, years

  // Marker trajectory (beta0 + b0) + (beta1 + b1) t + eps; the fixed
  // effects vary by marker, the random-effect law is shared.
  double re_intercept_sd = 1.0;
  double re_slope_sd = 0.7;
  double re_corr = 0.3;
  double marker_residual_sd = 0.5;

  // Outcome: gamma0 + g_b0 * b0(marker1) + g_b1 * b1(marker2) + noise.
  double outcome_intercept = 1.0;
  double coef_marker1_intercept = 2.0;
  double coef_marker2_slope = 3.0;
  double outcome_residual_sd = 1.6;

  std::uint64_t seed = 0;

  void validate() const {
    if (n_subjects < 1 || n_markers < 1 || n_visits < 1) {
      throw DataError("BadConfig", "counts must be positive");
    }
    if (n_markers < 2) {
      throw DataError("BadConfig",
                      "the outcome needs at least markers 1 and 2");
    }
    for (double v : {jitter_sd, re_intercept_sd, re_slope_sd,
                     marker_residual_sd, outcome_residual_sd}) {
      if (!(v >= 0) || !std::isfinite(v)) {
        throw DataError("BadConfig", "dispersions must be finite and >= 0");
      }
    }
    if (!(re_corr > -1.0 && re_corr < 1.0)) {
      throw DataError("BadConfig", "random-effect correlation out of range");
    }
  }
};

struct SimulatedData {
  LongitudinalTable longitudinal;
  FixedTable fixed;
  Outcome outcome;
  // Latent truths for oracle checks: per subject and marker.
  std::vector<std::vector<double>> true_intercept;
  std::vector<std::vector<double>> true_slope;
};

inline SimulatedData generate(const SimConfig& cfg) {
  cfg.validate();
  Rng rng = Rng::stream(cfg.seed, 0x51e9u);
  SimulatedData out;

  const int n = cfg.n_subjects;
  const int q = cfg.n_markers;

  out.longitudinal.marker_names.reserve(std::size_t(q));
  for (int m = 0; m < q; ++m) {
    out.longitudinal.marker_names.push_back("marker" + std::to_string(m + 1));
  }
  out.longitudinal.series.resize(std::size_t(n));
  out.true_intercept.assign(std::size_t(n), std::vector<double>(q, 0.0));
  out.true_slope.assign(std::size_t(n), std::vector<double>(q, 0.0));

  out.fixed.numeric.push_back({"cont_covar1", {}});
  out.fixed.numeric.push_back({"cont_covar2", {}});
  out.fixed.factors.push_back({"bin_covar1", {"0", "1"}, {}});
  out.fixed.factors.push_back({"bin_covar2", {"0", "1"}, {}});

  out.outcome.mode = OutcomeMode::kNumeric;

  const double slope_cross = cfg.re_corr * cfg.re_slope_sd;
  const double slope_resid =
      cfg.re_slope_sd * std::sqrt(1.0 - cfg.re_corr * cfg.re_corr);

  for (int i = 0; i < n; ++i) {
    const std::string id = std::to_string(i + 1);
    out.longitudinal.subject_ids.push_back(id);
    out.fixed.subject_ids.push_back(id);
    out.outcome.subject_ids.push_back(id);

    // Visit schedule: exact baseline, then annual visits with jitter
    // clamped to +-3 sd so times stay within [0, visits-1 + 3 sd].
    std::vector<double> times;
    times.push_back(0.0);
    for (int v = 1; v < cfg.n_visits; ++v) {
      double z = rng.normal();
      z = std::max(-3.0, std::min(3.0, z));
      const double t = std::max(0.0, double(v) + cfg.jitter_sd * z);
      times.push_back(t);
    }

    out.longitudinal.series[std::size_t(i)].resize(std::size_t(q));
    for (int m = 0; m < q; ++m) {
      const double u = rng.normal();
      const double v = rng.normal();
      const double b0 = cfg.re_intercept_sd * u;
      const double b1 = slope_cross * u + slope_resid * v;
      out.true_intercept[std::size_t(i)][std::size_t(m)] = b0;
      out.true_slope[std::size_t(i)][std::size_t(m)] = b1;

      const double beta0 = 2.0 + double(m);
      const double beta1 = 0.5 + 0.25 * double(m);
      auto& series = out.longitudinal.series[std::size_t(i)][std::size_t(m)];
      for (double t : times) {
        const double y = (beta0 + b0) + (beta1 + b1) * t +
                         cfg.marker_residual_sd * rng.normal();
        series.time.push_back(t);
        series.value.push_back(y);
      }
    }

    out.fixed.numeric[0].values.push_back(rng.normal());
    out.fixed.numeric[1].values.push_back(rng.normal());
    out.fixed.factors[0].values.push_back(rng.uniform() < 0.5 ? 0 : 1);
    out.fixed.factors[1].values.push_back(rng.uniform() < 0.5 ? 0 : 1);

    const double y = cfg.outcome_intercept +
                     cfg.coef_marker1_intercept *
                         out.true_intercept[std::size_t(i)][0] +
                     cfg.coef_marker2_slope *
                         out.true_slope[std::size_t(i)][1] +
                     cfg.outcome_residual_sd * rng.normal();
    out.outcome.numeric_value.push_back(y);
  }

  out.longitudinal.rebuild_index();
  out.fixed.rebuild_index();
  return out;
}

}  // namespace lmforest
