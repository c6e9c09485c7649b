#include <doctest.h>

#include <cmath>

#include "lmforest/simulate.hpp"
#include "oracles.hpp"

using namespace lmforest;

TEST_CASE("generate is deterministic in the seed") {
  SimConfig cfg;
  cfg.n_subjects = 30;
  cfg.seed = 17;
  auto a = generate(cfg);
  auto b = generate(cfg);
  CHECK(a.outcome.numeric_value == b.outcome.numeric_value);
  CHECK(a.longitudinal.series[0][0].value ==
        b.longitudinal.series[0][0].value);
  cfg.seed = 18;
  auto c = generate(cfg);
  CHECK(a.outcome.numeric_value != c.outcome.numeric_value);
}

TEST_CASE("zero jitter gives exact annual visits; jitter stays bounded") {
  SimConfig cfg;
  cfg.n_subjects = 5;
  cfg.jitter_sd = 0.0;
  auto sim = generate(cfg);
  for (const auto& per_marker : sim.longitudinal.series) {
    CHECK(per_marker[0].time == std::vector<double>{0, 1, 2, 3, 4, 5});
  }

  cfg.jitter_sd = 0.1;
  cfg.n_subjects = 100;
  auto jittered = generate(cfg);
  for (const auto& per_marker : jittered.longitudinal.series) {
    for (double t : per_marker[0].time) {
      CHECK(t >= 0.0);
      CHECK(t <= 5.0 + 3.0 * cfg.jitter_sd);
    }
  }
}

TEST_CASE("regressing the outcome on the true effects recovers the betas") {
  SimConfig cfg;
  cfg.n_subjects = 200;
  cfg.seed = 5;
  auto sim = generate(cfg);
  Eigen::MatrixXd x(cfg.n_subjects, 3);
  Eigen::VectorXd y(cfg.n_subjects);
  for (int i = 0; i < cfg.n_subjects; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = sim.true_intercept[std::size_t(i)][0];  // marker1 b0
    x(i, 2) = sim.true_slope[std::size_t(i)][1];      // marker2 b1
    y[i] = sim.outcome.numeric_value[std::size_t(i)];
  }
  const auto fit = oracle::ols(x, y);
  CHECK(std::abs(fit.coef[0] - cfg.outcome_intercept) < 3.0 * fit.se[0]);
  CHECK(std::abs(fit.coef[1] - cfg.coef_marker1_intercept) <
        3.0 * fit.se[1]);
  CHECK(std::abs(fit.coef[2] - cfg.coef_marker2_slope) < 3.0 * fit.se[2]);
}

TEST_CASE("within-subject effects correlate as configured") {
  SimConfig cfg;
  cfg.n_subjects = 400;
  cfg.seed = 23;
  auto sim = generate(cfg);
  // empirical correlation of the latent (b0, b1) per marker
  for (int m = 0; m < cfg.n_markers; ++m) {
    double s0 = 0, s1 = 0, s00 = 0, s11 = 0, s01 = 0;
    const double n = double(cfg.n_subjects);
    for (int i = 0; i < cfg.n_subjects; ++i) {
      const double b0 = sim.true_intercept[std::size_t(i)][std::size_t(m)];
      const double b1 = sim.true_slope[std::size_t(i)][std::size_t(m)];
      s0 += b0;
      s1 += b1;
      s00 += b0 * b0;
      s11 += b1 * b1;
      s01 += b0 * b1;
    }
    const double cov = s01 / n - (s0 / n) * (s1 / n);
    const double v0 = s00 / n - (s0 / n) * (s0 / n);
    const double v1 = s11 / n - (s1 / n) * (s1 / n);
    const double corr = cov / std::sqrt(v0 * v1);
    CHECK(std::abs(corr - cfg.re_corr) < 0.15);
  }
}

TEST_CASE("generate validates its configuration") {
  SimConfig bad;
  bad.n_subjects = 0;
  CHECK_THROWS_AS(generate(bad), DataError);
  SimConfig neg;
  neg.jitter_sd = -1.0;
  CHECK_THROWS_AS(generate(neg), DataError);
}
