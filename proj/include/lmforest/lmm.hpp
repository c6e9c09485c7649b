#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "lmforest/errors.hpp"

namespace lmforest {

// One subject's repeated measurements of a single marker.
struct MeasurementSeries {
  std::vector<double> time;
  std::vector<double> value;

  std::size_t size() const { return time.size(); }
  bool empty() const { return time.empty(); }
};

// Polynomial-in-time design for y_i = X_i beta + Z_i b_i + eps_i.
// Degrees are powers of time; degree 0 is the intercept and must be
// present in both bases, and the random basis is a subset of the fixed.
struct LmmDesign {
  std::vector<int> fixed_degrees{0, 1};
  std::vector<int> random_degrees{0, 1};

  int n_fixed() const { return int(fixed_degrees.size()); }
  int n_random() const { return int(random_degrees.size()); }

  void validate() const {
    auto has_zero = [](const std::vector<int>& v) {
      return std::find(v.begin(), v.end(), 0) != v.end();
    };
    if (fixed_degrees.empty() || random_degrees.empty() ||
        !has_zero(fixed_degrees) || !has_zero(random_degrees)) {
      throw DataError("BadBasis", "both bases must include the intercept");
    }
    for (int d : random_degrees) {
      if (std::find(fixed_degrees.begin(), fixed_degrees.end(), d) ==
          fixed_degrees.end()) {
        throw DataError("BadBasis",
                        "random basis must be a subset of the fixed basis");
      }
    }
  }

  Eigen::MatrixXd fixed_matrix(const std::vector<double>& times) const {
    return basis(times, fixed_degrees);
  }
  Eigen::MatrixXd random_matrix(const std::vector<double>& times) const {
    return basis(times, random_degrees);
  }

 private:
  static Eigen::MatrixXd basis(const std::vector<double>& times,
                               const std::vector<int>& degrees) {
    Eigen::MatrixXd m(times.size(), degrees.size());
    for (std::size_t r = 0; r < times.size(); ++r) {
      for (std::size_t c = 0; c < degrees.size(); ++c) {
        m(Eigen::Index(r), Eigen::Index(c)) = std::pow(times[r], degrees[c]);
      }
    }
    return m;
  }
};

// Maximum-likelihood estimates of the mixed model.
struct LmmFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd re_cov;  // random-effect covariance, PSD
  double sigma2 = 0.0;
  double loglik = 0.0;
  bool converged = false;
  int n_subjects = 0;
  int n_obs = 0;
};

struct LmmOptions {
  double tol = 1e-6;   // relative log-likelihood change
  int max_iter = 500;  // EM iterations
};

// Optional per-iteration snapshot used by tests to audit EM monotonicity
// with an independent likelihood evaluation.
struct LmmIterate {
  Eigen::VectorXd beta;
  Eigen::MatrixXd re_cov;
  double sigma2;
  double loglik;
};

namespace detail {

constexpr double kSigma2Floor = 1e-10;
constexpr double kInitVarFloor = 1e-4;

struct SubjectWork {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  Eigen::MatrixXd Z;
  Eigen::MatrixXd ZtZ;
  Eigen::VectorXd posterior_mean;  // E-step output
};

}  // namespace detail

// Fit the Laird-Ware model by EM with closed-form M-steps. Subjects with
// empty series are ignored for estimation. Requires at least 2 observed
// subjects and enough observations to identify (beta, B, sigma2).
inline LmmFit fit_lmm(const LmmDesign& design,
                      const std::vector<MeasurementSeries>& series,
                      const LmmOptions& opts = {},
                      std::vector<LmmIterate>* trace = nullptr) {
  design.validate();
  const int p = design.n_fixed();
  const int q = design.n_random();

  std::vector<detail::SubjectWork> subjects;
  int n_obs = 0;
  for (const auto& s : series) {
    if (s.empty()) continue;
    detail::SubjectWork w;
    w.y = Eigen::Map<const Eigen::VectorXd>(s.value.data(),
                                            Eigen::Index(s.size()));
    w.X = design.fixed_matrix(s.time);
    w.Z = design.random_matrix(s.time);
    w.ZtZ = w.Z.transpose() * w.Z;
    n_obs += int(s.size());
    subjects.push_back(std::move(w));
  }
  const int n_subj = int(subjects.size());
  if (n_subj < 2 || n_obs < p + q * (q + 1) / 2 + 1) {
    throw ModelError("InsufficientData",
                     "too few subjects or observations for the mixed model");
  }

  // Pooled OLS initialisation for beta; ridge 1e-8 on a rank-deficient
  // normal matrix, and SingularDesign if even that produces garbage.
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
  for (const auto& w : subjects) {
    xtx.noalias() += w.X.transpose() * w.X;
    xty.noalias() += w.X.transpose() * w.y;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xtx);
  if (qr.rank() < p) {
    xtx += 1e-8 * Eigen::MatrixXd::Identity(p, p);
  }
  Eigen::LDLT<Eigen::MatrixXd> xtx_solver(xtx);
  Eigen::VectorXd beta = xtx_solver.solve(xty);
  if (!beta.allFinite()) {
    throw ModelError("SingularDesign", "fixed-effect design is degenerate");
  }

  double resid_ss = 0.0;
  double mean_resid_var = 0.0;
  {
    std::vector<double> subject_means;
    subject_means.reserve(subjects.size());
    for (const auto& w : subjects) {
      Eigen::VectorXd r = w.y - w.X * beta;
      resid_ss += r.squaredNorm();
      subject_means.push_back(r.mean());
    }
    double mean = 0.0;
    for (double m : subject_means) mean += m;
    mean /= double(subject_means.size());
    for (double m : subject_means) {
      mean_resid_var += (m - mean) * (m - mean);
    }
    mean_resid_var /= double(subject_means.size());
  }
  Eigen::MatrixXd re_cov =
      std::max(mean_resid_var, detail::kInitVarFloor) *
      Eigen::MatrixXd::Identity(q, q);
  double sigma2 =
      std::max(resid_ss / double(n_obs), detail::kInitVarFloor);

  // E-step at the current parameters; returns the marginal log-likelihood
  // and fills the per-subject posterior means plus the M-step sums. The
  // generalized-least-squares accumulators ride along for the final exact
  // beta step.
  Eigen::MatrixXd bb_sum(q, q);
  Eigen::VectorXd xt_adj_sum(p);
  Eigen::MatrixXd gls_xx(p, p);
  Eigen::VectorXd gls_xy(p);
  double trace_sum = 0.0;
  auto e_step = [&]() {
    double ll = 0.0;
    bb_sum.setZero();
    xt_adj_sum.setZero();
    gls_xx.setZero();
    gls_xy.setZero();
    trace_sum = 0.0;
    for (auto& w : subjects) {
      const Eigen::Index ni = w.y.size();
      Eigen::MatrixXd v = w.Z * re_cov * w.Z.transpose();
      v.diagonal().array() += sigma2;
      Eigen::LDLT<Eigen::MatrixXd> vldlt(v);
      Eigen::VectorXd r = w.y - w.X * beta;
      Eigen::VectorXd v_inv_r = vldlt.solve(r);
      Eigen::MatrixXd v_inv_x = vldlt.solve(w.X);
      Eigen::MatrixXd v_inv_z = vldlt.solve(w.Z);

      w.posterior_mean = re_cov * (w.Z.transpose() * v_inv_r);
      Eigen::MatrixXd post_cov =
          re_cov - re_cov * (w.Z.transpose() * v_inv_z) * re_cov;
      post_cov = 0.5 * (post_cov + post_cov.transpose());

      bb_sum.noalias() +=
          w.posterior_mean * w.posterior_mean.transpose() + post_cov;
      xt_adj_sum.noalias() +=
          w.X.transpose() * (w.y - w.Z * w.posterior_mean);
      trace_sum += (post_cov * w.ZtZ).trace();
      gls_xx.noalias() += w.X.transpose() * v_inv_x;
      gls_xy.noalias() += v_inv_x.transpose() * w.y;

      const double logdet = vldlt.vectorD().array().log().sum();
      ll -= 0.5 * (double(ni) * std::log(2.0 * M_PI) + logdet +
                   r.dot(v_inv_r));
    }
    return ll;
  };

  LmmFit fit;
  double ll_prev = 0.0;
  double ll = 0.0;
  for (int it = 0;; ++it) {
    ll = e_step();
    if (trace) trace->push_back({beta, re_cov, sigma2, ll});
    if (it > 0 &&
        std::abs(ll - ll_prev) < opts.tol * (std::abs(ll_prev) + 1.0)) {
      fit.converged = true;
      break;
    }
    if (it >= opts.max_iter) break;
    ll_prev = ll;

    // Closed-form M-step.
    beta = xtx_solver.solve(xt_adj_sum);
    re_cov = bb_sum / double(n_subj);
    double ss = 0.0;
    for (const auto& w : subjects) {
      ss += (w.y - w.X * beta - w.Z * w.posterior_mean).squaredNorm();
    }
    sigma2 = std::max((ss + trace_sum) / double(n_obs),
                      detail::kSigma2Floor);
  }

  // Exact profile step for beta at the final variance parameters: the
  // GLS solution zeroes the likelihood gradient in beta and can only
  // increase the likelihood.
  {
    Eigen::VectorXd refined = Eigen::LDLT<Eigen::MatrixXd>(gls_xx).solve(
        gls_xy);
    if (refined.allFinite()) {
      beta = refined;
      ll = e_step();
      if (trace) trace->push_back({beta, re_cov, sigma2, ll});
    }
  }

  // Clamp tiny negative eigenvalues introduced by round-off.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(re_cov);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  fit.re_cov = es.eigenvectors() * ev.asDiagonal() *
               es.eigenvectors().transpose();
  fit.re_cov = 0.5 * (fit.re_cov + fit.re_cov.transpose());
  fit.beta = beta;
  fit.sigma2 = std::max(sigma2, detail::kSigma2Floor);
  fit.loglik = ll;
  fit.n_subjects = n_subj;
  fit.n_obs = n_obs;
  return fit;
}

// BLUP of one subject's random effects given a fitted model:
//   b = B Z' V^-1 (y - X beta),  V = Z B Z' + sigma2 I.
// An empty series yields the prior mean (zero vector).
inline Eigen::VectorXd predict_random_effects(
    const LmmFit& fit, const LmmDesign& design,
    const MeasurementSeries& series) {
  const int q = design.n_random();
  if (series.empty()) return Eigen::VectorXd::Zero(q);
  Eigen::MatrixXd x = design.fixed_matrix(series.time);
  Eigen::MatrixXd z = design.random_matrix(series.time);
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(
      series.value.data(), Eigen::Index(series.size()));
  Eigen::MatrixXd v = z * fit.re_cov * z.transpose();
  v.diagonal().array() += fit.sigma2;
  Eigen::VectorXd r = y - x * fit.beta;
  return fit.re_cov * (z.transpose() * Eigen::LDLT<Eigen::MatrixXd>(v).solve(r));
}

// Per-subject BLUP features; row i holds subject i's random effects.
inline Eigen::MatrixXd extract_features(
    const LmmFit& fit, const LmmDesign& design,
    const std::vector<MeasurementSeries>& series) {
  Eigen::MatrixXd features(series.size(), design.n_random());
  for (std::size_t i = 0; i < series.size(); ++i) {
    features.row(Eigen::Index(i)) =
        predict_random_effects(fit, design, series[i]).transpose();
  }
  return features;
}

}  // namespace lmforest
