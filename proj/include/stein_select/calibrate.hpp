#pragma once

#include "stein_select/common.hpp"
#include "stein_select/kernel.hpp"
#include "stein_select/nksd.hpp"
#include "stein_select/optimize.hpp"
#include "stein_select/random.hpp"
#include "stein_select/score_models.hpp"

#include <algorithm>

namespace stein {

struct CalibrationResult {
  std::vector<double> t_hat_samples;
  double t_median = 0.0;
  int n_used = 0;
  int n_flagged = 0;  // draws with a singular Hessian, excluded
  double spread_log10 = 0.0;  // max - min of log10 T_hat over used draws
};

inline double median(std::vector<double> v) {
  require(!v.empty(), ErrorKind::Numeric, "median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// (|det H_nksd| / |det H_nll|)^{1/m}, or nullopt when either is singular.
inline std::optional<double> curvature_ratio(const Eigen::Ref<const Matrix>& h_nksd, const Eigen::Ref<const Matrix>& h_nll) {
  require(h_nksd.rows() == h_nll.rows() && h_nksd.rows() > 0, ErrorKind::Input, "Hessian shapes disagree");
  const LogDet a = log_abs_det(h_nksd), b = log_abs_det(h_nll);
  if (a.sign == 0 || b.sign == 0 || !std::isfinite(a.log_abs) || !std::isfinite(b.log_abs)) return std::nullopt;
  const double t = std::exp((a.log_abs - b.log_abs) / static_cast<double>(h_nksd.rows()));
  if (!(t > 0.0) || !std::isfinite(t)) return std::nullopt;
  return t;
}

inline CalibrationResult finish_calibration(std::vector<double> samples, int flagged) {
  CalibrationResult r;
  r.n_flagged = flagged;
  r.n_used = static_cast<int>(samples.size());
  require(!samples.empty(), ErrorKind::Numeric, "every calibration draw had a singular Hessian");
  r.t_median = median(samples);
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  r.spread_log10 = std::log10(*hi) - std::log10(*lo);
  r.t_hat_samples = std::move(samples);
  return r;
}

/// Gaussian location model N(theta, Sigma), prior N(mu0, S0): the NKSD Hessian
/// is 2 A and the average-NLL Hessian is Sigma^{-1}, both exact.
inline CalibrationResult calibrate_gaussian(const GaussianLocationModel& model, const KernelSpec& spec, Eigen::Index n,
                                            int draws, std::uint64_t seed) {
  require(model.free_mean, ErrorKind::Config, "calibration needs free parameters");
  require(draws >= 1 && n >= 2, ErrorKind::Config, "calibration needs draws >= 1 and n >= 2");
  const int d = model.dim();
  const auto prior_l = cholesky_or_throw(model.prior_cov, "prior covariance");
  const auto sigma_l = cholesky_or_throw(model.sigma, "model covariance");
  const Matrix h_nll = model.precision();
  std::vector<double> samples;
  int flagged = 0;
  for (int t = 0; t < draws; ++t) {
    Rng rng(seed + static_cast<std::uint64_t>(t));
    const Vector theta = model.prior_mean + prior_l.matrixL() * rng.normal_vector(d);
    Matrix x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) x.row(i) = (theta + sigma_l.matrixL() * rng.normal_vector(d)).transpose();
    const QuadraticForm q = gaussian_quadratic_coeffs(precompute_pairwise(spec, x), model);
    const auto r = curvature_ratio(2.0 * symmetrize(q.a), h_nll);
    if (r) samples.push_back(*r);
    else ++flagged;
  }
  return finish_calibration(std::move(samples), flagged);
}

/// Draw from the pPCA prior; rejects draws without l > v, which the family needs.
inline PpcaParams sample_ppca_prior(Rng& rng, int d, int k, const PpcaPrior& prior) {
  const double vs = prior.v_shape(d, k), vc = prior.v_scale(d, k);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    PpcaParams p;
    p.u = rng.stiefel(d, k);
    p.l.resize(k);
    for (int a = 0; a < k; ++a) p.l(a) = rng.inverse_gamma(prior.alpha / 2.0, prior.alpha / 2.0);
    p.v = rng.inverse_gamma(vs, vc);
    if ((p.l.array() > p.v).all() && p.l.allFinite() && std::isfinite(p.v)) {
      std::sort(p.l.data(), p.l.data() + k, std::greater<double>());
      return p;
    }
  }
  fail(ErrorKind::Numeric, "pPCA prior rejection sampler did not find l > v");
}

inline Matrix sample_ppca_data(Rng& rng, const PpcaParams& p, Eigen::Index n) {
  const int d = p.data_dim(), k = p.latent_dim();
  const Matrix h = p.h();
  const double sv = std::sqrt(p.v);
  Matrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector z = rng.normal_vector(k), e = rng.normal_vector(d);
    x.row(i) = (h * z + sv * e).transpose();
  }
  return x;
}

/// Finite-difference Hessians at the generating parameter, in the chart
/// centred there (the ratio of determinants does not depend on the chart).
inline CalibrationResult calibrate_ppca(int d, int k, const PpcaPrior& prior, double beta, double c, Eigen::Index n,
                                        int draws, std::uint64_t seed, double rel_step = 1e-4) {
  require(draws >= 1 && n >= 2, ErrorKind::Config, "calibration needs draws >= 1 and n >= 2");
  require(k >= 1 && k < d, ErrorKind::Domain, "latent dimension must lie in [1, d)");
  const KernelSpec spec = KernelSpec::factored_imq(d, beta, c);
  std::vector<double> samples;
  int flagged = 0;
  for (int t = 0; t < draws; ++t) {
    Rng rng(seed + static_cast<std::uint64_t>(t));
    const PpcaParams truth = sample_ppca_prior(rng, d, k, prior);
    const Matrix x = sample_ppca_data(rng, truth, n);
    const PairwiseStats st = precompute_pairwise(spec, x);
    const Matrix s2 = x.transpose() * x / static_cast<double>(n);
    const PpcaChart chart(truth);
    const ParamVector z = chart.base_coords();
    try {
      const Matrix h_nksd = hessian_fd([&](const ParamVector& zz) { return ppca_nksd(st, chart.at(zz)); }, z, rel_step);
      const Matrix h_nll =
          hessian_fd([&](const ParamVector& zz) { return ppca_average_nll(chart.at(zz), s2); }, z, rel_step);
      const auto r = curvature_ratio(h_nksd, h_nll);
      if (r) samples.push_back(*r);
      else ++flagged;
    } catch (const Error&) {
      ++flagged;
    }
  }
  return finish_calibration(std::move(samples), flagged);
}

}  // namespace stein
