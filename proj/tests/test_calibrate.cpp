#include "stein_select/calibrate.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

namespace {

using namespace stein;

TEST(Median, OddEvenAndOrderInvariant) {
  EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  std::vector<double> v = {0.3, 5.0, 0.01, 2.0, 7.5, 0.2, 1.1};
  const double m = median(v);
  std::reverse(v.begin(), v.end());
  EXPECT_EQ(median(v), m);
  std::rotate(v.begin(), v.begin() + 3, v.end());
  EXPECT_EQ(median(v), m);
  EXPECT_THROW(median({}), Error);
}

TEST(CurvatureRatio, DeterminantRatioRoot) {
  Matrix a(2, 2), b(2, 2);
  a << 4, 0, 0, 9;
  b << 1, 0, 0, 1;
  EXPECT_NEAR(*curvature_ratio(a, b), 6.0, 1e-12);
  EXPECT_FALSE(curvature_ratio(Matrix::Zero(2, 2), b).has_value());
  EXPECT_THROW(curvature_ratio(a, Matrix::Identity(3, 3)), Error);
}

TEST(CurvatureRatio, ScalesLinearlyForOneParameter) {
  const Matrix h = Matrix::Constant(1, 1, 0.37), nll = Matrix::Constant(1, 1, 1.0);
  for (double c : {0.5, 2.0, 13.0}) EXPECT_NEAR(*curvature_ratio(c * h, nll), c * *curvature_ratio(h, nll), 1e-14);
}

GaussianLocationModel unit_gaussian() {
  return GaussianLocationModel::make(Matrix::Identity(1, 1), Vector::Zero(1), 10.0 * Matrix::Identity(1, 1));
}

// Oracle: the unit-Gaussian NLL curvature is 1, so each draw's statistic is
// the finite-difference second derivative of the generic estimator.
TEST(CalibrateGaussian, EachDrawIsNksdCurvature) {
  const auto model = unit_gaussian();
  const KernelSpec spec = KernelSpec::rbf(1);
  const int draws = 4;
  const Eigen::Index n = 300;
  const CalibrationResult r = calibrate_gaussian(model, spec, n, draws, 11);
  ASSERT_EQ(r.n_used, draws);
  EXPECT_EQ(r.n_flagged, 0);
  const auto prior_l = model.prior_cov.llt();
  for (int t = 0; t < draws; ++t) {
    Rng rng(11 + static_cast<std::uint64_t>(t));
    const Vector theta = model.prior_mean + prior_l.matrixL() * rng.normal_vector(1);
    Matrix x(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) x(i, 0) = theta(0) + rng.normal();
    const Matrix h = hessian_fd([&](const ParamVector& th) { return nksd_hat(model, th, x, spec).value; }, theta);
    EXPECT_NEAR(r.t_hat_samples[static_cast<std::size_t>(t)], std::abs(h(0, 0)), 1e-6 * std::abs(h(0, 0)));
  }
  EXPECT_DOUBLE_EQ(r.t_median, median(r.t_hat_samples));
}

TEST(CalibrateGaussian, PositiveAndStableAcrossN) {
  const auto model = unit_gaussian();
  const KernelSpec spec = KernelSpec::rbf(1);
  const CalibrationResult small = calibrate_gaussian(model, spec, 500, 10, 0);
  const CalibrationResult large = calibrate_gaussian(model, spec, 4000, 10, 0);
  for (double t : small.t_hat_samples) EXPECT_GT(t, 0.0);
  for (double t : large.t_hat_samples) EXPECT_GT(t, 0.0);
  EXPECT_LE(std::abs(std::log10(large.t_median / small.t_median)), 0.3);
  EXPECT_GE(small.spread_log10, 0.0);
}

TEST(CalibrateGaussian, ConfigErrors) {
  const auto model = unit_gaussian();
  EXPECT_THROW(calibrate_gaussian(model, KernelSpec::rbf(1), 100, 0, 0), Error);
  EXPECT_THROW(calibrate_gaussian(model, KernelSpec::rbf(1), 1, 3, 0), Error);
  const auto fixed = GaussianLocationModel::fixed(Matrix::Identity(1, 1), Vector::Zero(1));
  EXPECT_THROW(calibrate_gaussian(fixed, KernelSpec::rbf(1), 100, 3, 0), Error);
}

TEST(CalibratePpca, SmallRunIsPositiveAndDeterministic) {
  const CalibrationResult a = calibrate_ppca(4, 1, PpcaPrior{1.0}, -0.5, 1.0, 300, 3, 5);
  const CalibrationResult b = calibrate_ppca(4, 1, PpcaPrior{1.0}, -0.5, 1.0, 300, 3, 5);
  EXPECT_EQ(a.n_used + a.n_flagged, 3);
  ASSERT_GT(a.n_used, 0);
  for (double t : a.t_hat_samples) EXPECT_GT(t, 0.0);
  EXPECT_EQ(a.t_hat_samples, b.t_hat_samples);
  EXPECT_THROW(calibrate_ppca(4, 4, PpcaPrior{1.0}, -0.5, 1.0, 300, 3, 5), Error);
}

TEST(PpcaPriorSampler, DrawsSatisfyFamilyConstraint) {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const PpcaParams p = sample_ppca_prior(rng, 5, 2, PpcaPrior{1.0});
    EXPECT_GT(p.l.minCoeff(), p.v);
    EXPECT_GE(p.l(0), p.l(1));
    EXPECT_LE((p.u.transpose() * p.u - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(PpcaSampler, SecondMomentMatchesCovariance) {
  Rng rng(4);
  PpcaParams p;
  p.u = rng.stiefel(3, 1);
  p.l = Vector::Constant(1, 3.0);
  p.v = 0.5;
  const Eigen::Index n = 100000;
  const Matrix x = sample_ppca_data(rng, p, n);
  const Matrix s2 = x.transpose() * x / static_cast<double>(n);
  EXPECT_LE((s2 - p.covariance()).cwiseAbs().maxCoeff(), 0.05);
}

}  // namespace
