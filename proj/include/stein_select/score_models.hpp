#pragma once

#include "stein_select/common.hpp"

#include <functional>
#include <numbers>
#include <optional>

namespace stein {

/// Q factor of a thin QR with the sign fixed so that diag(R) > 0.
inline Matrix qf(const Eigen::Ref<const Matrix>& a) {
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
  const Matrix& r = qr.matrixQR();
  for (Eigen::Index c = 0; c < a.cols(); ++c)
    if (r(c, c) < 0) q.col(c) = -q.col(c);
  return q;
}

/// Orthonormal basis of the complement of span(u), u with orthonormal columns.
inline Matrix orthogonal_complement(const Eigen::Ref<const Matrix>& u) {
  Eigen::HouseholderQR<Matrix> qr(u);
  const Matrix full = qr.householderQ();
  return full.rightCols(u.rows() - u.cols());
}

inline double log_gamma(double x) { return std::lgamma(x); }

/// log density of InverseGamma(shape, scale) at x > 0.
inline double log_inverse_gamma(double x, double shape, double scale) {
  return shape * std::log(scale) - log_gamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

/// log N(x | mean, cov), cov SPD.
inline double log_normal_density(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& mean,
                                 const Eigen::Ref<const Matrix>& cov) {
  const auto llt = cholesky_or_throw(cov, "normal covariance");
  const Vector z = llt.matrixL().solve(x - mean);
  return -0.5 * static_cast<double>(x.size()) * std::log(kTwoPi) - 0.5 * log_det_spd(llt) - 0.5 * z.squaredNorm();
}

// ---------------------------------------------------------------------------
// Exponential families

/// q(x|theta) ∝ lambda(x) exp(theta^T t(x)); the score is affine in theta:
///   s(x; theta) = grad log lambda(x) + J(x)^T theta,   J = grad_x t  (m x d).
struct ExpFamModel {
  int dim = 0;
  int m_f = 0;
  std::function<Matrix(const Vector&)> t_jacobian;
  std::function<Vector(const Vector&)> log_lambda_grad;
  /// Set when J does not depend on x; enables an O(n^2 d) coefficient path.
  std::optional<Matrix> constant_jacobian;

  Vector score(const Eigen::Ref<const ParamVector>& theta, const Eigen::Ref<const Vector>& x) const {
    require(theta.size() == m_f, ErrorKind::Input, "parameter length does not match model dimension");
    require(x.size() == dim, ErrorKind::Input, "observation length does not match model dimension");
    Vector s = log_lambda_grad(x);
    if (m_f > 0) s.noalias() += jacobian(x).transpose() * theta;
    return s;
  }

  /// d score / d theta (d x m_f).
  Matrix score_dtheta(const Eigen::Ref<const ParamVector>&, const Eigen::Ref<const Vector>& x) const {
    return jacobian(x).transpose();
  }

  Matrix jacobian(const Eigen::Ref<const Vector>& x) const {
    if (constant_jacobian) return *constant_jacobian;
    if (m_f == 0) return Matrix(0, dim);
    return t_jacobian(x);
  }
};

/// N(theta, Sigma) with Sigma fixed and theta free, or N(mean, Sigma) with no
/// free parameters when free_mean is false.
struct GaussianLocationModel {
  Matrix sigma;
  Vector prior_mean;
  Matrix prior_cov;
  bool free_mean = true;
  Vector fixed_mean;  // used when free_mean is false

  static GaussianLocationModel make(const Matrix& sigma, const Vector& prior_mean, const Matrix& prior_cov) {
    GaussianLocationModel m;
    m.sigma = sigma;
    m.prior_mean = prior_mean;
    m.prior_cov = prior_cov;
    m.fixed_mean = Vector::Zero(sigma.rows());
    m.validate();
    return m;
  }

  static GaussianLocationModel fixed(const Matrix& sigma, const Vector& mean) {
    GaussianLocationModel m;
    m.sigma = sigma;
    m.free_mean = false;
    m.fixed_mean = mean;
    m.prior_mean = Vector(0);
    m.prior_cov = Matrix(0, 0);
    m.validate();
    return m;
  }

  int dim() const { return static_cast<int>(sigma.rows()); }
  int m_f() const { return free_mean ? dim() : 0; }

  void validate() const {
    require(sigma.rows() == sigma.cols() && sigma.rows() > 0, ErrorKind::Input, "covariance must be square");
    cholesky_or_throw(sigma, "model covariance");
    if (free_mean) {
      require(prior_mean.size() == sigma.rows() && prior_cov.rows() == sigma.rows() && prior_cov.cols() == sigma.rows(),
              ErrorKind::Input, "prior dimensions do not match the model");
      cholesky_or_throw(prior_cov, "prior covariance");
    } else {
      require(fixed_mean.size() == sigma.rows(), ErrorKind::Input, "fixed mean length does not match covariance");
    }
  }

  Matrix precision() const { return cholesky_or_throw(sigma, "model covariance").solve(Matrix::Identity(dim(), dim())); }

  Vector mean_of(const Eigen::Ref<const ParamVector>& theta) const {
    if (!free_mean) return fixed_mean;
    require(theta.size() == dim(), ErrorKind::Input, "parameter length does not match model dimension");
    return theta;
  }

  Vector score(const Eigen::Ref<const ParamVector>& theta, const Eigen::Ref<const Vector>& x) const {
    require(x.size() == dim(), ErrorKind::Input, "observation length does not match model dimension");
    return -cholesky_or_throw(sigma, "model covariance").solve(x - mean_of(theta));
  }

  Matrix score_dtheta(const Eigen::Ref<const ParamVector>&, const Eigen::Ref<const Vector>&) const {
    if (!free_mean) return Matrix(dim(), 0);
    return precision();
  }

  double log_density(const Eigen::Ref<const ParamVector>& theta, const Eigen::Ref<const Vector>& x) const {
    return log_normal_density(x, mean_of(theta), sigma);
  }

  double log_prior(const Eigen::Ref<const ParamVector>& theta) const {
    if (!free_mean) return 0.0;
    return log_normal_density(theta, prior_mean, prior_cov);
  }

  /// t(x) = Sigma^{-1} x, lambda(x) = exp(-x^T Sigma^{-1} x / 2) (shifted by the
  /// fixed mean when the mean is not free).
  ExpFamModel as_expfam() const {
    ExpFamModel e;
    e.dim = dim();
    e.m_f = m_f();
    const Matrix p = precision();
    const Vector mu = free_mean ? Vector::Zero(dim()) : fixed_mean;
    e.log_lambda_grad = [p, mu](const Vector& x) -> Vector { return -p * (x - mu); };
    e.t_jacobian = [p](const Vector&) -> Matrix { return p; };
    if (free_mean) e.constant_jacobian = p;
    return e;
  }
};

// ---------------------------------------------------------------------------
// Probabilistic PCA

/// Point of the pPCA family: covariance C = U diag(l) U^T + v (I - U U^T),
/// i.e. H H^T + v I with H = U (L - v I)^{1/2}.
struct PpcaParams {
  Matrix u;  // d x k, orthonormal columns
  Vector l;  // k, entries > v
  double v = 1.0;

  int data_dim() const { return static_cast<int>(u.rows()); }
  int latent_dim() const { return static_cast<int>(u.cols()); }

  void validate() const {
    require(u.rows() >= u.cols() && u.cols() > 0 && l.size() == u.cols(), ErrorKind::Input,
            "inconsistent pPCA parameter shapes");
    require(v > 0.0 && std::isfinite(v), ErrorKind::Domain, "pPCA noise variance must be positive");
    for (Eigen::Index a = 0; a < l.size(); ++a)
      require(l(a) > v && std::isfinite(l(a)), ErrorKind::Domain, "pPCA latent variances must exceed the noise variance");
    const double err = (u.transpose() * u - Matrix::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff();
    require(err < 1e-8, ErrorKind::Domain, "pPCA loading matrix is not orthonormal");
  }

  /// Replaces l entries that are not above v by v + 1e-8.
  void clamp() {
    for (Eigen::Index a = 0; a < l.size(); ++a)
      if (!(l(a) > v)) l(a) = v + 1e-8;
  }

  Matrix h() const { return u * (l.array() - v).sqrt().matrix().asDiagonal(); }

  Matrix covariance() const {
    const Matrix hh = h();
    return hh * hh.transpose() + v * Matrix::Identity(u.rows(), u.rows());
  }

  /// Woodbury: C^{-1} = U (L^{-1} - v^{-1} I) U^T + v^{-1} I.
  Matrix precision() const {
    const Vector dd = l.cwiseInverse().array() - 1.0 / v;
    return u * dd.asDiagonal() * u.transpose() + (1.0 / v) * Matrix::Identity(u.rows(), u.rows());
  }

  Vector score(const Eigen::Ref<const Vector>& x) const {
    require(x.size() == u.rows(), ErrorKind::Input, "observation length does not match pPCA dimension");
    const Vector ux = u.transpose() * x;
    const Vector dd = l.cwiseInverse().array() - 1.0 / v;
    return -(u * dd.cwiseProduct(ux) + x / v);
  }

  /// Model induced on the coordinate subset: covariance is the sub-block of C.
  PpcaParams project(const std::vector<int>& dims) const {
    const int k = latent_dim();
    require(static_cast<int>(dims.size()) >= k, ErrorKind::Domain,
            "subset of size " + std::to_string(dims.size()) + " is smaller than latent dimension " + std::to_string(k));
    Matrix hs(static_cast<Eigen::Index>(dims.size()), k);
    const Matrix full = h();
    for (std::size_t r = 0; r < dims.size(); ++r) {
      require(dims[r] >= 0 && dims[r] < u.rows(), ErrorKind::Input, "subset index out of range");
      hs.row(static_cast<Eigen::Index>(r)) = full.row(dims[r]);
    }
    Eigen::JacobiSVD<Matrix> svd(hs, Eigen::ComputeThinU);
    PpcaParams p;
    p.u = svd.matrixU();
    p.v = v;
    p.l = svd.singularValues().array().square() + v;
    // Sign convention: largest-magnitude entry of each column positive.
    for (int a = 0; a < k; ++a) {
      Eigen::Index idx;
      p.u.col(a).cwiseAbs().maxCoeff(&idx);
      if (p.u(idx, a) < 0) p.u.col(a) = -p.u.col(a);
    }
    p.clamp();
    return p;
  }
};

/// Average negative log-likelihood (1/n) sum -log N(x_i | 0, C) from the
/// second-moment matrix s = (1/n) X^T X.
inline double ppca_average_nll(const PpcaParams& p, const Eigen::Ref<const Matrix>& second_moment) {
  const Eigen::Index d = p.u.rows();
  const Vector lam = p.l;
  const double log_det = lam.array().log().sum() + static_cast<double>(d - p.u.cols()) * std::log(p.v);
  const double tr = (p.precision() * second_moment).trace();
  return 0.5 * log_det + 0.5 * tr + 0.5 * static_cast<double>(d) * std::log(kTwoPi);
}

/// Local coordinates around a base point:
///   z = (omega, b, eta, zeta),
///   U(z) = qf(U0 + U0 Omega(omega) + U0perp B),  Omega skew, B (d-k) x k,
///   l_a = v + exp(eta_a),  v = exp(zeta).
/// z = base_coords() reproduces the base point. The number of coordinates is
/// d k - k(k+1)/2 + k + 1.
class PpcaChart {
 public:
  explicit PpcaChart(const PpcaParams& base) : base_(base) {
    base_.validate();
    perp_ = orthogonal_complement(base_.u);
  }

  int d() const { return base_.data_dim(); }
  int k() const { return base_.latent_dim(); }
  int n_skew() const { return k() * (k() - 1) / 2; }
  int n_perp() const { return (d() - k()) * k(); }
  int size() const { return n_skew() + n_perp() + k() + 1; }

  const PpcaParams& base() const { return base_; }

  ParamVector base_coords() const {
    ParamVector z = ParamVector::Zero(size());
    const int off = n_skew() + n_perp();
    for (int a = 0; a < k(); ++a) z(off + a) = std::log(base_.l(a) - base_.v);
    z(size() - 1) = std::log(base_.v);
    return z;
  }

  PpcaParams at(const Eigen::Ref<const ParamVector>& z) const {
    require(z.size() == size(), ErrorKind::Input, "chart coordinate length mismatch");
    Matrix omega = Matrix::Zero(k(), k());
    int idx = 0;
    for (int i = 0; i < k(); ++i)
      for (int j = i + 1; j < k(); ++j) {
        omega(i, j) = z(idx);
        omega(j, i) = -z(idx);
        ++idx;
      }
    Matrix b(d() - k(), k());
    for (int c = 0; c < k(); ++c)
      for (int r = 0; r < d() - k(); ++r) b(r, c) = z(idx++);
    PpcaParams p;
    p.u = qf(base_.u + base_.u * omega + perp_ * b);
    p.v = std::exp(z(size() - 1));
    p.l.resize(k());
    for (int a = 0; a < k(); ++a) p.l(a) = p.v + std::exp(z(idx + a));
    return p;
  }

  /// Chart gradient at a point with loading matrix equal to the base, given
  /// the Euclidean gradient in U and the gradient in (eta, zeta).
  ParamVector gradient(const Eigen::Ref<const Matrix>& g_u, const Eigen::Ref<const Vector>& g_eta, double g_zeta) const {
    ParamVector g(size());
    const Matrix a = base_.u.transpose() * g_u;
    int idx = 0;
    for (int i = 0; i < k(); ++i)
      for (int j = i + 1; j < k(); ++j) g(idx++) = a(i, j) - a(j, i);
    const Matrix pb = perp_.transpose() * g_u;
    for (int c = 0; c < k(); ++c)
      for (int r = 0; r < d() - k(); ++r) g(idx++) = pb(r, c);
    for (int a2 = 0; a2 < k(); ++a2) g(idx++) = g_eta(a2);
    g(idx) = g_zeta;
    return g;
  }

  /// log of the Riemannian volume factor of the U coordinates at the base.
  double log_volume_factor() const { return 0.5 * n_skew() * std::log(2.0); }

 private:
  PpcaParams base_;
  Matrix perp_;
};

/// l_a ~ InvGamma(alpha/2, alpha/2),
/// v   ~ InvGamma((alpha/2 + 1)(d - k) - 1, (alpha/2)(d - k)),
/// U   ~ uniform on the Stiefel manifold.
struct PpcaPrior {
  double alpha = 0.1;

  double v_shape(int d, int k) const {
    const double s = (alpha / 2.0 + 1.0) * (d - k) - 1.0;
    require(s > 0.0, ErrorKind::Domain, "noise-variance prior shape is not positive for this (alpha, d, k)");
    return s;
  }
  double v_scale(int d, int k) const { return alpha / 2.0 * (d - k); }

  /// log Vol(St(k, d)) = sum_{i<k} log(2 pi^{(d-i)/2} / Gamma((d-i)/2)).
  static double log_stiefel_volume(int d, int k) {
    double s = 0.0;
    for (int i = 0; i < k; ++i) {
      const double a = 0.5 * (d - i);
      s += std::log(2.0) + a * std::log(std::numbers::pi) - log_gamma(a);
    }
    return s;
  }

  /// Density of (l, v) with respect to Lebesgue measure, U excluded.
  double log_density_lv(const PpcaParams& p) const {
    const int d = p.data_dim(), k = p.latent_dim();
    double s = log_inverse_gamma(p.v, v_shape(d, k), v_scale(d, k));
    for (int a = 0; a < k; ++a) s += log_inverse_gamma(p.l(a), alpha / 2.0, alpha / 2.0);
    return s;
  }

  /// log prior density in chart coordinates at the chart's base point,
  /// including the Jacobian of (eta, zeta) -> (l, v) and the U volume factor.
  double log_density_chart(const PpcaChart& chart, const PpcaParams& p) const {
    const int d = p.data_dim(), k = p.latent_dim();
    double jac = std::log(p.v);
    for (int a = 0; a < k; ++a) jac += std::log(p.l(a) - p.v);
    return log_density_lv(p) + jac - log_stiefel_volume(d, k) + chart.log_volume_factor();
  }
};

struct ModelDim {
  int m_f = 0;
};

inline ModelDim ppca_foreground_dim(int latent_dim, int subset_size) {
  require(latent_dim > 0, ErrorKind::Domain, "latent dimension must be positive");
  require(subset_size >= latent_dim, ErrorKind::Domain,
          "subset size " + std::to_string(subset_size) + " is below latent dimension " + std::to_string(latent_dim));
  return {subset_size * latent_dim - latent_dim * (latent_dim + 1) / 2 + latent_dim + 1};
}

inline ModelDim gaussian_foreground_dim(int subset_size) {
  require(subset_size >= 0, ErrorKind::Domain, "subset size must be nonnegative");
  return {subset_size};
}

/// d score / d z for the pPCA chart by central differences,
/// step 1e-4 (1 + |z_i|). Returns d x m.
inline Matrix ppca_score_dtheta(const PpcaChart& chart, const Eigen::Ref<const ParamVector>& z,
                                const Eigen::Ref<const Vector>& x) {
  Matrix out(chart.d(), chart.size());
  ParamVector zp = z;
  for (int i = 0; i < chart.size(); ++i) {
    const double h = 1e-4 * (1.0 + std::abs(z(i)));
    zp(i) = z(i) + h;
    const Vector sp = chart.at(zp).score(x);
    zp(i) = z(i) - h;
    const Vector sm = chart.at(zp).score(x);
    zp(i) = z(i);
    out.col(i) = (sp - sm) / (2.0 * h);
  }
  return out;
}

}  // namespace stein
