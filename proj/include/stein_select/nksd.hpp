#pragma once

#include "stein_select/common.hpp"
#include "stein_select/kernel.hpp"
#include "stein_select/random.hpp"
#include "stein_select/score_models.hpp"

namespace stein {

struct NksdEstimate {
  double value = 0.0;
  double numerator = 0.0;    // sum_{i != j} u / (n (n - 1))
  double denominator = 0.0;  // sum_{i != j} k / (n (n - 1))
  Eigen::Index n = 0;
};

/// Stein kernel
///   u(x,y) = s(x)^T s(y) k + s(x)^T grad_y k + s(y)^T grad_x k + Tr(grad_x grad_y^T k)
/// from precomputed scores.
inline double u_from_scores(const KernelSpec& spec, const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y,
                            const Eigen::Ref<const Vector>& sx, const Eigen::Ref<const Vector>& sy) {
  const KernelTerms t = kernel_terms(spec, x, y);
  return sx.dot(sy) * t.k + sx.dot(t.grad_y) + sy.dot(t.grad_x) + t.trace_cross;
}

template <typename Model>
double u_pair(const Model& model, const Eigen::Ref<const ParamVector>& theta, const Eigen::Ref<const Vector>& x,
              const Eigen::Ref<const Vector>& y, const KernelSpec& spec) {
  return u_from_scores(spec, x, y, model.score(theta, x), model.score(theta, y));
}

template <typename Model>
Matrix score_matrix(const Model& model, const Eigen::Ref<const ParamVector>& theta, const Eigen::Ref<const Matrix>& data) {
  Matrix s(data.rows(), data.cols());
  for (Eigen::Index i = 0; i < data.rows(); ++i) s.row(i) = model.score(theta, data.row(i).transpose()).transpose();
  return s;
}

inline Matrix score_matrix(const PpcaParams& p, const Eigen::Ref<const Matrix>& data) {
  // -X C^{-1}, C^{-1} symmetric
  return -(data * p.precision());
}

namespace detail {

inline NksdEstimate finish_estimate(double num, double den, Eigen::Index n) {
  NksdEstimate e;
  e.n = n;
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1);
  e.numerator = num / pairs;
  e.denominator = den / pairs;
  e.value = num / den;
  return e;
}

}  // namespace detail

/// U-statistic NKSD estimate from a score matrix (row i = s(X_i)).
inline NksdEstimate nksd_from_scores(const Eigen::Ref<const Matrix>& data, const Eigen::Ref<const Matrix>& scores,
                                     const KernelSpec& spec) {
  const Eigen::Index n = data.rows(), d = data.cols();
  require(n >= 2, ErrorKind::InsufficientData, "NKSD estimate needs at least 2 rows, got " + std::to_string(n));
  require(d == spec.dim && scores.rows() == n && scores.cols() == d, ErrorKind::Input,
          "data, score and kernel dimensions disagree");
  // u is symmetric, so each unordered pair is visited once and counted twice.
  const RowMatrix x = data, s = scores;
  std::vector<double> r(static_cast<std::size_t>(d)), g(static_cast<std::size_t>(d));
  CompensatedSum num, den;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* xi = x.row(i).data();
    const double* si = s.row(i).data();
    double row_u = 0.0, row_k = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double* xj = x.row(j).data();
      const double* sj = s.row(j).data();
      for (Eigen::Index b = 0; b < d; ++b) r[static_cast<std::size_t>(b)] = xi[b] - xj[b];
      double tr;
      const double k = detail::terms_from_diff(spec, r.data(), g.data(), &tr);
      double ss = 0.0, cross = 0.0;
      for (Eigen::Index b = 0; b < d; ++b) {
        ss += si[b] * sj[b];
        // s_i . grad_y k + s_j . grad_x k with grad_y k = -grad_x k
        cross += (sj[b] - si[b]) * g[static_cast<std::size_t>(b)];
      }
      row_u += ss * k + cross + tr;
      row_k += k;
    }
    num.add(2.0 * row_u);
    den.add(2.0 * row_k);
  }
  return detail::finish_estimate(num.value(), den.value(), n);
}

template <typename Model>
NksdEstimate nksd_hat(const Model& model, const Eigen::Ref<const ParamVector>& theta, const Eigen::Ref<const Matrix>& data,
                      const KernelSpec& spec) {
  require(data.rows() >= 2, ErrorKind::InsufficientData, "NKSD estimate needs at least 2 rows");
  return nksd_from_scores(data, score_matrix(model, theta, data), spec);
}

inline NksdEstimate nksd_hat(const PpcaParams& p, const Eigen::Ref<const Matrix>& data, const KernelSpec& spec) {
  require(data.rows() >= 2, ErrorKind::InsufficientData, "NKSD estimate needs at least 2 rows");
  return nksd_from_scores(data, score_matrix(p, data), spec);
}

// ---------------------------------------------------------------------------
// Exponential-family quadratic form

/// nksd_hat(theta) = theta^T A theta + B^T theta + C.
struct QuadraticForm {
  Matrix a;
  Vector b;
  double c_scalar = 0.0;

  Eigen::Index size() const { return b.size(); }

  double value(const Eigen::Ref<const ParamVector>& theta) const {
    if (b.size() == 0) return c_scalar;
    return theta.dot(a * theta) + b.dot(theta) + c_scalar;
  }

  Vector gradient(const Eigen::Ref<const ParamVector>& theta) const { return (a + a.transpose()) * theta + b; }
};

/// A, B, C of the exponential-family NKSD with the shared 1 / sum k factor:
///   A = sum J_i J_j^T k
///   B = sum J_i g_j k + J_j g_i k + J_i grad_y k + J_j grad_x k
///   C = sum g_i^T g_j k + g_j^T grad_x k + g_i^T grad_y k + Tr(grad_x grad_y^T k)
/// with g = grad log lambda, sums over ordered pairs i != j.
inline QuadraticForm quadratic_coeffs(const ExpFamModel& model, const Eigen::Ref<const Matrix>& data,
                                      const KernelSpec& spec) {
  const Eigen::Index n = data.rows(), d = data.cols(), m = model.m_f;
  require(n >= 2, ErrorKind::InsufficientData, "NKSD estimate needs at least 2 rows, got " + std::to_string(n));
  require(d == spec.dim && d == model.dim, ErrorKind::Input, "data, model and kernel dimensions disagree");
  Matrix g(n, d);
  for (Eigen::Index i = 0; i < n; ++i) g.row(i) = model.log_lambda_grad(data.row(i).transpose()).transpose();
  const NksdEstimate c_part = nksd_from_scores(data, g, spec);

  QuadraticForm qf;
  qf.c_scalar = c_part.value;
  if (m == 0) {
    qf.a = Matrix(0, 0);
    qf.b = Vector(0);
    return qf;
  }
  const double k_total = c_part.denominator * static_cast<double>(n) * static_cast<double>(n - 1);

  if (model.constant_jacobian) {
    // A = J J^T; the kernel-gradient terms of B cancel pairwise and
    // B = (2 / sum k) J sum_i g_i sum_{j != i} k_ij.
    const Matrix& jac = *model.constant_jacobian;
    Vector w = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double k = eval(spec, data.row(i).transpose(), data.row(j).transpose());
        w(i) += k;
        w(j) += k;
      }
    CompensatedMatrixSum gw(d, 1);
    for (Eigen::Index i = 0; i < n; ++i) gw.add(g.row(i).transpose() * w(i));
    qf.a = jac * jac.transpose();
    qf.b = 2.0 * jac * gw.value() / k_total;
    return qf;
  }

  std::vector<Matrix> jacs(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) jacs[static_cast<std::size_t>(i)] = model.jacobian(data.row(i).transpose());
  CompensatedMatrixSum a_sum(m, m), b_sum(m, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Matrix& ji = jacs[static_cast<std::size_t>(i)];
    Matrix a_row = Matrix::Zero(m, m);
    Vector b_row = Vector::Zero(m);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const Matrix& jj = jacs[static_cast<std::size_t>(j)];
      const KernelTerms t = kernel_terms(spec, data.row(i).transpose(), data.row(j).transpose());
      a_row.noalias() += t.k * ji * jj.transpose();
      b_row.noalias() += ji * (g.row(j).transpose() * t.k + t.grad_y) + jj * (g.row(i).transpose() * t.k + t.grad_x);
    }
    a_sum.add(a_row);
    b_sum.add(b_row);
  }
  qf.a = symmetrize(a_sum.value() / k_total);
  qf.b = b_sum.value() / k_total;
  return qf;
}

/// Quadratic form of N(theta, Sigma) (or of N(mean, Sigma) with no free
/// parameters) from pairwise statistics computed on the same coordinates.
inline QuadraticForm gaussian_quadratic_coeffs(const PairwiseStats& st, const GaussianLocationModel& model) {
  require(st.dim() == model.dim(), ErrorKind::Input, "statistics and model dimensions disagree");
  const Matrix p = model.precision();
  const Matrix p2 = p * p;
  const double kb = st.k_bar;
  // Expand s(x) = -P (x - mu) with mu = theta (free) or the fixed mean.
  const double base = ((p2 * st.xt_k_x).trace() - 2.0 * (p * st.xt_kdot).trace() + st.k_ddot) / kb;
  const Vector lin = (-2.0 * p2 * st.k_x + 2.0 * p * st.kdot_sum) / kb;  // coefficient of mu
  QuadraticForm qf;
  if (model.free_mean) {
    qf.a = p2;
    qf.b = lin;
    qf.c_scalar = base;
  } else {
    const Vector& mu = model.fixed_mean;
    qf.a = Matrix(0, 0);
    qf.b = Vector(0);
    qf.c_scalar = base + lin.dot(mu) + mu.dot(p2 * mu);
  }
  return qf;
}

// ---------------------------------------------------------------------------
// Subsystem split

/// Coordinates of the foreground block; the background is the complement.
struct Split {
  std::vector<int> f_dims;
  std::vector<int> b_dims;
};

inline Split make_split(int d, const std::vector<int>& f_dims) {
  Split s;
  std::vector<bool> in(static_cast<std::size_t>(d), false);
  for (int b : f_dims) {
    require(b >= 0 && b < d, ErrorKind::Input, "foreground index out of range");
    require(!in[static_cast<std::size_t>(b)], ErrorKind::Input, "duplicate foreground index");
    in[static_cast<std::size_t>(b)] = true;
  }
  s.f_dims = f_dims;
  for (int b = 0; b < d; ++b)
    if (!in[static_cast<std::size_t>(b)]) s.b_dims.push_back(b);
  return s;
}

struct SplitEstimate {
  double foreground = 0.0;
  double background = 0.0;
};

/// For a product model q(x) = q_F(x_F) q_B(x_B) and product kernel
/// k = k_F k_B, returns
///   NKSDbar_F = sum u_F k_B / sum k_F k_B,   NKSDbar_B = sum u_B k_F / sum k_F k_B,
/// which add up to the estimate of the product model under k.
/// scores_f / scores_b are the block scores on data(:, f_dims) / data(:, b_dims);
/// an empty background uses k_B = 1 and contributes 0.
inline SplitEstimate nksd_subsystem_split(const Eigen::Ref<const Matrix>& data, const Split& split,
                                          const Eigen::Ref<const Matrix>& scores_f, const Eigen::Ref<const Matrix>& scores_b,
                                          const KernelSpec& spec_f, const KernelSpec& spec_b) {
  const Eigen::Index n = data.rows();
  require(n >= 2, ErrorKind::InsufficientData, "NKSD estimate needs at least 2 rows");
  require(spec_f.dim == static_cast<int>(split.f_dims.size()) && spec_b.dim == static_cast<int>(split.b_dims.size()),
          ErrorKind::Input, "kernel dimensions do not match the split");
  const Matrix xf = select_columns(data, split.f_dims), xb = select_columns(data, split.b_dims);
  require(scores_f.rows() == n && scores_f.cols() == xf.cols() && scores_b.rows() == n && scores_b.cols() == xb.cols(),
          ErrorKind::Input, "block score shapes do not match the split");
  CompensatedSum num_f, num_b, den;
  for (Eigen::Index i = 0; i < n; ++i) {
    double rf = 0.0, rb = 0.0, rk = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Vector xfi = xf.row(i).transpose(), xfj = xf.row(j).transpose();
      const Vector xbi = xb.row(i).transpose(), xbj = xb.row(j).transpose();
      const KernelTerms tf = kernel_terms(spec_f, xfi, xfj);
      const KernelTerms tb = kernel_terms(spec_b, xbi, xbj);
      const double uf = scores_f.row(i).dot(scores_f.row(j)) * tf.k + scores_f.row(i).dot(tf.grad_y.transpose()) +
                        scores_f.row(j).dot(tf.grad_x.transpose()) + tf.trace_cross;
      const double ub = scores_b.row(i).dot(scores_b.row(j)) * tb.k + scores_b.row(i).dot(tb.grad_y.transpose()) +
                        scores_b.row(j).dot(tb.grad_x.transpose()) + tb.trace_cross;
      rf += uf * tb.k;
      rb += ub * tf.k;
      rk += tf.k * tb.k;
    }
    num_f.add(2.0 * rf);
    num_b.add(2.0 * rb);
    den.add(2.0 * rk);
  }
  return {num_f.value() / den.value(), num_b.value() / den.value()};
}

// ---------------------------------------------------------------------------
// Population NKSD

/// Monte Carlo estimate of NKSD(p || q) = E[u(X,Y)] / E[k(X,Y)] from
/// independent pairs X, Y ~ p.
template <typename Sampler, typename ScoreFn>
double population_nksd(Sampler&& sample, ScoreFn&& score, const KernelSpec& spec, std::int64_t pairs,
                       std::uint64_t seed) {
  require(pairs > 0, ErrorKind::Config, "population NKSD needs a positive number of pairs");
  Rng rng(seed);
  CompensatedSum num, den;
  for (std::int64_t p = 0; p < pairs; ++p) {
    const Vector x = sample(rng);
    const Vector y = sample(rng);
    const KernelTerms t = kernel_terms(spec, x, y);
    const Vector sx = score(x), sy = score(y);
    num.add(sx.dot(sy) * t.k + sx.dot(t.grad_y) + sy.dot(t.grad_x) + t.trace_cross);
    den.add(t.k);
  }
  return num.value() / den.value();
}

// ---------------------------------------------------------------------------
// pPCA objective from pairwise statistics

/// With P = C^{-1} = U D U^T + w I, D = diag(1/l - 1/v), w = 1/v,
/// M = X^T K X, G = X^T Kdot and G_s its symmetric part:
///   nksd_hat = (1/k_bar) [Tr(U^T M U D^2) + Tr(U^T (2wM - 2G_s) U D) + w (w Tr M - 2 Tr G) + k_ddot].
inline double ppca_nksd(const PairwiseStats& st, const PpcaParams& p) {
  require(st.dim() == p.data_dim(), ErrorKind::Input, "statistics and pPCA dimensions disagree");
  const Vector dd = p.l.cwiseInverse().array() - 1.0 / p.v;
  const double w = 1.0 / p.v;
  const Matrix& m = st.xt_k_x;
  const Matrix gs = symmetrize(st.xt_kdot);
  const Matrix mu = m * p.u;
  const Matrix gu = gs * p.u;
  double s = 0.0;
  for (int a = 0; a < p.latent_dim(); ++a) {
    const double q = p.u.col(a).dot(mu.col(a));
    const double r = p.u.col(a).dot(gu.col(a));
    s += dd(a) * dd(a) * q + dd(a) * (2.0 * w * q - 2.0 * r);
  }
  s += w * (w * m.trace() - 2.0 * st.xt_kdot.trace()) + st.k_ddot;
  return s / st.k_bar;
}

struct PpcaGradient {
  Matrix g_u;    // Euclidean gradient in U
  Vector g_eta;  // in eta_a = log(l_a - v)
  double g_zeta = 0.0;  // in zeta = log v
};

inline PpcaGradient ppca_nksd_gradient(const PairwiseStats& st, const PpcaParams& p) {
  const int k = p.latent_dim();
  const Vector dd = p.l.cwiseInverse().array() - 1.0 / p.v;
  const double w = 1.0 / p.v;
  const double inv = 1.0 / st.k_bar;
  const Matrix& m = st.xt_k_x;
  const Matrix gs = symmetrize(st.xt_kdot);
  const Matrix mu = m * p.u;
  const Matrix nu = (2.0 * w) * mu - 2.0 * (gs * p.u);  // (2wM - 2G_s) U
  PpcaGradient out;
  out.g_u = inv * (2.0 * mu * dd.cwiseAbs2().asDiagonal() + 2.0 * nu * dd.asDiagonal());
  Vector f_d(k);
  double tr_qd = 0.0;
  for (int a = 0; a < k; ++a) {
    const double q = p.u.col(a).dot(mu.col(a));
    f_d(a) = inv * (2.0 * dd(a) * q + p.u.col(a).dot(nu.col(a)));
    tr_qd += q * dd(a);
  }
  const double f_w = inv * (2.0 * tr_qd + 2.0 * w * m.trace() - 2.0 * st.xt_kdot.trace());
  out.g_eta.resize(k);
  out.g_zeta = -w * f_w;
  for (int a = 0; a < k; ++a) {
    const double la = p.l(a);
    out.g_eta(a) = f_d(a) * (-(la - p.v) / (la * la));
    out.g_zeta += f_d(a) * (1.0 / p.v - p.v / (la * la));
  }
  return out;
}

}  // namespace stein
