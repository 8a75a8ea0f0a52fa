#pragma once

#include "stein_select/common.hpp"
#include "stein_select/kernel.hpp"
#include "stein_select/nksd.hpp"
#include "stein_select/random.hpp"
#include "stein_select/score_models.hpp"

#include <functional>

namespace stein {

struct OptimResult {
  ParamVector theta_opt;
  double objective = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// theta_N = -1/2 A_sym^{-1} B, objective C - 1/4 B^T A_sym^{-1} B.
inline OptimResult minimize_quadratic(const QuadraticForm& qf) {
  OptimResult r;
  r.converged = true;
  if (qf.size() == 0) {
    r.theta_opt = ParamVector(0);
    r.objective = qf.c_scalar;
    return r;
  }
  const Matrix a = symmetrize(qf.a);
  Eigen::LLT<Matrix> llt(a);
  require(llt.info() == Eigen::Success, ErrorKind::Numeric, "quadratic NKSD has an indefinite A; no unique minimum");
  r.theta_opt = -0.5 * llt.solve(qf.b);
  r.objective = qf.c_scalar - 0.25 * qf.b.dot(llt.solve(qf.b));
  r.grad_norm = (2.0 * a * r.theta_opt + qf.b).norm();
  return r;
}

using Objective = std::function<double(const ParamVector&)>;

namespace detail {
inline double checked(const Objective& f, const ParamVector& t) {
  const double v = f(t);
  if (!std::isfinite(v)) fail(ErrorKind::Numeric, "objective is not finite inside the finite-difference stencil");
  return v;
}
}  // namespace detail

/// Central-difference gradient, step rel_step (1 + |theta_i|).
inline Vector gradient_fd(const Objective& f, const Eigen::Ref<const ParamVector>& theta, double rel_step = 1e-6) {
  const Eigen::Index m = theta.size();
  Vector g(m);
  ParamVector t = theta;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double h = rel_step * (1.0 + std::abs(theta(i)));
    t(i) = theta(i) + h;
    const double fp = detail::checked(f, t);
    t(i) = theta(i) - h;
    const double fm = detail::checked(f, t);
    t(i) = theta(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Central-difference Hessian returned as (H + H^T)/2.
inline Matrix hessian_fd(const Objective& f, const Eigen::Ref<const ParamVector>& theta, double rel_step = 1e-4) {
  const Eigen::Index m = theta.size();
  Matrix h(m, m);
  Vector step(m);
  for (Eigen::Index i = 0; i < m; ++i) step(i) = rel_step * (1.0 + std::abs(theta(i)));
  ParamVector t = theta;
  const double f0 = detail::checked(f, t);
  for (Eigen::Index i = 0; i < m; ++i) {
    t(i) = theta(i) + step(i);
    const double fp = detail::checked(f, t);
    t(i) = theta(i) - step(i);
    const double fm = detail::checked(f, t);
    t(i) = theta(i);
    h(i, i) = (fp - 2.0 * f0 + fm) / (step(i) * step(i));
    for (Eigen::Index j = i + 1; j < m; ++j) {
      double acc = 0.0;
      for (int si = -1; si <= 1; si += 2)
        for (int sj = -1; sj <= 1; sj += 2) {
          t(i) = theta(i) + si * step(i);
          t(j) = theta(j) + sj * step(j);
          acc += si * sj * detail::checked(f, t);
        }
      t(i) = theta(i);
      t(j) = theta(j);
      h(i, j) = h(j, i) = acc / (4.0 * step(i) * step(j));
    }
  }
  return symmetrize(h);
}

/// First-order re-optimization from the optimum of l1:
///   theta_2 ~ theta_base - (grad^2 l1)^{-1} grad l2(theta_base).
/// The factorization is built once and reused for many l2.
class LinearResponseSolver {
 public:
  LinearResponseSolver(const Eigen::Ref<const Matrix>& hessian_l1, const Eigen::Ref<const ParamVector>& theta_base)
      : theta_base_(theta_base), lu_(hessian_l1) {
    require(hessian_l1.rows() == theta_base.size() && hessian_l1.cols() == theta_base.size(), ErrorKind::Input,
            "Hessian shape does not match the base parameter");
    const Eigen::JacobiSVD<Matrix> svd(hessian_l1);
    const Vector sv = svd.singularValues();
    require(sv.size() == 0 || sv(sv.size() - 1) > 0.0, ErrorKind::Numeric, "Hessian of l1 is singular");
    condition_ = sv.size() == 0 ? 1.0 : sv(0) / sv(sv.size() - 1);
    require(std::isfinite(condition_) && condition_ < 1e14, ErrorKind::Numeric, "Hessian of l1 is numerically singular");
    hessian_inv_ = lu_.inverse();
  }

  const Matrix& hessian_inv() const { return hessian_inv_; }
  double condition_number() const { return condition_; }

  Vector correction(const Eigen::Ref<const Vector>& grad_l2) const { return -lu_.solve(grad_l2); }
  ParamVector apply(const Eigen::Ref<const Vector>& grad_l2) const { return theta_base_ + correction(grad_l2); }

 private:
  ParamVector theta_base_;
  Eigen::PartialPivLU<Matrix> lu_;
  Matrix hessian_inv_;
  double condition_ = 1.0;
};

struct LinearResponse {
  ParamVector theta_base;
  Matrix hessian_inv;
  Vector correction;
  double condition_number = 1.0;

  ParamVector theta() const { return theta_base + correction; }
};

inline LinearResponse approx_optimum(const Eigen::Ref<const Matrix>& hessian_l1, const Eigen::Ref<const Vector>& grad_l2,
                                     const Eigen::Ref<const ParamVector>& theta_base) {
  const LinearResponseSolver solver(hessian_l1, theta_base);
  return {theta_base, solver.hessian_inv(), solver.correction(grad_l2), solver.condition_number()};
}

// ---------------------------------------------------------------------------
// pPCA

struct PpcaOptions {
  double grad_tol = 1e-6;
  int max_iter = 5000;
  double armijo_c = 1e-4;
  double shrink = 0.5;
  double initial_step = 1.0;
  int random_starts = 3;
  std::uint64_t seed = 0;
};

struct PpcaFit {
  PpcaParams params;
  OptimResult result;
};

/// Principal axes of the second-moment matrix, noise = mean of the rest.
inline PpcaParams ppca_moment_init(const Eigen::Ref<const Matrix>& data, int k) {
  const Eigen::Index d = data.cols();
  require(k >= 1 && k < d, ErrorKind::Domain, "latent dimension must lie in [1, d)");
  const Matrix s = data.transpose() * data / static_cast<double>(data.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  PpcaParams p;
  p.u.resize(d, k);
  p.l.resize(k);
  for (int a = 0; a < k; ++a) {
    p.u.col(a) = es.eigenvectors().col(d - 1 - a);
    p.l(a) = es.eigenvalues()(d - 1 - a);
  }
  p.v = std::max(es.eigenvalues().head(d - k).mean(), 1e-3);
  for (int a = 0; a < k; ++a) p.l(a) = std::max(p.l(a), p.v * 1.01 + 1e-6);
  p.u = qf(p.u);
  return p;
}

namespace detail {

struct PpcaState {
  Matrix u;
  Vector eta;
  double zeta;

  static PpcaState from(const PpcaParams& p) {
    PpcaState s{p.u, (p.l.array() - p.v).log().matrix(), std::log(p.v)};
    return s;
  }
  PpcaParams params() const {
    PpcaParams p;
    p.u = u;
    p.v = std::exp(zeta);
    p.l = eta.array().exp() + p.v;
    p.clamp();
    return p;
  }
};

struct RiemannianGrad {
  Matrix g_u;
  Vector g_eta;
  double g_zeta;
  double norm2() const { return g_u.squaredNorm() + g_eta.squaredNorm() + g_zeta * g_zeta; }
};

inline RiemannianGrad riemannian_gradient(const PairwiseStats& st, const PpcaState& s) {
  const PpcaGradient g = ppca_nksd_gradient(st, s.params());
  RiemannianGrad r;
  r.g_u = g.g_u - s.u * symmetrize(s.u.transpose() * g.g_u);
  r.g_eta = g.g_eta;
  r.g_zeta = g.g_zeta;
  return r;
}

inline PpcaState retract(const PpcaState& s, const RiemannianGrad& dir, double t) {
  return {qf(s.u - t * dir.g_u), s.eta - t * dir.g_eta, s.zeta - t * dir.g_zeta};
}

inline double state_inner(const RiemannianGrad& a, const RiemannianGrad& b) {
  return (a.g_u.array() * b.g_u.array()).sum() + a.g_eta.dot(b.g_eta) + a.g_zeta * b.g_zeta;
}

/// Retraction gradient descent with Armijo backtracking. The trial step is
/// the Barzilai-Borwein length from the previous iteration (initial_step on
/// the first), so the objective is monotone over accepted steps.
inline PpcaFit descend_ppca(const PairwiseStats& st, const PpcaParams& init, const PpcaOptions& opt,
                            std::vector<double>* trace = nullptr) {
  PpcaState s = PpcaState::from(init);
  double f = ppca_nksd(st, s.params());
  require(std::isfinite(f), ErrorKind::Numeric, "pPCA objective is not finite at the initial point");
  if (trace) trace->push_back(f);
  RiemannianGrad g = riemannian_gradient(st, s);
  double step = opt.initial_step;
  PpcaFit fit;
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    const double gn2 = g.norm2();
    if (std::sqrt(gn2) <= opt.grad_tol) break;
    double t = step;
    PpcaState next;
    double f_next = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < 80; ++bt) {
      next = retract(s, g, t);
      f_next = ppca_nksd(st, next.params());
      if (std::isfinite(f_next) && f_next <= f - opt.armijo_c * t * gn2) {
        accepted = true;
        break;
      }
      t *= opt.shrink;
    }
    if (!accepted) break;
    const RiemannianGrad g_next = riemannian_gradient(st, next);
    // BB1 step from the ambient difference of iterates and gradients.
    RiemannianGrad ds{next.u - s.u, next.eta - s.eta, next.zeta - s.zeta};
    RiemannianGrad dg{g_next.g_u - g.g_u, g_next.g_eta - g.g_eta, g_next.g_zeta - g.g_zeta};
    const double sy = state_inner(ds, dg), ss = state_inner(ds, ds);
    step = (sy > 0.0 && std::isfinite(sy)) ? std::clamp(ss / sy, 1e-10, 1e10) : std::max(t, 1e-10) * 2.0;
    s = std::move(next);
    f = f_next;
    g = g_next;
    if (trace) trace->push_back(f);
  }
  fit.params = s.params();
  fit.result.objective = f;
  fit.result.grad_norm = std::sqrt(g.norm2());
  fit.result.iterations = it;
  fit.result.converged = fit.result.grad_norm <= opt.grad_tol;
  fit.result.theta_opt = PpcaChart(fit.params).base_coords();
  return fit;
}

}  // namespace detail

/// Minimum-NKSD pPCA fit from pairwise statistics of the (sub)data.
/// Starts: `init` when given, the moment-based start, and opt.random_starts
/// Haar-random loadings; the lowest objective wins.
inline PpcaFit minimize_ppca(const PairwiseStats& st, const Eigen::Ref<const Matrix>& data, int latent_dim,
                             const PpcaOptions& opt = {}, const std::optional<PpcaParams>& init = std::nullopt) {
  require(st.n >= 2, ErrorKind::InsufficientData, "pPCA fit needs at least 2 rows");
  require(st.dim() == data.cols(), ErrorKind::Input, "statistics and data dimensions disagree");
  require(latent_dim < st.dim(), ErrorKind::Domain, "latent dimension must be below the data dimension");
  std::vector<PpcaParams> starts;
  if (init) starts.push_back(*init);
  const PpcaParams moment = ppca_moment_init(data, latent_dim);
  starts.push_back(moment);
  Rng rng(opt.seed);
  for (int r = 0; r < opt.random_starts; ++r) {
    PpcaParams p = moment;
    p.u = rng.stiefel(st.dim(), latent_dim);
    starts.push_back(p);
  }
  std::optional<PpcaFit> best;
  for (const auto& s : starts) {
    PpcaFit fit = detail::descend_ppca(st, s, opt);
    if (!best || fit.result.objective < best->result.objective) best = std::move(fit);
  }
  return *best;
}

}  // namespace stein
