#pragma once

#include "stein_select/common.hpp"

#include <algorithm>

namespace stein {

enum class KernelFamily { FactoredImq, Rbf };

/// Positive, symmetric, stationary kernel on R^dim.
///
/// FactoredImq: k(x,y) = prod_b (c^2 + (x_b - y_b)^2)^(beta/dim).
/// Rbf:         k(x,y) = exp(-|x - y|^2 / (2 h^2)).
///
/// dim is fixed at construction: the IMQ exponent depends on it, so a kernel
/// for a coordinate subset must be built with the subset size (see with_dim).
struct KernelSpec {
  KernelFamily family = KernelFamily::FactoredImq;
  double beta = -0.5;
  double c = 1.0;
  double bandwidth = 1.0;
  int dim = 1;

  static KernelSpec factored_imq(int dim, double beta = -0.5, double c = 1.0) {
    KernelSpec s;
    s.family = KernelFamily::FactoredImq;
    s.dim = dim;
    s.beta = beta;
    s.c = c;
    s.validate();
    return s;
  }

  static KernelSpec rbf(int dim, double bandwidth = 1.0) {
    KernelSpec s;
    s.family = KernelFamily::Rbf;
    s.dim = dim;
    s.bandwidth = bandwidth;
    s.validate();
    return s;
  }

  /// Same family and hyperparameters on a space of dimension d.
  KernelSpec with_dim(int d) const {
    KernelSpec s = *this;
    s.dim = d;
    s.validate();
    return s;
  }

  /// dim = 0 is allowed and denotes the empty product (k = 1).
  void validate() const {
    require(dim >= 0, ErrorKind::Input, "kernel dimension must be nonnegative");
    if (family == KernelFamily::FactoredImq) {
      require(beta >= -0.5 && beta < 0.0, ErrorKind::Config, "factored IMQ beta must lie in [-1/2, 0)");
      require(c > 0.0, ErrorKind::Config, "factored IMQ offset c must be positive");
    } else {
      require(bandwidth > 0.0, ErrorKind::Config, "RBF bandwidth must be positive");
    }
  }

  /// Sup of k over all pairs (attained at x = y).
  double upper_bound() const {
    return family == KernelFamily::FactoredImq ? std::pow(c, 2.0 * beta) : 1.0;
  }
};

/// Value and the derivative quantities entering the Stein kernel at one pair.
struct KernelTerms {
  double k = 0.0;
  Vector grad_x;  // d/dx k(x, y)
  Vector grad_y;  // d/dy k(x, y)
  double trace_cross = 0.0;  // sum_b d^2 k / dx_b dy_b
};

namespace detail {

inline void check_pair(const KernelSpec& spec, Eigen::Index nx, Eigen::Index ny) {
  if (nx != spec.dim || ny != spec.dim)
    fail(ErrorKind::Input, "kernel of dimension " + std::to_string(spec.dim) + " evaluated on vectors of length " +
                               std::to_string(nx) + " and " + std::to_string(ny));
}

/// Writes k, grad_x and trace into the outputs; r = x - y.
/// grad_y is -grad_x for both families, so it is left to the caller.
inline double terms_from_diff(const KernelSpec& spec, const double* r, double* grad_x, double* trace) {
  const int d = spec.dim;
  if (d == 0) {
    *trace = 0.0;
    return 1.0;
  }
  if (spec.family == KernelFamily::FactoredImq) {
    const double e = spec.beta / d;
    const double c2 = spec.c * spec.c;
    double log_k = 0.0;
    for (int b = 0; b < d; ++b) log_k += std::log(c2 + r[b] * r[b]);
    const double k = std::exp(e * log_k);
    double tr = 0.0;
    for (int b = 0; b < d; ++b) {
      const double q = c2 + r[b] * r[b];
      grad_x[b] = k * e * 2.0 * r[b] / q;
      tr += 2.0 * e / q + (e * e - e) * 4.0 * r[b] * r[b] / (q * q);
    }
    *trace = -k * tr;
    return k;
  }
  const double h2 = spec.bandwidth * spec.bandwidth;
  double r2 = 0.0;
  for (int b = 0; b < d; ++b) r2 += r[b] * r[b];
  const double k = std::exp(-0.5 * r2 / h2);
  for (int b = 0; b < d; ++b) grad_x[b] = -r[b] / h2 * k;
  *trace = k * (d / h2 - r2 / (h2 * h2));
  return k;
}

}  // namespace detail

inline double eval(const KernelSpec& spec, const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) {
  detail::check_pair(spec, x.size(), y.size());
  if (spec.dim == 0) return 1.0;
  if (spec.family == KernelFamily::FactoredImq) {
    const double c2 = spec.c * spec.c;
    double log_k = 0.0;
    // |x_b - y_b| keeps the value bitwise symmetric in (x, y).
    for (int b = 0; b < spec.dim; ++b) {
      const double r = std::abs(x(b) - y(b));
      log_k += std::log(c2 + r * r);
    }
    return std::exp(spec.beta / spec.dim * log_k);
  }
  double r2 = 0.0;
  for (int b = 0; b < spec.dim; ++b) {
    const double r = std::abs(x(b) - y(b));
    r2 += r * r;
  }
  return std::exp(-0.5 * r2 / (spec.bandwidth * spec.bandwidth));
}

inline KernelTerms kernel_terms(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                                const Eigen::Ref<const Vector>& y) {
  detail::check_pair(spec, x.size(), y.size());
  KernelTerms t;
  const Vector r = x - y;
  t.grad_x.resize(spec.dim);
  t.k = detail::terms_from_diff(spec, r.data(), t.grad_x.data(), &t.trace_cross);
  t.grad_y = -t.grad_x;
  return t;
}

inline Vector eval_grad_x(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                          const Eigen::Ref<const Vector>& y) {
  return kernel_terms(spec, x, y).grad_x;
}

inline Vector eval_grad_y(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                          const Eigen::Ref<const Vector>& y) {
  return kernel_terms(spec, x, y).grad_y;
}

inline double eval_trace_cross(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                               const Eigen::Ref<const Vector>& y) {
  return kernel_terms(spec, x, y).trace_cross;
}

/// Data summaries sufficient for the NKSD of any zero-mean or Gaussian-score
/// model: with K_ij = 1{i != j} k(X_i, X_j) and Kdot_jb = sum_{i != j} dk/dx_b (X_i, X_j),
///   k_bar   = sum K_ij
///   xt_k_x  = X^T K X
///   xt_kdot = X^T Kdot
///   k_ddot  = sum_{i != j} Tr(grad_x grad_y^T k)
///   k_x     = sum_{i != j} K_ij X_i      (= X^T K 1)
///   kdot_sum = sum_j Kdot_j             (= Kdot^T 1)
struct PairwiseStats {
  double k_bar = 0.0;
  Matrix xt_k_x;
  Matrix xt_kdot;
  double k_ddot = 0.0;
  Vector k_x;
  Vector kdot_sum;
  Eigen::Index n = 0;

  Eigen::Index dim() const { return xt_k_x.rows(); }
};

namespace detail {

/// Per-row accumulators filled by a half pair loop, reduced in row order.
struct RowAccumulators {
  Eigen::Index n, d;
  RowMatrix kx;    // row i: sum_{j != i} k_ij X_j
  RowMatrix kdot;  // row j: Kdot_j
  std::vector<double> ksum, trsum;

  RowAccumulators(Eigen::Index n_, Eigen::Index d_)
      : n(n_), d(d_), kx(RowMatrix::Zero(n_, d_)), kdot(RowMatrix::Zero(n_, d_)),
        ksum(static_cast<std::size_t>(n_), 0.0), trsum(static_cast<std::size_t>(n_), 0.0) {}

  /// r = X_i - X_j; g = dk/dx(X_i, X_j). The ordered pair (j, i) is folded in
  /// using symmetry of k and trace and antisymmetry of g.
  void add_pair(Eigen::Index i, Eigen::Index j, const double* xi, const double* xj, double k, const double* g,
                double tr) {
    double* kxi = kx.row(i).data();
    double* kxj = kx.row(j).data();
    double* kdi = kdot.row(i).data();
    double* kdj = kdot.row(j).data();
    for (Eigen::Index b = 0; b < d; ++b) {
      kxi[b] += k * xj[b];
      kxj[b] += k * xi[b];
      kdj[b] += g[b];
      kdi[b] -= g[b];
    }
    ksum[static_cast<std::size_t>(i)] += k;
    ksum[static_cast<std::size_t>(j)] += k;
    trsum[static_cast<std::size_t>(i)] += tr;
    trsum[static_cast<std::size_t>(j)] += tr;
  }

  template <typename Rows>
  PairwiseStats reduce(const Rows& x) const {
    PairwiseStats s;
    s.n = n;
    CompensatedSum kbar, kdd;
    CompensatedMatrixSum m(d, d), g(d, d), kxs(d, 1), kds(d, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector xi = x.row(i).transpose();
      const Vector vi = kx.row(i).transpose();
      const Vector ci = kdot.row(i).transpose();
      kbar.add(ksum[static_cast<std::size_t>(i)]);
      kdd.add(trsum[static_cast<std::size_t>(i)]);
      m.add(xi * vi.transpose());
      g.add(xi * ci.transpose());
      kxs.add(vi);
      kds.add(ci);
    }
    s.k_bar = kbar.value();
    s.k_ddot = kdd.value();
    s.xt_k_x = symmetrize(m.value());
    s.xt_kdot = g.value();
    s.k_x = kxs.value();
    s.kdot_sum = kds.value();
    return s;
  }
};

}  // namespace detail

/// O(n^2 d) pass over unordered pairs. Each row's partial sums are plain
/// doubles filled in a fixed order; rows are combined with compensation.
inline PairwiseStats precompute_pairwise(const KernelSpec& spec, const Eigen::Ref<const Matrix>& data) {
  const Eigen::Index n = data.rows(), d = data.cols();
  require(n >= 2, ErrorKind::InsufficientData, "pairwise statistics need at least 2 rows, got " + std::to_string(n));
  require(d == spec.dim, ErrorKind::Input,
          "data has " + std::to_string(d) + " columns but kernel dimension is " + std::to_string(spec.dim));
  const RowMatrix x = data;
  detail::RowAccumulators acc(n, d);
  std::vector<double> r(static_cast<std::size_t>(d)), g(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* xi = x.row(i).data();
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double* xj = x.row(j).data();
      for (Eigen::Index b = 0; b < d; ++b) r[static_cast<std::size_t>(b)] = xi[b] - xj[b];
      double tr;
      const double k = detail::terms_from_diff(spec, r.data(), g.data(), &tr);
      acc.add_pair(i, j, xi, xj, k, g.data(), tr);
    }
  }
  return acc.reduce(x);
}

/// PairwiseStats for several coordinate subsets in one pair sweep, each with
/// the factored IMQ kernel of the subset's own dimension. Entry s is expressed
/// in the coordinates data(:, subsets[s]).
inline std::vector<PairwiseStats> precompute_pairwise_subsets(double beta, double c,
                                                              const Eigen::Ref<const Matrix>& data,
                                                              const std::vector<std::vector<int>>& subsets) {
  const Eigen::Index n = data.rows(), d = data.cols();
  require(n >= 2, ErrorKind::InsufficientData, "pairwise statistics need at least 2 rows, got " + std::to_string(n));
  KernelSpec::factored_imq(1, beta, c);
  for (const auto& s : subsets) {
    require(!s.empty(), ErrorKind::Input, "empty coordinate subset");
    for (int b : s) require(b >= 0 && b < d, ErrorKind::Input, "subset index out of range");
  }
  const RowMatrix x = data;
  std::vector<RowMatrix> xs;
  std::vector<detail::RowAccumulators> acc;
  xs.reserve(subsets.size());
  acc.reserve(subsets.size());
  for (const auto& s : subsets) {
    RowMatrix sub(n, static_cast<Eigen::Index>(s.size()));
    for (std::size_t b = 0; b < s.size(); ++b) sub.col(static_cast<Eigen::Index>(b)) = x.col(s[b]);
    xs.push_back(std::move(sub));
    acc.emplace_back(n, static_cast<Eigen::Index>(s.size()));
  }
  const double c2 = c * c;
  std::vector<double> r(static_cast<std::size_t>(d)), lq(static_cast<std::size_t>(d)), q(static_cast<std::size_t>(d)),
      g(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* xi = x.row(i).data();
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double* xj = x.row(j).data();
      for (Eigen::Index b = 0; b < d; ++b) {
        const auto ub = static_cast<std::size_t>(b);
        r[ub] = xi[b] - xj[b];
        q[ub] = c2 + r[ub] * r[ub];
        lq[ub] = std::log(q[ub]);
      }
      for (std::size_t s = 0; s < subsets.size(); ++s) {
        const auto& sub = subsets[s];
        const double e = beta / static_cast<double>(sub.size());
        double log_k = 0.0;
        for (int b : sub) log_k += lq[static_cast<std::size_t>(b)];
        const double k = std::exp(e * log_k);
        double tr = 0.0;
        for (std::size_t a = 0; a < sub.size(); ++a) {
          const auto b = static_cast<std::size_t>(sub[a]);
          g[a] = k * e * 2.0 * r[b] / q[b];
          tr += 2.0 * e / q[b] + (e * e - e) * 4.0 * r[b] * r[b] / (q[b] * q[b]);
        }
        acc[s].add_pair(i, j, xs[s].row(i).data(), xs[s].row(j).data(), k, g.data(), -k * tr);
      }
    }
  }
  std::vector<PairwiseStats> out;
  out.reserve(subsets.size());
  for (std::size_t s = 0; s < subsets.size(); ++s) out.push_back(acc[s].reduce(xs[s]));
  return out;
}

/// Rows restricted to the given columns, in the given order.
inline Matrix select_columns(const Eigen::Ref<const Matrix>& data, const std::vector<int>& cols) {
  Matrix out(data.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t b = 0; b < cols.size(); ++b) {
    require(cols[b] >= 0 && cols[b] < data.cols(), ErrorKind::Input, "column index out of range");
    out.col(static_cast<Eigen::Index>(b)) = data.col(cols[b]);
  }
  return out;
}

}  // namespace stein
