#pragma once

#include "stein_select/common.hpp"
#include "stein_select/nksd.hpp"
#include "stein_select/score_models.hpp"

#include <optional>
#include <sstream>
#include <variant>

namespace stein {

// ---------------------------------------------------------------------------
// Background dimension

namespace policy {
struct Constant {
  double m_b = 0.0;
};
struct PerDim {
  double c_b = 5.0;
};
/// m_B = c_B r_B sqrt(n).
struct PerDimSqrtN {
  double c_b = 1.0;
};
/// m_B = r_B D Gamma(theta + 1) / (alpha Gamma(theta + alpha)) n^alpha.
struct PitmanYor {
  double alpha = 0.5;
  double theta = 1.0;
  double d = 0.2;
};
/// m_B chosen so that m_B + m_F equals the reference foreground's m_F.
struct MatchForeground {};
}  // namespace policy

using BackgroundDimPolicy =
    std::variant<policy::Constant, policy::PerDim, policy::PerDimSqrtN, policy::PitmanYor, policy::MatchForeground>;

inline void validate_policy(const BackgroundDimPolicy& p) {
  std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, policy::Constant>) {
          require(v.m_b >= 0.0 && std::isfinite(v.m_b), ErrorKind::Config, "constant background dimension must be >= 0");
        } else if constexpr (std::is_same_v<T, policy::PerDim> || std::is_same_v<T, policy::PerDimSqrtN>) {
          require(v.c_b >= 0.0 && std::isfinite(v.c_b), ErrorKind::Config, "background scale c_B must be >= 0");
        } else if constexpr (std::is_same_v<T, policy::PitmanYor>) {
          require(v.alpha > 0.0 && v.alpha < 1.0, ErrorKind::Config, "Pitman-Yor alpha must lie in (0, 1)");
          require(v.theta > -v.alpha, ErrorKind::Config, "Pitman-Yor theta must exceed -alpha");
          require(v.d > 0.0, ErrorKind::Config, "Pitman-Yor D must be positive");
        }
      },
      p);
}

/// True when the policy grows like sqrt(n) (changes the nested-selection scale).
inline bool policy_is_sqrt_n(const BackgroundDimPolicy& p) { return std::holds_alternative<policy::PerDimSqrtN>(p); }

/// Effective background dimension for n samples and r_b background coordinates.
/// MatchForeground needs the model dimensions and is resolved by the caller;
/// `matched` supplies that value.
inline double background_dim(const BackgroundDimPolicy& p, double n, int r_b, double matched = 0.0) {
  validate_policy(p);
  require(n >= 1.0, ErrorKind::Input, "background dimension needs n >= 1");
  require(r_b >= 0, ErrorKind::Input, "background size must be nonnegative");
  return std::visit(
      [&](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, policy::Constant>) {
          return v.m_b;
        } else if constexpr (std::is_same_v<T, policy::PerDim>) {
          return v.c_b * r_b;
        } else if constexpr (std::is_same_v<T, policy::PerDimSqrtN>) {
          return v.c_b * r_b * std::sqrt(n);
        } else if constexpr (std::is_same_v<T, policy::PitmanYor>) {
          const double lead = std::exp(std::lgamma(v.theta + 1.0) - std::lgamma(v.theta + v.alpha)) / v.alpha;
          return r_b * v.d * lead * std::pow(n, v.alpha);
        } else {
          return matched;
        }
      },
      p);
}

/// Parses "constant:M", "perdim:C", "perdim-sqrtn:C", "pitman-yor:A,THETA,D"
/// and "match-foreground".
inline BackgroundDimPolicy parse_policy(const std::string& text) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  std::vector<double> args;
  if (colon != std::string::npos) {
    std::stringstream ss(text.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        args.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        fail(ErrorKind::Config, "policy argument '" + item + "' is not a number");
      }
    }
  }
  auto want = [&](std::size_t k) {
    require(args.size() == k, ErrorKind::Config,
            "policy '" + name + "' takes " + std::to_string(k) + " argument(s), got " + std::to_string(args.size()));
  };
  BackgroundDimPolicy p;
  if (name == "constant") {
    want(1);
    p = policy::Constant{args[0]};
  } else if (name == "perdim") {
    want(1);
    p = policy::PerDim{args[0]};
  } else if (name == "perdim-sqrtn") {
    want(1);
    p = policy::PerDimSqrtN{args[0]};
  } else if (name == "pitman-yor") {
    want(3);
    p = policy::PitmanYor{args[0], args[1], args[2]};
  } else if (name == "match-foreground") {
    want(0);
    p = policy::MatchForeground{};
  } else {
    fail(ErrorKind::Config, "unknown background policy '" + name + "'");
  }
  validate_policy(p);
  return p;
}

// ---------------------------------------------------------------------------
// SVC

enum class SvcMethod { Exact, Laplace, Bic };

inline const char* to_string(SvcMethod m) {
  switch (m) {
    case SvcMethod::Exact: return "exact";
    case SvcMethod::Laplace: return "laplace";
    case SvcMethod::Bic: return "bic";
  }
  return "?";
}

enum class SvcStatus { Ok, NonSpdHessian, NotStationary };

inline const char* to_string(SvcStatus s) {
  switch (s) {
    case SvcStatus::Ok: return "ok";
    case SvcStatus::NonSpdHessian: return "non-spd-hessian";
    case SvcStatus::NotStationary: return "not-stationary";
  }
  return "?";
}

/// log K = fit_term + foreground_volume + background_volume.
struct SvcResult {
  double log_k = 0.0;
  double fit_term = 0.0;           // -(N/T) nksd_hat(theta_N)
  double foreground_volume = 0.0;  // prior, curvature and (m_F/2) log(2 pi / N)
  double background_volume = 0.0;  // (m_B/2) log(2 pi / N)
  ParamVector theta_opt;
  Matrix hessian;  // raw nksd_hat Hessian (Laplace only)
  SvcMethod method = SvcMethod::Bic;
  SvcStatus status = SvcStatus::Ok;

  bool ok() const { return status == SvcStatus::Ok; }
};

inline double volume(double dim, double n) { return 0.5 * dim * std::log(kTwoPi / n); }

/// Closed form of log int exp(-(N/T) (t^T A t + B^T t + C)) N(t | mu, S0) dt + (m_B/2) log(2 pi / N).
/// With P = (2N/T) A + S0^{-1} and b = -(N/T) B + S0^{-1} mu:
///   -(N/T) C - 1/2 log|S0| - 1/2 log|P| + 1/2 b^T P^{-1} b - 1/2 mu^T S0^{-1} mu.
inline SvcResult svc_exact_expfam(const QuadraticForm& qf, const Eigen::Ref<const Vector>& prior_mean,
                                  const Eigen::Ref<const Matrix>& prior_cov, double n, double temp, double m_b) {
  require(temp > 0.0, ErrorKind::Config, "temperature must be positive");
  require(n >= 1.0, ErrorKind::Input, "sample count must be positive");
  SvcResult r;
  r.method = SvcMethod::Exact;
  r.background_volume = volume(m_b, n);
  const double s = n / temp;
  const Eigen::Index m = qf.size();
  if (m == 0) {
    r.theta_opt = ParamVector(0);
    r.fit_term = -s * qf.c_scalar;
    r.log_k = r.fit_term + r.background_volume;
    return r;
  }
  require(prior_mean.size() == m && prior_cov.rows() == m && prior_cov.cols() == m, ErrorKind::Input,
          "prior dimensions do not match the quadratic form");
  const Matrix a = symmetrize(qf.a);
  const auto prior_llt = cholesky_or_throw(prior_cov, "prior covariance");
  const Matrix prior_prec = prior_llt.solve(Matrix::Identity(m, m));
  const Matrix p = symmetrize(2.0 * s * a + prior_prec);
  const auto p_llt = cholesky_or_throw(p, "combined precision (2N/T) A + prior^{-1}");
  const Vector b = -s * qf.b + prior_prec * prior_mean;
  const double log_int = -s * qf.c_scalar - 0.5 * log_det_spd(prior_llt) - 0.5 * log_det_spd(p_llt) +
                         0.5 * b.dot(p_llt.solve(b)) - 0.5 * prior_mean.dot(prior_prec * prior_mean);
  // Decompose around the minimum-NKSD point when A is invertible.
  Eigen::LLT<Matrix> a_llt(a);
  if (a_llt.info() == Eigen::Success) {
    r.theta_opt = -0.5 * a_llt.solve(qf.b);
    r.fit_term = -s * qf.value(r.theta_opt);
  } else {
    r.theta_opt = p_llt.solve(b);
    r.fit_term = -s * qf.value(r.theta_opt);
  }
  r.log_k = log_int + r.background_volume;
  r.foreground_volume = log_int - r.fit_term;
  return r;
}

/// Laplace approximation
///   log K = -(N/T) f(theta) + log pi(theta) - 1/2 log|det(H / T)| + ((m_F + m_B)/2) log(2 pi / N)
/// with f the NKSD estimate at theta and H its raw Hessian. A Hessian that is
/// not SPD marks the result; the |det| value is still reported.
inline SvcResult svc_laplace_from_values(double objective, double log_prior, const Eigen::Ref<const Matrix>& hessian,
                                         const Eigen::Ref<const ParamVector>& theta, double n, double temp, double m_b) {
  require(temp > 0.0, ErrorKind::Config, "temperature must be positive");
  require(hessian.rows() == theta.size() && hessian.cols() == theta.size(), ErrorKind::Input,
          "Hessian shape does not match the parameter");
  SvcResult r;
  r.method = SvcMethod::Laplace;
  r.theta_opt = theta;
  r.hessian = symmetrize(hessian);
  const double m_f = static_cast<double>(theta.size());
  r.fit_term = -(n / temp) * objective;
  r.background_volume = volume(m_b, n);
  double log_det = 0.0;
  if (theta.size() > 0) {
    const Matrix ht = r.hessian / temp;
    Eigen::LLT<Matrix> llt(ht);
    if (llt.info() == Eigen::Success) {
      log_det = log_det_spd(llt);
    } else {
      r.status = SvcStatus::NonSpdHessian;
      log_det = log_abs_det(ht).log_abs;
    }
  }
  r.foreground_volume = log_prior - 0.5 * log_det + volume(m_f, n);
  r.log_k = r.fit_term + r.foreground_volume + r.background_volume;
  return r;
}

/// Laplace approximation with an objective callable; flags theta whose
/// central-difference gradient norm exceeds stationarity_tol.
template <typename Objective>
SvcResult svc_laplace(Objective&& objective, const Eigen::Ref<const ParamVector>& theta, double log_prior,
                      const Eigen::Ref<const Matrix>& hessian, double n, double temp, double m_b,
                      double stationarity_tol = 1e-4) {
  SvcResult r = svc_laplace_from_values(objective(ParamVector(theta)), log_prior, hessian, theta, n, temp, m_b);
  ParamVector t = theta;
  double g2 = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double h = 1e-6 * (1.0 + std::abs(theta(i)));
    t(i) = theta(i) + h;
    const double fp = objective(t);
    t(i) = theta(i) - h;
    const double fm = objective(t);
    t(i) = theta(i);
    const double g = (fp - fm) / (2.0 * h);
    g2 += g * g;
  }
  if (r.ok() && std::sqrt(g2) > stationarity_tol) r.status = SvcStatus::NotStationary;
  return r;
}

/// log K = -(N/T) f(theta_N) + ((m_F + m_B)/2) log(2 pi / N).
inline SvcResult svc_bic(double objective, const Eigen::Ref<const ParamVector>& theta, double n, double temp, double m_b) {
  require(temp > 0.0, ErrorKind::Config, "temperature must be positive");
  SvcResult r;
  r.method = SvcMethod::Bic;
  r.theta_opt = theta;
  r.fit_term = -(n / temp) * objective;
  r.foreground_volume = volume(static_cast<double>(theta.size()), n);
  r.background_volume = volume(m_b, n);
  r.log_k = r.fit_term + r.foreground_volume + r.background_volume;
  return r;
}

// ---------------------------------------------------------------------------
// Alternative scores on the Gaussian toy

/// Everything the alternative criteria need for one foreground.
struct ToyInstance {
  Matrix data_f;  // N x |F|, foreground coordinates only
  GaussianLocationModel model;
  QuadraticForm qf;
  double temp = 5.0;
  double m_b = 0.0;
  /// Covariance of the generator on the foreground (known only for synthetic data).
  std::optional<Matrix> true_cov_f;
};

/// log int prod_i N(x_i | theta, S) N(theta | mu0, S0) dtheta, or
/// sum_i log N(x_i | mu, S) for a fixed-mean model.
inline double gaussian_log_marginal_likelihood(const Eigen::Ref<const Matrix>& x, const GaussianLocationModel& model) {
  const Eigen::Index n = x.rows(), d = x.cols();
  require(d == model.dim(), ErrorKind::Input, "data and model dimensions disagree");
  const auto llt = cholesky_or_throw(model.sigma, "model covariance");
  const double log_det = log_det_spd(llt);
  const Vector center = model.free_mean ? Vector(x.colwise().mean().transpose()) : model.fixed_mean;
  CompensatedSum quad;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector z = llt.matrixL().solve(x.row(i).transpose() - center);
    quad.add(z.squaredNorm());
  }
  double out = -0.5 * static_cast<double>(n * d) * std::log(kTwoPi) - 0.5 * static_cast<double>(n) * log_det -
               0.5 * quad.value();
  if (!model.free_mean) return out;
  // prod N(x_i | theta, S) = prod N(x_i | xbar, S) N(xbar | theta, S/N) (2 pi)^{d/2} |S/N|^{1/2}
  const Matrix s_n = model.sigma / static_cast<double>(n);
  out += 0.5 * static_cast<double>(d) * std::log(kTwoPi) + 0.5 * log_abs_det(s_n).log_abs;
  out += log_normal_density(center, model.prior_mean, model.prior_cov + s_n);
  return out;
}

struct AltScores {
  double k_a = 0.0;  // foreground marginal likelihood + background volume
  double k_b = 0.0;  // SVC without the background volume
  double k_c = 0.0;  // k_a with the entropy offset N H_F
  double k_d = 0.0;  // background volume and minimum NKSD fit only
};

inline AltScores alt_scores(const ToyInstance& t, bool need_k_c = true) {
  const double n = static_cast<double>(t.data_f.rows());
  AltScores s;
  const double bg = volume(t.m_b, n);
  const double log_ml = gaussian_log_marginal_likelihood(t.data_f, t.model);
  s.k_a = bg + log_ml;
  const SvcResult exact = svc_exact_expfam(t.qf, t.model.prior_mean, t.model.prior_cov, n, t.temp, t.m_b);
  s.k_b = exact.log_k - bg;
  const double min_nksd = t.qf.size() == 0 ? t.qf.c_scalar : t.qf.value(-0.5 * symmetrize(t.qf.a).llt().solve(t.qf.b));
  s.k_d = bg - (n / t.temp) * min_nksd;
  if (need_k_c) {
    if (!t.true_cov_f)
      fail(ErrorKind::Unsupported, "K^(c) needs the generator entropy, which is only known for synthetic data");
    const Matrix& cov = *t.true_cov_f;
    const double h_f = 0.5 * (static_cast<double>(cov.rows()) * std::log(kTwoPi * std::exp(1.0)) +
                              log_det_spd(cholesky_or_throw(cov, "generator covariance")));
    s.k_c = s.k_a + n * h_f;
  }
  return s;
}

}  // namespace stein
