#pragma once

#include "stein_select/common.hpp"
#include "stein_select/data.hpp"
#include "stein_select/kernel.hpp"
#include "stein_select/nksd.hpp"
#include "stein_select/optimize.hpp"
#include "stein_select/score_models.hpp"
#include "stein_select/svc.hpp"

#include <algorithm>
#include <numeric>
#include <optional>

namespace stein {

/// Axis-aligned foreground: the included coordinates; r_b counts the rest.
struct ForegroundSpec {
  std::vector<int> included_dims;
  int r_b = 0;

  static ForegroundSpec make(int d, std::vector<int> dims) {
    require(!dims.empty(), ErrorKind::Input, "foreground must include at least one dimension");
    std::vector<int> sorted = dims;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorKind::Input,
            "foreground dimensions must be unique");
    require(sorted.front() >= 0 && sorted.back() < d, ErrorKind::Input, "foreground dimension out of range");
    return {std::move(dims), d - static_cast<int>(sorted.size())};
  }

  static ForegroundSpec full(int d) {
    std::vector<int> all(static_cast<std::size_t>(d));
    std::iota(all.begin(), all.end(), 0);
    return make(d, all);
  }

  /// All dimensions except j.
  static ForegroundSpec without(int d, int j) {
    std::vector<int> dims;
    for (int b = 0; b < d; ++b)
      if (b != j) dims.push_back(b);
    return make(d, dims);
  }

  /// 1-based labels joined by '+', e.g. "1+2+4".
  std::string label() const {
    std::string s;
    for (std::size_t i = 0; i < included_dims.size(); ++i) {
      if (i) s += '+';
      s += std::to_string(included_dims[i] + 1);
    }
    return s;
  }
};

enum class Decision { Include, Exclude };

inline const char* to_string(Decision d) { return d == Decision::Include ? "include" : "exclude"; }

/// (TN / negatives + TP / positives) / 2 with "include" as the positive class.
inline double balanced_accuracy(const std::vector<Decision>& decisions, const std::vector<Decision>& truth) {
  require(decisions.size() == truth.size(), ErrorKind::Input, "decision and truth lengths differ");
  double tp = 0, tn = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == Decision::Include) {
      ++pos;
      if (decisions[i] == Decision::Include) ++tp;
    } else {
      ++neg;
      if (decisions[i] == Decision::Exclude) ++tn;
    }
  }
  require(pos > 0 && neg > 0, ErrorKind::Input, "balanced accuracy is undefined when truth has a single class");
  return 0.5 * (tn / neg + tp / pos);
}

// ---------------------------------------------------------------------------
// pPCA leave-one-out

struct PpcaSelectionConfig {
  int latent_dim = 2;
  double beta = -0.5;
  double c = 1.0;
  BackgroundDimPolicy policy = policy::PitmanYor{0.5, 1.0, 0.2};
  double temp = 0.05;
  SvcMethod method = SvcMethod::Bic;
  bool fast = false;
  double alpha = 0.1;
  PpcaOptions optim;
};

struct ForegroundEntry {
  ForegroundSpec foreground;
  int m_f = 0;
  double m_b = 0.0;
  double objective = 0.0;  // nksd_hat at the (approximate) optimum
  SvcResult svc;
  double log_ratio = 0.0;  // log K - log K(reference)
  Decision decision = Decision::Include;
  bool converged = true;
  std::string error;  // non-empty when this foreground could not be scored
};

struct SelectionReport {
  ForegroundEntry reference;
  std::vector<ForegroundEntry> per_foreground;  // entry j excludes dimension j
  std::vector<std::pair<int, double>> criticism;
  std::optional<double> balanced_accuracy;

  std::vector<Decision> decisions() const {
    std::vector<Decision> d;
    for (const auto& e : per_foreground) d.push_back(e.decision);
    return d;
  }
};

namespace detail {

inline Objective ppca_chart_objective(const PairwiseStats& st, const PpcaChart& chart) {
  return [&st, &chart](const ParamVector& z) { return ppca_nksd(st, chart.at(z)); };
}

/// Objective of the model projected onto `dims`, as a function of the full chart.
inline Objective ppca_projected_objective(const PairwiseStats& st, const PpcaChart& chart, const std::vector<int>& dims) {
  return [&st, &chart, &dims](const ParamVector& z) { return ppca_nksd(st, chart.at(z).project(dims)); };
}

inline SvcResult ppca_score(const PairwiseStats& st, const PpcaParams& p, double objective, double n, double temp,
                            double m_b, SvcMethod method, double alpha) {
  if (method == SvcMethod::Bic) {
    const PpcaChart chart(p);
    return svc_bic(objective, chart.base_coords(), n, temp, m_b);
  }
  require(method == SvcMethod::Laplace, ErrorKind::Config, "pPCA selection supports the bic and laplace methods");
  const PpcaChart chart(p);
  const ParamVector z = chart.base_coords();
  const Matrix h = hessian_fd(ppca_chart_objective(st, chart), z);
  const PpcaPrior prior{alpha};
  return svc_laplace_from_values(objective, prior.log_density_chart(chart, p), h, z, n, temp, m_b);
}

}  // namespace detail

/// Compares the full space with each leave-one-dimension-out foreground.
/// Dimension j is kept ("include") iff log K_j - log K_0 <= 0.
inline SelectionReport leave_one_out_ppca(const Eigen::Ref<const Matrix>& data, const PpcaSelectionConfig& cfg,
                                          const std::vector<Decision>* truth = nullptr) {
  const int d = static_cast<int>(data.cols());
  const int k = cfg.latent_dim;
  const double n = static_cast<double>(data.rows());
  require(d >= 2, ErrorKind::Input, "leave-one-out selection needs at least 2 dimensions");
  require(k >= 1 && k < d - 1, ErrorKind::Domain, "latent dimension must be below d - 1 for leave-one-out");
  require(cfg.temp > 0.0, ErrorKind::Config, "temperature must be positive");
  validate_policy(cfg.policy);

  std::vector<std::vector<int>> subsets;
  subsets.push_back(ForegroundSpec::full(d).included_dims);
  for (int j = 0; j < d; ++j) subsets.push_back(ForegroundSpec::without(d, j).included_dims);
  const std::vector<PairwiseStats> stats = precompute_pairwise_subsets(cfg.beta, cfg.c, data, subsets);

  SelectionReport rep;
  const int m_f0 = ppca_foreground_dim(k, d).m_f;
  const PpcaFit fit0 = minimize_ppca(stats[0], data, k, cfg.optim);
  rep.reference.foreground = ForegroundSpec::full(d);
  rep.reference.m_f = m_f0;
  rep.reference.m_b = background_dim(cfg.policy, n, 0, 0.0);
  rep.reference.objective = fit0.result.objective;
  rep.reference.converged = fit0.result.converged;
  rep.reference.svc = detail::ppca_score(stats[0], fit0.params, fit0.result.objective, n, cfg.temp, rep.reference.m_b,
                                         cfg.method, cfg.alpha);

  const PpcaChart chart0(fit0.params);
  const ParamVector z0 = chart0.base_coords();
  std::optional<LinearResponseSolver> solver;
  std::string solver_error;
  if (cfg.fast) {
    try {
      solver.emplace(hessian_fd(detail::ppca_chart_objective(stats[0], chart0), z0), z0);
    } catch (const Error& e) {
      solver_error = e.what();
    }
  }

  for (int j = 0; j < d; ++j) {
    const auto& st = stats[static_cast<std::size_t>(j + 1)];
    const auto& dims = subsets[static_cast<std::size_t>(j + 1)];
    ForegroundEntry e;
    e.foreground = ForegroundSpec::without(d, j);
    e.m_f = ppca_foreground_dim(k, d - 1).m_f;
    e.m_b = background_dim(cfg.policy, n, 1, static_cast<double>(m_f0 - e.m_f));
    try {
      PpcaParams pj;
      if (cfg.fast) {
        if (!solver) fail(ErrorKind::Numeric, solver_error);
        const Vector g = gradient_fd(detail::ppca_projected_objective(st, chart0, dims), z0);
        pj = chart0.at(solver->apply(g)).project(dims);
        e.objective = ppca_nksd(st, pj);
      } else {
        PpcaOptions o = cfg.optim;
        o.seed = cfg.optim.seed + static_cast<std::uint64_t>(j + 1);
        const Matrix xj = select_columns(data, dims);
        const PpcaFit fj = minimize_ppca(st, xj, k, o, fit0.params.project(dims));
        pj = fj.params;
        e.objective = fj.result.objective;
        e.converged = fj.result.converged;
      }
      e.svc = detail::ppca_score(st, pj, e.objective, n, cfg.temp, e.m_b, cfg.method, cfg.alpha);
      e.log_ratio = e.svc.log_k - rep.reference.svc.log_k;
      e.decision = e.log_ratio <= 0.0 ? Decision::Include : Decision::Exclude;
    } catch (const Error& err) {
      e.error = err.what();
    }
    rep.per_foreground.push_back(std::move(e));
  }

  // log E_j - log E_0 = -(N/T) (l_j(theta_0) - l_0(theta_0))
  for (int j = 0; j < d; ++j) {
    const auto& st = stats[static_cast<std::size_t>(j + 1)];
    const double lj = ppca_nksd(st, fit0.params.project(subsets[static_cast<std::size_t>(j + 1)]));
    rep.criticism.emplace_back(j, -(n / cfg.temp) * (lj - fit0.result.objective));
  }
  if (truth) rep.balanced_accuracy = balanced_accuracy(rep.decisions(), *truth);
  return rep;
}

// ---------------------------------------------------------------------------
// Toy consistency

enum class ToyScore { Svc, KA, KB, KC, KD };

inline const char* to_string(ToyScore s) {
  switch (s) {
    case ToyScore::Svc: return "svc";
    case ToyScore::KA: return "k_a";
    case ToyScore::KB: return "k_b";
    case ToyScore::KC: return "k_c";
    case ToyScore::KD: return "k_d";
  }
  return "?";
}

inline ToyScore parse_toy_score(const std::string& s) {
  if (s == "svc") return ToyScore::Svc;
  if (s == "k_a") return ToyScore::KA;
  if (s == "k_b") return ToyScore::KB;
  if (s == "k_c") return ToyScore::KC;
  if (s == "k_d") return ToyScore::KD;
  fail(ErrorKind::Config, "unknown score '" + s + "' (expected svc, k_a, k_b, k_c or k_d)");
}

struct ToyConfig {
  ToyScenario scenario = ToyScenario::Ds;
  std::vector<ToyScore> scores = {ToyScore::Svc};
  std::vector<Eigen::Index> n_grid = {100, 1000, 10000};
  std::vector<std::uint64_t> seeds = {0};
  double temp = 5.0;
  BackgroundDimPolicy policy = policy::PerDim{5.0};
  double prior_var = 10.0;
  double bandwidth = 1.0;
};

struct ToyRow {
  ToyScenario scenario;
  ToyScore score;
  Eigen::Index n;
  std::uint64_t seed;
  double value;       // log(K_1 / K_2)
  double normalized;  // value times the scale of the matching limit
};

/// The two foregrounds / models each scenario compares, as (dims, Sigma, free mean).
struct ToyCandidate {
  std::vector<int> dims;
  double model_var = 1.0;
  bool free_mean = true;
};

inline std::pair<ToyCandidate, ToyCandidate> toy_candidates(ToyScenario s) {
  switch (s) {
    case ToyScenario::Ds: return {{{0}, 1.0, true}, {{1}, 1.0, true}};
    case ToyScenario::NestedDs: return {{{0, 1}, 1.0, true}, {{0}, 1.0, true}};
    case ToyScenario::Ms: return {{{0, 1}, 1.0, true}, {{0, 1}, 2.0, true}};
    case ToyScenario::NestedMs: return {{{0, 1}, 1.0, false}, {{0, 1}, 1.0, true}};
  }
  fail(ErrorKind::Config, "unknown toy scenario");
}

/// 1/N for ds and ms, 1/log N for the nested cases (1/(sqrt(N) log N) for
/// nested_ds under a sqrt(N) background policy).
inline double toy_normalization(ToyScenario s, double n, const BackgroundDimPolicy& p) {
  switch (s) {
    case ToyScenario::Ds:
    case ToyScenario::Ms: return 1.0 / n;
    case ToyScenario::NestedDs: return policy_is_sqrt_n(p) ? 1.0 / (std::sqrt(n) * std::log(n)) : 1.0 / std::log(n);
    case ToyScenario::NestedMs: return 1.0 / std::log(n);
  }
  return 1.0;
}

inline ToyInstance make_toy_instance(const Eigen::Ref<const Matrix>& data, const ToyCandidate& cand, const PairwiseStats& st,
                                     const Matrix& true_cov, const ToyConfig& cfg) {
  const int df = static_cast<int>(cand.dims.size());
  const Matrix sigma = cand.model_var * Matrix::Identity(df, df);
  ToyInstance t;
  t.data_f = select_columns(data, cand.dims);
  t.model = cand.free_mean
                ? GaussianLocationModel::make(sigma, Vector::Zero(df), cfg.prior_var * Matrix::Identity(df, df))
                : GaussianLocationModel::fixed(sigma, Vector::Zero(df));
  t.qf = gaussian_quadratic_coeffs(st, t.model);
  t.temp = cfg.temp;
  const int r_b = static_cast<int>(data.cols()) - df;
  t.m_b = background_dim(cfg.policy, static_cast<double>(data.rows()), r_b);
  Matrix cov_f(df, df);
  for (int a = 0; a < df; ++a)
    for (int b = 0; b < df; ++b) cov_f(a, b) = true_cov(cand.dims[a], cand.dims[b]);
  t.true_cov_f = cov_f;
  return t;
}

inline double toy_log_score(const ToyInstance& t, ToyScore s) {
  if (s == ToyScore::Svc)
    return svc_exact_expfam(t.qf, t.model.prior_mean, t.model.prior_cov, static_cast<double>(t.data_f.rows()), t.temp,
                            t.m_b)
        .log_k;
  const AltScores a = alt_scores(t, s == ToyScore::KC);
  switch (s) {
    case ToyScore::KA: return a.k_a;
    case ToyScore::KB: return a.k_b;
    case ToyScore::KC: return a.k_c;
    default: return a.k_d;
  }
}

/// log(K_1 / K_2) for every (n, seed, score), in that nesting order.
inline std::vector<ToyRow> consistency_curves(const ToyConfig& cfg) {
  require(cfg.temp > 0.0, ErrorKind::Config, "temperature must be positive");
  require(!cfg.scores.empty() && !cfg.n_grid.empty() && !cfg.seeds.empty(), ErrorKind::Config,
          "toy runs need at least one score, sample size and seed");
  validate_policy(cfg.policy);
  require(!std::holds_alternative<policy::MatchForeground>(cfg.policy), ErrorKind::Config,
          "match-foreground is only available for pPCA leave-one-out selection");
  for (auto n : cfg.n_grid) require(n >= 2, ErrorKind::Config, "toy sample sizes must be at least 2");
  const auto [c1, c2] = toy_candidates(cfg.scenario);
  const Matrix true_cov = toy_covariance(cfg.scenario);
  std::vector<ToyRow> rows;
  for (auto n : cfg.n_grid) {
    for (auto seed : cfg.seeds) {
      const DataMatrix dm = generate_toy(cfg.scenario, n, seed);
      const Matrix x1 = select_columns(dm.values, c1.dims);
      const PairwiseStats s1 = precompute_pairwise(KernelSpec::rbf(static_cast<int>(c1.dims.size()), cfg.bandwidth), x1);
      const PairwiseStats s2 =
          c2.dims == c1.dims
              ? s1
              : precompute_pairwise(KernelSpec::rbf(static_cast<int>(c2.dims.size()), cfg.bandwidth),
                                    select_columns(dm.values, c2.dims));
      const ToyInstance t1 = make_toy_instance(dm.values, c1, s1, true_cov, cfg);
      const ToyInstance t2 = make_toy_instance(dm.values, c2, s2, true_cov, cfg);
      for (auto sc : cfg.scores) {
        const double v = toy_log_score(t1, sc) - toy_log_score(t2, sc);
        rows.push_back({cfg.scenario, sc, n, seed, v, v * toy_normalization(cfg.scenario, static_cast<double>(n), cfg.policy)});
      }
    }
  }
  return rows;
}

}  // namespace stein
