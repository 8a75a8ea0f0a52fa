// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "stein_select/stein_select.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

namespace {

using namespace stein;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [FAILED]");
  }
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / x.size(), my += y[i] / y.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx) * (y[i] - my), sxx += (x[i] - mx) * (x[i] - mx);
  return sxy / sxx;
}

Matrix gaussian_data(Rng& rng, Eigen::Index n, const Matrix& cov, const Vector& mean) {
  const Eigen::LLT<Matrix> llt(cov);
  Matrix x(n, cov.rows());
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = (mean + llt.matrixL() * rng.normal_vector(cov.rows())).transpose();
  return x;
}

Matrix random_spd(Rng& rng, int d) {
  Matrix a(d, d);
  for (int i = 0; i < d; ++i) a.col(i) = rng.normal_vector(d);
  return a * a.transpose() / d + 0.5 * Matrix::Identity(d, d);
}

PpcaParams random_ppca(Rng& rng, int d, int k) {
  PpcaParams p;
  p.u = rng.stiefel(d, k);
  p.v = 0.3 + rng.uniform();
  p.l.resize(k);
  for (int a = 0; a < k; ++a) p.l(a) = p.v + 0.5 + 3.0 * rng.uniform();
  return p;
}

// ---------------------------------------------------------------------------

Outcome estimator_identities() {
  Outcome o;
  Rng rng(101);
  double qf_err = 0;
  for (int d : {1, 2, 3}) {
    const auto m = GaussianLocationModel::make(random_spd(rng, d), Vector::Zero(d), Matrix::Identity(d, d));
    const Matrix x = gaussian_data(rng, 60, random_spd(rng, d), Vector::Zero(d));
    for (const auto& spec : {KernelSpec::factored_imq(d), KernelSpec::rbf(d, 1.3)}) {
      const QuadraticForm q_exp = quadratic_coeffs(m.as_expfam(), x, spec);
      const QuadraticForm q_stats = gaussian_quadratic_coeffs(precompute_pairwise(spec, x), m);
      for (int rep = 0; rep < 20; ++rep) {
        const Vector th = 2.0 * rng.normal_vector(d);
        const double ref = nksd_hat(m, th, x, spec).value;
        qf_err = std::max({qf_err, std::abs(q_exp.value(th) - ref), std::abs(q_stats.value(th) - ref)});
      }
    }
  }
  o.check(qf_err <= 1e-10, "quadratic form vs generic max abs " + fmt(qf_err, 3));

  double split_err = 0;
  for (int rep = 0; rep < 10; ++rep) {
    const int d = 5;
    const double beta = -0.5, c = 1.0;
    const Split split = make_split(d, {0, 2, 3});
    const Matrix sf = random_spd(rng, 3), sb = random_spd(rng, 2);
    Matrix sigma = Matrix::Zero(d, d);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) sigma(split.f_dims[a], split.f_dims[b]) = sf(a, b);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) sigma(split.b_dims[a], split.b_dims[b]) = sb(a, b);
    const auto full = GaussianLocationModel::make(sigma, Vector::Zero(d), Matrix::Identity(d, d));
    const auto mf = GaussianLocationModel::make(sf, Vector::Zero(3), Matrix::Identity(3, 3));
    const auto mb = GaussianLocationModel::make(sb, Vector::Zero(2), Matrix::Identity(2, 2));
    const Matrix x = gaussian_data(rng, 80, random_spd(rng, d), Vector::Zero(d));
    const Vector th = rng.normal_vector(d);
    Vector tf(3), tb(2);
    for (int a = 0; a < 3; ++a) tf(a) = th(split.f_dims[a]);
    for (int a = 0; a < 2; ++a) tb(a) = th(split.b_dims[a]);
    const Matrix xf = select_columns(x, split.f_dims), xb = select_columns(x, split.b_dims);
    const SplitEstimate parts = nksd_subsystem_split(x, split, score_matrix(mf, tf, xf), score_matrix(mb, tb, xb),
                                                     KernelSpec::factored_imq(3, beta * 3 / d, c),
                                                     KernelSpec::factored_imq(2, beta * 2 / d, c));
    const double whole = nksd_hat(full, th, x, KernelSpec::factored_imq(d, beta, c)).value;
    split_err = std::max(split_err, std::abs(parts.foreground + parts.background - whole));
  }
  o.check(split_err <= 1e-12, "subsystem split max abs " + fmt(split_err, 3));

  const double h = 1e-5;
  double deriv_err = 0;
  for (int d : {1, 2, 4}) {
    for (const auto& spec : {KernelSpec::factored_imq(d), KernelSpec::factored_imq(d, -0.2, 0.7), KernelSpec::rbf(d),
                             KernelSpec::rbf(d, 2.5)}) {
      for (int rep = 0; rep < 25; ++rep) {
        const Vector x = rng.normal_vector(d), y = rng.normal_vector(d);
        const Vector gx = eval_grad_x(spec, x, y), gy = eval_grad_y(spec, x, y);
        double trace_fd = 0;
        for (int b = 0; b < d; ++b) {
          Vector xp = x, xm = x, yp = y, ym = y;
          xp(b) += h, xm(b) -= h, yp(b) += h, ym(b) -= h;
          deriv_err = std::max(deriv_err, rel_err(gx(b), (eval(spec, xp, y) - eval(spec, xm, y)) / (2 * h)));
          deriv_err = std::max(deriv_err, rel_err(gy(b), (eval(spec, x, yp) - eval(spec, x, ym)) / (2 * h)));
          trace_fd += (eval_grad_x(spec, x, yp)(b) - eval_grad_x(spec, x, ym)(b)) / (2 * h);
        }
        deriv_err = std::max(deriv_err, rel_err(eval_trace_cross(spec, x, y), trace_fd));
      }
    }
  }
  for (int rep = 0; rep < 20; ++rep) {
    const auto m = GaussianLocationModel::make(random_spd(rng, 3), Vector::Zero(3), Matrix::Identity(3, 3));
    const Vector th = rng.normal_vector(3), x = rng.normal_vector(3);
    const Vector s = m.score(th, x);
    const PpcaParams p = random_ppca(rng, 5, 2);
    const Matrix prec = p.covariance().inverse();
    const Vector xp5 = rng.normal_vector(5);
    const Vector sp = p.score(xp5);
    for (int b = 0; b < 3; ++b) {
      Vector a = x, z = x;
      a(b) += h, z(b) -= h;
      deriv_err = std::max(deriv_err, rel_err(s(b), (m.log_density(th, a) - m.log_density(th, z)) / (2 * h)));
    }
    for (int b = 0; b < 5; ++b) {
      Vector a = xp5, z = xp5;
      a(b) += h, z(b) -= h;
      const double fd = (-0.5 * a.dot(prec * a) + 0.5 * z.dot(prec * z)) / (2 * h);
      deriv_err = std::max(deriv_err, rel_err(sp(b), fd));
    }
  }
  for (int rep = 0; rep < 3; ++rep) {
    const PpcaParams p = random_ppca(rng, 6, 2);
    const Matrix x = gaussian_data(rng, 100, random_ppca(rng, 6, 2).covariance(), Vector::Zero(6));
    const PairwiseStats st = precompute_pairwise(KernelSpec::factored_imq(6), x);
    const PpcaGradient g = ppca_nksd_gradient(st, p);
    const PpcaChart chart(p);
    const Vector analytic = chart.gradient(g.g_u, g.g_eta, g.g_zeta);
    const Vector fd = gradient_fd([&](const ParamVector& z) { return ppca_nksd(st, chart.at(z)); }, chart.base_coords());
    deriv_err = std::max(deriv_err, (analytic - fd).norm() / std::max(1.0, fd.norm()));
  }
  o.check(deriv_err <= 1e-6, "derivatives vs finite differences max rel " + fmt(deriv_err, 3));
  return o;
}

Outcome rate_dichotomy() {
  Outcome o;
  const std::vector<Eigen::Index> ns = {100, 200, 400, 800, 1600};
  const int seeds = 50;
  const KernelSpec spec = KernelSpec::rbf(1);
  const auto model = GaussianLocationModel::make(Matrix::Identity(1, 1), Vector::Zero(1), 10.0 * Matrix::Identity(1, 1));
  const double sd_mis = std::sqrt(0.5);
  // Misspecified N(0, 1/2) data: theta* = 0 by symmetry.
  const double pop = population_nksd([&](Rng& r) { return Vector::Constant(1, sd_mis * r.normal()); },
                                     [](const Vector& x) -> Vector { return -x; }, spec, 4000000, 7);
  std::vector<double> lx, ly_well, ly_mis;
  for (auto n : ns) {
    double well = 0, mis = 0;
    for (int s = 0; s < seeds; ++s) {
      Rng rng(20000 + static_cast<std::uint64_t>(s) * 7919 + static_cast<std::uint64_t>(n));
      Matrix x(n, 1), y(n, 1);
      for (Eigen::Index i = 0; i < n; ++i) x(i, 0) = 0.7 + rng.normal();
      for (Eigen::Index i = 0; i < n; ++i) y(i, 0) = sd_mis * rng.normal();
      const ParamVector star_well = ParamVector::Constant(1, 0.7), star_mis = ParamVector::Zero(1);
      well += std::abs(gaussian_quadratic_coeffs(precompute_pairwise(spec, x), model).value(star_well)) / seeds;
      mis += std::abs(gaussian_quadratic_coeffs(precompute_pairwise(spec, y), model).value(star_mis) - pop) / seeds;
    }
    lx.push_back(std::log(static_cast<double>(n)));
    ly_well.push_back(std::log(well));
    ly_mis.push_back(std::log(mis));
  }
  const double sw = slope(lx, ly_well), sm = slope(lx, ly_mis);
  o.check(std::abs(sw + 1.0) <= 0.3, "well-specified slope " + fmt(sw) + " (target -1.0 +- 0.3)");
  o.check(std::abs(sm + 0.5) <= 0.3, "misspecified fluctuation slope " + fmt(sm) + " (target -0.5 +- 0.3)");
  o.detail += "; population NKSD " + fmt(pop, 5);
  return o;
}

Outcome laplace_accuracy() {
  Outcome o;
  const int seeds = 10;
  const double temp = 5.0;
  const auto model = GaussianLocationModel::make(Matrix::Identity(2, 2), Vector::Zero(2), 10.0 * Matrix::Identity(2, 2));
  std::vector<double> errs;
  for (Eigen::Index n : {100, 1000, 10000}) {
    double e = 0;
    for (int s = 0; s < seeds; ++s) {
      const DataMatrix dm = generate_toy(ToyScenario::NestedDs, n, 300 + static_cast<std::uint64_t>(s));
      const QuadraticForm q = gaussian_quadratic_coeffs(precompute_pairwise(KernelSpec::rbf(2), dm.values), model);
      const OptimResult opt = minimize_quadratic(q);
      const double nn = static_cast<double>(n);
      const SvcResult exact = svc_exact_expfam(q, model.prior_mean, model.prior_cov, nn, temp, 0.0);
      const SvcResult lap = svc_laplace_from_values(opt.objective, model.log_prior(opt.theta_opt), 2.0 * symmetrize(q.a),
                                                    opt.theta_opt, nn, temp, 0.0);
      e += std::abs(lap.log_k - exact.log_k) / std::abs(exact.log_k) / seeds;
    }
    errs.push_back(e);
  }
  o.check(errs[1] <= 0.02, "relative error at n=1000 " + fmt(errs[1], 3) + " (<= 0.02)");
  o.check(errs[0] > errs[1] && errs[1] > errs[2],
          "monotone over n=100,1000,10000: " + fmt(errs[0], 3) + ", " + fmt(errs[1], 3) + ", " + fmt(errs[2], 3));
  return o;
}

double mean_normalized(const std::vector<ToyRow>& rows, ToyScore s, Eigen::Index n) {
  double sum = 0;
  int cnt = 0;
  for (const auto& r : rows)
    if (r.score == s && r.n == n) sum += r.normalized, ++cnt;
  return sum / cnt;
}

Outcome toy_consistency() {
  Outcome o;
  const Eigen::Index n = 10000;
  ToyConfig base;
  for (std::uint64_t s = 0; s < 20; ++s) base.seeds.push_back(s);
  base.n_grid = {n};

  ToyConfig ds = base;
  ds.scenario = ToyScenario::Ds;
  ds.scores = {ToyScore::Svc, ToyScore::KA};
  const auto ds_rows = consistency_curves(ds);
  // Monte Carlo limit (NKSD_2 - NKSD_1) / T at theta* = 0 for both coordinates.
  const KernelSpec spec = KernelSpec::rbf(1, base.bandwidth);
  const auto score = [](const Vector& x) -> Vector { return -x; };
  const double half = std::sqrt(0.5);
  const double p1 = population_nksd([](Rng& r) { return Vector::Constant(1, r.normal()); }, score, spec, 4000000, 11);
  const double p2 = population_nksd([&](Rng& r) { return Vector::Constant(1, half * r.normal()); }, score, spec, 4000000, 12);
  const double ds_limit = (p2 - p1) / base.temp;
  const double ds_svc = mean_normalized(ds_rows, ToyScore::Svc, n);
  o.check(ds_svc > 0 && std::abs(ds_svc - ds_limit) <= 0.25 * ds_limit,
          "ds svc " + fmt(ds_svc) + " vs Monte Carlo limit " + fmt(ds_limit) + " (within 25%)");
  // Foreground likelihood limit: E log q_1 - E log q_2 = -1/2 + 1/4.
  const double ds_ka = mean_normalized(ds_rows, ToyScore::KA, n);
  o.check(ds_ka < 0, "K^(a) fails ds: " + fmt(ds_ka) + " (wrong sign, derived limit -0.25)");

  ToyConfig nds = base;
  nds.scenario = ToyScenario::NestedDs;
  nds.scores = {ToyScore::Svc, ToyScore::KB};
  nds.n_grid = {1000, 3162, n};
  const auto nds_rows = consistency_curves(nds);
  const double nds_svc = mean_normalized(nds_rows, ToyScore::Svc, n);
  const double nds_kb = mean_normalized(nds_rows, ToyScore::KB, n);
  o.check(std::abs(nds_svc - 2.0) <= 0.5, "nested_ds svc " + fmt(nds_svc) + " (target 2 +- 0.5)");
  o.check(std::abs(nds_kb + 0.5) <= 0.4, "K^(b) fails nested_ds: " + fmt(nds_kb) + " (target -0.5 +- 0.4)");
  // Growth rate of the raw log ratio, which approaches the asymptotic 2 from below.
  std::vector<double> lx, ly;
  for (Eigen::Index m : nds.n_grid) {
    double v = 0;
    int c = 0;
    for (const auto& r : nds_rows)
      if (r.score == ToyScore::Svc && r.n == m) v += r.value, ++c;
    lx.push_back(std::log(static_cast<double>(m)));
    ly.push_back(v / c);
  }
  o.detail += "; nested_ds d log(K1/K2) / d log N = " + fmt(slope(lx, ly));

  ToyConfig ms = base;
  ms.scenario = ToyScenario::Ms;
  const double ms_svc = mean_normalized(consistency_curves(ms), ToyScore::Svc, n);
  o.check(ms_svc > 0, "ms svc " + fmt(ms_svc) + " (> 0)");

  ToyConfig nms = base;
  nms.scenario = ToyScenario::NestedMs;
  const double nms_svc = mean_normalized(consistency_curves(nms), ToyScore::Svc, n);
  o.check(std::abs(nms_svc - 1.0) <= 0.4, "nested_ms svc " + fmt(nms_svc) + " (target 1 +- 0.4)");
  return o;
}

struct PpcaSuite {
  Outcome accuracy;
  Outcome fidelity;
};

PpcaSuite ppca_simulation() {
  PpcaSuite out;
  int agree = 0, total = 0;
  for (const auto& [scen, n, target] : {std::tuple{PpcaScenario::A, 2000, 0.9}, std::tuple{PpcaScenario::B, 8000, 0.8}}) {
    double ba_full = 0, ba_fast = 0;
    const int seeds = 5;
    for (int s = 0; s < seeds; ++s) {
      const auto sim = generate_ppca_sim(scen, n, static_cast<std::uint64_t>(s));
      std::vector<Decision> truth;
      for (bool b : sim.include) truth.push_back(b ? Decision::Include : Decision::Exclude);
      PpcaSelectionConfig cfg;  // T = 0.05, Pitman-Yor(0.5, 1, 0.2), BIC
      cfg.fast = false;
      const SelectionReport full = leave_one_out_ppca(sim.data.values, cfg, &truth);
      cfg.fast = true;
      const SelectionReport fast = leave_one_out_ppca(sim.data.values, cfg, &truth);
      ba_full += *full.balanced_accuracy / seeds;
      ba_fast += *fast.balanced_accuracy / seeds;
      for (std::size_t j = 0; j < truth.size(); ++j) {
        agree += full.per_foreground[j].decision == fast.per_foreground[j].decision ? 1 : 0;
        ++total;
      }
    }
    out.accuracy.check(ba_full >= target, std::string("scenario ") + to_string(scen) + " n=" + std::to_string(n) +
                                              " balanced accuracy " + fmt(ba_full) + " (>= " + fmt(target) +
                                              "; fast path " + fmt(ba_fast) + ")");
  }
  const double frac = static_cast<double>(agree) / total;
  out.fidelity.check(frac >= 0.95, "fast vs full agreement " + std::to_string(agree) + "/" + std::to_string(total) + " = " +
                                       fmt(frac) + " (>= 0.95)");
  return out;
}

Outcome calibration() {
  Outcome o;
  const CalibrationResult r = calibrate_ppca(6, 2, PpcaPrior{1.0}, -0.5, 1.0, 2000, 10, 0);
  o.check(r.t_median >= 0.01 && r.t_median <= 0.25,
          "pPCA median T_hat " + fmt(r.t_median) + " in [0.01, 0.25] over " + std::to_string(r.n_used) + " draws (" +
              std::to_string(r.n_flagged) + " flagged, log10 spread " + fmt(r.spread_log10, 3) + ")");
  return o;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(STEIN_SELECT_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "stein_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const auto sim = generate_ppca_sim(PpcaScenario::B, 400, 3);
  std::string csv = "x1,x2,x3,x4,x5,x6\n";
  for (Eigen::Index i = 0; i < sim.data.rows(); ++i)
    for (Eigen::Index c = 0; c < sim.data.cols(); ++c)
      csv += format_double(sim.data.values(i, c)) + (c + 1 < sim.data.cols() ? "," : "\n");
  write_text_file(root / "input.csv", csv);
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"toy", "toy --scenario ds,nested_ds,ms,nested_ms --n-grid 100,300 --seeds 0..2"},
      {"ppca-sim", "ppca-sim --scenario A --n 400 --seeds 0..1 --fast"},
      {"select", "select --input " + (root / "input.csv").string() + " --latent-dim 2"},
      {"calibrate", "calibrate --model ppca --n 300 --draws 2"},
  };
  for (const auto& [name, args] : commands) {
    const fs::path a = root / (name + "_a"), b = root / (name + "_b");
    const int ra = run_cli(args + " --out " + a.string()), rb = run_cli(args + " --out " + b.string());
    const std::string ca = slurp(a / "results.csv"), cb = slurp(b / "results.csv");
    o.check(ra == 0 && rb == 0 && !ca.empty() && ca == cb, name + (ca == cb ? " identical" : " differs"));
  }
  return o;
}

}  // namespace

int main() {
  bool all = true;
  const auto report = [&](int id, const std::string& title, double limit_s, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.check(false, std::string("error: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0) o.check(secs < limit_s, "runtime " + fmt(secs, 3) + " s (< " + fmt(limit_s, 4) + " s)");
    all = all && o.pass;
    std::printf("criterion %d %s: %s: %s\n", id, o.pass ? "PASS" : "FAIL", title.c_str(), o.detail.c_str());
    std::fflush(stdout);
    return o;
  };
  report(1, "estimator identities", 60, estimator_identities);
  report(2, "rate dichotomy", 300, rate_dichotomy);
  report(3, "Laplace accuracy", 120, laplace_accuracy);
  report(4, "toy consistency", 900, toy_consistency);
  PpcaSuite suite;
  const auto t0 = std::chrono::steady_clock::now();
  report(5, "pPCA simulation", 0, [&] {
    suite = ppca_simulation();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    suite.accuracy.check(secs < 1200, "runtime with fast-path runs " + fmt(secs, 4) + " s (< 1200 s)");
    return suite.accuracy;
  });
  report(6, "fast-path fidelity", 0, [&] { return suite.fidelity; });
  report(7, "temperature calibration", 600, calibration);
  report(8, "determinism", 0, determinism);
  return all ? 0 : 1;
}
