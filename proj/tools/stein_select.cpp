// stein-select: data and model selection with the Stein volume criterion.

#include "stein_select/stein_select.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

namespace {

using namespace stein;
using json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config:
    case ErrorKind::Unsupported: return kExitConfig;
    case ErrorKind::Numeric:
    case ErrorKind::Domain:
    case ErrorKind::InsufficientData: return kExitNumeric;
    case ErrorKind::Io:
    case ErrorKind::Input: return kExitIo;
  }
  return kExitNumeric;
}

struct ToyArgs {
  std::string scenario = "ds";
  std::string scores = "svc,k_a,k_b,k_c,k_d";
  std::string n_grid = "100,1000,10000";
  std::string seeds = "0..4";
  double t = 5.0;
  std::string policy = "perdim:5";
  double prior_var = 10.0;
  double bandwidth = 1.0;
  bool plot = true;
  std::string out = "out";
};

struct PpcaSimArgs {
  std::string scenario = "A";
  std::string n = "2000";
  int latent_dim = 2;
  double t = 0.05;
  std::string policy = "pitman-yor:0.5,1,0.2";
  std::string method = "bic";
  bool fast = false;
  std::string seeds = "0..4";
  double alpha = 0.1;
  double beta = -0.5;
  double c = 1.0;
  bool plot = true;
  std::string out = "out";
};

struct SelectArgs {
  std::string input;
  std::string model = "ppca";
  int latent_dim = 0;
  double t = 1.0;
  std::string policy = "pitman-yor:0.5,1,0.2";
  std::string method = "bic";
  bool fast = false;
  bool standardize = true;
  double alpha = 0.1;
  double beta = -0.5;
  double c = 1.0;
  std::uint64_t seed = 0;
  std::string out = "out";
};

struct CalibrateArgs {
  std::string model = "gaussian";
  long long n = 2000;
  int draws = 10;
  std::uint64_t seed = 0;
  int d = 0;  // 0: model default (1 for gaussian, 6 for ppca)
  int latent_dim = 2;
  double alpha = 1.0;
  double beta = -0.5;
  double c = 1.0;
  double bandwidth = 1.0;
  std::string out = "out";
};

SvcMethod parse_method(const std::string& m) {
  if (m == "bic") return SvcMethod::Bic;
  if (m == "laplace") return SvcMethod::Laplace;
  fail(ErrorKind::Config, "unknown method '" + m + "' (expected bic or laplace)");
}

/// Command-line tokens equivalent to the keys of a JSON config object.
/// Keys are long option names; unknown keys are rejected.
std::vector<std::string> config_tokens(const std::string& path, CLI::App& sub) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config '" + path + "'");
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, "config '" + path + "' is not valid JSON: " + e.what());
  }
  require(cfg.is_object(), ErrorKind::Config, "config '" + path + "' must be a JSON object");
  std::vector<std::string> tokens;
  for (const auto& [key, val] : cfg.items()) {
    if (key == "command") {
      require(val.is_string() && val.get<std::string>() == sub.get_name(), ErrorKind::Config,
              "config command does not match subcommand '" + sub.get_name() + "'");
      continue;
    }
    CLI::Option* opt = key == "config" ? nullptr : sub.get_option_no_throw("--" + key);
    if (!opt) fail(ErrorKind::Config, "unknown config key '" + key + "' for command '" + sub.get_name() + "'");
    if (val.is_boolean()) {
      require(opt->get_expected_min() == 0, ErrorKind::Config, "config key '" + key + "' does not take a boolean");
      if (val.get<bool>()) tokens.push_back("--" + key);
      else tokens.push_back("--no-" + key);
      continue;
    }
    require(opt->get_expected_min() != 0, ErrorKind::Config, "config key '" + key + "' expects a boolean");
    std::string text;
    auto scalar = [&](const json& v) -> std::string {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_number_integer()) return std::to_string(v.get<long long>());
      if (v.is_number()) return format_double(v.get<double>());
      fail(ErrorKind::Config, "config key '" + key + "' has an unsupported value type");
    };
    if (val.is_array()) {
      for (std::size_t i = 0; i < val.size(); ++i) text += (i ? "," : "") + scalar(val[i]);
    } else {
      text = scalar(val);
    }
    tokens.push_back("--" + key);
    tokens.push_back(text);
  }
  return tokens;
}

int run_toy(const ToyArgs& a) {
  const auto scores_txt = split_list(a.scores);
  const auto scenarios = split_list(a.scenario);
  require(!scenarios.empty() && !scores_txt.empty(), ErrorKind::Config, "toy needs at least one scenario and score");
  ToyConfig base;
  base.scores.clear();
  for (const auto& s : scores_txt) base.scores.push_back(parse_toy_score(s));
  base.n_grid = parse_int_list(a.n_grid, "n-grid");
  base.seeds = parse_seed_list(a.seeds);
  base.temp = a.t;
  base.policy = parse_policy(a.policy);
  base.prior_var = a.prior_var;
  base.bandwidth = a.bandwidth;
  require(a.prior_var > 0.0, ErrorKind::Config, "prior-var must be positive");
  require(a.bandwidth > 0.0, ErrorKind::Config, "bandwidth must be positive");
  std::vector<ToyScenario> parsed;
  for (const auto& s : scenarios) parsed.push_back(parse_toy_scenario(s));

  std::vector<ResultRow> rows;
  for (auto sc : parsed) {
    ToyConfig cfg = base;
    cfg.scenario = sc;
    const auto part = toy_rows(consistency_curves(cfg));
    rows.insert(rows.end(), part.begin(), part.end());
  }
  rows = with_mean_rows(std::move(rows));

  json echo;
  echo["command"] = "toy";
  echo["scenario"] = scenarios;
  echo["scores"] = scores_txt;
  echo["n-grid"] = base.n_grid;
  echo["seeds"] = base.seeds;
  echo["t"] = a.t;
  echo["policy"] = a.policy;
  echo["prior-var"] = a.prior_var;
  echo["bandwidth"] = a.bandwidth;
  echo["plot"] = a.plot;
  echo["rng"] = Rng::kRngVersion;
  std::vector<std::pair<std::string, std::string>> plots;
  if (a.plot)
    for (const auto& s : scenarios) plots.emplace_back("plot_" + s + ".svg", toy_plot(rows, s));
  emit_results(a.out, rows, echo.dump(2) + "\n", plots);
  return kExitOk;
}

int run_ppca_sim(const PpcaSimArgs& a) {
  const PpcaScenario sc = parse_ppca_scenario(a.scenario);
  const auto ns = parse_int_list(a.n, "n");
  const auto seeds = parse_seed_list(a.seeds);
  PpcaSelectionConfig cfg;
  cfg.latent_dim = a.latent_dim;
  cfg.temp = a.t;
  cfg.policy = parse_policy(a.policy);
  cfg.method = parse_method(a.method);
  cfg.fast = a.fast;
  cfg.alpha = a.alpha;
  cfg.beta = a.beta;
  cfg.c = a.c;
  KernelSpec::factored_imq(6, a.beta, a.c);
  require(a.latent_dim >= 1 && a.latent_dim <= 4, ErrorKind::Config, "latent-dim must lie in [1, 4] for d = 6");
  for (auto n : ns) require(n >= 10, ErrorKind::Config, "ppca-sim sample sizes must be at least 10");

  std::vector<ResultRow> rows;
  for (auto n : ns)
    for (auto seed : seeds) {
      const PpcaSimData sim = generate_ppca_sim(sc, n, seed);
      std::vector<Decision> truth;
      for (bool inc : sim.include) truth.push_back(inc ? Decision::Include : Decision::Exclude);
      cfg.optim.seed = seed;
      const SelectionReport rep = leave_one_out_ppca(sim.data.values, cfg, &truth);
      const auto part = selection_rows(rep, "ppca-sim", to_string(sc), static_cast<long long>(n), std::to_string(seed));
      rows.insert(rows.end(), part.begin(), part.end());
    }
  rows = with_mean_rows(std::move(rows));

  json echo;
  echo["command"] = "ppca-sim";
  echo["scenario"] = to_string(sc);
  echo["n"] = ns;
  echo["latent-dim"] = a.latent_dim;
  echo["t"] = a.t;
  echo["policy"] = a.policy;
  echo["method"] = a.method;
  echo["fast"] = a.fast;
  echo["seeds"] = seeds;
  echo["alpha"] = a.alpha;
  echo["beta"] = a.beta;
  echo["c"] = a.c;
  echo["plot"] = a.plot;
  echo["rng"] = Rng::kRngVersion;
  std::vector<std::pair<std::string, std::string>> plots;
  if (a.plot) {
    std::vector<PlotSeries> series;
    std::map<std::string, std::size_t> index;
    for (const auto& r : rows) {
      if (r.score != "balanced_accuracy") continue;
      if (!index.count(r.seed)) {
        index[r.seed] = series.size();
        series.push_back({"accuracy seed " + r.seed, {}, {}, r.seed == "mean"});
      }
      auto& s = series[index[r.seed]];
      s.x.push_back(static_cast<double>(r.n));
      s.y.push_back(r.value);
    }
    plots.emplace_back("plot_balanced_accuracy.svg",
                       svg_line_chart(std::string("scenario ") + to_string(sc) + ": balanced accuracy", "N",
                                      "balanced accuracy", series));
  }
  emit_results(a.out, rows, echo.dump(2) + "\n", plots);
  return kExitOk;
}

int run_select(const SelectArgs& a) {
  require(a.model == "ppca", ErrorKind::Config, "select supports --model ppca only");
  const DataMatrix dm = ingest_csv(a.input, a.standardize);
  PpcaSelectionConfig cfg;
  cfg.latent_dim = a.latent_dim;
  cfg.temp = a.t;
  cfg.policy = parse_policy(a.policy);
  cfg.method = parse_method(a.method);
  cfg.fast = a.fast;
  cfg.alpha = a.alpha;
  cfg.beta = a.beta;
  cfg.c = a.c;
  cfg.optim.seed = a.seed;
  KernelSpec::factored_imq(static_cast<int>(dm.cols()), a.beta, a.c);
  require(a.latent_dim >= 1 && a.latent_dim < dm.cols() - 1, ErrorKind::Config,
          "latent-dim must lie in [1, d - 2] for leave-one-out selection");
  const SelectionReport rep = leave_one_out_ppca(dm.values, cfg);
  auto rows = selection_rows(rep, "select", "input", static_cast<long long>(dm.rows()), std::to_string(a.seed));
  if (!dm.column_names.empty())
    for (auto& r : rows)
      if (r.foreground.rfind("drop_", 0) == 0) {
        const auto j = std::stoul(r.foreground.substr(5)) - 1;
        r.foreground = "drop_" + dm.column_names[j];
      }

  json echo;
  echo["command"] = "select";
  echo["input"] = a.input;
  echo["model"] = a.model;
  echo["latent-dim"] = a.latent_dim;
  echo["t"] = a.t;
  echo["policy"] = a.policy;
  echo["method"] = a.method;
  echo["fast"] = a.fast;
  echo["standardize"] = a.standardize;
  echo["alpha"] = a.alpha;
  echo["beta"] = a.beta;
  echo["c"] = a.c;
  echo["seed"] = a.seed;
  echo["rng"] = Rng::kRngVersion;
  emit_results(a.out, rows, echo.dump(2) + "\n", {});
  return kExitOk;
}

int run_calibrate(const CalibrateArgs& a) {
  require(a.n >= 2 && a.draws >= 1, ErrorKind::Config, "calibrate needs n >= 2 and draws >= 1");
  CalibrationResult r;
  int d = a.d;
  if (a.model == "gaussian") {
    if (d == 0) d = 1;
    require(d >= 1, ErrorKind::Config, "d must be positive");
    const auto model = GaussianLocationModel::make(Matrix::Identity(d, d), Vector::Zero(d), 10.0 * Matrix::Identity(d, d));
    r = calibrate_gaussian(model, KernelSpec::rbf(d, a.bandwidth), a.n, a.draws, a.seed);
  } else if (a.model == "ppca") {
    if (d == 0) d = 6;
    require(a.latent_dim >= 1 && a.latent_dim < d, ErrorKind::Config, "latent-dim must lie in [1, d)");
    r = calibrate_ppca(d, a.latent_dim, PpcaPrior{a.alpha}, a.beta, a.c, a.n, a.draws, a.seed);
  } else {
    fail(ErrorKind::Config, "unknown model '" + a.model + "' (expected gaussian or ppca)");
  }
  json echo;
  echo["command"] = "calibrate";
  echo["model"] = a.model;
  echo["n"] = a.n;
  echo["draws"] = a.draws;
  echo["seed"] = a.seed;
  echo["d"] = d;
  if (a.model == "ppca") {
    echo["latent-dim"] = a.latent_dim;
    echo["alpha"] = a.alpha;
    echo["beta"] = a.beta;
    echo["c"] = a.c;
  } else {
    echo["bandwidth"] = a.bandwidth;
  }
  echo["rng"] = Rng::kRngVersion;
  emit_results(a.out, calibration_rows(r, a.model, a.n, a.seed), echo.dump(2) + "\n", {});
  std::printf("median T_hat = %.6g over %d draws (%d flagged)\n", r.t_median, r.n_used, r.n_flagged);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stein volume criterion for data and model selection"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;

  ToyArgs toy;
  auto* t = app.add_subcommand("toy", "Gaussian toy consistency curves");
  t->add_option("--config", config_path, "JSON file with option values");
  t->add_option("--scenario", toy.scenario, "ds, nested_ds, ms, nested_ms (comma list)");
  t->add_option("--scores", toy.scores, "svc, k_a, k_b, k_c, k_d (comma list)");
  t->add_option("--n-grid", toy.n_grid, "sample sizes, comma list");
  t->add_option("--seeds", toy.seeds, "seed list, e.g. 0..99 or 1,2,5");
  t->add_option("--t", toy.t, "temperature T");
  t->add_option("--policy", toy.policy, "background policy");
  t->add_option("--prior-var", toy.prior_var, "prior variance of each mean coordinate");
  t->add_option("--bandwidth", toy.bandwidth, "RBF bandwidth");
  t->add_flag("--plot,!--no-plot", toy.plot, "write plot_<scenario>.svg");
  t->add_option("--out", toy.out, "output directory");

  PpcaSimArgs ps;
  auto* p = app.add_subcommand("ppca-sim", "pPCA leave-one-out selection on simulated data");
  p->add_option("--config", config_path, "JSON file with option values");
  p->add_option("--scenario", ps.scenario, "A or B");
  p->add_option("--n", ps.n, "sample size(s), comma list");
  p->add_option("--latent-dim", ps.latent_dim, "latent dimension k");
  p->add_option("--t", ps.t, "temperature T");
  p->add_option("--policy", ps.policy, "background policy");
  p->add_option("--method", ps.method, "bic or laplace");
  p->add_flag("--fast,!--no-fast", ps.fast, "linear-response optima instead of re-optimizing");
  p->add_option("--seeds", ps.seeds, "seed list");
  p->add_option("--alpha", ps.alpha, "prior hyperparameter alpha");
  p->add_option("--beta", ps.beta, "IMQ exponent beta");
  p->add_option("--c", ps.c, "IMQ offset c");
  p->add_flag("--plot,!--no-plot", ps.plot, "write plot_balanced_accuracy.svg");
  p->add_option("--out", ps.out, "output directory");

  SelectArgs sa;
  auto* s = app.add_subcommand("select", "pPCA leave-one-out selection on a CSV file");
  s->add_option("--config", config_path, "JSON file with option values");
  s->add_option("--input", sa.input, "numeric CSV, optional header row");
  s->add_option("--model", sa.model, "ppca");
  s->add_option("--latent-dim", sa.latent_dim, "latent dimension k");
  s->add_option("--t", sa.t, "temperature T");
  s->add_option("--policy", sa.policy, "background policy");
  s->add_option("--method", sa.method, "bic or laplace");
  s->add_flag("--fast,!--no-fast", sa.fast, "linear-response optima instead of re-optimizing");
  s->add_flag("--standardize,!--no-standardize", sa.standardize, "centre and scale columns (divisor N)");
  s->add_option("--alpha", sa.alpha, "prior hyperparameter alpha");
  s->add_option("--beta", sa.beta, "IMQ exponent beta");
  s->add_option("--c", sa.c, "IMQ offset c");
  s->add_option("--seed", sa.seed, "seed for random optimizer starts");
  s->add_option("--out", sa.out, "output directory");

  CalibrateArgs ca;
  auto* c = app.add_subcommand("calibrate", "temperature calibration by curvature matching");
  c->add_option("--config", config_path, "JSON file with option values");
  c->add_option("--model", ca.model, "gaussian or ppca");
  c->add_option("--n", ca.n, "sample size per draw");
  c->add_option("--draws", ca.draws, "number of prior draws");
  c->add_option("--seed", ca.seed, "seed of the first draw");
  c->add_option("--d", ca.d, "data dimension");
  c->add_option("--latent-dim", ca.latent_dim, "pPCA latent dimension");
  c->add_option("--alpha", ca.alpha, "pPCA prior hyperparameter alpha");
  c->add_option("--beta", ca.beta, "IMQ exponent beta");
  c->add_option("--c", ca.c, "IMQ offset c");
  c->add_option("--bandwidth", ca.bandwidth, "RBF bandwidth (gaussian)");
  c->add_option("--out", ca.out, "output directory");

  try {
    // Config values are spliced in ahead of the explicit flags, which win.
    std::vector<std::string> args(argv + 1, argv + argc);
    std::vector<std::string> spliced;
    if (!args.empty()) {
      CLI::App* sub = app.get_subcommand_no_throw(args[0]);
      std::vector<std::string> rest;
      std::string cfg;
      for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) cfg = args[++i];
        else if (args[i].rfind("--config=", 0) == 0) cfg = args[i].substr(9);
        else rest.push_back(args[i]);
      }
      spliced.push_back(args[0]);
      if (sub && !cfg.empty()) {
        const auto tokens = config_tokens(cfg, *sub);
        spliced.insert(spliced.end(), tokens.begin(), tokens.end());
      }
      spliced.insert(spliced.end(), rest.begin(), rest.end());
    }
    std::reverse(spliced.begin(), spliced.end());
    try {
      app.parse(spliced);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? kExitOk : kExitConfig;
    }
    if (s->parsed()) {
      require(!sa.input.empty(), ErrorKind::Config, "select needs --input");
      require(sa.latent_dim > 0, ErrorKind::Config, "select needs --latent-dim");
    }
    if (t->parsed()) return run_toy(toy);
    if (p->parsed()) return run_ppca_sim(ps);
    if (s->parsed()) return run_select(sa);
    if (c->parsed()) return run_calibrate(ca);
  } catch (const Error& e) {
    std::fprintf(stderr, "stein-select: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "stein-select: %s\n", e.what());
    return kExitNumeric;
  }
  return kExitConfig;
}
