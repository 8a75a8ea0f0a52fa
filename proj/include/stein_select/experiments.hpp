#pragma once

#include "stein_select/calibrate.hpp"
#include "stein_select/io.hpp"
#include "stein_select/selection.hpp"

#include <map>
#include <tuple>

namespace stein {

/// "0..4,10,12..13" -> {0,1,2,3,4,10,12,13}.
inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  auto num = [&](const std::string& s) -> std::uint64_t {
    std::uint64_t v = 0;
    const auto t = detail::trim(s);
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size())
      fail(ErrorKind::Config, "seed '" + s + "' is not a nonnegative integer");
    return v;
  };
  while (std::getline(ss, item, ',')) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(num(item));
      continue;
    }
    const auto lo = num(item.substr(0, dots)), hi = num(item.substr(dots + 2));
    require(lo <= hi, ErrorKind::Config, "seed range '" + item + "' is decreasing");
    require(hi - lo < 1000000, ErrorKind::Config, "seed range '" + item + "' is too long");
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
  }
  require(!out.empty(), ErrorKind::Config, "empty seed list");
  return out;
}

inline std::vector<Eigen::Index> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<Eigen::Index> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto t = detail::trim(item);
    long long v = 0;
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size())
      fail(ErrorKind::Config, what + " entry '" + item + "' is not an integer");
    out.push_back(static_cast<Eigen::Index>(v));
  }
  require(!out.empty(), ErrorKind::Config, "empty " + what);
  return out;
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto t = detail::trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

/// Appends one "mean" row per (experiment, scenario, score, n, foreground)
/// group of integer-seed rows, after the per-seed rows, in first-seen order.
inline std::vector<ResultRow> with_mean_rows(std::vector<ResultRow> rows) {
  using Key = std::tuple<std::string, std::string, std::string, long long, std::string>;
  std::vector<Key> order;
  std::map<Key, std::tuple<CompensatedSum, CompensatedSum, int, bool>> acc;
  for (const auto& r : rows) {
    const Key k{r.experiment, r.scenario, r.score, r.n, r.foreground};
    auto it = acc.find(k);
    if (it == acc.end()) {
      order.push_back(k);
      it = acc.emplace(k, std::make_tuple(CompensatedSum{}, CompensatedSum{}, 0, true)).first;
    }
    auto& [sv, sn, cnt, has_norm] = it->second;
    sv.add(r.value);
    if (r.normalized_value) sn.add(*r.normalized_value);
    else has_norm = false;
    ++cnt;
  }
  for (const auto& k : order) {
    const auto& [sv, sn, cnt, has_norm] = acc.at(k);
    ResultRow m;
    std::tie(m.experiment, m.scenario, m.score, m.n, m.foreground) = k;
    m.seed = "mean";
    m.value = sv.value() / cnt;
    if (has_norm) m.normalized_value = sn.value() / cnt;
    rows.push_back(std::move(m));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Report -> rows

inline std::string toy_foreground_label(ToyScenario s) {
  const auto [a, b] = toy_candidates(s);
  auto lab = [](const ToyCandidate& c) {
    std::string out;
    for (std::size_t i = 0; i < c.dims.size(); ++i) out += (i ? "+" : "") + std::to_string(c.dims[i] + 1);
    if (!c.free_mean) out += ":fixed";
    if (c.model_var != 1.0) out += ":var=" + detail::fmt(c.model_var);
    return out;
  };
  return lab(a) + " vs " + lab(b);
}

inline std::vector<ResultRow> toy_rows(const std::vector<ToyRow>& in) {
  std::vector<ResultRow> out;
  for (const auto& r : in) {
    ResultRow o;
    o.experiment = "toy";
    o.scenario = to_string(r.scenario);
    o.score = to_string(r.score);
    o.n = static_cast<long long>(r.n);
    o.seed = std::to_string(r.seed);
    o.foreground = toy_foreground_label(r.scenario);
    o.value = r.value;
    o.normalized_value = r.normalized;
    o.decision = r.value > 0.0 ? "first" : "second";
    out.push_back(std::move(o));
  }
  return out;
}

/// Leave-one-out rows: one log-ratio and one criticism row per dimension,
/// then the balanced accuracy when the truth is known.
inline std::vector<ResultRow> selection_rows(const SelectionReport& rep, const std::string& experiment,
                                             const std::string& scenario, long long n, const std::string& seed) {
  std::vector<ResultRow> out;
  for (std::size_t j = 0; j < rep.per_foreground.size(); ++j) {
    const auto& e = rep.per_foreground[j];
    ResultRow o;
    o.experiment = experiment;
    o.scenario = scenario;
    o.score = std::string("log_svc_ratio_") + to_string(e.svc.method);
    o.n = n;
    o.seed = seed;
    o.foreground = "drop_" + std::to_string(j + 1);
    if (!e.error.empty()) {
      o.value = std::numeric_limits<double>::quiet_NaN();
      o.decision = "error";
    } else {
      o.value = e.log_ratio;
      o.decision = to_string(e.decision);
    }
    out.push_back(std::move(o));
  }
  for (const auto& [j, v] : rep.criticism) {
    ResultRow o;
    o.experiment = experiment;
    o.scenario = scenario;
    o.score = "criticism";
    o.n = n;
    o.seed = seed;
    o.foreground = "drop_" + std::to_string(j + 1);
    o.value = v;
    out.push_back(std::move(o));
  }
  if (rep.balanced_accuracy) {
    ResultRow o;
    o.experiment = experiment;
    o.scenario = scenario;
    o.score = "balanced_accuracy";
    o.n = n;
    o.seed = seed;
    o.foreground = "all";
    o.value = *rep.balanced_accuracy;
    out.push_back(std::move(o));
  }
  return out;
}

inline std::vector<ResultRow> calibration_rows(const CalibrationResult& r, const std::string& model, long long n,
                                               std::uint64_t seed) {
  std::vector<ResultRow> out;
  for (std::size_t i = 0; i < r.t_hat_samples.size(); ++i) {
    ResultRow o;
    o.experiment = "calibrate";
    o.scenario = model;
    o.score = "t_hat";
    o.n = n;
    o.seed = std::to_string(seed + i);
    o.foreground = "all";
    o.value = r.t_hat_samples[i];
    out.push_back(std::move(o));
  }
  ResultRow m;
  m.experiment = "calibrate";
  m.scenario = model;
  m.score = "t_hat";
  m.n = n;
  m.seed = "median";
  m.foreground = "all";
  m.value = r.t_median;
  out.push_back(std::move(m));
  return out;
}

// ---------------------------------------------------------------------------
// Output

/// Normalized value (or value) against n for each score of one scenario:
/// a thin line per seed and a bold line for the mean.
inline std::string toy_plot(const std::vector<ResultRow>& rows, const std::string& scenario) {
  std::map<std::pair<std::string, std::string>, PlotSeries> series;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& r : rows) {
    if (r.experiment != "toy" || r.scenario != scenario) continue;
    const auto key = std::make_pair(r.score, r.seed);
    if (!series.count(key)) {
      order.push_back(key);
      series[key].label = r.score + " seed " + r.seed;
      series[key].bold = r.seed == "mean";
    }
    series[key].x.push_back(static_cast<double>(r.n));
    series[key].y.push_back(r.normalized_value ? *r.normalized_value : r.value);
  }
  std::vector<PlotSeries> out;
  for (const auto& k : order) out.push_back(series[k]);
  return svg_line_chart(scenario + ": normalized log(K1/K2)", "N", "normalized log ratio", out);
}

/// Writes results.csv, config.json and the given plots into out_dir.
inline void emit_results(const std::filesystem::path& out_dir, const std::vector<ResultRow>& rows,
                         const std::string& config_json, const std::vector<std::pair<std::string, std::string>>& plots) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create output directory '" + out_dir.string() + "': " + ec.message());
  write_text_file(out_dir / "results.csv", results_csv_text(rows));
  write_text_file(out_dir / "config.json", config_json);
  for (const auto& [name, svg] : plots) write_text_file(out_dir / name, svg);
}

}  // namespace stein
