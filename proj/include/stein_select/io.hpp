#pragma once

#include "stein_select/common.hpp"
#include "stein_select/data.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace stein {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell += ch;
    }
  }
  out.push_back(trim(cell));
  return out;
}

/// Whole-cell parse; nan/inf literals parse but are caught by the caller.
inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (*b == '+') ++b;
  const auto res = std::from_chars(b, e, out);
  return res.ec == std::errc() && res.ptr == e;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

}  // namespace detail

/// %.17g: shortest fixed format that round-trips every double.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Numeric CSV with an optional header row (taken as a header when none of
/// its cells is numeric). With standardize, every column is centred and
/// scaled to unit variance using divisor N.
inline DataMatrix ingest_csv(const std::string& path, bool standardize) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "' for reading");
  std::string line;
  std::vector<std::vector<double>> rows;
  DataMatrix out;
  std::size_t width = 0;
  int line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (first) {
      first = false;
      width = cells.size();
      bool any_numeric = false;
      for (const auto& c : cells) {
        double v;
        any_numeric = any_numeric || detail::parse_double(c, v);
      }
      if (!any_numeric) {
        out.column_names = cells;
        continue;
      }
    }
    if (cells.size() != width)
      fail(ErrorKind::Input, path + ": row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                                 " cells, expected " + std::to_string(width));
    std::vector<double> r(width);
    for (std::size_t c = 0; c < width; ++c) {
      const std::string where = path + ": row " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                                (out.column_names.empty() ? "" : " ('" + out.column_names[c] + "')");
      if (!detail::parse_double(cells[c], r[c])) fail(ErrorKind::Input, where + ": '" + cells[c] + "' is not a number");
      if (!std::isfinite(r[c])) fail(ErrorKind::Input, where + ": non-finite value '" + cells[c] + "'");
    }
    rows.push_back(std::move(r));
  }
  require(rows.size() >= 2, ErrorKind::InsufficientData, path + ": need at least 2 data rows, got " + std::to_string(rows.size()));
  out.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < width; ++c)
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
  if (standardize) {
    const double n = static_cast<double>(rows.size());
    for (Eigen::Index c = 0; c < out.values.cols(); ++c) {
      const double mean = out.values.col(c).sum() / n;
      out.values.col(c).array() -= mean;
      const double var = out.values.col(c).squaredNorm() / n;
      if (!(var > 0.0))
        fail(ErrorKind::Input, path + ": column " + std::to_string(c + 1) + " is constant and cannot be standardized");
      out.values.col(c) /= std::sqrt(var);
    }
  }
  return out;
}

/// One long-format measurement.
struct ResultRow {
  std::string experiment;
  std::string scenario;
  std::string score;
  long long n = 0;
  std::string seed;  // integer seed, or "mean"
  std::string foreground;
  double value = 0.0;
  std::optional<double> normalized_value;
  std::string decision;
};

inline const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> cols = {"experiment", "scenario", "score", "n", "seed", "foreground",
                                                "value", "normalized_value", "decision"};
  return cols;
}

inline std::string results_csv_text(const std::vector<ResultRow>& rows) {
  std::string s;
  const auto& cols = result_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) s += (i ? "," : "") + cols[i];
  s += '\n';
  for (const auto& r : rows) {
    s += detail::csv_escape(r.experiment) + ',' + detail::csv_escape(r.scenario) + ',' + detail::csv_escape(r.score) +
         ',' + std::to_string(r.n) + ',' + detail::csv_escape(r.seed) + ',' + detail::csv_escape(r.foreground) + ',' +
         format_double(r.value) + ',' + (r.normalized_value ? format_double(*r.normalized_value) : "") + ',' +
         detail::csv_escape(r.decision) + '\n';
  }
  return s;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) fail(ErrorKind::Io, "cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) fail(ErrorKind::Io, "write to '" + path.string() + "' failed");
}

inline std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Input, path + ": empty results file");
  require(detail::split_csv_line(line) == result_columns(), ErrorKind::Input, path + ": unexpected results header");
  std::vector<ResultRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c = detail::split_csv_line(line);
    require(c.size() == 9, ErrorKind::Input, path + ": row " + std::to_string(line_no) + " does not have 9 cells");
    ResultRow r;
    r.experiment = c[0];
    r.scenario = c[1];
    r.score = c[2];
    double nv;
    require(detail::parse_double(c[3], nv), ErrorKind::Input, path + ": bad n on row " + std::to_string(line_no));
    r.n = static_cast<long long>(nv);
    r.seed = c[4];
    r.foreground = c[5];
    require(detail::parse_double(c[6], r.value), ErrorKind::Input, path + ": bad value on row " + std::to_string(line_no));
    if (!c[7].empty()) {
      double v;
      require(detail::parse_double(c[7], v), ErrorKind::Input,
              path + ": bad normalized_value on row " + std::to_string(line_no));
      r.normalized_value = v;
    }
    r.decision = c[8];
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// SVG line charts

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool bold = false;
};

namespace detail {
inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char ch : s) {
    switch (ch) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += ch;
    }
  }
  return o;
}
inline std::string fmt(double v, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}
}  // namespace detail

/// Line chart with a log10 x axis; thin lines for per-seed series, bold for means.
inline std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                                  const std::vector<PlotSeries>& series) {
  const double w = 640, h = 420, ml = 70, mr = 20, mt = 40, mb = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!(s.x[i] > 0) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, std::log10(s.x[i]));
      xmax = std::max(xmax, std::log10(s.x[i]));
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (xmin > xmax) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax - xmin < 1e-12) xmin -= 0.5, xmax += 0.5;
  if (ymax - ymin < 1e-12) ymin -= 0.5, ymax += 0.5;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto px = [&](double lx) { return ml + (lx - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto py = [&](double y) { return mt + (ymax - y) / (ymax - ymin) * (h - mt - mb); };
  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << ' '
    << h << "\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  o << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << detail::xml_escape(title)
    << "</text>\n";
  o << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\"" << h - mb
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double lx = xmin + (xmax - xmin) * t / 4.0, y = ymin + (ymax - ymin) * t / 4.0;
    o << "<text x=\"" << detail::fmt(px(lx)) << "\" y=\"" << h - mb + 18 << "\" text-anchor=\"middle\" font-size=\"11\">"
      << detail::fmt(std::pow(10.0, lx), 3) << "</text>\n";
    o << "<text x=\"" << ml - 6 << "\" y=\"" << detail::fmt(py(y) + 4) << "\" text-anchor=\"end\" font-size=\"11\">"
      << detail::fmt(y, 3) << "</text>\n";
  }
  if (ymin < 0 && ymax > 0)
    o << "<line x1=\"" << ml << "\" y1=\"" << detail::fmt(py(0)) << "\" x2=\"" << w - mr << "\" y2=\"" << detail::fmt(py(0))
      << "\" stroke=\"#999\" stroke-dasharray=\"4,3\"/>\n";
  o << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
    << detail::xml_escape(x_label) << "</text>\n";
  o << "<text x=\"16\" y=\"" << (mt + h - mb) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
    << (mt + h - mb) / 2 << ")\">" << detail::xml_escape(y_label) << "</text>\n";
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::map<std::string, int> colour;
  for (const auto& s : series) {
    const std::string key = s.label.substr(0, s.label.find(' '));
    if (!colour.count(key)) colour[key] = static_cast<int>(colour.size()) % 6;
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!(s.x[i] > 0) || !std::isfinite(s.y[i])) continue;
      pts += detail::fmt(px(std::log10(s.x[i]))) + ',' + detail::fmt(py(s.y[i])) + ' ';
    }
    o << "<polyline fill=\"none\" stroke=\"" << palette[colour[key]] << "\" stroke-width=\"" << (s.bold ? 2.5 : 0.7)
      << "\" stroke-opacity=\"" << (s.bold ? 1.0 : 0.5) << "\" points=\"" << pts << "\"><title>"
      << detail::xml_escape(s.label) << "</title></polyline>\n";
  }
  int row = 0;
  for (const auto& [key, ci] : colour) {
    o << "<text x=\"" << w - mr - 4 << "\" y=\"" << mt + 14 * (row++) + 4 << "\" text-anchor=\"end\" font-size=\"11\" fill=\""
      << palette[ci] << "\">" << detail::xml_escape(key) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace stein
