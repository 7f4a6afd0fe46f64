#pragma once

// CSV, JSON and SVG serialization of paths, estimates and experiment reports.

#include "sparselab/core.hpp"
#include "sparselab/estimators.hpp"
#include "sparselab/experiments.hpp"
#include "sparselab/simulate.hpp"
#include "sparselab/stats.hpp"
#include "sparselab/tuning.hpp"

#include <nlohmann/json.hpp>

#include <cerrno>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace sparselab {

/// Raised when a file cannot be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

using Json = nlohmann::ordered_json;

/// 17 significant digits: enough for an exact double round trip.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
    throw Error("not a number: '" + s + "'");
  return v;
}

inline std::string read_text_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failure on " + file.string());
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& file, const std::string& content) {
  std::error_code ec;
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path(), ec);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("write failure on " + file.string());
}

// ---------------------------------------------------------------------------
// Generic CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw Error("CSV has no column '" + name + "'");
  }
};

/// Comma-separated, no quoting; every row must match the header width.
inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto pos = s.find(',', start);
      cells.push_back(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    return cells;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw Error("CSV line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                  " fields, found " + std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw Error("CSV is empty");
  return t;
}

namespace detail {

inline std::string join(const std::vector<std::string>& cells) {
  std::string s;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) s += ',';
    s += cells[i];
  }
  return s + '\n';
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sample paths

/// Header `t,x1,...,xd`, one row per observation time k delta.
inline std::string path_to_csv(const SamplePath& path) {
  const Index d = path.dim();
  std::vector<std::string> header{"t"};
  for (Index i = 0; i < d; ++i) header.push_back("x" + std::to_string(i + 1));
  std::string out = detail::join(header);
  std::vector<std::string> cells(static_cast<std::size_t>(d + 1));
  for (Index k = 0; k < path.states.cols(); ++k) {
    cells[0] = format_double(static_cast<double>(k) * path.delta);
    for (Index i = 0; i < d; ++i) cells[static_cast<std::size_t>(i + 1)] = format_double(path.states(i, k));
    out += detail::join(cells);
  }
  return out;
}

/// Inverse of path_to_csv. The step is read from the time column, which must
/// start at 0 and be equally spaced.
inline SamplePath path_from_csv(const std::string& text) {
  const CsvTable t = parse_csv(text);
  if (t.header.size() < 2 || t.header[0] != "t") throw Error("path CSV: header must be t,x1,...,xd");
  for (std::size_t i = 1; i < t.header.size(); ++i)
    if (t.header[i] != "x" + std::to_string(i)) throw Error("path CSV: unexpected column '" + t.header[i] + "'");
  if (t.rows.size() < 2) throw Error("path CSV: need at least two observations");
  const Index d = static_cast<Index>(t.header.size() - 1);
  const Index cols = static_cast<Index>(t.rows.size());
  SamplePath path;
  path.states.resize(d, cols);
  std::vector<double> times(t.rows.size());
  for (Index k = 0; k < cols; ++k) {
    const auto& row = t.rows[static_cast<std::size_t>(k)];
    times[static_cast<std::size_t>(k)] = parse_double(row[0]);
    for (Index i = 0; i < d; ++i) path.states(i, k) = parse_double(row[static_cast<std::size_t>(i + 1)]);
  }
  if (times[0] != 0.0) throw Error("path CSV: time column must start at 0");
  path.delta = times[1];
  if (!(path.delta > 0.0)) throw Error("path CSV: time column must increase");
  for (std::size_t k = 1; k < times.size(); ++k)
    if (std::abs(times[k] - static_cast<double>(k) * path.delta) > 1e-9 * std::max(1.0, times[k]))
      throw Error("path CSV: time column is not equally spaced (row " + std::to_string(k + 1) + ")");
  if (!path.states.allFinite()) throw Error("path CSV: non-finite state value");
  return path;
}

inline SamplePath read_path(const std::filesystem::path& file) { return path_from_csv(read_text_file(file)); }

// ---------------------------------------------------------------------------
// Matrices and estimates

/// Row-major array of rows.
inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const Json& j, const std::string& what = "matrix") {
  if (!j.is_array() || j.empty()) throw Error(what + ": expected a nonempty array of rows");
  const auto rows = static_cast<Index>(j.size());
  if (!j[0].is_array() || j[0].empty()) throw Error(what + ": rows must be nonempty arrays");
  const auto cols = static_cast<Index>(j[0].size());
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) throw Error(what + ": ragged rows");
    for (Index k = 0; k < cols; ++k) {
      const auto& v = row[static_cast<std::size_t>(k)];
      if (!v.is_number()) throw Error(what + ": entries must be numbers");
      m(i, k) = v.get<double>();
    }
  }
  return m;
}

inline std::string cv_trace_to_csv(const std::vector<CVTraceRow>& trace) {
  std::string out = "lambda,score,nll_validation,norm_of_estimate,nnz\n";
  for (const auto& r : trace)
    out += detail::join({format_double(r.lambda), format_double(r.score), format_double(r.nll_validation),
                         format_double(r.norm_of_estimate), std::to_string(r.nnz)});
  return out;
}

// ---------------------------------------------------------------------------
// Experiment reports

inline std::string report_to_csv(const ExperimentReport& report) {
  std::string out =
      "d,T,replication,estimator,l1_error,l2_error,l1_error_weighted,l2_error_weighted,nnz,lambda,seed,failed\n";
  for (const auto& r : report.rows)
    out += detail::join({std::to_string(r.d), format_double(r.T), std::to_string(r.replication), r.estimator,
                         format_double(r.l1_error), format_double(r.l2_error), format_double(r.l1_error_weighted),
                         format_double(r.l2_error_weighted), std::to_string(r.nnz), format_double(r.lambda_used),
                         std::to_string(r.seed), r.failed ? "1" : "0"});
  return out;
}

inline std::string aggregate_to_csv(const std::vector<AggregateRow>& rows) {
  std::string out = "d,T,estimator,count,failed,mean_l1,sd_l1,mean_l2,sd_l2\n";
  for (const auto& r : rows)
    out += detail::join({std::to_string(r.d), format_double(r.T), r.estimator, std::to_string(r.count),
                         std::to_string(r.failed), format_double(r.mean_l1), format_double(r.sd_l1),
                         format_double(r.mean_l2), format_double(r.sd_l2)});
  return out;
}

inline std::string rate_summary_to_csv(const std::vector<RateSummaryRow>& rows) {
  std::string out = "T,median_sq_l2,normalized,lambda,reps\n";
  for (const auto& r : rows)
    out += detail::join({format_double(r.T), format_double(r.median_sq_l2), format_double(r.normalized),
                         format_double(r.lambda), std::to_string(r.reps)});
  return out;
}

inline std::string re_probability_to_csv(const std::vector<REProbabilityRow>& rows) {
  std::string out = "T,frequency,reps\n";
  for (const auto& r : rows)
    out += detail::join({format_double(r.T), format_double(r.frequency), std::to_string(r.reps)});
  return out;
}

inline std::string deviation_to_csv(const std::vector<DeviationRow>& rows) {
  std::string out = "replication,statistic,threshold,violated\n";
  for (const auto& r : rows)
    out += detail::join({std::to_string(r.replication), format_double(r.statistic), format_double(r.threshold),
                         r.violated ? "1" : "0"});
  return out;
}

inline std::string concentration_to_csv(const std::vector<ConcentrationCell>& cells) {
  std::string out = "T,r,frequency\n";
  for (const auto& c : cells) out += detail::join({format_double(c.T), format_double(c.r), format_double(c.frequency)});
  return out;
}

// ---------------------------------------------------------------------------
// SVG

namespace detail {

inline std::string svg_num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string svg_label(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

}  // namespace detail

struct LineSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> sd;
};

/// Mean curves with a shaded mean +/- sd band per series.
inline std::string svg_line_plot(const std::vector<LineSeries>& series, const std::string& title,
                                 const std::string& x_label, const std::string& y_label) {
  const double W = 640, H = 420, left = 70, right = 150, top = 40, bottom = 50;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = 0.0, ymax = -xmin;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymax = std::max(ymax, s.mean[i] + (i < s.sd.size() ? s.sd[i] : 0.0));
    }
  if (!std::isfinite(xmin)) xmin = 0.0, xmax = 1.0;
  if (!(xmax > xmin)) xmax = xmin + 1.0;
  if (!(ymax > ymin)) ymax = ymin + 1.0;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * (W - left - right); };
  auto py = [&](double y) { return H - bottom - (y - ymin) / (ymax - ymin) * (H - top - bottom); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  using detail::svg_num;
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + svg_num(W) + "\" height=\"" + svg_num(H) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + svg_num(W / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" +
         detail::xml_escape(title) + "</text>\n";
  out += "<line x1=\"" + svg_num(left) + "\" y1=\"" + svg_num(H - bottom) + "\" x2=\"" + svg_num(W - right) +
         "\" y2=\"" + svg_num(H - bottom) + "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + svg_num(left) + "\" y1=\"" + svg_num(top) + "\" x2=\"" + svg_num(left) + "\" y2=\"" +
         svg_num(H - bottom) + "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = ymin + (ymax - ymin) * k / 4.0, xv = xmin + (xmax - xmin) * k / 4.0;
    out += "<text x=\"" + svg_num(left - 6) + "\" y=\"" + svg_num(py(yv) + 4) +
           "\" text-anchor=\"end\" font-size=\"11\">" + detail::svg_label(yv) + "</text>\n";
    out += "<text x=\"" + svg_num(px(xv)) + "\" y=\"" + svg_num(H - bottom + 16) +
           "\" text-anchor=\"middle\" font-size=\"11\">" + detail::svg_label(xv) + "</text>\n";
  }
  out += "<text x=\"" + svg_num((left + W - right) / 2) + "\" y=\"" + svg_num(H - 10) +
         "\" text-anchor=\"middle\" font-size=\"13\">" + detail::xml_escape(x_label) + "</text>\n";
  out += "<text x=\"16\" y=\"" + svg_num((top + H - bottom) / 2) + "\" transform=\"rotate(-90 16 " +
         svg_num((top + H - bottom) / 2) + ")\" text-anchor=\"middle\" font-size=\"13\">" +
         detail::xml_escape(y_label) + "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& ser = series[s];
    const std::string color = colors[s % 6];
    if (!ser.x.empty() && ser.sd.size() == ser.x.size()) {
      std::string band;
      for (std::size_t i = 0; i < ser.x.size(); ++i)
        band += svg_num(px(ser.x[i])) + "," + svg_num(py(ser.mean[i] + ser.sd[i])) + " ";
      for (std::size_t i = ser.x.size(); i-- > 0;)
        band += svg_num(px(ser.x[i])) + "," + svg_num(py(std::max(ymin, ser.mean[i] - ser.sd[i]))) + " ";
      out += "<polygon points=\"" + band + "\" fill=\"" + color + "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    }
    std::string pts;
    for (std::size_t i = 0; i < ser.x.size(); ++i) pts += svg_num(px(ser.x[i])) + "," + svg_num(py(ser.mean[i])) + " ";
    out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    const double ly = top + 20.0 * static_cast<double>(s);
    out += "<rect x=\"" + svg_num(W - right + 15) + "\" y=\"" + svg_num(ly) + "\" width=\"12\" height=\"12\" fill=\"" +
           color + "\"/>\n";
    out += "<text x=\"" + svg_num(W - right + 32) + "\" y=\"" + svg_num(ly + 10) + "\" font-size=\"12\">" +
           detail::xml_escape(ser.name) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

/// Grid of values in [0, 1] shaded from white to dark blue; rows and columns labeled.
inline std::string svg_heat_map(const std::vector<double>& row_keys, const std::vector<double>& col_keys,
                                const Matrix& values, const std::string& title, const std::string& row_label,
                                const std::string& col_label) {
  using detail::svg_num;
  const double cell = 48, left = 90, top = 50;
  const double W = left + cell * static_cast<double>(col_keys.size()) + 30;
  const double H = top + cell * static_cast<double>(row_keys.size()) + 50;
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + svg_num(W) + "\" height=\"" + svg_num(H) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + svg_num(W / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
         detail::xml_escape(title) + "</text>\n";
  for (std::size_t i = 0; i < row_keys.size(); ++i) {
    const double y = top + cell * static_cast<double>(i);
    out += "<text x=\"" + svg_num(left - 6) + "\" y=\"" + svg_num(y + cell / 2 + 4) +
           "\" text-anchor=\"end\" font-size=\"11\">" + detail::svg_label(row_keys[i]) + "</text>\n";
    for (std::size_t j = 0; j < col_keys.size(); ++j) {
      const double v = std::clamp(values(static_cast<Index>(i), static_cast<Index>(j)), 0.0, 1.0);
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - v)));
      char fill[16];
      std::snprintf(fill, sizeof fill, "#%02x%02xff", shade, shade);
      const double x = left + cell * static_cast<double>(j);
      out += "<rect x=\"" + svg_num(x) + "\" y=\"" + svg_num(y) + "\" width=\"" + svg_num(cell) + "\" height=\"" +
             svg_num(cell) + "\" fill=\"" + fill + "\" stroke=\"#888888\"/>\n";
      out += "<text x=\"" + svg_num(x + cell / 2) + "\" y=\"" + svg_num(y + cell / 2 + 4) +
             "\" text-anchor=\"middle\" font-size=\"10\">" + detail::svg_label(v) + "</text>\n";
    }
  }
  const double base = top + cell * static_cast<double>(row_keys.size());
  for (std::size_t j = 0; j < col_keys.size(); ++j)
    out += "<text x=\"" + svg_num(left + cell * (static_cast<double>(j) + 0.5)) + "\" y=\"" + svg_num(base + 16) +
           "\" text-anchor=\"middle\" font-size=\"11\">" + detail::svg_label(col_keys[j]) + "</text>\n";
  out += "<text x=\"" + svg_num(left + cell * static_cast<double>(col_keys.size()) / 2) + "\" y=\"" +
         svg_num(base + 38) + "\" text-anchor=\"middle\" font-size=\"12\">" + detail::xml_escape(col_label) +
         "</text>\n";
  out += "<text x=\"14\" y=\"" + svg_num(top - 10) + "\" font-size=\"12\">" + detail::xml_escape(row_label) +
         "</text>\n";
  out += "</svg>\n";
  return out;
}

/// Error against d per estimator, from the aggregated comparison.
inline std::string comparison_plot(const std::vector<AggregateRow>& agg, bool l2) {
  std::vector<LineSeries> series;
  for (const auto& a : agg) {
    auto it = std::find_if(series.begin(), series.end(), [&](const LineSeries& s) { return s.name == a.estimator; });
    if (it == series.end()) {
      series.push_back({a.estimator, {}, {}, {}});
      it = series.end() - 1;
    }
    if (a.count == 0) continue;
    it->x.push_back(static_cast<double>(a.d));
    it->mean.push_back(l2 ? a.mean_l2 : a.mean_l1);
    it->sd.push_back(l2 ? a.sd_l2 : a.sd_l1);
  }
  return svg_line_plot(series, l2 ? "Frobenius error" : "Entrywise L1 error", "d", l2 ? "L2 error" : "L1 error");
}

inline std::string concentration_heat_map(const std::vector<ConcentrationCell>& cells) {
  std::vector<double> Ts, rs;
  for (const auto& c : cells) {
    if (std::find(Ts.begin(), Ts.end(), c.T) == Ts.end()) Ts.push_back(c.T);
    if (std::find(rs.begin(), rs.end(), c.r) == rs.end()) rs.push_back(c.r);
  }
  Matrix v = Matrix::Zero(static_cast<Index>(Ts.size()), static_cast<Index>(rs.size()));
  for (const auto& c : cells) {
    const auto i = std::find(Ts.begin(), Ts.end(), c.T) - Ts.begin();
    const auto j = std::find(rs.begin(), rs.end(), c.r) - rs.begin();
    v(i, j) = c.frequency;
  }
  return svg_heat_map(Ts, rs, v, "Deviation frequency", "T", "r");
}

}  // namespace sparselab
