#include "uasabi/workbench.hpp"

#include "uasabi/error.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdio>

namespace uasabi {
namespace fs = std::filesystem;

namespace {

constexpr double kWidth = 480, kHeight = 360;
constexpr double kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

/// Maps data coordinates onto the plot area.
struct Frame {
  double x0, x1, y0, y1;

  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

std::pair<double, double> padded(double lo, double hi) {
  if (!(hi > lo)) {
    const double c = lo, w = std::max(std::abs(c) * 0.1, 1.0);
    return {c - w, c + w};
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

std::string open_svg(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" + "<text x=\"" + num(kWidth / 2) +
         "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" + escape(title) +
         "</text>\n";
}

std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  std::string s;
  s += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(kWidth - kLeft - kRight) +
       "\" height=\"" + num(kHeight - kTop - kBottom) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = f.x0 + (f.x1 - f.x0) * k / 4.0, yv = f.y0 + (f.y1 - f.y0) * k / 4.0;
    s += "<text x=\"" + num(f.px(xv)) + "\" y=\"" + num(kHeight - kBottom + 16) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" + num(xv) + "</text>\n";
    s += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(f.py(yv) + 3) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" + num(yv) + "</text>\n";
  }
  s += "<text x=\"" + num((kLeft + kWidth - kRight) / 2) + "\" y=\"" + num(kHeight - 12) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + escape(xlabel) + "</text>\n";
  s += "<text x=\"14\" y=\"" + num((kTop + kHeight - kBottom) / 2) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 " +
       num((kTop + kHeight - kBottom) / 2) + ")\">" + escape(ylabel) + "</text>\n";
  return s;
}

std::string polyline(const Frame& f, const Eigen::VectorXd& x, const Eigen::VectorXd& y, const std::string& color) {
  std::string pts;
  for (Eigen::Index i = 0; i < x.size(); ++i) pts += (i ? " " : "") + num(f.px(x(i))) + "," + num(f.py(y(i)));
  return "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
}

std::string line(const Frame& f, double xa, double ya, double xb, double yb, const std::string& style) {
  return "<line x1=\"" + num(f.px(xa)) + "\" y1=\"" + num(f.py(ya)) + "\" x2=\"" + num(f.px(xb)) + "\" y2=\"" +
         num(f.py(yb)) + "\" " + style + "/>\n";
}

std::string safe_name(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) c = '_';
  return out;
}

}  // namespace

std::string ecdf_svg(const std::string& method, const std::string& parameter, const EcdfDifference& c) {
  const auto& b = c.band;
  const double ymax = std::max(b.upper.maxCoeff(), c.difference.cwiseAbs().maxCoeff()) * 1.1 + 1e-12;
  const Frame f{0.0, 1.0, -ymax, ymax};
  std::string s = open_svg(method + ": " + parameter);
  std::string poly;
  for (Eigen::Index k = 0; k < b.grid.size(); ++k) poly += num(f.px(b.grid(k))) + "," + num(f.py(b.upper(k))) + " ";
  for (Eigen::Index k = b.grid.size() - 1; k >= 0; --k)
    poly += num(f.px(b.grid(k))) + "," + num(f.py(b.lower(k))) + (k ? " " : "");
  s += "<polygon points=\"" + poly + "\" fill=\"#d9d9d9\" stroke=\"#a0a0a0\"/>\n";
  s += line(f, 0.0, 0.0, 1.0, 0.0, "stroke=\"#606060\" stroke-dasharray=\"4 3\"");
  s += polyline(f, b.grid, c.difference, c.inside ? "#1f77b4" : "#d62728");
  s += axes(f, "fractional rank", "ECDF difference");
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%s (%.0f%% band, %d ranks)", c.inside ? "inside" : "outside", 100 * b.level,
                b.n_ranks);
  s += "<text x=\"" + num(kWidth - kRight - 4) + "\" y=\"" + num(kTop + 14) +
       "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + buf + "</text>\n";
  return s + "</svg>\n";
}

std::string recovery_svg(const std::string& method, const std::string& parameter, const RecoverySummary& r) {
  if (r.truth.size() == 0) throw EmptySet("recovery plot: no replications");
  const double lo = std::min(r.truth.minCoeff(), (r.median - r.deviation).minCoeff());
  const double hi = std::max(r.truth.maxCoeff(), (r.median + r.deviation).maxCoeff());
  const auto [a, b] = padded(lo, hi);
  const Frame f{a, b, a, b};
  std::string s = open_svg(method + ": " + parameter);
  s += line(f, a, a, b, b, "stroke=\"#606060\" stroke-dasharray=\"4 3\"");
  for (Eigen::Index i = 0; i < r.truth.size(); ++i) {
    s += line(f, r.truth(i), r.median(i) - r.deviation(i), r.truth(i), r.median(i) + r.deviation(i),
              "stroke=\"#1f77b4\" stroke-opacity=\"0.6\"");
    s += "<circle cx=\"" + num(f.px(r.truth(i))) + "\" cy=\"" + num(f.py(r.median(i))) +
         "\" r=\"2.5\" fill=\"#1f77b4\"/>\n";
  }
  s += axes(f, "ground truth", "posterior median");
  return s + "</svg>\n";
}

std::string runtime_svg(const BreakEvenReport& r) {
  if (r.n_runs.empty()) throw EmptySet("runtime plot: no run counts");
  Eigen::VectorXd n(static_cast<Eigen::Index>(r.n_runs.size()));
  for (std::size_t k = 0; k < r.n_runs.size(); ++k) n(static_cast<Eigen::Index>(k)) = r.n_runs[k];
  const double top = std::max(r.ua_cumulative.maxCoeff(), r.epost_cumulative.maxCoeff());
  const Frame f{0.0, std::max(n.maxCoeff(), 1.0), 0.0, top > 0 ? top * 1.1 : 1.0};
  std::string s = open_svg("cumulative wall time");
  s += polyline(f, n, r.ua_cumulative, "#1f77b4");
  s += polyline(f, n, r.epost_cumulative, "#d62728");
  if (r.crossing) s += line(f, *r.crossing, 0.0, *r.crossing, f.y1, "stroke=\"#606060\" stroke-dasharray=\"4 3\"");
  s += "<text x=\"" + num(kLeft + 8) + "\" y=\"" + num(kTop + 14) +
       "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#1f77b4\">UA-SABI</text>\n";
  s += "<text x=\"" + num(kLeft + 8) + "\" y=\"" + num(kTop + 28) +
       "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#d62728\">E-Post</text>\n";
  s += axes(f, "inference runs", "seconds");
  return s + "</svg>\n";
}

std::vector<fs::path> emit_plots(const fs::path& study_dir, const fs::path& out_dir) {
  if (!fs::is_directory(study_dir)) throw IoError("plot: '" + study_dir.string() + "' is not a directory");
  std::vector<fs::path> verdicts;
  for (const auto& e : fs::directory_iterator(study_dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("verdict_", 0) == 0 && e.path().extension() == ".json") verdicts.push_back(e.path());
  }
  std::sort(verdicts.begin(), verdicts.end());
  if (verdicts.empty()) throw InsufficientData("plot: no verdict files in '" + study_dir.string() + "'");

  std::vector<fs::path> written;
  for (const auto& vpath : verdicts) {
    const std::string stem = vpath.stem().string();
    const std::string method = stem.substr(std::string("verdict_").size());
    const auto records = read_verdict_json(vpath);
    if (records.empty()) throw InsufficientData("plot: " + vpath.string() + " holds no verdicts");
    const RankExperiment ranks = read_rank_csv(study_dir / ("ranks_" + method + ".csv"), method);
    std::vector<std::string> rec_names;
    const auto recovery = read_recovery_csv(study_dir / ("recovery_" + method + ".csv"), rec_names);
    if (static_cast<int>(records.size()) != ranks.n_params() || rec_names.size() != records.size())
      throw SchemaError("plot: artifacts of '" + method + "' disagree on the parameter count");
    for (std::size_t p = 0; p < records.size(); ++p) {
      const auto& v = records[p];
      const EcdfBand band = band_with_half_width(ranks.n_replications(), ranks.L, v.level, v.half_width);
      const EcdfDifference curve = ecdf_difference(ranks.ranks[p], band);
      const fs::path e = out_dir / ("ecdf_" + safe_name(method) + "_" + safe_name(v.parameter) + ".svg");
      write_text(e, ecdf_svg(method, v.parameter, curve));
      written.push_back(e);
      const fs::path r = out_dir / ("recovery_" + safe_name(method) + "_" + safe_name(v.parameter) + ".svg");
      write_text(r, recovery_svg(method, v.parameter, recovery[p]));
      written.push_back(r);
    }
  }
  if (fs::exists(study_dir / "breakeven.csv")) {
    const fs::path rt = out_dir / "runtime.svg";
    write_text(rt, runtime_svg(read_breakeven_csv(study_dir / "breakeven.csv")));
    written.push_back(rt);
  }
  return written;
}

}  // namespace uasabi
