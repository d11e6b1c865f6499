// Copyright 2026 The FFD Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Report files for an evaluation: report.json (all EvalReport fields plus
// the reproducibility context), det.csv (threshold,fpr,fnr) and det.svg (DET
// plot on normal-deviate axes).

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "ffd/embedstore.hpp"
#include "ffd/error.hpp"
#include "ffd/metrics.hpp"

namespace ffd::report {

using json = nlohmann::json;

/// Shortest round-trip decimal form; "inf" / "-inf" / "nan" otherwise.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_number(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(), Errc::schema, "bad number '" + s + "' in CSV");
  return v;
}

/// What produced a report; carried into every emitted file.
struct ReportContext {
  std::string experiment = "evaluation";
  std::string mode;
  std::uint64_t seed = 0;
  json config = json::object();
  json extra = json::object();
};

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json threshold_json(double t) { return std::isfinite(t) ? json(t) : json("inf"); }

inline json to_json(const metrics::OperatingPoint& op) {
  return json{{"fpr_target", op.fpr_target},
              {"fnr", op.fnr},
              {"fpr", op.fpr},
              {"threshold", threshold_json(op.threshold)},
              {"reject_all", op.reject_all}};
}

inline json to_json(const metrics::ConfusionMetrics& m) {
  return json{{"threshold", threshold_json(m.threshold)},
              {"tp", m.tp},
              {"fn", m.fn},
              {"tn", m.tn},
              {"fp", m.fp},
              {"sensitivity", optional_json(m.sensitivity)},
              {"specificity", optional_json(m.specificity)},
              {"precision", optional_json(m.precision)},
              {"f1", optional_json(m.f1)},
              {"accuracy", optional_json(m.accuracy)}};
}

inline json to_json(const metrics::EvalReport& r, const ReportContext& ctx) {
  return json{{"experiment", ctx.experiment},
              {"mode", ctx.mode},
              {"seed", ctx.seed},
              {"config", ctx.config},
              {"positive_class", "fit"},
              {"acceptance_rule", "score >= threshold"},
              {"positives", r.positives},
              {"negatives", r.negatives},
              {"eer", r.eer},
              {"eer_threshold", threshold_json(r.eer_threshold)},
              {"fnr_at", {{"fnr10", to_json(r.fnr10)}, {"fnr20", to_json(r.fnr20)}, {"fnr100", to_json(r.fnr100)}}},
              {"decision_threshold", r.decision_threshold},
              {"confusion",
               {{"at_eer_threshold", to_json(r.at_eer_threshold)},
                {"at_decision_threshold", to_json(r.at_decision_threshold)}}},
              {"det_points", r.det.points.size()},
              {"extra", ctx.extra}};
}

inline std::string provenance_line(const ReportContext& ctx) {
  return json{{"experiment", ctx.experiment}, {"mode", ctx.mode}, {"seed", ctx.seed}, {"config", ctx.config}}.dump();
}

/// Leading '#' lines carry the run context; the header row follows.
inline std::string det_csv(const metrics::DetCurve& curve, const ReportContext& ctx) {
  std::string out = "# seed=" + std::to_string(ctx.seed) + "\n# context=" + provenance_line(ctx) + "\n";
  out += "threshold,fpr,fnr\n";
  for (const metrics::DetPoint& p : curve.points) {
    out += format_number(p.threshold) + "," + format_number(p.fpr) + "," + format_number(p.fnr) + "\n";
  }
  return out;
}

struct CsvCurve {
  std::vector<std::string> comments;
  metrics::DetCurve curve;
};

inline CsvCurve read_det_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  CsvCurve out;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.front() == '#') {
      out.comments.push_back(line.substr(1));
      continue;
    }
    if (!header_seen) {
      require(line == "threshold,fpr,fnr", Errc::schema, path.string() + ": unexpected header '" + line + "'");
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string a, b, c;
    require(std::getline(ss, a, ',') && std::getline(ss, b, ',') && std::getline(ss, c), Errc::schema,
            path.string() + ": malformed row '" + line + "'");
    out.curve.points.push_back({parse_number(a), parse_number(b), parse_number(c)});
  }
  require(header_seen, Errc::schema, path.string() + ": missing header");
  return out;
}

/// Normal deviate of p.
inline double probit(double p) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p); }

inline std::string det_svg(const metrics::DetCurve& curve, const std::string& title, const std::string& comment) {
  constexpr double kLo = 0.001;
  constexpr double kHi = 0.99;
  constexpr double kSize = 420.0;
  constexpr double kMargin = 60.0;
  const double lo = probit(kLo);
  const double hi = probit(kHi);
  auto axis = [&](double rate) { return (probit(std::clamp(rate, kLo, kHi)) - lo) / (hi - lo) * kSize; };
  auto px = [&](double fpr) { return kMargin + axis(fpr); };
  auto py = [&](double fnr) { return kMargin + kSize - axis(fnr); };

  std::ostringstream svg;
  svg.precision(6);
  std::string safe_comment = comment;
  for (std::size_t pos; (pos = safe_comment.find("--")) != std::string::npos;) safe_comment.replace(pos, 2, "- -");
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<!-- " << safe_comment << " -->\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize + 2 * kMargin << "\" height=\""
      << kSize + 2 * kMargin << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  svg << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kSize << "\" height=\"" << kSize
      << "\" fill=\"white\" stroke=\"black\"/>\n";
  for (double tick : {0.001, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 0.95, 0.99}) {
    const double x = px(tick);
    const double y = py(tick);
    svg << "<line x1=\"" << x << "\" y1=\"" << kMargin << "\" x2=\"" << x << "\" y2=\"" << kMargin + kSize
        << "\" stroke=\"#ddd\"/>\n";
    svg << "<line x1=\"" << kMargin << "\" y1=\"" << y << "\" x2=\"" << kMargin + kSize << "\" y2=\"" << y
        << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << x << "\" y=\"" << kMargin + kSize + 14 << "\" text-anchor=\"middle\">" << tick * 100
        << "</text>\n";
    svg << "<text x=\"" << kMargin - 6 << "\" y=\"" << y + 3 << "\" text-anchor=\"end\">" << tick * 100
        << "</text>\n";
  }
  svg << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
  for (const metrics::DetPoint& p : curve.points) svg << px(p.fpr) << ',' << py(p.fnr) << ' ';
  svg << "\"/>\n";
  svg << "<text x=\"" << kMargin + kSize / 2 << "\" y=\"" << kMargin + kSize + 34
      << "\" text-anchor=\"middle\">FPR (%)</text>\n";
  svg << "<text x=\"16\" y=\"" << kMargin + kSize / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << kMargin + kSize / 2 << ")\">FNR (%)</text>\n";
  svg << "<text x=\"" << kMargin + kSize / 2 << "\" y=\"" << kMargin - 16 << "\" text-anchor=\"middle\">" << title
      << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

struct EmittedFiles {
  std::filesystem::path report;
  std::filesystem::path csv;
  std::filesystem::path svg;
};

inline void create_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    fail(Errc::io, "cannot create output directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  }
}

/// Writes report.json, det.csv and (optionally) det.svg into `dir`.
/// Output depends only on the arguments.
inline EmittedFiles emit_report(const metrics::EvalReport& r, const ReportContext& ctx,
                                const std::filesystem::path& dir, bool with_svg = true) {
  create_output_dir(dir);
  EmittedFiles files{dir / "report.json", dir / "det.csv", {}};
  embedstore::detail::write_atomically(files.report, to_json(r, ctx).dump(2) + "\n");
  embedstore::detail::write_atomically(files.csv, det_csv(r.det, ctx));
  if (with_svg) {
    files.svg = dir / "det.svg";
    embedstore::detail::write_atomically(files.svg, det_svg(r.det, ctx.experiment, provenance_line(ctx)));
  }
  return files;
}

/// Re-renders det.svg from an existing det.csv without recomputation. When
/// the CSV carries its context line the output matches the original render.
inline std::filesystem::path rerender_svg(const std::filesystem::path& dir) {
  const CsvCurve csv = read_det_csv(dir / "det.csv");
  std::string title = dir.filename().string();
  std::string comment;
  constexpr std::string_view kContext = " context=";
  for (const std::string& c : csv.comments) {
    if (!c.starts_with(kContext)) continue;
    comment = c.substr(kContext.size());
    const json ctx = json::parse(comment, nullptr, false);
    if (ctx.is_object() && ctx.contains("experiment") && ctx["experiment"].is_string()) {
      title = ctx["experiment"].get<std::string>();
    }
  }
  const std::filesystem::path out = dir / "det.svg";
  embedstore::detail::write_atomically(out, det_svg(csv.curve, title, comment));
  return out;
}

}  // namespace ffd::report
