#pragma once

// Text outputs: CSV tables, outcome JSON and SVG plots. Numbers are written
// with std::to_chars (shortest round-trip, locale independent) so reruns are
// byte-identical.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "vibes/analysis.hpp"
#include "vibes/core_model.hpp"
#include "vibes/search.hpp"

namespace vibes {

inline std::string format_number(double value) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) return "nan";
  return std::string(buf.data(), end);
}

inline std::string format_fixed(double value, int precision) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::fixed, precision);
  if (ec != std::errc{}) return "nan";
  return std::string(buf.data(), end);
}

inline constexpr std::string_view kBsecCsvHeader = "strategy,evaluator,t_max_seconds,median,p25,p75,n_runs,n_valid_runs";

inline std::string format_bsec_csv(const BsecCurve& curve) {
  std::string out(kBsecCsvHeader);
  out += '\n';
  for (const auto& p : curve.points) {
    out += curve.strategy + ',' + std::string(to_string(curve.evaluator)) + ',' + format_number(p.t_max_seconds) + ',' +
           format_number(p.median) + ',' + format_number(p.p25) + ',' + format_number(p.p75) + ',' +
           std::to_string(p.n_runs) + ',' + std::to_string(p.n_valid_runs) + '\n';
  }
  return out;
}

/// Point rows, then a `# pearson_r=... fraction_a_ge_b=...` summary line.
inline std::string format_correlation_csv(const CorrelationReport& report) {
  std::string out = "backbone_id,metric_a,metric_b\n";
  for (const auto& p : report.points)
    out += p.backbone_id + ',' + format_number(p.metric_a) + ',' + format_number(p.metric_b) + '\n';
  out += "# pearson_r=" + format_number(report.pearson_r) +
         " fraction_a_ge_b=" + format_number(report.fraction_a_ge_b) + '\n';
  return out;
}

inline nlohmann::json outcome_to_json(const SearchOutcome& outcome) {
  nlohmann::json j;
  j["selected"] = outcome.selected ? nlohmann::json(*outcome.selected) : nlohmann::json(nullptr);
  j["k"] = outcome.k;
  j["budget_used_seconds"] = outcome.budget_used_seconds;
  auto& log = j["evaluations"] = nlohmann::json::array();
  for (const auto& e : outcome.evaluations) log.push_back({{"backbone_id", e.backbone_id}, {"val_metric", e.val_metric}});
  return j;
}

// --------------------------------------------------------------------- SVG

struct SvgBaseline {
  std::string label;
  double value = 0.0;
};

struct SvgOptions {
  bool log_x = false;
  int width = 860;
  int height = 520;
  std::string title = "Backbone selection efficiency";
};

namespace detail {

inline std::string xml_escape(std::string_view text) {
  std::string out;
  for (const char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                     "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

}  // namespace detail

/// Median lines over shaded percentile bands, one series per curve, with
/// dashed horizontal baselines.
inline std::string render_bsec_svg(std::span<const BsecCurve> curves, std::span<const SvgBaseline> baselines,
                                   const SvgOptions& opts = {}) {
  const double left = 70, right = 190, top = 40, bottom = 60;
  const double plot_w = opts.width - left - right, plot_h = opts.height - top - bottom;

  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
  double y_min = x_min, y_max = -x_min;
  for (const auto& c : curves)
    for (const auto& p : c.points) {
      x_min = std::min(x_min, p.t_max_seconds), x_max = std::max(x_max, p.t_max_seconds);
      y_min = std::min(y_min, p.p25), y_max = std::max(y_max, p.p75);
    }
  for (const auto& b : baselines) y_min = std::min(y_min, b.value), y_max = std::max(y_max, b.value);
  if (!std::isfinite(x_min)) x_min = 1, x_max = 10;
  if (!std::isfinite(y_min)) y_min = 0, y_max = 1;
  if (x_max <= x_min) x_max = x_min * 2 + 1;
  if (y_max - y_min < 1e-9) y_min -= 0.05, y_max += 0.05;
  const double y_pad = 0.05 * (y_max - y_min);
  y_min -= y_pad, y_max += y_pad;
  const bool log_x = opts.log_x && x_min > 0;

  auto sx = [&](double x) {
    const double f = log_x ? (std::log10(x) - std::log10(x_min)) / (std::log10(x_max) - std::log10(x_min))
                           : (x - x_min) / (x_max - x_min);
    return left + f * plot_w;
  };
  auto sy = [&](double y) { return top + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h; };
  auto pt = [](double x, double y) { return format_fixed(x, 2) + "," + format_fixed(y, 2); };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(opts.width) +
                    "\" height=\"" + std::to_string(opts.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + format_fixed(left + plot_w / 2, 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
         detail::xml_escape(opts.title) + "</text>\n";
  svg += "<rect x=\"" + format_fixed(left, 2) + "\" y=\"" + format_fixed(top, 2) + "\" width=\"" +
         format_fixed(plot_w, 2) + "\" height=\"" + format_fixed(plot_h, 2) + "\" fill=\"none\" stroke=\"#333\"/>\n";

  for (int i = 0; i <= 5; ++i) {
    const double f = i / 5.0;
    const double yv = y_min + f * (y_max - y_min);
    const double xv = log_x ? std::pow(10.0, std::log10(x_min) + f * (std::log10(x_max) - std::log10(x_min)))
                            : x_min + f * (x_max - x_min);
    svg += "<text x=\"" + format_fixed(left - 6, 2) + "\" y=\"" + format_fixed(sy(yv) + 4, 2) +
           "\" text-anchor=\"end\">" + format_fixed(yv, 3) + "</text>\n";
    svg += "<text x=\"" + format_fixed(sx(xv), 2) + "\" y=\"" + format_fixed(top + plot_h + 18, 2) +
           "\" text-anchor=\"middle\">" + format_fixed(xv, 0) + "</text>\n";
  }
  svg += "<text x=\"" + format_fixed(left + plot_w / 2, 2) + "\" y=\"" + format_fixed(opts.height - 18.0, 2) +
         "\" text-anchor=\"middle\">time budget (s)" + std::string(log_x ? ", log scale" : "") + "</text>\n";
  svg += "<text x=\"18\" y=\"" + format_fixed(top + plot_h / 2, 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         format_fixed(top + plot_h / 2, 2) + ")\">test metric of selection</text>\n";

  double legend_y = top + 10;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& c = curves[i];
    const char* color = detail::kPalette[i % detail::kPalette.size()];
    if (!c.points.empty()) {
      std::string band;
      for (const auto& p : c.points) band += pt(sx(p.t_max_seconds), sy(p.p75)) + " ";
      for (auto it = c.points.rbegin(); it != c.points.rend(); ++it) band += pt(sx(it->t_max_seconds), sy(it->p25)) + " ";
      svg += "<polygon points=\"" + band + "\" fill=\"" + color + "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
      std::string line;
      for (const auto& p : c.points) line += pt(sx(p.t_max_seconds), sy(p.median)) + " ";
      svg += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    }
    const std::string label = c.strategy + " / " + std::string(to_string(c.evaluator));
    svg += "<line x1=\"" + format_fixed(left + plot_w + 12, 2) + "\" y1=\"" + format_fixed(legend_y, 2) + "\" x2=\"" +
           format_fixed(left + plot_w + 32, 2) + "\" y2=\"" + format_fixed(legend_y, 2) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + format_fixed(left + plot_w + 36, 2) + "\" y=\"" + format_fixed(legend_y + 4, 2) + "\">" +
           detail::xml_escape(label) + "</text>\n";
    legend_y += 18;
  }
  for (const auto& b : baselines) {
    const double y = sy(b.value);
    svg += "<line x1=\"" + format_fixed(left, 2) + "\" y1=\"" + format_fixed(y, 2) + "\" x2=\"" +
           format_fixed(left + plot_w, 2) + "\" y2=\"" + format_fixed(y, 2) +
           "\" stroke=\"#555\" stroke-dasharray=\"6,4\"/>\n";
    svg += "<text x=\"" + format_fixed(left + plot_w + 12, 2) + "\" y=\"" + format_fixed(y + 4, 2) + "\">" +
           detail::xml_escape(b.label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace vibes
