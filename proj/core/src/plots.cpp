// Static SVG figures for the analysis outputs. No plotting dependency; the
// markup is small and fixed-precision so outputs are byte-stable.

#include <algorithm>
#include <sstream>

#include "conpare/error.hpp"
#include "conpare/pipeline.hpp"
#include "json_codec.hpp"

namespace conpare {

namespace {

std::string num(double v) { return format_double(v, 2); }

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
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

const char* syntax_color(std::string_view syntax) {
  return syntax == "appositive" ? "#e08a00" : "#7b3fa0";
}

void text(std::ostringstream& svg, double x, double y, std::string_view s,
          const char* anchor = "start", int size = 12) {
  svg << "<text x=\"" << num(x) << "\" y=\"" << num(y)
      << "\" font-family=\"sans-serif\" font-size=\"" << size
      << "\" text-anchor=\"" << anchor << "\">" << escape(s) << "</text>\n";
}

void line(std::ostringstream& svg, double x1, double y1, double x2, double y2,
          const char* stroke, double width = 1.0) {
  svg << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\""
      << num(x2) << "\" y2=\"" << num(y2) << "\" stroke=\"" << stroke
      << "\" stroke-width=\"" << num(width) << "\"/>\n";
}

Json parse(const std::string& text, const char* what) {
  return parse_json(text, ErrorCode::kSchemaMismatch, what);
}

void provenance_comment(std::ostringstream& svg, const Json& doc) {
  if (!doc.contains("provenance")) return;
  const Json& p = doc["provenance"];
  svg << "<!-- config=" << escape(p.value("config_hash", ""))
      << " constraints=" << escape(p.value("constraint_hash", ""))
      << " model=" << escape(p.value("model", "")) << " -->\n";
}

}  // namespace

std::string render_bounds_svg(const std::string& bounds_json) {
  const Json doc = parse(bounds_json, "bounds");
  const Json& variants = doc.at("variants");
  const double left = 190.0;
  const double width = 400.0;
  const double row_h = 34.0;
  const double top = 40.0;
  const double height = top + row_h * static_cast<double>(variants.size()) + 40.0;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\""
      << num(height) << "\" viewBox=\"0 0 640 " << num(height) << "\">\n";
  provenance_comment(svg, doc);
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  text(svg, 320, 20, "P@1 of combined prompts against combinability bounds",
       "middle", 14);

  const double axis_y = top + row_h * static_cast<double>(variants.size()) + 4;
  line(svg, left, axis_y, left + width, axis_y, "#333");
  for (int i = 0; i <= 10; i += 2) {
    const double x = left + width * i / 10.0;
    line(svg, x, axis_y, x, axis_y + 4, "#333");
    text(svg, x, axis_y + 18, format_double(i / 10.0, 1), "middle", 10);
  }

  double y = top;
  for (const auto& v : variants) {
    const std::string syntax = v.at("syntax").get<std::string>();
    const Json& t = v.at("total");
    const double lo = t.at("lower").get<double>();
    const double hi = t.at("upper").get<double>();
    const double obs = t.at("observed").get<double>();
    text(svg, left - 10, y + 18,
         syntax + " / " + v.at("strategy").get<std::string>(), "end");
    svg << "<rect x=\"" << num(left + width * lo) << "\" y=\"" << num(y + 8)
        << "\" width=\"" << num(std::max(1.0, width * (hi - lo)))
        << "\" height=\"14\" fill=\"#d9d9d9\" stroke=\"black\"/>\n";
    line(svg, left + width * obs, y + 3, left + width * obs, y + 27,
         syntax_color(syntax), 3.0);
    y += row_h;
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string render_entropy_svg(const std::string& entropy_json) {
  const Json doc = parse(entropy_json, "entropy grid");
  const Json& cells = doc.at("cells");

  std::vector<std::string> syntaxes;
  std::vector<std::string> strategies;
  double y_max = 0.0;
  for (const auto& c : cells) {
    const auto s = c.at("syntax").get<std::string>();
    const auto g = c.at("strategy").get<std::string>();
    if (std::find(syntaxes.begin(), syntaxes.end(), s) == syntaxes.end()) {
      syntaxes.push_back(s);
    }
    if (std::find(strategies.begin(), strategies.end(), g) == strategies.end()) {
      strategies.push_back(g);
    }
    for (const auto& p : c.at("points")) {
      if (!p.at("mean_entropy").is_null()) {
        y_max = std::max(y_max, p.at("mean_entropy").get<double>());
      }
    }
  }
  y_max = y_max <= 0.0 ? 1.0 : y_max * 1.1;

  const double pw = 260.0;
  const double ph = 180.0;
  const double margin = 50.0;
  const double w = margin + pw * static_cast<double>(std::max<std::size_t>(1, syntaxes.size())) + 20;
  const double h = 40 + ph * static_cast<double>(std::max<std::size_t>(1, strategies.size())) + 20;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w)
      << "\" height=\"" << num(h) << "\" viewBox=\"0 0 " << num(w) << ' '
      << num(h) << "\">\n";
  provenance_comment(svg, doc);
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  text(svg, w / 2, 20,
       "Mean entropy (bits) on the known subset, n=" +
           std::to_string(doc.at("n_known").get<std::size_t>()),
       "middle", 14);

  for (const auto& c : cells) {
    const auto s = c.at("syntax").get<std::string>();
    const auto g = c.at("strategy").get<std::string>();
    const auto col = static_cast<double>(
        std::find(syntaxes.begin(), syntaxes.end(), s) - syntaxes.begin());
    const auto row = static_cast<double>(
        std::find(strategies.begin(), strategies.end(), g) - strategies.begin());
    const double x0 = margin + col * pw;
    const double y0 = 40 + row * ph;
    const double iw = pw - 40;
    const double ih = ph - 50;
    text(svg, x0 + iw / 2, y0 + 12, s + " / " + g, "middle");
    line(svg, x0, y0 + 20 + ih, x0 + iw, y0 + 20 + ih, "#333");
    line(svg, x0, y0 + 20, x0, y0 + 20 + ih, "#333");
    text(svg, x0 - 4, y0 + 24, format_double(y_max, 2), "end", 9);
    text(svg, x0 - 4, y0 + 20 + ih, "0", "end", 9);

    const Json& points = c.at("points");
    const double step = points.size() > 1 ? iw / static_cast<double>(points.size() - 1) : 0;
    std::ostringstream poly;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double x = x0 + step * static_cast<double>(i);
      text(svg, x, y0 + 34 + ih, points[i].at("info").get<std::string>(),
           "middle", 9);
      const Json& m = points[i].at("mean_entropy");
      if (m.is_null()) continue;
      const double y = y0 + 20 + ih * (1.0 - m.get<double>() / y_max);
      poly << num(x) << ',' << num(y) << ' ';
      svg << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y)
          << "\" r=\"3\" fill=\"" << syntax_color(s) << "\"/>\n";
    }
    std::string pts = poly.str();
    if (!pts.empty()) {
      pts.pop_back();
      svg << "<polyline fill=\"none\" stroke=\"" << syntax_color(s)
          << "\" stroke-width=\"2\" points=\"" << pts << "\"/>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace conpare
