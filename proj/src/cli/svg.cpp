#include "cmg/cli/svg.hpp"

#include "cmg/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace cmg::cli {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string xml_escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string histogram_svg(const std::map<std::size_t, std::size_t>& hist, std::string_view title,
                          std::string_view x_label) {
  const double width = 640, height = 360, left = 60, right = 20, top = 40, bottom = 50;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  const std::size_t max_x = hist.empty() ? 1 : std::max<std::size_t>(hist.rbegin()->first, 1);
  std::size_t max_y = 1;
  for (const auto& [x, y] : hist) max_y = std::max(max_y, y);
  const double bar_w = plot_w / static_cast<double>(max_x + 1);

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"16\">"
    << xml_escape(title) << "</text>\n";
  for (const auto& [x, y] : hist) {
    const double h = plot_h * static_cast<double>(y) / static_cast<double>(max_y);
    s << "<rect class=\"bar\" x=\"" << num(left + bar_w * static_cast<double>(x)) << "\" y=\""
      << num(top + plot_h - h) << "\" width=\"" << num(std::max(bar_w, 0.5)) << "\" height=\"" << num(h)
      << "\" fill=\"steelblue\"><title>" << x << ": " << y << "</title></rect>\n";
  }
  s << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
    << top + plot_h << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
    << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << left << "\" y=\"" << top + plot_h + 18
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">0</text>\n";
  s << "<text x=\"" << num(left + bar_w * (static_cast<double>(max_x) + 0.5)) << "\" y=\"" << top + plot_h + 18
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << max_x << "</text>\n";
  s << "<text x=\"" << left - 6 << "\" y=\"" << top + 4
    << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << max_y << "</text>\n";
  s << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(x_label)
    << "</text>\n";
  s << "<text x=\"16\" y=\"" << top + plot_h / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"12\" transform=\"rotate(-90 16 "
    << top + plot_h / 2 << ")\">frequency</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string attention_svg(const TokenSeq& source, const TokenSeq& target, const seq2seq::Mat& alpha) {
  if (alpha.rows() != static_cast<seq2seq::Index>(target.size()) ||
      alpha.cols() != static_cast<seq2seq::Index>(source.size())) {
    throw DimensionError("attention_svg: alpha shape does not match the token lists");
  }
  const double cell = 24, left = 110, top = 110;
  const double width = left + cell * static_cast<double>(source.size()) + 20;
  const double height = top + cell * static_cast<double>(target.size()) + 20;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t j = 0; j < source.size(); ++j) {
    const double x = left + cell * (static_cast<double>(j) + 0.5);
    s << "<text x=\"" << x << "\" y=\"" << top - 6 << "\" font-family=\"monospace\" font-size=\"11\" "
      << "transform=\"rotate(-60 " << x << ' ' << top - 6 << ")\">" << xml_escape(source[j]) << "</text>\n";
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    s << "<text x=\"" << left - 6 << "\" y=\"" << top + cell * (static_cast<double>(i) + 0.5) + 4
      << "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"11\">" << xml_escape(target[i])
      << "</text>\n";
    for (std::size_t j = 0; j < source.size(); ++j) {
      const double a = std::clamp(alpha(static_cast<seq2seq::Index>(i), static_cast<seq2seq::Index>(j)), 0.0, 1.0);
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - a)));
      s << "<rect class=\"cell\" x=\"" << left + cell * static_cast<double>(j) << "\" y=\""
        << top + cell * static_cast<double>(i) << "\" width=\"" << cell << "\" height=\"" << cell
        << "\" fill=\"rgb(" << shade << ',' << shade << ',' << shade << ")\"><title>" << num(a)
        << "</title></rect>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

std::string attention_json(const TokenSeq& source, const TokenSeq& target, const seq2seq::Mat& alpha) {
  nlohmann::ordered_json j;
  j["source"] = source;
  j["target"] = target;
  auto rows = nlohmann::ordered_json::array();
  for (seq2seq::Index i = 0; i < alpha.rows(); ++i) {
    auto row = nlohmann::ordered_json::array();
    for (seq2seq::Index k = 0; k < alpha.cols(); ++k) row.push_back(alpha(i, k));
    rows.push_back(std::move(row));
  }
  j["alpha"] = std::move(rows);
  return j.dump();
}

}  // namespace cmg::cli
