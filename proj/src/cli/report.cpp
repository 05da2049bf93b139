#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cli_internal.hpp"
#include "relprop/csv.hpp"
#include "relprop/error.hpp"

namespace relprop::cli {
namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 190, kTop = 40, kBottom = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};

std::string xml_escape(std::string_view s) {
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

// Fixed precision keeps the SVG byte-stable and readable.
std::string coord(double v) { return fmt::format("{:.2f}", v); }

}  // namespace

std::string format_number(double value) { return fmt::format("{}", value); }

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.close();
  if (!out) throw std::runtime_error("writing '" + path.string() + "' failed");
}

void write_json(const fs::path& path, const json& value) {
  write_text(path, value.dump(2) + "\n");
}

CsvWriter::CsvWriter(std::vector<std::string> header) : width_(header.size()) {
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != width_) throw std::logic_error("CSV row width does not match header");
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) text_ += ',';
    text_ += csv::escape(fields[i]);
  }
  text_ += '\n';
}

std::string line_chart_svg(const std::string& title, const std::vector<Series>& series,
                           std::pair<double, double> x_range, std::pair<double, double> y_range,
                           const std::string& x_label, const std::string& y_label) {
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) {
    return kLeft + pw * (x - x_range.first) / (x_range.second - x_range.first);
  };
  auto sy = [&](double y) {
    return kTop + ph * (1.0 - (y - y_range.first) / (y_range.second - y_range.first));
  };

  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
      "viewBox=\"0 0 {} {}\" font-family=\"sans-serif\" font-size=\"12\">\n",
      kWidth, kHeight, kWidth, kHeight);
  s += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", kWidth, kHeight);
  s += fmt::format("<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                   coord(kLeft + pw / 2), xml_escape(title));

  // Axes with five ticks each.
  s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n",
                   coord(kLeft), coord(kTop + ph), coord(kLeft + pw));
  s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n",
                   coord(kLeft), coord(kTop), coord(kTop + ph));
  for (int i = 0; i <= 4; ++i) {
    const double xv = x_range.first + (x_range.second - x_range.first) * i / 4.0;
    const double yv = y_range.first + (y_range.second - y_range.first) * i / 4.0;
    s += fmt::format(
        "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>"
        "<text x=\"{0}\" y=\"{3}\" text-anchor=\"middle\">{4}</text>\n",
        coord(sx(xv)), coord(kTop + ph), coord(kTop + ph + 5), coord(kTop + ph + 20),
        format_number(xv));
    s += fmt::format(
        "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>"
        "<text x=\"{3}\" y=\"{4}\" text-anchor=\"end\">{5}</text>\n",
        coord(kLeft - 5), coord(sy(yv)), coord(kLeft), coord(kLeft - 8), coord(sy(yv) + 4),
        format_number(yv));
  }
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                   coord(kLeft + pw / 2), coord(kHeight - 15), xml_escape(x_label));
  s += fmt::format(
      "<text x=\"18\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0})\">{1}"
      "</text>\n",
      coord(kTop + ph / 2), xml_escape(y_label));

  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    std::string pts;
    for (const auto& [x, y] : series[k].points) {
      if (!pts.empty()) pts += ' ';
      pts += coord(sx(x)) + "," + coord(sy(y));
    }
    s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n",
                     color, pts);
    const double ly = kTop + 10 + 20.0 * static_cast<double>(k);
    s += fmt::format(
        "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/>"
        "<text x=\"{4}\" y=\"{5}\">{6}</text>\n",
        coord(kLeft + pw + 12), coord(ly), coord(kLeft + pw + 32), color,
        coord(kLeft + pw + 38), coord(ly + 4), xml_escape(series[k].name));
  }
  s += "</svg>\n";
  return s;
}

std::string heatmap_svg(const std::string& title, const std::vector<std::string>& labels,
                        const std::vector<double>& values) {
  const std::size_t n = labels.size();
  if (values.size() != n * n) throw std::logic_error("heatmap needs an n x n matrix");
  const double cell = std::clamp(360.0 / static_cast<double>(std::max<std::size_t>(n, 1)), 8.0, 48.0);
  const double left = 140, top = 50;
  const double width = left + cell * static_cast<double>(n) + 90;
  const double height = top + cell * static_cast<double>(n) + 20;

  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\" font-family=\"sans-serif\" font-size=\"11\">\n",
      coord(width), coord(height));
  s += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", coord(width),
                   coord(height));
  s += fmt::format("<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                   coord(width / 2), xml_escape(title));
  // Diverging blue-white-red scale.
  auto color = [](double v) {
    v = std::clamp(v, -1.0, 1.0);
    const int fade = static_cast<int>(std::lround(255.0 * (1.0 - std::fabs(v))));
    return v >= 0 ? fmt::format("rgb(255,{0},{0})", fade) : fmt::format("rgb({0},{0},255)", fade);
  };
  for (std::size_t r = 0; r < n; ++r) {
    const double y = top + cell * static_cast<double>(r);
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", coord(left - 6),
                     coord(y + cell / 2 + 4), xml_escape(labels[r]));
    for (std::size_t c = 0; c < n; ++c) {
      const double v = values[r * n + c];
      s += fmt::format(
          "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"><title>{} / {}: {}"
          "</title></rect>\n",
          coord(left + cell * static_cast<double>(c)), coord(y), coord(cell), coord(cell),
          color(v), xml_escape(labels[r]), xml_escape(labels[c]), format_number(v));
    }
  }
  const double lx = left + cell * static_cast<double>(n) + 20;
  for (int i = 0; i <= 4; ++i) {
    const double v = 1.0 - 0.5 * i;
    const double y = top + 20.0 * i;
    s += fmt::format(
        "<rect x=\"{}\" y=\"{}\" width=\"14\" height=\"14\" fill=\"{}\"/>"
        "<text x=\"{}\" y=\"{}\">{}</text>\n",
        coord(lx), coord(y), color(v), coord(lx + 20), coord(y + 11), format_number(v));
  }
  s += "</svg>\n";
  return s;
}

}  // namespace relprop::cli
