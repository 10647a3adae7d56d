#include "docsim/render.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace docsim {

namespace {

constexpr double kWidth = 1000.0;
constexpr double kHeight = 1414.0;

const char* kGreen = "#2e8b57";
const char* kYellow = "#e8c547";
const char* kBlue = "#3b6fd4";
const char* kRed = "#d43b3b";

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

void open_svg(std::ostringstream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(kWidth) << "\" height=\""
     << fmt(kHeight + 60.0) << "\" viewBox=\"0 0 " << fmt(kWidth) << " "
     << fmt(kHeight + 60.0) << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << fmt(kWidth) << "\" height=\"" << fmt(kHeight)
     << "\" fill=\"#ffffff\" stroke=\"#cccccc\"/>\n";
  os << "<text x=\"8\" y=\"" << fmt(kHeight + 20.0) << "\" font-size=\"16\" fill=\"#000000\">"
     << escape_xml(title) << "</text>\n";
}

void box_rect(std::ostringstream& os, const WordBox& b, const char* fill,
              const std::string& title) {
  os << "<rect x=\"" << fmt(b.left * kWidth) << "\" y=\"" << fmt(b.top * kHeight)
     << "\" width=\"" << fmt(b.width() * kWidth) << "\" height=\"" << fmt(b.height() * kHeight)
     << "\" fill=\"" << fill << "\" fill-opacity=\"0.55\" stroke=\"#444444\" stroke-width=\"0.6\">"
     << "<title>" << escape_xml(title) << "</title></rect>\n";
}

}  // namespace

std::string page_svg(const Page& page, const Mat& predictions, const Mat& truth) {
  int n = static_cast<int>(page.boxes.size());
  if (predictions.rows != n || truth.rows != n || predictions.cols != truth.cols)
    throw ShapeError("page_svg: prediction/truth shapes do not match the page");

  std::ostringstream os;
  open_svg(os, "page " + page.doc_id + " #" + std::to_string(page.page_no));
  for (int i = 0; i < n; ++i) {
    bool miss = false, extra = false, tp = false;
    for (int c = 0; c < truth.cols; ++c) {
      bool p = predictions.at(i, c) > 0.5;
      bool t = truth.at(i, c) > 0.5;
      if (t && !p) miss = true;
      else if (p && !t) extra = true;
      else if (p && t) tp = true;
    }
    const char* fill = miss ? kRed : extra ? kBlue : tp ? kGreen : kYellow;
    box_rect(os, page.boxes[static_cast<std::size_t>(i)], fill,
             page.boxes[static_cast<std::size_t>(i)].text);
  }
  // Legend.
  const char* names[4] = {"true positive", "true negative", "extra", "miss"};
  const char* colors[4] = {kGreen, kYellow, kBlue, kRed};
  for (int k = 0; k < 4; ++k) {
    double x = 8.0 + 240.0 * k;
    os << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(kHeight + 32.0)
       << "\" width=\"18\" height=\"18\" fill=\"" << colors[k] << "\"/>\n";
    os << "<text x=\"" << fmt(x + 24.0) << "\" y=\"" << fmt(kHeight + 46.0)
       << "\" font-size=\"14\" fill=\"#000000\">" << names[k] << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void render_page_svg(const Page& page, const Mat& predictions, const Mat& truth,
                     const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open for writing: " + path);
  f << page_svg(page, predictions, truth);
  if (!f) throw ValidationError("write failed: " + path);
}

std::string graph_svg(const Page& page, const NeighborIndex& index) {
  if (index.table.size() != page.boxes.size())
    throw ShapeError("graph_svg: neighbor table does not match the page");
  std::ostringstream os;
  open_svg(os, "neighbor graph " + page.doc_id + " #" + std::to_string(page.page_no));
  for (std::size_t i = 0; i < page.boxes.size(); ++i) {
    const WordBox& a = page.boxes[i];
    for (std::size_t k = 1; k < index.table[i].size(); ++k) {
      int j = index.table[i][k];
      if (j == kNoNeighbor) continue;
      const WordBox& b = page.boxes[static_cast<std::size_t>(j)];
      os << "<line x1=\"" << fmt(a.cx() * kWidth) << "\" y1=\"" << fmt(a.cy() * kHeight)
         << "\" x2=\"" << fmt(b.cx() * kWidth) << "\" y2=\"" << fmt(b.cy() * kHeight)
         << "\" stroke=\"#888888\" stroke-width=\"0.8\"/>\n";
    }
  }
  for (const WordBox& b : page.boxes) box_rect(os, b, "#dddddd", b.text);
  os << "</svg>\n";
  return os.str();
}

void render_graph_svg(const Page& page, const NeighborIndex& index, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open for writing: " + path);
  f << graph_svg(page, index);
  if (!f) throw ValidationError("write failed: " + path);
}

}  // namespace docsim
