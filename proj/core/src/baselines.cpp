#include "docsim/baselines.hpp"

#include <algorithm>

namespace docsim {

Mat copypaste_predict(const Page& ref_page, const Page& near_page, const Mat& near_labels) {
  if (near_labels.rows < static_cast<int>(near_page.boxes.size()))
    throw ShapeError("copypaste_predict: label matrix smaller than near page");
  Mat out(static_cast<int>(ref_page.boxes.size()), near_labels.cols);
  std::vector<std::optional<int>> matches = overlay_matches(ref_page, near_page);
  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (!matches[i]) continue;
    int j = *matches[i];
    for (int c = 0; c < near_labels.cols; ++c)
      out.at(static_cast<int>(i), c) = near_labels.at(j, c);
  }
  return out;
}

std::set<int> page_class_set(const Page& page) {
  std::set<int> classes;
  for (const WordBox& b : page.boxes) classes.insert(b.labels.begin(), b.labels.end());
  return classes;
}

void oracle_hit_counts(const Page& ref_page, const std::set<int>& near_classes, long* hits,
                       long* annotated) {
  for (const WordBox& b : ref_page.boxes) {
    if (b.labels.empty()) continue;
    ++*annotated;
    bool all_present = std::all_of(b.labels.begin(), b.labels.end(), [&](int c) {
      return near_classes.count(c) > 0;
    });
    if (all_present) ++*hits;
  }
}

std::optional<double> oracle_hits(const Page& ref_page, const Page& near_page) {
  long hits = 0, annotated = 0;
  oracle_hit_counts(ref_page, page_class_set(near_page), &hits, &annotated);
  if (annotated == 0) return std::nullopt;
  return static_cast<double>(hits) / static_cast<double>(annotated);
}

}  // namespace docsim
