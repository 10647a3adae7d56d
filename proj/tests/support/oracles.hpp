#pragma once

// Brute-force reference implementations used as oracles. These deliberately
// re-derive results with the plainest possible loops, independent of the
// library code paths they check.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "docsim/corpus.hpp"
#include "docsim/features.hpp"
#include "docsim/geometry.hpp"

namespace oracles {

using docsim::Mat;
using docsim::Page;
using docsim::Rng;
using docsim::WordBox;

inline Page random_page(Rng& rng, int boxes, int class_count = 10) {
  Page p;
  p.doc_id = "rnd" + std::to_string(rng.next_below(1000000));
  static const char* words[] = {"alpha", "beta",  "gamma", "delta", "total", "123.45",
                                "2024",  "notes", "x9",    "sum",   "id77",  "q"};
  for (int i = 0; i < boxes; ++i) {
    WordBox b;
    b.text = words[rng.next_below(12)];
    b.left = rng.uniform(0.0, 0.9);
    b.top = rng.uniform(0.0, 0.92);
    b.right = b.left + rng.uniform(0.02, 0.09);
    b.bottom = b.top + rng.uniform(0.015, 0.05);
    if (rng.next_below(4) == 0) b.labels.insert(static_cast<int>(rng.next_below(class_count)));
    if (rng.next_below(10) == 0) b.labels.insert(static_cast<int>(rng.next_below(class_count)));
    p.boxes.push_back(b);
  }
  return p;
}

// Neighbor assignment: quadrant by dominant center offset (ties horizontal),
// then the n closest per edge by center distance, ties to the lower index.
inline std::vector<std::vector<int>> bf_neighbors(const Page& page, int n) {
  int count = static_cast<int>(page.boxes.size());
  std::vector<std::vector<int>> table(
      static_cast<std::size_t>(count),
      std::vector<int>(static_cast<std::size_t>(4 * n + 1), docsim::kNoNeighbor));
  for (int i = 0; i < count; ++i) {
    table[static_cast<std::size_t>(i)][0] = i;
    for (int e = 0; e < 4; ++e) {
      std::vector<std::pair<double, int>> cands;
      for (int j = 0; j < count; ++j) {
        if (j == i) continue;
        double dx = page.boxes[static_cast<std::size_t>(j)].cx() -
                    page.boxes[static_cast<std::size_t>(i)].cx();
        double dy = page.boxes[static_cast<std::size_t>(j)].cy() -
                    page.boxes[static_cast<std::size_t>(i)].cy();
        int edge = std::abs(dx) >= std::abs(dy) ? (dx >= 0.0 ? 1 : 0) : (dy >= 0.0 ? 3 : 2);
        if (edge == e) cands.emplace_back(dx * dx + dy * dy, j);
      }
      std::sort(cands.begin(), cands.end());
      for (int k = 0; k < n && k < static_cast<int>(cands.size()); ++k)
        table[static_cast<std::size_t>(i)][static_cast<std::size_t>(1 + e * n + k)] =
            cands[static_cast<std::size_t>(k)].second;
    }
  }
  return table;
}

inline std::vector<std::vector<int>> bf_field_of_view(const Page& ref, const Page& near, int k,
                                                      double cap) {
  std::vector<std::vector<int>> out(ref.boxes.size(),
                                    std::vector<int>(static_cast<std::size_t>(k),
                                                     docsim::kNoNeighbor));
  for (std::size_t i = 0; i < ref.boxes.size(); ++i) {
    std::vector<std::pair<double, int>> cands;
    for (std::size_t j = 0; j < near.boxes.size(); ++j) {
      double dx = near.boxes[j].cx() - ref.boxes[i].cx();
      double dy = near.boxes[j].cy() - ref.boxes[i].cy();
      double d = std::sqrt(dx * dx + dy * dy);
      if (d <= cap) cands.emplace_back(d, static_cast<int>(j));
    }
    std::sort(cands.begin(), cands.end());
    for (int q = 0; q < k && q < static_cast<int>(cands.size()); ++q)
      out[i][static_cast<std::size_t>(q)] = cands[static_cast<std::size_t>(q)].second;
  }
  return out;
}

inline std::vector<std::optional<int>> bf_overlay(const Page& ref, const Page& near) {
  std::vector<std::optional<int>> out(ref.boxes.size());
  for (std::size_t i = 0; i < ref.boxes.size(); ++i) {
    double best = 0.0;
    int arg = -1;
    for (std::size_t j = 0; j < near.boxes.size(); ++j) {
      const WordBox& a = ref.boxes[i];
      const WordBox& b = near.boxes[j];
      double w = std::min(a.right, b.right) - std::max(a.left, b.left);
      double h = std::min(a.bottom, b.bottom) - std::max(a.top, b.top);
      double area = (w > 0.0 && h > 0.0) ? w * h : 0.0;
      if (area > best) {
        best = area;
        arg = static_cast<int>(j);
      }
    }
    if (arg >= 0) out[i] = arg;
  }
  return out;
}

// Reading order via an explicit boolean relation matrix and its transitive
// closure, then the line/position rules.
struct BfOrder {
  std::vector<int> order, line_no, order_in_line;
};

inline BfOrder bf_reading_order(const std::vector<std::array<double, 4>>& boxes,
                                double threshold) {
  int n = static_cast<int>(boxes.size());
  std::vector<std::vector<bool>> rel(static_cast<std::size_t>(n),
                                     std::vector<bool>(static_cast<std::size_t>(n), false));
  for (int i = 0; i < n; ++i) {
    rel[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = true;
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      double lo = std::max(boxes[static_cast<std::size_t>(i)][1],
                           boxes[static_cast<std::size_t>(j)][1]);
      double hi = std::min(boxes[static_cast<std::size_t>(i)][3],
                           boxes[static_cast<std::size_t>(j)][3]);
      double inter = hi - lo;
      double shorter = std::min(
          boxes[static_cast<std::size_t>(i)][3] - boxes[static_cast<std::size_t>(i)][1],
          boxes[static_cast<std::size_t>(j)][3] - boxes[static_cast<std::size_t>(j)][1]);
      if (inter > 0.0 && shorter > 0.0 && inter / shorter > threshold)
        rel[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;
    }
  }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (rel[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] &&
            rel[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)])
          rel[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;

  std::vector<int> line_of(static_cast<std::size_t>(n), -1);
  std::vector<std::vector<int>> lines;
  for (int i = 0; i < n; ++i) {
    if (line_of[static_cast<std::size_t>(i)] >= 0) continue;
    std::vector<int> members;
    for (int j = 0; j < n; ++j)
      if (rel[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) {
        members.push_back(j);
        line_of[static_cast<std::size_t>(j)] = 0;
      }
    lines.push_back(members);
  }
  auto mean_cy = [&](const std::vector<int>& l) {
    double s = 0.0;
    for (int i : l)
      s += 0.5 * (boxes[static_cast<std::size_t>(i)][1] + boxes[static_cast<std::size_t>(i)][3]);
    return s / static_cast<double>(l.size());
  };
  std::sort(lines.begin(), lines.end(), [&](const auto& a, const auto& b) {
    return mean_cy(a) < mean_cy(b);
  });

  BfOrder out;
  out.order.assign(static_cast<std::size_t>(n), 0);
  out.line_no.assign(static_cast<std::size_t>(n), 0);
  out.order_in_line.assign(static_cast<std::size_t>(n), 0);
  int global = 0;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    std::vector<int>& members = lines[li];
    std::sort(members.begin(), members.end(), [&](int a, int b) {
      return std::make_tuple(boxes[static_cast<std::size_t>(a)][0],
                             boxes[static_cast<std::size_t>(a)][1],
                             boxes[static_cast<std::size_t>(a)][2],
                             boxes[static_cast<std::size_t>(a)][3]) <
             std::make_tuple(boxes[static_cast<std::size_t>(b)][0],
                             boxes[static_cast<std::size_t>(b)][1],
                             boxes[static_cast<std::size_t>(b)][2],
                             boxes[static_cast<std::size_t>(b)][3]);
    });
    for (std::size_t k = 0; k < members.size(); ++k) {
      out.line_no[static_cast<std::size_t>(members[k])] = static_cast<int>(li);
      out.order_in_line[static_cast<std::size_t>(members[k])] = static_cast<int>(k);
      out.order[static_cast<std::size_t>(members[k])] = global++;
    }
  }
  return out;
}

// Confusion counts by plain cell enumeration.
struct BfConfusion {
  long tp = 0, fp = 0, fn = 0;
  double f1() const {
    if (tp == 0 && fp == 0 && fn == 0) return 1.0;
    return 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
  }
};

inline BfConfusion bf_confusion(const std::vector<Mat>& preds, const std::vector<Mat>& truths) {
  BfConfusion c;
  for (std::size_t p = 0; p < preds.size(); ++p)
    for (int i = 0; i < preds[p].rows; ++i)
      for (int j = 0; j < preds[p].cols; ++j) {
        bool pv = preds[p].at(i, j) > 0.5;
        bool tv = truths[p].at(i, j) > 0.5;
        if (pv && tv) ++c.tp;
        if (pv && !tv) ++c.fp;
        if (!pv && tv) ++c.fn;
      }
  return c;
}

}  // namespace oracles
