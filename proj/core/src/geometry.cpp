#include "docsim/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace docsim {

namespace {

struct Interval {
  double lo, hi;
};

double overlap_ratio(const Interval& a, const Interval& b) {
  double inter = std::min(a.hi, b.hi) - std::max(a.lo, b.lo);
  if (inter <= 0.0) return 0.0;
  double shorter = std::min(a.hi - a.lo, b.hi - b.lo);
  if (shorter <= 0.0) return 0.0;
  return inter / shorter;
}

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); }
};

struct FlatBox {
  double left, top, right, bottom;
  double cx() const { return 0.5 * (left + right); }
  double cy() const { return 0.5 * (top + bottom); }
};

// One scan direction. Ties inside a line break on (left, top, right, bottom)
// so the result is a pure function of the geometry, not of the input order.
ReadingPass reading_pass(const std::vector<FlatBox>& boxes, double threshold) {
  int n = static_cast<int>(boxes.size());
  DisjointSet ds(n);
  for (int i = 0; i < n; ++i) {
    Interval a{boxes[static_cast<std::size_t>(i)].top, boxes[static_cast<std::size_t>(i)].bottom};
    for (int j = i + 1; j < n; ++j) {
      Interval b{boxes[static_cast<std::size_t>(j)].top,
                 boxes[static_cast<std::size_t>(j)].bottom};
      if (overlap_ratio(a, b) > threshold) ds.unite(i, j);
    }
  }

  // Group into lines.
  std::vector<std::vector<int>> groups;
  std::vector<int> group_of(static_cast<std::size_t>(n), -1);
  std::vector<int> root_to_group;
  for (int i = 0; i < n; ++i) {
    int r = ds.find(i);
    int g = -1;
    for (std::size_t k = 0; k < root_to_group.size(); ++k)
      if (root_to_group[k] == r) g = static_cast<int>(k);
    if (g == -1) {
      g = static_cast<int>(groups.size());
      groups.emplace_back();
      root_to_group.push_back(r);
    }
    groups[static_cast<std::size_t>(g)].push_back(i);
    group_of[static_cast<std::size_t>(i)] = g;
  }

  auto line_key = [&](const std::vector<int>& members) {
    double sum = 0.0;
    for (int i : members) sum += boxes[static_cast<std::size_t>(i)].cy();
    return sum / static_cast<double>(members.size());
  };
  std::vector<int> line_order(groups.size());
  std::iota(line_order.begin(), line_order.end(), 0);
  std::sort(line_order.begin(), line_order.end(), [&](int a, int b) {
    double ka = line_key(groups[static_cast<std::size_t>(a)]);
    double kb = line_key(groups[static_cast<std::size_t>(b)]);
    if (ka != kb) return ka < kb;
    // Identical mean center-y: fall back to the leftmost member's geometry.
    auto extreme = [&](int g) {
      const FlatBox* best = nullptr;
      for (int i : groups[static_cast<std::size_t>(g)]) {
        const FlatBox& fb = boxes[static_cast<std::size_t>(i)];
        if (!best || fb.left < best->left || (fb.left == best->left && fb.top < best->top))
          best = &fb;
      }
      return std::make_tuple(best->left, best->top, best->right, best->bottom);
    };
    return extreme(a) < extreme(b);
  });

  ReadingPass pass;
  pass.order.assign(static_cast<std::size_t>(n), 0);
  pass.line_no.assign(static_cast<std::size_t>(n), 0);
  pass.order_in_line.assign(static_cast<std::size_t>(n), 0);

  int global = 0;
  for (std::size_t li = 0; li < line_order.size(); ++li) {
    std::vector<int> members = groups[static_cast<std::size_t>(line_order[li])];
    std::sort(members.begin(), members.end(), [&](int a, int b) {
      const FlatBox& fa = boxes[static_cast<std::size_t>(a)];
      const FlatBox& fb = boxes[static_cast<std::size_t>(b)];
      return std::tie(fa.left, fa.top, fa.right, fa.bottom) <
             std::tie(fb.left, fb.top, fb.right, fb.bottom);
    });
    for (std::size_t k = 0; k < members.size(); ++k) {
      int i = members[k];
      pass.line_no[static_cast<std::size_t>(i)] = static_cast<int>(li);
      pass.order_in_line[static_cast<std::size_t>(i)] = static_cast<int>(k);
      pass.order[static_cast<std::size_t>(i)] = global++;
    }
  }
  return pass;
}

}  // namespace

OrderInfo reading_order(const Page& page, const GeometryConfig& config) {
  if (page.boxes.empty()) throw ValidationError("reading_order: empty page");
  std::vector<FlatBox> primary, rotated;
  primary.reserve(page.boxes.size());
  rotated.reserve(page.boxes.size());
  for (const WordBox& b : page.boxes) {
    primary.push_back({b.left, b.top, b.right, b.bottom});
    // Rotate the page 90 degrees clockwise: (x, y) -> (1 - y, x).
    rotated.push_back({1.0 - b.bottom, b.left, 1.0 - b.top, b.right});
  }
  OrderInfo info;
  info.primary = reading_pass(primary, config.overlap_threshold);
  info.rotated = reading_pass(rotated, config.overlap_threshold);
  return info;
}

NeighborIndex neighborhood_graph(const Page& page, const GeometryConfig& config) {
  if (page.boxes.empty()) throw ValidationError("neighborhood_graph: empty page");
  if (config.neighbors_per_edge < 1)
    throw ConfigError("neighbors_per_edge must be at least 1");
  int n = config.neighbors_per_edge;
  int count = static_cast<int>(page.boxes.size());

  NeighborIndex index;
  index.n = n;
  index.table.assign(static_cast<std::size_t>(count),
                     std::vector<int>(static_cast<std::size_t>(4 * n + 1), kNoNeighbor));

  for (int i = 0; i < count; ++i) {
    const WordBox& w = page.boxes[static_cast<std::size_t>(i)];
    // Candidates per edge: 0 left, 1 right, 2 top, 3 bottom.
    std::vector<std::pair<double, int>> edges[4];
    for (int j = 0; j < count; ++j) {
      if (j == i) continue;
      const WordBox& o = page.boxes[static_cast<std::size_t>(j)];
      double dx = o.cx() - w.cx();
      double dy = o.cy() - w.cy();
      int edge;
      if (std::abs(dx) >= std::abs(dy))  // ties go to the horizontal edges
        edge = dx >= 0.0 ? 1 : 0;
      else
        edge = dy >= 0.0 ? 3 : 2;
      edges[edge].emplace_back(dx * dx + dy * dy, j);
    }
    auto& row = index.table[static_cast<std::size_t>(i)];
    row[0] = i;
    for (int e = 0; e < 4; ++e) {
      std::sort(edges[e].begin(), edges[e].end());
      for (int k = 0; k < n && k < static_cast<int>(edges[e].size()); ++k)
        row[static_cast<std::size_t>(1 + e * n + k)] = edges[e][static_cast<std::size_t>(k)].second;
    }
  }
  return index;
}

std::vector<std::vector<int>> field_of_view(const Page& ref_page, const Page& near_page,
                                            const GeometryConfig& config) {
  if (ref_page.boxes.empty() || near_page.boxes.empty())
    throw ValidationError("field_of_view: empty page");
  if (config.fov_k < 1) throw ConfigError("fov_k must be at least 1");

  std::vector<std::vector<int>> out(
      ref_page.boxes.size(),
      std::vector<int>(static_cast<std::size_t>(config.fov_k), kNoNeighbor));
  double cap2 = config.fov_max_dist * config.fov_max_dist;
  for (std::size_t i = 0; i < ref_page.boxes.size(); ++i) {
    const WordBox& r = ref_page.boxes[i];
    std::vector<std::pair<double, int>> cands;
    for (std::size_t j = 0; j < near_page.boxes.size(); ++j) {
      const WordBox& m = near_page.boxes[j];
      double dx = m.cx() - r.cx();
      double dy = m.cy() - r.cy();
      double d2 = dx * dx + dy * dy;
      if (d2 <= cap2) cands.emplace_back(d2, static_cast<int>(j));
    }
    std::sort(cands.begin(), cands.end());
    for (int k = 0; k < config.fov_k && k < static_cast<int>(cands.size()); ++k)
      out[i][static_cast<std::size_t>(k)] = cands[static_cast<std::size_t>(k)].second;
  }
  return out;
}

double intersection_area(const WordBox& a, const WordBox& b) {
  double w = std::min(a.right, b.right) - std::max(a.left, b.left);
  double h = std::min(a.bottom, b.bottom) - std::max(a.top, b.top);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

std::vector<std::optional<int>> overlay_matches(const Page& ref_page, const Page& near_page) {
  std::vector<std::optional<int>> out(ref_page.boxes.size());
  for (std::size_t i = 0; i < ref_page.boxes.size(); ++i) {
    double best_area = 0.0;
    int best = -1;
    for (std::size_t j = 0; j < near_page.boxes.size(); ++j) {
      double a = intersection_area(ref_page.boxes[i], near_page.boxes[j]);
      if (a > best_area) {
        best_area = a;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0) out[i] = best;
  }
  return out;
}

}  // namespace docsim
