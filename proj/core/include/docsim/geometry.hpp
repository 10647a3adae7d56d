#pragma once

#include <optional>
#include <vector>

#include "docsim/corpus.hpp"

namespace docsim {

inline constexpr int kNoNeighbor = -1;

struct GeometryConfig {
  int neighbors_per_edge = 1;      // n closest boxes per edge
  double overlap_threshold = 0.5;  // same-line rule on the projected extent
  int fov_k = 5;                   // cross-page field-of-view size
  double fov_max_dist = 0.25;      // normalized center-distance cap
};

// Reading order for one scan direction: a permutation plus line/position
// integers per box.
struct ReadingPass {
  std::vector<int> order;          // position of box i in the global order
  std::vector<int> line_no;
  std::vector<int> order_in_line;
};

struct OrderInfo {
  ReadingPass primary;   // lines by y-overlap, top-to-bottom
  ReadingPass rotated;   // the same algorithm on the 90-degree-rotated page
};

// Per box: [self, left*n, right*n, top*n, bottom*n]; missing entries are
// kNoNeighbor.
struct NeighborIndex {
  int n = 1;
  std::vector<std::vector<int>> table;  // N rows of width 4n+1

  int width() const { return 4 * n + 1; }
};

// Boxes overlapping in the y projection by more than the threshold (measured
// against the shorter extent) belong to one line; lines are the transitive
// closure of that relation, ordered by mean center-y, boxes within a line
// ordered by left edge. Independent of the input box ordering.
OrderInfo reading_order(const Page& page, const GeometryConfig& config);

// Every other box is assigned to the edge whose 90-degree field of view
// (center-offset quadrant, ties to the horizontal edges) contains it; the n
// center-closest per edge are kept. The relation may be asymmetric.
NeighborIndex neighborhood_graph(const Page& page, const GeometryConfig& config);

// For each box of ref_page, the fov_k boxes of near_page with smallest
// center-to-center distance, excluding those beyond fov_max_dist,
// sentinel-padded; ties break toward the lower index.
std::vector<std::vector<int>> field_of_view(const Page& ref_page, const Page& near_page,
                                            const GeometryConfig& config);

// Per ref box, the near box with maximal intersection area; nullopt when no
// near box intersects at all.
std::vector<std::optional<int>> overlay_matches(const Page& ref_page, const Page& near_page);

double intersection_area(const WordBox& a, const WordBox& b);

}  // namespace docsim
