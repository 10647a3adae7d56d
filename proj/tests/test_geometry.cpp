#include <array>

#include "doctest.h"
#include "docsim/geometry.hpp"
#include "support/oracles.hpp"

using namespace docsim;

namespace {

Page page_from(const std::vector<std::array<double, 4>>& rects) {
  Page p;
  p.doc_id = "t";
  for (const auto& r : rects) {
    WordBox b;
    b.text = "w";
    b.left = r[0];
    b.top = r[1];
    b.right = r[2];
    b.bottom = r[3];
    p.boxes.push_back(b);
  }
  return p;
}

}  // namespace

TEST_CASE("overlapping y-projections form one line") {
  // Overlap ratio 0.06 / 0.10 = 0.6 of the shorter extent.
  Page p = page_from({{0.1, 0.10, 0.2, 0.20}, {0.5, 0.14, 0.6, 0.24}});
  OrderInfo info = reading_order(p, {});
  CHECK(info.primary.line_no[0] == 0);
  CHECK(info.primary.line_no[1] == 0);
  CHECK(info.primary.order[0] == 0);
  CHECK(info.primary.order[1] == 1);
  CHECK(info.primary.order_in_line[0] == 0);
  CHECK(info.primary.order_in_line[1] == 1);
}

TEST_CASE("disjoint y-ranges land on separate lines top to bottom") {
  Page p = page_from({{0.4, 0.1, 0.6, 0.15}, {0.1, 0.5, 0.3, 0.55}});
  OrderInfo info = reading_order(p, {});
  CHECK(info.primary.line_no[0] == 0);
  CHECK(info.primary.line_no[1] == 1);
}

TEST_CASE("reading order ignores the input box ordering") {
  Rng rng(11);
  for (int rep = 0; rep < 25; ++rep) {
    Page p = oracles::random_page(rng, 2 + static_cast<int>(rng.next_below(20)));
    OrderInfo a = reading_order(p, {});

    Page reversed = p;
    std::reverse(reversed.boxes.begin(), reversed.boxes.end());
    OrderInfo b = reading_order(reversed, {});
    int n = static_cast<int>(p.boxes.size());
    for (int i = 0; i < n; ++i) {
      CHECK(a.primary.order[static_cast<std::size_t>(i)] ==
            b.primary.order[static_cast<std::size_t>(n - 1 - i)]);
      CHECK(a.rotated.order[static_cast<std::size_t>(i)] ==
            b.rotated.order[static_cast<std::size_t>(n - 1 - i)]);
    }

    // Permutation property.
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    for (int v : a.primary.order) {
      REQUIRE(v >= 0);
      REQUIRE(v < n);
      CHECK(!seen[static_cast<std::size_t>(v)]);
      seen[static_cast<std::size_t>(v)] = true;
    }
  }
}

TEST_CASE("reading order matches the transitive-closure oracle") {
  Rng rng(13);
  for (int rep = 0; rep < 60; ++rep) {
    Page p = oracles::random_page(rng, 1 + static_cast<int>(rng.next_below(30)));
    std::vector<std::array<double, 4>> rects;
    for (const WordBox& b : p.boxes) rects.push_back({b.left, b.top, b.right, b.bottom});
    oracles::BfOrder expected = oracles::bf_reading_order(rects, 0.5);
    OrderInfo got = reading_order(p, {});
    CHECK(got.primary.order == expected.order);
    CHECK(got.primary.line_no == expected.line_no);
    CHECK(got.primary.order_in_line == expected.order_in_line);
  }
}

TEST_CASE("three boxes on a row wire left and right neighbors") {
  Page p = page_from({{0.05, 0.4, 0.15, 0.45}, {0.45, 0.4, 0.55, 0.45}, {0.85, 0.4, 0.95, 0.45}});
  NeighborIndex idx = neighborhood_graph(p, {});
  // Row layout: [self, left, right, top, bottom].
  CHECK(idx.table[1][0] == 1);
  CHECK(idx.table[1][1] == 0);
  CHECK(idx.table[1][2] == 2);
  CHECK(idx.table[1][3] == kNoNeighbor);
  CHECK(idx.table[1][4] == kNoNeighbor);
}

TEST_CASE("single box page has only its self index") {
  Page p = page_from({{0.4, 0.4, 0.6, 0.5}});
  NeighborIndex idx = neighborhood_graph(p, {});
  CHECK(idx.table[0] == std::vector<int>{0, kNoNeighbor, kNoNeighbor, kNoNeighbor, kNoNeighbor});
}

TEST_CASE("n=2 lists the two closest per edge for collinear boxes") {
  Page p = page_from({{0.05, 0.4, 0.1, 0.45},
                      {0.25, 0.4, 0.3, 0.45},
                      {0.45, 0.4, 0.5, 0.45},
                      {0.65, 0.4, 0.7, 0.45},
                      {0.85, 0.4, 0.9, 0.45}});
  GeometryConfig cfg;
  cfg.neighbors_per_edge = 2;
  NeighborIndex idx = neighborhood_graph(p, cfg);
  // Middle box: lefts 1 then 0; rights 3 then 4.
  CHECK(idx.table[2][0] == 2);
  CHECK(idx.table[2][1] == 1);
  CHECK(idx.table[2][2] == 0);
  CHECK(idx.table[2][3] == 3);
  CHECK(idx.table[2][4] == 4);
}

TEST_CASE("neighborhood graph matches the exhaustive oracle") {
  Rng rng(17);
  for (int rep = 0; rep < 60; ++rep) {
    int n_per_edge = 1 + static_cast<int>(rng.next_below(3));
    Page p = oracles::random_page(rng, 1 + static_cast<int>(rng.next_below(30)));
    GeometryConfig cfg;
    cfg.neighbors_per_edge = n_per_edge;
    NeighborIndex got = neighborhood_graph(p, cfg);
    std::vector<std::vector<int>> expected = oracles::bf_neighbors(p, n_per_edge);
    CHECK(got.table == expected);
  }
}

TEST_CASE("field of view maps identical pages onto themselves") {
  Rng rng(19);
  Page p = oracles::random_page(rng, 12);
  GeometryConfig cfg;
  cfg.fov_k = 1;
  auto fov = field_of_view(p, p, cfg);
  for (std::size_t i = 0; i < p.boxes.size(); ++i) CHECK(fov[i][0] == static_cast<int>(i));
}

TEST_CASE("zero distance cap blanks the field of view on distinct pages") {
  Page ref = page_from({{0.1, 0.1, 0.2, 0.15}});
  Page near = page_from({{0.5, 0.5, 0.6, 0.55}});
  GeometryConfig cfg;
  cfg.fov_max_dist = 0.0;
  auto fov = field_of_view(ref, near, cfg);
  for (int v : fov[0]) CHECK(v == kNoNeighbor);
}

TEST_CASE("field of view matches the brute-force sort") {
  Rng rng(23);
  for (int rep = 0; rep < 60; ++rep) {
    Page ref = oracles::random_page(rng, 1 + static_cast<int>(rng.next_below(30)));
    Page near = oracles::random_page(rng, 1 + static_cast<int>(rng.next_below(30)));
    GeometryConfig cfg;
    cfg.fov_k = 1 + static_cast<int>(rng.next_below(6));
    cfg.fov_max_dist = rng.uniform(0.05, 0.6);
    auto got = field_of_view(ref, near, cfg);
    auto expected = oracles::bf_field_of_view(ref, near, cfg.fov_k, cfg.fov_max_dist);
    CHECK(got == expected);
  }
}

TEST_CASE("overlay matching picks the maximal intersection") {
  Rng rng(29);
  Page p = oracles::random_page(rng, 10);
  auto self_match = overlay_matches(p, p);
  for (std::size_t i = 0; i < p.boxes.size(); ++i) {
    REQUIRE(self_match[i].has_value());
    CHECK(*self_match[i] == static_cast<int>(i));
  }

  Page ref = page_from({{0.0, 0.0, 0.2, 0.2}});
  Page near = page_from({{0.1, 0.1, 0.3, 0.3}, {0.15, 0.15, 0.4, 0.4}});
  auto m = overlay_matches(ref, near);
  REQUIRE(m[0].has_value());
  CHECK(*m[0] == 0);

  Page far = page_from({{0.7, 0.7, 0.9, 0.9}});
  auto none = overlay_matches(ref, far);
  CHECK(!none[0].has_value());
}

TEST_CASE("overlay matches the brute-force oracle and area is symmetric") {
  Rng rng(31);
  for (int rep = 0; rep < 60; ++rep) {
    Page ref = oracles::random_page(rng, 1 + static_cast<int>(rng.next_below(30)));
    Page near = oracles::random_page(rng, 1 + static_cast<int>(rng.next_below(30)));
    CHECK(overlay_matches(ref, near) == oracles::bf_overlay(ref, near));
    const WordBox& a = ref.boxes[0];
    const WordBox& b = near.boxes[0];
    CHECK(intersection_area(a, b) == intersection_area(b, a));
  }
}
