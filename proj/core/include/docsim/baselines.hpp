#pragma once

#include <optional>

#include "docsim/corpus.hpp"
#include "docsim/features.hpp"
#include "docsim/geometry.hpp"

namespace docsim {

// Parameter-free label transfer: each ref box takes the full label set of
// the near box it overlaps most; boxes with no intersection stay empty.
Mat copypaste_predict(const Page& ref_page, const Page& near_page, const Mat& near_labels);

// Fraction of annotated ref boxes whose classes all appear somewhere on the
// near page. Undefined (nullopt) when the ref page has no annotated box.
// Not an F1; a box with several classes counts as a hit only if every one of
// them is present.
std::optional<double> oracle_hits(const Page& ref_page, const Page& near_page);

// The same hit test against an explicit near-page class set, counting hits
// and annotated boxes; used for micro-aggregated reporting.
void oracle_hit_counts(const Page& ref_page, const std::set<int>& near_classes, long* hits,
                       long* annotated);

std::set<int> page_class_set(const Page& page);

}  // namespace docsim
