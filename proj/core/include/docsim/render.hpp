#pragma once

#include <string>

#include "docsim/corpus.hpp"
#include "docsim/features.hpp"
#include "docsim/geometry.hpp"

namespace docsim {

// One rectangle per word-box, colored by cell-level outcome with precedence
// miss (red) > extra (blue) > true positive (green) > true negative
// (yellow). Byte-identical output for identical inputs.
std::string page_svg(const Page& page, const Mat& predictions, const Mat& truth);
void render_page_svg(const Page& page, const Mat& predictions, const Mat& truth,
                     const std::string& path);

// Boxes plus neighbor edges of the geometry graph.
std::string graph_svg(const Page& page, const NeighborIndex& index);
void render_graph_svg(const Page& page, const NeighborIndex& index, const std::string& path);

}  // namespace docsim
