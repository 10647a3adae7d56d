#pragma once

#include <string>
#include <vector>

namespace docsim {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 1e-4;
  bool pass = false;
};

// Finite-difference checks for every autodiff primitive on randomized shapes
// and for each full architecture loss on small pages. `shapes_per_primitive`
// controls how many random instances each primitive gets.
std::vector<GradCheckEntry> run_primitive_grad_checks(int shapes_per_primitive = 20);
std::vector<GradCheckEntry> run_architecture_grad_checks();

}  // namespace docsim
