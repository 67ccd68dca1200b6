#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tailspin {

struct GradcheckRow {
  std::string name;
  std::size_t instances = 0;
  double max_rel_error = 0.0;
};

// Central-difference check of every differentiable loss and SSL objective on
// random small instances. Rows: ce, la, sl, la_sl, simsiam, simsiam_no_sg,
// byol, nt_xent, barlow_twins, mlp.
std::vector<GradcheckRow> gradcheck_suite(std::size_t instances, std::uint64_t seed);

constexpr double kGradcheckTolerance = 1e-4;

}  // namespace tailspin
