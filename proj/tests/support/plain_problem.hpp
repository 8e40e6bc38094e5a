#pragma once

// Precision-neutral description of an end-to-end gradient probe, so the
// 32-bit build's analytic gradients can be checked against central
// differences evaluated by the 64-bit build on the same numbers.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace hfm::testing {

struct PlainArray {
  std::vector<int> shape;
  std::vector<double> values;
};

struct PlainProblem {
  std::array<int, 5> rgb_channels{};
  std::array<int, 4> depth_channels{};
  std::array<int, 5> confidence_channels{};
  int variant = 0, reweighting = 0, height = 0, width = 0;
  PlainArray rgb, depth, mask;
  std::vector<std::string> names;
  std::vector<PlainArray> params;
  std::vector<PlainArray> weights;  // loss probe weights
};

struct PlainProbe {
  std::size_t param = 0;  // index into PlainProblem::params
  std::size_t index = 0;
};

struct PlainDerivative {
  double numeric = 0;
  double analytic = 0;  // the 64-bit build's own backward pass
  double relative_error = 0;  // between the two, above the resolution floor
  bool smooth = true;
};

// Implemented in the 64-bit translation unit.
std::vector<PlainDerivative> central_differences64(const PlainProblem& problem, const std::vector<PlainProbe>& probes,
                                                   double step);

}  // namespace hfm::testing
