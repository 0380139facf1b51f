#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vitlp/tensor.hpp"

namespace vitlp {

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradCheckOptions {
  double eps = 1e-4;
  // Coordinates sampled per parameter tensor; 0 checks every coordinate.
  std::size_t samples_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // "<param index>[<coord>]"
};

// Compares the analytic gradient of `loss` (a scalar-valued closure that
// rebuilds its graph on every call) against central differences, reporting
// max |analytic − numeric| / max(1, |numeric|).
GradCheckResult grad_check(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                           const GradCheckOptions& opts = {});

}  // namespace vitlp
