#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "blastoseg/modules.hpp"

namespace blastoseg::numerics {

struct GradCheckReport {
  double max_relative_error = 0.0;
  /// Tensor holding the worst element ("input" or a parameter name).
  std::string parameter_name;
  double tolerance = 0.0;
  std::size_t elements_checked = 0;

  bool passed() const noexcept { return max_relative_error <= tolerance; }
};

/// |a - f| / max(|a|, |f|, 1e-8)
double relative_error(double analytic, double numeric) noexcept;

/// Compares `analytic` with central differences of the scalar function `f`
/// around `x`, one element at a time.
GradCheckReport check_gradient(const std::function<double(const Tensor<double>&)>& f,
                               const Tensor<double>& x, const Tensor<double>& analytic,
                               double step, double tolerance, const std::string& name);

/// Checks a layer's backward pass against central differences for every input
/// element and every parameter element. The scalar objective is sum(r * y) for
/// a fixed random tensor r. `mode` must be deterministic or infer.
GradCheckReport finite_difference_check(Layer<double>& layer, const Tensor<double>& input,
                                        Mode mode, double step, double tolerance,
                                        std::uint64_t seed = 7);

}  // namespace blastoseg::numerics
