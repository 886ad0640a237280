#pragma once

#include <functional>

#include "realm/tensor.hpp"

namespace realm {

// Compares reverse-mode gradients of a scalar-valued function against central
// finite differences, coordinate by coordinate. Returns the worst relative
// error max_i |fd_i - ad_i| / (|fd_i| + |ad_i| + 1e-8).
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& x, double h = 1e-5);

} // namespace realm
