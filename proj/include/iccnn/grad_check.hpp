#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "iccnn/tensor.hpp"

namespace iccnn {

struct GradCheckResult {
    double max_rel_err = 0.0;
    int checked_elements = 0;
};

/// Central finite-difference check of reverse-mode gradients.
///
/// `build_loss` must deterministically rebuild the forward graph to a scalar
/// loss from the current values of `params` (it is re-run twice per checked
/// element with the element nudged by +/-eps). The relative error per element
/// is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
///
/// `max_per_tensor` > 0 checks at most that many elements per parameter
/// tensor, chosen by a seeded shuffle; 0 checks every element.
GradCheckResult grad_check(const std::function<TensorPtr(Tape&)>& build_loss,
                           const std::vector<TensorPtr>& params, double eps = 1e-6,
                           int max_per_tensor = 0, uint64_t sample_seed = 17);

}  // namespace iccnn
