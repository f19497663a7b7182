#pragma once

#include <string>
#include <vector>

namespace iccnn {

struct SuiteCheck {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    int checked = 0;
    bool pass = false;
};

struct GradientSuiteResult {
    std::vector<SuiteCheck> checks;
    bool all_pass = true;
};

/// Finite-difference verification of every layer op (tolerance 1e-5) and of a
/// width-scaled end-to-end network on a 3x16x16 input (tolerance 1e-4).
/// Double precision, eps 1e-6 throughout.
GradientSuiteResult run_gradient_suite();

std::string format_suite(const GradientSuiteResult& result);

}  // namespace iccnn
