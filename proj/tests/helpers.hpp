#pragma once

#include <string>
#include <vector>

#include "rmv/rmv.hpp"

namespace testing_helpers {

// 1-D polynomial model with identity diffusion.
inline rmv::ModelCoefficients model_1d(const std::string& drift, const std::string& kernel, double x0,
                                       std::string drift_potential = "", std::string kernel_potential = "",
                                       double L = 0.0, double r = 2.0) {
    rmv::PolynomialModelSpec s;
    s.dim = 1;
    s.drift = {drift};
    if (!kernel.empty()) s.kernel = {kernel};
    s.drift_potential = std::move(drift_potential);
    s.kernel_potential = std::move(kernel_potential);
    s.lipschitz = L;
    s.growth_order = r;
    s.x0 = {x0};
    return rmv::make_polynomial_model(s);
}

} // namespace testing_helpers
