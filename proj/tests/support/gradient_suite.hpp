#pragma once

#include "akn/grad_check.hpp"

#include <functional>
#include <string>
#include <vector>

namespace akn::testing {

struct GradCase {
    std::string name;
    std::function<Parameters<double>()> make;
    std::function<Var(Graph<double>&)> build;
};

// One case per differentiable operator plus the composite modules and the
// full stage-2 objective on a small network.
std::vector<GradCase> gradient_cases();

struct GradCaseResult {
    std::string name;
    GradientReport report;
};

// Runs every case with `probes` random entries per parameter tensor.
std::vector<GradCaseResult> run_gradient_suite(std::size_t probes = 10);

} // namespace akn::testing
