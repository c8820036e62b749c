#pragma once

#include "akn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace akn {

struct GradientReport {
    std::vector<std::string> names;
    std::vector<double> max_rel_error;  // per parameter
    double step = 0.0;
    std::size_t probes = 0;
    std::size_t skipped = 0;  // probes discarded as lying near a kink

    double worst() const
    {
        return max_rel_error.empty() ? 0.0 : *std::max_element(max_rel_error.begin(), max_rel_error.end());
    }
    bool passed(double tolerance) const { return worst() <= tolerance; }
};

struct GradCheckOptions {
    double step = 1e-4;
    // Probe at most this many entries per parameter (0 = every entry).
    std::size_t max_probes = 0;
    // Denominator floor for the relative error.
    double floor = 1e-6;
    std::uint64_t seed = 1;
};

// Compares the reverse-mode gradient of a scalar graph against central finite
// differences. `build` constructs the graph from the current parameter values
// and returns the scalar output. Probes whose step-h and step-h/2 central
// estimates disagree straddle a non-differentiable point and are skipped.
template <typename Build>
GradientReport grad_check(Parameters<double>& params, Build&& build, const GradCheckOptions& opts = {})
{
    auto eval = [&]() {
        Graph<double> g(&params);
        return g.value(build(g)).item();
    };

    Graph<double> g(&params);
    const Var out = build(g);
    const Gradients<double> grads = g.backward(out);

    GradientReport report;
    report.step = opts.step;
    std::mt19937_64 rng(opts.seed);
    const double h = opts.step;

    for (std::size_t p = 0; p < params.size(); ++p) {
        report.names.push_back(params.name(p));
        double worst = 0.0;
        Tensor<double>& value = params.at(p);
        std::vector<std::size_t> probe(value.size());
        std::iota(probe.begin(), probe.end(), std::size_t{0});
        if (opts.max_probes && probe.size() > opts.max_probes) {
            std::shuffle(probe.begin(), probe.end(), rng);
            probe.resize(opts.max_probes);
        }
        for (std::size_t i : probe) {
            const double orig = value[i];
            auto at = [&](double delta) {
                value[i] = orig + delta;
                const double f = eval();
                value[i] = orig;
                return f;
            };
            const double central = (at(h) - at(-h)) / (2 * h);
            const double half = (at(h / 2) - at(-h / 2)) / h;
            ++report.probes;
            const double analytic = grads[p] ? (*grads[p])[i] : 0.0;
            const double scale = std::max({std::abs(analytic), std::abs(central), opts.floor});
            if (std::abs(central - half) > 1e-6 * std::max(std::abs(central), 1.0)) {
                ++report.skipped;
                continue;
            }
            worst = std::max(worst, std::abs(analytic - central) / scale);
        }
        report.max_rel_error.push_back(worst);
    }
    return report;
}

} // namespace akn
