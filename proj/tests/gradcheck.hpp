#pragma once

// Central finite-difference gradient checking used across the test suite.
// Independent of the tape: it perturbs parameters in the store and re-runs
// the untraced forward.

#include <functional>
#include <string>
#include <vector>

#include "deskdrive/nn.hpp"

namespace deskdrive::testing {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::string worst;
};

// `loss` evaluates the scalar loss from the current store contents.
// `grads` are the analytic gradients keyed by name. Checks `samples`
// randomly chosen coordinates (all coordinates if samples == 0).
inline GradCheckResult gradcheck(ParamStore& ps,
                                 const std::function<double()>& loss,
                                 const std::vector<std::pair<std::string, Tensor>>& grads,
                                 Rng& rng, std::size_t samples = 0, double step = 1e-5) {
    GradCheckResult res;
    std::vector<std::pair<std::string, std::size_t>> coords;
    for (const auto& [name, g] : grads)
        for (std::size_t i = 0; i < g.numel(); ++i) coords.emplace_back(name, i);
    if (samples > 0 && samples < coords.size()) {
        std::vector<std::pair<std::string, std::size_t>> picked;
        for (std::size_t s = 0; s < samples; ++s) picked.push_back(coords[rng.index(coords.size())]);
        coords = std::move(picked);
    }
    auto grad_of = [&grads](const std::string& name, std::size_t i) {
        for (const auto& [n, g] : grads)
            if (n == name) return g.data[i];
        throw std::runtime_error("gradcheck: missing grad " + name);
    };
    for (const auto& [name, i] : coords) {
        double& p = ps.get(name).data[i];
        const double saved = p;
        p = saved + step;
        const double lp = loss();
        p = saved - step;
        const double lm = loss();
        p = saved;
        const double fd = (lp - lm) / (2.0 * step);
        const double an = grad_of(name, i);
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
        const double rel = std::abs(fd - an) / denom;
        if (rel > res.max_rel_err) {
            res.max_rel_err = rel;
            res.worst = name + "[" + std::to_string(i) + "]";
        }
        ++res.checked;
    }
    return res;
}

}  // namespace deskdrive::testing
