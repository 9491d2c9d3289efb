#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "proxyrec/tensor.hpp"

namespace testutil {

// Central finite-difference gradient check, float64. build_loss must rebuild
// the graph from the parameters' current values and return the scalar loss.
// Comparisons where both gradients are below the noise floor are skipped
// (central differences cannot resolve them).
struct GradCheck {
    double max_rel_err = 0.0;
    int checked = 0;
    int skipped = 0;
};

inline GradCheck check_gradients(std::vector<proxyrec::Tensor<double>> params,
                                 const std::function<proxyrec::Tensor<double>()>& build_loss,
                                 double h = 1e-5, double floor = 1e-6) {
    for (auto& p : params) p.zero_grad();
    proxyrec::Tensor<double> loss = build_loss();
    proxyrec::backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params)
        analytic.push_back(p.has_grad() ? p.grad()
                                        : std::vector<double>(p.values().size(), 0.0));

    GradCheck result;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& vals = params[pi].values();
        for (std::size_t j = 0; j < vals.size(); ++j) {
            const double orig = vals[j];
            vals[j] = orig + h;
            const double lp = build_loss().item();
            vals[j] = orig - h;
            const double lm = build_loss().item();
            vals[j] = orig;
            const double numeric = (lp - lm) / (2.0 * h);
            const double a = analytic[pi][j];
            const double scale = std::max(std::abs(a), std::abs(numeric));
            if (scale < floor) {
                ++result.skipped;
                continue;
            }
            result.max_rel_err = std::max(result.max_rel_err, std::abs(a - numeric) / scale);
            ++result.checked;
        }
    }
    for (auto& p : params) p.zero_grad();
    return result;
}

}  // namespace testutil
