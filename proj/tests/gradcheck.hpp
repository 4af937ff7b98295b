#pragma once

// Central finite-difference oracle for network gradients. A random fixed
// projection turns the network output into a scalar; analytic parameter
// gradients from backward() are compared against (L(θ+ε) − L(θ−ε)) / 2ε.

#include <cmath>
#include <functional>
#include <string>

#include "agat/nn.hpp"
#include "agat/rng.hpp"

namespace gradcheck {

struct Result {
    int checked = 0;
    int failed = 0;
    int skipped = 0;  // probes straddling an activation kink
    double worst_rel = 0.0;
    std::string worst_name;
};

// `forward_scalar` must evaluate the full scalar loss from scratch.
// `run_backward` must zero grads, run forward+backward once and leave
// gradients accumulated on the params.
inline Result check_params(std::vector<agat::nn::Param> params, const std::function<double()>& forward_scalar,
                           const std::function<void()>& run_backward, double eps = 1e-4, double rtol = 1e-3, double atol = 1e-8,
                           int max_per_tensor = 24) {
    Result res;
    run_backward();
    // Snapshot analytic grads before poking values.
    std::vector<agat::Tensor> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) analytic.push_back(*p.grad);

    agat::Rng pick(20240517);
    for (size_t pi = 0; pi < params.size(); ++pi) {
        agat::Tensor& value = *params[pi].value;
        const size_t count = value.v.size();
        const int probes = std::min<int>(max_per_tensor, static_cast<int>(count));
        for (int k = 0; k < probes; ++k) {
            const size_t j = count <= static_cast<size_t>(max_per_tensor) ? static_cast<size_t>(k)
                                                                          : static_cast<size_t>(pick.uniform_int(0, static_cast<int>(count) - 1));
            const double saved = value.v[j];
            auto fd_at = [&](double e) {
                value.v[j] = saved + e;
                const double up = forward_scalar();
                value.v[j] = saved - e;
                const double down = forward_scalar();
                value.v[j] = saved;
                return (up - down) / (2.0 * e);
            };
            const double fd = fd_at(eps);
            const double fd_half = fd_at(eps / 2);
            // Central differences of a smooth function agree at eps and
            // eps/2 to O(eps^2); a piecewise-linear kink inside the stencil
            // does not. Such probes are skipped rather than judged.
            const double consistency = std::abs(fd - fd_half) / std::max({std::abs(fd), std::abs(fd_half), atol / rtol});
            if (consistency > 0.25 * rtol) {
                ++res.skipped;
                continue;
            }
            const double an = analytic[pi].v[j];
            const double denom = std::max({std::abs(fd), std::abs(an), atol / rtol});
            const double rel = std::abs(fd - an) / denom;
            ++res.checked;
            if (std::abs(fd - an) > atol && rel > rtol) {
                ++res.failed;
                if (rel > res.worst_rel) {
                    res.worst_rel = rel;
                    res.worst_name = params[pi].name + "[" + std::to_string(j) + "]";
                }
            }
        }
    }
    return res;
}

}  // namespace gradcheck
