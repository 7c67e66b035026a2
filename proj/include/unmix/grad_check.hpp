#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "unmix/tensor.hpp"

namespace unmix {

/// Compare reverse-mode gradients of a scalar-valued function against central
/// finite differences at the coordinates of `x`. `f` must rebuild its graph on
/// every call and reference `x` by handle (perturbations happen in place), and
/// must be deterministic (dropout off or its mask frozen by reseeding).
///
/// Returns max_i |analytic_i - central_i| / max(1e-8, |analytic_i| + |central_i|).
/// With max_coords >= 0 only a seeded sample of that many coordinates is
/// checked (used where a full sweep is too slow); max_coords < 0 checks all.
inline double grad_check(const std::function<Tensor()>& f, Tensor x, double h,
                         std::int64_t max_coords = -1, std::uint64_t sample_seed = 0x5eed) {
    if (!x.requires_grad()) throw ContractError("grad_check: x does not require grad");
    x.zero_grad();
    Tensor loss = f();
    if (loss.size() != 1) throw ContractError("grad_check: f must return a scalar");
    backward(loss);
    std::vector<double> analytic = x.grad();

    std::vector<std::int64_t> coords;
    const std::int64_t n = x.size();
    if (max_coords < 0 || max_coords >= n) {
        coords.resize(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
        // Partial Fisher-Yates over the index range.
        std::vector<std::int64_t> pool(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
        RngStream rng(sample_seed);
        for (std::int64_t i = 0; i < max_coords; ++i) {
            const std::int64_t j = i + static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(n - i));
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
            coords.push_back(pool[static_cast<std::size_t>(i)]);
        }
    }

    double max_rel = 0.0;
    NoGradGuard guard;
    for (std::int64_t i : coords) {
        const auto idx = static_cast<std::size_t>(i);
        const double orig = x.data()[idx];
        x.data()[idx] = orig + h;
        const double lp = f().value();
        x.data()[idx] = orig - h;
        const double lm = f().value();
        x.data()[idx] = orig;
        const double central = (lp - lm) / (2.0 * h);
        const double a = analytic[idx];
        const double rel = std::abs(a - central) / std::max(1e-8, std::abs(a) + std::abs(central));
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace unmix
