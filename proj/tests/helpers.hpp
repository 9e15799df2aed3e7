#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "doctest.h"

namespace testutil {

// Central-difference gradient oracle, 64-bit mode:
// |analytic - central| / (|analytic| + 1e-6) < tol at the given step.
// Checks up to max_checks randomly chosen coordinates (all when it covers them).
inline void check_gradient(const std::function<double(const std::vector<double>&)>& f,
                           std::vector<double> x, std::span<const double> analytic,
                           int max_checks = -1, double step = 1e-3, double tol = 1e-3,
                           uint64_t seed = 7) {
    REQUIRE(analytic.size() == x.size());
    std::vector<size_t> order(x.size());
    std::iota(order.begin(), order.end(), size_t{0});
    if (max_checks > 0 && (size_t)max_checks < x.size()) {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
        order.resize(max_checks);
    }
    for (size_t i : order) {
        const double keep = x[i];
        x[i] = keep + step;
        const double lp = f(x);
        x[i] = keep - step;
        const double lm = f(x);
        x[i] = keep;
        const double central = (lp - lm) / (2.0 * step);
        const double err = std::abs(analytic[i] - central) / (std::abs(analytic[i]) + 1e-6);
        INFO("coordinate ", i, ": analytic=", analytic[i], " central=", central);
        CHECK(err < tol);
    }
}

inline std::vector<double> random_vec(size_t n, std::mt19937_64& rng, double lo = -1.0,
                                      double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

inline std::vector<float> random_vec_f(size_t n, std::mt19937_64& rng, float lo = -1.0f,
                                       float hi = 1.0f) {
    std::uniform_real_distribution<float> d(lo, hi);
    std::vector<float> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

}  // namespace testutil
