#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dkamc/errors.hpp"
#include "dkamc/tensor.hpp"

namespace dkamc {

// A block of coordinates to perturb and the analytic gradient computed for it
// at the unperturbed point.
template <typename T>
struct GradProbe {
    std::span<T> values;
    std::span<const T> analytic;
};

struct GradCheckOptions {
    double epsilon = 1e-5;
    std::size_t samples = 64;
    std::uint64_t seed = 0;
};

struct GradCheckResult {
    // max |a - n| / max(|a|, |n|, 1e-8) over the sampled coordinates.
    double componentwise = 0.0;
    // Same, but the denominator is floored at the largest analytic gradient
    // magnitude of the coordinate's tensor. Unlike the componentwise figure
    // this stays meaningful for coordinates whose true gradient is below the
    // rounding noise of the loss.
    double scaled = 0.0;
    std::size_t coordinates = 0;
};

// Central-difference check. `fragment` recomputes the scalar loss from the
// current values; it must return a single-element tensor. Up to
// options.samples coordinates are drawn across all probes (all of them when
// there are fewer).
template <typename T>
GradCheckResult gradient_check(const std::function<Tensor<double>()>& fragment, std::span<const GradProbe<T>> probes,
                      const GradCheckOptions& options) {
    auto eval = [&] {
        Tensor<double> out = fragment();
        if (out.size() != 1) throw NonScalarOutput("gradient_check: fragment output has " + std::to_string(out.size()) +
                                                   " elements, expected a scalar loss");
        return out[0];
    };
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    std::vector<double> scale(probes.size(), 0.0);
    for (std::size_t p = 0; p < probes.size(); ++p) {
        if (probes[p].values.size() != probes[p].analytic.size())
            throw ShapeError("gradient_check: probe value/gradient size mismatch");
        for (T g : probes[p].analytic) scale[p] = std::max(scale[p], std::abs(static_cast<double>(g)));
        for (std::size_t i = 0; i < probes[p].values.size(); ++i) coords.emplace_back(p, i);
    }
    if (coords.size() > options.samples) {
        std::mt19937_64 rng(options.seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(options.samples);
    }
    eval();  // surface NonScalarOutput even with no coordinates
    GradCheckResult result;
    result.coordinates = coords.size();
    for (const auto& [p, i] : coords) {
        T& v = probes[p].values[i];
        const T saved = v;
        const T up = static_cast<T>(saved + options.epsilon);
        const T down = static_cast<T>(saved - options.epsilon);
        v = up;
        const double f_up = eval();
        v = down;
        const double f_down = eval();
        v = saved;
        // Divide by the step actually taken after rounding to T.
        const double numeric = (f_up - f_down) / (static_cast<double>(up) - static_cast<double>(down));
        const double analytic = probes[p].analytic[i];
        const double diff = std::abs(analytic - numeric);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        result.componentwise = std::max(result.componentwise, diff / denom);
        result.scaled = std::max(result.scaled, diff / std::max(denom, scale[p]));
    }
    return result;
}

inline Tensor<double> scalar_loss(double v) {
    return Tensor<double>({1}, std::vector<double>{v});
}

}  // namespace dkamc
