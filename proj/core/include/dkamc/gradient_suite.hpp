#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dkamc {

struct GradientSuiteOptions {
    int seeds = 20;
    std::uint64_t base_seed = 1;
    std::size_t samples = 64;  // coordinates drawn per (layer, seed)
    double epsilon_f32 = 1e-3;
    double epsilon_f64 = 1e-5;
    double tolerance_f32 = 1e-3;
    double tolerance_f64_linear = 1e-6;
    double tolerance_f64 = 1e-4;  // layers that are not piecewise linear
};

// Worst finite-difference disagreement for one layer at one precision,
// maximised over all seeds.
struct GradientSuiteRow {
    std::string layer;
    std::string precision;  // "f32" or "f64"
    bool linear = false;    // piecewise affine in its inputs and parameters
    double epsilon = 0.0;
    double tolerance = 0.0;
    // Componentwise |a - n| / max(|a|, |n|, 1e-8), the asserted figure.
    double max_error = 0.0;
    // Same with the denominator floored at the checked tensor's largest
    // gradient; reported to separate rounding noise from wrong gradients.
    double max_scaled = 0.0;
    std::uint64_t worst_seed = 0;
    int seeds = 0;

    bool passed() const noexcept { return max_error <= tolerance; }
};

// Checks conv1d, fully_connected, batchnorm (train mode), relu, maxpool,
// adaptive_avg_pool, softmax_cross_entropy, mse and the embedding loss. Test
// points are drawn away from the kinks of relu and max-pool so that a central
// difference straddling a kink cannot be mistaken for a bad gradient.
std::vector<GradientSuiteRow> run_gradient_suite(const GradientSuiteOptions& options = {});

// Layer names in suite order.
std::vector<std::string> gradient_suite_layers();

}  // namespace dkamc
