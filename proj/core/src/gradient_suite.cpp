#include "dkamc/gradient_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "dkamc/gradcheck.hpp"
#include "dkamc/layers.hpp"
#include "dkamc/losses.hpp"
#include "dkamc/models.hpp"
#include "dkamc/training.hpp"

namespace dkamc {

namespace {

using Rng = std::mt19937_64;

template <typename T>
struct Probe {
    std::span<T> values;
    std::vector<T> analytic;
};

struct Case {
    std::string name;
    bool linear;
};

const std::vector<Case>& cases() {
    static const std::vector<Case> c{
        {"conv1d", true},       {"fully_connected", true},       {"batchnorm", false},
        {"relu", true},         {"maxpool", true},               {"adaptive_avg_pool", true},
        {"softmax_cross_entropy", false}, {"mse", false},        {"embedding_loss", false},
    };
    return c;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

template <typename T>
Tensor<T> uniform(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(shape);
    std::uniform_real_distribution<double> d(lo, hi);
    for (T& v : t.data()) v = static_cast<T>(d(rng));
    return t;
}

// Values with |x| in [margin, 1]: no relu kink within reach of the step.
template <typename T>
Tensor<T> away_from_zero(const Shape& shape, Rng& rng, double margin) {
    Tensor<T> t(shape);
    std::uniform_real_distribution<double> mag(margin, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (T& v : t.data()) v = static_cast<T>(sign(rng) ? mag(rng) : -mag(rng));
    return t;
}

// All entries distinct with gaps of at least 0.06, so every pooling window
// has a unique maximum that stays the maximum under a small perturbation.
template <typename T>
Tensor<T> well_separated(const Shape& shape, Rng& rng) {
    Tensor<T> t(shape);
    std::vector<std::size_t> perm(t.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::uniform_real_distribution<double> jitter(-0.02, 0.02);
    const double centre = 0.05 * static_cast<double>(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(0.1 * double(perm[i]) - centre + jitter(rng));
    return t;
}

template <typename T>
double weighted_sum(const Tensor<T>& y, const Tensor<T>& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(y[i]) * static_cast<double>(w[i]);
    return s;
}

template <typename T>
std::vector<T> copy_of(std::span<const T> s) {
    return std::vector<T>(s.begin(), s.end());
}

template <typename T>
void randomize(Parameter<T>& p, Rng& rng) {
    std::uniform_real_distribution<double> d(-0.5, 0.5);
    for (T& v : p.value.data()) v = static_cast<T>(d(rng));
    if (p.role == ParamRole::Scale)
        for (T& v : p.value.data()) v = static_cast<T>(1.0 + static_cast<double>(v));
}

template <typename T>
GradCheckResult check(const std::function<double()>& loss, std::vector<Probe<T>>& probes, double eps, std::size_t samples,
             std::uint64_t seed) {
    std::vector<GradProbe<T>> gp;
    for (auto& p : probes) gp.push_back({p.values, std::span<const T>(p.analytic)});
    return gradient_check<T>([&] { return scalar_loss(loss()); }, gp, {eps, samples, seed});
}

template <typename T>
GradCheckResult run_case(const std::string& name, std::uint64_t seed, double eps, std::size_t samples) {
    Rng rng(seed);
    std::vector<Probe<T>> probes;

    if (name == "conv1d") {
        Conv1DSpec spec;
        spec.in_channels = pick(rng, 1, 3);
        spec.out_channels = pick(rng, 1, 3);
        spec.kernel_len = std::array<std::size_t, 4>{1, 3, 5, 7}[pick(rng, 0, 3)];
        spec.stride = pick(rng, 1, 2);
        spec.padding = pick(rng, 0, 1) ? Padding::Same : Padding::Valid;
        const std::size_t len = pick(rng, spec.kernel_len + 1, 14);
        Conv1D<T> layer("conv", spec);
        randomize(layer.weight, rng);
        randomize(layer.bias, rng);
        Tensor<T> x = uniform<T>({pick(rng, 1, 2), spec.in_channels, len}, rng);
        const Tensor<T> w = uniform<T>(layer.apply(x).shape(), rng);
        layer.forward(x);
        const Tensor<T> gx = layer.backward(w);
        probes.push_back({x.data(), copy_of<T>(gx.data())});
        probes.push_back({layer.weight.value.data(), copy_of<T>(layer.weight.grad.data())});
        probes.push_back({layer.bias.value.data(), copy_of<T>(layer.bias.grad.data())});
        return check<T>([&] { return weighted_sum(layer.apply(x), w); }, probes, eps, samples, seed);
    }
    if (name == "fully_connected") {
        FullyConnectedSpec spec{pick(rng, 2, 8), pick(rng, 2, 6)};
        FullyConnected<T> layer("fc", spec);
        randomize(layer.weight, rng);
        randomize(layer.bias, rng);
        Tensor<T> x = uniform<T>({pick(rng, 1, 3), spec.in_dim}, rng);
        const Tensor<T> w = uniform<T>({x.dim(0), spec.out_dim}, rng);
        layer.forward(x);
        const Tensor<T> gx = layer.backward(w);
        probes.push_back({x.data(), copy_of<T>(gx.data())});
        probes.push_back({layer.weight.value.data(), copy_of<T>(layer.weight.grad.data())});
        probes.push_back({layer.bias.value.data(), copy_of<T>(layer.bias.grad.data())});
        return check<T>([&] { return weighted_sum(layer.apply(x), w); }, probes, eps, samples, seed);
    }
    if (name == "batchnorm") {
        BatchNormSpec spec;
        spec.channels = pick(rng, 1, 3);
        BatchNorm<T> layer("bn", spec);
        randomize(layer.scale, rng);
        randomize(layer.shift, rng);
        Tensor<T> x = uniform<T>({pick(rng, 2, 3), spec.channels, pick(rng, 3, 6)}, rng);
        const Tensor<T> w = uniform<T>(x.shape(), rng);
        layer.forward(x, Mode::Train);
        const Tensor<T> gx = layer.backward(w);
        probes.push_back({x.data(), copy_of<T>(gx.data())});
        probes.push_back({layer.scale.value.data(), copy_of<T>(layer.scale.grad.data())});
        probes.push_back({layer.shift.value.data(), copy_of<T>(layer.shift.grad.data())});
        return check<T>([&] { return weighted_sum(layer.forward(x, Mode::Train), w); }, probes, eps, samples, seed);
    }
    if (name == "relu") {
        ReLU<T> layer;
        Tensor<T> x = away_from_zero<T>({pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 4, 10)}, rng, 0.05);
        const Tensor<T> w = uniform<T>(x.shape(), rng);
        layer.forward(x);
        probes.push_back({x.data(), copy_of<T>(layer.backward(w).data())});
        return check<T>([&] { return weighted_sum(layer.apply(x), w); }, probes, eps, samples, seed);
    }
    if (name == "maxpool") {
        MaxPool1D<T> layer({2, 2});
        Tensor<T> x = well_separated<T>({pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 4, 11)}, rng);
        const Tensor<T> w = uniform<T>(layer.apply(x).shape(), rng);
        layer.forward(x);
        probes.push_back({x.data(), copy_of<T>(layer.backward(w).data())});
        return check<T>([&] { return weighted_sum(layer.apply(x), w); }, probes, eps, samples, seed);
    }
    if (name == "adaptive_avg_pool") {
        const std::size_t bins = pick(rng, 1, 4);
        AdaptiveAvgPool1D<T> layer({bins});
        Tensor<T> x = uniform<T>({pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, bins, 11)}, rng);
        const Tensor<T> w = uniform<T>(layer.apply(x).shape(), rng);
        layer.forward(x);
        probes.push_back({x.data(), copy_of<T>(layer.backward(w).data())});
        return check<T>([&] { return weighted_sum(layer.apply(x), w); }, probes, eps, samples, seed);
    }
    if (name == "softmax_cross_entropy") {
        const std::size_t b = pick(rng, 1, 4), k = pick(rng, 2, 5);
        Tensor<T> logits = uniform<T>({b, k}, rng, -2.0, 2.0);
        std::vector<std::size_t> labels(b);
        for (auto& l : labels) l = pick(rng, 0, k - 1);
        const auto r = softmax_cross_entropy(logits, std::span<const std::size_t>(labels));
        probes.push_back({logits.data(), copy_of<T>(r.grad.data())});
        return check<T>([&] { return softmax_cross_entropy(logits, std::span<const std::size_t>(labels)).loss; },
                        probes, eps, samples, seed);
    }
    if (name == "mse") {
        const Shape shape{pick(rng, 1, 4), pick(rng, 1, 6)};
        Tensor<T> pred = uniform<T>(shape, rng);
        const Tensor<T> target = uniform<T>(shape, rng);
        const auto r = mse_loss(pred, target);
        probes.push_back({pred.data(), copy_of<T>(r.grad.data())});
        return check<T>([&] { return mse_loss(pred, target).loss; }, probes, eps, samples, seed);
    }
    if (name == "embedding_loss") {
        const std::size_t b = pick(rng, 2, 3);
        TransformNet<T> tnet;
        tnet.init(seed);
        for (Parameter<T>* p : tnet.parameters())
            if (p->role == ParamRole::Bias) randomize(*p, rng);
        const Tensor<T> phi1 = uniform<T>({b, kVisualFeatureDim}, rng, 0.0, 1.0);
        const Tensor<T> phi2 = uniform<T>({b, kAttributeCount}, rng, 0.0, 1.0);
        const double lambda = pick(rng, 0, 1) ? 1e-2 : 0.0;
        // Push every pre-activation at least 0.02 away from zero by moving the
        // unit's bias; repeated because one unit is shared by all batch rows.
        for (FullyConnected<T>* fc : {&tnet.fc1(), &tnet.fc2()}) {
            for (int round = 0; round < 64; ++round) {
                const Tensor<T> z = fc == &tnet.fc1() ? tnet.fc1().apply(phi2)
                                                      : tnet.fc2().apply(relu_forward(tnet.fc1().apply(phi2)));
                bool moved = false;
                for (std::size_t r = 0; r < b; ++r) {
                    for (std::size_t j = 0; j < z.dim(1); ++j) {
                        if (std::abs(static_cast<double>(z.at(r, j))) < 0.02) {
                            fc->bias.value[j] = static_cast<T>(fc->bias.value[j] + T(0.05));
                            moved = true;
                        }
                    }
                }
                if (!moved) break;
            }
        }
        for (Parameter<T>* p : tnet.parameters()) p->zero_grad();
        embedding_loss(phi1, phi2, tnet, lambda);
        for (Parameter<T>* p : tnet.parameters()) probes.push_back({p->value.data(), copy_of<T>(p->grad.data())});
        return check<T>([&] { return embedding_loss(phi1, phi2, tnet, lambda).loss; }, probes, eps, samples, seed);
    }
    throw InvalidArgument("unknown gradient-suite layer '" + name + "'");
}

template <typename T>
GradientSuiteRow run_rows(const Case& c, const GradientSuiteOptions& o, bool f32) {
    GradientSuiteRow row;
    row.layer = c.name;
    row.precision = f32 ? "f32" : "f64";
    row.linear = c.linear;
    row.epsilon = f32 ? o.epsilon_f32 : o.epsilon_f64;
    row.tolerance = f32 ? o.tolerance_f32 : (c.linear ? o.tolerance_f64_linear : o.tolerance_f64);
    row.seeds = o.seeds;
    for (int s = 0; s < o.seeds; ++s) {
        const std::uint64_t seed = o.base_seed + static_cast<std::uint64_t>(s);
        const GradCheckResult r = run_case<T>(c.name, seed, row.epsilon, o.samples);
        if (s == 0 || r.componentwise > row.max_error) {
            row.max_error = r.componentwise;
            row.worst_seed = seed;
        }
        row.max_scaled = std::max(row.max_scaled, r.scaled);
    }
    return row;
}

}  // namespace

std::vector<std::string> gradient_suite_layers() {
    std::vector<std::string> out;
    for (const auto& c : cases()) out.push_back(c.name);
    return out;
}

std::vector<GradientSuiteRow> run_gradient_suite(const GradientSuiteOptions& options) {
    if (options.seeds < 1) throw InvalidArgument("gradient suite needs at least one seed");
    std::vector<GradientSuiteRow> rows;
    for (const auto& c : cases()) {
        rows.push_back(run_rows<float>(c, options, true));
        rows.push_back(run_rows<double>(c, options, false));
    }
    return rows;
}

}  // namespace dkamc
