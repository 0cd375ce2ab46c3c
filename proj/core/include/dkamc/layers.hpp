#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "dkamc/tensor.hpp"

namespace dkamc {

// Layer geometry. Feature maps are laid out [batch, channels, time]; an
// unbatched [channels, time] tensor is accepted wherever a batch is, and the
// result keeps the caller's rank.

enum class Padding { Valid, Same };

struct Conv1DSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_len = 1;
    std::size_t stride = 1;
    Padding padding = Padding::Valid;
};

struct FullyConnectedSpec {
    std::size_t in_dim = 1;
    std::size_t out_dim = 1;
};

struct BatchNormSpec {
    std::size_t channels = 1;
    double epsilon = 1e-5;
    // Weight kept on the old running statistic per update.
    double momentum = 0.9;
};

struct ReLUSpec {};

struct MaxPool1DSpec {
    std::size_t window = 2;
    std::size_t stride = 2;
};

struct AdaptiveAvgPool1DSpec {
    std::size_t out_bins = 1;
};

struct SoftmaxSpec {};

using LayerSpec = std::variant<Conv1DSpec, FullyConnectedSpec, BatchNormSpec, ReLUSpec, MaxPool1DSpec,
                               AdaptiveAvgPool1DSpec, SoftmaxSpec>;

void validate(const LayerSpec& spec);
std::string layer_kind(const LayerSpec& spec);
// Kernel column of the layer table, e.g. "3x1/s2" or "512x128".
std::string kernel_string(const LayerSpec& spec);

enum class Mode { Train, Eval };

// Left/right zero padding for a convolution over `length` samples.
struct PadAmount {
    std::size_t left = 0;
    std::size_t right = 0;
};
PadAmount conv1d_padding(const Conv1DSpec& spec, std::size_t length);
std::size_t conv1d_output_length(const Conv1DSpec& spec, std::size_t length);

// ---- convolution -----------------------------------------------------------

template <typename T>
struct Conv1DGrads {
    Tensor<T> input_grad;
    Tensor<T> weight_grad;
    Tensor<T> bias_grad;
};

// Cross-correlation (no kernel flip). weight is [out, in, kernel], bias [out].
template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& input, const Conv1DSpec& spec, const Tensor<T>& weight,
                         const Tensor<T>& bias);

template <typename T>
Conv1DGrads<T> conv1d_backward(const Tensor<T>& upstream, const Tensor<T>& cached_input, const Conv1DSpec& spec,
                               const Tensor<T>& weight);

// ---- fully connected -------------------------------------------------------

template <typename T>
struct FullyConnectedGrads {
    Tensor<T> input_grad;
    Tensor<T> weight_grad;
    Tensor<T> bias_grad;
};

// weight is [out, in]; input is [batch, in] or [in].
template <typename T>
Tensor<T> fc_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
FullyConnectedGrads<T> fc_backward(const Tensor<T>& upstream, const Tensor<T>& cached_input,
                                   const Tensor<T>& weight);

// ---- batch normalization ---------------------------------------------------

template <typename T>
struct BatchNormCache {
    Mode mode = Mode::Train;
    Tensor<T> normalized;
    std::vector<T> inv_std;
};

template <typename T>
struct BatchNormGrads {
    Tensor<T> input_grad;
    Tensor<T> scale_grad;
    Tensor<T> shift_grad;
};

// Train mode normalizes each channel over batch and time and folds the batch
// statistics into the running ones; eval mode reads the running ones only.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& input, const BatchNormSpec& spec, const Tensor<T>& scale,
                            const Tensor<T>& shift, Tensor<T>& running_mean, Tensor<T>& running_var, Mode mode,
                            BatchNormCache<T>* cache = nullptr);

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& upstream, const BatchNormCache<T>& cache,
                                     const Tensor<T>& scale);

// ---- elementwise / pooling -------------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input);

// Subgradient at zero is zero.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& upstream, const Tensor<T>& cached_input);

template <typename T>
struct MaxPoolResult {
    Tensor<T> output;
    std::vector<std::size_t> argmax;  // flat input index per output element
};

template <typename T>
MaxPoolResult<T> maxpool1d_forward(const Tensor<T>& input, const MaxPool1DSpec& spec);

template <typename T>
Tensor<T> maxpool1d_backward(const Tensor<T>& upstream, const std::vector<std::size_t>& argmax,
                             const Shape& input_shape);

// Bin b spans [floor(b*T/B), ceil((b+1)*T/B)).
template <typename T>
Tensor<T> adaptive_avg_pool_forward(const Tensor<T>& input, const AdaptiveAvgPool1DSpec& spec);

template <typename T>
Tensor<T> adaptive_avg_pool_backward(const Tensor<T>& upstream, const Shape& input_shape,
                                     const AdaptiveAvgPool1DSpec& spec);

// Row-wise softmax over [batch, classes] (or a single row).
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits);

// ---- stateful layer wrappers used by the models ----------------------------
//
// forward() caches what backward() needs; apply() is the pure inference path
// and leaves the layer untouched.

template <typename T>
class Conv1D {
public:
    Conv1D() = default;
    Conv1D(const std::string& name, const Conv1DSpec& spec);

    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> apply(const Tensor<T>& x) const;
    // Accumulates into the parameter grads. Returns the input gradient unless
    // need_input_grad is false, in which case an empty tensor comes back.
    Tensor<T> backward(const Tensor<T>& upstream, bool need_input_grad = true);
    void collect(std::vector<Parameter<T>*>& out);

    const Conv1DSpec& spec() const noexcept { return spec_; }

    Parameter<T> weight;
    Parameter<T> bias;

private:
    Conv1DSpec spec_;
    Tensor<T> cached_input_;
};

template <typename T>
class FullyConnected {
public:
    FullyConnected() = default;
    FullyConnected(const std::string& name, const FullyConnectedSpec& spec);

    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> apply(const Tensor<T>& x) const;
    Tensor<T> backward(const Tensor<T>& upstream, bool need_input_grad = true);
    void collect(std::vector<Parameter<T>*>& out);

    const FullyConnectedSpec& spec() const noexcept { return spec_; }

    Parameter<T> weight;
    Parameter<T> bias;

private:
    FullyConnectedSpec spec_;
    Tensor<T> cached_input_;
};

template <typename T>
class BatchNorm {
public:
    BatchNorm() = default;
    BatchNorm(const std::string& name, const BatchNormSpec& spec);

    Tensor<T> forward(const Tensor<T>& x, Mode mode);
    Tensor<T> apply(const Tensor<T>& x) const;
    Tensor<T> backward(const Tensor<T>& upstream);
    void collect(std::vector<Parameter<T>*>& out);
    void collect_state(std::vector<StateEntry<T>>& out);

    const BatchNormSpec& spec() const noexcept { return spec_; }

    Parameter<T> scale;
    Parameter<T> shift;
    Tensor<T> running_mean;
    Tensor<T> running_var;

private:
    std::string name_;
    BatchNormSpec spec_;
    BatchNormCache<T> cache_;
};

template <typename T>
class ReLU {
public:
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> apply(const Tensor<T>& x) const { return relu_forward(x); }
    Tensor<T> backward(const Tensor<T>& upstream) const { return relu_backward(upstream, cached_input_); }

private:
    Tensor<T> cached_input_;
};

template <typename T>
class MaxPool1D {
public:
    explicit MaxPool1D(const MaxPool1DSpec& spec = {}) : spec_(spec) {}

    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> apply(const Tensor<T>& x) const { return maxpool1d_forward(x, spec_).output; }
    Tensor<T> backward(const Tensor<T>& upstream) const;

    const MaxPool1DSpec& spec() const noexcept { return spec_; }

private:
    MaxPool1DSpec spec_;
    std::vector<std::size_t> argmax_;
    Shape input_shape_;
};

template <typename T>
class AdaptiveAvgPool1D {
public:
    explicit AdaptiveAvgPool1D(const AdaptiveAvgPool1DSpec& spec = {}) : spec_(spec) {}

    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> apply(const Tensor<T>& x) const { return adaptive_avg_pool_forward(x, spec_); }
    Tensor<T> backward(const Tensor<T>& upstream) const;

    const AdaptiveAvgPool1DSpec& spec() const noexcept { return spec_; }

private:
    AdaptiveAvgPool1DSpec spec_;
    Shape input_shape_;
};

}  // namespace dkamc
