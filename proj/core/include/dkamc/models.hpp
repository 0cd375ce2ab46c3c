#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dkamc/attributes.hpp"
#include "dkamc/layers.hpp"
#include "dkamc/tensor.hpp"

namespace dkamc {

inline constexpr std::size_t kFrameChannels = 2;
inline constexpr std::size_t kFrameLength = 128;
inline constexpr std::size_t kVisualFeatureDim = 128;
inline constexpr std::size_t kTransformHidden = 64;

// One row of a model's layer table.
struct LayerRow {
    std::string name;
    std::string kind;
    std::string kernel;
    Shape output;
};
using ShapeTrace = std::vector<LayerRow>;

// Glorot-uniform weights, zero biases, unit batch-norm scale, zero shift.
// Momentum and grad buffers are cleared. Deterministic per seed.
template <typename T>
void init_parameters(const std::vector<Parameter<T>*>& params, std::uint64_t seed);

// Stride-2 downsampling conv followed by four parallel convs (kernels 7, 5,
// 3, 1) whose outputs are concatenated along channels.
template <typename T>
class MSModule {
public:
    static constexpr std::array<std::size_t, 4> kBranchKernels{7, 5, 3, 1};
    static constexpr std::size_t kBranchChannels = 32;
    static constexpr std::size_t kDownsampleChannels = 32;

    MSModule() = default;
    MSModule(const std::string& name, std::size_t in_channels);

    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> apply(const Tensor<T>& x, ShapeTrace* trace = nullptr) const;
    Tensor<T> backward(const Tensor<T>& upstream, bool need_input_grad);
    void collect(std::vector<Parameter<T>*>& out);

    std::size_t out_channels() const noexcept { return kBranchChannels * kBranchKernels.size(); }

private:
    std::string name_;
    Conv1D<T> down_;
    ReLU<T> down_relu_;
    std::array<Conv1D<T>, 4> branches_;
    std::array<ReLU<T>, 4> branch_relus_;
};

// Visual model: 2x128 -> MS -> 128x64 -> MS -> 128x32 -> pool(4 bins) ->
// 128x4 -> flatten 512 -> FC+ReLU -> feature[128] -> FC -> logits[K].
template <typename T>
class VisualModel {
public:
    struct Output {
        Tensor<T> feature;
        Tensor<T> logits;
    };

    explicit VisualModel(std::size_t num_classes = 4);

    // Training path; caches activations for backward().
    Output forward(const Tensor<T>& frames);
    Output infer(const Tensor<T>& frames, ShapeTrace* trace = nullptr) const;
    // Accumulates parameter gradients. feature_grad, when given, is added to
    // the gradient flowing into the feature from the softmax head.
    void backward(const Tensor<T>& logit_grad, const Tensor<T>* feature_grad = nullptr);

    std::vector<Parameter<T>*> parameters();
    std::vector<StateEntry<T>> state();
    void init(std::uint64_t seed) { init_parameters(parameters(), seed); }
    ShapeTrace describe() const;

    std::size_t num_classes() const noexcept { return num_classes_; }

    FullyConnected<T>& softmax_head() noexcept { return fc_softmax_; }
    FullyConnected<T>& feature_layer() noexcept { return fc_feature_; }

private:
    std::size_t num_classes_;
    MSModule<T> ms1_;
    MSModule<T> ms2_;
    AdaptiveAvgPool1D<T> gap_;
    FullyConnected<T> fc_feature_;
    ReLU<T> feature_relu_;
    FullyConnected<T> fc_softmax_;
    Shape pooled_shape_;
};

// conv_a -> bn_a -> relu -> conv_b -> bn_b, plus the identity skip, then relu.
template <typename T>
class ResUnit {
public:
    ResUnit() = default;
    ResUnit(const std::string& name, std::size_t channels);

    Tensor<T> forward(const Tensor<T>& x, Mode mode);
    Tensor<T> apply(const Tensor<T>& x) const;
    Tensor<T> backward(const Tensor<T>& upstream);
    void collect(std::vector<Parameter<T>*>& out);
    void collect_state(std::vector<StateEntry<T>>& out);

    Conv1D<T> conv_a;
    BatchNorm<T> bn_a;
    Conv1D<T> conv_b;
    BatchNorm<T> bn_b;

private:
    ReLU<T> relu_a_;
    ReLU<T> relu_out_;
};

// Attribute model: 1x1 stem conv to 32 channels, three stacks of two ResUnits
// and a 2x max-pool (128 -> 64 -> 32 -> 16), global average pool, FC -> 6.
template <typename T>
class AttributeModel {
public:
    static constexpr std::size_t kChannels = 32;
    static constexpr std::size_t kStacks = 3;

    AttributeModel();

    Tensor<T> forward(const Tensor<T>& frames, Mode mode);
    // Eval-mode inference (running batch-norm statistics).
    Tensor<T> infer(const Tensor<T>& frames, ShapeTrace* trace = nullptr) const;
    void backward(const Tensor<T>& upstream);

    std::vector<Parameter<T>*> parameters();
    std::vector<StateEntry<T>> state();
    void init(std::uint64_t seed) { init_parameters(parameters(), seed); }
    ShapeTrace describe() const;

    ResUnit<T>& unit(std::size_t i) { return units_.at(i); }

private:
    Conv1D<T> stem_;
    std::array<ResUnit<T>, 2 * kStacks> units_;
    std::array<MaxPool1D<T>, kStacks> pools_;
    AdaptiveAvgPool1D<T> gap_;
    FullyConnected<T> fc_;
    Shape pooled_shape_;
};

// Maps an attribute vector into the visual feature space:
// relu(W2 relu(W1 a + b1) + b2).
template <typename T>
class TransformNet {
public:
    TransformNet();

    Tensor<T> forward(const Tensor<T>& attributes);
    Tensor<T> infer(const Tensor<T>& attributes, ShapeTrace* trace = nullptr) const;
    Tensor<T> backward(const Tensor<T>& upstream, bool need_input_grad = false);

    std::vector<Parameter<T>*> parameters();
    std::vector<StateEntry<T>> state();
    void init(std::uint64_t seed) { init_parameters(parameters(), seed); }
    ShapeTrace describe() const;

    FullyConnected<T>& fc1() noexcept { return fc1_; }
    FullyConnected<T>& fc2() noexcept { return fc2_; }
    const FullyConnected<T>& fc1() const noexcept { return fc1_; }
    const FullyConnected<T>& fc2() const noexcept { return fc2_; }

private:
    FullyConnected<T> fc1_;
    ReLU<T> relu1_;
    FullyConnected<T> fc2_;
    ReLU<T> relu2_;
};

// Row c is the transform of class c's attribute label.
template <typename T>
Tensor<T> class_prototypes(const TransformNet<T>& tnet, const ClassAttributeMatrix& cam);

// Which of the three networks a checkpoint holds, inferred from tensor names.
enum class ModelKind { Visual, Attribute, Transform };
ModelKind checkpoint_model_kind(const std::vector<std::string>& tensor_names);

}  // namespace dkamc
