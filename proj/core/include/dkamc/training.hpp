#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dkamc/attributes.hpp"
#include "dkamc/dataset.hpp"
#include "dkamc/models.hpp"

namespace dkamc {

struct TrainConfig {
    double lr = 0.01;
    // Transform-net stage only. The visual features it regresses onto are
    // unnormalized (squared norms in the thousands), and at 0.01 the first
    // momentum steps push most ReLU units of the net below zero for good.
    double lr_embed = 0.001;
    double momentum = 0.9;
    int epochs_visual = 40;
    int epochs_attr = 40;
    int epochs_embed = 40;
    std::size_t batch_size = 64;
    double lambda_reg = 1e-4;
    std::uint64_t seed = 0;
    double train_fraction = 0.8;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    // Visual: accuracy. Attribute: MSE. Embedding: nearest-prototype accuracy.
    // NaN when no validation set was supplied.
    double val_metric = 0.0;
    double seconds = 0.0;
};

struct TrainReport {
    std::string stage;
    std::vector<EpochRecord> epochs;
    double total_seconds = 0.0;

    // Header epoch,train_loss,val_metric,seconds. With timing off the seconds
    // column is written as 0 so the file depends only on the computation.
    std::string to_csv(bool timing) const;
    static TrainReport from_csv(const std::string& stage, const std::string& csv);
};

struct DatasetSplit {
    Dataset train;
    Dataset test;
};

// Stratified per (class, snr) cell: each cell of n frames contributes
// round(n * train_fraction), clamped to [1, n-1], frames to train. Frames keep
// their original relative order.
DatasetSplit split_dataset(const Dataset& dataset, double train_fraction, std::uint64_t seed);

// [count, 2, N] batch tensor for the given frame indices.
Tensor<float> frames_tensor(const Dataset& dataset, std::span<const std::size_t> indices);
Tensor<float> frame_tensor(const IQFrame& frame);

// Called after each epoch with the epoch number (1-based).
using EpochHook = std::function<void(int)>;

// Cross-entropy pretraining. When `validation` is non-empty the weights with
// the best validation accuracy are restored at the end.
TrainReport pretrain_visual(VisualModel<float>& model, const Dataset& train, const Dataset* validation,
                            const TrainConfig& config, const EpochHook& hook = {});

// MSE regression onto the class attribute rows. With a validation set the
// weights with the lowest validation MSE are restored at the end.
TrainReport pretrain_attribute(AttributeModel<float>& model, const Dataset& train, const Dataset* validation,
                               const ClassAttributeMatrix& cam, const TrainConfig& config,
                               const EpochHook& hook = {});

struct EmbeddingLossValue {
    double loss = 0.0;        // data_term + reg_term
    double data_term = 0.0;   // mean squared distance
    double reg_term = 0.0;    // lambda * (|W1|^2 + |W2|^2)
    std::vector<double> per_sample;
};

// Least-squares embedding loss between visual features [B, 128] and the
// transform of attribute predictions [B, 6]. Gradients are accumulated into the
// transform net's parameters only; the regularizer covers the two weight
// matrices and not the biases.
template <typename T>
EmbeddingLossValue embedding_loss(const Tensor<T>& visual_features, const Tensor<T>& attribute_predictions,
                                  TransformNet<T>& tnet, double lambda_reg);

// Trains only the transform net. The visual and attribute models are read
// through their const inference paths and never modified.
TrainReport train_embedding(const VisualModel<float>& visual, const AttributeModel<float>& attribute,
                            TransformNet<float>& tnet, const Dataset& train, const Dataset* validation,
                            const ClassAttributeMatrix& cam, const TrainConfig& config, unsigned workers = 1,
                            const EpochHook& hook = {});

struct Classification {
    std::size_t label = 0;
    std::vector<double> distances;
};

// Index of the nearest prototype row (Euclidean); ties go to the lowest index.
template <typename T>
std::size_t nearest_prototype(std::span<const T> feature, const Tensor<T>& prototypes,
                              std::vector<double>* distances = nullptr);

template <typename T>
std::size_t argmax_index(std::span<const T> values);

// Dual-driven classifier: nearest class prototype in visual-feature space.
Classification classify(const IQFrame& frame, const VisualModel<float>& visual, const TransformNet<float>& tnet,
                        const ClassAttributeMatrix& cam);

// Pure data-driven baseline: argmax of the visual model's logits.
std::size_t classify_baseline(const IQFrame& frame, const VisualModel<float>& visual);

// Batched variants over a whole dataset, fanned out over `workers` threads.
std::vector<std::size_t> classify_dataset(const Dataset& dataset, const VisualModel<float>& visual,
                                          const TransformNet<float>& tnet, const ClassAttributeMatrix& cam,
                                          unsigned workers = 1);
std::vector<std::size_t> classify_baseline_dataset(const Dataset& dataset, const VisualModel<float>& visual,
                                                   unsigned workers = 1);

// Visual features [frames, 128] and attribute predictions [frames, 6].
Tensor<float> visual_features(const Dataset& dataset, const VisualModel<float>& visual, unsigned workers = 1);
Tensor<float> attribute_predictions(const Dataset& dataset, const AttributeModel<float>& attribute,
                                    unsigned workers = 1);

}  // namespace dkamc
