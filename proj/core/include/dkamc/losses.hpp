#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dkamc/tensor.hpp"

namespace dkamc {

template <typename T>
struct LossResult {
    double loss = 0.0;
    Tensor<T> grad;
    // Contribution of each batch row; loss is their mean.
    std::vector<double> per_sample;
};

template <typename T>
Tensor<T> one_hot(std::span<const std::size_t> labels, std::size_t num_classes);

// -(1/B) sum_j sum_k q_jk log p_jk with p = softmax(logits), max-subtracted.
// Every row of `targets` must be one-hot.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& targets);

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> labels);

// Mean of squared differences over all elements; grad = 2(pred - target)/count.
template <typename T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

}  // namespace dkamc
