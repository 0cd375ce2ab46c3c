#include "dkamc/losses.hpp"

#include <algorithm>
#include <cmath>

#include "dkamc/errors.hpp"

namespace dkamc {

namespace {
std::pair<std::size_t, std::size_t> rows_cols(const Shape& s, const char* what) {
    if (s.size() == 2) return {s[0], s[1]};
    if (s.size() == 1) return {1, s[0]};
    throw ShapeError(std::string(what) + ": expected [batch, classes], got " + shape_string(s));
}
}  // namespace

template <typename T>
Tensor<T> one_hot(std::span<const std::size_t> labels, std::size_t num_classes) {
    Tensor<T> out({labels.size(), num_classes});
    for (std::size_t j = 0; j < labels.size(); ++j) {
        if (labels[j] >= num_classes) throw InvalidArgument("label out of range");
        out.at(j, labels[j]) = T{1};
    }
    return out;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& targets) {
    require_shape(targets, logits.shape(), "softmax_cross_entropy targets");
    const auto [batch, classes] = rows_cols(logits.shape(), "softmax_cross_entropy");
    LossResult<T> r;
    r.grad = Tensor<T>(logits.shape());
    r.per_sample.resize(batch);
    double total = 0.0;
    for (std::size_t j = 0; j < batch; ++j) {
        const T* z = logits.raw() + j * classes;
        const T* q = targets.raw() + j * classes;
        std::size_t ones = 0;
        for (std::size_t k = 0; k < classes; ++k) {
            if (q[k] == T{1}) {
                ++ones;
            } else if (q[k] != T{0}) {
                ones = 2;
                break;
            }
        }
        if (ones != 1) throw InvalidArgument("softmax_cross_entropy: target row " + std::to_string(j) + " is not one-hot");
        const double zmax = *std::max_element(z, z + classes);
        double sum = 0.0;
        for (std::size_t k = 0; k < classes; ++k) sum += std::exp(static_cast<double>(z[k]) - zmax);
        const double log_sum = std::log(sum);
        double row_loss = 0.0;
        for (std::size_t k = 0; k < classes; ++k) {
            const double log_p = static_cast<double>(z[k]) - zmax - log_sum;
            row_loss -= static_cast<double>(q[k]) * log_p;
            r.grad[j * classes + k] = static_cast<T>((std::exp(log_p) - static_cast<double>(q[k])) / batch);
        }
        r.per_sample[j] = row_loss;
        total += row_loss;
    }
    r.loss = total / static_cast<double>(batch);
    return r;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> labels) {
    const auto [batch, classes] = rows_cols(logits.shape(), "softmax_cross_entropy");
    if (labels.size() != batch) throw ShapeError("softmax_cross_entropy: label count does not match batch");
    Tensor<T> targets = one_hot<T>(labels, classes);
    targets.reshape(logits.shape());
    return softmax_cross_entropy(logits, targets);
}

template <typename T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    require_shape(target, pred.shape(), "mse_loss target");
    LossResult<T> r;
    r.grad = Tensor<T>(pred.shape());
    const std::size_t count = pred.size();
    const std::size_t rows = pred.rank() >= 2 ? pred.dim(0) : 1;
    const std::size_t width = count / rows;
    r.per_sample.assign(rows, 0.0);
    double total = 0.0;
    for (std::size_t j = 0; j < rows; ++j) {
        double row = 0.0;
        for (std::size_t k = 0; k < width; ++k) {
            const std::size_t idx = j * width + k;
            const double d = static_cast<double>(pred[idx]) - static_cast<double>(target[idx]);
            row += d * d;
            r.grad[idx] = static_cast<T>(2.0 * d / static_cast<double>(count));
        }
        r.per_sample[j] = row / static_cast<double>(width);
        total += row;
    }
    r.loss = total / static_cast<double>(count);
    return r;
}

template Tensor<float> one_hot<float>(std::span<const std::size_t>, std::size_t);
template Tensor<double> one_hot<double>(std::span<const std::size_t>, std::size_t);
template LossResult<float> softmax_cross_entropy(const Tensor<float>&, const Tensor<float>&);
template LossResult<double> softmax_cross_entropy(const Tensor<double>&, const Tensor<double>&);
template LossResult<float> softmax_cross_entropy(const Tensor<float>&, std::span<const std::size_t>);
template LossResult<double> softmax_cross_entropy(const Tensor<double>&, std::span<const std::size_t>);
template LossResult<float> mse_loss(const Tensor<float>&, const Tensor<float>&);
template LossResult<double> mse_loss(const Tensor<double>&, const Tensor<double>&);

}  // namespace dkamc
