#pragma once

#include <span>

#include "dkamc/tensor.hpp"

namespace dkamc {

// Heavy-ball SGD: v <- momentum*v + grad; value <- value - lr*v; grad <- 0.
template <typename T>
void sgd_momentum_step(std::span<Parameter<T>* const> params, double lr, double momentum) {
    const T lr_t = static_cast<T>(lr);
    const T mom_t = static_cast<T>(momentum);
    for (Parameter<T>* p : params) {
        T* value = p->value.raw();
        T* grad = p->grad.raw();
        T* vel = p->momentum.raw();
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            vel[i] = mom_t * vel[i] + grad[i];
            value[i] -= lr_t * vel[i];
            grad[i] = T{0};
        }
    }
}

template <typename T>
void zero_grads(std::span<Parameter<T>* const> params) {
    for (Parameter<T>* p : params) p->zero_grad();
}

}  // namespace dkamc
