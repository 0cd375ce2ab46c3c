#include "dkamc/layers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dkamc {

std::string shape_string(const Shape& shape) {
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += 'x';
        s += std::to_string(shape[i]);
    }
    return s.empty() ? "scalar" : s;
}

DivergenceError::DivergenceError(const std::string& stage, int epoch, std::size_t batch, double loss)
    : Error(stage + ": training diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
            " (loss " + std::to_string(loss) + ")"),
      epoch_(epoch),
      batch_(batch) {}

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Batch/channel/time view of a feature-map shape.
struct MapDims {
    std::size_t batch;
    std::size_t channels;
    std::size_t time;
    bool batched;
};

MapDims map_dims(const Shape& shape, const char* what) {
    if (shape.size() == 3) return {shape[0], shape[1], shape[2], true};
    if (shape.size() == 2) return {1, shape[0], shape[1], false};
    throw ShapeError(std::string(what) + ": expected [batch, channels, time] or [channels, time], got " +
                     shape_string(shape));
}

Shape map_shape(const MapDims& d, std::size_t channels, std::size_t time) {
    if (d.batched) return {d.batch, channels, time};
    return {channels, time};
}

struct RowDims {
    std::size_t batch;
    std::size_t width;
    bool batched;
};

RowDims row_dims(const Shape& shape, const char* what) {
    if (shape.size() == 2) return {shape[0], shape[1], true};
    if (shape.size() == 1) return {1, shape[0], false};
    throw ShapeError(std::string(what) + ": expected [batch, features] or [features], got " + shape_string(shape));
}

Shape row_shape(const RowDims& d, std::size_t width) {
    if (d.batched) return {d.batch, width};
    return {width};
}

// Range of output positions t whose tap t*stride + offset lands inside [0, length).
void valid_taps(std::ptrdiff_t offset, std::size_t stride, std::size_t length, std::size_t out_len,
                std::size_t& lo, std::size_t& hi) {
    const auto s = static_cast<std::ptrdiff_t>(stride);
    const auto n = static_cast<std::ptrdiff_t>(length);
    std::ptrdiff_t first = offset >= 0 ? 0 : (-offset + s - 1) / s;
    std::ptrdiff_t last = n - 1 - offset;  // t*s <= last
    std::ptrdiff_t end = last < 0 ? 0 : last / s + 1;
    end = std::min<std::ptrdiff_t>(end, static_cast<std::ptrdiff_t>(out_len));
    lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(first, 0));
    hi = static_cast<std::size_t>(std::max<std::ptrdiff_t>(end, static_cast<std::ptrdiff_t>(lo)));
}

void check_conv_params(const Conv1DSpec& spec, const Shape& w, const Shape& b) {
    if (w != Shape{spec.out_channels, spec.in_channels, spec.kernel_len}) {
        throw ShapeError("conv1d: weight shape " + shape_string(w) + " does not match spec");
    }
    if (b != Shape{spec.out_channels}) throw ShapeError("conv1d: bias shape " + shape_string(b) + " does not match spec");
}

template <typename T>
void conv1d_accumulate_grads(const Tensor<T>& upstream, const Tensor<T>& input, const Conv1DSpec& spec,
                             const Tensor<T>& weight, Tensor<T>* input_grad, Tensor<T>& weight_grad,
                             Tensor<T>& bias_grad) {
    const MapDims d = map_dims(input.shape(), "conv1d_backward");
    const std::size_t out_len = conv1d_output_length(spec, d.time);
    require_shape(upstream, map_shape(d, spec.out_channels, out_len), "conv1d_backward upstream");
    const PadAmount pad = conv1d_padding(spec, d.time);
    const std::size_t cin = spec.in_channels, cout = spec.out_channels, klen = spec.kernel_len;
    const std::size_t stride = spec.stride;

    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t co = 0; co < cout; ++co) {
            const T* g = upstream.raw() + (b * cout + co) * out_len;
            T gsum = 0;
            for (std::size_t t = 0; t < out_len; ++t) gsum += g[t];
            bias_grad[co] += gsum;
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const T* x = input.raw() + (b * cin + ci) * d.time;
                T* dx = input_grad ? input_grad->raw() + (b * cin + ci) * d.time : nullptr;
                const T* w = weight.raw() + (co * cin + ci) * klen;
                T* dw = weight_grad.raw() + (co * cin + ci) * klen;
                for (std::size_t k = 0; k < klen; ++k) {
                    const auto offset = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(pad.left);
                    std::size_t lo, hi;
                    valid_taps(offset, stride, d.time, out_len, lo, hi);
                    T acc = 0;
                    const T wk = w[k];
                    if (stride == 1) {
                        const T* xs = x + offset;
                        for (std::size_t t = lo; t < hi; ++t) acc += g[t] * xs[t];
                        if (dx) {
                            T* dxs = dx + offset;
                            for (std::size_t t = lo; t < hi; ++t) dxs[t] += wk * g[t];
                        }
                    } else {
                        for (std::size_t t = lo; t < hi; ++t) {
                            const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(t * stride) + offset;
                            acc += g[t] * x[idx];
                            if (dx) dx[idx] += wk * g[t];
                        }
                    }
                    dw[k] += acc;
                }
            }
        }
    }
}

template <typename T>
void fc_accumulate_grads(const Tensor<T>& upstream, const Tensor<T>& input, const Tensor<T>& weight,
                         Tensor<T>* input_grad, Tensor<T>& weight_grad, Tensor<T>& bias_grad) {
    const RowDims d = row_dims(input.shape(), "fc_backward");
    const std::size_t out_dim = weight.dim(0), in_dim = weight.dim(1);
    if (d.width != in_dim) throw ShapeError("fc_backward: input width does not match weight");
    require_shape(upstream, row_shape(d, out_dim), "fc_backward upstream");
    for (std::size_t b = 0; b < d.batch; ++b) {
        const T* x = input.raw() + b * in_dim;
        const T* g = upstream.raw() + b * out_dim;
        T* dx = input_grad ? input_grad->raw() + b * in_dim : nullptr;
        for (std::size_t o = 0; o < out_dim; ++o) {
            const T go = g[o];
            bias_grad[o] += go;
            T* dw = weight_grad.raw() + o * in_dim;
            const T* w = weight.raw() + o * in_dim;
            for (std::size_t i = 0; i < in_dim; ++i) dw[i] += go * x[i];
            if (dx) {
                for (std::size_t i = 0; i < in_dim; ++i) dx[i] += go * w[i];
            }
        }
    }
}

}  // namespace

// ---- specs -----------------------------------------------------------------

void validate(const LayerSpec& spec) {
    std::visit(Overloaded{
                   [](const Conv1DSpec& s) {
                       if (!s.in_channels || !s.out_channels || !s.kernel_len || !s.stride)
                           throw InvalidArgument("conv1d spec dimensions must be positive");
                   },
                   [](const FullyConnectedSpec& s) {
                       if (!s.in_dim || !s.out_dim) throw InvalidArgument("fc spec dimensions must be positive");
                   },
                   [](const BatchNormSpec& s) {
                       if (!s.channels || !(s.epsilon > 0) || s.momentum < 0 || s.momentum >= 1)
                           throw InvalidArgument("batchnorm spec is invalid");
                   },
                   [](const ReLUSpec&) {},
                   [](const MaxPool1DSpec& s) {
                       if (!s.window || !s.stride) throw InvalidArgument("maxpool spec dimensions must be positive");
                   },
                   [](const AdaptiveAvgPool1DSpec& s) {
                       if (!s.out_bins) throw InvalidArgument("adaptive pool needs at least one bin");
                   },
                   [](const SoftmaxSpec&) {},
               },
               spec);
}

std::string layer_kind(const LayerSpec& spec) {
    return std::visit(Overloaded{
                          [](const Conv1DSpec&) { return std::string("Conv1D"); },
                          [](const FullyConnectedSpec&) { return std::string("FullyConnected"); },
                          [](const BatchNormSpec&) { return std::string("BatchNorm"); },
                          [](const ReLUSpec&) { return std::string("ReLU"); },
                          [](const MaxPool1DSpec&) { return std::string("MaxPool1D"); },
                          [](const AdaptiveAvgPool1DSpec&) { return std::string("AdaptiveAvgPool1D"); },
                          [](const SoftmaxSpec&) { return std::string("Softmax"); },
                      },
                      spec);
}

std::string kernel_string(const LayerSpec& spec) {
    return std::visit(Overloaded{
                          [](const Conv1DSpec& s) {
                              std::string k = std::to_string(s.kernel_len) + "x1";
                              if (s.stride != 1) k += "/s" + std::to_string(s.stride);
                              return k;
                          },
                          [](const FullyConnectedSpec& s) {
                              return std::to_string(s.in_dim) + "x" + std::to_string(s.out_dim);
                          },
                          [](const BatchNormSpec&) { return std::string("-"); },
                          [](const ReLUSpec&) { return std::string("-"); },
                          [](const MaxPool1DSpec& s) { return std::to_string(s.window) + "x1"; },
                          [](const AdaptiveAvgPool1DSpec& s) { return std::to_string(s.out_bins) + " bins"; },
                          [](const SoftmaxSpec&) { return std::string("-"); },
                      },
                      spec);
}

PadAmount conv1d_padding(const Conv1DSpec& spec, std::size_t length) {
    if (spec.padding == Padding::Valid) return {};
    const std::size_t out = (length + spec.stride - 1) / spec.stride;
    const std::size_t needed = (out - 1) * spec.stride + spec.kernel_len;
    const std::size_t total = needed > length ? needed - length : 0;
    return {total / 2, total - total / 2};
}

std::size_t conv1d_output_length(const Conv1DSpec& spec, std::size_t length) {
    const PadAmount pad = conv1d_padding(spec, length);
    const std::size_t padded = length + pad.left + pad.right;
    if (padded < spec.kernel_len) {
        throw ShapeError("conv1d: input length " + std::to_string(length) + " shorter than kernel " +
                         std::to_string(spec.kernel_len) + " gives a zero-length output");
    }
    return (padded - spec.kernel_len) / spec.stride + 1;
}

// ---- convolution -----------------------------------------------------------

template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& input, const Conv1DSpec& spec, const Tensor<T>& weight,
                         const Tensor<T>& bias) {
    validate(spec);
    const MapDims d = map_dims(input.shape(), "conv1d_forward");
    if (d.channels != spec.in_channels) {
        throw ShapeError("conv1d_forward: input has " + std::to_string(d.channels) + " channels, spec expects " +
                         std::to_string(spec.in_channels));
    }
    check_conv_params(spec, weight.shape(), bias.shape());
    const std::size_t out_len = conv1d_output_length(spec, d.time);
    const PadAmount pad = conv1d_padding(spec, d.time);
    const std::size_t cin = spec.in_channels, cout = spec.out_channels, klen = spec.kernel_len;

    Tensor<T> out(map_shape(d, cout, out_len));
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t co = 0; co < cout; ++co) {
            T* y = out.raw() + (b * cout + co) * out_len;
            std::fill(y, y + out_len, bias[co]);
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const T* x = input.raw() + (b * cin + ci) * d.time;
                const T* w = weight.raw() + (co * cin + ci) * klen;
                for (std::size_t k = 0; k < klen; ++k) {
                    const auto offset = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(pad.left);
                    std::size_t lo, hi;
                    valid_taps(offset, spec.stride, d.time, out_len, lo, hi);
                    const T wk = w[k];
                    if (spec.stride == 1) {
                        const T* xs = x + offset;
                        for (std::size_t t = lo; t < hi; ++t) y[t] += wk * xs[t];
                    } else {
                        for (std::size_t t = lo; t < hi; ++t) {
                            y[t] += wk * x[static_cast<std::ptrdiff_t>(t * spec.stride) + offset];
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
Conv1DGrads<T> conv1d_backward(const Tensor<T>& upstream, const Tensor<T>& cached_input, const Conv1DSpec& spec,
                               const Tensor<T>& weight) {
    Conv1DGrads<T> g{Tensor<T>(cached_input.shape()), Tensor<T>(weight.shape()), Tensor<T>({spec.out_channels})};
    conv1d_accumulate_grads(upstream, cached_input, spec, weight, &g.input_grad, g.weight_grad, g.bias_grad);
    return g;
}

// ---- fully connected -------------------------------------------------------

template <typename T>
Tensor<T> fc_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
    const RowDims d = row_dims(input.shape(), "fc_forward");
    if (weight.rank() != 2 || weight.dim(1) != d.width) {
        throw ShapeError("fc_forward: input " + shape_string(input.shape()) + " incompatible with weight " +
                         shape_string(weight.shape()));
    }
    const std::size_t out_dim = weight.dim(0), in_dim = weight.dim(1);
    require_shape(bias, {out_dim}, "fc_forward bias");
    Tensor<T> out(row_shape(d, out_dim));
    for (std::size_t b = 0; b < d.batch; ++b) {
        const T* x = input.raw() + b * in_dim;
        for (std::size_t o = 0; o < out_dim; ++o) {
            const T* w = weight.raw() + o * in_dim;
            T acc = 0;
            for (std::size_t i = 0; i < in_dim; ++i) acc += w[i] * x[i];
            out[b * out_dim + o] = acc + bias[o];
        }
    }
    return out;
}

template <typename T>
FullyConnectedGrads<T> fc_backward(const Tensor<T>& upstream, const Tensor<T>& cached_input,
                                   const Tensor<T>& weight) {
    FullyConnectedGrads<T> g{Tensor<T>(cached_input.shape()), Tensor<T>(weight.shape()), Tensor<T>({weight.dim(0)})};
    fc_accumulate_grads(upstream, cached_input, weight, &g.input_grad, g.weight_grad, g.bias_grad);
    return g;
}

// ---- batch normalization ---------------------------------------------------

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& input, const BatchNormSpec& spec, const Tensor<T>& scale,
                            const Tensor<T>& shift, Tensor<T>& running_mean, Tensor<T>& running_var, Mode mode,
                            BatchNormCache<T>* cache) {
    validate(spec);
    const MapDims d = map_dims(input.shape(), "batchnorm_forward");
    if (d.channels != spec.channels) throw ShapeError("batchnorm_forward: channel count does not match spec");
    const std::size_t C = d.channels, L = d.time;
    for (const Tensor<T>* t : std::initializer_list<const Tensor<T>*>{&scale, &shift, &running_mean, &running_var}) {
        require_shape(*t, {C}, "batchnorm_forward parameter");
    }
    const std::size_t count = d.batch * L;

    Tensor<T> out(input.shape());
    std::vector<T> inv_std(C);
    Tensor<T> normalized(input.shape());
    for (std::size_t c = 0; c < C; ++c) {
        double mean, var;
        if (mode == Mode::Train) {
            double sum = 0.0;
            for (std::size_t b = 0; b < d.batch; ++b) {
                const T* x = input.raw() + (b * C + c) * L;
                for (std::size_t t = 0; t < L; ++t) sum += x[t];
            }
            mean = sum / static_cast<double>(count);
            double sq = 0.0;
            for (std::size_t b = 0; b < d.batch; ++b) {
                const T* x = input.raw() + (b * C + c) * L;
                for (std::size_t t = 0; t < L; ++t) {
                    const double dv = x[t] - mean;
                    sq += dv * dv;
                }
            }
            var = sq / static_cast<double>(count);
            const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
            const double m = spec.momentum;
            running_mean[c] = static_cast<T>(m * running_mean[c] + (1.0 - m) * mean);
            running_var[c] = static_cast<T>(m * running_var[c] + (1.0 - m) * unbiased);
        } else {
            mean = running_mean[c];
            var = running_var[c];
        }
        const double istd = 1.0 / std::sqrt(var + spec.epsilon);
        inv_std[c] = static_cast<T>(istd);
        for (std::size_t b = 0; b < d.batch; ++b) {
            const T* x = input.raw() + (b * C + c) * L;
            T* xn = normalized.raw() + (b * C + c) * L;
            T* y = out.raw() + (b * C + c) * L;
            for (std::size_t t = 0; t < L; ++t) {
                xn[t] = static_cast<T>((x[t] - mean) * istd);
                y[t] = scale[c] * xn[t] + shift[c];
            }
        }
    }
    if (cache) {
        cache->mode = mode;
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& upstream, const BatchNormCache<T>& cache,
                                     const Tensor<T>& scale) {
    require_shape(upstream, cache.normalized.shape(), "batchnorm_backward upstream");
    const MapDims d = map_dims(upstream.shape(), "batchnorm_backward");
    const std::size_t C = d.channels, L = d.time;
    const double count = static_cast<double>(d.batch * L);
    BatchNormGrads<T> g{Tensor<T>(upstream.shape()), Tensor<T>({C}), Tensor<T>({C})};
    for (std::size_t c = 0; c < C; ++c) {
        double sum_dy = 0.0, sum_dy_xn = 0.0;
        for (std::size_t b = 0; b < d.batch; ++b) {
            const T* dy = upstream.raw() + (b * C + c) * L;
            const T* xn = cache.normalized.raw() + (b * C + c) * L;
            for (std::size_t t = 0; t < L; ++t) {
                sum_dy += dy[t];
                sum_dy_xn += static_cast<double>(dy[t]) * xn[t];
            }
        }
        g.scale_grad[c] = static_cast<T>(sum_dy_xn);
        g.shift_grad[c] = static_cast<T>(sum_dy);
        const double gamma = scale[c];
        const double istd = cache.inv_std[c];
        for (std::size_t b = 0; b < d.batch; ++b) {
            const T* dy = upstream.raw() + (b * C + c) * L;
            const T* xn = cache.normalized.raw() + (b * C + c) * L;
            T* dx = g.input_grad.raw() + (b * C + c) * L;
            if (cache.mode == Mode::Train) {
                // dx = gamma*istd/M * (M*dy - sum(dy) - xn*sum(dy*xn))
                const double k = gamma * istd / count;
                for (std::size_t t = 0; t < L; ++t) {
                    dx[t] = static_cast<T>(k * (count * dy[t] - sum_dy - xn[t] * sum_dy_xn));
                }
            } else {
                for (std::size_t t = 0; t < L; ++t) dx[t] = static_cast<T>(gamma * istd * dy[t]);
            }
        }
    }
    return g;
}

// ---- elementwise / pooling -------------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
    Tensor<T> out = input;
    for (T& v : out.data()) v = v > T{0} ? v : T{0};
    return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& upstream, const Tensor<T>& cached_input) {
    require_shape(upstream, cached_input.shape(), "relu_backward upstream");
    Tensor<T> out(upstream.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = cached_input[i] > T{0} ? upstream[i] : T{0};
    return out;
}

template <typename T>
MaxPoolResult<T> maxpool1d_forward(const Tensor<T>& input, const MaxPool1DSpec& spec) {
    validate(spec);
    const MapDims d = map_dims(input.shape(), "maxpool1d_forward");
    if (d.time < spec.window) {
        throw ShapeError("maxpool1d: input length " + std::to_string(d.time) + " shorter than window " +
                         std::to_string(spec.window));
    }
    const std::size_t out_len = (d.time - spec.window) / spec.stride + 1;
    MaxPoolResult<T> r{Tensor<T>(map_shape(d, d.channels, out_len)), {}};
    r.argmax.resize(r.output.size());
    for (std::size_t row = 0; row < d.batch * d.channels; ++row) {
        const T* x = input.raw() + row * d.time;
        for (std::size_t t = 0; t < out_len; ++t) {
            std::size_t best = t * spec.stride;
            for (std::size_t j = best + 1; j < t * spec.stride + spec.window; ++j) {
                if (x[j] > x[best]) best = j;
            }
            r.output[row * out_len + t] = x[best];
            r.argmax[row * out_len + t] = row * d.time + best;
        }
    }
    return r;
}

template <typename T>
Tensor<T> maxpool1d_backward(const Tensor<T>& upstream, const std::vector<std::size_t>& argmax,
                             const Shape& input_shape) {
    if (upstream.size() != argmax.size()) throw ShapeError("maxpool1d_backward: upstream does not match forward");
    Tensor<T> out(input_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i) out[argmax[i]] += upstream[i];
    return out;
}

namespace {
std::pair<std::size_t, std::size_t> bin_range(std::size_t bin, std::size_t bins, std::size_t length) {
    const std::size_t start = bin * length / bins;
    const std::size_t end = ((bin + 1) * length + bins - 1) / bins;
    return {start, end};
}
}  // namespace

template <typename T>
Tensor<T> adaptive_avg_pool_forward(const Tensor<T>& input, const AdaptiveAvgPool1DSpec& spec) {
    validate(spec);
    const MapDims d = map_dims(input.shape(), "adaptive_avg_pool_forward");
    const std::size_t bins = spec.out_bins;
    Tensor<T> out(map_shape(d, d.channels, bins));
    for (std::size_t row = 0; row < d.batch * d.channels; ++row) {
        const T* x = input.raw() + row * d.time;
        for (std::size_t b = 0; b < bins; ++b) {
            const auto [s, e] = bin_range(b, bins, d.time);
            double acc = 0.0;
            for (std::size_t t = s; t < e; ++t) acc += x[t];
            out[row * bins + b] = static_cast<T>(acc / static_cast<double>(e - s));
        }
    }
    return out;
}

template <typename T>
Tensor<T> adaptive_avg_pool_backward(const Tensor<T>& upstream, const Shape& input_shape,
                                     const AdaptiveAvgPool1DSpec& spec) {
    const MapDims d = map_dims(input_shape, "adaptive_avg_pool_backward");
    const std::size_t bins = spec.out_bins;
    require_shape(upstream, map_shape(d, d.channels, bins), "adaptive_avg_pool_backward upstream");
    Tensor<T> out(input_shape);
    for (std::size_t row = 0; row < d.batch * d.channels; ++row) {
        T* dx = out.raw() + row * d.time;
        for (std::size_t b = 0; b < bins; ++b) {
            const auto [s, e] = bin_range(b, bins, d.time);
            const T share = upstream[row * bins + b] / static_cast<T>(e - s);
            for (std::size_t t = s; t < e; ++t) dx[t] += share;
        }
    }
    return out;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
    const RowDims d = row_dims(logits.shape(), "softmax_rows");
    Tensor<T> out(logits.shape());
    for (std::size_t b = 0; b < d.batch; ++b) {
        const T* z = logits.raw() + b * d.width;
        T* p = out.raw() + b * d.width;
        const T zmax = *std::max_element(z, z + d.width);
        double sum = 0.0;
        for (std::size_t k = 0; k < d.width; ++k) sum += std::exp(static_cast<double>(z[k] - zmax));
        for (std::size_t k = 0; k < d.width; ++k) {
            p[k] = static_cast<T>(std::exp(static_cast<double>(z[k] - zmax)) / sum);
        }
    }
    return out;
}

// ---- layer wrappers --------------------------------------------------------

template <typename T>
Conv1D<T>::Conv1D(const std::string& name, const Conv1DSpec& spec)
    : weight(name + ".weight", {spec.out_channels, spec.in_channels, spec.kernel_len}, ParamRole::Weight,
             spec.in_channels * spec.kernel_len, spec.out_channels * spec.kernel_len),
      bias(name + ".bias", {spec.out_channels}, ParamRole::Bias),
      spec_(spec) {
    validate(spec);
}

template <typename T>
Tensor<T> Conv1D<T>::forward(const Tensor<T>& x) {
    cached_input_ = x;
    return conv1d_forward(x, spec_, weight.value, bias.value);
}

template <typename T>
Tensor<T> Conv1D<T>::apply(const Tensor<T>& x) const {
    return conv1d_forward(x, spec_, weight.value, bias.value);
}

template <typename T>
Tensor<T> Conv1D<T>::backward(const Tensor<T>& upstream, bool need_input_grad) {
    Tensor<T> input_grad;
    if (need_input_grad) input_grad = Tensor<T>(cached_input_.shape());
    conv1d_accumulate_grads(upstream, cached_input_, spec_, weight.value, need_input_grad ? &input_grad : nullptr,
                            weight.grad, bias.grad);
    return input_grad;
}

template <typename T>
void Conv1D<T>::collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

template <typename T>
FullyConnected<T>::FullyConnected(const std::string& name, const FullyConnectedSpec& spec)
    : weight(name + ".weight", {spec.out_dim, spec.in_dim}, ParamRole::Weight, spec.in_dim, spec.out_dim),
      bias(name + ".bias", {spec.out_dim}, ParamRole::Bias),
      spec_(spec) {
    validate(spec);
}

template <typename T>
Tensor<T> FullyConnected<T>::forward(const Tensor<T>& x) {
    cached_input_ = x;
    return fc_forward(x, weight.value, bias.value);
}

template <typename T>
Tensor<T> FullyConnected<T>::apply(const Tensor<T>& x) const {
    return fc_forward(x, weight.value, bias.value);
}

template <typename T>
Tensor<T> FullyConnected<T>::backward(const Tensor<T>& upstream, bool need_input_grad) {
    Tensor<T> input_grad;
    if (need_input_grad) input_grad = Tensor<T>(cached_input_.shape());
    fc_accumulate_grads(upstream, cached_input_, weight.value, need_input_grad ? &input_grad : nullptr, weight.grad,
                        bias.grad);
    return input_grad;
}

template <typename T>
void FullyConnected<T>::collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

template <typename T>
BatchNorm<T>::BatchNorm(const std::string& name, const BatchNormSpec& spec)
    : scale(name + ".scale", {spec.channels}, ParamRole::Scale),
      shift(name + ".shift", {spec.channels}, ParamRole::Shift),
      running_mean({spec.channels}, T{0}),
      running_var({spec.channels}, T{1}),
      name_(name),
      spec_(spec) {
    validate(spec);
    scale.value.fill(T{1});
}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, Mode mode) {
    return batchnorm_forward(x, spec_, scale.value, shift.value, running_mean, running_var, mode, &cache_);
}

template <typename T>
Tensor<T> BatchNorm<T>::apply(const Tensor<T>& x) const {
    Tensor<T> rm = running_mean, rv = running_var;
    return batchnorm_forward(x, spec_, scale.value, shift.value, rm, rv, Mode::Eval);
}

template <typename T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& upstream) {
    BatchNormGrads<T> g = batchnorm_backward(upstream, cache_, scale.value);
    for (std::size_t c = 0; c < spec_.channels; ++c) {
        scale.grad[c] += g.scale_grad[c];
        shift.grad[c] += g.shift_grad[c];
    }
    return std::move(g.input_grad);
}

template <typename T>
void BatchNorm<T>::collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&scale);
    out.push_back(&shift);
}

template <typename T>
void BatchNorm<T>::collect_state(std::vector<StateEntry<T>>& out) {
    out.push_back({scale.name, &scale.value});
    out.push_back({shift.name, &shift.value});
    out.push_back({name_ + ".running_mean", &running_mean});
    out.push_back({name_ + ".running_var", &running_var});
}

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x) {
    cached_input_ = x;
    return relu_forward(x);
}

template <typename T>
Tensor<T> MaxPool1D<T>::forward(const Tensor<T>& x) {
    MaxPoolResult<T> r = maxpool1d_forward(x, spec_);
    argmax_ = std::move(r.argmax);
    input_shape_ = x.shape();
    return std::move(r.output);
}

template <typename T>
Tensor<T> MaxPool1D<T>::backward(const Tensor<T>& upstream) const {
    return maxpool1d_backward(upstream, argmax_, input_shape_);
}

template <typename T>
Tensor<T> AdaptiveAvgPool1D<T>::forward(const Tensor<T>& x) {
    input_shape_ = x.shape();
    return adaptive_avg_pool_forward(x, spec_);
}

template <typename T>
Tensor<T> AdaptiveAvgPool1D<T>::backward(const Tensor<T>& upstream) const {
    return adaptive_avg_pool_backward(upstream, input_shape_, spec_);
}

#define DKAMC_INSTANTIATE_LAYERS(T)                                                                              \
    template Tensor<T> conv1d_forward(const Tensor<T>&, const Conv1DSpec&, const Tensor<T>&, const Tensor<T>&); \
    template Conv1DGrads<T> conv1d_backward(const Tensor<T>&, const Tensor<T>&, const Conv1DSpec&,             \
                                            const Tensor<T>&);                                                  \
    template Tensor<T> fc_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                        \
    template FullyConnectedGrads<T> fc_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);          \
    template Tensor<T> batchnorm_forward(const Tensor<T>&, const BatchNormSpec&, const Tensor<T>&,              \
                                         const Tensor<T>&, Tensor<T>&, Tensor<T>&, Mode, BatchNormCache<T>*);    \
    template BatchNormGrads<T> batchnorm_backward(const Tensor<T>&, const BatchNormCache<T>&, const Tensor<T>&); \
    template Tensor<T> relu_forward(const Tensor<T>&);                                                          \
    template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                       \
    template MaxPoolResult<T> maxpool1d_forward(const Tensor<T>&, const MaxPool1DSpec&);                        \
    template Tensor<T> maxpool1d_backward(const Tensor<T>&, const std::vector<std::size_t>&, const Shape&);     \
    template Tensor<T> adaptive_avg_pool_forward(const Tensor<T>&, const AdaptiveAvgPool1DSpec&);               \
    template Tensor<T> adaptive_avg_pool_backward(const Tensor<T>&, const Shape&, const AdaptiveAvgPool1DSpec&); \
    template Tensor<T> softmax_rows(const Tensor<T>&);                                                          \
    template class Conv1D<T>;                                                                                   \
    template class FullyConnected<T>;                                                                           \
    template class BatchNorm<T>;                                                                                \
    template class ReLU<T>;                                                                                     \
    template class MaxPool1D<T>;                                                                                \
    template class AdaptiveAvgPool1D<T>;

DKAMC_INSTANTIATE_LAYERS(float)
DKAMC_INSTANTIATE_LAYERS(double)

#undef DKAMC_INSTANTIATE_LAYERS

}  // namespace dkamc
