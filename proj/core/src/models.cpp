#include "dkamc/models.hpp"

#include <cmath>
#include <random>

#include "dkamc/errors.hpp"

namespace dkamc {

namespace {

void record(ShapeTrace* trace, const std::string& name, const LayerSpec& spec, const Shape& shape) {
    if (trace) trace->push_back({name, layer_kind(spec), kernel_string(spec), shape});
}

void record(ShapeTrace* trace, const std::string& name, const std::string& kind, const Shape& shape) {
    if (trace) trace->push_back({name, kind, "-", shape});
}

template <typename T>
void require_frames(const Tensor<T>& frames, const char* who) {
    const Shape& s = frames.shape();
    const bool ok = (s.size() == 3 && s[1] == kFrameChannels && s[2] == kFrameLength) ||
                    (s.size() == 2 && s[0] == kFrameChannels && s[1] == kFrameLength);
    if (!ok) {
        throw ShapeError(std::string(who) + ": expected frames shaped [batch, 2, 128] or [2, 128], got " +
                         shape_string(s));
    }
}

// [.., C_i, L] pieces -> [.., sum C_i, L]
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
    const Shape& s0 = parts.front().shape();
    const bool batched = s0.size() == 3;
    const std::size_t batch = batched ? s0[0] : 1;
    const std::size_t len = s0.back();
    std::size_t channels = 0;
    for (const auto& p : parts) channels += p.shape()[p.rank() - 2];
    Tensor<T> out(batched ? Shape{batch, channels, len} : Shape{channels, len});
    for (std::size_t b = 0; b < batch; ++b) {
        std::size_t offset = 0;
        for (const auto& p : parts) {
            const std::size_t c = p.shape()[p.rank() - 2];
            std::copy_n(p.raw() + b * c * len, c * len, out.raw() + (b * channels + offset) * len);
            offset += c;
        }
    }
    return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
    const Shape& s = x.shape();
    const bool batched = s.size() == 3;
    const std::size_t batch = batched ? s[0] : 1;
    const std::size_t channels = s[s.size() - 2], len = s.back();
    Tensor<T> out(batched ? Shape{batch, count, len} : Shape{count, len});
    for (std::size_t b = 0; b < batch; ++b) {
        std::copy_n(x.raw() + (b * channels + begin) * len, count * len, out.raw() + b * count * len);
    }
    return out;
}

template <typename T>
void add_into(Tensor<T>& acc, const Tensor<T>& x) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

// [B, C, L] -> [B, C*L] (or [C, L] -> [C*L]).
template <typename T>
Tensor<T> flatten_maps(Tensor<T> x) {
    const Shape s = x.shape();
    if (s.size() == 3) {
        x.reshape({s[0], s[1] * s[2]});
    } else {
        x.reshape({s[0] * s[1]});
    }
    return x;
}

}  // namespace

template <typename T>
void init_parameters(const std::vector<Parameter<T>*>& params, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (Parameter<T>* p : params) {
        switch (p->role) {
            case ParamRole::Weight: {
                const double bound = std::sqrt(6.0 / static_cast<double>(p->fan_in + p->fan_out));
                std::uniform_real_distribution<double> dist(-bound, bound);
                for (T& v : p->value.data()) v = static_cast<T>(dist(rng));
                break;
            }
            case ParamRole::Bias:
            case ParamRole::Shift: p->value.fill(T{0}); break;
            case ParamRole::Scale: p->value.fill(T{1}); break;
        }
        p->grad.fill(T{0});
        p->momentum.fill(T{0});
    }
}

// ---- MSModule --------------------------------------------------------------

template <typename T>
MSModule<T>::MSModule(const std::string& name, std::size_t in_channels)
    : name_(name), down_(name + ".down", {in_channels, kDownsampleChannels, 3, 2, Padding::Same}) {
    for (std::size_t b = 0; b < kBranchKernels.size(); ++b) {
        const std::size_t k = kBranchKernels[b];
        branches_[b] = Conv1D<T>(name + ".branch" + std::to_string(k),
                                 {kDownsampleChannels, kBranchChannels, k, 1, Padding::Same});
    }
}

template <typename T>
Tensor<T> MSModule<T>::forward(const Tensor<T>& x) {
    const Tensor<T> d = down_relu_.forward(down_.forward(x));
    std::vector<Tensor<T>> parts;
    for (std::size_t b = 0; b < branches_.size(); ++b) {
        parts.push_back(branch_relus_[b].forward(branches_[b].forward(d)));
    }
    return concat_channels(parts);
}

template <typename T>
Tensor<T> MSModule<T>::apply(const Tensor<T>& x, ShapeTrace* trace) const {
    const Tensor<T> d = relu_forward(down_.apply(x));
    record(trace, name_ + ".down", down_.spec(), d.shape());
    std::vector<Tensor<T>> parts;
    for (std::size_t b = 0; b < branches_.size(); ++b) {
        parts.push_back(relu_forward(branches_[b].apply(d)));
        record(trace, name_ + ".branch" + std::to_string(kBranchKernels[b]), branches_[b].spec(), parts.back().shape());
    }
    Tensor<T> out = concat_channels(parts);
    record(trace, name_, "Concat", out.shape());
    return out;
}

template <typename T>
Tensor<T> MSModule<T>::backward(const Tensor<T>& upstream, bool need_input_grad) {
    Tensor<T> d_grad;
    for (std::size_t b = 0; b < branches_.size(); ++b) {
        const Tensor<T> g = branch_relus_[b].backward(slice_channels(upstream, b * kBranchChannels, kBranchChannels));
        Tensor<T> gd = branches_[b].backward(g);
        if (b == 0) {
            d_grad = std::move(gd);
        } else {
            add_into(d_grad, gd);
        }
    }
    return down_.backward(down_relu_.backward(d_grad), need_input_grad);
}

template <typename T>
void MSModule<T>::collect(std::vector<Parameter<T>*>& out) {
    down_.collect(out);
    for (auto& b : branches_) b.collect(out);
}

// ---- VisualModel -----------------------------------------------------------

template <typename T>
VisualModel<T>::VisualModel(std::size_t num_classes)
    : num_classes_(num_classes),
      ms1_("visual.ms1", kFrameChannels),
      ms2_("visual.ms2", ms1_.out_channels()),
      gap_({4}),
      fc_feature_("visual.fc_feature", {ms2_.out_channels() * 4, kVisualFeatureDim}),
      fc_softmax_("visual.fc_softmax", {kVisualFeatureDim, num_classes}) {
    if (num_classes == 0) throw InvalidArgument("visual model needs at least one class");
}

template <typename T>
typename VisualModel<T>::Output VisualModel<T>::forward(const Tensor<T>& frames) {
    require_frames(frames, "visual_forward");
    Tensor<T> h = ms2_.forward(ms1_.forward(frames));
    h = gap_.forward(h);
    pooled_shape_ = h.shape();
    Output out;
    out.feature = feature_relu_.forward(fc_feature_.forward(flatten_maps(std::move(h))));
    out.logits = fc_softmax_.forward(out.feature);
    return out;
}

template <typename T>
typename VisualModel<T>::Output VisualModel<T>::infer(const Tensor<T>& frames, ShapeTrace* trace) const {
    require_frames(frames, "visual_forward");
    record(trace, "input", "Input", frames.shape());
    Tensor<T> h = ms1_.apply(frames, trace);
    h = ms2_.apply(h, trace);
    h = gap_.apply(h);
    record(trace, "visual.gap", gap_.spec(), h.shape());
    h = flatten_maps(std::move(h));
    record(trace, "visual.flatten", "Flatten", h.shape());
    Output out;
    out.feature = relu_forward(fc_feature_.apply(h));
    record(trace, "visual.fc_feature", fc_feature_.spec(), out.feature.shape());
    out.logits = fc_softmax_.apply(out.feature);
    record(trace, "visual.fc_softmax", fc_softmax_.spec(), out.logits.shape());
    return out;
}

template <typename T>
void VisualModel<T>::backward(const Tensor<T>& logit_grad, const Tensor<T>* feature_grad) {
    Tensor<T> g = fc_softmax_.backward(logit_grad);
    if (feature_grad) add_into(g, *feature_grad);
    g = fc_feature_.backward(feature_relu_.backward(g));
    g.reshape(pooled_shape_);
    g = gap_.backward(g);
    g = ms2_.backward(g, true);
    ms1_.backward(g, false);
}

template <typename T>
std::vector<Parameter<T>*> VisualModel<T>::parameters() {
    std::vector<Parameter<T>*> out;
    ms1_.collect(out);
    ms2_.collect(out);
    fc_feature_.collect(out);
    fc_softmax_.collect(out);
    return out;
}

template <typename T>
std::vector<StateEntry<T>> VisualModel<T>::state() {
    std::vector<StateEntry<T>> out;
    for (Parameter<T>* p : parameters()) out.push_back({p->name, &p->value});
    return out;
}

template <typename T>
ShapeTrace VisualModel<T>::describe() const {
    ShapeTrace trace;
    infer(Tensor<T>({kFrameChannels, kFrameLength}), &trace);
    return trace;
}

// ---- ResUnit ---------------------------------------------------------------

template <typename T>
ResUnit<T>::ResUnit(const std::string& name, std::size_t channels)
    : conv_a(name + ".conv_a", {channels, channels, 3, 1, Padding::Same}),
      bn_a(name + ".bn_a", {channels}),
      conv_b(name + ".conv_b", {channels, channels, 3, 1, Padding::Same}),
      bn_b(name + ".bn_b", {channels}) {}

template <typename T>
Tensor<T> ResUnit<T>::forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> h = relu_a_.forward(bn_a.forward(conv_a.forward(x), mode));
    h = bn_b.forward(conv_b.forward(h), mode);
    add_into(h, x);
    return relu_out_.forward(h);
}

template <typename T>
Tensor<T> ResUnit<T>::apply(const Tensor<T>& x) const {
    Tensor<T> h = relu_forward(bn_a.apply(conv_a.apply(x)));
    h = bn_b.apply(conv_b.apply(h));
    add_into(h, x);
    return relu_forward(h);
}

template <typename T>
Tensor<T> ResUnit<T>::backward(const Tensor<T>& upstream) {
    const Tensor<T> g_sum = relu_out_.backward(upstream);
    Tensor<T> g = conv_b.backward(bn_b.backward(g_sum));
    g = conv_a.backward(bn_a.backward(relu_a_.backward(g)));
    add_into(g, g_sum);
    return g;
}

template <typename T>
void ResUnit<T>::collect(std::vector<Parameter<T>*>& out) {
    conv_a.collect(out);
    bn_a.collect(out);
    conv_b.collect(out);
    bn_b.collect(out);
}

template <typename T>
void ResUnit<T>::collect_state(std::vector<StateEntry<T>>& out) {
    out.push_back({conv_a.weight.name, &conv_a.weight.value});
    out.push_back({conv_a.bias.name, &conv_a.bias.value});
    bn_a.collect_state(out);
    out.push_back({conv_b.weight.name, &conv_b.weight.value});
    out.push_back({conv_b.bias.name, &conv_b.bias.value});
    bn_b.collect_state(out);
}

// ---- AttributeModel --------------------------------------------------------

template <typename T>
AttributeModel<T>::AttributeModel()
    : stem_("attr.stem", {kFrameChannels, kChannels, 1, 1, Padding::Same}),
      gap_({1}),
      fc_("attr.fc", {kChannels, kAttributeCount}) {
    for (std::size_t s = 0; s < kStacks; ++s) {
        for (std::size_t u = 0; u < 2; ++u) {
            units_[2 * s + u] =
                ResUnit<T>("attr.stack" + std::to_string(s + 1) + ".unit" + std::to_string(u + 1), kChannels);
        }
    }
}

template <typename T>
Tensor<T> AttributeModel<T>::forward(const Tensor<T>& frames, Mode mode) {
    require_frames(frames, "attribute_forward");
    Tensor<T> h = stem_.forward(frames);
    for (std::size_t s = 0; s < kStacks; ++s) {
        h = units_[2 * s].forward(h, mode);
        h = units_[2 * s + 1].forward(h, mode);
        h = pools_[s].forward(h);
    }
    h = gap_.forward(h);
    pooled_shape_ = h.shape();
    return fc_.forward(flatten_maps(std::move(h)));
}

template <typename T>
Tensor<T> AttributeModel<T>::infer(const Tensor<T>& frames, ShapeTrace* trace) const {
    require_frames(frames, "attribute_forward");
    record(trace, "input", "Input", frames.shape());
    Tensor<T> h = stem_.apply(frames);
    record(trace, "attr.stem", stem_.spec(), h.shape());
    for (std::size_t s = 0; s < kStacks; ++s) {
        const std::string stack = "attr.stack" + std::to_string(s + 1);
        for (std::size_t u = 0; u < 2; ++u) {
            h = units_[2 * s + u].apply(h);
            record(trace, stack + ".unit" + std::to_string(u + 1), "ResUnit", h.shape());
            if (trace) trace->back().kernel = "3x1";
        }
        h = pools_[s].apply(h);
        record(trace, stack + ".pool", pools_[s].spec(), h.shape());
    }
    h = gap_.apply(h);
    record(trace, "attr.gap", gap_.spec(), h.shape());
    h = fc_.apply(flatten_maps(std::move(h)));
    record(trace, "attr.fc", fc_.spec(), h.shape());
    return h;
}

template <typename T>
void AttributeModel<T>::backward(const Tensor<T>& upstream) {
    Tensor<T> g = fc_.backward(upstream);
    g.reshape(pooled_shape_);
    g = gap_.backward(g);
    for (std::size_t s = kStacks; s-- > 0;) {
        g = pools_[s].backward(g);
        g = units_[2 * s + 1].backward(g);
        g = units_[2 * s].backward(g);
    }
    stem_.backward(g, false);
}

template <typename T>
std::vector<Parameter<T>*> AttributeModel<T>::parameters() {
    std::vector<Parameter<T>*> out;
    stem_.collect(out);
    for (auto& u : units_) u.collect(out);
    fc_.collect(out);
    return out;
}

template <typename T>
std::vector<StateEntry<T>> AttributeModel<T>::state() {
    std::vector<StateEntry<T>> out;
    out.push_back({stem_.weight.name, &stem_.weight.value});
    out.push_back({stem_.bias.name, &stem_.bias.value});
    for (auto& u : units_) u.collect_state(out);
    out.push_back({fc_.weight.name, &fc_.weight.value});
    out.push_back({fc_.bias.name, &fc_.bias.value});
    return out;
}

template <typename T>
ShapeTrace AttributeModel<T>::describe() const {
    ShapeTrace trace;
    infer(Tensor<T>({kFrameChannels, kFrameLength}), &trace);
    return trace;
}

// ---- TransformNet ----------------------------------------------------------

template <typename T>
TransformNet<T>::TransformNet()
    : fc1_("tnet.fc1", {kAttributeCount, kTransformHidden}), fc2_("tnet.fc2", {kTransformHidden, kVisualFeatureDim}) {}

template <typename T>
Tensor<T> TransformNet<T>::forward(const Tensor<T>& attributes) {
    if (attributes.shape().back() != kAttributeCount)
        throw ShapeError("transform_forward: expected attribute width 6, got " + shape_string(attributes.shape()));
    return relu2_.forward(fc2_.forward(relu1_.forward(fc1_.forward(attributes))));
}

template <typename T>
Tensor<T> TransformNet<T>::infer(const Tensor<T>& attributes, ShapeTrace* trace) const {
    if (attributes.rank() == 0 || attributes.shape().back() != kAttributeCount)
        throw ShapeError("transform_forward: expected attribute width 6, got " + shape_string(attributes.shape()));
    record(trace, "input", "Input", attributes.shape());
    Tensor<T> h = relu_forward(fc1_.apply(attributes));
    record(trace, "tnet.fc1", fc1_.spec(), h.shape());
    h = relu_forward(fc2_.apply(h));
    record(trace, "tnet.fc2", fc2_.spec(), h.shape());
    return h;
}

template <typename T>
Tensor<T> TransformNet<T>::backward(const Tensor<T>& upstream, bool need_input_grad) {
    Tensor<T> g = fc2_.backward(relu2_.backward(upstream));
    return fc1_.backward(relu1_.backward(g), need_input_grad);
}

template <typename T>
std::vector<Parameter<T>*> TransformNet<T>::parameters() {
    std::vector<Parameter<T>*> out;
    fc1_.collect(out);
    fc2_.collect(out);
    return out;
}

template <typename T>
std::vector<StateEntry<T>> TransformNet<T>::state() {
    std::vector<StateEntry<T>> out;
    for (Parameter<T>* p : parameters()) out.push_back({p->name, &p->value});
    return out;
}

template <typename T>
ShapeTrace TransformNet<T>::describe() const {
    ShapeTrace trace;
    infer(Tensor<T>({kAttributeCount}), &trace);
    return trace;
}

template <typename T>
Tensor<T> class_prototypes(const TransformNet<T>& tnet, const ClassAttributeMatrix& cam) {
    return tnet.infer(cam.as_tensor<T>());
}

ModelKind checkpoint_model_kind(const std::vector<std::string>& tensor_names) {
    if (tensor_names.empty()) throw InvalidArgument("empty checkpoint");
    const std::string& first = tensor_names.front();
    if (first.rfind("visual.", 0) == 0) return ModelKind::Visual;
    if (first.rfind("attr.", 0) == 0) return ModelKind::Attribute;
    if (first.rfind("tnet.", 0) == 0) return ModelKind::Transform;
    throw InvalidArgument("checkpoint tensor '" + first + "' does not belong to a known model");
}

#define DKAMC_INSTANTIATE_MODELS(T)                                                          \
    template void init_parameters(const std::vector<Parameter<T>*>&, std::uint64_t);        \
    template class MSModule<T>;                                                              \
    template class VisualModel<T>;                                                           \
    template class ResUnit<T>;                                                               \
    template class AttributeModel<T>;                                                        \
    template class TransformNet<T>;                                                          \
    template Tensor<T> class_prototypes(const TransformNet<T>&, const ClassAttributeMatrix&);

DKAMC_INSTANTIATE_MODELS(float)
DKAMC_INSTANTIATE_MODELS(double)

#undef DKAMC_INSTANTIATE_MODELS

}  // namespace dkamc
