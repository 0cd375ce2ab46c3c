#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "dkamc/errors.hpp"
#include "dkamc/models.hpp"

using namespace dkamc;

namespace {

template <typename T>
Tensor<T> randn(const Shape& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    Tensor<T> t(shape);
    for (T& v : t.data()) v = static_cast<T>(d(rng));
    return t;
}

template <typename M>
std::size_t count_parameters(M& model) {
    std::size_t n = 0;
    for (auto* p : model.parameters()) n += p->value.size();
    return n;
}

std::map<std::string, Shape> by_name(const ShapeTrace& trace) {
    std::map<std::string, Shape> out;
    for (const auto& row : trace) out[row.name] = row.output;
    return out;
}

}  // namespace

TEST_CASE("visual model rows match the architecture table") {
    const VisualModel<float> m(4);
    const auto rows = by_name(m.describe());
    CHECK(rows.at("input") == Shape{2, 128});
    CHECK(rows.at("visual.ms1") == Shape{128, 64});
    CHECK(rows.at("visual.ms2") == Shape{128, 32});
    CHECK(rows.at("visual.gap") == Shape{128, 4});
    CHECK(rows.at("visual.flatten") == Shape{512});
    CHECK(rows.at("visual.fc_feature") == Shape{128});
    CHECK(rows.at("visual.fc_softmax") == Shape{4});
    for (int k : {7, 5, 3, 1}) CHECK(rows.at("visual.ms1.branch" + std::to_string(k)) == Shape{32, 64});
    CHECK(rows.at("visual.ms1.down") == Shape{32, 64});
}

TEST_CASE("visual model shapes hold for batches") {
    VisualModel<float> m(4);
    m.init(2);
    ShapeTrace trace;
    const auto out = m.infer(randn<float>({3, 2, 128}, 1), &trace);
    CHECK(out.feature.shape() == Shape{3, 128});
    CHECK(out.logits.shape() == Shape{3, 4});
    const auto rows = by_name(trace);
    CHECK(rows.at("visual.ms1") == Shape{3, 128, 64});
    CHECK(rows.at("visual.gap") == Shape{3, 128, 4});
    const auto train = m.forward(randn<float>({3, 2, 128}, 1));
    CHECK(train.logits == out.logits);
    CHECK_THROWS_AS(m.infer(Tensor<float>({2, 64})), ShapeError);
    CHECK_THROWS_AS(m.infer(Tensor<float>({1, 3, 128})), ShapeError);
}

TEST_CASE("attribute model rows match the architecture table") {
    const AttributeModel<float> m;
    const auto rows = by_name(m.describe());
    CHECK(rows.at("attr.stem") == Shape{32, 128});
    CHECK(rows.at("attr.stack1.unit1") == Shape{32, 128});
    CHECK(rows.at("attr.stack1.unit2") == Shape{32, 128});
    CHECK(rows.at("attr.stack1.pool") == Shape{32, 64});
    CHECK(rows.at("attr.stack2.unit2") == Shape{32, 64});
    CHECK(rows.at("attr.stack2.pool") == Shape{32, 32});
    CHECK(rows.at("attr.stack3.unit2") == Shape{32, 32});
    CHECK(rows.at("attr.stack3.pool") == Shape{32, 16});
    CHECK(rows.at("attr.gap") == Shape{32, 1});
    CHECK(rows.at("attr.fc") == Shape{6});
}

TEST_CASE("attribute model batch inference and train mode") {
    AttributeModel<float> m;
    m.init(4);
    const auto x = randn<float>({5, 2, 128}, 3);
    CHECK(m.infer(x).shape() == Shape{5, 6});
    CHECK(m.forward(x, Mode::Train).shape() == Shape{5, 6});
    // train-mode forward moved the running statistics, so eval output differs
    // from a freshly initialised twin
    AttributeModel<float> twin;
    twin.init(4);
    CHECK_FALSE(m.infer(x) == twin.infer(x));
}

TEST_CASE("transform net shapes and zero input") {
    TransformNet<float> t;
    const auto rows = t.describe();
    CHECK(rows.back().output == Shape{kVisualFeatureDim});
    CHECK(t.infer(Tensor<float>({6})).shape() == Shape{128});
    // zero weights and biases: the output is exactly zero
    const auto fresh = t.infer(Tensor<float>({6}, 0.7f));
    for (float v : fresh.data()) CHECK(v == 0.0f);
    t.init(1);
    const auto zero_in = t.infer(Tensor<float>({6}));
    for (float v : zero_in.data()) CHECK(v == 0.0f);
    const auto batch = t.infer(randn<float>({4, 6}, 2));
    for (float v : batch.data()) CHECK(v >= 0.0f);
    CHECK_THROWS_AS(t.infer(Tensor<float>({5})), ShapeError);
}

TEST_CASE("parameter ledger") {
    VisualModel<float> v(4);
    AttributeModel<float> a;
    TransformNet<float> t;
    // visual: ms1 (2*32*3+32) + 4 branches 32*32*(7+5+3+1)+128, ms2 (128*32*3+32) + same
    // branches, fc_feature 512*128+128, fc_softmax 128*4+4
    CHECK(count_parameters(v) == 224 + 16512 + 12320 + 16512 + 65664 + 516);
    CHECK(count_parameters(v) == 111748);
    CHECK(v.feature_layer().weight.value.size() + v.feature_layer().bias.value.size() == 512 * 128 + 128);
    CHECK(v.softmax_head().weight.value.size() + v.softmax_head().bias.value.size() == 128 * 4 + 4);
    // attribute: stem 2*32+32, 6 units of 2*(32*32*3+32) + 2*64, fc 32*6+6
    CHECK(count_parameters(a) == 96 + 6 * 6336 + 198);
    CHECK(count_parameters(a) == 38310);
    // transform: 6*64+64, 64*128+128
    CHECK(count_parameters(t) == 448 + 8320);
    VisualModel<float> v7(7);
    CHECK(count_parameters(v7) == 111748 - 516 + 128 * 7 + 7);
}

TEST_CASE("init is deterministic and follows the uniform bound") {
    VisualModel<float> a(4), b(4), c(4);
    a.init(11);
    b.init(11);
    c.init(12);
    CHECK(a.feature_layer().weight.value == b.feature_layer().weight.value);
    CHECK_FALSE(a.feature_layer().weight.value == c.feature_layer().weight.value);

    const double bound = std::sqrt(6.0 / 640.0);
    float biggest = 0.0f;
    for (float w : a.feature_layer().weight.value.data()) biggest = std::max(biggest, std::abs(w));
    CHECK(biggest <= bound);
    CHECK(biggest > 0.9 * bound);

    for (auto* p : a.parameters()) {
        if (p->role == ParamRole::Bias)
            for (float v : p->value.data()) CHECK(v == 0.0f);
    }
    AttributeModel<float> m;
    m.init(3);
    for (auto* p : m.parameters()) {
        if (p->role == ParamRole::Scale)
            for (float v : p->value.data()) CHECK(v == 1.0f);
        if (p->role == ParamRole::Shift)
            for (float v : p->value.data()) CHECK(v == 0.0f);
    }
}

TEST_CASE("res unit with a silent residual branch is a relu") {
    ResUnit<double> unit("u", 4);
    // conv weights and biases start at zero; batch norm is identity in eval
    // mode with zero shift and the default running statistics
    const auto x = randn<double>({2, 4, 16}, 5);
    const auto y = unit.apply(x);
    const auto r = relu_forward(x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(r[i]).epsilon(1e-12));
    const auto yt = unit.forward(x, Mode::Train);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(yt[i] == doctest::Approx(r[i]).epsilon(1e-12));
}

TEST_CASE("features do not depend on the softmax head") {
    VisualModel<float> m(4);
    m.init(8);
    const auto x = randn<float>({2, 2, 128}, 9);
    const auto before = m.infer(x);
    for (float& w : m.softmax_head().weight.value.data()) w *= -3.0f;
    for (float& b : m.softmax_head().bias.value.data()) b = 5.0f;
    const auto after = m.infer(x);
    CHECK(before.feature == after.feature);
    CHECK_FALSE(before.logits == after.logits);
}

TEST_CASE("zero frame gives a finite feature") {
    VisualModel<float> m(4);
    m.init(1);
    const auto out = m.infer(Tensor<float>({2, 128}));
    // zero input and zero biases: every activation is zero
    for (float v : out.feature.data()) CHECK(v == 0.0f);
    for (float v : out.logits.data()) CHECK(std::isfinite(v));
}

TEST_CASE("class prototypes") {
    const auto schemes = default_modulations();
    const auto cam = class_attribute_matrix(schemes);
    TransformNet<float> zero;
    const auto p0 = class_prototypes(zero, cam);
    CHECK(p0.shape() == Shape{4, 128});
    for (float v : p0.data()) CHECK(v == 0.0f);

    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        TransformNet<float> t;
        t.init(seed);
        const auto p = class_prototypes(t, cam);
        for (std::size_t c = 0; c < 4; ++c) {
            const auto row = t.infer(cam.as_tensor<float>());
            for (std::size_t d = 0; d < 128; ++d) CHECK(p.at(c, d) == row.at(c, d));
            for (std::size_t e = c + 1; e < 4; ++e) {
                double dist = 0.0;
                for (std::size_t d = 0; d < 128; ++d) dist += std::abs(p.at(c, d) - p.at(e, d));
                CHECK(dist > 0.0);
            }
        }
    }
}

TEST_CASE("checkpoint kind from tensor names") {
    VisualModel<float> v(4);
    AttributeModel<float> a;
    TransformNet<float> t;
    auto names = [](auto state) {
        std::vector<std::string> out;
        for (const auto& e : state) out.push_back(e.name);
        return out;
    };
    CHECK(checkpoint_model_kind(names(v.state())) == ModelKind::Visual);
    CHECK(checkpoint_model_kind(names(a.state())) == ModelKind::Attribute);
    CHECK(checkpoint_model_kind(names(t.state())) == ModelKind::Transform);
    CHECK_THROWS_AS(checkpoint_model_kind({"nope"}), InvalidArgument);
    // attribute state includes the running statistics
    CHECK(a.state().size() > a.parameters().size());
}
