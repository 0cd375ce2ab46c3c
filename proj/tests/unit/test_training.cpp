#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "dkamc/checkpoint.hpp"
#include "dkamc/errors.hpp"
#include "dkamc/gradcheck.hpp"
#include "dkamc/losses.hpp"
#include "dkamc/training.hpp"

using namespace dkamc;

namespace {

Dataset toy(std::vector<int> grid, std::size_t per_cell, std::uint64_t seed = 5) {
    ChannelConfig c;
    c.snr_grid_db = std::move(grid);
    c.frames_per_class_per_snr = per_cell;
    c.rng_seed = seed;
    return synthesize_dataset(c, default_modulations());
}

template <typename T>
Tensor<T> randn(const Shape& shape, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, scale);
    Tensor<T> t(shape);
    for (T& v : t.data()) v = static_cast<T>(d(rng));
    return t;
}

TrainConfig quick(int epochs) {
    TrainConfig c;
    c.epochs_visual = c.epochs_attr = c.epochs_embed = epochs;
    c.batch_size = 32;
    c.seed = 3;
    return c;
}

std::vector<std::uint8_t> bytes_of(auto& model) {
    return serialize_checkpoint(snapshot_state<float>(model.state()));
}

}  // namespace

TEST_CASE("stratified split of 120 frames") {
    const auto ds = toy({-10, 0, 10}, 10);
    const auto s = split_dataset(ds, 0.8, 1);
    CHECK(s.train.frames.size() == 96);
    CHECK(s.test.frames.size() == 24);
    std::map<std::pair<int, int>, int> train_cells, test_cells;
    for (const auto& f : s.train.frames) ++train_cells[{f.label, f.snr_db}];
    for (const auto& f : s.test.frames) ++test_cells[{f.label, f.snr_db}];
    CHECK(train_cells.size() == 12);
    for (const auto& [cell, n] : train_cells) CHECK(n == 8);
    for (const auto& [cell, n] : test_cells) CHECK(n == 2);

    // disjoint and exhaustive: every frame lands in exactly one side
    std::size_t matched = 0;
    for (const auto& f : ds.frames) {
        int hits = 0;
        for (const auto& g : s.train.frames) hits += (f == g);
        for (const auto& g : s.test.frames) hits += (f == g);
        CHECK(hits == 1);
        matched += hits;
    }
    CHECK(matched == 120);
    CHECK(s.train.class_names == ds.class_names);
}

TEST_CASE("split is deterministic per seed and validates its inputs") {
    const auto ds = toy({0, 10}, 10);
    const auto a = split_dataset(ds, 0.8, 9);
    const auto b = split_dataset(ds, 0.8, 9);
    const auto c = split_dataset(ds, 0.8, 10);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK_FALSE(a.test == c.test);
    CHECK_THROWS_AS(split_dataset(ds, 1.0, 1), InvalidArgument);
    CHECK_THROWS_AS(split_dataset(ds, 0.0, 1), InvalidArgument);
    CHECK_THROWS_AS(split_dataset(toy({0}, 1), 0.5, 1), InvalidArgument);
    // tiny cells still leave a frame on each side
    const auto small = split_dataset(toy({0}, 2), 0.99, 1);
    CHECK(small.train.frames.size() == 4);
    CHECK(small.test.frames.size() == 4);
}

TEST_CASE("train config invariants") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.momentum = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.lambda_reg = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.train_fraction = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.lr = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("visual pretraining: two epochs on 96 frames") {
    const auto ds = toy({18}, 24);
    VisualModel<float> m(4);
    m.init(1);
    const auto r = pretrain_visual(m, ds, nullptr, quick(2));
    REQUIRE(r.epochs.size() == 2);
    for (int e = 0; e < 2; ++e) {
        CHECK(r.epochs[e].epoch == e + 1);
        CHECK(std::isfinite(r.epochs[e].train_loss));
        CHECK(std::isnan(r.epochs[e].val_metric));
    }
}

TEST_CASE("zero learning rate freezes every stage") {
    const auto ds = toy({18}, 16);
    const auto cam = class_attribute_matrix(dataset_schemes(ds));
    auto cfg = quick(3);
    cfg.lr = 0.0;
    cfg.lr_embed = 0.0;

    VisualModel<float> v(4);
    v.init(1);
    const auto v0 = bytes_of(v);
    const auto rv = pretrain_visual(v, ds, nullptr, cfg);
    CHECK(bytes_of(v) == v0);
    CHECK(rv.epochs[0].train_loss == rv.epochs[2].train_loss);

    AttributeModel<float> a;
    a.init(2);
    std::vector<std::uint8_t> params_before;
    {
        std::vector<NamedTensor> p;
        for (auto* q : a.parameters()) p.push_back({q->name, q->value});
        params_before = serialize_checkpoint(p);
    }
    const auto ra = pretrain_attribute(a, ds, nullptr, cam, cfg);
    std::vector<NamedTensor> p;
    for (auto* q : a.parameters()) p.push_back({q->name, q->value});
    CHECK(serialize_checkpoint(p) == params_before);
    // batch norm uses batch statistics, so only approximately constant
    CHECK(ra.epochs[2].train_loss == doctest::Approx(ra.epochs[0].train_loss).epsilon(0.05));

    TransformNet<float> t;
    t.init(3);
    const auto t0 = bytes_of(t);
    const auto rt = train_embedding(v, a, t, ds, nullptr, cam, cfg);
    CHECK(bytes_of(t) == t0);
    CHECK(rt.epochs[0].train_loss == rt.epochs[1].train_loss);
    CHECK(rt.epochs[0].train_loss == rt.epochs[2].train_loss);
}

TEST_CASE("visual loss falls on a high-snr toy set") {
    const auto ds = toy({18}, 60);
    VisualModel<float> m(4);
    m.init(1);
    auto cfg = quick(6);
    const auto r = pretrain_visual(m, ds, nullptr, cfg);
    CHECK(r.epochs.back().train_loss < r.epochs.front().train_loss);
}

TEST_CASE("attribute targets: constant mean predictor costs the target variance") {
    const auto ds = toy({10}, 7);
    const auto cam = class_attribute_matrix(dataset_schemes(ds));
    // oracle: per-coordinate population variance of the label rows under the
    // class frequencies (all equal here), averaged over the 6 coordinates
    double var = 0.0;
    for (std::size_t a = 0; a < kAttributeCount; ++a) {
        double m = 0.0, m2 = 0.0;
        for (std::size_t c = 0; c < 4; ++c) {
            m += cam.row(c).values[a] / 4.0;
            m2 += double(cam.row(c).values[a]) * cam.row(c).values[a] / 4.0;
        }
        var += (m2 - m * m) / kAttributeCount;
    }
    const std::size_t n = ds.frames.size();
    Tensor<double> target({n, kAttributeCount}), pred({n, kAttributeCount});
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t a = 0; a < kAttributeCount; ++a) target.at(j, a) = cam.row(ds.frames[j].label).values[a];
    for (std::size_t a = 0; a < kAttributeCount; ++a) {
        double m = 0.0;
        for (std::size_t j = 0; j < n; ++j) m += target.at(j, a) / double(n);
        for (std::size_t j = 0; j < n; ++j) pred.at(j, a) = m;
    }
    CHECK(mse_loss(pred, target).loss == doctest::Approx(var).epsilon(1e-9));
    CHECK(mse_loss(target, target).loss == 0.0);
}

TEST_CASE("embedding loss algebra") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        TransformNet<double> t;
        t.init(seed);
        for (double& b : t.fc1().bias.value.data()) b = 0.1;
        const auto phi1 = randn<double>({8, 128}, seed + 10);
        const auto phi2 = randn<double>({8, 6}, seed + 20, 0.5);
        const double w2 = squared_norm(t.fc1().weight.value) + squared_norm(t.fc2().weight.value);
        const auto l0 = embedding_loss(phi1, phi2, t, 0.0);
        for (double lambda : {1e-4, 0.5, 3.0}) {
            const auto l = embedding_loss(phi1, phi2, t, lambda);
            CHECK(l.data_term == doctest::Approx(l0.loss).epsilon(1e-12));
            CHECK(std::abs((l.loss - l0.loss) - lambda * w2) <= 1e-5 * lambda * w2);
            CHECK(l.reg_term == doctest::Approx(lambda * w2));
        }
    }
}

TEST_CASE("embedding loss with a zero transform net is the mean feature energy") {
    TransformNet<double> t;
    const auto phi1 = randn<double>({6, 128}, 4);
    const auto phi2 = randn<double>({6, 6}, 5);
    double energy = 0.0;
    for (std::size_t j = 0; j < 6; ++j)
        for (std::size_t d = 0; d < 128; ++d) energy += phi1.at(j, d) * phi1.at(j, d) / 6.0;
    const auto l = embedding_loss(phi1, phi2, t, 7.0);
    CHECK(std::abs(l.loss - energy) <= 1e-6 * energy);
    CHECK(l.reg_term == 0.0);
    CHECK(l.per_sample.size() == 6);
}

TEST_CASE("embedding loss vanishes when features equal the transform output") {
    TransformNet<double> t;
    t.init(6);
    for (double& b : t.fc2().bias.value.data()) b = 0.3;
    const auto phi2 = randn<double>({5, 6}, 7);
    const auto phi1 = t.infer(phi2);
    CHECK(embedding_loss(phi1, phi2, t, 0.0).loss == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("embedding loss weight gradients match finite differences") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        TransformNet<double> t;
        t.init(seed);
        for (double& b : t.fc1().bias.value.data()) b = 0.2;
        for (double& b : t.fc2().bias.value.data()) b = 0.2;
        const auto phi1 = randn<double>({4, 128}, seed + 1);
        const auto phi2 = randn<double>({4, 6}, seed + 2, 0.3);
        for (auto* p : t.parameters()) p->zero_grad();
        embedding_loss(phi1, phi2, t, 0.01);
        const std::vector<GradProbe<double>> probes{{t.fc1().weight.value.data(), t.fc1().weight.grad.data()},
                                                    {t.fc2().weight.value.data(), t.fc2().weight.grad.data()}};
        TransformNet<double> scratch;
        auto fragment = [&] {
            // loss only; keep the probed net's gradients intact
            scratch = t;
            return scalar_loss(embedding_loss(phi1, phi2, scratch, 0.01).loss);
        };
        const auto r = gradient_check<double>(fragment, probes, {1e-5, 64, seed});
        CAPTURE(seed);
        CHECK(r.componentwise <= 1e-4);
    }
}

TEST_CASE("embedding training: freeze contract, falling loss, determinism") {
    const auto ds = toy({18}, 40);
    const auto cam = class_attribute_matrix(dataset_schemes(ds));
    auto cfg = quick(2);
    VisualModel<float> v(4);
    v.init(1);
    pretrain_visual(v, ds, nullptr, cfg);
    AttributeModel<float> a;
    a.init(2);
    pretrain_attribute(a, ds, nullptr, cam, cfg);

    const auto v0 = bytes_of(v);
    const auto a0 = bytes_of(a);
    cfg.epochs_embed = 10;
    TransformNet<float> t1, t2;
    t1.init(3);
    t2.init(3);
    const auto r1 = train_embedding(v, a, t1, ds, &ds, cam, cfg);
    CHECK(bytes_of(v) == v0);
    CHECK(bytes_of(a) == a0);
    REQUIRE(r1.epochs.size() == 10);
    CHECK(r1.epochs[9].train_loss < r1.epochs[0].train_loss);
    for (const auto& e : r1.epochs) {
        CHECK(e.val_metric >= 0.0);
        CHECK(e.val_metric <= 1.0);
    }

    const auto r2 = train_embedding(v, a, t2, ds, &ds, cam, cfg, 3);
    CHECK(r1.to_csv(false) == r2.to_csv(false));
    CHECK(bytes_of(t1) == bytes_of(t2));
}

TEST_CASE("a huge weight penalty shrinks the transform weights every epoch") {
    const auto ds = toy({18}, 10);
    const auto cam = class_attribute_matrix(dataset_schemes(ds));
    VisualModel<float> v(4);
    v.init(1);
    AttributeModel<float> a;
    a.init(2);
    TransformNet<float> t;
    t.init(3);
    auto cfg = quick(6);
    cfg.lambda_reg = 1e3;
    // small enough that the decay factor per step stays in (0, 1)
    cfg.lr_embed = 1e-6;
    std::vector<double> norms{squared_norm(t.fc1().weight.value) + squared_norm(t.fc2().weight.value)};
    train_embedding(v, a, t, ds, nullptr, cam, cfg, 1, [&](int) {
        norms.push_back(squared_norm(t.fc1().weight.value) + squared_norm(t.fc2().weight.value));
    });
    REQUIRE(norms.size() == 7);
    for (std::size_t e = 1; e < norms.size(); ++e) CHECK(norms[e] < norms[e - 1]);
}

TEST_CASE("divergence is reported with its epoch") {
    const auto ds = toy({18}, 16);
    VisualModel<float> m(4);
    m.init(1);
    auto cfg = quick(5);
    cfg.lr = 1e6;
    try {
        pretrain_visual(m, ds, nullptr, cfg);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.epoch() >= 1);
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("training report csv round trip") {
    TrainReport r{"visual", {{1, 1.5, 0.25, 2.0}, {2, 0.75, 0.5, 2.5}}, 4.5};
    const auto csv = r.to_csv(false);
    CHECK(csv == "epoch,train_loss,val_metric,seconds\n1,1.5,0.25,0.000\n2,0.75,0.5,0.000\n");
    CHECK(r.to_csv(true).find("2.500") != std::string::npos);
    const auto back = TrainReport::from_csv("visual", csv);
    REQUIRE(back.epochs.size() == 2);
    CHECK(back.epochs[1].train_loss == 0.75);
    CHECK_THROWS_AS(TrainReport::from_csv("visual", "nope\n"), FormatError);
}

TEST_CASE("nearest prototype and argmax rules") {
    Tensor<float> protos({3, 4});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t d = 0; d < 4; ++d) protos.at(c, d) = float(c * 4 + d);
    const std::vector<float> f{8, 9, 10, 11};
    std::vector<double> dist;
    CHECK(nearest_prototype<float>(f, protos, &dist) == 2);
    CHECK(dist.size() == 3);
    CHECK(dist[2] == 0.0);

    const Tensor<float> same({3, 4}, 1.0f);
    CHECK(nearest_prototype<float>(f, same) == 0);

    const std::vector<float> logits{0.1f, 3.0f, -1.0f, 0.0f};
    CHECK(argmax_index<float>(logits) == 1);
    std::vector<float> shifted = logits;
    for (float& x : shifted) x += 100.0f;
    CHECK(argmax_index<float>(shifted) == 1);
    const std::vector<float> tie{2.0f, 2.0f};
    CHECK(argmax_index<float>(tie) == 0);
}

TEST_CASE("classifiers agree with their batched forms") {
    const auto ds = toy({18}, 5);
    const auto cam = class_attribute_matrix(dataset_schemes(ds));
    VisualModel<float> v(4);
    v.init(4);
    TransformNet<float> t;
    t.init(5);
    const auto dual = classify_dataset(ds, v, t, cam, 3);
    const auto base = classify_baseline_dataset(ds, v, 2);
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
        const auto c = classify(ds.frames[i], v, t, cam);
        CHECK(c.label == dual[i]);
        CHECK(c.distances.size() == 4);
        CHECK(classify_baseline(ds.frames[i], v) == base[i]);
    }
    // distances ignore the softmax head
    const auto before = classify(ds.frames[0], v, t, cam).distances;
    for (float& w : v.softmax_head().weight.value.data()) w = 1.0f;
    CHECK(classify(ds.frames[0], v, t, cam).distances == before);
}
