#include "dkamc/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "dkamc/errors.hpp"
#include "dkamc/losses.hpp"
#include "dkamc/optim.hpp"
#include "dkamc/parallel.hpp"

namespace dkamc {

namespace {

constexpr std::size_t kInferenceBatch = 256;
constexpr double kDivergenceFactor = 1e4;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

Rng stage_rng(std::uint64_t seed, std::uint32_t stage) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stage};
    return Rng(seq);
}

// Runs `fn(batch_tensor)` over inference-sized batches and stacks the
// [batch, width] results into one [frames, width] tensor.
template <typename Fn>
Tensor<float> batched_rows(const Dataset& dataset, std::size_t width, unsigned workers, Fn&& fn) {
    const std::size_t n = dataset.frames.size();
    if (n == 0) throw InvalidArgument("cannot run inference on an empty dataset");
    Tensor<float> out({n, width});
    const std::size_t batches = (n + kInferenceBatch - 1) / kInferenceBatch;
    parallel_for(batches, workers, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b) {
            const std::size_t start = b * kInferenceBatch;
            const std::size_t end = std::min(n, start + kInferenceBatch);
            std::vector<std::size_t> idx(end - start);
            std::iota(idx.begin(), idx.end(), start);
            const Tensor<float> rows = fn(frames_tensor(dataset, idx));
            std::copy(rows.data().begin(), rows.data().end(), out.raw() + start * width);
        }
    });
    return out;
}

template <typename T>
std::vector<Tensor<T>> copy_state(std::vector<StateEntry<T>> state) {
    std::vector<Tensor<T>> out;
    for (const auto& e : state) out.push_back(*e.tensor);
    return out;
}

template <typename T>
void write_state(std::vector<StateEntry<T>> state, const std::vector<Tensor<T>>& saved) {
    for (std::size_t i = 0; i < state.size(); ++i) *state[i].tensor = saved[i];
}

class DivergenceGuard {
public:
    explicit DivergenceGuard(std::string stage) : stage_(std::move(stage)) {}

    void check(double loss, int epoch, std::size_t batch) {
        if (!std::isfinite(loss)) throw DivergenceError(stage_, epoch, batch, loss);
        if (!has_first_) {
            first_ = loss;
            has_first_ = true;
        } else if (loss > kDivergenceFactor * first_ && loss > 0.0) {
            throw DivergenceError(stage_, epoch, batch, loss);
        }
    }

private:
    std::string stage_;
    double first_ = 0.0;
    bool has_first_ = false;
};

double ordered_mean(const std::vector<double>& values) {
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

std::vector<std::size_t> labels_of(const Dataset& ds, std::span<const std::size_t> idx) {
    std::vector<std::size_t> out(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) out[j] = ds.frames[idx[j]].label;
    return out;
}

double accuracy(const std::vector<std::size_t>& predicted, const Dataset& ds) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == ds.frames[i].label;
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

bool has_frames(const Dataset* ds) { return ds && !ds->frames.empty(); }

}  // namespace

void TrainConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a finite non-negative number");
    if (!(lr_embed >= 0.0) || !std::isfinite(lr_embed))
        throw ConfigError("lr_embed must be a finite non-negative number");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
    if (!(lambda_reg >= 0.0)) throw ConfigError("lambda_reg must be non-negative");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (epochs_visual < 0 || epochs_attr < 0 || epochs_embed < 0) throw ConfigError("epoch counts must be >= 0");
}

std::string TrainReport::to_csv(bool timing) const {
    std::string out = "epoch,train_loss,val_metric,seconds\n";
    char buf[128];
    for (const auto& e : epochs) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.3f\n", e.epoch, e.train_loss, e.val_metric,
                      timing ? e.seconds : 0.0);
        out += buf;
    }
    return out;
}

TrainReport TrainReport::from_csv(const std::string& stage, const std::string& csv) {
    TrainReport r;
    r.stage = stage;
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line != "epoch,train_loss,val_metric,seconds") {
        throw FormatError(FormatErrorKind::Malformed, "training report has an unexpected header");
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        EpochRecord e;
        std::istringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (cells.size() != 4) throw FormatError(FormatErrorKind::Malformed, "bad training report row: " + line);
        try {
            e.epoch = std::stoi(cells[0]);
            e.train_loss = std::stod(cells[1]);
            e.val_metric = std::stod(cells[2]);
            e.seconds = std::stod(cells[3]);
        } catch (const std::exception&) {
            throw FormatError(FormatErrorKind::Malformed, "bad training report row: " + line);
        }
        r.total_seconds += e.seconds;
        r.epochs.push_back(e);
    }
    return r;
}

DatasetSplit split_dataset(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
    if (dataset.frames.empty()) throw InvalidArgument("split_dataset: empty dataset");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw InvalidArgument("split_dataset: train_fraction must lie strictly between 0 and 1");
    std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < dataset.frames.size(); ++i) {
        cells[{dataset.frames[i].label, dataset.frames[i].snr_db}].push_back(i);
    }
    Rng rng = stage_rng(seed, 0);
    std::vector<bool> in_train(dataset.frames.size(), false);
    for (auto& [key, members] : cells) {
        const std::size_t n = members.size();
        if (n < 2) {
            throw InvalidArgument("split_dataset: cell (class " + std::to_string(key.first) + ", " +
                                  std::to_string(key.second) + " dB) has fewer than 2 frames");
        }
        auto take = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction));
        take = std::clamp<std::size_t>(take, 1, n - 1);
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t j = 0; j < take; ++j) in_train[members[j]] = true;
    }
    DatasetSplit split;
    split.train.class_names = split.test.class_names = dataset.class_names;
    split.train.frame_length = split.test.frame_length = dataset.frame_length;
    for (std::size_t i = 0; i < dataset.frames.size(); ++i) {
        (in_train[i] ? split.train : split.test).frames.push_back(dataset.frames[i]);
    }
    return split;
}

Tensor<float> frames_tensor(const Dataset& dataset, std::span<const std::size_t> indices) {
    const std::size_t n = dataset.frame_length;
    Tensor<float> out({indices.size(), kFrameChannels, n});
    for (std::size_t j = 0; j < indices.size(); ++j) {
        const IQFrame& fr = dataset.frames.at(indices[j]);
        std::copy(fr.i.begin(), fr.i.end(), out.raw() + (j * 2) * n);
        std::copy(fr.q.begin(), fr.q.end(), out.raw() + (j * 2 + 1) * n);
    }
    return out;
}

Tensor<float> frame_tensor(const IQFrame& frame) {
    const std::size_t n = frame.i.size();
    if (frame.q.size() != n) throw ShapeError("frame I and Q lengths differ");
    Tensor<float> out({kFrameChannels, n});
    std::copy(frame.i.begin(), frame.i.end(), out.raw());
    std::copy(frame.q.begin(), frame.q.end(), out.raw() + n);
    return out;
}

Tensor<float> visual_features(const Dataset& dataset, const VisualModel<float>& visual, unsigned workers) {
    return batched_rows(dataset, kVisualFeatureDim, workers,
                        [&](const Tensor<float>& x) { return visual.infer(x).feature; });
}

Tensor<float> attribute_predictions(const Dataset& dataset, const AttributeModel<float>& attribute,
                                    unsigned workers) {
    return batched_rows(dataset, kAttributeCount, workers, [&](const Tensor<float>& x) { return attribute.infer(x); });
}

TrainReport pretrain_visual(VisualModel<float>& model, const Dataset& train, const Dataset* validation,
                            const TrainConfig& config, const EpochHook& hook) {
    config.validate();
    if (train.frames.empty()) throw InvalidArgument("pretrain_visual: empty training set");
    const auto params = model.parameters();
    zero_grads<float>(params);
    TrainReport report{"visual", {}, 0.0};
    const auto start = Clock::now();
    Rng rng = stage_rng(config.seed, 1);
    DivergenceGuard guard("pretrain-visual");
    const std::size_t n = train.frames.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> per_sample(n);
    double best = -1.0;
    std::vector<Tensor<float>> best_state;

    for (int epoch = 1; epoch <= config.epochs_visual; ++epoch) {
        const auto epoch_start = Clock::now();
        std::shuffle(order.begin(), order.end(), rng);
        std::size_t batch_no = 0;
        for (std::size_t s = 0; s < n; s += config.batch_size, ++batch_no) {
            const std::span<const std::size_t> idx(order.data() + s, std::min(config.batch_size, n - s));
            const auto labels = labels_of(train, idx);
            const auto out = model.forward(frames_tensor(train, idx));
            const LossResult<float> loss = softmax_cross_entropy(out.logits, std::span<const std::size_t>(labels));
            guard.check(loss.loss, epoch, batch_no);
            model.backward(loss.grad);
            sgd_momentum_step<float>(params, config.lr, config.momentum);
            for (std::size_t j = 0; j < idx.size(); ++j) per_sample[idx[j]] = loss.per_sample[j];
        }
        EpochRecord rec{epoch, ordered_mean(per_sample), std::numeric_limits<double>::quiet_NaN(), 0.0};
        if (has_frames(validation)) {
            rec.val_metric = accuracy(classify_baseline_dataset(*validation, model), *validation);
            if (rec.val_metric > best) {
                best = rec.val_metric;
                best_state = copy_state(model.state());
            }
        }
        rec.seconds = seconds_since(epoch_start);
        report.epochs.push_back(rec);
        if (hook) hook(epoch);
    }
    if (!best_state.empty()) write_state(model.state(), best_state);
    report.total_seconds = seconds_since(start);
    return report;
}

TrainReport pretrain_attribute(AttributeModel<float>& model, const Dataset& train, const Dataset* validation,
                               const ClassAttributeMatrix& cam, const TrainConfig& config, const EpochHook& hook) {
    config.validate();
    if (train.frames.empty()) throw InvalidArgument("pretrain_attribute: empty training set");
    if (cam.num_classes() != train.num_classes())
        throw ShapeError("pretrain_attribute: attribute matrix rows do not match dataset classes");
    const Tensor<float> targets_all = cam.as_tensor<float>();
    const auto params = model.parameters();
    zero_grads<float>(params);
    TrainReport report{"attribute", {}, 0.0};
    const auto start = Clock::now();
    Rng rng = stage_rng(config.seed, 2);
    DivergenceGuard guard("pretrain-attr");
    const std::size_t n = train.frames.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> per_sample(n);
    double best = std::numeric_limits<double>::infinity();
    std::vector<Tensor<float>> best_state;

    auto targets_for = [&](const Dataset& ds, std::span<const std::size_t> idx) {
        Tensor<float> t({idx.size(), kAttributeCount});
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const std::size_t label = ds.frames[idx[j]].label;
            std::copy_n(targets_all.raw() + label * kAttributeCount, kAttributeCount, t.raw() + j * kAttributeCount);
        }
        return t;
    };

    for (int epoch = 1; epoch <= config.epochs_attr; ++epoch) {
        const auto epoch_start = Clock::now();
        std::shuffle(order.begin(), order.end(), rng);
        std::size_t batch_no = 0;
        for (std::size_t s = 0; s < n; s += config.batch_size, ++batch_no) {
            const std::span<const std::size_t> idx(order.data() + s, std::min(config.batch_size, n - s));
            const Tensor<float> pred = model.forward(frames_tensor(train, idx), Mode::Train);
            const LossResult<float> loss = mse_loss(pred, targets_for(train, idx));
            guard.check(loss.loss, epoch, batch_no);
            model.backward(loss.grad);
            sgd_momentum_step<float>(params, config.lr, config.momentum);
            for (std::size_t j = 0; j < idx.size(); ++j) per_sample[idx[j]] = loss.per_sample[j];
        }
        EpochRecord rec{epoch, ordered_mean(per_sample), std::numeric_limits<double>::quiet_NaN(), 0.0};
        if (has_frames(validation)) {
            const Tensor<float> pred = attribute_predictions(*validation, model);
            std::vector<std::size_t> all(validation->frames.size());
            std::iota(all.begin(), all.end(), 0);
            rec.val_metric = mse_loss(pred, targets_for(*validation, all)).loss;
            if (rec.val_metric < best) {
                best = rec.val_metric;
                best_state = copy_state(model.state());
            }
        }
        rec.seconds = seconds_since(epoch_start);
        report.epochs.push_back(rec);
        if (hook) hook(epoch);
    }
    if (!best_state.empty()) write_state(model.state(), best_state);
    report.total_seconds = seconds_since(start);
    return report;
}

template <typename T>
EmbeddingLossValue embedding_loss(const Tensor<T>& visual_features, const Tensor<T>& attribute_predictions,
                                  TransformNet<T>& tnet, double lambda_reg) {
    if (visual_features.rank() != 2 || visual_features.dim(1) != kVisualFeatureDim)
        throw ShapeError("embedding_loss: visual features must be [batch, 128], got " +
                         shape_string(visual_features.shape()));
    if (attribute_predictions.rank() != 2 || attribute_predictions.dim(1) != kAttributeCount ||
        attribute_predictions.dim(0) != visual_features.dim(0))
        throw ShapeError("embedding_loss: attribute predictions must be [batch, 6] matching the features, got " +
                         shape_string(attribute_predictions.shape()));
    const std::size_t batch = visual_features.dim(0);
    const Tensor<T> embedded = tnet.forward(attribute_predictions);
    EmbeddingLossValue r;
    r.per_sample.resize(batch);
    Tensor<T> grad(embedded.shape());
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        double row = 0.0;
        for (std::size_t d = 0; d < kVisualFeatureDim; ++d) {
            const std::size_t i = b * kVisualFeatureDim + d;
            const double diff = static_cast<double>(embedded[i]) - static_cast<double>(visual_features[i]);
            row += diff * diff;
            grad[i] = static_cast<T>(2.0 * diff / static_cast<double>(batch));
        }
        r.per_sample[b] = row;
        total += row;
    }
    tnet.backward(grad);
    r.data_term = total / static_cast<double>(batch);
    double weight_norm = 0.0;
    for (FullyConnected<T>* fc : {&tnet.fc1(), &tnet.fc2()}) {
        weight_norm += squared_norm(fc->weight.value);
        if (lambda_reg != 0.0) {
            const T k = static_cast<T>(2.0 * lambda_reg);
            for (std::size_t i = 0; i < fc->weight.value.size(); ++i) fc->weight.grad[i] += k * fc->weight.value[i];
        }
    }
    r.reg_term = lambda_reg * weight_norm;
    r.loss = r.data_term + r.reg_term;
    return r;
}

TrainReport train_embedding(const VisualModel<float>& visual, const AttributeModel<float>& attribute,
                            TransformNet<float>& tnet, const Dataset& train, const Dataset* validation,
                            const ClassAttributeMatrix& cam, const TrainConfig& config, unsigned workers,
                            const EpochHook& hook) {
    config.validate();
    if (train.frames.empty()) throw InvalidArgument("train_embedding: empty training set");
    const auto start = Clock::now();
    // Both submodels are frozen, so their outputs are computed once.
    const Tensor<float> phi1 = visual_features(train, visual, workers);
    const Tensor<float> phi2 = attribute_predictions(train, attribute, workers);
    Tensor<float> val_features;
    if (has_frames(validation)) val_features = visual_features(*validation, visual, workers);

    const auto params = tnet.parameters();
    zero_grads<float>(params);
    TrainReport report{"embedding", {}, 0.0};
    Rng rng = stage_rng(config.seed, 3);
    DivergenceGuard guard("train-embed");
    const std::size_t n = train.frames.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> per_sample(n);

    auto gather = [](const Tensor<float>& rows, std::span<const std::size_t> idx) {
        const std::size_t w = rows.dim(1);
        Tensor<float> out({idx.size(), w});
        for (std::size_t j = 0; j < idx.size(); ++j) std::copy_n(rows.raw() + idx[j] * w, w, out.raw() + j * w);
        return out;
    };

    for (int epoch = 1; epoch <= config.epochs_embed; ++epoch) {
        const auto epoch_start = Clock::now();
        std::shuffle(order.begin(), order.end(), rng);
        double reg_weighted = 0.0;
        std::size_t batch_no = 0;
        for (std::size_t s = 0; s < n; s += config.batch_size, ++batch_no) {
            const std::span<const std::size_t> idx(order.data() + s, std::min(config.batch_size, n - s));
            const EmbeddingLossValue loss = embedding_loss(gather(phi1, idx), gather(phi2, idx), tnet, config.lambda_reg);
            guard.check(loss.loss, epoch, batch_no);
            sgd_momentum_step<float>(params, config.lr_embed, config.momentum);
            for (std::size_t j = 0; j < idx.size(); ++j) per_sample[idx[j]] = loss.per_sample[j];
            reg_weighted += loss.reg_term * static_cast<double>(idx.size());
        }
        EpochRecord rec{epoch, ordered_mean(per_sample) + reg_weighted / static_cast<double>(n),
                        std::numeric_limits<double>::quiet_NaN(), 0.0};
        if (has_frames(validation)) {
            const Tensor<float> protos = class_prototypes(tnet, cam);
            std::size_t hits = 0;
            for (std::size_t i = 0; i < validation->frames.size(); ++i) {
                const std::span<const float> f(val_features.raw() + i * kVisualFeatureDim, kVisualFeatureDim);
                hits += nearest_prototype(f, protos) == validation->frames[i].label;
            }
            rec.val_metric = static_cast<double>(hits) / static_cast<double>(validation->frames.size());
        }
        rec.seconds = seconds_since(epoch_start);
        report.epochs.push_back(rec);
        if (hook) hook(epoch);
    }
    report.total_seconds = seconds_since(start);
    return report;
}

template <typename T>
std::size_t nearest_prototype(std::span<const T> feature, const Tensor<T>& prototypes, std::vector<double>* distances) {
    if (prototypes.rank() != 2 || prototypes.dim(1) != feature.size())
        throw ShapeError("nearest_prototype: prototype width does not match feature length");
    const std::size_t k = prototypes.dim(0), width = prototypes.dim(1);
    if (distances) distances->assign(k, 0.0);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
            const double diff = static_cast<double>(feature[j]) - static_cast<double>(prototypes.at(c, j));
            d2 += diff * diff;
        }
        const double d = std::sqrt(d2);
        if (distances) (*distances)[c] = d;
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

template <typename T>
std::size_t argmax_index(std::span<const T> values) {
    if (values.empty()) throw InvalidArgument("argmax of an empty vector");
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

Classification classify(const IQFrame& frame, const VisualModel<float>& visual, const TransformNet<float>& tnet,
                        const ClassAttributeMatrix& cam) {
    if (cam.num_classes() != visual.num_classes())
        throw ShapeError("classify: attribute matrix and visual model disagree on the class count");
    const Tensor<float> feature = visual.infer(frame_tensor(frame)).feature;
    const Tensor<float> protos = class_prototypes(tnet, cam);
    Classification c;
    c.label = nearest_prototype(feature.data(), protos, &c.distances);
    return c;
}

std::size_t classify_baseline(const IQFrame& frame, const VisualModel<float>& visual) {
    const Tensor<float> logits = visual.infer(frame_tensor(frame)).logits;
    return argmax_index(logits.data());
}

std::vector<std::size_t> classify_dataset(const Dataset& dataset, const VisualModel<float>& visual,
                                          const TransformNet<float>& tnet, const ClassAttributeMatrix& cam,
                                          unsigned workers) {
    if (cam.num_classes() != visual.num_classes())
        throw ShapeError("classify: attribute matrix and visual model disagree on the class count");
    const Tensor<float> feats = visual_features(dataset, visual, workers);
    const Tensor<float> protos = class_prototypes(tnet, cam);
    std::vector<std::size_t> out(dataset.frames.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = nearest_prototype(std::span<const float>(feats.raw() + i * kVisualFeatureDim, kVisualFeatureDim),
                                   protos);
    }
    return out;
}

std::vector<std::size_t> classify_baseline_dataset(const Dataset& dataset, const VisualModel<float>& visual,
                                                   unsigned workers) {
    const std::size_t k = visual.num_classes();
    const Tensor<float> logits =
        batched_rows(dataset, k, workers, [&](const Tensor<float>& x) { return visual.infer(x).logits; });
    std::vector<std::size_t> out(dataset.frames.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = argmax_index(std::span<const float>(logits.raw() + i * k, k));
    }
    return out;
}

template EmbeddingLossValue embedding_loss(const Tensor<float>&, const Tensor<float>&, TransformNet<float>&, double);
template EmbeddingLossValue embedding_loss(const Tensor<double>&, const Tensor<double>&, TransformNet<double>&, double);
template std::size_t nearest_prototype(std::span<const float>, const Tensor<float>&, std::vector<double>*);
template std::size_t nearest_prototype(std::span<const double>, const Tensor<double>&, std::vector<double>*);
template std::size_t argmax_index(std::span<const float>);
template std::size_t argmax_index(std::span<const double>);

}  // namespace dkamc
