#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dkamc/dataset.hpp"
#include "dkamc/tensor.hpp"
#include "dkamc/training.hpp"

namespace dkamc {

// Rows are the true class, columns the prediction.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t num_classes = 1, std::optional<int> snr_filter = std::nullopt);

    void add(std::size_t truth, std::size_t predicted);
    std::uint64_t at(std::size_t truth, std::size_t predicted) const;
    std::size_t num_classes() const noexcept { return k_; }
    std::optional<int> snr_filter() const noexcept { return snr_; }

    std::uint64_t total() const;
    std::uint64_t row_total(std::size_t truth) const;
    std::uint64_t trace() const;
    // trace / total; throws on an empty matrix.
    double accuracy() const;

    // Header "true\pred,<names...>", then one row per true class.
    std::string to_csv(const std::vector<std::string>& class_names) const;

    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::size_t k_;
    std::optional<int> snr_;
    std::vector<std::uint64_t> counts_;
};

struct AccuracyPoint {
    int snr_db = 0;
    double accuracy = 0.0;
    std::size_t count = 0;
};

struct AccuracyCurve {
    std::vector<AccuracyPoint> points;  // ascending SNR
};

struct Evaluation {
    AccuracyCurve curve;
    ConfusionMatrix overall;
    std::vector<ConfusionMatrix> per_snr;  // same order as curve.points
};

// From precomputed predictions, one per test frame.
Evaluation evaluate(const Dataset& test, std::span<const std::size_t> predictions);

using FrameClassifier = std::function<std::size_t(const IQFrame&)>;

// The classifier is called once per frame, possibly from several threads.
Evaluation evaluate(const FrameClassifier& classifier, const Dataset& test, unsigned workers = 1);

// (cm[a][b] + cm[b][a]) / (row a + row b).
double confusion_pair_rate(const ConfusionMatrix& cm, std::size_t a, std::size_t b);

// Eigen-decomposition of a symmetric n x n row-major matrix by cyclic Jacobi
// rotations. Values are sorted descending; vectors[i] pairs with values[i]
// and has its largest-magnitude component positive.
struct SymmetricEigen {
    std::vector<double> values;
    std::vector<std::vector<double>> vectors;
    int sweeps = 0;
};
SymmetricEigen jacobi_eigen(std::vector<double> matrix, std::size_t n, double tolerance = 1e-9, int max_sweeps = 100);

// Sample covariance (divides by B - 1) of the rows of a [B, D] matrix.
std::vector<double> sample_covariance(const std::vector<double>& rows, std::size_t count, std::size_t dim);

struct ScatterPoint {
    double x = 0.0;
    double y = 0.0;
    std::size_t label = 0;
};

struct ScatterMap {
    std::vector<ScatterPoint> points;
    std::array<double, 2> explained_variance{};
    double total_variance = 0.0;
    std::array<std::vector<double>, 2> components;
};

// Projects centred features onto the two leading principal directions.
// labels may be empty, in which case every point is labelled 0.
template <typename T>
ScatterMap pca_2d(const Tensor<T>& features, std::span<const std::size_t> labels = {});

struct PairRate {
    std::string classifier;
    std::size_t class_a = 0;
    std::size_t class_b = 0;
    double rate = 0.0;
};

struct ClassifierEvaluation {
    std::string tag;
    Evaluation result;
};

struct ReportBundle {
    std::vector<std::string> class_names;
    std::vector<ClassifierEvaluation> classifiers;
    std::optional<ScatterMap> scatter;
    std::vector<TrainReport> losses;
    std::vector<PairRate> pair_rates;
    bool timing = false;
};

// Writes accuracy.csv, confusion_<tag>.csv (overall) and
// confusion_<tag>_snr<dB>.csv, scatter.csv, losses.csv, pair_rates.csv and
// SVG renderings. Output depends only on the bundle.
std::vector<std::filesystem::path> export_report(const ReportBundle& bundle, const std::filesystem::path& out_dir);

// The individual files, exposed for tests.
std::string accuracy_csv(const ReportBundle& bundle);
std::string scatter_csv(const ScatterMap& scatter);
std::string losses_csv(const std::vector<TrainReport>& losses, bool timing);
std::string pair_rates_csv(const ReportBundle& bundle);

std::string accuracy_svg(const ReportBundle& bundle);
std::string confusion_svg(const ConfusionMatrix& cm, const std::vector<std::string>& class_names);
std::string scatter_svg(const ScatterMap& scatter, const std::vector<std::string>& class_names);
std::string losses_svg(const std::vector<TrainReport>& losses);

}  // namespace dkamc
