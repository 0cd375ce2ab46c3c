#include "dkamc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>

#include "binary_io.hpp"
#include "dkamc/errors.hpp"
#include "dkamc/parallel.hpp"

namespace dkamc {

namespace {

std::string num(double v, const char* f = "%.9g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// Plot geometry shared by the line and scatter charts.
constexpr double kWidth = 640, kHeight = 420, kLeft = 60, kRight = 20, kTop = 30, kBottom = 50;
constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                              "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Axes {
    double x0, x1, y0, y1;

    double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

Axes padded_axes(double x0, double x1, double y0, double y1) {
    if (!(x1 > x0)) { x0 -= 1; x1 += 1; }
    if (!(y1 > y0)) { y0 -= 1; y1 += 1; }
    return {x0, x1, y0, y1};
}

std::string svg_open(double w, double h, const std::string& title) {
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w, "%.0f") + "\" height=\"" +
                    num(h, "%.0f") + "\" viewBox=\"0 0 " + num(w, "%.0f") + " " + num(h, "%.0f") + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(w / 2, "%.1f") + "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\">" + escape_xml(title) + "</text>\n";
    return s;
}

std::string svg_frame(const Axes& a, const std::string& xlabel, const std::string& ylabel) {
    std::string s;
    const double l = kLeft, r = kWidth - kRight, t = kTop, b = kHeight - kBottom;
    s += "<rect x=\"" + num(l, "%.1f") + "\" y=\"" + num(t, "%.1f") + "\" width=\"" + num(r - l, "%.1f") +
         "\" height=\"" + num(b - t, "%.1f") + "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = a.x0 + (a.x1 - a.x0) * i / 4.0;
        const double yv = a.y0 + (a.y1 - a.y0) * i / 4.0;
        s += "<text x=\"" + num(a.px(xv), "%.1f") + "\" y=\"" + num(b + 16, "%.1f") +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" + num(xv, "%.3g") + "</text>\n";
        s += "<text x=\"" + num(l - 6, "%.1f") + "\" y=\"" + num(a.py(yv) + 3, "%.1f") +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" + num(yv, "%.3g") + "</text>\n";
    }
    s += "<text x=\"" + num((l + r) / 2, "%.1f") + "\" y=\"" + num(kHeight - 12, "%.1f") +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + escape_xml(xlabel) + "</text>\n";
    s += "<text x=\"14\" y=\"" + num((t + b) / 2, "%.1f") + "\" transform=\"rotate(-90 14 " + num((t + b) / 2, "%.1f") +
         ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + escape_xml(ylabel) + "</text>\n";
    return s;
}

std::string svg_legend(const std::vector<std::string>& names) {
    std::string s;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const double y = kTop + 14 + 14.0 * static_cast<double>(i);
        const double x = kWidth - kRight - 120;
        s += "<rect x=\"" + num(x, "%.1f") + "\" y=\"" + num(y - 8, "%.1f") + "\" width=\"10\" height=\"10\" fill=\"" +
             kPalette[i % kPalette.size()] + "\"/>\n";
        s += "<text x=\"" + num(x + 14, "%.1f") + "\" y=\"" + num(y + 1, "%.1f") +
             "\" font-family=\"sans-serif\" font-size=\"11\">" + escape_xml(names[i]) + "</text>\n";
    }
    return s;
}

std::string polyline(const Axes& a, const std::vector<std::pair<double, double>>& pts, const char* colour) {
    std::string s = "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" + std::string(colour) + "\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i) s += ' ';
        s += num(a.px(pts[i].first), "%.2f") + "," + num(a.py(pts[i].second), "%.2f");
    }
    return s + "\"/>\n";
}

std::string snr_tag(int snr) { return "snr" + std::to_string(snr); }

}  // namespace

// ---- confusion matrix -------------------------------------------------------

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes, std::optional<int> snr_filter)
    : k_(num_classes), snr_(snr_filter), counts_(num_classes * num_classes, 0) {
    if (num_classes == 0) throw InvalidArgument("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
    if (truth >= k_ || predicted >= k_) throw InvalidArgument("confusion matrix index out of range");
    ++counts_[truth * k_ + predicted];
}

std::uint64_t ConfusionMatrix::at(std::size_t truth, std::size_t predicted) const {
    if (truth >= k_ || predicted >= k_) throw InvalidArgument("confusion matrix index out of range");
    return counts_[truth * k_ + predicted];
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::row_total(std::size_t truth) const {
    if (truth >= k_) throw InvalidArgument("confusion matrix row out of range");
    return std::accumulate(counts_.begin() + static_cast<std::ptrdiff_t>(truth * k_),
                           counts_.begin() + static_cast<std::ptrdiff_t>((truth + 1) * k_), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t t = 0;
    for (std::size_t c = 0; c < k_; ++c) t += counts_[c * k_ + c];
    return t;
}

double ConfusionMatrix::accuracy() const {
    const auto n = total();
    if (n == 0) throw InvalidArgument("accuracy of an empty confusion matrix");
    return static_cast<double>(trace()) / static_cast<double>(n);
}

std::string ConfusionMatrix::to_csv(const std::vector<std::string>& class_names) const {
    if (class_names.size() != k_) throw InvalidArgument("confusion CSV: class name count does not match");
    std::string out = "true\\pred";
    for (const auto& n : class_names) out += "," + n;
    out += "\n";
    for (std::size_t t = 0; t < k_; ++t) {
        out += class_names[t];
        for (std::size_t p = 0; p < k_; ++p) out += "," + std::to_string(counts_[t * k_ + p]);
        out += "\n";
    }
    return out;
}

// ---- evaluation -------------------------------------------------------------

Evaluation evaluate(const Dataset& test, std::span<const std::size_t> predictions) {
    if (test.frames.empty()) throw InvalidArgument("evaluate: empty test set");
    if (predictions.size() != test.frames.size())
        throw InvalidArgument("evaluate: prediction count does not match the test set");
    const std::size_t k = test.num_classes();
    Evaluation ev{{}, ConfusionMatrix(k), {}};
    std::map<int, ConfusionMatrix> bins;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const IQFrame& f = test.frames[i];
        ev.overall.add(f.label, predictions[i]);
        auto it = bins.try_emplace(f.snr_db, k, f.snr_db).first;
        it->second.add(f.label, predictions[i]);
    }
    for (auto& [snr, cm] : bins) {
        ev.curve.points.push_back({snr, cm.accuracy(), static_cast<std::size_t>(cm.total())});
        ev.per_snr.push_back(std::move(cm));
    }
    return ev;
}

Evaluation evaluate(const FrameClassifier& classifier, const Dataset& test, unsigned workers) {
    if (test.frames.empty()) throw InvalidArgument("evaluate: empty test set");
    std::vector<std::size_t> predictions(test.frames.size());
    parallel_for(predictions.size(), workers, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) predictions[i] = classifier(test.frames[i]);
    });
    return evaluate(test, predictions);
}

double confusion_pair_rate(const ConfusionMatrix& cm, std::size_t a, std::size_t b) {
    if (a == b) throw InvalidArgument("confusion_pair_rate needs two distinct classes");
    const auto rows = cm.row_total(a) + cm.row_total(b);
    if (rows == 0) throw InvalidArgument("confusion_pair_rate: both rows are empty");
    return static_cast<double>(cm.at(a, b) + cm.at(b, a)) / static_cast<double>(rows);
}

// ---- PCA --------------------------------------------------------------------

SymmetricEigen jacobi_eigen(std::vector<double> a, std::size_t n, double tolerance, int max_sweeps) {
    if (n == 0 || a.size() != n * n) throw InvalidArgument("jacobi_eigen: matrix must be n x n with n > 0");
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double x = a[i * n + j], y = a[j * n + i];
            if (std::abs(x - y) > 1e-9 * std::max({1.0, std::abs(x), std::abs(y)}))
                throw InvalidArgument("jacobi_eigen: matrix is not symmetric");
        }
    }
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) s += a[i * n + j] * a[i * n + j];
        return std::sqrt(s);
    };
    double frob = 0.0;
    for (double x : a) frob += x * x;
    // Absolute threshold for unit-scale matrices; scaled for large ones so
    // rounding cannot stall convergence.
    const double threshold = tolerance * std::max(1.0, std::sqrt(frob));

    SymmetricEigen out;
    while (off_norm() >= threshold) {
        if (out.sweeps >= max_sweeps) throw Error("jacobi_eigen did not converge");
        ++out.sweeps;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) continue;
                const double app = a[p * n + p], aqq = a[q * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = a[q * n + p] = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k * n + p], vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x * n + x] > a[y * n + y]; });
    for (std::size_t idx : order) {
        out.values.push_back(a[idx * n + idx]);
        std::vector<double> vec(n);
        for (std::size_t k = 0; k < n; ++k) vec[k] = v[k * n + idx];
        std::size_t big = 0;
        for (std::size_t k = 1; k < n; ++k)
            if (std::abs(vec[k]) > std::abs(vec[big])) big = k;
        if (vec[big] < 0)
            for (double& x : vec) x = -x;
        out.vectors.push_back(std::move(vec));
    }
    return out;
}

std::vector<double> sample_covariance(const std::vector<double>& rows, std::size_t count, std::size_t dim) {
    if (count < 2 || rows.size() != count * dim) throw InvalidArgument("sample_covariance: need >= 2 rows of width dim");
    std::vector<double> mean(dim, 0.0);
    for (std::size_t r = 0; r < count; ++r)
        for (std::size_t d = 0; d < dim; ++d) mean[d] += rows[r * dim + d];
    for (double& m : mean) m /= static_cast<double>(count);
    std::vector<double> cov(dim * dim, 0.0);
    std::vector<double> centred(dim);
    for (std::size_t r = 0; r < count; ++r) {
        for (std::size_t d = 0; d < dim; ++d) centred[d] = rows[r * dim + d] - mean[d];
        for (std::size_t i = 0; i < dim; ++i) {
            if (centred[i] == 0.0) continue;
            for (std::size_t j = i; j < dim; ++j) cov[i * dim + j] += centred[i] * centred[j];
        }
    }
    const double denom = static_cast<double>(count - 1);
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = i; j < dim; ++j) {
            cov[i * dim + j] /= denom;
            cov[j * dim + i] = cov[i * dim + j];
        }
    }
    return cov;
}

template <typename T>
ScatterMap pca_2d(const Tensor<T>& features, std::span<const std::size_t> labels) {
    if (features.rank() != 2) throw ShapeError("pca_2d expects a [B, D] matrix");
    const std::size_t count = features.dim(0), dim = features.dim(1);
    if (count < 3) throw InvalidArgument("pca_2d needs at least 3 points");
    if (dim < 2) throw InvalidArgument("pca_2d needs at least 2 feature dimensions");
    if (!labels.empty() && labels.size() != count) throw InvalidArgument("pca_2d: label count does not match rows");

    std::vector<double> rows(count * dim);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<double>(features[i]);
    const std::vector<double> cov = sample_covariance(rows, count, dim);
    const SymmetricEigen eig = jacobi_eigen(cov, dim);

    ScatterMap map;
    for (std::size_t d = 0; d < dim; ++d) map.total_variance += cov[d * dim + d];
    for (int c = 0; c < 2; ++c) {
        map.explained_variance[c] = std::max(0.0, eig.values[c]);
        map.components[c] = eig.vectors[c];
    }
    std::vector<double> mean(dim, 0.0);
    for (std::size_t r = 0; r < count; ++r)
        for (std::size_t d = 0; d < dim; ++d) mean[d] += rows[r * dim + d];
    for (double& m : mean) m /= static_cast<double>(count);
    map.points.resize(count);
    for (std::size_t r = 0; r < count; ++r) {
        double x = 0.0, y = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            const double c = rows[r * dim + d] - mean[d];
            x += c * map.components[0][d];
            y += c * map.components[1][d];
        }
        map.points[r] = {x, y, labels.empty() ? 0 : labels[r]};
    }
    return map;
}

template ScatterMap pca_2d(const Tensor<float>&, std::span<const std::size_t>);
template ScatterMap pca_2d(const Tensor<double>&, std::span<const std::size_t>);

// ---- CSV --------------------------------------------------------------------

std::string accuracy_csv(const ReportBundle& bundle) {
    std::string out = "classifier,snr_db,n,accuracy\n";
    for (const auto& c : bundle.classifiers) {
        for (const auto& p : c.result.curve.points) {
            out += c.tag + "," + std::to_string(p.snr_db) + "," + std::to_string(p.count) + "," + num(p.accuracy) + "\n";
        }
    }
    return out;
}

std::string scatter_csv(const ScatterMap& scatter) {
    std::string out = "x,y,class\n";
    for (const auto& p : scatter.points) out += num(p.x) + "," + num(p.y) + "," + std::to_string(p.label) + "\n";
    return out;
}

std::string losses_csv(const std::vector<TrainReport>& losses, bool timing) {
    std::string out = "stage,epoch,loss,seconds\n";
    for (const auto& r : losses) {
        for (const auto& e : r.epochs) {
            out += r.stage + "," + std::to_string(e.epoch) + "," + num(e.train_loss) + "," +
                   num(timing ? e.seconds : 0.0, "%.3f") + "\n";
        }
    }
    return out;
}

std::string pair_rates_csv(const ReportBundle& bundle) {
    std::string out = "classifier,class_a,class_b,pair_rate\n";
    for (const auto& p : bundle.pair_rates) {
        const auto name = [&](std::size_t c) {
            return c < bundle.class_names.size() ? bundle.class_names[c] : std::to_string(c);
        };
        out += p.classifier + "," + name(p.class_a) + "," + name(p.class_b) + "," + num(p.rate) + "\n";
    }
    return out;
}

// ---- SVG --------------------------------------------------------------------

std::string accuracy_svg(const ReportBundle& bundle) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
    std::vector<std::string> names;
    for (const auto& c : bundle.classifiers) {
        names.push_back(c.tag);
        for (const auto& p : c.result.curve.points) {
            x0 = std::min(x0, double(p.snr_db));
            x1 = std::max(x1, double(p.snr_db));
        }
    }
    if (names.empty()) x0 = x1 = 0;
    const Axes a = padded_axes(x0, x1, 0.0, 1.0);
    std::string s = svg_open(kWidth, kHeight, "Accuracy vs SNR") + svg_frame(a, "SNR (dB)", "accuracy");
    for (std::size_t i = 0; i < bundle.classifiers.size(); ++i) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& p : bundle.classifiers[i].result.curve.points) pts.emplace_back(p.snr_db, p.accuracy);
        s += polyline(a, pts, kPalette[i % kPalette.size()]);
    }
    return s + svg_legend(names) + "</svg>\n";
}

std::string confusion_svg(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
    const std::size_t k = cm.num_classes();
    if (class_names.size() != k) throw InvalidArgument("confusion SVG: class name count does not match");
    const double cell = 60, left = 80, top = 40;
    const double w = left + cell * k + 20, h = top + cell * k + 50;
    std::string s = svg_open(w, h, "Confusion matrix (rows: true, cols: predicted)");
    for (std::size_t t = 0; t < k; ++t) {
        const auto row = cm.row_total(t);
        for (std::size_t p = 0; p < k; ++p) {
            const double frac = row ? static_cast<double>(cm.at(t, p)) / static_cast<double>(row) : 0.0;
            const int shade = static_cast<int>(std::lround(255.0 * (1.0 - frac)));
            char fill[16];
            std::snprintf(fill, sizeof fill, "#%02x%02xff", shade, shade);
            const double x = left + cell * p, y = top + cell * t;
            s += "<rect x=\"" + num(x, "%.1f") + "\" y=\"" + num(y, "%.1f") + "\" width=\"" + num(cell, "%.1f") +
                 "\" height=\"" + num(cell, "%.1f") + "\" fill=\"" + fill + "\" stroke=\"#888\"/>\n";
            s += "<text x=\"" + num(x + cell / 2, "%.1f") + "\" y=\"" + num(y + cell / 2 + 4, "%.1f") +
                 "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + num(frac, "%.2f") +
                 "</text>\n";
        }
        s += "<text x=\"" + num(left - 6, "%.1f") + "\" y=\"" + num(top + cell * t + cell / 2 + 4, "%.1f") +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + escape_xml(class_names[t]) +
             "</text>\n";
        s += "<text x=\"" + num(left + cell * t + cell / 2, "%.1f") + "\" y=\"" + num(top + cell * k + 16, "%.1f") +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + escape_xml(class_names[t]) +
             "</text>\n";
    }
    return s + "</svg>\n";
}

std::string scatter_svg(const ScatterMap& scatter, const std::vector<std::string>& class_names) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& p : scatter.points) {
        x0 = std::min(x0, p.x); x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y); y1 = std::max(y1, p.y);
    }
    if (scatter.points.empty()) x0 = x1 = y0 = y1 = 0;
    const Axes a = padded_axes(x0, x1, y0, y1);
    std::string s = svg_open(kWidth, kHeight, "Feature scatter (PCA)") + svg_frame(a, "PC1", "PC2");
    for (const auto& p : scatter.points) {
        s += "<circle cx=\"" + num(a.px(p.x), "%.2f") + "\" cy=\"" + num(a.py(p.y), "%.2f") + "\" r=\"2\" fill=\"" +
             kPalette[p.label % kPalette.size()] + "\" fill-opacity=\"0.6\"/>\n";
    }
    return s + svg_legend(class_names) + "</svg>\n";
}

std::string losses_svg(const std::vector<TrainReport>& losses) {
    // Each stage is scaled by its own epoch-1 loss so all stages share one axis.
    double x1 = 1, y1 = 1;
    std::vector<std::string> names;
    std::vector<std::vector<std::pair<double, double>>> curves;
    for (const auto& r : losses) {
        names.push_back(r.stage);
        std::vector<std::pair<double, double>> pts;
        const double first = r.epochs.empty() ? 1.0 : r.epochs.front().train_loss;
        for (const auto& e : r.epochs) {
            const double y = first > 0 ? e.train_loss / first : e.train_loss;
            pts.emplace_back(e.epoch, y);
            x1 = std::max(x1, double(e.epoch));
            if (std::isfinite(y)) y1 = std::max(y1, y);
        }
        curves.push_back(std::move(pts));
    }
    const Axes a = padded_axes(1.0, x1, 0.0, y1);
    std::string s = svg_open(kWidth, kHeight, "Training loss") + svg_frame(a, "epoch", "loss / epoch-1 loss");
    for (std::size_t i = 0; i < curves.size(); ++i) s += polyline(a, curves[i], kPalette[i % kPalette.size()]);
    return s + svg_legend(names) + "</svg>\n";
}

// ---- bundle -----------------------------------------------------------------

std::vector<std::filesystem::path> export_report(const ReportBundle& bundle, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create report directory '" + out_dir.string() + "': " + ec.message());
    std::vector<std::filesystem::path> written;
    auto put = [&](const std::string& name, const std::string& text) {
        const auto path = out_dir / name;
        detail::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
        written.push_back(path);
    };
    put("accuracy.csv", accuracy_csv(bundle));
    put("accuracy.svg", accuracy_svg(bundle));
    for (const auto& c : bundle.classifiers) {
        put("confusion_" + c.tag + ".csv", c.result.overall.to_csv(bundle.class_names));
        put("confusion_" + c.tag + ".svg", confusion_svg(c.result.overall, bundle.class_names));
        for (const auto& cm : c.result.per_snr) {
            put("confusion_" + c.tag + "_" + snr_tag(cm.snr_filter().value_or(0)) + ".csv", cm.to_csv(bundle.class_names));
        }
    }
    if (bundle.scatter) {
        put("scatter.csv", scatter_csv(*bundle.scatter));
        put("scatter.svg", scatter_svg(*bundle.scatter, bundle.class_names));
    }
    put("losses.csv", losses_csv(bundle.losses, bundle.timing));
    put("losses.svg", losses_svg(bundle.losses));
    if (!bundle.pair_rates.empty()) put("pair_rates.csv", pair_rates_csv(bundle));
    return written;
}

}  // namespace dkamc
