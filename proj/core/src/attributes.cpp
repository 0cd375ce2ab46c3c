#include "dkamc/attributes.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "dkamc/errors.hpp"

namespace dkamc {

std::array<std::string, kAttributeCount> attribute_names() {
    return {"amplitude", "phase", "constant_envelope", "quadrature_grid", "normalized_order", "high_order"};
}

AttributeVector attribute_label(Modulation scheme) {
    const float order = static_cast<float>(bits_per_symbol(scheme)) / 6.0f;
    switch (scheme) {
        case Modulation::BPSK: return {{0, 1, 1, 0, order, 0}};
        case Modulation::QPSK: return {{0, 1, 1, 1, order, 0}};
        case Modulation::PSK8: return {{0, 1, 1, 0, order, 0}};
        case Modulation::QAM16: return {{1, 1, 0, 1, order, 1}};
        case Modulation::QAM64: return {{1, 1, 0, 1, order, 1}};
    }
    throw InvalidArgument("unknown modulation");
}

ClassAttributeMatrix::ClassAttributeMatrix(std::vector<AttributeVector> rows, std::vector<std::string> class_names)
    : rows_(std::move(rows)), names_(std::move(class_names)) {
    if (rows_.empty()) throw InvalidArgument("class attribute matrix needs at least one class");
    if (names_.empty()) {
        for (std::size_t c = 0; c < rows_.size(); ++c) names_.push_back("class" + std::to_string(c));
    }
    if (names_.size() != rows_.size()) throw InvalidArgument("class name count does not match attribute rows");
    for (const auto& r : rows_) {
        for (float v : r.values) {
            if (!(v >= 0.0f && v <= 1.0f)) throw InvalidArgument("attribute values must lie in [0, 1]");
        }
    }
    for (std::size_t a = 0; a < rows_.size(); ++a) {
        for (std::size_t b = a + 1; b < rows_.size(); ++b) {
            if (rows_[a] == rows_[b]) {
                throw DegenerateTaxonomy("classes '" + names_[a] + "' and '" + names_[b] +
                                         "' have identical attribute rows");
            }
        }
    }
}

double ClassAttributeMatrix::min_pairwise_distance() const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < rows_.size(); ++a) {
        for (std::size_t b = a + 1; b < rows_.size(); ++b) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < kAttributeCount; ++k) {
                const double d = rows_[a].values[k] - rows_[b].values[k];
                d2 += d * d;
            }
            best = std::min(best, std::sqrt(d2));
        }
    }
    return best;
}

std::string ClassAttributeMatrix::to_csv() const {
    std::string out = "class_name";
    for (const auto& n : attribute_names()) out += "," + n;
    out += "\n";
    char buf[32];
    for (std::size_t c = 0; c < rows_.size(); ++c) {
        out += names_[c];
        for (float v : rows_[c].values) {
            std::snprintf(buf, sizeof buf, ",%.6g", static_cast<double>(v));
            out += buf;
        }
        out += "\n";
    }
    return out;
}

ClassAttributeMatrix class_attribute_matrix(std::span<const Modulation> schemes) {
    if (schemes.empty()) throw InvalidArgument("class_attribute_matrix: empty scheme list");
    std::vector<AttributeVector> rows;
    std::vector<std::string> names;
    for (Modulation m : schemes) {
        rows.push_back(attribute_label(m));
        names.emplace_back(modulation_name(m));
    }
    return ClassAttributeMatrix(std::move(rows), std::move(names));
}

}  // namespace dkamc
