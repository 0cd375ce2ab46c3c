#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dkamc/signal.hpp"
#include "dkamc/tensor.hpp"

namespace dkamc {

inline constexpr std::size_t kAttributeCount = 6;

// Deterministic semantic description of a modulation class:
//   0 carries amplitude information
//   1 carries phase information
//   2 constant envelope
//   3 points lie on a square in-phase/quadrature grid
//   4 normalized order, log2(M) / 6
//   5 high-order flag (M >= 16)
struct AttributeVector {
    std::array<float, kAttributeCount> values{};

    bool operator==(const AttributeVector&) const = default;
};

std::array<std::string, kAttributeCount> attribute_names();

AttributeVector attribute_label(Modulation scheme);

class ClassAttributeMatrix {
public:
    // Throws DegenerateTaxonomy when two rows coincide.
    explicit ClassAttributeMatrix(std::vector<AttributeVector> rows, std::vector<std::string> class_names = {});

    std::size_t num_classes() const noexcept { return rows_.size(); }
    const AttributeVector& row(std::size_t cls) const { return rows_.at(cls); }
    const std::vector<std::string>& class_names() const noexcept { return names_; }

    // K x 6 tensor in class order.
    template <typename T>
    Tensor<T> as_tensor() const {
        Tensor<T> t({rows_.size(), kAttributeCount});
        for (std::size_t c = 0; c < rows_.size(); ++c)
            for (std::size_t a = 0; a < kAttributeCount; ++a) t.at(c, a) = static_cast<T>(rows_[c].values[a]);
        return t;
    }

    double min_pairwise_distance() const;

    // CSV with header class_name,<attribute names>.
    std::string to_csv() const;

private:
    std::vector<AttributeVector> rows_;
    std::vector<std::string> names_;
};

ClassAttributeMatrix class_attribute_matrix(std::span<const Modulation> schemes);

}  // namespace dkamc
