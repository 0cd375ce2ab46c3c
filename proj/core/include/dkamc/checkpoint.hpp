#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dkamc/tensor.hpp"

namespace dkamc {

struct NamedTensor {
    std::string name;
    Tensor<float> tensor;

    bool operator==(const NamedTensor&) const = default;
};

// Layout (little-endian): "DKW1", u8 version=1, u32 count, then per entry
// u16 name length, name bytes, u8 rank, rank x u32 extents, f32 data.
std::vector<std::uint8_t> serialize_checkpoint(std::span<const NamedTensor> entries);
std::vector<NamedTensor> deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> entries);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

template <typename T>
std::vector<NamedTensor> snapshot_state(std::span<const StateEntry<T>> state) {
    std::vector<NamedTensor> out;
    out.reserve(state.size());
    for (const auto& e : state) out.push_back({e.name, tensor_cast<float>(*e.tensor)});
    return out;
}

// Copies checkpoint entries into the model state. Every state entry must be
// present with a matching shape and no extra entries may remain.
template <typename T>
void restore_state(std::span<const StateEntry<T>> state, std::span<const NamedTensor> entries) {
    if (entries.size() != state.size()) {
        throw ShapeError("checkpoint holds " + std::to_string(entries.size()) + " tensors, model expects " +
                         std::to_string(state.size()));
    }
    for (const auto& e : state) {
        const NamedTensor* found = nullptr;
        for (const auto& n : entries) {
            if (n.name == e.name) {
                found = &n;
                break;
            }
        }
        if (!found) throw ShapeError("checkpoint lacks tensor '" + e.name + "'");
        if (found->tensor.shape() != e.tensor->shape()) {
            throw ShapeError("checkpoint tensor '" + e.name + "' has shape " + shape_string(found->tensor.shape()) +
                             ", model expects " + shape_string(e.tensor->shape()));
        }
        *e.tensor = tensor_cast<T>(found->tensor);
    }
}

}  // namespace dkamc
