#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dkamc/signal.hpp"

namespace dkamc {

// One received frame as the 2xN real matrix: row 0 is the in-phase part,
// row 1 the quadrature part.
struct IQFrame {
    std::vector<float> i;
    std::vector<float> q;
    std::uint8_t label = 0;
    int snr_db = 0;

    bool operator==(const IQFrame&) const = default;
};

struct ChannelConfig {
    std::vector<int> snr_grid_db;
    std::size_t frames_per_class_per_snr = 1;
    std::size_t samples_per_symbol = 8;
    PulseShape pulse = PulseShape::rectangular();
    std::uint64_t rng_seed = 0;
    std::size_t frame_length = 128;

    // Throws ConfigError on a violated invariant.
    void validate() const;
};

struct Dataset {
    std::vector<IQFrame> frames;
    std::vector<std::string> class_names;
    std::size_t frame_length = 128;

    std::size_t num_classes() const noexcept { return class_names.size(); }
    void validate() const;

    bool operator==(const Dataset&) const = default;
};

struct FrameSignals {
    std::vector<Complex> clean;
    std::vector<Complex> noisy;
};

// Builds frame number `frame_index` of a dataset. Its generator is seeded from
// (rng_seed, frame_index) alone, so frames can be produced in any order.
FrameSignals synthesize_frame(const ChannelConfig& config, Modulation scheme, int snr_db, std::uint64_t frame_index);

// Frames are ordered class-major, then SNR, then repetition.
Dataset synthesize_dataset(const ChannelConfig& config, std::span<const Modulation> schemes, unsigned workers = 1);

// Maps a dataset's class names back to modulation schemes.
std::vector<Modulation> dataset_schemes(const Dataset& dataset);

// Binary layout (little-endian, unpadded): "DKM1", u8 version=1, u8 K,
// u16 N, u32 frame_count, K x (u8 len, name bytes), then per frame
// u8 label, i8 snr_db, N x f32 I, N x f32 Q.
std::vector<std::uint8_t> serialize_dataset(const Dataset& dataset);
Dataset deserialize_dataset(std::span<const std::uint8_t> bytes);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace dkamc
