#include "dkamc/checkpoint.hpp"

#include <limits>

#include "binary_io.hpp"
#include "dkamc/errors.hpp"

namespace dkamc {

namespace {
constexpr char kCheckpointMagic[4] = {'D', 'K', 'W', '1'};
constexpr std::uint8_t kCheckpointVersion = 1;
}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(std::span<const NamedTensor> entries) {
    detail::ByteWriter w;
    w.bytes(std::string_view(kCheckpointMagic, 4));
    w.u8(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) throw InvalidArgument("tensor name too long");
        if (e.tensor.rank() > 255) throw InvalidArgument("tensor rank too large");
        w.u16(static_cast<std::uint16_t>(e.name.size()));
        w.bytes(e.name);
        w.u8(static_cast<std::uint8_t>(e.tensor.rank()));
        for (std::size_t d : e.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (float v : e.tensor.data()) w.f32(v);
    }
    return std::move(w.buffer());
}

std::vector<NamedTensor> deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    if (r.bytes(4, "magic") != std::string_view(kCheckpointMagic, 4)) {
        throw FormatError(FormatErrorKind::BadMagic, "not a checkpoint file (bad magic)");
    }
    const std::uint8_t version = r.u8("version");
    if (version != kCheckpointVersion) {
        throw FormatError(FormatErrorKind::UnknownVersion, "unknown checkpoint version " + std::to_string(version));
    }
    const std::size_t count = r.u32("parameter count");
    std::vector<NamedTensor> out;
    for (std::size_t p = 0; p < count; ++p) {
        const std::string what = "parameter " + std::to_string(p);
        const std::size_t len = r.u16(what);
        std::string name = r.bytes(len, what);
        const std::size_t rank = r.u8(what);
        Shape shape(rank);
        for (auto& d : shape) {
            d = r.u32(what);
            if (d == 0) throw FormatError(FormatErrorKind::Malformed, what + " has a zero extent");
        }
        const std::size_t numel = shape_numel(shape);
        r.need(numel * 4, what);
        std::vector<float> data(numel);
        for (auto& v : data) v = r.f32(what);
        out.push_back({std::move(name), Tensor<float>(std::move(shape), std::move(data))});
    }
    if (!r.at_end()) throw FormatError(FormatErrorKind::Malformed, "trailing bytes after last parameter");
    return out;
}

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> entries) {
    detail::write_file(path, serialize_checkpoint(entries));
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    try {
        return deserialize_checkpoint(bytes);
    } catch (const FormatError& e) {
        throw FormatError(e.kind(), path.string() + ": " + e.what());
    }
}

}  // namespace dkamc
