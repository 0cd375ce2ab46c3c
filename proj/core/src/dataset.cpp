#include "dkamc/dataset.hpp"

#include <fstream>
#include <limits>

#include "binary_io.hpp"
#include "dkamc/errors.hpp"
#include "dkamc/parallel.hpp"

namespace dkamc {

namespace detail {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace detail

namespace {
constexpr char kDatasetMagic[4] = {'D', 'K', 'M', '1'};
constexpr std::uint8_t kDatasetVersion = 1;
}  // namespace

void ChannelConfig::validate() const {
    if (snr_grid_db.empty()) throw ConfigError("snr grid must not be empty");
    for (std::size_t k = 0; k < snr_grid_db.size(); ++k) {
        if (snr_grid_db[k] < std::numeric_limits<std::int8_t>::min() ||
            snr_grid_db[k] > std::numeric_limits<std::int8_t>::max()) {
            throw ConfigError("snr " + std::to_string(snr_grid_db[k]) + " dB does not fit the dataset format");
        }
        if (k && snr_grid_db[k] <= snr_grid_db[k - 1]) throw ConfigError("snr grid must be strictly increasing");
    }
    if (frames_per_class_per_snr == 0) throw ConfigError("frames_per_class_per_snr must be positive");
    if (samples_per_symbol == 0) throw ConfigError("samples_per_symbol must be at least 1");
    if (frame_length == 0 || frame_length > std::numeric_limits<std::uint16_t>::max())
        throw ConfigError("frame_length out of range");
    if (frame_length % samples_per_symbol != 0)
        throw ConfigError("frame_length must be divisible by samples_per_symbol");
    if (pulse.kind == PulseShape::Kind::RootRaisedCosine && (!(pulse.rolloff > 0.0) || pulse.rolloff > 1.0))
        throw ConfigError("rrc rolloff must lie in (0, 1]");
}

void Dataset::validate() const {
    if (class_names.empty() || class_names.size() > 255) throw InvalidArgument("dataset needs 1..255 classes");
    for (const auto& name : class_names) {
        if (name.size() > 255) throw InvalidArgument("class name longer than 255 bytes");
    }
    for (std::size_t f = 0; f < frames.size(); ++f) {
        const IQFrame& fr = frames[f];
        if (fr.i.size() != frame_length || fr.q.size() != frame_length)
            throw InvalidArgument("frame " + std::to_string(f) + " has the wrong length");
        if (fr.label >= class_names.size())
            throw InvalidArgument("frame " + std::to_string(f) + " has an out-of-range label");
    }
}

FrameSignals synthesize_frame(const ChannelConfig& config, Modulation scheme, int snr_db, std::uint64_t frame_index) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.rng_seed), static_cast<std::uint32_t>(config.rng_seed >> 32),
                      static_cast<std::uint32_t>(frame_index), static_cast<std::uint32_t>(frame_index >> 32)};
    Rng rng(seq);
    const std::size_t n_symbols = config.frame_length / config.samples_per_symbol;
    std::uniform_int_distribution<std::size_t> pick(0, constellation_size(scheme) - 1);
    std::vector<std::size_t> symbols(n_symbols);
    for (auto& s : symbols) s = pick(rng);
    FrameSignals sig;
    sig.clean = modulate(scheme, symbols, config.samples_per_symbol, config.pulse);
    sig.noisy = add_awgn(sig.clean, static_cast<double>(snr_db), rng);
    return sig;
}

Dataset synthesize_dataset(const ChannelConfig& config, std::span<const Modulation> schemes, unsigned workers) {
    config.validate();
    if (schemes.empty() || schemes.size() > 255) throw ConfigError("need 1..255 modulation classes");
    Dataset ds;
    ds.frame_length = config.frame_length;
    for (Modulation m : schemes) ds.class_names.emplace_back(modulation_name(m));

    const std::size_t per_cell = config.frames_per_class_per_snr;
    const std::size_t n_snr = config.snr_grid_db.size();
    ds.frames.resize(schemes.size() * n_snr * per_cell);
    parallel_for(ds.frames.size(), workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t idx = begin; idx < end; ++idx) {
            const std::size_t cls = idx / (n_snr * per_cell);
            const std::size_t snr_slot = (idx / per_cell) % n_snr;
            const int snr = config.snr_grid_db[snr_slot];
            FrameSignals sig = synthesize_frame(config, schemes[cls], snr, idx);
            IQFrame& fr = ds.frames[idx];
            fr.label = static_cast<std::uint8_t>(cls);
            fr.snr_db = snr;
            fr.i.resize(config.frame_length);
            fr.q.resize(config.frame_length);
            for (std::size_t n = 0; n < config.frame_length; ++n) {
                fr.i[n] = static_cast<float>(sig.noisy[n].real());
                fr.q[n] = static_cast<float>(sig.noisy[n].imag());
            }
        }
    });
    return ds;
}

std::vector<Modulation> dataset_schemes(const Dataset& dataset) {
    std::vector<Modulation> out;
    for (const auto& name : dataset.class_names) out.push_back(parse_modulation(name));
    return out;
}

std::vector<std::uint8_t> serialize_dataset(const Dataset& dataset) {
    dataset.validate();
    if (dataset.frames.size() > std::numeric_limits<std::uint32_t>::max())
        throw InvalidArgument("too many frames for the dataset format");
    detail::ByteWriter w;
    w.bytes(std::string_view(kDatasetMagic, 4));
    w.u8(kDatasetVersion);
    w.u8(static_cast<std::uint8_t>(dataset.class_names.size()));
    w.u16(static_cast<std::uint16_t>(dataset.frame_length));
    w.u32(static_cast<std::uint32_t>(dataset.frames.size()));
    for (const auto& name : dataset.class_names) {
        w.u8(static_cast<std::uint8_t>(name.size()));
        w.bytes(name);
    }
    for (const IQFrame& fr : dataset.frames) {
        if (fr.snr_db < -128 || fr.snr_db > 127) throw InvalidArgument("frame snr does not fit in i8");
        w.u8(fr.label);
        w.i8(static_cast<std::int8_t>(fr.snr_db));
        for (float v : fr.i) w.f32(v);
        for (float v : fr.q) w.f32(v);
    }
    return std::move(w.buffer());
}

Dataset deserialize_dataset(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    if (r.bytes(4, "magic") != std::string_view(kDatasetMagic, 4)) {
        throw FormatError(FormatErrorKind::BadMagic, "not a dataset file (bad magic)");
    }
    const std::uint8_t version = r.u8("version");
    if (version != kDatasetVersion) {
        throw FormatError(FormatErrorKind::UnknownVersion, "unknown dataset version " + std::to_string(version));
    }
    Dataset ds;
    const std::size_t k = r.u8("class count");
    ds.frame_length = r.u16("frame length");
    const std::size_t count = r.u32("frame count");
    if (k == 0 || ds.frame_length == 0) throw FormatError(FormatErrorKind::Malformed, "empty class set or frame length");
    for (std::size_t c = 0; c < k; ++c) {
        const std::string what = "class name " + std::to_string(c);
        const std::size_t len = r.u8(what);
        ds.class_names.push_back(r.bytes(len, what));
    }
    const std::size_t record = 2 + 8 * ds.frame_length;
    ds.frames.resize(count);
    for (std::size_t f = 0; f < count; ++f) {
        const std::string what = "frame " + std::to_string(f);
        r.need(record, what);
        IQFrame& fr = ds.frames[f];
        fr.label = r.u8(what);
        fr.snr_db = r.i8(what);
        if (fr.label >= k) throw FormatError(FormatErrorKind::Malformed, what + " has label out of range");
        fr.i.resize(ds.frame_length);
        fr.q.resize(ds.frame_length);
        for (auto& v : fr.i) v = r.f32(what);
        for (auto& v : fr.q) v = r.f32(what);
    }
    if (!r.at_end()) throw FormatError(FormatErrorKind::Malformed, "trailing bytes after last frame");
    return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    detail::write_file(path, serialize_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    try {
        return deserialize_dataset(bytes);
    } catch (const FormatError& e) {
        throw FormatError(e.kind(), path.string() + ": " + e.what());
    }
}

}  // namespace dkamc
