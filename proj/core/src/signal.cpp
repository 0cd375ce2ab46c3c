#include "dkamc/signal.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

#include "dkamc/errors.hpp"

namespace dkamc {

int bits_per_symbol(Modulation m) {
    switch (m) {
        case Modulation::BPSK: return 1;
        case Modulation::QPSK: return 2;
        case Modulation::PSK8: return 3;
        case Modulation::QAM16: return 4;
        case Modulation::QAM64: return 6;
    }
    throw InvalidArgument("unknown modulation");
}

std::size_t constellation_size(Modulation m) { return std::size_t{1} << bits_per_symbol(m); }

std::string_view modulation_name(Modulation m) {
    switch (m) {
        case Modulation::BPSK: return "BPSK";
        case Modulation::QPSK: return "QPSK";
        case Modulation::PSK8: return "8PSK";
        case Modulation::QAM16: return "16QAM";
        case Modulation::QAM64: return "64QAM";
    }
    throw InvalidArgument("unknown modulation");
}

Modulation parse_modulation(std::string_view name) {
    std::string up(name);
    std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
    if (up == "BPSK") return Modulation::BPSK;
    if (up == "QPSK") return Modulation::QPSK;
    if (up == "8PSK" || up == "PSK8") return Modulation::PSK8;
    if (up == "16QAM" || up == "QAM16") return Modulation::QAM16;
    if (up == "64QAM" || up == "QAM64") return Modulation::QAM64;
    throw InvalidArgument("unknown modulation '" + std::string(name) + "'");
}

std::vector<Modulation> all_modulations() {
    return {Modulation::BPSK, Modulation::QPSK, Modulation::PSK8, Modulation::QAM16, Modulation::QAM64};
}

std::vector<Modulation> default_modulations() {
    return {Modulation::BPSK, Modulation::QPSK, Modulation::QAM16, Modulation::QAM64};
}

namespace {

std::vector<Complex> square_qam(std::size_t order) {
    const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(order))));
    // mean |s|^2 of the odd-integer grid is 2(M-1)/3
    const double scale = 1.0 / std::sqrt(2.0 * static_cast<double>(order - 1) / 3.0);
    std::vector<Complex> pts;
    pts.reserve(order);
    for (std::size_t row = 0; row < side; ++row) {
        const double q = 2.0 * static_cast<double>(row) - static_cast<double>(side - 1);
        for (std::size_t col = 0; col < side; ++col) {
            const double i = 2.0 * static_cast<double>(col) - static_cast<double>(side - 1);
            pts.emplace_back(i * scale, q * scale);
        }
    }
    return pts;
}

}  // namespace

std::vector<Complex> constellation(Modulation m) {
    switch (m) {
        case Modulation::BPSK: return {{1.0, 0.0}, {-1.0, 0.0}};
        case Modulation::QPSK: {
            const double a = 1.0 / std::numbers::sqrt2;
            return {{a, a}, {-a, a}, {-a, -a}, {a, -a}};
        }
        case Modulation::PSK8: {
            std::vector<Complex> pts;
            for (int k = 0; k < 8; ++k) pts.push_back(std::polar(1.0, 2.0 * std::numbers::pi * k / 8.0));
            return pts;
        }
        case Modulation::QAM16: return square_qam(16);
        case Modulation::QAM64: return square_qam(64);
    }
    throw InvalidArgument("unknown modulation");
}

std::vector<double> rrc_taps(double rolloff, std::size_t sps, std::size_t span_symbols) {
    if (!(rolloff > 0.0) || rolloff > 1.0) throw InvalidArgument("rrc rolloff must lie in (0, 1]");
    if (sps == 0 || span_symbols == 0) throw InvalidArgument("rrc needs positive sps and span");
    const std::size_t n = span_symbols * sps + 1;
    const double half = static_cast<double>(n - 1) / 2.0;
    const double b = rolloff;
    const double pi = std::numbers::pi;
    std::vector<double> h(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = (static_cast<double>(k) - half) / static_cast<double>(sps);
        double v;
        if (std::abs(t) < 1e-12) {
            v = 1.0 - b + 4.0 * b / pi;
        } else if (std::abs(std::abs(t) - 1.0 / (4.0 * b)) < 1e-9) {
            v = b / std::numbers::sqrt2 *
                ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * b)) + (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * b)));
        } else {
            const double num = std::sin(pi * t * (1.0 - b)) + 4.0 * b * t * std::cos(pi * t * (1.0 + b));
            const double den = pi * t * (1.0 - (4.0 * b * t) * (4.0 * b * t));
            v = num / den;
        }
        h[k] = v;
    }
    double energy = 0.0;
    for (double v : h) energy += v * v;
    const double g = std::sqrt(static_cast<double>(sps) / energy);
    for (double& v : h) v *= g;
    return h;
}

std::vector<Complex> modulate(Modulation m, std::span<const std::size_t> symbols, std::size_t samples_per_symbol,
                              const PulseShape& pulse) {
    if (samples_per_symbol == 0) throw InvalidArgument("samples_per_symbol must be positive");
    const std::vector<Complex> points = constellation(m);
    for (std::size_t idx : symbols) {
        if (idx >= points.size()) {
            throw InvalidSymbol("symbol index " + std::to_string(idx) + " out of range for " +
                                std::string(modulation_name(m)));
        }
    }
    const std::size_t len = symbols.size() * samples_per_symbol;
    std::vector<Complex> out(len);
    if (pulse.kind == PulseShape::Kind::Rectangular) {
        for (std::size_t s = 0; s < symbols.size(); ++s) {
            std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(s * samples_per_symbol), samples_per_symbol,
                        points[symbols[s]]);
        }
        return out;
    }
    // Impulse train through the RRC filter, delay-compensated so sample 0 is
    // the centre of the first symbol's pulse.
    const std::vector<double> h = rrc_taps(pulse.rolloff, samples_per_symbol, pulse.span_symbols);
    const auto delay = static_cast<std::ptrdiff_t>(h.size() / 2);
    for (std::size_t s = 0; s < symbols.size(); ++s) {
        const Complex p = points[symbols[s]];
        const auto pos = static_cast<std::ptrdiff_t>(s * samples_per_symbol);
        for (std::size_t k = 0; k < h.size(); ++k) {
            const std::ptrdiff_t n = pos + static_cast<std::ptrdiff_t>(k) - delay;
            if (n >= 0 && n < static_cast<std::ptrdiff_t>(len)) out[static_cast<std::size_t>(n)] += p * h[k];
        }
    }
    return out;
}

double mean_power(std::span<const Complex> x) {
    if (x.empty()) return 0.0;
    double p = 0.0;
    for (const Complex& v : x) p += std::norm(v);
    return p / static_cast<double>(x.size());
}

std::vector<Complex> add_awgn(std::span<const Complex> clean, double snr_db, Rng& rng) {
    if (clean.empty()) throw InvalidArgument("add_awgn: empty input");
    const double power = mean_power(clean);
    if (!(power > 0.0)) throw ZeroPowerError("add_awgn: input has zero power");
    std::vector<Complex> out(clean.begin(), clean.end());
    if (std::isinf(snr_db) && snr_db > 0) return out;
    const double variance = power / std::pow(10.0, snr_db / 10.0);
    std::normal_distribution<double> noise(0.0, std::sqrt(variance / 2.0));
    for (Complex& v : out) {
        const double re = noise(rng);
        const double im = noise(rng);
        v += Complex(re, im);
    }
    return out;
}

double measure_snr(std::span<const Complex> clean, std::span<const Complex> noisy) {
    if (clean.size() != noisy.size()) throw InvalidArgument("measure_snr: length mismatch");
    if (clean.empty()) throw InvalidArgument("measure_snr: empty input");
    double noise = 0.0;
    for (std::size_t n = 0; n < clean.size(); ++n) noise += std::norm(noisy[n] - clean[n]);
    if (noise == 0.0) throw InfiniteSnrError("measure_snr: noisy equals clean, SNR is infinite");
    return 10.0 * std::log10(mean_power(clean) / (noise / static_cast<double>(clean.size())));
}

}  // namespace dkamc
