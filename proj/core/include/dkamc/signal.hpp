#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dkamc {

using Complex = std::complex<double>;
using Rng = std::mt19937_64;

enum class Modulation { BPSK, QPSK, PSK8, QAM16, QAM64 };

int bits_per_symbol(Modulation m);
std::size_t constellation_size(Modulation m);
// Display name: "BPSK", "QPSK", "8PSK", "16QAM", "64QAM".
std::string_view modulation_name(Modulation m);
// Accepts the display name or the enum spelling ("QAM16"), case-insensitively.
Modulation parse_modulation(std::string_view name);
std::vector<Modulation> all_modulations();
// {BPSK, QPSK, 16QAM, 64QAM}
std::vector<Modulation> default_modulations();

// Unit average power, pairwise distinct points. QAM points are indexed
// row-major over the square grid (index = q_level * side + i_level).
std::vector<Complex> constellation(Modulation m);

struct PulseShape {
    enum class Kind { Rectangular, RootRaisedCosine };
    Kind kind = Kind::Rectangular;
    double rolloff = 0.35;
    std::size_t span_symbols = 8;

    static PulseShape rectangular() { return {}; }
    static PulseShape root_raised_cosine(double rolloff) { return {Kind::RootRaisedCosine, rolloff, 8}; }
};

// Root-raised-cosine taps, span_symbols * sps + 1 long, scaled to energy sps so
// the shaped waveform has the same per-symbol energy as the rectangular pulse.
std::vector<double> rrc_taps(double rolloff, std::size_t sps, std::size_t span_symbols);

std::vector<Complex> modulate(Modulation m, std::span<const std::size_t> symbols, std::size_t samples_per_symbol,
                              const PulseShape& pulse = PulseShape::rectangular());

double mean_power(std::span<const Complex> x);

// Adds complex white Gaussian noise with total variance mean_power(clean) /
// 10^(snr_db/10), split evenly between the real and imaginary parts. A
// snr_db of +infinity returns the input unchanged.
std::vector<Complex> add_awgn(std::span<const Complex> clean, double snr_db, Rng& rng);

// 10*log10(P_clean / P_(noisy - clean)).
double measure_snr(std::span<const Complex> clean, std::span<const Complex> noisy);

}  // namespace dkamc
