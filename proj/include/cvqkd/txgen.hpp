// Transmitter: Gaussian-modulated symbols, RRC pulse shaping and the
// frequency-multiplexed pilot tone, launched in the x polarization.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cvqkd/common.hpp"

namespace cvqkd::txgen {

/// Quantum symbols in shot-noise units. Each quadrature has variance v_mod / 2.
struct SymbolFrame {
    std::vector<cplx> symbols;
    double modulation_variance = 0.0;
};

struct TxConfig {
    double symbol_rate = 20e6;
    double sample_rate = 1e9;
    double rrc_rolloff = 0.2;
    int rrc_span = 64;  // symbols
    double pilot_freq = 180e6;
    double signal_center_freq = 100e6;
    double pilot_to_signal_power_ratio = 100.0;  // linear, 20 dB
    double modulation_variance = 1.65;
    std::uint64_t seed = 0;

    int samples_per_symbol() const;
    /// Occupied signal bandwidth symbol_rate * (1 + rolloff).
    double signal_bandwidth() const { return symbol_rate * (1.0 + rrc_rolloff); }
    /// Throws Errc::invalid_argument / Errc::band_overlap.
    void validate() const;
};

SymbolFrame generate_symbols(std::size_t n, double v_mod, std::uint64_t seed);

/// Unit-energy root-raised-cosine taps, length span * sps + 1, exactly symmetric.
std::vector<double> rrc_taps(double rolloff, int span, int samples_per_symbol);

/// The two additive parts of the x-polarization waveform.
struct WaveformParts {
    std::vector<cplx> signal;  // shaped symbols upconverted to signal_center_freq
    std::vector<cplx> pilot;
    double sample_rate = 0.0;
};

/// Length is n * sps + L - 1 (L = tap count); symbol k peaks at sample
/// k * sps + (L - 1) / 2. Pilot amplitude is set from the expected shaped-signal
/// power v_mod / sps, so the ratio is exact in expectation.
WaveformParts build_waveform_parts(const SymbolFrame& frame, const TxConfig& cfg);

/// x = signal + pilot, y = 0.
DualPolWaveform build_waveform(const SymbolFrame& frame, const TxConfig& cfg);

/// Upsample by sps and filter with `taps` (full convolution).
std::vector<cplx> shape_symbols(std::span<const cplx> symbols, std::span<const double> taps, int sps);

}  // namespace cvqkd::txgen
