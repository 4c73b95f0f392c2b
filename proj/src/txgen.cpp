#include "cvqkd/txgen.hpp"

#include <cmath>

#include "cvqkd/filter.hpp"
#include "cvqkd/rng.hpp"

namespace cvqkd::txgen {

int TxConfig::samples_per_symbol() const {
    return static_cast<int>(std::lround(sample_rate / symbol_rate));
}

void TxConfig::validate() const {
    if (!(symbol_rate > 0.0 && sample_rate > 0.0)) {
        throw Error(Errc::invalid_argument, "symbol_rate and sample_rate must be positive");
    }
    const double ratio = sample_rate / symbol_rate;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio || std::round(ratio) < 2.0) {
        throw Error(Errc::invalid_argument,
                    "sample_rate must be an integer multiple (>= 2) of symbol_rate");
    }
    if (!(rrc_rolloff > 0.0 && rrc_rolloff <= 1.0)) {
        throw Error(Errc::invalid_argument, "rrc_rolloff must be in (0, 1]");
    }
    if (rrc_span < 4) throw Error(Errc::invalid_argument, "rrc_span must be >= 4");
    if (!(modulation_variance > 0.0)) {
        throw Error(Errc::invalid_argument, "modulation_variance must be positive");
    }
    if (!(pilot_to_signal_power_ratio > 0.0)) {
        throw Error(Errc::invalid_argument, "pilot_to_signal_power_ratio must be positive");
    }
    const double nyq = 0.5 * sample_rate;
    const double half_bw = 0.5 * signal_bandwidth();
    if (std::abs(signal_center_freq) + half_bw >= nyq || std::abs(pilot_freq) >= nyq) {
        throw Error(Errc::invalid_argument, "signal band or pilot outside the Nyquist band");
    }
    if (std::abs(pilot_freq - signal_center_freq) <= half_bw) {
        throw Error(Errc::band_overlap, "pilot lies inside the signal band");
    }
}

SymbolFrame generate_symbols(std::size_t n, double v_mod, std::uint64_t seed) {
    if (!(v_mod > 0.0)) throw Error(Errc::invalid_argument, "modulation variance must be positive");
    SymbolFrame frame;
    frame.modulation_variance = v_mod;
    frame.symbols.resize(n);
    CounterRng rng(seed, /*stream=*/1);
    for (auto& s : frame.symbols) s = rng.complex_normal(v_mod);
    return frame;
}

std::vector<double> rrc_taps(double rolloff, int span, int samples_per_symbol) {
    if (!(rolloff > 0.0 && rolloff <= 1.0)) {
        throw Error(Errc::invalid_argument, "rrc rolloff must be in (0, 1]");
    }
    if (span < 4) throw Error(Errc::invalid_argument, "rrc span must be >= 4 symbols");
    if (samples_per_symbol < 2) throw Error(Errc::invalid_argument, "need >= 2 samples per symbol");

    const std::size_t len = static_cast<std::size_t>(span) * samples_per_symbol + 1;
    const auto half = static_cast<std::ptrdiff_t>(len / 2);
    const double b = rolloff;
    const double pi = std::numbers::pi;
    const double singular_t = 1.0 / (4.0 * b);

    std::vector<double> h(len);
    for (std::ptrdiff_t i = 0; i <= half; ++i) {
        // t in symbol periods, t <= 0 on this half.
        const double t = static_cast<double>(i - half) / samples_per_symbol;
        double v;
        if (i == half) {
            v = 1.0 - b + 4.0 * b / pi;
        } else if (std::abs(std::abs(t) - singular_t) < 1e-9) {
            v = b / std::sqrt(2.0) *
                ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * b)) + (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * b)));
        } else {
            const double x = 4.0 * b * t;
            v = (std::sin(pi * t * (1.0 - b)) + x * std::cos(pi * t * (1.0 + b))) /
                (pi * t * (1.0 - x * x));
        }
        h[static_cast<std::size_t>(i)] = v;
        h[len - 1 - static_cast<std::size_t>(i)] = v;
    }
    double energy = 0.0;
    for (double v : h) energy += v * v;
    const double scale = 1.0 / std::sqrt(energy);
    for (auto& v : h) v *= scale;
    return h;
}

std::vector<cplx> shape_symbols(std::span<const cplx> symbols, std::span<const double> taps, int sps) {
    std::vector<cplx> up(symbols.size() * static_cast<std::size_t>(sps));
    for (std::size_t k = 0; k < symbols.size(); ++k) up[k * sps] = symbols[k];
    return fir_full(up, taps);
}

WaveformParts build_waveform_parts(const SymbolFrame& frame, const TxConfig& cfg) {
    cfg.validate();
    if (frame.symbols.empty()) throw Error(Errc::invalid_argument, "empty symbol frame");
    const int sps = cfg.samples_per_symbol();
    const auto taps = rrc_taps(cfg.rrc_rolloff, cfg.rrc_span, sps);

    WaveformParts parts;
    parts.sample_rate = cfg.sample_rate;
    parts.signal = shape_symbols(frame.symbols, taps, sps);
    const std::size_t n = parts.signal.size();
    parts.pilot.resize(n);

    const double signal_power = frame.modulation_variance / sps;
    const double pilot_amp = std::sqrt(cfg.pilot_to_signal_power_ratio * signal_power);
    for (std::size_t m = 0; m < n; ++m) {
        const double idx = static_cast<double>(m);
        parts.signal[m] *= std::polar(1.0, carrier_phase(cfg.signal_center_freq, idx, cfg.sample_rate));
        parts.pilot[m] = std::polar(pilot_amp, carrier_phase(cfg.pilot_freq, idx, cfg.sample_rate));
    }
    return parts;
}

DualPolWaveform build_waveform(const SymbolFrame& frame, const TxConfig& cfg) {
    auto parts = build_waveform_parts(frame, cfg);
    DualPolWaveform wf;
    wf.sample_rate = cfg.sample_rate;
    wf.x = std::move(parts.signal);
    for (std::size_t m = 0; m < wf.x.size(); ++m) wf.x[m] += parts.pilot[m];
    wf.y.assign(wf.x.size(), cplx{});
    return wf;
}

}  // namespace cvqkd::txgen
