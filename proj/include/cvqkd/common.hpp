// Shared value types and the error type used across the library.
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvqkd {

using cplx = std::complex<double>;

enum class Errc {
    invalid_argument,
    length_mismatch,
    band_overlap,
    non_positive_definite,
    singular_innovation,
    degenerate_estimate,
    unstable_step_size,
    singular_matrix,
    pilot_not_found,
    invalid_calibration,
    zero_power,
    unphysical_covariance,
    invalid_estimate,
    stream_too_short,
    config,
    io,
};

const char* to_string(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

/// Two synchronized complex sample streams (x and y polarization).
struct DualPolWaveform {
    std::vector<cplx> x;
    std::vector<cplx> y;
    double sample_rate = 0.0;

    DualPolWaveform() = default;
    DualPolWaveform(std::size_t n, double fs) : x(n), y(n), sample_rate(fs) {}

    std::size_t size() const noexcept { return x.size(); }
    bool empty() const noexcept { return x.empty(); }
};

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Phase 2*pi*freq*index/fs reduced to [0, 2*pi). The product freq*index is
/// exact for integer frequencies up to 2^53, which keeps long records precise.
inline double carrier_phase(double freq, double index, double sample_rate) {
    const double cycles = std::fmod(freq * index, sample_rate) / sample_rate;
    return two_pi * (cycles < 0.0 ? cycles + 1.0 : cycles);
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

/// Mean of |z|^2.
double mean_power(std::span<const cplx> z);

/// Per-quadrature sample variance (mean over Re and Im, means removed).
double quadrature_variance(std::span<const cplx> z);

/// Binary (re, im) little-endian float64 dump: x block followed by y block.
void write_waveform_binary(const std::string& path, const DualPolWaveform& wf);
DualPolWaveform read_waveform_binary(const std::string& path, double sample_rate);

}  // namespace cvqkd
