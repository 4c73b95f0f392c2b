// Small test-side utilities.
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "cvqkd/common.hpp"
#include "cvqkd/rng.hpp"

namespace testutil {

using cvqkd::cplx;

inline double evm(std::span<const cplx> rx, std::span<const cplx> tx) {
    double err = 0.0;
    double ref = 0.0;
    for (std::size_t i = 0; i < tx.size(); ++i) {
        err += std::norm(rx[i] - tx[i]);
        ref += std::norm(tx[i]);
    }
    return std::sqrt(err / ref);
}

inline double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double stddev(std::span<const double> v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Direct DFT power at a single frequency, |sum x_k e^{-j 2 pi f k / fs}|^2 / n^2.
inline double tone_power(std::span<const cplx> x, double freq, double fs) {
    cplx acc{};
    for (std::size_t k = 0; k < x.size(); ++k) {
        acc += x[k] * std::polar(1.0, -cvqkd::carrier_phase(freq, static_cast<double>(k), fs));
    }
    const double n = static_cast<double>(x.size());
    return std::norm(acc) / (n * n);
}

/// Pilot-band record x = a s, y = -b s with s = sqrt(P) exp(j(2 pi f k / fs + phi_k)),
/// plus complex white noise of variance r per real quadrature.
inline cvqkd::DualPolWaveform pilot_tone(std::size_t n, double a, double b, std::span<const double> phi,
                                         double p, double r, double f, double fs, std::uint64_t seed) {
    cvqkd::DualPolWaveform wf(n, fs);
    cvqkd::CounterRng rng(seed);
    const double amp = std::sqrt(p);
    for (std::size_t k = 0; k < n; ++k) {
        const cplx s = std::polar(amp, cvqkd::carrier_phase(f, static_cast<double>(k), fs) + phi[k]);
        wf.x[k] = a * s + rng.complex_normal(2.0 * r);
        wf.y[k] = -b * s + rng.complex_normal(2.0 * r);
    }
    return wf;
}

/// Wiener phase with increment variance q per sample, starting at phi0.
inline std::vector<double> wiener_phase(std::size_t n, double q, double phi0, std::uint64_t seed) {
    std::vector<double> phi(n);
    cvqkd::CounterRng rng(seed, 99);
    double v = phi0;
    for (std::size_t k = 0; k < n; ++k) {
        if (k > 0) v += std::sqrt(q) * rng.normal();
        phi[k] = v;
    }
    return phi;
}

inline double wrap(double x) { return std::remainder(x, 2.0 * std::numbers::pi); }

}  // namespace testutil
