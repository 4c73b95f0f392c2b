// FFT and FIR primitives shared by the transmitter and receiver code.
#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "cvqkd/common.hpp"

namespace cvqkd {

/// In-place complex FFT of a fixed size (FFTW backed, unnormalized).
class Fft {
public:
    explicit Fft(std::size_t n);
    ~Fft();
    Fft(const Fft&) = delete;
    Fft& operator=(const Fft&) = delete;
    Fft(Fft&&) noexcept;
    Fft& operator=(Fft&&) noexcept;

    std::size_t size() const noexcept { return n_; }
    std::span<cplx> buffer() noexcept;

    void forward();
    void inverse();

private:
    struct Impl;
    std::size_t n_;
    std::unique_ptr<Impl> impl_;
};

/// Full linear convolution, length x.size() + h.size() - 1.
std::vector<cplx> fir_full(std::span<const cplx> x, std::span<const cplx> h);
std::vector<cplx> fir_full(std::span<const cplx> x, std::span<const double> h);

/// Convolution with an odd-length linear-phase filter, delay compensated:
/// out[m] = sum_j h[j] x[m + (L-1)/2 - j]. Output has the input length.
std::vector<cplx> fir_same(std::span<const cplx> x, std::span<const cplx> h);
std::vector<cplx> fir_same(std::span<const cplx> x, std::span<const double> h);

/// Kaiser-windowed sinc lowpass with unit DC gain. `passband_edge` and
/// `stopband_edge` in Hz; the length is chosen for `attenuation_db` and forced odd.
std::vector<double> kaiser_lowpass(double passband_edge, double stopband_edge,
                                   double sample_rate, double attenuation_db);

/// Shifts a real lowpass prototype to `center` Hz, phase referenced at the
/// filter center so the passband has zero phase.
std::vector<cplx> modulate_taps(std::span<const double> lowpass, double center,
                                double sample_rate);

/// Welch periodogram with a Hann window, non-overlapping segments.
/// Bin k holds the mean of |X_k|^2 / sum(w^2), so complex white noise of
/// variance s2 reads s2 in every bin. Bins are in FFT order.
std::vector<double> welch_psd(std::span<const cplx> x, std::size_t nfft);

/// Frequency of FFT bin k (FFT order) in Hz.
double bin_frequency(std::size_t k, std::size_t nfft, double sample_rate);

}  // namespace cvqkd
