#include "cvqkd/filter.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>

namespace cvqkd {

namespace {

// FFTW's planner is not reentrant.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

constexpr std::size_t kDirectTapLimit = 48;

}  // namespace

struct Fft::Impl {
    fftw_complex* data = nullptr;
    fftw_plan fwd = nullptr;
    fftw_plan inv = nullptr;

    ~Impl() {
        std::lock_guard lock(planner_mutex());
        if (fwd) fftw_destroy_plan(fwd);
        if (inv) fftw_destroy_plan(inv);
        if (data) fftw_free(data);
    }
};

Fft::Fft(std::size_t n) : n_(n), impl_(std::make_unique<Impl>()) {
    if (n == 0) throw Error(Errc::invalid_argument, "FFT size must be positive");
    std::lock_guard lock(planner_mutex());
    impl_->data = fftw_alloc_complex(n);
    const int ni = static_cast<int>(n);
    impl_->fwd = fftw_plan_dft_1d(ni, impl_->data, impl_->data, FFTW_FORWARD, FFTW_ESTIMATE);
    impl_->inv = fftw_plan_dft_1d(ni, impl_->data, impl_->data, FFTW_BACKWARD, FFTW_ESTIMATE);
}

Fft::~Fft() = default;
Fft::Fft(Fft&&) noexcept = default;
Fft& Fft::operator=(Fft&&) noexcept = default;

std::span<cplx> Fft::buffer() noexcept {
    return {reinterpret_cast<cplx*>(impl_->data), n_};
}

void Fft::forward() { fftw_execute(impl_->fwd); }
void Fft::inverse() { fftw_execute(impl_->inv); }

std::vector<cplx> fir_full(std::span<const cplx> x, std::span<const cplx> h) {
    const std::size_t n = x.size();
    const std::size_t taps = h.size();
    if (n == 0 || taps == 0) return {};
    const std::size_t out_len = n + taps - 1;
    std::vector<cplx> out(out_len);

    if (taps <= kDirectTapLimit) {
        for (std::size_t m = 0; m < out_len; ++m) {
            const std::size_t j_lo = m >= n ? m - n + 1 : 0;
            const std::size_t j_hi = std::min(taps - 1, m);
            cplx acc{};
            for (std::size_t j = j_lo; j <= j_hi; ++j) acc += h[j] * x[m - j];
            out[m] = acc;
        }
        return out;
    }

    // Overlap-save.
    const std::size_t nfft = std::max<std::size_t>(next_pow2(4 * taps), 1u << 14);
    const std::size_t step = nfft - taps + 1;
    Fft kernel(nfft);
    auto kb = kernel.buffer();
    std::fill(kb.begin(), kb.end(), cplx{});
    std::copy(h.begin(), h.end(), kb.begin());
    kernel.forward();
    const double scale = 1.0 / static_cast<double>(nfft);
    for (auto& v : kb) v *= scale;

    Fft work(nfft);
    auto wb = work.buffer();
    for (std::size_t start = 0; start < out_len; start += step) {
        // Buffer sample i holds x[start + i - (taps - 1)].
        for (std::size_t i = 0; i < nfft; ++i) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(start + i) -
                                       static_cast<std::ptrdiff_t>(taps - 1);
            wb[i] = (src >= 0 && static_cast<std::size_t>(src) < n) ? x[src] : cplx{};
        }
        work.forward();
        for (std::size_t i = 0; i < nfft; ++i) wb[i] *= kb[i];
        work.inverse();
        const std::size_t count = std::min(step, out_len - start);
        std::copy_n(wb.begin() + (taps - 1), count, out.begin() + start);
    }
    return out;
}

std::vector<cplx> fir_full(std::span<const cplx> x, std::span<const double> h) {
    std::vector<cplx> hc(h.begin(), h.end());
    return fir_full(x, std::span<const cplx>(hc));
}

std::vector<cplx> fir_same(std::span<const cplx> x, std::span<const cplx> h) {
    if (h.size() % 2 == 0) throw Error(Errc::invalid_argument, "fir_same needs an odd tap count");
    const std::size_t delay = (h.size() - 1) / 2;
    auto full = fir_full(x, h);
    if (full.empty()) return {};
    return {full.begin() + static_cast<std::ptrdiff_t>(delay),
            full.begin() + static_cast<std::ptrdiff_t>(delay + x.size())};
}

std::vector<cplx> fir_same(std::span<const cplx> x, std::span<const double> h) {
    std::vector<cplx> hc(h.begin(), h.end());
    return fir_same(x, std::span<const cplx>(hc));
}

std::vector<double> kaiser_lowpass(double passband_edge, double stopband_edge,
                                   double sample_rate, double attenuation_db) {
    if (!(passband_edge > 0.0 && stopband_edge > passband_edge &&
          stopband_edge < 0.5 * sample_rate)) {
        throw Error(Errc::invalid_argument, "kaiser_lowpass: need 0 < pass < stop < fs/2");
    }
    const double a = attenuation_db;
    const double beta = a > 50.0   ? 0.1102 * (a - 8.7)
                        : a >= 21.0 ? 0.5842 * std::pow(a - 21.0, 0.4) + 0.07886 * (a - 21.0)
                                    : 0.0;
    const double dw = two_pi * (stopband_edge - passband_edge) / sample_rate;
    auto len = static_cast<std::size_t>(std::ceil((a - 7.95) / (2.285 * dw))) + 1;
    if (len % 2 == 0) ++len;
    const double fc = 0.5 * (passband_edge + stopband_edge) / sample_rate;  // cycles/sample
    const double mid = 0.5 * static_cast<double>(len - 1);
    const double i0_beta = std::cyl_bessel_i(0.0, beta);

    std::vector<double> taps(len);
    double sum = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
        const double t = static_cast<double>(i) - mid;
        const double sinc = t == 0.0 ? 2.0 * fc : std::sin(two_pi * fc * t) / (std::numbers::pi * t);
        const double r = t / mid;
        const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
        taps[i] = sinc * w;
        sum += taps[i];
    }
    for (auto& v : taps) v /= sum;
    // Exact symmetry.
    for (std::size_t i = 0; i < len / 2; ++i) taps[len - 1 - i] = taps[i];
    return taps;
}

std::vector<cplx> modulate_taps(std::span<const double> lowpass, double center,
                                double sample_rate) {
    const double mid = 0.5 * static_cast<double>(lowpass.size() - 1);
    std::vector<cplx> out(lowpass.size());
    for (std::size_t i = 0; i < lowpass.size(); ++i) {
        const double ph = two_pi * center * (static_cast<double>(i) - mid) / sample_rate;
        out[i] = lowpass[i] * cplx(std::cos(ph), std::sin(ph));
    }
    return out;
}

std::vector<double> welch_psd(std::span<const cplx> x, std::size_t nfft) {
    if (nfft == 0 || x.size() < nfft) {
        throw Error(Errc::stream_too_short, "welch_psd: record shorter than one segment");
    }
    std::vector<double> window(nfft);
    double wss = 0.0;
    for (std::size_t i = 0; i < nfft; ++i) {
        window[i] = 0.5 - 0.5 * std::cos(two_pi * static_cast<double>(i) / static_cast<double>(nfft));
        wss += window[i] * window[i];
    }
    Fft fft(nfft);
    auto buf = fft.buffer();
    std::vector<double> psd(nfft, 0.0);
    const std::size_t segments = x.size() / nfft;
    for (std::size_t s = 0; s < segments; ++s) {
        for (std::size_t i = 0; i < nfft; ++i) buf[i] = x[s * nfft + i] * window[i];
        fft.forward();
        for (std::size_t i = 0; i < nfft; ++i) psd[i] += std::norm(buf[i]);
    }
    const double norm = 1.0 / (wss * static_cast<double>(segments));
    for (auto& v : psd) v *= norm;
    return psd;
}

double bin_frequency(std::size_t k, std::size_t nfft, double sample_rate) {
    const auto kk = static_cast<double>(k);
    const auto nn = static_cast<double>(nfft);
    return (k < (nfft + 1) / 2 ? kk : kk - nn) * sample_rate / nn;
}

}  // namespace cvqkd
