#include "cvqkd/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "cvqkd/csv.hpp"
#include "cvqkd/filter.hpp"

namespace cvqkd::dsp {

namespace {

double pooled_quadrature_variance(std::span<const cplx> a, std::span<const cplx> b) {
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    return (quadrature_variance(a) * na + quadrature_variance(b) * nb) / (na + nb);
}

}  // namespace

CalibrationRecord calibrate_snu(std::span<const cplx> shot_run, std::span<const cplx> elec_run) {
    if (shot_run.size() < 2 || elec_run.size() < 2) {
        throw Error(Errc::invalid_calibration, "calibration runs must have >= 2 samples");
    }
    CalibrationRecord rec;
    rec.shot_variance_raw = quadrature_variance(shot_run);
    rec.electronic_variance_raw = quadrature_variance(elec_run);
    if (!(rec.shot_variance_raw > rec.electronic_variance_raw) || rec.electronic_variance_raw < 0.0) {
        throw Error(Errc::invalid_calibration, "electronic variance must be below shot variance");
    }
    rec.snu_scale = 1.0 / (rec.shot_variance_raw - rec.electronic_variance_raw);
    return rec;
}

CalibrationRecord calibrate_snu(const DualPolWaveform& shot_run, const DualPolWaveform& elec_run) {
    if (shot_run.size() < 2 || elec_run.size() < 2) {
        throw Error(Errc::invalid_calibration, "calibration runs must have >= 2 samples");
    }
    CalibrationRecord rec;
    rec.shot_variance_raw = pooled_quadrature_variance(shot_run.x, shot_run.y);
    rec.electronic_variance_raw = pooled_quadrature_variance(elec_run.x, elec_run.y);
    if (!(rec.shot_variance_raw > rec.electronic_variance_raw) || rec.electronic_variance_raw < 0.0) {
        throw Error(Errc::invalid_calibration, "electronic variance must be below shot variance");
    }
    rec.snu_scale = 1.0 / (rec.shot_variance_raw - rec.electronic_variance_raw);
    return rec;
}

double estimate_pilot_frequency(const DualPolWaveform& wf, double expected_pilot, double search_bw,
                                std::size_t nfft) {
    if (wf.empty() || nfft < 8) throw Error(Errc::invalid_argument, "empty record or tiny FFT");
    if (!(search_bw > 0.0)) throw Error(Errc::invalid_argument, "search_bw must be positive");
    const double fs = wf.sample_rate;
    const std::size_t n = std::min(nfft, wf.size());

    std::vector<double> window(n);
    for (std::size_t i = 0; i < n; ++i) {
        window[i] = 0.5 - 0.5 * std::cos(two_pi * static_cast<double>(i) / static_cast<double>(n));
    }
    Fft fft(nfft);
    auto buf = fft.buffer();
    std::vector<double> psd(nfft, 0.0);
    for (const auto* pol : {&wf.x, &wf.y}) {
        std::fill(buf.begin(), buf.end(), cplx{});
        for (std::size_t i = 0; i < n; ++i) buf[i] = (*pol)[i] * window[i];
        fft.forward();
        for (std::size_t i = 0; i < nfft; ++i) psd[i] += std::norm(buf[i]);
    }

    const double df = fs / static_cast<double>(nfft);
    std::size_t best = nfft;
    double best_val = -1.0;
    for (std::size_t k = 0; k < nfft; ++k) {
        if (std::abs(bin_frequency(k, nfft, fs) - expected_pilot) > search_bw) continue;
        if (psd[k] > best_val) {
            best_val = psd[k];
            best = k;
        }
    }
    if (best == nfft) throw Error(Errc::pilot_not_found, "search window contains no FFT bin");

    std::vector<double> sorted = psd;
    auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
    std::nth_element(sorted.begin(), mid, sorted.end());
    if (!(best_val > *mid * 10.0) || best_val <= 0.0) {
        throw Error(Errc::pilot_not_found, "no spectral peak 10 dB above the noise floor");
    }

    const double lm = std::log(std::max(psd[(best + nfft - 1) % nfft], 1e-300));
    const double l0 = std::log(best_val);
    const double lp = std::log(std::max(psd[(best + 1) % nfft], 1e-300));
    const double denom = lm - 2.0 * l0 + lp;
    double delta = denom < 0.0 ? 0.5 * (lm - lp) / denom : 0.0;
    delta = std::clamp(delta, -0.5, 0.5);
    return bin_frequency(best, nfft, fs) + delta * df;
}

double estimate_frequency_offset(const DualPolWaveform& wf, double expected_pilot,
                                 double search_bw, std::size_t nfft) {
    return estimate_pilot_frequency(wf, expected_pilot, search_bw, nfft) - expected_pilot;
}

double BandPlan::guard() const {
    return std::abs(pilot_freq - signal_center_freq) - 0.5 * signal_bandwidth;
}

namespace {

void validate_plan(const BandPlan& plan) {
    if (!(plan.sample_rate > 0.0 && plan.signal_bandwidth > 0.0 && plan.pilot_half_width > 0.0)) {
        throw Error(Errc::invalid_argument, "band plan needs positive rates and widths");
    }
    if (plan.guard() <= 2.0 * plan.pilot_half_width) {
        throw Error(Errc::band_overlap, "pilot passband overlaps the signal band");
    }
    const double nyq = 0.5 * plan.sample_rate;
    if (std::abs(plan.signal_center()) + 0.5 * plan.signal_bandwidth >= nyq ||
        std::abs(plan.pilot_center()) + plan.pilot_half_width >= nyq) {
        throw Error(Errc::band_overlap, "bands exceed the Nyquist interval after offset correction");
    }
}

std::vector<cplx> downconvert(std::span<const cplx> x, double freq, double fs) {
    std::vector<cplx> out(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        out[k] = x[k] * std::polar(1.0, -carrier_phase(freq, static_cast<double>(k), fs));
    }
    return out;
}

}  // namespace

Bands isolate_bands(const DualPolWaveform& wf, const BandPlan& plan) {
    validate_plan(plan);
    const double fs = plan.sample_rate;
    const double guard = plan.guard();

    // Pilot stopband halfway into the guard; the quantum stopband edge stops
    // short of the pilot passband.
    const double pilot_stop = std::max(0.5 * guard, 1.5 * plan.pilot_half_width);
    const double q_pass = 0.5 * plan.signal_bandwidth;
    const double q_stop = q_pass + std::max(guard - pilot_stop, 0.25 * (guard - plan.pilot_half_width));

    Bands out;
    out.pilot_lowpass = kaiser_lowpass(plan.pilot_half_width, pilot_stop, fs, plan.stopband_atten_db);
    const auto pilot_bp = modulate_taps(out.pilot_lowpass, plan.pilot_center(), fs);
    const auto q_lp = kaiser_lowpass(q_pass, q_stop, fs, plan.stopband_atten_db);

    out.pilot = DualPolWaveform(0, fs);
    out.quantum = DualPolWaveform(0, fs);
    out.pilot.x = fir_same(wf.x, pilot_bp);
    out.pilot.y = fir_same(wf.y, pilot_bp);
    out.quantum.x = fir_same(downconvert(wf.x, plan.signal_center(), fs), q_lp);
    out.quantum.y = fir_same(downconvert(wf.y, plan.signal_center(), fs), q_lp);
    return out;
}

double noise_floor_per_quadrature(const DualPolWaveform& wf, const BandPlan& plan, std::size_t nfft) {
    const double fs = plan.sample_rate;
    const auto px = welch_psd(wf.x, nfft);
    const auto py = welch_psd(wf.y, nfft);
    const double sig_guard = plan.signal_bandwidth;           // half band + half band margin
    const double pilot_guard = std::max(0.01 * fs, 2.0 * plan.pilot_half_width);
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < nfft; ++k) {
        const double f = bin_frequency(k, nfft, fs);
        if (std::abs(f - plan.signal_center()) <= sig_guard) continue;
        if (std::abs(f - plan.pilot_center()) <= pilot_guard) continue;
        acc += px[k] + py[k];
        count += 2;
    }
    if (count == 0) throw Error(Errc::invalid_argument, "no noise-only bins in the spectrum");
    return 0.5 * acc / static_cast<double>(count);
}

double pilot_power(const DualPolWaveform& pilot_band, std::span<const double> pilot_lowpass,
                   double noise_per_quadrature) {
    const double total = mean_power(pilot_band.x) + mean_power(pilot_band.y);
    double h2 = 0.0;
    for (double v : pilot_lowpass) h2 += v * v;
    const double noise = 4.0 * noise_per_quadrature * h2;
    const double p = total - noise;
    if (!(p > 0.0)) throw Error(Errc::pilot_not_found, "pilot power does not exceed the noise");
    return p;
}

std::vector<cplx> matched_filter_downsample(std::span<const cplx> x, std::span<const double> taps,
                                            int sps, std::size_t timing_offset) {
    if (sps < 1) throw Error(Errc::invalid_argument, "sps must be >= 1");
    if (x.size() < taps.size()) {
        throw Error(Errc::stream_too_short, "stream shorter than the matched filter");
    }
    const auto full = fir_full(x, taps);
    const std::size_t n = x.size();
    if (timing_offset > n) return {};
    const std::size_t count = (n - timing_offset) / static_cast<std::size_t>(sps);
    std::vector<cplx> out(count);
    for (std::size_t m = 0; m < count; ++m) out[m] = full[timing_offset + m * sps];
    return out;
}

std::size_t find_timing_offset(const DualPolWaveform& quantum, std::span<const double> taps, int sps) {
    if (quantum.size() < taps.size() || taps.empty()) {
        throw Error(Errc::stream_too_short, "stream shorter than the matched filter");
    }
    const auto fx = fir_full(quantum.x, taps);
    const auto fy = fir_full(quantum.y, taps);
    const std::size_t nominal = taps.size() - 1;
    const std::size_t half = static_cast<std::size_t>(sps) / 2;
    const std::size_t lo = nominal >= half ? nominal - half : 0;
    const std::size_t hi = nominal + half;
    const std::size_t n = quantum.size();
    std::size_t best = nominal;
    double best_power = -1.0;
    for (std::size_t off = lo; off <= hi && off < n; ++off) {
        double acc = 0.0;
        std::size_t cnt = 0;
        for (std::size_t m = off; m < n; m += sps) {
            acc += std::norm(fx[m]) + std::norm(fy[m]);
            ++cnt;
        }
        const double p = cnt ? acc / static_cast<double>(cnt) : 0.0;
        if (p > best_power) {
            best_power = p;
            best = off;
        }
    }
    return best;
}

double channel_balance_scale(const DualPolWaveform& wf, double bandwidth, std::size_t nfft) {
    const double fs = wf.sample_rate;
    if (!(bandwidth > 0.0 && bandwidth <= 0.5 * fs)) {
        throw Error(Errc::invalid_argument, "normalization bandwidth must be in (0, fs/2]");
    }
    const std::size_t seg = std::min(nfft, wf.size());
    if (seg < 2) throw Error(Errc::zero_power, "record too short to measure power");
    const auto px = welch_psd(wf.x, seg);
    const auto py = welch_psd(wf.y, seg);
    double sx = 0.0;
    double sy = 0.0;
    for (std::size_t k = 0; k < seg; ++k) {
        const double f = bin_frequency(k, seg, fs);
        if (f < 0.0 || f > bandwidth) continue;
        sx += px[k];
        sy += py[k];
    }
    if (!(sx > 0.0) || !(sy > 0.0)) throw Error(Errc::zero_power, "a polarization has no power in band");
    return std::sqrt(sx / sy);
}

DualPolWaveform normalize_channels(const DualPolWaveform& wf, double bandwidth, std::size_t nfft) {
    const double s = channel_balance_scale(wf, bandwidth, nfft);
    DualPolWaveform out = wf;
    for (auto& v : out.y) v *= s;
    return out;
}

std::vector<FrameView> segment_frames(const SymbolRecord& record) {
    if (record.frame_length == 0) throw Error(Errc::invalid_argument, "frame_length must be > 0");
    if (record.tx_symbols.size() != record.rx_symbols.size()) {
        throw Error(Errc::length_mismatch, "tx and rx symbol counts differ");
    }
    const std::size_t len = record.frame_length;
    const std::size_t count = record.tx_symbols.size() / len;
    std::vector<FrameView> frames;
    frames.reserve(count);
    for (std::size_t f = 0; f < count; ++f) {
        frames.push_back({f, std::span<const cplx>(record.tx_symbols).subspan(f * len, len),
                          std::span<const cplx>(record.rx_symbols).subspan(f * len, len)});
    }
    return frames;
}

void write_spectra_csv(std::ostream& out, const DualPolWaveform& wf, std::size_t nfft) {
    const std::size_t seg = std::min(nfft, wf.size());
    const auto px = welch_psd(wf.x, seg);
    const auto py = welch_psd(wf.y, seg);
    csv::Writer w(out);
    w.row({"freq_hz", "psd_db_x", "psd_db_y"});
    const std::size_t start = (seg + 1) / 2;  // first negative-frequency bin
    for (std::size_t i = 0; i < seg; ++i) {
        const std::size_t k = (start + i) % seg;
        w.field(bin_frequency(k, seg, wf.sample_rate))
            .field(10.0 * std::log10(std::max(px[k], 1e-300)))
            .field(10.0 * std::log10(std::max(py[k], 1e-300)));
        w.end_row();
    }
}

}  // namespace cvqkd::dsp
