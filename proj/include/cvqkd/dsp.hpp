// Receiver DSP shared by both estimator chains: SNU calibration, frequency
// offset, band isolation, matched filtering, timing, balance and framing.
#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "cvqkd/common.hpp"

namespace cvqkd::dsp {

struct CalibrationRecord {
    double shot_variance_raw = 0.0;
    double electronic_variance_raw = 0.0;
    double snu_scale = 0.0;  // 1 / (shot - electronic)

    double electronic_noise_snu() const { return electronic_variance_raw * snu_scale; }
};

/// Quadrature variances of the two records (LO only, lasers off).
/// Throws Errc::invalid_calibration unless shot > electronic >= 0.
CalibrationRecord calibrate_snu(std::span<const cplx> shot_run, std::span<const cplx> elec_run);
CalibrationRecord calibrate_snu(const DualPolWaveform& shot_run, const DualPolWaveform& elec_run);

/// Peak of the summed x+y Hann periodogram within expected_pilot +- search_bw,
/// refined by a parabola through the log magnitudes of the three bins around the
/// maximum. Uses the first `nfft` samples (zero padded if shorter).
/// Throws Errc::pilot_not_found if the peak is below median PSD + 10 dB.
double estimate_pilot_frequency(const DualPolWaveform& wf, double expected_pilot, double search_bw,
                                std::size_t nfft = std::size_t{1} << 20);

/// estimate_pilot_frequency(...) - expected_pilot.
double estimate_frequency_offset(const DualPolWaveform& wf, double expected_pilot,
                                 double search_bw, std::size_t nfft = std::size_t{1} << 20);

struct BandPlan {
    double pilot_freq = 180e6;          // nominal, before offset
    double signal_center_freq = 100e6;  // nominal, before offset
    double signal_bandwidth = 24e6;     // symbol_rate * (1 + rolloff)
    double freq_offset = 0.0;           // estimated
    double sample_rate = 1e9;
    double pilot_half_width = 2e6;      // passband half width around the pilot
    double stopband_atten_db = 100.0;

    double pilot_center() const { return pilot_freq + freq_offset; }
    double signal_center() const { return signal_center_freq + freq_offset; }
    /// Spacing between the pilot line and the nearest signal band edge.
    double guard() const;
};

struct Bands {
    DualPolWaveform pilot;    // complex passband; Re() is the real pilot-band record
    DualPolWaveform quantum;  // complex baseband
    std::vector<double> pilot_lowpass;  // prototype of the pilot bandpass
};

/// Throws Errc::band_overlap if the pilot does not clear the signal band.
Bands isolate_bands(const DualPolWaveform& wf, const BandPlan& plan);

/// Per-real-quadrature white noise level from the Welch floor away from the
/// signal band and the pilot (mean over the remaining bins of both polarizations).
double noise_floor_per_quadrature(const DualPolWaveform& wf, const BandPlan& plan,
                                  std::size_t nfft = 4096);

/// Pilot power P with the in-band noise contribution removed: the complex pilot
/// amplitude is sqrt(P) summed over polarizations.
double pilot_power(const DualPolWaveform& pilot_band, std::span<const double> pilot_lowpass,
                   double noise_per_quadrature);

/// Full convolution with the taps, then every sps-th sample starting at
/// `timing_offset` (full-convolution index). Length floor((n - offset) / sps).
/// Throws Errc::stream_too_short if n < taps.size().
std::vector<cplx> matched_filter_downsample(std::span<const cplx> x, std::span<const double> taps,
                                            int sps, std::size_t timing_offset);

/// Integer offset in [nominal - sps/2, nominal + sps/2] maximizing the matched
/// filter output power over both polarizations (nominal = taps.size() - 1).
std::size_t find_timing_offset(const DualPolWaveform& quantum, std::span<const double> taps, int sps);

/// Scale for the y polarization that equalizes power over [0, bandwidth].
/// Throws Errc::zero_power.
double channel_balance_scale(const DualPolWaveform& wf, double bandwidth, std::size_t nfft = 4096);

/// y scaled by channel_balance_scale. Requires bandwidth <= Nyquist.
DualPolWaveform normalize_channels(const DualPolWaveform& wf, double bandwidth,
                                   std::size_t nfft = 4096);

struct SymbolRecord {
    std::vector<cplx> tx_symbols;
    std::vector<cplx> rx_symbols;
    std::size_t frame_length = 10000;
};

struct FrameView {
    std::size_t index = 0;
    std::span<const cplx> tx;
    std::span<const cplx> rx;
};

/// Consecutive non-overlapping frames; a trailing partial frame is dropped.
std::vector<FrameView> segment_frames(const SymbolRecord& record);

/// CSV "freq_hz,psd_db_x,psd_db_y", ascending frequency.
void write_spectra_csv(std::ostream& out, const DualPolWaveform& wf, std::size_t nfft = 4096);

}  // namespace cvqkd::dsp
