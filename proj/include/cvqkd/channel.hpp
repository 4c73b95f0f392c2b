// Fiber and receiver front-end: polarization rotation, laser phase noise,
// loss, frequency offset, trusted detector loss and the detector noises.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <variant>
#include <vector>

#include "cvqkd/common.hpp"

namespace cvqkd::channel {

struct StaticTheta {
    double theta0 = 0.0;
};
struct LinearDrift {
    double rate = 0.0;  // rad/s
    double theta0 = 0.0;
};
struct SinusoidalDrift {
    double amplitude = 0.0;  // rad
    double rate_hz = 0.0;
    double phase = 0.0;  // rad at sample 0
    double theta0 = 0.0;
};
struct RandomWalkTheta {
    double step_variance = 0.0;  // rad^2 per sample
    double theta0 = 0.0;
};
using ThetaModel = std::variant<StaticTheta, LinearDrift, SinusoidalDrift, RandomWalkTheta>;

struct ChannelDynamics {
    double linewidth_total = 200.0;  // Hz, sum of both lasers
    ThetaModel theta_model = StaticTheta{};
    double freq_offset = 0.0;  // Hz
    double loss_db = 0.0;

    void validate() const;
};

/// Hidden per-sample ground truth. phi excludes the frequency-offset ramp.
struct ChannelTrace {
    std::vector<double> theta;
    std::vector<double> phi;
    double loss_db = 0.0;
    double freq_offset = 0.0;
    double sample_rate = 0.0;
    std::uint64_t seed = 0;

    std::size_t size() const noexcept { return theta.size(); }
    double transmittance() const { return db_to_linear(-loss_db); }
};

struct NoiseConfig {
    double excess_noise = 0.0;       // SNU, referred to the channel input
    double electronic_noise = 0.01;  // SNU per quadrature
    double trusted_loss_tau = 0.53;

    void validate() const;
};

/// Where and how to inject the excess noise: band-limited complex Gaussian
/// with per-symbol variance T * xi in each polarization at the channel output.
struct ExcessNoiseBand {
    double channel_transmittance = 1.0;
    double center_freq = 0.0;
    int samples_per_symbol = 1;
    std::vector<double> taps;  // unit-energy pulse used for band limiting
};

/// Deterministic theta at sample k for the non-random models.
double theta_at(const ThetaModel& model, std::size_t k, double sample_rate);

ChannelTrace evolve_channel(std::size_t n, const ChannelDynamics& dyn, double sample_rate,
                            std::uint64_t seed);

/// out_k = R(theta_k) in_k exp(j(phi_k + 2 pi f_off k / fs)) sqrt(10^(-loss/10)),
/// R = [[cos, sin], [-sin, cos]].
DualPolWaveform apply_channel(const DualPolWaveform& wf, const ChannelTrace& trace);

/// Exact inverse of apply_channel (gain included).
DualPolWaveform invert_channel(const DualPolWaveform& wf, const ChannelTrace& trace);

void apply_channel_inplace(DualPolWaveform& wf, const ChannelTrace& trace);

/// Scales by sqrt(tau), adds excess noise (when excess_noise > 0 and `excess`
/// is given), unit shot noise and electronic noise per quadrature. Output is
/// in SNU: a shot-noise-only record has unit quadrature variance.
DualPolWaveform detect(const DualPolWaveform& wf, const NoiseConfig& noise,
                       const ExcessNoiseBand* excess, std::uint64_t seed);
void detect_inplace(DualPolWaveform& wf, const NoiseConfig& noise, const ExcessNoiseBand* excess,
                    std::uint64_t seed);

/// Calibration records: LO only (shot + electronic) and all lasers off
/// (electronic only).
DualPolWaveform shot_noise_run(std::size_t n, const NoiseConfig& noise, double sample_rate,
                               std::uint64_t seed);
DualPolWaveform electronic_noise_run(std::size_t n, const NoiseConfig& noise, double sample_rate,
                                     std::uint64_t seed);

/// CSV "sample,theta,phi", every `stride`-th sample.
void write_trace_csv(std::ostream& out, const ChannelTrace& trace, std::size_t stride = 1);

}  // namespace cvqkd::channel
