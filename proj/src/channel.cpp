#include "cvqkd/channel.hpp"

#include <cmath>
#include <ostream>
#include <type_traits>

#include "cvqkd/csv.hpp"
#include "cvqkd/rng.hpp"
#include "cvqkd/txgen.hpp"

namespace cvqkd::channel {

namespace {

// RNG stream tags, fixed so (seed, tag) pairs never collide across uses.
constexpr std::uint64_t kPhiStream = 10;
constexpr std::uint64_t kThetaStream = 11;
constexpr std::uint64_t kShotStream = 20;
constexpr std::uint64_t kElecStream = 21;
constexpr std::uint64_t kExcessXStream = 22;
constexpr std::uint64_t kExcessYStream = 23;

bool finite_model(const ThetaModel& model) {
    return std::visit(
        [](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, StaticTheta>) {
                return std::isfinite(m.theta0);
            } else if constexpr (std::is_same_v<M, LinearDrift>) {
                return std::isfinite(m.rate) && std::isfinite(m.theta0);
            } else if constexpr (std::is_same_v<M, SinusoidalDrift>) {
                return std::isfinite(m.amplitude) && std::isfinite(m.rate_hz) &&
                       std::isfinite(m.phase) && std::isfinite(m.theta0);
            } else {
                return std::isfinite(m.step_variance) && m.step_variance >= 0.0 &&
                       std::isfinite(m.theta0);
            }
        },
        model);
}

void check_lengths(const DualPolWaveform& wf, const ChannelTrace& trace) {
    if (wf.x.size() != wf.y.size() || wf.size() != trace.size() || trace.phi.size() != trace.size()) {
        throw Error(Errc::length_mismatch, "waveform has " + std::to_string(wf.size()) +
                                               " samples, trace has " +
                                               std::to_string(trace.size()));
    }
}

}  // namespace

void ChannelDynamics::validate() const {
    if (!(linewidth_total >= 0.0) || !std::isfinite(linewidth_total)) {
        throw Error(Errc::invalid_argument, "linewidth_total must be finite and >= 0");
    }
    if (!std::isfinite(freq_offset) || !std::isfinite(loss_db) || loss_db < 0.0) {
        throw Error(Errc::invalid_argument, "freq_offset must be finite and loss_db >= 0");
    }
    if (!finite_model(theta_model)) {
        throw Error(Errc::invalid_argument, "theta model parameters must be finite");
    }
}

void NoiseConfig::validate() const {
    if (!(trusted_loss_tau > 0.0 && trusted_loss_tau <= 1.0)) {
        throw Error(Errc::invalid_argument, "trusted_loss_tau must be in (0, 1]");
    }
    if (!(excess_noise >= 0.0) || !(electronic_noise >= 0.0)) {
        throw Error(Errc::invalid_argument, "excess_noise and electronic_noise must be >= 0");
    }
}

double theta_at(const ThetaModel& model, std::size_t k, double sample_rate) {
    const double kd = static_cast<double>(k);
    return std::visit(
        [&](const auto& m) -> double {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, StaticTheta>) {
                return m.theta0;
            } else if constexpr (std::is_same_v<M, LinearDrift>) {
                return m.theta0 + m.rate * (kd / sample_rate);
            } else if constexpr (std::is_same_v<M, SinusoidalDrift>) {
                return m.theta0 +
                       m.amplitude * std::sin(carrier_phase(m.rate_hz, kd, sample_rate) + m.phase);
            } else {
                throw Error(Errc::invalid_argument, "random-walk theta has no closed form");
            }
        },
        model);
}

ChannelTrace evolve_channel(std::size_t n, const ChannelDynamics& dyn, double sample_rate,
                            std::uint64_t seed) {
    if (n == 0) throw Error(Errc::invalid_argument, "evolve_channel needs n > 0");
    if (!(sample_rate > 0.0)) throw Error(Errc::invalid_argument, "sample_rate must be positive");
    dyn.validate();

    ChannelTrace tr;
    tr.loss_db = dyn.loss_db;
    tr.freq_offset = dyn.freq_offset;
    tr.sample_rate = sample_rate;
    tr.seed = seed;
    tr.theta.resize(n);
    tr.phi.resize(n);

    CounterRng phi_rng(seed, kPhiStream);
    const double step_sd = std::sqrt(two_pi * dyn.linewidth_total / sample_rate);
    double phi = two_pi * phi_rng.uniform();
    tr.phi[0] = phi;
    for (std::size_t k = 1; k < n; ++k) {
        phi += step_sd * phi_rng.normal();
        tr.phi[k] = phi;
    }

    if (const auto* rw = std::get_if<RandomWalkTheta>(&dyn.theta_model)) {
        CounterRng th_rng(seed, kThetaStream);
        const double sd = std::sqrt(rw->step_variance);
        double th = rw->theta0;
        tr.theta[0] = th;
        for (std::size_t k = 1; k < n; ++k) {
            th += sd * th_rng.normal();
            tr.theta[k] = th;
        }
    } else {
        for (std::size_t k = 0; k < n; ++k) tr.theta[k] = theta_at(dyn.theta_model, k, sample_rate);
    }
    return tr;
}

void apply_channel_inplace(DualPolWaveform& wf, const ChannelTrace& trace) {
    check_lengths(wf, trace);
    const double amp = std::sqrt(trace.transmittance());
    const bool ramp = trace.freq_offset != 0.0;
    for (std::size_t k = 0; k < wf.size(); ++k) {
        const double c = std::cos(trace.theta[k]);
        const double s = std::sin(trace.theta[k]);
        double ph = trace.phi[k];
        if (ramp) ph += carrier_phase(trace.freq_offset, static_cast<double>(k), trace.sample_rate);
        const cplx rot = std::polar(amp, ph);
        const cplx ex = wf.x[k];
        const cplx ey = wf.y[k];
        wf.x[k] = (c * ex + s * ey) * rot;
        wf.y[k] = (-s * ex + c * ey) * rot;
    }
}

DualPolWaveform apply_channel(const DualPolWaveform& wf, const ChannelTrace& trace) {
    DualPolWaveform out = wf;
    apply_channel_inplace(out, trace);
    return out;
}

DualPolWaveform invert_channel(const DualPolWaveform& wf, const ChannelTrace& trace) {
    check_lengths(wf, trace);
    DualPolWaveform out(wf.size(), wf.sample_rate);
    const double inv_amp = 1.0 / std::sqrt(trace.transmittance());
    const bool ramp = trace.freq_offset != 0.0;
    for (std::size_t k = 0; k < wf.size(); ++k) {
        const double c = std::cos(trace.theta[k]);
        const double s = std::sin(trace.theta[k]);
        double ph = trace.phi[k];
        if (ramp) ph += carrier_phase(trace.freq_offset, static_cast<double>(k), trace.sample_rate);
        const cplx derot = std::polar(inv_amp, -ph);
        const cplx ex = wf.x[k] * derot;
        const cplx ey = wf.y[k] * derot;
        out.x[k] = c * ex - s * ey;
        out.y[k] = s * ex + c * ey;
    }
    return out;
}

namespace {

std::vector<cplx> excess_stream(std::size_t n, const ExcessNoiseBand& band, double variance,
                                double sample_rate, std::uint64_t seed, std::uint64_t stream) {
    const auto sps = static_cast<std::size_t>(band.samples_per_symbol);
    const std::size_t nsym = (n + sps - 1) / sps;
    std::vector<cplx> sym(nsym);
    CounterRng rng(seed, stream);
    for (auto& s : sym) s = rng.complex_normal(variance);
    auto shaped = txgen::shape_symbols(sym, band.taps, band.samples_per_symbol);
    shaped.resize(n);
    if (band.center_freq != 0.0) {
        for (std::size_t m = 0; m < n; ++m) {
            shaped[m] *= std::polar(1.0, carrier_phase(band.center_freq, static_cast<double>(m),
                                                       sample_rate));
        }
    }
    return shaped;
}

}  // namespace

void detect_inplace(DualPolWaveform& wf, const NoiseConfig& noise, const ExcessNoiseBand* excess,
                    std::uint64_t seed) {
    noise.validate();
    if (wf.x.size() != wf.y.size()) throw Error(Errc::length_mismatch, "x and y lengths differ");
    const std::size_t n = wf.size();
    const double sqrt_tau = std::sqrt(noise.trusted_loss_tau);

    if (noise.excess_noise > 0.0 && excess != nullptr && n > 0) {
        if (excess->samples_per_symbol < 1 || excess->taps.empty()) {
            throw Error(Errc::invalid_argument, "excess-noise band needs taps and sps >= 1");
        }
        const double var = excess->channel_transmittance * noise.excess_noise;
        const auto ex = excess_stream(n, *excess, var, wf.sample_rate, seed, kExcessXStream);
        for (std::size_t k = 0; k < n; ++k) wf.x[k] += ex[k];
        const auto ey = excess_stream(n, *excess, var, wf.sample_rate, seed, kExcessYStream);
        for (std::size_t k = 0; k < n; ++k) wf.y[k] += ey[k];
    }

    CounterRng shot(seed, kShotStream);
    CounterRng elec(seed, kElecStream);
    const double elec_var = 2.0 * noise.electronic_noise;
    const bool with_elec = noise.electronic_noise > 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        wf.x[k] = sqrt_tau * wf.x[k] + shot.complex_normal(2.0);
        wf.y[k] = sqrt_tau * wf.y[k] + shot.complex_normal(2.0);
        if (with_elec) {
            wf.x[k] += elec.complex_normal(elec_var);
            wf.y[k] += elec.complex_normal(elec_var);
        }
    }
}

DualPolWaveform detect(const DualPolWaveform& wf, const NoiseConfig& noise,
                       const ExcessNoiseBand* excess, std::uint64_t seed) {
    DualPolWaveform out = wf;
    detect_inplace(out, noise, excess, seed);
    return out;
}

DualPolWaveform shot_noise_run(std::size_t n, const NoiseConfig& noise, double sample_rate,
                               std::uint64_t seed) {
    DualPolWaveform wf(n, sample_rate);
    detect_inplace(wf, noise, nullptr, seed);
    return wf;
}

DualPolWaveform electronic_noise_run(std::size_t n, const NoiseConfig& noise, double sample_rate,
                                     std::uint64_t seed) {
    noise.validate();
    DualPolWaveform wf(n, sample_rate);
    if (noise.electronic_noise <= 0.0) return wf;
    CounterRng elec(seed, kElecStream);
    const double var = 2.0 * noise.electronic_noise;
    for (std::size_t k = 0; k < n; ++k) {
        wf.x[k] = elec.complex_normal(var);
        wf.y[k] = elec.complex_normal(var);
    }
    return wf;
}

void write_trace_csv(std::ostream& out, const ChannelTrace& trace, std::size_t stride) {
    if (stride == 0) throw Error(Errc::invalid_argument, "trace stride must be >= 1");
    csv::Writer w(out);
    w.row({"sample", "theta", "phi"});
    for (std::size_t k = 0; k < trace.size(); k += stride) {
        w.field(k).field(trace.theta[k]).field(trace.phi[k]);
        w.end_row();
    }
}

}  // namespace cvqkd::channel
